#include "moesim/model_spec.hpp"

#include <cmath>
#include <limits>

namespace moesim {

void ModelSpec::validate() const {
  if (moe_layers < 1) throw ConfigError("model.moe_layers: must be >= 1");
  if (!(activation_prob >= 0.0 && activation_prob <= 1.0)) {
    throw ConfigError("model.activation_prob: must be in [0, 1]");
  }
}

void MachineSpec::validate() const {
  if (nodes < 1) throw ConfigError("machine.nodes: must be >= 1");
  if (gpus_per_node < 1) throw ConfigError("machine.gpus_per_node: must be >= 1");
}

const char* FeasibilityReport::first_failing_tier() const {
  if (!gpu.ok) return "gpu";
  if (!cpu.ok) return "cpu";
  if (!ssd.ok) return "ssd";
  return "";
}

Bytes scaled_demand_ceil(Count count, double alpha, std::uint64_t mult, std::uint64_t div) {
  if (count == 0 || mult == 0 || alpha <= 0.0) return 0;
  if (div == 0) throw ConfigError("scaled_demand_ceil: zero divisor");

  int exp = 0;
  const double frac = std::frexp(alpha, &exp);  // alpha = frac * 2^exp, frac in [0.5, 1)
  const auto mant = static_cast<std::uint64_t>(std::ldexp(frac, 53));  // 53-bit integer
  const int shift = 53 - exp;  // alpha = mant / 2^shift, shift >= 52 for alpha <= 1

  constexpr unsigned __int128 kMax = ~static_cast<unsigned __int128>(0);
  unsigned __int128 num = static_cast<unsigned __int128>(count) * mult;
  if (count != 0 && num / count != mult) {
    throw ConfigError("scaled_demand_ceil: count * mult overflows 128 bits");
  }
  if (num > kMax / mant) {
    throw ConfigError("scaled_demand_ceil: demand numerator overflows 128 bits");
  }
  num *= mant;
  if (num == 0) return 0;

  // Denominator div * 2^shift. When it cannot fit next to num in 128 bits the
  // value is below 1 and ceil gives 1.
  int div_bits = 64 - __builtin_clzll(div);
  if (shift >= 127 || div_bits + shift > 126) return 1;
  const unsigned __int128 den = static_cast<unsigned __int128>(div) << shift;
  if (den > num) return 1;
  const unsigned __int128 result = ceil_div_u128(num, den);
  if (result > std::numeric_limits<Bytes>::max()) {
    throw ConfigError("scaled_demand_ceil: byte demand overflows 64 bits");
  }
  return static_cast<Bytes>(result);
}

Bytes gpu_node_demand(const ModelSpec& model) {
  return 16 * model.dense_params +
         scaled_demand_ceil(model.sparse_params, model.activation_prob, 4, model.moe_layers);
}

Bytes cpu_node_demand(const ModelSpec& model) {
  return scaled_demand_ceil(model.sparse_params, model.activation_prob, 16, 1);
}

Bytes ssd_node_demand(const ModelSpec& model) { return 12 * model.sparse_params; }

Count total_params(const ModelSpec& model) {
  return model.sparse_params + model.dense_params;
}

namespace {

TierCheck make_check(Bytes demand, Bytes per_node_capacity, Count nodes) {
  TierCheck c;
  c.demand = demand;
  c.capacity = per_node_capacity * nodes;
  c.ok = demand <= c.capacity;
  const __int128 headroom = static_cast<__int128>(c.capacity) - static_cast<__int128>(demand);
  c.headroom = static_cast<std::int64_t>(headroom);
  return c;
}

}  // namespace

FeasibilityReport check_feasibility(const ModelSpec& model, const MachineSpec& machine) {
  model.validate();
  machine.validate();
  FeasibilityReport r;
  r.gpu = make_check(gpu_node_demand(model), machine.m_gpu_bytes, machine.nodes);
  r.cpu = make_check(cpu_node_demand(model), machine.m_cpu_bytes, machine.nodes);
  r.ssd = make_check(ssd_node_demand(model), machine.m_ssd_bytes, machine.nodes);
  return r;
}

}  // namespace moesim
