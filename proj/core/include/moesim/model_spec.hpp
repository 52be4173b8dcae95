#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "moesim/types.hpp"

namespace moesim {

// Parameter counts are element counts; byte demands use the ADAM state
// layout (fp16 param/grad = 2 bytes each, fp32 master/momentum/variance =
// 4 bytes each).
struct ModelSpec {
  Count dense_params = 0;       // D
  Count sparse_params = 0;      // S
  Count moe_layers = 1;         // L >= 1
  double activation_prob = 0.0; // alpha in [0, 1]

  void validate() const;
};

struct MachineSpec {
  Count nodes = 1;          // N >= 1
  Count gpus_per_node = 8;
  Bytes m_gpu_bytes = 0;    // HBM per node, all GPUs summed
  Bytes m_cpu_bytes = 0;
  Bytes m_ssd_bytes = 0;

  void validate() const;
};

struct TierCheck {
  bool ok = true;
  Bytes demand = 0;
  Bytes capacity = 0;        // per-node capacity * nodes
  std::int64_t headroom = 0; // capacity - demand, negative when infeasible
};

struct FeasibilityReport {
  TierCheck gpu;
  TierCheck cpu;
  TierCheck ssd;

  bool feasible() const { return gpu.ok && cpu.ok && ssd.ok; }
  // "gpu", "cpu" or "ssd" for the first failing tier, empty when feasible.
  const char* first_failing_tier() const;
};

// ceil(count * alpha * mult / div), computed exactly. The double alpha is
// decomposed into integer mantissa and power-of-two exponent, so dyadic
// fractions (0.5, 0.25, 3/64, ...) incur no rounding at all.
Bytes scaled_demand_ceil(Count count, double alpha, std::uint64_t mult, std::uint64_t div);

// Per-cluster byte demand of the dense + activated-sparse working set held
// in GPU memory: 16*D + ceil(4*alpha*S / L).
Bytes gpu_node_demand(const ModelSpec& model);

// CPU cache demand for high-frequency sparse parameter states: ceil(16*alpha*S).
Bytes cpu_node_demand(const ModelSpec& model);

// SSD demand for all sparse parameter states (fp32 master/momentum/variance): 12*S.
Bytes ssd_node_demand(const ModelSpec& model);

// P = S + D.
Count total_params(const ModelSpec& model);

FeasibilityReport check_feasibility(const ModelSpec& model, const MachineSpec& machine);

// Thrown by simulators that refuse to run an infeasible configuration.
struct InfeasibleError : std::runtime_error {
  FeasibilityReport report;

  explicit InfeasibleError(const FeasibilityReport& r)
      : std::runtime_error(std::string("model infeasible: ") + r.first_failing_tier() +
                           " tier demand exceeds capacity"),
        report(r) {}
};

}  // namespace moesim
