#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moesim/model_spec.hpp"
#include "moesim/prefetch_cache.hpp"
#include "moesim/ring_offload.hpp"
#include "moesim/topology.hpp"
#include "moesim/types.hpp"
#include "moesim/workload.hpp"

namespace moesim {

enum class Mode : std::uint8_t {
  kPlan = 0,
  kTrainSim,
  kInferSim,
  kAlltoallBench,
  kElasticPlan,
  kEmbedCheck,
};

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct TopologyConfig {
  std::uint32_t clusters = 1;
  std::uint32_t nodes_per_cluster = 1;
  std::uint32_t gpus_per_node = 8;
  std::array<LinkParams, kLinkClassCount> links;

  TopologyConfig();  // sensible desk-scale defaults per link class
  Topology build() const { return Topology(clusters, nodes_per_cluster, gpus_per_node, links); }
};

struct WorkloadConfig {
  std::optional<std::string> trace_file;  // wins over the generator fields
  std::uint64_t seed = 1;
  std::uint32_t steps = 1;
  std::uint32_t ranks = 1;
  std::uint32_t experts = 1;
  Count tokens_per_rank = 0;
  double skew = 0.0;
  Bytes payload_bytes_per_token = 2;

  RoutingTrace load(const std::string& base_dir) const;
};

struct RingConfig {
  std::uint32_t num_layers = 1;
  std::uint32_t ring_slots = 1;
  Bytes expert_bytes = 0;
  Bytes dense_bytes = 0;
  TimeNs compute_ns_per_layer = 0;

  RingPlan build() const {
    return RingPlan::uniform(num_layers, ring_slots, expert_bytes, dense_bytes,
                             compute_ns_per_layer);
  }
};

struct ElasticConfig {
  std::vector<Count> batch_sizes;
  std::uint32_t gpu_budget = 0;
  TimeNs per_sample_cost_ns = 1;
  // Barrier cost of the per-task AllReduce. When absent it is derived from
  // the scenario's model and topology (dense fp16 bytes over one rail hop),
  // falling back to 0 without them.
  std::optional<TimeNs> sync_cost_ns;
  std::optional<Count> per_gpu_capacity;  // enables the scale-down packing
  std::vector<Count> task_loads;
};

struct EmbedConfig {
  std::size_t vocab = 1;
  std::size_t hidden = 1;
  std::size_t ranks = 1;
  std::uint64_t seed = 1;
  std::size_t ids_per_rank = 1;
};

struct ComputeConfig {
  TimeNs per_layer_ns = 0;
  TimeNs per_token_ns = 0;
};

struct Scenario {
  int schema_version = 1;
  std::string name;
  Mode mode = Mode::kPlan;
  std::optional<ModelSpec> model;
  std::optional<MachineSpec> machine;
  std::optional<TopologyConfig> topology;
  std::optional<WorkloadConfig> workload;
  std::optional<PrefetchConfig> cache;
  std::optional<RingConfig> ring;
  std::optional<ElasticConfig> elastic;
  std::optional<EmbedConfig> embed;
  std::optional<ComputeConfig> compute;

  std::string base_dir;  // directory of the scenario file; not serialized
};

// Throws ConfigError with a message naming the offending field.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario load_scenario(const std::string& path);

}  // namespace moesim
