#include "moesim/scenario.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace moesim {

namespace {

constexpr std::array<const char*, 6> kModeNames = {"plan",           "train-sim",
                                                   "infer-sim",      "alltoall-bench",
                                                   "elastic-plan",   "embed-check"};

using json = nlohmann::json;

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field + ": unexpected type");
  }
}

template <typename T>
T require(const json& j, const std::string& ctx, const char* key) {
  if (!j.contains(key)) throw ConfigError(ctx + "." + key + ": missing field");
  return get_as<T>(j.at(key), ctx + "." + key);
}

template <typename T>
T optional_or(const json& j, const std::string& ctx, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j.at(key), ctx + "." + key);
}

const json& section(const json& j, const char* key) {
  const json& s = j.at(key);
  if (!s.is_object()) throw ConfigError(std::string(key) + ": expected object");
  return s;
}

}  // namespace

const char* mode_name(Mode m) { return kModeNames[static_cast<std::size_t>(m)]; }

Mode mode_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (name == kModeNames[i]) return static_cast<Mode>(i);
  }
  throw ConfigError("mode: unknown mode '" + name + "'");
}

TopologyConfig::TopologyConfig() {
  // A100-ish node with NVMe SSDs and a modest fat-tree, enough for relative
  // comparisons at desk scale.
  links[static_cast<std::size_t>(LinkClass::kNvlink)] = {300ull * 1000 * 1000 * 1000, 1'000};
  links[static_cast<std::size_t>(LinkClass::kPcie)] = {25ull * 1000 * 1000 * 1000, 2'000};
  links[static_cast<std::size_t>(LinkClass::kSsdIo)] = {3ull * 1000 * 1000 * 1000, 50'000};
  links[static_cast<std::size_t>(LinkClass::kTor)] = {25ull * 1000 * 1000 * 1000, 2'000};
  links[static_cast<std::size_t>(LinkClass::kLeaf)] = {25ull * 1000 * 1000 * 1000, 3'000};
  links[static_cast<std::size_t>(LinkClass::kSpin)] = {10ull * 1000 * 1000 * 1000, 5'000};
}

RoutingTrace WorkloadConfig::load(const std::string& base_dir) const {
  if (trace_file) {
    std::filesystem::path path(*trace_file);
    if (path.is_relative() && !base_dir.empty()) path = std::filesystem::path(base_dir) / path;
    std::ifstream in(path);
    if (!in) throw ConfigError("workload.trace_file: cannot read '" + path.string() + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("workload.trace_file: invalid JSON: " + std::string(e.what()));
    }
    return trace_from_json(j);
  }
  return gen_trace(seed, steps, ranks, experts, tokens_per_rank, skew);
}

namespace {

ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  m.dense_params = require<Count>(j, "model", "dense_params");
  m.sparse_params = require<Count>(j, "model", "sparse_params");
  m.moe_layers = require<Count>(j, "model", "moe_layers");
  m.activation_prob = require<double>(j, "model", "activation_prob");
  m.validate();
  return m;
}

json model_to_json(const ModelSpec& m) {
  return {{"dense_params", m.dense_params},
          {"sparse_params", m.sparse_params},
          {"moe_layers", m.moe_layers},
          {"activation_prob", m.activation_prob}};
}

MachineSpec machine_from_json(const json& j) {
  MachineSpec m;
  m.nodes = require<Count>(j, "machine", "nodes");
  m.gpus_per_node = optional_or<Count>(j, "machine", "gpus_per_node", 8);
  m.m_gpu_bytes = require<Bytes>(j, "machine", "m_gpu_bytes");
  m.m_cpu_bytes = require<Bytes>(j, "machine", "m_cpu_bytes");
  m.m_ssd_bytes = require<Bytes>(j, "machine", "m_ssd_bytes");
  m.validate();
  return m;
}

json machine_to_json(const MachineSpec& m) {
  return {{"nodes", m.nodes},
          {"gpus_per_node", m.gpus_per_node},
          {"m_gpu_bytes", m.m_gpu_bytes},
          {"m_cpu_bytes", m.m_cpu_bytes},
          {"m_ssd_bytes", m.m_ssd_bytes}};
}

TopologyConfig topology_from_json(const json& j) {
  TopologyConfig t;
  t.clusters = optional_or<std::uint32_t>(j, "topology", "clusters", 1);
  t.nodes_per_cluster = optional_or<std::uint32_t>(j, "topology", "nodes_per_cluster", 1);
  t.gpus_per_node = optional_or<std::uint32_t>(j, "topology", "gpus_per_node", 8);
  if (j.contains("links")) {
    const json& links = j.at("links");
    if (!links.is_object()) throw ConfigError("topology.links: expected object");
    for (const auto& [name, params] : links.items()) {
      const LinkClass c = link_class_from_name(name);
      const std::string ctx = "topology.links." + name;
      LinkParams& p = t.links[static_cast<std::size_t>(c)];
      p.bandwidth_bytes_per_sec =
          optional_or<Bytes>(params, ctx, "bandwidth_bytes_per_sec", p.bandwidth_bytes_per_sec);
      p.latency_ns = optional_or<TimeNs>(params, ctx, "latency_ns", p.latency_ns);
    }
  }
  t.build();  // validates
  return t;
}

json topology_to_json(const TopologyConfig& t) {
  json links = json::object();
  for (std::size_t i = 0; i < kLinkClassCount; ++i) {
    links[link_class_name(static_cast<LinkClass>(i))] = {
        {"bandwidth_bytes_per_sec", t.links[i].bandwidth_bytes_per_sec},
        {"latency_ns", t.links[i].latency_ns}};
  }
  return {{"clusters", t.clusters},
          {"nodes_per_cluster", t.nodes_per_cluster},
          {"gpus_per_node", t.gpus_per_node},
          {"links", std::move(links)}};
}

WorkloadConfig workload_from_json(const json& j) {
  WorkloadConfig w;
  if (j.contains("trace_file")) {
    w.trace_file = get_as<std::string>(j.at("trace_file"), "workload.trace_file");
  } else {
    w.seed = optional_or<std::uint64_t>(j, "workload", "seed", 1);
    w.steps = require<std::uint32_t>(j, "workload", "steps");
    w.ranks = require<std::uint32_t>(j, "workload", "ranks");
    w.experts = require<std::uint32_t>(j, "workload", "experts");
    w.tokens_per_rank = require<Count>(j, "workload", "tokens_per_rank");
    w.skew = optional_or<double>(j, "workload", "skew", 0.0);
  }
  w.payload_bytes_per_token = optional_or<Bytes>(j, "workload", "payload_bytes_per_token", 2);
  return w;
}

json workload_to_json(const WorkloadConfig& w) {
  json j;
  if (w.trace_file) {
    j["trace_file"] = *w.trace_file;
  } else {
    j["seed"] = w.seed;
    j["steps"] = w.steps;
    j["ranks"] = w.ranks;
    j["experts"] = w.experts;
    j["tokens_per_rank"] = w.tokens_per_rank;
    j["skew"] = w.skew;
  }
  j["payload_bytes_per_token"] = w.payload_bytes_per_token;
  return j;
}

PrefetchConfig cache_from_json(const json& j) {
  PrefetchConfig c;
  c.cache.cpu_size = require<std::size_t>(j, "cache", "cpu_size");
  c.cache.threshold = optional_or<double>(j, "cache", "threshold", 1.0);
  c.cache.beta = optional_or<double>(j, "cache", "beta", 1.0);
  c.cache.decay_steps = optional_or<std::uint32_t>(j, "cache", "decay_steps", 1);
  c.lookahead = optional_or<std::uint32_t>(j, "cache", "lookahead", 1);
  c.flush_period = optional_or<std::uint32_t>(j, "cache", "flush_period", 0);
  c.validate();
  return c;
}

json cache_to_json(const PrefetchConfig& c) {
  return {{"cpu_size", c.cache.cpu_size},   {"threshold", c.cache.threshold},
          {"beta", c.cache.beta},           {"decay_steps", c.cache.decay_steps},
          {"lookahead", c.lookahead},       {"flush_period", c.flush_period}};
}

RingConfig ring_from_json(const json& j) {
  RingConfig r;
  r.num_layers = require<std::uint32_t>(j, "ring", "num_layers");
  r.ring_slots = require<std::uint32_t>(j, "ring", "ring_slots");
  r.expert_bytes = require<Bytes>(j, "ring", "expert_bytes");
  r.dense_bytes = optional_or<Bytes>(j, "ring", "dense_bytes", 0);
  r.compute_ns_per_layer = require<TimeNs>(j, "ring", "compute_ns_per_layer");
  r.build().validate();
  return r;
}

json ring_to_json(const RingConfig& r) {
  return {{"num_layers", r.num_layers},
          {"ring_slots", r.ring_slots},
          {"expert_bytes", r.expert_bytes},
          {"dense_bytes", r.dense_bytes},
          {"compute_ns_per_layer", r.compute_ns_per_layer}};
}

ElasticConfig elastic_from_json(const json& j) {
  ElasticConfig e;
  e.batch_sizes = require<std::vector<Count>>(j, "elastic", "batch_sizes");
  e.gpu_budget = require<std::uint32_t>(j, "elastic", "gpu_budget");
  e.per_sample_cost_ns = optional_or<TimeNs>(j, "elastic", "per_sample_cost_ns", 1);
  if (j.contains("sync_cost_ns")) {
    e.sync_cost_ns = get_as<TimeNs>(j.at("sync_cost_ns"), "elastic.sync_cost_ns");
  }
  if (j.contains("per_gpu_capacity")) {
    e.per_gpu_capacity = get_as<Count>(j.at("per_gpu_capacity"), "elastic.per_gpu_capacity");
    e.task_loads = require<std::vector<Count>>(j, "elastic", "task_loads");
  }
  return e;
}

json elastic_to_json(const ElasticConfig& e) {
  json j{{"batch_sizes", e.batch_sizes},
         {"gpu_budget", e.gpu_budget},
         {"per_sample_cost_ns", e.per_sample_cost_ns}};
  if (e.sync_cost_ns) j["sync_cost_ns"] = *e.sync_cost_ns;
  if (e.per_gpu_capacity) {
    j["per_gpu_capacity"] = *e.per_gpu_capacity;
    j["task_loads"] = e.task_loads;
  }
  return j;
}

EmbedConfig embed_from_json(const json& j) {
  EmbedConfig e;
  e.vocab = require<std::size_t>(j, "embed", "vocab");
  e.hidden = require<std::size_t>(j, "embed", "hidden");
  e.ranks = require<std::size_t>(j, "embed", "ranks");
  e.seed = optional_or<std::uint64_t>(j, "embed", "seed", 1);
  e.ids_per_rank = optional_or<std::size_t>(j, "embed", "ids_per_rank", 8);
  return e;
}

json embed_to_json(const EmbedConfig& e) {
  return {{"vocab", e.vocab},
          {"hidden", e.hidden},
          {"ranks", e.ranks},
          {"seed", e.seed},
          {"ids_per_rank", e.ids_per_rank}};
}

ComputeConfig compute_from_json(const json& j) {
  ComputeConfig c;
  c.per_layer_ns = optional_or<TimeNs>(j, "compute", "per_layer_ns", 0);
  c.per_token_ns = optional_or<TimeNs>(j, "compute", "per_token_ns", 0);
  return c;
}

json compute_to_json(const ComputeConfig& c) {
  return {{"per_layer_ns", c.per_layer_ns}, {"per_token_ns", c.per_token_ns}};
}

}  // namespace

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario: expected a JSON object");
  Scenario s;
  s.schema_version = optional_or<int>(j, "scenario", "schema_version", 1);
  if (s.schema_version != 1) throw ConfigError("schema_version: unsupported version");
  s.name = optional_or<std::string>(j, "scenario", "name", "");
  s.mode = mode_from_name(require<std::string>(j, "scenario", "mode"));
  if (j.contains("model")) s.model = model_from_json(section(j, "model"));
  if (j.contains("machine")) s.machine = machine_from_json(section(j, "machine"));
  if (j.contains("topology")) s.topology = topology_from_json(section(j, "topology"));
  if (j.contains("workload")) s.workload = workload_from_json(section(j, "workload"));
  if (j.contains("cache")) s.cache = cache_from_json(section(j, "cache"));
  if (j.contains("ring")) s.ring = ring_from_json(section(j, "ring"));
  if (j.contains("elastic")) s.elastic = elastic_from_json(section(j, "elastic"));
  if (j.contains("embed")) s.embed = embed_from_json(section(j, "embed"));
  if (j.contains("compute")) s.compute = compute_from_json(section(j, "compute"));
  return s;
}

nlohmann::json scenario_to_json(const Scenario& s) {
  json j{{"schema_version", s.schema_version}, {"mode", mode_name(s.mode)}};
  if (!s.name.empty()) j["name"] = s.name;
  if (s.model) j["model"] = model_to_json(*s.model);
  if (s.machine) j["machine"] = machine_to_json(*s.machine);
  if (s.topology) j["topology"] = topology_to_json(*s.topology);
  if (s.workload) j["workload"] = workload_to_json(*s.workload);
  if (s.cache) j["cache"] = cache_to_json(*s.cache);
  if (s.ring) j["ring"] = ring_to_json(*s.ring);
  if (s.elastic) j["elastic"] = elastic_to_json(*s.elastic);
  if (s.embed) j["embed"] = embed_to_json(*s.embed);
  if (s.compute) j["compute"] = compute_to_json(*s.compute);
  return j;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot read '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("scenario: invalid JSON: " + std::string(e.what()));
  }
  Scenario s = scenario_from_json(j);
  s.base_dir = std::filesystem::path(path).parent_path().string();
  return s;
}

}  // namespace moesim
