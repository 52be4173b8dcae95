#include "moesim/report.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "moesim/collectives.hpp"
#include "moesim/elastic_planner.hpp"
#include "moesim/embed_partition.hpp"
#include "moesim/prefetch_cache.hpp"
#include "moesim/ring_offload.hpp"
#include "moesim/rng.hpp"

namespace moesim {

namespace {

using json = nlohmann::json;

template <typename T>
const T& need(const std::optional<T>& section, const char* name, Mode mode) {
  if (!section) {
    throw ConfigError(std::string(name) + ": required for mode " + mode_name(mode));
  }
  return *section;
}

std::string fmt_ms(TimeNs ns) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(ns) / 1e6);
  return buf;
}

std::string fmt_mib(Bytes bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", static_cast<double>(bytes) / (1024.0 * 1024.0));
  return buf;
}

std::string fmt_pct(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", pct);
  return buf;
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

template <typename T>
std::string join_slash(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += "/";
    out += std::to_string(values[i]);
  }
  return out;
}

json feasibility_to_json(const FeasibilityReport& r) {
  const auto tier = [](const TierCheck& t) {
    return json{{"ok", t.ok},
                {"demand_bytes", t.demand},
                {"capacity_bytes", t.capacity},
                {"headroom_bytes", t.headroom}};
  };
  return {{"gpu", tier(r.gpu)}, {"cpu", tier(r.cpu)}, {"ssd", tier(r.ssd)}};
}

json stream_stats_to_json(const Timeline& tl) {
  json streams = json::object();
  for (const auto& [name, st] : tl.streams) {
    streams[name] = {{"busy_ns", st.busy}, {"stall_ns", st.stall}};
  }
  return streams;
}

void run_plan(const Scenario& s, ScenarioRun& out) {
  const ModelSpec& model = need(s.model, "model", s.mode);
  const MachineSpec& machine = need(s.machine, "machine", s.mode);
  const FeasibilityReport feas = check_feasibility(model, machine);
  out.report.metrics["tiers"] = feasibility_to_json(feas);
  out.report.metrics["total_params"] = total_params(model);
  out.report.verdicts["feasible"] = feas.feasible();
  out.report.verdicts["failing_tier"] = feas.first_failing_tier();
  out.report.exit_code = feas.feasible() ? 0 : 1;
  out.report.summary = {
      {"nodes", std::to_string(machine.nodes)},
      {"dense", std::to_string(model.dense_params)},
      {"sparse", std::to_string(model.sparse_params)},
      {"layers", std::to_string(model.moe_layers)},
      {"alpha", fmt_num(model.activation_prob)},
      {"gpu_ok", feas.gpu.ok ? "yes" : "no"},
      {"cpu_ok", feas.cpu.ok ? "yes" : "no"},
      {"ssd_ok", feas.ssd.ok ? "yes" : "no"},
  };
}

void run_train_sim(const Scenario& s, ScenarioRun& out) {
  const ModelSpec& model = need(s.model, "model", s.mode);
  const MachineSpec& machine = need(s.machine, "machine", s.mode);
  const Topology topology = need(s.topology, "topology", s.mode).build();
  const WorkloadConfig& workload = need(s.workload, "workload", s.mode);
  const PrefetchConfig& cache = need(s.cache, "cache", s.mode);
  const ComputeConfig compute_cfg = s.compute.value_or(ComputeConfig{});

  const RoutingTrace trace = workload.load(s.base_dir);
  ComputeModel compute{compute_cfg.per_layer_ns, compute_cfg.per_token_ns};

  Prefetch2DResult result;
  try {
    result = run_2d_schedule(model, machine, trace, topology, cache, compute);
  } catch (const InfeasibleError& e) {
    out.report.metrics["tiers"] = feasibility_to_json(e.report);
    out.report.verdicts["feasible"] = false;
    out.report.verdicts["failing_tier"] = e.report.first_failing_tier();
    out.report.exit_code = 1;
    return;
  }

  std::array<std::size_t, 4> outcome_counts{};
  for (const AccessRecord& rec : result.outcomes) {
    outcome_counts[static_cast<std::size_t>(rec.outcome.kind)] += 1;
  }
  out.report.metrics["makespan_ns"] = result.makespan;
  out.report.metrics["total_stall_ns"] = result.total_stall;
  out.report.metrics["first_access_stall_ns"] = result.stalls.empty() ? 0 : result.stalls.front();
  out.report.metrics["steady_stall_ns"] =
      result.total_stall - (result.stalls.empty() ? 0 : result.stalls.front());
  out.report.metrics["accesses"] = {
      {"cache_hit", outcome_counts[0]},
      {"fetched_fresh", outcome_counts[1]},
      {"evicted_and_fetched", outcome_counts[2]},
      {"stream_through", outcome_counts[3]},
  };
  out.report.metrics["dense_gather_bytes_per_layer"] = result.dense_gather_bytes;
  out.report.metrics["sparse_h2d_bytes_per_layer"] = result.sparse_h2d_bytes;
  out.report.metrics["sparse_state_bytes_per_layer"] = result.sparse_state_bytes;
  out.report.metrics["imbalance_ratio"] =
      trace.tokens_per_rank > 0 ? imbalance_ratio(trace) : 1.0;
  out.report.metrics["streams"] = stream_stats_to_json(result.timeline);
  out.report.metrics["peak_memory"] = result.timeline.peak_memory;
  out.report.verdicts["feasible"] = true;
  out.report.verdicts["failing_tier"] = "";
  out.report.summary = {
      {"steps", std::to_string(trace.steps)},
      {"layers", std::to_string(model.moe_layers)},
      {"experts", std::to_string(trace.experts)},
      {"tokens/rank", std::to_string(trace.tokens_per_rank)},
      {"makespan_ms", fmt_ms(result.makespan)},
      {"stall_ms", fmt_ms(result.total_stall)},
      {"hit", std::to_string(outcome_counts[0])},
      {"fresh", std::to_string(outcome_counts[1])},
      {"evict", std::to_string(outcome_counts[2])},
      {"stream", std::to_string(outcome_counts[3])},
  };
  out.timeline = std::move(result.timeline);
}

void run_infer_sim(const Scenario& s, ScenarioRun& out) {
  const RingConfig& ring = need(s.ring, "ring", s.mode);
  const Topology topology = need(s.topology, "topology", s.mode).build();
  const RingPlan plan = ring.build();
  RingSimResult result = simulate(plan, topology);

  const TimeNs compute_only = std::accumulate(plan.compute_ns.begin(), plan.compute_ns.end(),
                                              TimeNs{0});
  out.report.metrics["makespan_ns"] = result.makespan;
  out.report.metrics["compute_only_ns"] = compute_only;
  out.report.metrics["stall_ns"] = result.stall_ns;
  out.report.metrics["warmup_ssd_ns"] = result.warmup_ssd_ns;
  out.report.metrics["copy_ns_per_layer"] = result.copy_ns_per_layer;
  out.report.metrics["peak_gpu_bytes"] = result.peak_gpu_bytes;
  out.report.metrics["observed_peak_gpu_bytes"] = result.observed_peak_gpu_bytes;
  out.report.metrics["baseline_gpu_bytes"] = result.baseline_gpu_bytes;
  out.report.metrics["memory_saved_bytes"] = result.baseline_gpu_bytes - result.peak_gpu_bytes;
  out.report.metrics["memory_reduction_pct"] =
      result.baseline_gpu_bytes == 0
          ? 0.0
          : 100.0 * (1.0 - static_cast<double>(result.peak_gpu_bytes) /
                               static_cast<double>(result.baseline_gpu_bytes));
  out.report.metrics["makespan_delta_vs_compute_only_ns"] = result.makespan - compute_only;
  out.report.verdicts["clamped"] = result.clamped;
  out.report.summary = {
      {"layers", std::to_string(plan.num_layers)},
      {"slots", std::to_string(ring.ring_slots)},
      {"copy_ms", fmt_ms(result.copy_ns_per_layer)},
      {"makespan_ms", fmt_ms(result.makespan)},
      {"stall_ms", fmt_ms(result.stall_ns)},
      {"peak_MiB", fmt_mib(result.peak_gpu_bytes)},
      {"baseline_MiB", fmt_mib(result.baseline_gpu_bytes)},
      {"saved_pct",
       fmt_pct(out.report.metrics["memory_reduction_pct"].get<double>())},
  };
  out.timeline = std::move(result.timeline);
}

void run_alltoall_bench(const Scenario& s, ScenarioRun& out) {
  const Topology topology = need(s.topology, "topology", s.mode).build();
  const WorkloadConfig& workload = need(s.workload, "workload", s.mode);
  const std::uint32_t ranks = topology.total_gpus();

  // Chunk sizes come from one step of a token trace with one expert per rank.
  const RoutingTrace trace = gen_trace(workload.seed, 1, ranks, ranks, workload.tokens_per_rank,
                                       workload.skew);
  ShardedPayload payload = ShardedPayload::make(ranks);
  std::vector<std::vector<Bytes>> bytes(ranks, std::vector<Bytes>(ranks, 0));
  Bytes total_bytes = 0;
  for (std::uint32_t src = 0; src < ranks; ++src) {
    SplitMix64 fill(substream_seed(workload.seed, 0x70ad, src));
    for (std::uint32_t dst = 0; dst < ranks; ++dst) {
      bytes[src][dst] = trace.at(0, src, dst) * workload.payload_bytes_per_token;
      total_bytes += bytes[src][dst];
      Chunk& chunk = payload.at(src, dst);
      chunk.resize(bytes[src][dst]);
      for (auto& b : chunk) b = static_cast<std::uint8_t>(fill.next());
    }
  }

  AlltoAllStats stats;
  const ShardedPayload flat = alltoall_flat(payload);
  const ShardedPayload hier = alltoall_hierarchical(payload, topology, &stats);

  SimEngine flat_engine(&topology);
  lower_alltoall_flat(flat_engine, topology, bytes);
  const Timeline flat_tl = flat_engine.run();
  SimEngine hier_engine(&topology);
  lower_alltoall_hierarchical(hier_engine, topology, bytes);
  Timeline hier_tl = hier_engine.run();

  json hop_counts = json::object();
  for (std::size_t i = 0; i < kLinkClassCount; ++i) {
    hop_counts[link_class_name(static_cast<LinkClass>(i))] = {
        {"phase1", stats.phase1_hops[i]}, {"phase2", stats.phase2_hops[i]}};
  }
  out.report.metrics["ranks"] = ranks;
  out.report.metrics["total_bytes"] = total_bytes;
  out.report.metrics["flat_makespan_ns"] = flat_tl.makespan;
  out.report.metrics["hierarchical_makespan_ns"] = hier_tl.makespan;
  out.report.metrics["speedup_pct"] =
      hier_tl.makespan == 0 ? 0.0
                            : 100.0 * (static_cast<double>(flat_tl.makespan) /
                                           static_cast<double>(hier_tl.makespan) -
                                       1.0);
  out.report.metrics["hop_counts"] = std::move(hop_counts);
  out.report.verdicts["hierarchical_equals_flat"] = hier == flat;
  out.report.verdicts["phase2_rail_only"] =
      stats.phase2_hops[static_cast<std::size_t>(LinkClass::kSpin)] == 0;
  out.report.summary = {
      {"ranks", std::to_string(ranks)},
      {"payload_MiB", fmt_mib(total_bytes)},
      {"flat_ms", fmt_ms(flat_tl.makespan)},
      {"hier_ms", fmt_ms(hier_tl.makespan)},
      {"speedup_pct", fmt_pct(out.report.metrics["speedup_pct"].get<double>())},
      {"p2_spin_hops",
       std::to_string(stats.phase2_hops[static_cast<std::size_t>(LinkClass::kSpin)])},
  };
  out.timeline = std::move(hier_tl);
}

void run_elastic_plan(const Scenario& s, ScenarioRun& out) {
  const ElasticConfig& cfg = need(s.elastic, "elastic", s.mode);
  const ScaleUpAssignment balanced = balance_scale_up(cfg.batch_sizes, cfg.gpu_budget);
  ScaleUpAssignment naive;
  naive.gpus_per_task.assign(cfg.batch_sizes.size(), 1);

  // Barrier default: the per-task AllReduce of dense fp16 parameters over
  // one rail hop, when the scenario describes the model and fabric.
  TimeNs sync_ns = cfg.sync_cost_ns.value_or(0);
  if (!cfg.sync_cost_ns && s.model && s.topology) {
    const Topology topology = s.topology->build();
    sync_ns = topology.transfer_time(
        {LinkClass::kTor, LinkClass::kLeaf, LinkClass::kTor}, 2 * s.model->dense_params);
  }

  MultitaskResult balanced_sim =
      simulate_multitask(balanced, cfg.batch_sizes, cfg.per_sample_cost_ns, sync_ns);
  const MultitaskResult naive_sim =
      simulate_multitask(naive, cfg.batch_sizes, cfg.per_sample_cost_ns, sync_ns);

  out.report.metrics["gpus_per_task"] = balanced.gpus_per_task;
  out.report.metrics["total_gpus"] = balanced.total_gpus();
  out.report.metrics["sync_cost_ns"] = sync_ns;
  out.report.metrics["step_ns"] = balanced_sim.step_ns;
  out.report.metrics["naive_step_ns"] = naive_sim.step_ns;
  out.report.metrics["per_card_throughput"] = balanced_sim.per_card_throughput;
  out.report.metrics["naive_per_card_throughput"] = naive_sim.per_card_throughput;
  out.report.metrics["per_card_speedup_pct"] =
      naive_sim.per_card_throughput == 0.0
          ? 0.0
          : 100.0 * (balanced_sim.per_card_throughput / naive_sim.per_card_throughput - 1.0);
  if (cfg.per_gpu_capacity) {
    const ScaleDownAssignment packed = balance_scale_down(cfg.task_loads, *cfg.per_gpu_capacity);
    out.report.metrics["scale_down"] = {{"gpus_used", packed.gpus_used()},
                                        {"gpu_tasks", packed.gpu_tasks}};
  }
  out.report.verdicts["balanced_not_slower"] =
      balanced_sim.per_card_throughput >= naive_sim.per_card_throughput;
  out.report.summary = {
      {"batches", join_slash(cfg.batch_sizes)},
      {"budget", std::to_string(cfg.gpu_budget)},
      {"gpus/task", join_slash(balanced.gpus_per_task)},
      {"step_ms", fmt_ms(balanced_sim.step_ns)},
      {"naive_ms", fmt_ms(naive_sim.step_ns)},
      {"/card", fmt_num(balanced_sim.per_card_throughput)},
      {"naive/card", fmt_num(naive_sim.per_card_throughput)},
      {"speedup_pct",
       fmt_pct(out.report.metrics["per_card_speedup_pct"].get<double>())},
  };
  out.timeline = std::move(balanced_sim.timeline);
}

void run_embed_check(const Scenario& s, ScenarioRun& out) {
  const EmbedConfig& cfg = need(s.embed, "embed", s.mode);
  if (cfg.vocab == 0) throw ConfigError("embed.vocab: must be >= 1");
  if (cfg.hidden == 0) throw ConfigError("embed.hidden: must be >= 1");
  if (cfg.ranks == 0) throw ConfigError("embed.ranks: must be >= 1");

  // Integer-valued table and gradients keep the comparison exact.
  RowMatrix table = RowMatrix::zeros(cfg.vocab, cfg.hidden);
  SplitMix64 rng(cfg.seed);
  for (double& v : table.data) v = static_cast<double>(rng.next() % 997);

  LookupBatch batch;
  batch.ids.resize(cfg.ranks);
  for (auto& ids : batch.ids) {
    ids.resize(cfg.ids_per_rank);
    for (auto& id : ids) id = rng.next() % cfg.vocab;
  }

  const EmbPartition partition = make_shards(table, cfg.ranks);
  CommCounter comms;
  const std::vector<RowMatrix> fwd = embed_forward(partition, batch, comms);
  const std::size_t forward_calls = comms.alltoall_calls;

  bool forward_ok = true;
  for (std::size_t r = 0; r < cfg.ranks && forward_ok; ++r) {
    for (std::size_t k = 0; k < batch.ids[r].size() && forward_ok; ++k) {
      for (std::size_t c = 0; c < cfg.hidden; ++c) {
        if (fwd[r].at(k, c) != table.at(batch.ids[r][k], c)) {
          forward_ok = false;
          break;
        }
      }
    }
  }

  std::vector<RowMatrix> grads;
  grads.reserve(cfg.ranks);
  for (std::size_t r = 0; r < cfg.ranks; ++r) {
    RowMatrix g = RowMatrix::zeros(batch.ids[r].size(), cfg.hidden);
    for (double& v : g.data) v = static_cast<double>(rng.next() % 31);
    grads.push_back(std::move(g));
  }
  const std::vector<RowMatrix> shard_grads = embed_backward(partition, batch, grads, comms);

  // Dense scatter-add reference over the full (padded) table.
  RowMatrix expected = RowMatrix::zeros(partition.padded_vocab, cfg.hidden);
  for (std::size_t r = 0; r < cfg.ranks; ++r) {
    for (std::size_t k = 0; k < batch.ids[r].size(); ++k) {
      for (std::size_t c = 0; c < cfg.hidden; ++c) {
        expected.at(batch.ids[r][k], c) += grads[r].at(k, c);
      }
    }
  }
  bool backward_ok = true;
  for (std::size_t r = 0; r < cfg.ranks && backward_ok; ++r) {
    const EmbShard& shard = partition.shards[r];
    for (std::size_t row = shard.row_lo; row < shard.row_hi && backward_ok; ++row) {
      for (std::size_t c = 0; c < cfg.hidden; ++c) {
        if (shard_grads[r].at(row - shard.row_lo, c) != expected.at(row, c)) {
          backward_ok = false;
          break;
        }
      }
    }
  }

  out.report.metrics["vocab"] = partition.vocab;
  out.report.metrics["padded_vocab"] = partition.padded_vocab;
  out.report.metrics["ranks"] = cfg.ranks;
  out.report.metrics["hidden"] = cfg.hidden;
  out.report.metrics["alltoall_calls_forward"] = forward_calls;
  out.report.metrics["alltoall_calls_step"] = comms.alltoall_calls;
  out.report.metrics["shard_storage_bytes"] = shard_storage_bytes(partition);
  out.report.metrics["baseline_storage_bytes"] = baseline_storage_bytes(partition);
  out.report.verdicts["forward_matches_table"] = forward_ok;
  out.report.verdicts["backward_matches_scatter_add"] = backward_ok;
  out.report.verdicts["three_alltoalls_per_step"] = comms.alltoall_calls == 3;
  out.report.verdicts["shard_storage_is_baseline_over_n"] =
      shard_storage_bytes(partition) * cfg.ranks == baseline_storage_bytes(partition);
  const bool all_ok = forward_ok && backward_ok && comms.alltoall_calls == 3;
  out.report.summary = {
      {"vocab", std::to_string(partition.vocab)},
      {"hidden", std::to_string(cfg.hidden)},
      {"ranks", std::to_string(cfg.ranks)},
      {"a2a/step", std::to_string(comms.alltoall_calls)},
      {"shard_KiB", fmt_num(static_cast<double>(shard_storage_bytes(partition)) / 1024.0)},
      {"baseline_KiB",
       fmt_num(static_cast<double>(baseline_storage_bytes(partition)) / 1024.0)},
      {"checks", all_ok ? "pass" : "fail"},
  };
}

}  // namespace

ScenarioRun run_scenario(const Scenario& scenario) {
  ScenarioRun out;
  out.report.scenario_echo = scenario_to_json(scenario);
  switch (scenario.mode) {
    case Mode::kPlan: run_plan(scenario, out); break;
    case Mode::kTrainSim: run_train_sim(scenario, out); break;
    case Mode::kInferSim: run_infer_sim(scenario, out); break;
    case Mode::kAlltoallBench: run_alltoall_bench(scenario, out); break;
    case Mode::kElasticPlan: run_elastic_plan(scenario, out); break;
    case Mode::kEmbedCheck: run_embed_check(scenario, out); break;
  }
  return out;
}

nlohmann::json report_to_json(const Report& report) {
  return {{"schema_version", 1},
          {"scenario", report.scenario_echo},
          {"metrics", report.metrics},
          {"verdicts", report.verdicts},
          {"exit_code", report.exit_code}};
}

namespace {

void append_rows(std::ostringstream& out, const std::string& prefix, const json& j) {
  for (const auto& [key, value] : j.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      append_rows(out, name, value);
    } else {
      out << "  " << std::left << std::setw(42) << name << " " << value.dump() << "\n";
    }
  }
}

}  // namespace

std::string report_human(const Report& report) {
  std::ostringstream out;
  const std::string mode = report.scenario_echo.value("mode", "?");
  out << "mode: " << mode;
  if (report.scenario_echo.contains("name")) {
    out << "  (" << report.scenario_echo.at("name").get<std::string>() << ")";
  }
  out << "\n";
  if (!report.summary.empty()) {
    out << "\n";
    std::vector<std::size_t> widths;
    for (const auto& [header, value] : report.summary) {
      widths.push_back(std::max(header.size(), value.size()));
    }
    for (std::size_t i = 0; i < report.summary.size(); ++i) {
      out << "  " << std::left << std::setw(static_cast<int>(widths[i]))
          << report.summary[i].first;
    }
    out << "\n";
    for (std::size_t i = 0; i < report.summary.size(); ++i) {
      out << "  " << std::left << std::setw(static_cast<int>(widths[i]))
          << report.summary[i].second;
    }
    out << "\n";
  }
  out << "\nmetrics\n";
  append_rows(out, "", report.metrics);
  out << "\nverdicts\n";
  append_rows(out, "", report.verdicts);
  out << "\nexit code: " << report.exit_code << "\n";
  return out.str();
}

}  // namespace moesim
