#include "moesim/collectives.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace moesim {

ShardedPayload alltoall_flat(const ShardedPayload& payload) {
  if (payload.chunks.size() != payload.ranks * payload.ranks) {
    throw std::invalid_argument("alltoall: payload is not a square rank matrix");
  }
  ShardedPayload out = ShardedPayload::make(payload.ranks);
  for (std::size_t src = 0; src < payload.ranks; ++src) {
    for (std::size_t dst = 0; dst < payload.ranks; ++dst) {
      out.at(dst, src) = payload.at(src, dst);
    }
  }
  return out;
}

namespace {

void count_hops(std::array<std::size_t, kLinkClassCount>& hops, const Path& path) {
  for (const LinkClass hop : path) hops[static_cast<std::size_t>(hop)] += 1;
}

}  // namespace

ShardedPayload alltoall_hierarchical(const ShardedPayload& payload, const Topology& topology,
                                     AlltoAllStats* stats) {
  const std::size_t ranks = payload.ranks;
  if (payload.chunks.size() != ranks * ranks) {
    throw std::invalid_argument("alltoall: payload is not a square rank matrix");
  }
  if (ranks != topology.total_gpus()) {
    throw std::invalid_argument("alltoall: payload rank count does not match topology GPU count");
  }

  struct Entry {
    std::uint32_t src;
    std::uint32_t dst;
    Chunk data;
  };
  std::vector<std::vector<Entry>> staged(ranks);

  // Phase 1: within each node, move every chunk onto the GPU whose local
  // rank equals the destination's local rank. NVLink-only by construction.
  for (std::uint32_t src = 0; src < ranks; ++src) {
    const GpuId s = topology.gpu(src);
    for (std::uint32_t dst = 0; dst < ranks; ++dst) {
      const GpuId d = topology.gpu(dst);
      const GpuId holder{s.cluster, s.node, d.local_rank};
      const Path path = topology.route(s, holder);
      if (stats != nullptr && !path.empty()) {
        count_hops(stats->phase1_hops, path);
        stats->phase1_transfers += 1;
      }
      staged[topology.global_rank(holder)].push_back(Entry{src, dst, payload.at(src, dst)});
    }
  }

  // Phase 2: rail exchange between same-local-rank GPUs; never crosses spin.
  ShardedPayload out = ShardedPayload::make(ranks);
  for (std::uint32_t holder = 0; holder < ranks; ++holder) {
    const GpuId h = topology.gpu(holder);
    for (Entry& entry : staged[holder]) {
      const GpuId d = topology.gpu(entry.dst);
      const Path path = topology.route(h, d);
      if (stats != nullptr && !path.empty()) {
        count_hops(stats->phase2_hops, path);
        stats->phase2_transfers += 1;
      }
      out.at(entry.dst, entry.src) = std::move(entry.data);
    }
  }
  return out;
}

std::vector<Chunk> allgather(const std::vector<Chunk>& slices) {
  if (slices.empty()) throw std::invalid_argument("allgather: missing slices");
  Chunk full;
  for (const Chunk& slice : slices) full.insert(full.end(), slice.begin(), slice.end());
  return std::vector<Chunk>(slices.size(), full);
}

FusedBlob fuse_slices(const std::vector<Chunk>& slices) {
  if (slices.empty()) throw std::invalid_argument("fuse_slices: empty slice list");
  FusedBlob fused;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    fused.index.push_back(SliceIndexEntry{i, offset, slices[i].size()});
    fused.blob.insert(fused.blob.end(), slices[i].begin(), slices[i].end());
    offset += slices[i].size();
  }
  return fused;
}

std::vector<Chunk> split_blob(const Chunk& blob, const SliceIndex& index) {
  std::size_t expected_offset = 0;
  for (const SliceIndexEntry& e : index) {
    if (e.offset != expected_offset) {
      throw std::invalid_argument("split_blob: slice index is not contiguous");
    }
    expected_offset += e.length;
  }
  if (expected_offset != blob.size()) {
    throw std::invalid_argument("split_blob: index does not cover the blob length");
  }
  std::vector<Chunk> slices;
  slices.reserve(index.size());
  for (const SliceIndexEntry& e : index) {
    slices.emplace_back(blob.begin() + static_cast<std::ptrdiff_t>(e.offset),
                        blob.begin() + static_cast<std::ptrdiff_t>(e.offset + e.length));
  }
  return slices;
}

GradBucket::GradBucket(std::vector<std::uint64_t> registered_ids)
    : registered_(std::move(registered_ids)),
      arrived_(registered_.size(), false),
      missing_(registered_.size()) {}

std::optional<std::vector<std::uint64_t>> GradBucket::push(std::uint64_t grad_id) {
  const auto it = std::find(registered_.begin(), registered_.end(), grad_id);
  if (it == registered_.end()) {
    throw std::invalid_argument("bucket: gradient " + std::to_string(grad_id) +
                                " is not registered in this bucket");
  }
  const auto idx = static_cast<std::size_t>(it - registered_.begin());
  if (arrived_[idx]) {
    throw std::invalid_argument("bucket: duplicate push of gradient " + std::to_string(grad_id));
  }
  arrived_[idx] = true;
  missing_ -= 1;
  if (missing_ > 0) return std::nullopt;
  flushed_ = true;
  return registered_;  // registration order, not arrival order
}

void GradBucket::reset() {
  std::fill(arrived_.begin(), arrived_.end(), false);
  missing_ = registered_.size();
  flushed_ = false;
}

std::vector<GradBucket> make_gradient_buckets(const std::vector<std::uint64_t>& params_layer_order,
                                              std::size_t capacity) {
  if (capacity == 0) throw std::invalid_argument("bucket: capacity must be >= 1");
  std::vector<GradBucket> buckets;
  std::vector<std::uint64_t> current;
  for (auto it = params_layer_order.rbegin(); it != params_layer_order.rend(); ++it) {
    current.push_back(*it);
    if (current.size() == capacity) {
      buckets.emplace_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) buckets.emplace_back(std::move(current));
  return buckets;
}

LoweredAlltoAll lower_alltoall_flat(SimEngine& engine, const Topology& topology,
                                    const std::vector<std::vector<Bytes>>& bytes,
                                    const std::vector<TaskId>& deps) {
  const std::size_t ranks = topology.total_gpus();
  if (bytes.size() != ranks) throw std::invalid_argument("alltoall: byte matrix rank mismatch");
  LoweredAlltoAll lowered;
  for (std::uint32_t src = 0; src < ranks; ++src) {
    if (bytes[src].size() != ranks)
      throw std::invalid_argument("alltoall: byte matrix rank mismatch");
    for (std::uint32_t dst = 0; dst < ranks; ++dst) {
      if (src == dst) continue;
      const GpuId s = topology.gpu(src);
      const GpuId d = topology.gpu(dst);
      const StreamId channel = engine.stream(topology.channel(s, d));
      lowered.phase1.push_back(engine.submit_transfer(
          channel, "a2a " + std::to_string(src) + "->" + std::to_string(dst), bytes[src][dst],
          topology.route(s, d), deps));
    }
  }
  return lowered;
}

LoweredAlltoAll lower_alltoall_hierarchical(SimEngine& engine, const Topology& topology,
                                            const std::vector<std::vector<Bytes>>& bytes,
                                            const std::vector<TaskId>& deps) {
  const std::size_t ranks = topology.total_gpus();
  if (bytes.size() != ranks) throw std::invalid_argument("alltoall: byte matrix rank mismatch");
  for (const auto& row : bytes) {
    if (row.size() != ranks) throw std::invalid_argument("alltoall: byte matrix rank mismatch");
  }
  LoweredAlltoAll lowered;
  const std::uint32_t gpn = topology.gpus_per_node();
  const std::uint32_t nodes = topology.total_nodes();

  // Phase 1: aggregate per (src gpu, destination local rank) move inside the node.
  // staging_task[(src, rail)] -> task id, for dependency wiring below.
  std::map<std::pair<std::uint32_t, std::uint32_t>, TaskId> staging_task;
  for (std::uint32_t src = 0; src < ranks; ++src) {
    const GpuId s = topology.gpu(src);
    for (std::uint32_t rail = 0; rail < gpn; ++rail) {
      if (rail == s.local_rank) continue;  // stays on this GPU
      Bytes total = 0;
      for (std::uint32_t dst = 0; dst < ranks; ++dst) {
        if (topology.gpu(dst).local_rank == rail) total += bytes[src][dst];
      }
      const GpuId holder{s.cluster, s.node, rail};
      const StreamId channel = engine.stream(topology.channel(s, holder));
      const TaskId id = engine.submit_transfer(
          channel, "a2a.p1 " + std::to_string(src) + "->rail" + std::to_string(rail), total,
          topology.route(s, holder), deps);
      staging_task[{src, rail}] = id;
      lowered.phase1.push_back(id);
    }
  }

  // Phase 2: per rail, exchange the staged aggregates between nodes.
  for (std::uint32_t src_node = 0; src_node < nodes; ++src_node) {
    for (std::uint32_t rail = 0; rail < gpn; ++rail) {
      const GpuId holder{src_node / topology.nodes_per_cluster(),
                         src_node % topology.nodes_per_cluster(), rail};
      for (std::uint32_t dst_node = 0; dst_node < nodes; ++dst_node) {
        if (dst_node == src_node) continue;
        const GpuId dst{dst_node / topology.nodes_per_cluster(),
                        dst_node % topology.nodes_per_cluster(), rail};
        Bytes total = 0;
        std::vector<TaskId> phase_deps;
        for (std::uint32_t local = 0; local < gpn; ++local) {
          const std::uint32_t src = topology.global_rank(
              GpuId{holder.cluster, holder.node, local});
          total += bytes[src][topology.global_rank(dst)];
          if (auto it = staging_task.find({src, rail}); it != staging_task.end()) {
            phase_deps.push_back(it->second);
          }
        }
        const StreamId channel = engine.stream(topology.channel(holder, dst));
        lowered.phase2.push_back(engine.submit_transfer(
            channel,
            "a2a.p2 n" + std::to_string(src_node) + "->n" + std::to_string(dst_node) + " rail" +
                std::to_string(rail),
            total, topology.route(holder, dst), phase_deps));
      }
    }
  }
  return lowered;
}

std::vector<TaskId> lower_slice_transfer(SimEngine& engine, const Topology& topology,
                                         const GpuId& src, const GpuId& dst,
                                         const std::vector<Bytes>& slice_sizes, bool fused,
                                         const std::vector<TaskId>& deps) {
  const Path path = topology.route(src, dst);
  const StreamId channel = engine.stream(topology.channel(src, dst));
  std::vector<TaskId> tasks;
  if (fused) {
    const Bytes total = std::accumulate(slice_sizes.begin(), slice_sizes.end(), Bytes{0});
    tasks.push_back(engine.submit_transfer(channel, "fused xfer", total, path, deps));
  } else {
    for (std::size_t i = 0; i < slice_sizes.size(); ++i) {
      tasks.push_back(engine.submit_transfer(channel, "slice xfer " + std::to_string(i),
                                             slice_sizes[i], path, deps));
    }
  }
  return tasks;
}

}  // namespace moesim
