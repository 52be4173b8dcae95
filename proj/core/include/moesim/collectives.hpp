#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "moesim/sim_engine.hpp"
#include "moesim/topology.hpp"
#include "moesim/types.hpp"

namespace moesim {

using Chunk = std::vector<std::uint8_t>;

// Square R x R chunk matrix: chunks addressed as (source rank, destination
// rank). After an AlltoAll, entry (i, j) of the result is what rank i
// received from source rank j.
struct ShardedPayload {
  std::size_t ranks = 0;
  std::vector<Chunk> chunks;  // row-major [src][dst]

  static ShardedPayload make(std::size_t ranks) {
    ShardedPayload p;
    p.ranks = ranks;
    p.chunks.resize(ranks * ranks);
    return p;
  }
  Chunk& at(std::size_t src, std::size_t dst) { return chunks[src * ranks + dst]; }
  const Chunk& at(std::size_t src, std::size_t dst) const { return chunks[src * ranks + dst]; }

  friend bool operator==(const ShardedPayload&, const ShardedPayload&) = default;
};

// chunks'[i][j] = chunks[j][i].
ShardedPayload alltoall_flat(const ShardedPayload& payload);

struct AlltoAllStats {
  std::array<std::size_t, kLinkClassCount> phase1_hops{};
  std::array<std::size_t, kLinkClassCount> phase2_hops{};
  std::size_t phase1_transfers = 0;
  std::size_t phase2_transfers = 0;

  std::size_t hops(LinkClass c) const {
    return phase1_hops[static_cast<std::size_t>(c)] + phase2_hops[static_cast<std::size_t>(c)];
  }
};

// Two-phase rail-aware AlltoAll: phase 1 stages chunks within each node onto
// the GPU whose local rank matches the destination's local rank (NVLink
// only), phase 2 exchanges along rails between same-local-rank GPUs (no spin
// hops). Delivered chunks are identical to alltoall_flat.
// Requires payload.ranks == topology.total_gpus().
ShardedPayload alltoall_hierarchical(const ShardedPayload& payload, const Topology& topology,
                                     AlltoAllStats* stats = nullptr);

// Every rank ends with the concatenation of all ranks' slices in rank order.
std::vector<Chunk> allgather(const std::vector<Chunk>& slices);

struct SliceIndexEntry {
  std::size_t slice_id = 0;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const SliceIndexEntry&, const SliceIndexEntry&) = default;
};
// Contiguous, non-overlapping, covers the blob exactly.
using SliceIndex = std::vector<SliceIndexEntry>;

struct FusedBlob {
  Chunk blob;
  SliceIndex index;
};

// Coalesce parameter slices into one blob; split_blob is the exact inverse.
// fuse_slices rejects an empty slice list; split_blob rejects an index that
// does not tile the blob.
FusedBlob fuse_slices(const std::vector<Chunk>& slices);
std::vector<Chunk> split_blob(const Chunk& blob, const SliceIndex& index);

// One-shot gradient bucket: parameters are registered up front (fixed
// order); push() holds gradients until the last one arrives and then flushes
// exactly once with the payload in registration order, independent of
// arrival order.
class GradBucket {
 public:
  explicit GradBucket(std::vector<std::uint64_t> registered_ids);

  std::size_t capacity() const { return registered_.size(); }
  bool flushed() const { return flushed_; }

  // nullopt = held. Throws std::invalid_argument on a duplicate push or a
  // gradient id that was never registered.
  std::optional<std::vector<std::uint64_t>> push(std::uint64_t grad_id);

  // Re-arm for the next iteration.
  void reset();

 private:
  std::vector<std::uint64_t> registered_;
  std::vector<bool> arrived_;
  std::size_t missing_ = 0;
  bool flushed_ = false;
};

// Split parameters into buckets of at most `capacity`, registering them in
// reverse layer order (gradients arrive back-to-front in backward passes).
std::vector<GradBucket> make_gradient_buckets(const std::vector<std::uint64_t>& params_layer_order,
                                              std::size_t capacity);

// --- Lowering onto the event engine (timing) ---

struct LoweredAlltoAll {
  std::vector<TaskId> phase1;
  std::vector<TaskId> phase2;  // flat lowering leaves this empty
};

// One network task per (src, dst) pair with a nonempty route.
LoweredAlltoAll lower_alltoall_flat(SimEngine& engine, const Topology& topology,
                                    const std::vector<std::vector<Bytes>>& bytes,
                                    const std::vector<TaskId>& deps = {});

// Phase-1 tasks on the node NVLink channels, phase-2 tasks on the rail
// channels; each phase-2 task depends on the phase-1 tasks that staged its
// payload.
LoweredAlltoAll lower_alltoall_hierarchical(SimEngine& engine, const Topology& topology,
                                            const std::vector<std::vector<Bytes>>& bytes,
                                            const std::vector<TaskId>& deps = {});

// Point-to-point transfer of k parameter slices: fused issues exactly one
// network task for the coalesced blob, unfused issues one task per slice.
std::vector<TaskId> lower_slice_transfer(SimEngine& engine, const Topology& topology,
                                         const GpuId& src, const GpuId& dst,
                                         const std::vector<Bytes>& slice_sizes, bool fused,
                                         const std::vector<TaskId>& deps = {});

}  // namespace moesim
