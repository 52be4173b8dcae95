#pragma once

#include <cstdint>
#include <vector>

#include "moesim/sim_engine.hpp"
#include "moesim/topology.hpp"
#include "moesim/types.hpp"

namespace moesim {

struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  static RowMatrix zeros(std::size_t rows, std::size_t cols) {
    return RowMatrix{rows, cols, std::vector<double>(rows * cols, 0.0)};
  }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const RowMatrix&, const RowMatrix&) = default;
};

// Contiguous row range [row_lo, row_hi) of the (padded) vocabulary.
struct EmbShard {
  std::size_t owner = 0;
  std::size_t row_lo = 0;
  std::size_t row_hi = 0;
  RowMatrix weights;
};

// Row-wise partition of a [V, H] table across N ranks. The vocabulary is
// padded up to a multiple of N with zero rows that are never addressed.
struct EmbPartition {
  std::size_t vocab = 0;         // addressable rows (pre-padding)
  std::size_t padded_vocab = 0;  // divisible by ranks
  std::size_t hidden = 0;
  std::vector<EmbShard> shards;

  std::size_t ranks() const { return shards.size(); }
  std::size_t rows_per_shard() const { return padded_vocab / ranks(); }
  std::size_t owner_of(std::uint64_t id) const { return id / rows_per_shard(); }
};

struct LookupBatch {
  std::vector<std::vector<std::uint64_t>> ids;  // per rank; lengths may differ
};

// AlltoAll invocations observed during a step; forward contributes two,
// backward one, independent of rank count (N = 1 exchanges with itself).
struct CommCounter {
  std::size_t alltoall_calls = 0;
};

EmbPartition make_shards(const RowMatrix& table, std::size_t ranks);

// result[r] holds one row per input id, in input order:
// result[r].row(k) == table.row(batch.ids[r][k]). AlltoAll #1 routes ids to
// their owner shard, AlltoAll #2 returns the looked-up rows.
// Throws std::out_of_range for ids outside [0, vocab).
std::vector<RowMatrix> embed_forward(const EmbPartition& partition, const LookupBatch& batch,
                                     CommCounter& comms);

// Returns per-shard gradient matrices; duplicate ids accumulate by summation.
// Exactly one AlltoAll (and no AllReduce).
std::vector<RowMatrix> embed_backward(const EmbPartition& partition, const LookupBatch& batch,
                                      const std::vector<RowMatrix>& output_grads,
                                      CommCounter& comms);

// Per-shard weight storage in bytes (doubles): exactly baseline / N.
Bytes shard_storage_bytes(const EmbPartition& partition);
Bytes baseline_storage_bytes(const EmbPartition& partition);

// Timing lowering of one training step (two forward AlltoAlls, one backward)
// onto the engine. Payload bytes: id routing moves ids_routed * id_bytes,
// the row exchanges move rows * hidden * element_bytes. Ranks map onto the
// topology's GPUs in global-rank order; requires ranks() == total_gpus().
struct LoweredEmbedStep {
  std::vector<TaskId> forward_ids;
  std::vector<TaskId> forward_rows;
  std::vector<TaskId> backward_grads;
};
LoweredEmbedStep lower_embed_step(SimEngine& engine, const Topology& topology,
                                  const EmbPartition& partition, const LookupBatch& batch,
                                  Bytes element_bytes = 4, Bytes id_bytes = 8);

}  // namespace moesim
