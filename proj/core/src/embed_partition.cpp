#include "moesim/embed_partition.hpp"

#include <optional>
#include <stdexcept>
#include <string>

namespace moesim {

namespace {

// Dense AlltoAll over typed per-pair message vectors: out[i][j] = in[j][i].
template <typename T>
std::vector<std::vector<std::vector<T>>> alltoall_exchange(
    const std::vector<std::vector<std::vector<T>>>& messages, CommCounter& comms) {
  comms.alltoall_calls += 1;
  const std::size_t ranks = messages.size();
  std::vector<std::vector<std::vector<T>>> out(ranks);
  for (std::size_t dst = 0; dst < ranks; ++dst) {
    out[dst].resize(ranks);
    for (std::size_t src = 0; src < ranks; ++src) out[dst][src] = messages[src][dst];
  }
  return out;
}

struct IdRequest {
  std::uint64_t id = 0;
  std::size_t position = 0;  // index in the requester's batch
};

}  // namespace

EmbPartition make_shards(const RowMatrix& table, std::size_t ranks) {
  if (ranks == 0) throw ConfigError("embed.ranks: must be >= 1");
  if (table.rows == 0) throw ConfigError("embed.vocab: must be >= 1");

  EmbPartition partition;
  partition.vocab = table.rows;
  partition.padded_vocab = ceil_div_u64(table.rows, ranks) * ranks;
  partition.hidden = table.cols;

  const std::size_t per_shard = partition.padded_vocab / ranks;
  for (std::size_t r = 0; r < ranks; ++r) {
    EmbShard shard;
    shard.owner = r;
    shard.row_lo = r * per_shard;
    shard.row_hi = shard.row_lo + per_shard;
    shard.weights = RowMatrix::zeros(per_shard, table.cols);
    for (std::size_t row = shard.row_lo; row < shard.row_hi && row < table.rows; ++row) {
      for (std::size_t c = 0; c < table.cols; ++c) {
        shard.weights.at(row - shard.row_lo, c) = table.at(row, c);
      }
    }
    partition.shards.push_back(std::move(shard));
  }
  return partition;
}

std::vector<RowMatrix> embed_forward(const EmbPartition& partition, const LookupBatch& batch,
                                     CommCounter& comms) {
  const std::size_t ranks = partition.ranks();
  if (batch.ids.size() != ranks) {
    throw std::invalid_argument("embed: batch rank count does not match partition");
  }

  // Route each id to its owner shard, remembering where the row belongs.
  std::vector<std::vector<std::vector<IdRequest>>> requests(
      ranks, std::vector<std::vector<IdRequest>>(ranks));
  for (std::size_t r = 0; r < ranks; ++r) {
    for (std::size_t k = 0; k < batch.ids[r].size(); ++k) {
      const std::uint64_t id = batch.ids[r][k];
      if (id >= partition.vocab) {
        throw std::out_of_range("embed: id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(partition.vocab));
      }
      requests[r][partition.owner_of(id)].push_back(IdRequest{id, k});
    }
  }
  const auto owner_requests = alltoall_exchange(requests, comms);  // AlltoAll #1

  // Local lookups, reply rows aligned with the incoming request order.
  std::vector<std::vector<std::vector<std::vector<double>>>> replies(
      ranks, std::vector<std::vector<std::vector<double>>>(ranks));
  for (std::size_t owner = 0; owner < ranks; ++owner) {
    const EmbShard& shard = partition.shards[owner];
    for (std::size_t src = 0; src < ranks; ++src) {
      for (const IdRequest& req : owner_requests[owner][src]) {
        const std::size_t local_row = req.id - shard.row_lo;
        std::vector<double> row(partition.hidden);
        for (std::size_t c = 0; c < partition.hidden; ++c) {
          row[c] = shard.weights.at(local_row, c);
        }
        replies[owner][src].push_back(std::move(row));
      }
    }
  }
  const auto returned = alltoall_exchange(replies, comms);  // AlltoAll #2

  // Reassemble rows at their original batch positions.
  std::vector<RowMatrix> result;
  result.reserve(ranks);
  for (std::size_t r = 0; r < ranks; ++r) {
    RowMatrix rows = RowMatrix::zeros(batch.ids[r].size(), partition.hidden);
    for (std::size_t owner = 0; owner < ranks; ++owner) {
      const auto& sent = requests[r][owner];
      const auto& rows_back = returned[r][owner];
      for (std::size_t i = 0; i < sent.size(); ++i) {
        for (std::size_t c = 0; c < partition.hidden; ++c) {
          rows.at(sent[i].position, c) = rows_back[i][c];
        }
      }
    }
    result.push_back(std::move(rows));
  }
  return result;
}

std::vector<RowMatrix> embed_backward(const EmbPartition& partition, const LookupBatch& batch,
                                      const std::vector<RowMatrix>& output_grads,
                                      CommCounter& comms) {
  const std::size_t ranks = partition.ranks();
  if (batch.ids.size() != ranks || output_grads.size() != ranks) {
    throw std::invalid_argument("embed: batch/grad rank count does not match partition");
  }
  for (std::size_t r = 0; r < ranks; ++r) {
    if (output_grads[r].rows != batch.ids[r].size() || output_grads[r].cols != partition.hidden) {
      throw std::invalid_argument("embed: output_grads[" + std::to_string(r) +
                                  "] shape does not match the forward outputs");
    }
  }

  struct GradRow {
    std::uint64_t id = 0;
    std::vector<double> grad;
  };
  std::vector<std::vector<std::vector<GradRow>>> sends(ranks,
                                                       std::vector<std::vector<GradRow>>(ranks));
  for (std::size_t r = 0; r < ranks; ++r) {
    for (std::size_t k = 0; k < batch.ids[r].size(); ++k) {
      const std::uint64_t id = batch.ids[r][k];
      if (id >= partition.vocab) {
        throw std::out_of_range("embed: id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(partition.vocab));
      }
      GradRow row;
      row.id = id;
      row.grad.resize(partition.hidden);
      for (std::size_t c = 0; c < partition.hidden; ++c) row.grad[c] = output_grads[r].at(k, c);
      sends[r][partition.owner_of(id)].push_back(std::move(row));
    }
  }
  const auto received = alltoall_exchange(sends, comms);  // the single backward AlltoAll

  std::vector<RowMatrix> shard_grads;
  shard_grads.reserve(ranks);
  for (std::size_t owner = 0; owner < ranks; ++owner) {
    const EmbShard& shard = partition.shards[owner];
    RowMatrix grad = RowMatrix::zeros(shard.row_hi - shard.row_lo, partition.hidden);
    for (std::size_t src = 0; src < ranks; ++src) {
      for (const GradRow& row : received[owner][src]) {
        const std::size_t local_row = row.id - shard.row_lo;
        for (std::size_t c = 0; c < partition.hidden; ++c) {
          grad.at(local_row, c) += row.grad[c];  // duplicates accumulate
        }
      }
    }
    shard_grads.push_back(std::move(grad));
  }
  return shard_grads;
}

Bytes shard_storage_bytes(const EmbPartition& partition) {
  return static_cast<Bytes>(partition.rows_per_shard()) * partition.hidden * sizeof(double);
}

Bytes baseline_storage_bytes(const EmbPartition& partition) {
  return static_cast<Bytes>(partition.padded_vocab) * partition.hidden * sizeof(double);
}

LoweredEmbedStep lower_embed_step(SimEngine& engine, const Topology& topology,
                                  const EmbPartition& partition, const LookupBatch& batch,
                                  Bytes element_bytes, Bytes id_bytes) {
  const std::size_t ranks = partition.ranks();
  if (ranks != topology.total_gpus()) {
    throw std::invalid_argument("embed: partition rank count does not match topology GPU count");
  }
  if (batch.ids.size() != ranks) {
    throw std::invalid_argument("embed: batch rank count does not match partition");
  }

  // ids routed to each owner determine every payload of the step
  std::vector<std::vector<Bytes>> routed(ranks, std::vector<Bytes>(ranks, 0));
  for (std::size_t r = 0; r < ranks; ++r) {
    for (const std::uint64_t id : batch.ids[r]) {
      if (id >= partition.vocab) {
        throw std::out_of_range("embed: id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(partition.vocab));
      }
      routed[r][partition.owner_of(id)] += 1;
    }
  }
  const Bytes row_bytes = static_cast<Bytes>(partition.hidden) * element_bytes;

  const auto pair_label = [](const char* what, std::size_t src, std::size_t dst) {
    return std::string(what) + " " + std::to_string(src) + "->" + std::to_string(dst);
  };
  const auto submit_pair = [&](const char* what, std::size_t src, std::size_t dst, Bytes bytes,
                               const std::vector<TaskId>& deps) {
    const GpuId s = topology.gpu(static_cast<std::uint32_t>(src));
    const GpuId d = topology.gpu(static_cast<std::uint32_t>(dst));
    return engine.submit_transfer(engine.stream(topology.channel(s, d)),
                                  pair_label(what, src, dst), bytes, topology.route(s, d), deps);
  };

  LoweredEmbedStep lowered;
  // AlltoAll #1: route ids to their owners.
  std::vector<std::vector<std::optional<TaskId>>> request(
      ranks, std::vector<std::optional<TaskId>>(ranks));
  for (std::size_t r = 0; r < ranks; ++r) {
    for (std::size_t o = 0; o < ranks; ++o) {
      if (r == o) continue;
      request[r][o] = submit_pair("emb.ids", r, o, routed[r][o] * id_bytes, {});
      lowered.forward_ids.push_back(*request[r][o]);
    }
  }
  // AlltoAll #2: owners answer with rows; each reply waits for its request.
  std::vector<std::vector<TaskId>> replies_into(ranks);
  for (std::size_t o = 0; o < ranks; ++o) {
    for (std::size_t r = 0; r < ranks; ++r) {
      if (r == o) continue;
      std::vector<TaskId> deps;
      if (request[r][o]) deps.push_back(*request[r][o]);
      const TaskId id = submit_pair("emb.rows", o, r, routed[r][o] * row_bytes, deps);
      lowered.forward_rows.push_back(id);
      replies_into[r].push_back(id);
    }
  }
  // AlltoAll #3: gradients return to the owners after the rank has all rows.
  for (std::size_t r = 0; r < ranks; ++r) {
    for (std::size_t o = 0; o < ranks; ++o) {
      if (r == o) continue;
      lowered.backward_grads.push_back(
          submit_pair("emb.grads", r, o, routed[r][o] * row_bytes, replies_into[r]));
    }
  }
  return lowered;
}

}  // namespace moesim
