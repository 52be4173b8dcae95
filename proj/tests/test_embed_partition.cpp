#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "moesim/embed_partition.hpp"
#include "moesim/rng.hpp"

using namespace moesim;

namespace {

RowMatrix table_from(std::initializer_list<double> values, std::size_t hidden) {
  RowMatrix t = RowMatrix::zeros(values.size() / hidden, hidden);
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

struct RandomInstance {
  RowMatrix table;
  LookupBatch batch;
  std::vector<RowMatrix> grads;
  std::size_t ranks;
};

RandomInstance random_instance(SplitMix64& rng, std::size_t max_vocab = 64,
                               std::size_t max_ranks = 8, std::size_t max_hidden = 8) {
  RandomInstance inst;
  const std::size_t vocab = 1 + rng.next() % max_vocab;
  const std::size_t hidden = 1 + rng.next() % max_hidden;
  inst.ranks = 1 + rng.next() % max_ranks;
  inst.table = RowMatrix::zeros(vocab, hidden);
  for (double& v : inst.table.data) v = static_cast<double>(rng.next() % 1000);
  inst.batch.ids.resize(inst.ranks);
  for (auto& ids : inst.batch.ids) {
    ids.resize(rng.next() % 12);  // unequal lengths, possibly empty
    for (auto& id : ids) id = rng.next() % vocab;
  }
  for (const auto& ids : inst.batch.ids) {
    RowMatrix g = RowMatrix::zeros(ids.size(), hidden);
    for (double& v : g.data) v = static_cast<double>(rng.next() % 50);
    inst.grads.push_back(std::move(g));
  }
  return inst;
}

}  // namespace

TEST_CASE("hand-worked forward example") {
  // V=4, H=1, N=2, rows (10, 20, 30, 40)
  const RowMatrix table = table_from({10, 20, 30, 40}, 1);
  const EmbPartition partition = make_shards(table, 2);
  LookupBatch batch;
  batch.ids = {{3, 0}, {1}};
  CommCounter comms;
  const auto out = embed_forward(partition, batch, comms);
  REQUIRE(out.size() == 2);
  CHECK(out[0].at(0, 0) == 40);
  CHECK(out[0].at(1, 0) == 10);
  CHECK(out[1].at(0, 0) == 20);
  CHECK(comms.alltoall_calls == 2);
}

TEST_CASE("single rank still runs its degenerate exchanges") {
  const RowMatrix table = table_from({1, 2, 3}, 1);
  const EmbPartition partition = make_shards(table, 1);
  LookupBatch batch;
  batch.ids = {{2, 2, 0}};
  CommCounter comms;
  const auto out = embed_forward(partition, batch, comms);
  CHECK(out[0].at(0, 0) == 3);
  CHECK(out[0].at(1, 0) == 3);
  CHECK(out[0].at(2, 0) == 1);
  CHECK(comms.alltoall_calls == 2);

  std::vector<RowMatrix> grads = {RowMatrix::zeros(3, 1)};
  grads[0].at(0, 0) = 5;
  grads[0].at(1, 0) = 7;
  const auto shard_grads = embed_backward(partition, batch, grads, comms);
  CHECK(comms.alltoall_calls == 3);
  CHECK(shard_grads[0].at(2, 0) == 12);  // duplicates accumulate
}

TEST_CASE("forward and backward match the dense-table reference") {
  SplitMix64 rng(777);
  for (int rep = 0; rep < 150; ++rep) {
    RandomInstance inst = random_instance(rng);
    const EmbPartition partition = make_shards(inst.table, inst.ranks);
    CommCounter comms;

    const auto fwd = embed_forward(partition, inst.batch, comms);
    for (std::size_t r = 0; r < inst.ranks; ++r) {
      REQUIRE(fwd[r].rows == inst.batch.ids[r].size());
      for (std::size_t k = 0; k < inst.batch.ids[r].size(); ++k) {
        for (std::size_t c = 0; c < inst.table.cols; ++c) {
          CHECK(fwd[r].at(k, c) == inst.table.at(inst.batch.ids[r][k], c));
        }
      }
    }

    const auto shard_grads = embed_backward(partition, inst.batch, inst.grads, comms);
    RowMatrix expected = RowMatrix::zeros(partition.padded_vocab, inst.table.cols);
    for (std::size_t r = 0; r < inst.ranks; ++r) {
      for (std::size_t k = 0; k < inst.batch.ids[r].size(); ++k) {
        for (std::size_t c = 0; c < inst.table.cols; ++c) {
          expected.at(inst.batch.ids[r][k], c) += inst.grads[r].at(k, c);
        }
      }
    }
    for (std::size_t owner = 0; owner < inst.ranks; ++owner) {
      const EmbShard& shard = partition.shards[owner];
      for (std::size_t row = shard.row_lo; row < shard.row_hi; ++row) {
        for (std::size_t c = 0; c < inst.table.cols; ++c) {
          CHECK(shard_grads[owner].at(row - shard.row_lo, c) == expected.at(row, c));
        }
      }
    }
    CHECK(comms.alltoall_calls == 3);
  }
}

TEST_CASE("gradient totals are conserved") {
  SplitMix64 rng(901);
  for (int rep = 0; rep < 30; ++rep) {
    RandomInstance inst = random_instance(rng);
    const EmbPartition partition = make_shards(inst.table, inst.ranks);
    CommCounter comms;
    const auto shard_grads = embed_backward(partition, inst.batch, inst.grads, comms);

    double sent = 0;
    for (const RowMatrix& g : inst.grads) {
      sent += std::accumulate(g.data.begin(), g.data.end(), 0.0);
    }
    double received = 0;
    for (const RowMatrix& g : shard_grads) {
      received += std::accumulate(g.data.begin(), g.data.end(), 0.0);
    }
    CHECK(sent == received);
  }
}

TEST_CASE("all-zero gradients stay zero") {
  const RowMatrix table = table_from({1, 2, 3, 4}, 1);
  const EmbPartition partition = make_shards(table, 2);
  LookupBatch batch;
  batch.ids = {{0, 3}, {2}};
  std::vector<RowMatrix> grads = {RowMatrix::zeros(2, 1), RowMatrix::zeros(1, 1)};
  CommCounter comms;
  for (const RowMatrix& g : embed_backward(partition, batch, grads, comms)) {
    for (const double v : g.data) CHECK(v == 0.0);
  }
}

TEST_CASE("padding keeps shards even and unaddressed") {
  const RowMatrix table = table_from({1, 2, 3, 4, 5}, 1);  // V=5
  const EmbPartition partition = make_shards(table, 2);
  CHECK(partition.padded_vocab == 6);
  CHECK(partition.rows_per_shard() == 3);
  CHECK(partition.shards[1].weights.at(2, 0) == 0.0);  // the padding row
  CHECK(shard_storage_bytes(partition) * 2 == baseline_storage_bytes(partition));

  LookupBatch bad;
  bad.ids = {{5}, {}};
  CommCounter comms;
  CHECK_THROWS_AS(embed_forward(partition, bad, comms), std::out_of_range);
}

TEST_CASE("output rows follow input order regardless of owners") {
  const RowMatrix table = table_from({0, 10, 20, 30, 40, 50, 60, 70}, 1);
  const EmbPartition partition = make_shards(table, 4);
  LookupBatch batch;
  batch.ids = {{7, 0, 5, 2, 2}, {6, 6, 1}, {}, {}};
  CommCounter comms;
  const auto out = embed_forward(partition, batch, comms);
  const std::vector<double> rank0 = {70, 0, 50, 20, 20};
  for (std::size_t k = 0; k < rank0.size(); ++k) CHECK(out[0].at(k, 0) == rank0[k]);
  const std::vector<double> rank1 = {60, 60, 10};
  for (std::size_t k = 0; k < rank1.size(); ++k) CHECK(out[1].at(k, 0) == rank1[k]);
}

TEST_CASE("timing lowering issues three exchanges with chained waits") {
  std::array<LinkParams, kLinkClassCount> links;
  links.fill(LinkParams{1000, 1});
  const Topology topo(1, 2, 2, links);

  const RowMatrix table = table_from({1, 2, 3, 4, 5, 6, 7, 8}, 2);  // V=4, H=2
  const EmbPartition partition = make_shards(table, 4);
  LookupBatch batch;
  batch.ids = {{3, 0}, {1}, {2, 2}, {}};

  SimEngine engine(&topo);
  const LoweredEmbedStep lowered = lower_embed_step(engine, topo, partition, batch, 4, 8);
  const std::size_t pairs = 4 * 3;
  CHECK(lowered.forward_ids.size() == pairs);
  CHECK(lowered.forward_rows.size() == pairs);
  CHECK(lowered.backward_grads.size() == pairs);

  const Timeline tl = engine.run();
  const auto by_label = [&](const std::string& label) -> const TaskRecord& {
    for (const TaskRecord& t : tl.tasks) {
      if (t.label == label) return t;
    }
    REQUIRE_MESSAGE(false, "missing task: " << label);
    return tl.tasks.front();
  };
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t o = 0; o < 4; ++o) {
      if (r == o) continue;
      const std::string pair = std::to_string(r) + "->" + std::to_string(o);
      const std::string rev = std::to_string(o) + "->" + std::to_string(r);
      // a reply never starts before the id routing that requested it
      CHECK(by_label("emb.rows " + rev).start >= by_label("emb.ids " + pair).end);
      // gradients leave r only after every reply into r arrived
      CHECK(by_label("emb.grads " + pair).start >= by_label("emb.rows " + rev).end);
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  const RowMatrix table = table_from({1, 2, 3, 4}, 1);
  const EmbPartition partition = make_shards(table, 2);
  LookupBatch batch;
  batch.ids = {{0}, {1}};
  std::vector<RowMatrix> grads = {RowMatrix::zeros(2, 1), RowMatrix::zeros(1, 1)};  // wrong rows
  CommCounter comms;
  CHECK_THROWS_AS(embed_backward(partition, batch, grads, comms), std::invalid_argument);
}
