#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "moesim/types.hpp"

namespace moesim {

// Link classes of the modeled fabric. NVLINK/PCIE/SSD_IO are intra-node;
// TOR/LEAF/SPIN are the fat-tree tiers. Leaf groups are per local rank
// (one rail per GPU index), spin switches join rails.
enum class LinkClass : std::uint8_t { kNvlink = 0, kPcie, kSsdIo, kTor, kLeaf, kSpin };

inline constexpr std::size_t kLinkClassCount = 6;

const char* link_class_name(LinkClass c);
LinkClass link_class_from_name(const std::string& name);

struct LinkParams {
  Bytes bandwidth_bytes_per_sec = 0;  // > 0
  TimeNs latency_ns = 0;              // >= 0
};

struct GpuId {
  std::uint32_t cluster = 0;
  std::uint32_t node = 0;        // within the cluster
  std::uint32_t local_rank = 0;  // within the node

  friend bool operator==(const GpuId&, const GpuId&) = default;
};

// Ordered list of link-class hops; empty iff src == dst.
using Path = std::vector<LinkClass>;

class Topology {
 public:
  Topology(std::uint32_t clusters, std::uint32_t nodes_per_cluster, std::uint32_t gpus_per_node,
           const std::array<LinkParams, kLinkClassCount>& links);

  std::uint32_t clusters() const { return clusters_; }
  std::uint32_t nodes_per_cluster() const { return nodes_per_cluster_; }
  std::uint32_t gpus_per_node() const { return gpus_per_node_; }
  std::uint32_t total_nodes() const { return clusters_ * nodes_per_cluster_; }
  std::uint32_t total_gpus() const { return total_nodes() * gpus_per_node_; }

  const LinkParams& link(LinkClass c) const { return links_[static_cast<std::size_t>(c)]; }

  // Global rank <-> (cluster, node, local_rank); ranks enumerate GPUs
  // node-major, local rank fastest.
  std::uint32_t global_rank(const GpuId& id) const;
  GpuId gpu(std::uint32_t global_rank) const;

  bool valid(const GpuId& id) const;

  // Same GPU -> empty. Same node -> [NVLINK]. Different node, same local
  // rank -> [TOR, LEAF, TOR] (stays on the rail). Different node and local
  // rank -> [TOR, LEAF, SPIN, LEAF, TOR] (crosses rails over a spin switch).
  Path route(const GpuId& src, const GpuId& dst) const;

  // Latencies add along the path; bytes stream at the bottleneck bandwidth.
  // Empty path -> 0.
  TimeNs transfer_time(const Path& path, Bytes bytes) const;

  // Serialization domain for contention modeling: transfers sharing a
  // channel are serialized by the event engine. Intra-node traffic shares
  // the node's NVLink fabric, same-rail inter-node traffic shares the rail,
  // cross-rail traffic shares the spin tier.
  std::string channel(const GpuId& src, const GpuId& dst) const;

  // Intra-node device channels used by the offload/prefetch schedules.
  std::string pcie_channel(const GpuId& gpu) const;
  std::string ssd_channel(const GpuId& gpu) const;

 private:
  std::uint32_t clusters_;
  std::uint32_t nodes_per_cluster_;
  std::uint32_t gpus_per_node_;
  std::array<LinkParams, kLinkClassCount> links_;
};

}  // namespace moesim
