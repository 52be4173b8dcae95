#include "moesim/topology.hpp"

#include <algorithm>
#include <limits>

namespace moesim {

namespace {
constexpr std::array<const char*, kLinkClassCount> kNames = {"nvlink", "pcie", "ssd_io",
                                                             "tor",    "leaf", "spin"};
}

const char* link_class_name(LinkClass c) { return kNames[static_cast<std::size_t>(c)]; }

LinkClass link_class_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (name == kNames[i]) return static_cast<LinkClass>(i);
  }
  throw ConfigError("topology.links: unknown link class '" + name + "'");
}

Topology::Topology(std::uint32_t clusters, std::uint32_t nodes_per_cluster,
                   std::uint32_t gpus_per_node,
                   const std::array<LinkParams, kLinkClassCount>& links)
    : clusters_(clusters),
      nodes_per_cluster_(nodes_per_cluster),
      gpus_per_node_(gpus_per_node),
      links_(links) {
  if (clusters_ == 0) throw ConfigError("topology.clusters: must be >= 1");
  if (nodes_per_cluster_ == 0) throw ConfigError("topology.nodes_per_cluster: must be >= 1");
  if (gpus_per_node_ == 0) throw ConfigError("topology.gpus_per_node: must be >= 1");
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (links_[i].bandwidth_bytes_per_sec == 0) {
      throw ConfigError(std::string("topology.links.") + kNames[i] +
                        ".bandwidth_bytes_per_sec: must be > 0");
    }
    if (links_[i].latency_ns < 0) {
      throw ConfigError(std::string("topology.links.") + kNames[i] + ".latency_ns: must be >= 0");
    }
  }
}

std::uint32_t Topology::global_rank(const GpuId& id) const {
  return (id.cluster * nodes_per_cluster_ + id.node) * gpus_per_node_ + id.local_rank;
}

GpuId Topology::gpu(std::uint32_t global_rank) const {
  if (global_rank >= total_gpus()) throw std::out_of_range("topology: global rank out of range");
  GpuId id;
  id.local_rank = global_rank % gpus_per_node_;
  const std::uint32_t node_index = global_rank / gpus_per_node_;
  id.node = node_index % nodes_per_cluster_;
  id.cluster = node_index / nodes_per_cluster_;
  return id;
}

bool Topology::valid(const GpuId& id) const {
  return id.cluster < clusters_ && id.node < nodes_per_cluster_ && id.local_rank < gpus_per_node_;
}

Path Topology::route(const GpuId& src, const GpuId& dst) const {
  if (!valid(src)) throw std::out_of_range("topology.route: invalid src GPU id");
  if (!valid(dst)) throw std::out_of_range("topology.route: invalid dst GPU id");
  if (src == dst) return {};
  const bool same_node = src.cluster == dst.cluster && src.node == dst.node;
  if (same_node) return {LinkClass::kNvlink};
  if (src.local_rank == dst.local_rank) {
    return {LinkClass::kTor, LinkClass::kLeaf, LinkClass::kTor};
  }
  return {LinkClass::kTor, LinkClass::kLeaf, LinkClass::kSpin, LinkClass::kLeaf, LinkClass::kTor};
}

TimeNs Topology::transfer_time(const Path& path, Bytes bytes) const {
  if (path.empty()) return 0;
  TimeNs latency = 0;
  Bytes min_bw = std::numeric_limits<Bytes>::max();
  for (const LinkClass hop : path) {
    latency += link(hop).latency_ns;
    min_bw = std::min(min_bw, link(hop).bandwidth_bytes_per_sec);
  }
  const auto stream_ns = ceil_div_u128(static_cast<unsigned __int128>(bytes) * 1'000'000'000u,
                                       static_cast<unsigned __int128>(min_bw));
  return latency + static_cast<TimeNs>(stream_ns);
}

std::string Topology::channel(const GpuId& src, const GpuId& dst) const {
  if (src == dst) return {};
  const bool same_node = src.cluster == dst.cluster && src.node == dst.node;
  if (same_node) {
    return "nvlink/c" + std::to_string(src.cluster) + "n" + std::to_string(src.node);
  }
  if (src.local_rank == dst.local_rank) {
    return "rail/" + std::to_string(src.local_rank);
  }
  return "spin";
}

std::string Topology::pcie_channel(const GpuId& gpu) const {
  return "pcie/c" + std::to_string(gpu.cluster) + "n" + std::to_string(gpu.node);
}

std::string Topology::ssd_channel(const GpuId& gpu) const {
  return "ssd/c" + std::to_string(gpu.cluster) + "n" + std::to_string(gpu.node);
}

}  // namespace moesim
