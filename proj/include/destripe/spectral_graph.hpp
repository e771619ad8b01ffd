#pragma once

#include "destripe/config.hpp"
#include "destripe/spectral.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace destripe {

struct GraphNode {
  Index bin = 0;  // flat index into the spectral volume
  Index slice = 0;
  Index row = 0;
  Index col = 0;
  int ring = 0;
  bool corrupted = false;
  int depth = 0;  // hops from the nearest corrupted node
  double rho_norm = 0.0;
  double cos_theta = 1.0;
  double sin_theta = 0.0;
};

/// Polar-neighborhood graph over spectral bins.
///
/// Node p aggregates from `neighbors(p)`: uncorrupted bins of its own slice
/// and ring, weighted by their corruption-matrix value. Nodes deeper than
/// `hops` from every corrupted bin never influence a corrupted output and are
/// left out; nodes exactly at that depth keep an empty neighbor list.
struct SpectralGraph {
  Shape3 shape;
  int hops = 1;
  int neighbors_N = 0;
  std::vector<GraphNode> nodes;
  std::vector<Index> neighbor_offsets{0};
  std::vector<Index> neighbor_index;
  std::vector<double> neighbor_weight;
  Eigen::VectorXcd attributes;         // layer-0 attribute: the spectral coefficient
  std::vector<Index> corrupted_nodes;  // ascending node ids
  std::vector<Index> unrecoverable_bins;
  Index shortfall_count = 0;  // nodes that got fewer than neighbors_N neighbors

  Index node_count() const { return Index(nodes.size()); }
  std::span<const Index> neighbors(Index p) const {
    return {neighbor_index.data() + neighbor_offsets[p],
            std::size_t(neighbor_offsets[p + 1] - neighbor_offsets[p])};
  }
  std::span<const double> weights(Index p) const {
    return {neighbor_weight.data() + neighbor_offsets[p],
            std::size_t(neighbor_offsets[p + 1] - neighbor_offsets[p])};
  }
  bool is_frontier(Index p) const { return neighbor_offsets[p + 1] == neighbor_offsets[p]; }
};

/// Neighbor weights are floored here so the weighted mean never divides by 0.
inline constexpr double kMinEdgeWeight = 1e-12;

/// Message-passing depth of the default network: L graph layers plus L - 1
/// attention layers between them.
inline int receptive_hops(const RunConfig& cfg) { return 2 * cfg.layers_L - 1; }

/// Uniform sample of `count` entries without replacement, driven by a
/// counter-based stream keyed on (seed, slice, row, col). Returns all
/// candidates, in order, when there are not more than `count`.
std::vector<Index> sample_neighbors(std::uint64_t seed, Index slice, Index row, Index col,
                                    std::span<const Index> candidates, int count);

SpectralGraph build_spectral_graph(const SpectralVolume& spectrum, const CorruptionField& field,
                                   const AnnulusIndex& annuli, int neighbors_N, int hops,
                                   std::uint64_t seed);
SpectralGraph build_spectral_graph(const SpectralVolume& spectrum, const CorruptionField& field,
                                   const AnnulusIndex& annuli, const RunConfig& cfg,
                                   std::uint64_t seed);

/// Every bin of the volume as a node with its own neighbor set; reference
/// for checking the pruned graph.
SpectralGraph build_full_graph(const SpectralVolume& spectrum, const CorruptionField& field,
                               const AnnulusIndex& annuli, int neighbors_N, std::uint64_t seed);

struct GraphStats {
  Index nodes = 0;
  Index corrupted = 0;
  double mean_degree = 0.0;  // over nodes that carry a neighbor list
  Index shortfall = 0;
  Index unrecoverable = 0;
};

GraphStats graph_stats(const SpectralGraph& graph);

/// One JSON object per node and line.
void write_graph_jsonl(const SpectralGraph& graph, std::ostream& out);

}  // namespace destripe
