#include "destripe/spectral_graph.hpp"

#include "destripe/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <ostream>

namespace destripe {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t node_key(std::uint64_t seed, Index slice, Index row, Index col) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ std::uint64_t(slice));
  h = splitmix64(h ^ std::uint64_t(row));
  return splitmix64(h ^ std::uint64_t(col));
}

std::uint64_t below(std::uint64_t random, std::uint64_t bound) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(random) * bound) >> 64);
}

class Builder {
 public:
  Builder(const SpectralVolume& spectrum, const CorruptionField& field, const AnnulusIndex& annuli,
          int neighbors_N, std::uint64_t seed)
      : spectrum_(spectrum), field_(field), annuli_(annuli), n_(neighbors_N), seed_(seed) {
    const Shape3& s = spectrum.coeffs.shape();
    if (!(field.M.shape() == s) || !(field.W.shape() == s) || s.rows != annuli.rows ||
        s.cols != annuli.cols) {
      throw ValidationError("corruption field, annuli and spectrum shapes disagree");
    }
    if (neighbors_N <= 0) throw ValidationError("neighbors_N must be positive");
    candidates_.resize(std::size_t(s.depth) * annuli.ring_count());
    for (Index k = 0; k < s.depth; ++k) {
      for (int r = 0; r < annuli.ring_count(); ++r) {
        auto& list = candidates_[std::size_t(k) * annuli.ring_count() + r];
        for (Index flat : annuli.ring_members[r]) {
          const Index bin = k * annuli.slice_size() + flat;
          if (!field.M[bin]) list.push_back(bin);
        }
      }
    }
  }

  const std::vector<Index>& candidates_of(Index bin) const {
    const Index k = bin / annuli_.slice_size();
    const Index flat = bin % annuli_.slice_size();
    const int r = annuli_.ring_id(flat / annuli_.cols, flat % annuli_.cols);
    return candidates_[std::size_t(k) * annuli_.ring_count() + r];
  }

  std::vector<Index> sample(Index bin) const {
    const Index k = bin / annuli_.slice_size();
    const Index flat = bin % annuli_.slice_size();
    return sample_neighbors(seed_, k, flat / annuli_.cols, flat % annuli_.cols,
                            candidates_of(bin), n_);
  }

  GraphNode describe(Index bin, int depth) const {
    GraphNode node;
    node.bin = bin;
    node.slice = bin / annuli_.slice_size();
    const Index flat = bin % annuli_.slice_size();
    node.row = flat / annuli_.cols;
    node.col = flat % annuli_.cols;
    node.ring = annuli_.ring_id(node.row, node.col);
    node.corrupted = field_.M[bin] != 0;
    node.depth = depth;
    const double rho = annuli_.rho(node.row, node.col);
    node.rho_norm = annuli_.rho_max > 0 ? rho / annuli_.rho_max : 0.0;
    if (rho > 0) {
      node.cos_theta = double(node.col - annuli_.center_col()) / rho;
      node.sin_theta = double(node.row - annuli_.center_row()) / rho;
    }
    return node;
  }

  // Orders nodes by bin and rewrites the adjacency in node ids.
  SpectralGraph assemble(const std::vector<std::pair<Index, int>>& bins_with_depth,
                         const std::vector<std::vector<Index>>& lists, int hops) const {
    SpectralGraph g;
    g.shape = spectrum_.coeffs.shape();
    g.hops = hops;
    g.neighbors_N = n_;
    std::vector<std::size_t> order(bins_with_depth.size());
    for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return bins_with_depth[a].first < bins_with_depth[b].first;
    });
    std::vector<Index> node_of_bin(std::size_t(g.shape.size()), -1);
    for (std::size_t n = 0; n < order.size(); ++n) {
      node_of_bin[std::size_t(bins_with_depth[order[n]].first)] = Index(n);
    }
    g.attributes.resize(Index(order.size()));
    for (std::size_t n = 0; n < order.size(); ++n) {
      const auto [bin, depth] = bins_with_depth[order[n]];
      g.nodes.push_back(describe(bin, depth));
      g.attributes[Index(n)] = spectrum_.coeffs[bin];
      if (g.nodes.back().corrupted) g.corrupted_nodes.push_back(Index(n));
      const auto& list = lists[order[n]];
      for (Index q : list) {
        g.neighbor_index.push_back(node_of_bin[std::size_t(q)]);
        g.neighbor_weight.push_back(std::max(field_.W[q], kMinEdgeWeight));
      }
      g.neighbor_offsets.push_back(Index(g.neighbor_index.size()));
      if (!list.empty() && int(list.size()) < n_) ++g.shortfall_count;
    }
    return g;
  }

  const SpectralVolume& spectrum_;
  const CorruptionField& field_;
  const AnnulusIndex& annuli_;
  int n_;
  std::uint64_t seed_;
  std::vector<std::vector<Index>> candidates_;
};

}  // namespace

std::vector<Index> sample_neighbors(std::uint64_t seed, Index slice, Index row, Index col,
                                    std::span<const Index> candidates, int count) {
  std::vector<Index> pool(candidates.begin(), candidates.end());
  if (Index(pool.size()) <= count) return pool;
  const std::uint64_t key = node_key(seed, slice, row, col);
  for (int t = 0; t < count; ++t) {
    const std::uint64_t r = splitmix64(key + 0x632be59bd9b4e019ULL * std::uint64_t(t + 1));
    const std::size_t pick = std::size_t(t) + below(r, pool.size() - std::size_t(t));
    std::swap(pool[std::size_t(t)], pool[pick]);
  }
  pool.resize(std::size_t(count));
  return pool;
}

SpectralGraph build_spectral_graph(const SpectralVolume& spectrum, const CorruptionField& field,
                                   const AnnulusIndex& annuli, int neighbors_N, int hops,
                                   std::uint64_t seed) {
  if (hops < 1) throw ValidationError("graph needs at least one hop");
  Builder b(spectrum, field, annuli, neighbors_N, seed);
  std::vector<Index> unrecoverable;
  std::vector<int> depth_of(std::size_t(spectrum.coeffs.size()), -1);
  std::vector<std::pair<Index, int>> found;
  std::deque<Index> queue;
  for (Index bin = 0; bin < field.M.size(); ++bin) {
    if (!field.M[bin]) continue;
    if (b.candidates_of(bin).empty()) {
      unrecoverable.push_back(bin);
      continue;
    }
    depth_of[std::size_t(bin)] = 0;
    queue.push_back(bin);
  }
  std::vector<std::vector<Index>> lists;
  while (!queue.empty()) {
    const Index bin = queue.front();
    queue.pop_front();
    const int d = depth_of[std::size_t(bin)];
    found.emplace_back(bin, d);
    lists.emplace_back();
    if (d >= hops) continue;
    lists.back() = b.sample(bin);
    for (Index q : lists.back()) {
      if (depth_of[std::size_t(q)] < 0) {
        depth_of[std::size_t(q)] = d + 1;
        queue.push_back(q);
      }
    }
  }
  SpectralGraph g = b.assemble(found, lists, hops);
  g.unrecoverable_bins = std::move(unrecoverable);
  return g;
}

SpectralGraph build_spectral_graph(const SpectralVolume& spectrum, const CorruptionField& field,
                                   const AnnulusIndex& annuli, const RunConfig& cfg,
                                   std::uint64_t seed) {
  return build_spectral_graph(spectrum, field, annuli, cfg.neighbors_N, receptive_hops(cfg), seed);
}

SpectralGraph build_full_graph(const SpectralVolume& spectrum, const CorruptionField& field,
                               const AnnulusIndex& annuli, int neighbors_N, std::uint64_t seed) {
  Builder b(spectrum, field, annuli, neighbors_N, seed);
  std::vector<std::pair<Index, int>> found;
  std::vector<std::vector<Index>> lists;
  std::vector<Index> unrecoverable;
  for (Index bin = 0; bin < field.M.size(); ++bin) {
    if (field.M[bin] && b.candidates_of(bin).empty()) {
      unrecoverable.push_back(bin);
      continue;
    }
    found.emplace_back(bin, field.M[bin] ? 0 : 1);
    lists.push_back(b.sample(bin));
  }
  SpectralGraph g = b.assemble(found, lists, std::numeric_limits<int>::max());
  g.unrecoverable_bins = std::move(unrecoverable);
  return g;
}

GraphStats graph_stats(const SpectralGraph& graph) {
  GraphStats s;
  s.nodes = graph.node_count();
  s.corrupted = Index(graph.corrupted_nodes.size());
  s.shortfall = graph.shortfall_count;
  s.unrecoverable = Index(graph.unrecoverable_bins.size());
  Index with_lists = 0;
  for (Index p = 0; p < graph.node_count(); ++p) {
    if (!graph.is_frontier(p)) ++with_lists;
  }
  s.mean_degree = with_lists ? double(graph.neighbor_index.size()) / double(with_lists) : 0.0;
  return s;
}

void write_graph_jsonl(const SpectralGraph& graph, std::ostream& out) {
  for (Index p = 0; p < graph.node_count(); ++p) {
    const GraphNode& n = graph.nodes[std::size_t(p)];
    const auto nb = graph.neighbors(p);
    const auto w = graph.weights(p);
    nlohmann::json line = {{"id", p},
                           {"slice", n.slice},
                           {"row", n.row},
                           {"col", n.col},
                           {"ring", n.ring},
                           {"corrupted", n.corrupted},
                           {"depth", n.depth},
                           {"re", graph.attributes[p].real()},
                           {"im", graph.attributes[p].imag()},
                           {"neighbors", std::vector<Index>(nb.begin(), nb.end())},
                           {"weights", std::vector<double>(w.begin(), w.end())}};
    out << line.dump() << '\n';
  }
}

}  // namespace destripe
