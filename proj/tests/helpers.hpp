#pragma once

#include "destripe/grid.hpp"
#include "destripe/spectral_graph.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace destripe::testing {

inline RealGrid random_grid(const Shape3& shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  RealGrid g(shape);
  for (Index n = 0; n < g.size(); ++n) g[n] = d(rng);
  return g;
}

inline double relative_l2(const RealGrid& a, const RealGrid& b) {
  return (a.array() - b.array()).matrix().norm() / b.array().matrix().norm();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("destripe_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Hand-built graph: nodes with explicit adjacency, all in one ring.
struct GraphBuilder {
  SpectralGraph g;

  Index add(Complex attribute, bool corrupted, double rho = 0.5, double angle = 0.0) {
    GraphNode n;
    n.bin = Index(g.nodes.size());
    n.corrupted = corrupted;
    n.rho_norm = rho;
    n.cos_theta = std::cos(angle);
    n.sin_theta = std::sin(angle);
    g.nodes.push_back(n);
    pending.emplace_back();
    attributes.push_back(attribute);
    if (corrupted) g.corrupted_nodes.push_back(n.bin);
    return n.bin;
  }
  void link(Index p, Index q, double w) { pending[std::size_t(p)].push_back({q, w}); }

  SpectralGraph build() {
    g.neighbor_offsets = {0};
    g.neighbor_index.clear();
    g.neighbor_weight.clear();
    for (const auto& list : pending) {
      for (const auto& [q, w] : list) {
        g.neighbor_index.push_back(q);
        g.neighbor_weight.push_back(w);
      }
      g.neighbor_offsets.push_back(Index(g.neighbor_index.size()));
    }
    g.attributes.resize(Index(attributes.size()));
    for (std::size_t n = 0; n < attributes.size(); ++n) g.attributes[Index(n)] = attributes[n];
    g.shape = {1, 1, Index(attributes.size())};
    return g;
  }

  std::vector<std::vector<std::pair<Index, double>>> pending;
  std::vector<Complex> attributes;
};

}  // namespace destripe::testing
