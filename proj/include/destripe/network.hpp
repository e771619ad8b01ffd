#pragma once

#include "destripe/config.hpp"
#include "destripe/spectral.hpp"
#include "destripe/spectral_graph.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace destripe {

/// Per-node complex activations, one row per graph node.
using NodeMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ParamSpan = std::span<double>;
using ConstParamSpan = std::span<const double>;

struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
};

/// Named row-major blocks packed into one flat parameter vector in
/// registration order.
class ParameterLayout {
 public:
  Index add(std::string name, Index rows, Index cols);
  Index size() const { return size_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  bool operator==(const ParameterLayout& other) const;

 private:
  std::vector<ParamBlock> blocks_;
  Index size_ = 0;
};

/// x * W for complex row vectors x, with W = W_re + i W_im kept as two real
/// (in x out) blocks.
struct ComplexLinear {
  Index in = 0;
  Index out = 0;
  Index re_offset = 0;
  Index im_offset = 0;

  static ComplexLinear add(ParameterLayout& layout, const std::string& name, Index in, Index out);
  Complex weight(ConstParamSpan params, Index a, Index b) const {
    return {params[std::size_t(re_offset + a * out + b)], params[std::size_t(im_offset + a * out + b)]};
  }
  /// y = x W for one row.
  void apply(ConstParamSpan params, const Complex* x, Complex* y) const;
};

/// Two-branch graph layer: uncorrupted nodes average their projection with
/// the weighted neighbor mean, corrupted nodes subtract it from a separate
/// projection of themselves.
struct FGNNLayer {
  ComplexLinear w1;  // sample (uncorrupted) projection
  ComplexLinear w2;  // corrupted projection
  bool activation = true;
};

/// Single-head dot-product attention over each node's neighbor set with a
/// residual connection. Queries and keys see [Re h, Im h, rho/rho_max,
/// cos theta, sin theta]; values are a complex projection of h.
struct FAttLayer {
  Index width = 0;
  Index key_dim = 0;
  Index query_offset = 0;  // (feature_dim x key_dim)
  Index key_offset = 0;
  ComplexLinear value;

  Index feature_dim() const { return 2 * width + 3; }
};

using NetworkLayer = std::variant<FGNNLayer, FAttLayer>;

/// Alternating FGNN / FAtt stack ending in an FGNN layer of width 1.
struct DestripeNetwork {
  Index input_width = 1;
  std::vector<NetworkLayer> layers;

  /// Registers every block under `prefix` in `layout`. Widths are
  /// input_width, hidden_dims[0 .. L-2], 1.
  static DestripeNetwork create(ParameterLayout& layout, const std::string& prefix,
                                Index input_width, int layers_L, const std::vector<int>& hidden_dims);
  int fgnn_count() const;
};

/// Uniform(+-1/sqrt(fan_in)) entries; the final FGNN layer starts at zero so
/// the untrained network predicts no stripe component.
void initialize_network(const DestripeNetwork& net, ParamSpan params, std::uint64_t seed,
                        bool zero_final_layer = true);

struct LayerCache {
  NodeMatrix input;
  NodeMatrix pre;        // FGNN: value before activation
  NodeMatrix projected;  // FGNN: input * W1; FAtt: values
  Eigen::MatrixXd query;
  Eigen::MatrixXd key;
  std::vector<double> attention;  // per edge, aligned with neighbor_index
};

struct NetworkTape {
  std::vector<LayerCache> layers;
  NodeMatrix output;
};

NodeMatrix fgnn_forward(const FGNNLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                        const NodeMatrix& input, LayerCache* cache = nullptr);
NodeMatrix fatt_forward(const FAttLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                        const NodeMatrix& input, LayerCache* cache = nullptr);

/// Accumulates into `grad` and returns the gradient with respect to the
/// layer input. Complex gradients use d/dRe + i d/dIm.
NodeMatrix fgnn_backward(const FGNNLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                         const LayerCache& cache, const NodeMatrix& upstream, ParamSpan grad);
NodeMatrix fatt_backward(const FAttLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                         const LayerCache& cache, const NodeMatrix& upstream, ParamSpan grad);

NetworkTape network_forward(const DestripeNetwork& net, ConstParamSpan params,
                            const SpectralGraph& graph, const NodeMatrix& input);

/// Output restricted to corrupted nodes, in `graph.corrupted_nodes` order.
std::vector<Complex> stripe_activation(const SpectralGraph& graph, const NetworkTape& tape);

/// Backpropagates `upstream` (one complex value per corrupted node) through
/// the recorded forward pass. Returns the gradient on the input features.
/// Throws NumericalError naming the layer on a non-finite gradient.
NodeMatrix network_gradients(const DestripeNetwork& net, ConstParamSpan params,
                             const SpectralGraph& graph, const NetworkTape& tape,
                             const std::vector<Complex>& upstream, ParamSpan grad);

/// Subtracts the activation at corrupted bins and re-symmetrizes each touched
/// bin with its conjugate mirror so the inverse transform stays real.
SpectralVolume stripe_subtract(const SpectralVolume& spectrum, const SpectralGraph& graph,
                               const AnnulusIndex& annuli, const std::vector<Complex>& activation);

/// Gradient on the activation given the gradient on the recovered spectrum.
std::vector<Complex> stripe_subtract_backward(const SpectralGraph& graph,
                                              const AnnulusIndex& annuli,
                                              const ComplexGrid& upstream);

}  // namespace destripe
