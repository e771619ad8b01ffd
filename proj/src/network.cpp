#include "destripe/network.hpp"

#include "destripe/error.hpp"
#include "destripe/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace destripe {

namespace {

double& at(ParamSpan p, Index offset) { return p[std::size_t(offset)]; }
double at(ConstParamSpan p, Index offset) { return p[std::size_t(offset)]; }

Complex crelu(Complex z) { return {std::max(z.real(), 0.0), std::max(z.imag(), 0.0)}; }

Complex crelu_gate(Complex pre, Complex g) {
  return {pre.real() > 0 ? g.real() : 0.0, pre.imag() > 0 ? g.imag() : 0.0};
}

// dL/dW += conj(x)^T g and dL/dx += g W^H for one row.
void linear_backward(const ComplexLinear& lin, ConstParamSpan params, const Complex* x,
                     const Complex* g, ParamSpan grad, Complex* gx) {
  for (Index a = 0; a < lin.in; ++a) {
    const Complex xc = std::conj(x[a]);
    Complex acc = 0.0;
    for (Index b = 0; b < lin.out; ++b) {
      const Complex gw = xc * g[b];
      at(grad, lin.re_offset + a * lin.out + b) += gw.real();
      at(grad, lin.im_offset + a * lin.out + b) += gw.imag();
      acc += g[b] * std::conj(lin.weight(params, a, b));
    }
    gx[a] += acc;
  }
}

void fill_features(const FAttLayer& layer, const GraphNode& node, const Complex* h, double* f) {
  for (Index c = 0; c < layer.width; ++c) {
    f[c] = h[c].real();
    f[layer.width + c] = h[c].imag();
  }
  f[2 * layer.width] = node.rho_norm;
  f[2 * layer.width + 1] = node.cos_theta;
  f[2 * layer.width + 2] = node.sin_theta;
}

void check_input(const SpectralGraph& graph, const NodeMatrix& input, Index width, const char* what) {
  if (input.rows() != graph.node_count() || input.cols() != width) {
    throw ValidationError(std::string(what) + ": input is " + std::to_string(input.rows()) + "x" +
                          std::to_string(input.cols()) + ", expected " +
                          std::to_string(graph.node_count()) + "x" + std::to_string(width));
  }
}

bool all_finite(const NodeMatrix& m) {
  return m.real().allFinite() && m.imag().allFinite();
}

}  // namespace

// ---------------------------------------------------------------- layout

Index ParameterLayout::add(std::string name, Index rows, Index cols) {
  const Index offset = size_;
  blocks_.push_back({std::move(name), offset, rows, cols});
  size_ += rows * cols;
  return offset;
}

bool ParameterLayout::operator==(const ParameterLayout& other) const {
  if (size_ != other.size_ || blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t n = 0; n < blocks_.size(); ++n) {
    const auto& a = blocks_[n];
    const auto& b = other.blocks_[n];
    if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) {
      return false;
    }
  }
  return true;
}

ComplexLinear ComplexLinear::add(ParameterLayout& layout, const std::string& name, Index in,
                                 Index out) {
  ComplexLinear lin;
  lin.in = in;
  lin.out = out;
  lin.re_offset = layout.add(name + ".re", in, out);
  lin.im_offset = layout.add(name + ".im", in, out);
  return lin;
}

void ComplexLinear::apply(ConstParamSpan params, const Complex* x, Complex* y) const {
  for (Index b = 0; b < out; ++b) y[b] = 0.0;
  for (Index a = 0; a < in; ++a) {
    const double xr = x[a].real(), xi = x[a].imag();
    const double* wr = params.data() + re_offset + a * out;
    const double* wi = params.data() + im_offset + a * out;
    for (Index b = 0; b < out; ++b) {
      y[b] += Complex(xr * wr[b] - xi * wi[b], xr * wi[b] + xi * wr[b]);
    }
  }
}

DestripeNetwork DestripeNetwork::create(ParameterLayout& layout, const std::string& prefix,
                                        Index input_width, int layers_L,
                                        const std::vector<int>& hidden_dims) {
  if (layers_L < 1) throw ValidationError("network needs at least one layer");
  if (static_cast<int>(hidden_dims.size()) < layers_L - 1) {
    throw ValidationError("hidden_dims needs layers_L - 1 entries");
  }
  std::vector<Index> widths = {input_width};
  for (int l = 0; l + 1 < layers_L; ++l) widths.push_back(hidden_dims[std::size_t(l)]);
  widths.push_back(1);

  DestripeNetwork net;
  net.input_width = input_width;
  for (int l = 0; l < layers_L; ++l) {
    const std::string name = prefix + "fgnn" + std::to_string(l);
    FGNNLayer fgnn;
    fgnn.w1 = ComplexLinear::add(layout, name + ".w1", widths[l], widths[l + 1]);
    fgnn.w2 = ComplexLinear::add(layout, name + ".w2", widths[l], widths[l + 1]);
    fgnn.activation = l + 1 < layers_L;
    net.layers.emplace_back(fgnn);
    if (l + 1 < layers_L) {
      const std::string att = prefix + "fatt" + std::to_string(l);
      FAttLayer fatt;
      fatt.width = widths[l + 1];
      fatt.key_dim = widths[l + 1];
      fatt.query_offset = layout.add(att + ".query", fatt.feature_dim(), fatt.key_dim);
      fatt.key_offset = layout.add(att + ".key", fatt.feature_dim(), fatt.key_dim);
      fatt.value = ComplexLinear::add(layout, att + ".value", fatt.width, fatt.width);
      net.layers.emplace_back(fatt);
    }
  }
  return net;
}

int DestripeNetwork::fgnn_count() const {
  int n = 0;
  for (const auto& layer : layers) n += std::holds_alternative<FGNNLayer>(layer);
  return n;
}

void initialize_network(const DestripeNetwork& net, ParamSpan params, std::uint64_t seed,
                        bool zero_final_layer) {
  std::mt19937_64 rng(seed);
  auto fill = [&](Index offset, Index count, Index fan_in, bool zero) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index n = 0; n < count; ++n) at(params, offset + n) = zero ? 0.0 : dist(rng);
  };
  auto fill_linear = [&](const ComplexLinear& lin, bool zero) {
    fill(lin.re_offset, lin.in * lin.out, lin.in, zero);
    fill(lin.im_offset, lin.in * lin.out, lin.in, zero);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const bool last = l + 1 == net.layers.size();
    if (const auto* fgnn = std::get_if<FGNNLayer>(&net.layers[l])) {
      fill_linear(fgnn->w1, last && zero_final_layer);
      fill_linear(fgnn->w2, last && zero_final_layer);
    } else {
      const auto& fatt = std::get<FAttLayer>(net.layers[l]);
      fill(fatt.query_offset, fatt.feature_dim() * fatt.key_dim, fatt.feature_dim(), false);
      fill(fatt.key_offset, fatt.feature_dim() * fatt.key_dim, fatt.feature_dim(), false);
      fill_linear(fatt.value, false);
    }
  }
}

// ---------------------------------------------------------------- FGNN

NodeMatrix fgnn_forward(const FGNNLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                        const NodeMatrix& input, LayerCache* cache) {
  check_input(graph, input, layer.w1.in, "fgnn_forward");
  const Index n = graph.node_count();
  const Index width = layer.w1.out;
  NodeMatrix projected(n, width), pre(n, width);
  parallel_for(n, [&](Index p) { layer.w1.apply(params, &input(p, 0), &projected(p, 0)); });
  parallel_for(n, [&](Index p) {
    const GraphNode& node = graph.nodes[std::size_t(p)];
    if (graph.is_frontier(p)) {
      if (node.corrupted) throw ValidationError("corrupted node without neighbors");
      pre.row(p) = projected.row(p);
      return;
    }
    const auto nb = graph.neighbors(p);
    const auto w = graph.weights(p);
    double total = 0.0;
    Eigen::RowVectorXcd agg = Eigen::RowVectorXcd::Zero(width);
    for (std::size_t e = 0; e < nb.size(); ++e) {
      total += w[e];
      agg += w[e] * projected.row(nb[e]);
    }
    if (!(total > 0)) throw NumericalError("zero total edge weight at node " + std::to_string(p));
    agg /= total;
    if (node.corrupted) {
      Eigen::RowVectorXcd own(width);
      layer.w2.apply(params, &input(p, 0), own.data());
      pre.row(p) = own - agg;
    } else {
      pre.row(p) = 0.5 * (projected.row(p) + agg);
    }
  });
  NodeMatrix out = layer.activation ? NodeMatrix(pre.unaryExpr(&crelu)) : pre;
  if (cache) {
    cache->input = input;
    cache->pre = std::move(pre);
    cache->projected = std::move(projected);
  }
  return out;
}

NodeMatrix fgnn_backward(const FGNNLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                         const LayerCache& cache, const NodeMatrix& upstream, ParamSpan grad) {
  const Index n = graph.node_count();
  const Index width = layer.w1.out;
  NodeMatrix g_pre = layer.activation ? NodeMatrix(cache.pre.binaryExpr(upstream, &crelu_gate))
                                      : upstream;
  NodeMatrix g_projected = NodeMatrix::Zero(n, width);
  NodeMatrix g_input = NodeMatrix::Zero(n, layer.w1.in);
  for (Index p = 0; p < n; ++p) {
    if (graph.is_frontier(p)) {
      g_projected.row(p) += g_pre.row(p);
      continue;
    }
    const auto nb = graph.neighbors(p);
    const auto w = graph.weights(p);
    double total = 0.0;
    for (double x : w) total += x;
    double share;
    if (graph.nodes[std::size_t(p)].corrupted) {
      linear_backward(layer.w2, params, &cache.input(p, 0), &g_pre(p, 0), grad, &g_input(p, 0));
      share = -1.0 / total;
    } else {
      g_projected.row(p) += 0.5 * g_pre.row(p);
      share = 0.5 / total;
    }
    for (std::size_t e = 0; e < nb.size(); ++e) {
      g_projected.row(nb[e]) += (share * w[e]) * g_pre.row(p);
    }
  }
  for (Index p = 0; p < n; ++p) {
    linear_backward(layer.w1, params, &cache.input(p, 0), &g_projected(p, 0), grad, &g_input(p, 0));
  }
  return g_input;
}

// ---------------------------------------------------------------- FAtt

NodeMatrix fatt_forward(const FAttLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                        const NodeMatrix& input, LayerCache* cache) {
  check_input(graph, input, layer.width, "fatt_forward");
  const Index n = graph.node_count();
  const Index fdim = layer.feature_dim();
  const Index d = layer.key_dim;
  Eigen::MatrixXd query(n, d), key(n, d);
  NodeMatrix values(n, layer.width);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      wq(params.data() + layer.query_offset, fdim, d), wk(params.data() + layer.key_offset, fdim, d);
  parallel_for(n, [&](Index p) {
    Eigen::RowVectorXd f(fdim);
    fill_features(layer, graph.nodes[std::size_t(p)], &input(p, 0), f.data());
    for (Index c = 0; c < d; ++c) {
      double q = 0.0, k = 0.0;
      for (Index a = 0; a < fdim; ++a) {
        q += f[a] * wq(a, c);
        k += f[a] * wk(a, c);
      }
      query(p, c) = q;
      key(p, c) = k;
    }
    layer.value.apply(params, &input(p, 0), &values(p, 0));
  });
  NodeMatrix out = input;
  std::vector<double> attention(graph.neighbor_index.size(), 0.0);
  const double scale = 1.0 / std::sqrt(double(d));
  parallel_for(n, [&](Index p) {
    if (graph.is_frontier(p)) return;
    const auto nb = graph.neighbors(p);
    double* alpha = attention.data() + graph.neighbor_offsets[std::size_t(p)];
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < nb.size(); ++e) {
      double s = 0.0;
      for (Index c = 0; c < d; ++c) s += query(p, c) * key(nb[e], c);
      alpha[e] = s * scale;
      peak = std::max(peak, alpha[e]);
    }
    double total = 0.0;
    for (std::size_t e = 0; e < nb.size(); ++e) {
      alpha[e] = std::exp(alpha[e] - peak);
      total += alpha[e];
    }
    for (std::size_t e = 0; e < nb.size(); ++e) {
      alpha[e] /= total;
      out.row(p) += alpha[e] * values.row(nb[e]);
    }
  });
  if (cache) {
    cache->input = input;
    cache->projected = std::move(values);
    cache->query = std::move(query);
    cache->key = std::move(key);
    cache->attention = std::move(attention);
  }
  return out;
}

NodeMatrix fatt_backward(const FAttLayer& layer, ConstParamSpan params, const SpectralGraph& graph,
                         const LayerCache& cache, const NodeMatrix& upstream, ParamSpan grad) {
  const Index n = graph.node_count();
  const Index fdim = layer.feature_dim();
  const Index d = layer.key_dim;
  const double scale = 1.0 / std::sqrt(double(d));
  NodeMatrix g_input = upstream;
  NodeMatrix g_values = NodeMatrix::Zero(n, layer.width);
  Eigen::MatrixXd g_query = Eigen::MatrixXd::Zero(n, d), g_key = Eigen::MatrixXd::Zero(n, d);
  std::vector<double> g_alpha;
  for (Index p = 0; p < n; ++p) {
    if (graph.is_frontier(p)) continue;
    const auto nb = graph.neighbors(p);
    const double* alpha = cache.attention.data() + graph.neighbor_offsets[std::size_t(p)];
    g_alpha.assign(nb.size(), 0.0);
    double mean = 0.0;
    for (std::size_t e = 0; e < nb.size(); ++e) {
      g_alpha[e] = (upstream.row(p).conjugate().cwiseProduct(cache.projected.row(nb[e]))).sum().real();
      mean += alpha[e] * g_alpha[e];
      g_values.row(nb[e]) += alpha[e] * upstream.row(p);
    }
    for (std::size_t e = 0; e < nb.size(); ++e) {
      const double g_score = alpha[e] * (g_alpha[e] - mean) * scale;
      g_query.row(p) += g_score * cache.key.row(nb[e]);
      g_key.row(nb[e]) += g_score * cache.query.row(p);
    }
  }
  Eigen::RowVectorXd f(fdim), g_f(fdim);
  for (Index p = 0; p < n; ++p) {
    fill_features(layer, graph.nodes[std::size_t(p)], &cache.input(p, 0), f.data());
    g_f.setZero();
    for (Index a = 0; a < fdim; ++a) {
      for (Index c = 0; c < d; ++c) {
        at(grad, layer.query_offset + a * d + c) += f[a] * g_query(p, c);
        at(grad, layer.key_offset + a * d + c) += f[a] * g_key(p, c);
        g_f[a] += g_query(p, c) * at(params, layer.query_offset + a * d + c) +
                  g_key(p, c) * at(params, layer.key_offset + a * d + c);
      }
    }
    for (Index c = 0; c < layer.width; ++c) g_input(p, c) += Complex(g_f[c], g_f[layer.width + c]);
    linear_backward(layer.value, params, &cache.input(p, 0), &g_values(p, 0), grad, &g_input(p, 0));
  }
  return g_input;
}

// ---------------------------------------------------------------- network

NetworkTape network_forward(const DestripeNetwork& net, ConstParamSpan params,
                            const SpectralGraph& graph, const NodeMatrix& input) {
  if (graph.node_count() == 0) throw ValidationError("network_forward on an empty graph");
  NetworkTape tape;
  tape.layers.resize(net.layers.size());
  NodeMatrix h = input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (const auto* fgnn = std::get_if<FGNNLayer>(&net.layers[l])) {
      h = fgnn_forward(*fgnn, params, graph, h, &tape.layers[l]);
    } else {
      h = fatt_forward(std::get<FAttLayer>(net.layers[l]), params, graph, h, &tape.layers[l]);
    }
  }
  tape.output = std::move(h);
  return tape;
}

std::vector<Complex> stripe_activation(const SpectralGraph& graph, const NetworkTape& tape) {
  std::vector<Complex> act;
  act.reserve(graph.corrupted_nodes.size());
  for (Index p : graph.corrupted_nodes) act.push_back(tape.output(p, 0));
  return act;
}

NodeMatrix network_gradients(const DestripeNetwork& net, ConstParamSpan params,
                             const SpectralGraph& graph, const NetworkTape& tape,
                             const std::vector<Complex>& upstream, ParamSpan grad) {
  if (upstream.size() != graph.corrupted_nodes.size()) {
    throw ValidationError("upstream gradient must cover every corrupted node");
  }
  NodeMatrix g = NodeMatrix::Zero(graph.node_count(), 1);
  for (std::size_t n = 0; n < upstream.size(); ++n) g(graph.corrupted_nodes[n], 0) = upstream[n];
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const char* kind;
    if (const auto* fgnn = std::get_if<FGNNLayer>(&net.layers[l])) {
      g = fgnn_backward(*fgnn, params, graph, tape.layers[l], g, grad);
      kind = "fgnn";
    } else {
      g = fatt_backward(std::get<FAttLayer>(net.layers[l]), params, graph, tape.layers[l], g, grad);
      kind = "fatt";
    }
    if (!all_finite(g)) {
      throw NumericalError(std::string("non-finite gradient in layer ") + std::to_string(l) +
                           " (" + kind + ")");
    }
  }
  return g;
}

// ---------------------------------------------------------------- recovery

namespace {

// Bins of corrupted nodes plus their mirrors; closed under the mirror map.
std::vector<Index> touched_bins(const SpectralGraph& graph, const AnnulusIndex& annuli) {
  const Index plane = annuli.slice_size();
  std::vector<Index> bins;
  for (Index p : graph.corrupted_nodes) {
    const Index bin = graph.nodes[std::size_t(p)].bin;
    bins.push_back(bin);
    bins.push_back((bin / plane) * plane + annuli.mirror(bin % plane));
  }
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
  return bins;
}

Index mirror_bin(const AnnulusIndex& annuli, Index bin) {
  const Index plane = annuli.slice_size();
  return (bin / plane) * plane + annuli.mirror(bin % plane);
}

}  // namespace

SpectralVolume stripe_subtract(const SpectralVolume& spectrum, const SpectralGraph& graph,
                               const AnnulusIndex& annuli, const std::vector<Complex>& activation) {
  if (activation.size() != graph.corrupted_nodes.size()) {
    throw ValidationError("activation must cover every corrupted node");
  }
  ComplexGrid residual = spectrum.coeffs;
  for (std::size_t n = 0; n < activation.size(); ++n) {
    residual[graph.nodes[std::size_t(graph.corrupted_nodes[n])].bin] -= activation[n];
  }
  SpectralVolume out = spectrum;
  for (Index bin : touched_bins(graph, annuli)) {
    out.coeffs[bin] = 0.5 * (residual[bin] + std::conj(residual[mirror_bin(annuli, bin)]));
  }
  return out;
}

std::vector<Complex> stripe_subtract_backward(const SpectralGraph& graph,
                                              const AnnulusIndex& annuli,
                                              const ComplexGrid& upstream) {
  std::vector<Complex> g(graph.corrupted_nodes.size());
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Index bin = graph.nodes[std::size_t(graph.corrupted_nodes[n])].bin;
    g[n] = -0.5 * (upstream[bin] + std::conj(upstream[mirror_bin(annuli, bin)]));
  }
  return g;
}

}  // namespace destripe
