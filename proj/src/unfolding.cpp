#include "destripe/unfolding.hpp"

#include "destripe/error.hpp"

#include <sstream>

namespace destripe {

namespace {

void remove_slice_means(RealGrid& g) {
  for (Index k = 0; k < g.depth(); ++k) {
    auto s = g.slice(k);
    s -= s.mean();
  }
}

void require_finite(const RealGrid& g, int k, const char* step) {
  if (!g.array().allFinite()) {
    throw NumericalError("non-finite values in iteration " + std::to_string(k) + " (" + step +
                         ")");
  }
}

}  // namespace

DestripeProblem prepare_problem(const RealGrid& Y, const RunConfig& cfg, double stripe_angle_deg,
                                std::uint64_t seed) {
  cfg.validate();
  DestripeProblem p;
  p.Y = Y;
  p.stripe_angle_deg = stripe_angle_deg;
  p.spectrum = forward_spectrum(Y);
  p.annuli = build_annuli(Y.rows(), Y.cols(), cfg.annulus_width_px);
  p.field = corruption_mask(corruption_matrix(p.spectrum, p.annuli), p.annuli, cfg,
                            stripe_angle_deg);
  p.prior = HessianPrior::from_config(cfg, Y.shape());
  p.warnings = p.field.warnings;
  for (const auto& d : p.prior.disabled()) {
    p.warnings.push_back("direction " + d + " disabled: fewer than 3 slices");
  }
  resample_graph(p, cfg, seed);
  return p;
}

void resample_graph(DestripeProblem& p, const RunConfig& cfg, std::uint64_t seed) {
  p.graph = build_spectral_graph(p.spectrum, p.field, p.annuli, cfg, seed);
  if (!p.graph.unrecoverable_bins.empty()) {
    std::ostringstream msg;
    msg << p.graph.unrecoverable_bins.size()
        << " masked bins have no uncorrupted ring neighbor and are left unchanged";
    p.warnings.push_back(msg.str());
  }
  double sum = 0.0;
  for (Index q : p.graph.corrupted_nodes) sum += std::norm(p.graph.attributes[q]);
  const auto n = p.graph.corrupted_nodes.size();
  const double rms = n ? std::sqrt(sum / double(n)) : 0.0;
  p.feature_scale = rms > 0 ? rms : 1.0;
}

UnrolledModel UnrolledModel::create(const RunConfig& cfg) {
  cfg.validate();
  UnrolledModel m;
  m.K = cfg.unroll_K;
  m.tied = cfg.tie_weights;
  if (cfg.tie_weights) {
    const auto net =
        DestripeNetwork::create(m.layout, "net.", kInputChannels, cfg.layers_L, cfg.hidden_dims);
    m.nets.assign(std::size_t(m.K), net);
  } else {
    for (int k = 0; k < m.K; ++k) {
      m.nets.push_back(DestripeNetwork::create(m.layout, "net" + std::to_string(k) + ".",
                                               kInputChannels, cfg.layers_L, cfg.hidden_dims));
    }
  }
  m.mu_offset = m.layout.add("hyper.mu", m.K, 1);
  m.alpha_offset = m.layout.add("hyper.alpha", m.K, 1);
  return m;
}

std::vector<double> UnrolledModel::initial_parameters(std::uint64_t seed) const {
  std::vector<double> params(std::size_t(layout.size()), 0.0);
  const std::size_t distinct = tied ? 1 : nets.size();
  for (std::size_t k = 0; k < distinct; ++k) initialize_network(nets[k], params, seed + k);
  for (int k = 0; k < K; ++k) {
    params[std::size_t(mu_offset + k)] = softplus_inverse(1.0);
    params[std::size_t(alpha_offset + k)] = softplus_inverse(0.1);
  }
  return params;
}

IterationParams UnrolledModel::hyperparams(ConstParamSpan params, int k) const {
  if (k < 0 || k >= K) throw ValidationError("iteration index out of range");
  return {softplus(params[std::size_t(mu_offset + k)]),
          softplus(params[std::size_t(alpha_offset + k)])};
}

RealGrid data_update(const DestripeProblem& problem, const UnrolledModel& model,
                     ConstParamSpan params, const SplitState& state, int k, IterationTape* tape) {
  const IterationParams hp = model.hyperparams(params, k);
  RealGrid G = feedback_image(problem.prior, state);
  remove_slice_means(G);
  if (tape) {
    tape->params = hp;
    tape->centered_feedback = G;
  }
  const SpectralGraph& graph = problem.graph;
  if (graph.corrupted_nodes.empty()) return problem.Y;

  RealGrid F = G;
  F.array() *= hp.mu;
  const SpectralVolume feedback = forward_spectrum(F);
  const double s = problem.feature_scale;
  NodeMatrix input(graph.node_count(), kInputChannels);
  for (Index p = 0; p < graph.node_count(); ++p) {
    input(p, 0) = graph.attributes[p] / s;
    input(p, 1) = feedback.coeffs[graph.nodes[std::size_t(p)].bin] / s;
  }
  NetworkTape net = network_forward(model.nets[std::size_t(k)], params, graph, input);
  std::vector<Complex> act = stripe_activation(graph, net);
  for (auto& a : act) a *= s;
  RealGrid X = inverse_spectrum(stripe_subtract(problem.spectrum, graph, problem.annuli, act));
  if (tape) tape->net = std::move(net);
  return X;
}

RealGrid unfolded_forward(const DestripeProblem& problem, const UnrolledModel& model,
                          ConstParamSpan params, UnrolledTape* tape,
                          std::vector<IterationReport>* report) {
  if (Index(params.size()) != model.layout.size()) {
    throw ValidationError("parameter vector does not match the model layout");
  }
  SplitState state = SplitState::initial(problem.Y);
  if (tape) tape->iterations.assign(std::size_t(model.K), {});
  for (int k = 0; k < model.K; ++k) {
    IterationTape* it = tape ? &tape->iterations[std::size_t(k)] : nullptr;
    state.X = data_update(problem, model, params, state, k, it);
    require_finite(state.X, k, "data update");
    const IterationParams hp = model.hyperparams(params, k);
    std::array<RealGrid, 6> T;
    for (std::size_t i = 0; i < 6; ++i) {
      if (!problem.prior.active[i]) {
        T[i] = RealGrid(state.X.shape());
        continue;
      }
      T[i] = problem.prior.apply(state.X, i);
      T[i].array() += state.B[i].array();
    }
    const double t = hp.alpha / hp.mu;
    for (std::size_t i = 0; i < 6; ++i) {
      state.Z[i] = shrink(T[i], t);
      require_finite(state.Z[i], k, "prior update");
    }
    if (report) {
      report->push_back({k, hp.mu, hp.alpha,
                         hessian_objective(problem.Y, state.X, problem.prior, hp.alpha),
                         split_residual(problem.prior, state)});
    }
    for (std::size_t i = 0; i < 6; ++i) {
      state.B[i].array() = T[i].array() - state.Z[i].array();
      require_finite(state.B[i], k, "Bregman update");
    }
    state.k = k + 1;
    if (it) {
      it->X = state.X;
      it->T = std::move(T);
    }
  }
  if (tape) tape->output = state.X;
  return state.X;
}

void unfolded_backward(const DestripeProblem& problem, const UnrolledModel& model,
                       ConstParamSpan params, const UnrolledTape& tape, const RealGrid& grad_output,
                       ParamSpan grad) {
  const Shape3& shape = problem.Y.shape();
  const SpectralGraph& graph = problem.graph;
  const HessianPrior& prior = problem.prior;
  const double s = problem.feature_scale;
  RealGrid g_X = grad_output;
  std::array<RealGrid, 6> g_Z, g_B;
  for (std::size_t i = 0; i < 6; ++i) {
    g_Z[i] = RealGrid(shape);
    g_B[i] = RealGrid(shape);
  }
  for (int k = model.K - 1; k >= 0; --k) {
    const IterationTape& it = tape.iterations[std::size_t(k)];
    const double mu = it.params.mu, alpha = it.params.alpha;
    const double t = alpha / mu;
    const double raw_mu = params[std::size_t(model.mu_offset + k)];
    const double raw_alpha = params[std::size_t(model.alpha_offset + k)];
    double g_mu = 0.0, g_alpha = 0.0;

    // Z = shrink(T, t), B = T - Z, T = lambda D X + B_prev.
    std::array<RealGrid, 6> g_B_prev;
    double g_t = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      g_B_prev[i] = RealGrid(shape);
      if (!prior.active[i]) continue;
      RealGrid g_T(shape);
      for (Index n = 0; n < shape.size(); ++n) {
        const double T = it.T[i][n];
        const double diff = g_Z[i][n] - g_B[i][n];
        if (std::abs(T) > t) {
          g_T[n] = g_B[i][n] + diff;
          g_t -= diff * (T > 0 ? 1.0 : -1.0);
        } else {
          g_T[n] = g_B[i][n];
        }
      }
      g_X.array() += prior.apply_adjoint(g_T, i).array();
      g_B_prev[i] = std::move(g_T);
    }
    g_alpha += g_t / mu;
    g_mu -= g_t * alpha / (mu * mu);

    std::array<RealGrid, 6> g_Z_prev;
    for (std::size_t i = 0; i < 6; ++i) g_Z_prev[i] = RealGrid(shape);

    if (!graph.corrupted_nodes.empty()) {
      const ComplexGrid g_rec = inverse_spectrum_adjoint(g_X);
      std::vector<Complex> upstream = stripe_subtract_backward(graph, problem.annuli, g_rec);
      for (auto& u : upstream) u *= s;
      const NodeMatrix g_in = network_gradients(model.nets[std::size_t(k)], params, graph,
                                                it.net, upstream, grad);
      if (k > 0) {
        ComplexGrid g_spec(shape);
        for (Index p = 0; p < graph.node_count(); ++p) {
          g_spec[graph.nodes[std::size_t(p)].bin] += g_in(p, 1) / s;
        }
        RealGrid g_F = forward_spectrum_adjoint(g_spec);
        g_mu += dot(g_F, it.centered_feedback);
        remove_slice_means(g_F);
        g_F.array() *= mu;
        for (std::size_t i = 0; i < 6; ++i) {
          if (!prior.active[i]) continue;
          const RealGrid d = prior.apply(g_F, i);
          g_Z_prev[i] = d;
          g_B_prev[i].array() -= d.array();
        }
      }
    }
    grad[std::size_t(model.mu_offset + k)] += g_mu * sigmoid(raw_mu);
    grad[std::size_t(model.alpha_offset + k)] += g_alpha * sigmoid(raw_alpha);
    g_Z = std::move(g_Z_prev);
    g_B = std::move(g_B_prev);
    g_X = RealGrid(shape);
  }
}

nlohmann::json to_json(const IterationReport& r) {
  return {{"iteration", r.k},
          {"mu", r.mu},
          {"alpha", r.alpha},
          {"objective", r.objective},
          {"split_residual", r.split_residual}};
}

}  // namespace destripe
