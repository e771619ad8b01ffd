#include "destripe/training.hpp"

#include "destripe/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace destripe {

namespace {

Complex unit(Complex z) {
  const double a = std::abs(z);
  return a > 0 ? z / a : Complex(0.0);
}

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

double isotropy_penalty(const ComplexGrid& spectrum, const MaskGrid& M, const AnnulusIndex& annuli,
                        ComplexGrid* grad) {
  if (!(M.shape() == spectrum.shape())) throw ValidationError("mask and spectrum shapes differ");
  if (grad) *grad = ComplexGrid(spectrum.shape());
  const Index plane = annuli.slice_size();
  double total = 0.0;
  std::vector<Index> P, Q;
  for (Index k = 0; k < spectrum.depth(); ++k) {
    for (int r = 0; r < annuli.ring_count(); ++r) {
      P.clear();
      Q.clear();
      for (Index flat : annuli.ring_members[std::size_t(r)]) {
        const Index bin = k * plane + flat;
        (M[bin] ? P : Q).push_back(bin);
      }
      if (P.empty() || Q.empty()) continue;
      double mean = 0.0;
      for (Index q : Q) mean += std::abs(spectrum[q]);
      mean /= double(Q.size());
      double pull = 0.0;
      for (Index p : P) {
        const double d = std::abs(spectrum[p]) - mean;
        total += d * d;
        pull += 2.0 * d;
        if (grad) (*grad)[p] += 2.0 * d * unit(spectrum[p]);
      }
      if (grad) {
        for (Index q : Q) (*grad)[q] -= pull / double(Q.size()) * unit(spectrum[q]);
      }
    }
  }
  return total;
}

LossBreakdown self2self_loss(const RealGrid& X, const RealGrid& Y, const CorruptionField& field,
                             const AnnulusIndex& annuli, double beta, RealGrid* grad_X) {
  if (!same_shape(X, Y)) throw ValidationError("loss inputs have different shapes");
  LossBreakdown loss;
  loss.mse = (Y.array() - X.array()).square().sum();
  const SpectralVolume spectrum = forward_spectrum(X);
  ComplexGrid g_spec;
  loss.isotropy = isotropy_penalty(spectrum.coeffs, field.M, annuli, grad_X ? &g_spec : nullptr);
  loss.total = loss.mse + beta * loss.isotropy;
  if (grad_X) {
    g_spec.array() *= beta;
    *grad_X = forward_spectrum_adjoint(g_spec);
    grad_X->array() += 2.0 * (X.array() - Y.array());
  }
  return loss;
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               double learning_rate) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, double(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, double(state.step));
  for (std::size_t n = 0; n < params.size(); ++n) {
    state.m[n] = kAdamBeta1 * state.m[n] + (1.0 - kAdamBeta1) * grad[n];
    state.v[n] = kAdamBeta2 * state.v[n] + (1.0 - kAdamBeta2) * grad[n] * grad[n];
    params[n] -= learning_rate * (state.m[n] / c1) / (std::sqrt(state.v[n] / c2) + kAdamEpsilon);
  }
}

LossBreakdown loss_and_gradient(const DestripeProblem& problem, const UnrolledModel& model,
                                ConstParamSpan params, double beta, std::vector<double>* grad,
                                RealGrid* output) {
  UnrolledTape tape;
  RealGrid X = unfolded_forward(problem, model, params, grad ? &tape : nullptr);
  RealGrid g_X;
  const LossBreakdown loss =
      self2self_loss(X, problem.Y, problem.field, problem.annuli, beta, grad ? &g_X : nullptr);
  if (grad) {
    grad->assign(params.size(), 0.0);
    unfolded_backward(problem, model, params, tape, g_X, *grad);
  }
  if (output) *output = std::move(X);
  return loss;
}

TrainResult train(DestripeProblem& problem, const UnrolledModel& model, const RunConfig& cfg,
                  std::vector<double> initial,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (Index(initial.size()) != model.layout.size()) {
    throw ValidationError("initial parameters do not match the model layout");
  }
  TrainResult result;
  result.params = initial;
  if (problem.graph.corrupted_nodes.empty()) {
    result.output = problem.Y;
    result.best = self2self_loss(problem.Y, problem.Y, problem.field, problem.annuli,
                                 cfg.loss_beta);
    result.warnings.push_back("no corrupted bins; output equals input");
    return result;
  }
  std::vector<double> params = std::move(initial);
  std::vector<double> grad;
  AdamState adam;
  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.train_epochs; ++epoch) {
    if (cfg.resample_neighbors && epoch > 0) {
      resample_graph(problem, cfg, cfg.rng_seed + std::uint64_t(epoch));
    }
    RealGrid X;
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      rec.loss = loss_and_gradient(problem, model, params, cfg.loss_beta, &grad, &X);
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(rec.loss.total)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
    }
    if (!finite(grad)) {
      throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch));
    }
    for (int k = 0; k < model.K; ++k) {
      const IterationParams hp = model.hyperparams(params, k);
      rec.mu.push_back(hp.mu);
      rec.alpha.push_back(hp.alpha);
    }
    if (rec.loss.total < best) {
      best = rec.loss.total;
      result.params = params;
      result.output = std::move(X);
      result.best = rec.loss;
      result.best_epoch = epoch;
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    adam_step(params, grad, adam, cfg.learning_rate);
  }
  return result;
}

void write_training_log(const std::vector<EpochRecord>& log, std::ostream& out) {
  const std::size_t K = log.empty() ? 0 : log.front().mu.size();
  out << "epoch,mse,isotropy,total";
  for (std::size_t k = 0; k < K; ++k) out << ",mu_" << k;
  for (std::size_t k = 0; k < K; ++k) out << ",alpha_" << k;
  out << '\n';
  const auto old = out.precision(17);
  for (const EpochRecord& r : log) {
    out << r.epoch << ',' << r.loss.mse << ',' << r.loss.isotropy << ',' << r.loss.total;
    for (double m : r.mu) out << ',' << m;
    for (double a : r.alpha) out << ',' << a;
    out << '\n';
  }
  out.precision(old);
}

GradientCheck loss_gradient_check(const DestripeProblem& problem, const UnrolledModel& model,
                                  ConstParamSpan params, double beta, int count,
                                  std::uint64_t seed, double step) {
  GradientCheck check;
  std::vector<double> grad;
  loss_and_gradient(problem, model, params, beta, &grad);

  const auto& blocks = model.layout.blocks();
  std::mt19937_64 rng(seed);
  std::vector<Index> picks;
  for (std::size_t b = 0; b < blocks.size() && int(picks.size()) < count; ++b) {
    std::uniform_int_distribution<Index> d(0, blocks[b].rows * blocks[b].cols - 1);
    picks.push_back(blocks[b].offset + d(rng));
  }
  std::uniform_int_distribution<Index> any(0, model.layout.size() - 1);
  while (int(picks.size()) < count) picks.push_back(any(rng));

  std::vector<double> probe(params.begin(), params.end());
  for (Index idx : picks) {
    const double saved = probe[std::size_t(idx)];
    probe[std::size_t(idx)] = saved + step;
    const double up = loss_and_gradient(problem, model, probe, beta, nullptr).total;
    probe[std::size_t(idx)] = saved - step;
    const double down = loss_and_gradient(problem, model, probe, beta, nullptr).total;
    probe[std::size_t(idx)] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = grad[std::size_t(idx)];
    const double err = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    check.max_relative_error = std::max(check.max_relative_error, err);
    check.sampled.push_back(idx);
    check.analytic.push_back(analytic);
    check.numeric.push_back(numeric);
    for (const ParamBlock& b : blocks) {
      if (idx >= b.offset && idx < b.offset + b.rows * b.cols) check.block.push_back(b.name);
    }
  }
  return check;
}

}  // namespace destripe
