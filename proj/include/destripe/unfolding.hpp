#pragma once

#include "destripe/config.hpp"
#include "destripe/hessian.hpp"
#include "destripe/network.hpp"
#include "destripe/spectral.hpp"
#include "destripe/spectral_graph.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace destripe {

inline double softplus(double r) { return r > 30 ? r : std::log1p(std::exp(r)); }
inline double softplus_inverse(double y) { return y > 30 ? y : std::log(std::expm1(y)); }
inline double sigmoid(double r) { return 1.0 / (1.0 + std::exp(-r)); }

/// Everything derived from the observation once: spectrum, corruption field
/// and graph. Reused by every iteration and epoch.
struct DestripeProblem {
  RealGrid Y;
  SpectralVolume spectrum;
  AnnulusIndex annuli;
  CorruptionField field;
  SpectralGraph graph;
  HessianPrior prior;
  double stripe_angle_deg = 90.0;
  double feature_scale = 1.0;  // RMS |Y~| over corrupted nodes
  std::vector<std::string> warnings;
};

DestripeProblem prepare_problem(const RealGrid& Y, const RunConfig& cfg, double stripe_angle_deg,
                                std::uint64_t seed);

/// Rebuilds the neighbor sets of `problem` with another seed.
void resample_graph(DestripeProblem& problem, const RunConfig& cfg, std::uint64_t seed);

/// Parameter layout of the whole unrolled model: one network per iteration
/// (or one shared network) followed by the raw hyper-parameter scalars.
struct UnrolledModel {
  ParameterLayout layout;
  std::vector<DestripeNetwork> nets;  // one entry per iteration
  Index mu_offset = 0;                // K raw scalars, mu_k = softplus(raw)
  Index alpha_offset = 0;
  int K = 1;
  bool tied = false;

  static UnrolledModel create(const RunConfig& cfg);
  std::vector<double> initial_parameters(std::uint64_t seed) const;
  IterationParams hyperparams(ConstParamSpan params, int k) const;
};

inline constexpr Index kInputChannels = 2;  // Y~ and the prior feedback

struct IterationTape {
  IterationParams params;
  RealGrid centered_feedback;  // G - per-slice mean(G)
  NetworkTape net;
  RealGrid X;
  std::array<RealGrid, 6> T;  // lambda_i D_i X + B_i
};

struct UnrolledTape {
  std::vector<IterationTape> iterations;
  RealGrid output;
};

struct IterationReport {
  int k = 0;
  double mu = 0.0;
  double alpha = 0.0;
  double objective = 0.0;
  double split_residual = 0.0;
};

/// Network-parameterized data step: attributes [Y~, F~] / scale, stripe
/// activation, subtraction and inverse transform. F = mu (G - mean G) with
/// G = sum_i lambda_i D_i^T (Z_i - B_i).
RealGrid data_update(const DestripeProblem& problem, const UnrolledModel& model,
                     ConstParamSpan params, const SplitState& state, int k,
                     IterationTape* tape = nullptr);

/// X^0 = Y, Z = B = 0; K rounds of data, prior and Bregman updates. Fills
/// `tape` for `unfolded_backward` and `report` with per-iteration figures
/// when given. Throws NumericalError naming the iteration and step.
RealGrid unfolded_forward(const DestripeProblem& problem, const UnrolledModel& model,
                          ConstParamSpan params, UnrolledTape* tape = nullptr,
                          std::vector<IterationReport>* report = nullptr);

/// Accumulates d loss / d params into `grad` given d loss / d X^K.
void unfolded_backward(const DestripeProblem& problem, const UnrolledModel& model,
                       ConstParamSpan params, const UnrolledTape& tape, const RealGrid& grad_output,
                       ParamSpan grad);

nlohmann::json to_json(const IterationReport& r);

}  // namespace destripe
