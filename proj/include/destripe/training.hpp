#pragma once

#include "destripe/unfolding.hpp"

#include <functional>
#include <iosfwd>
#include <vector>

namespace destripe {

struct LossBreakdown {
  double mse = 0.0;
  double isotropy = 0.0;
  double total = 0.0;
};

/// Sum over masked bins P of each (slice, ring) of (|x~| - mean over the
/// unmasked bins Q of |x~|)^2. Rings with empty P or Q add nothing. `grad`
/// receives d/dRe + i d/dIm per coefficient when given.
double isotropy_penalty(const ComplexGrid& spectrum, const MaskGrid& M, const AnnulusIndex& annuli,
                        ComplexGrid* grad = nullptr);

/// mse = sum (Y - X)^2, isotropy on the spectrum of X, total = mse + beta *
/// isotropy. `grad_X` receives d total / d X when given.
LossBreakdown self2self_loss(const RealGrid& X, const RealGrid& Y, const CorruptionField& field,
                             const AnnulusIndex& annuli, double beta, RealGrid* grad_X = nullptr);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               double learning_rate);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  std::vector<double> mu;
  std::vector<double> alpha;
};

struct TrainResult {
  std::vector<double> params;  // best recorded total loss
  RealGrid output;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  LossBreakdown best;
  std::vector<std::string> warnings;
};

/// Adam over the whole-volume loss for cfg.train_epochs epochs, starting
/// from `initial`. Each log entry is the loss of the parameters before that
/// epoch's step. Throws NumericalError on a non-finite loss or gradient.
TrainResult train(DestripeProblem& problem, const UnrolledModel& model, const RunConfig& cfg,
                  std::vector<double> initial,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Loss and its gradient for one parameter vector.
LossBreakdown loss_and_gradient(const DestripeProblem& problem, const UnrolledModel& model,
                                ConstParamSpan params, double beta, std::vector<double>* grad,
                                RealGrid* output = nullptr);

void write_training_log(const std::vector<EpochRecord>& log, std::ostream& out);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::vector<Index> sampled;
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<std::string> block;  // block name of each sampled parameter
};

/// Central differences with `step` on `count` parameters, at least one from
/// every block when count allows. Relative error is |a - n| / max(|a|, |n|,
/// 1e-8).
GradientCheck loss_gradient_check(const DestripeProblem& problem, const UnrolledModel& model,
                                  ConstParamSpan params, double beta, int count,
                                  std::uint64_t seed, double step = 1e-6);

}  // namespace destripe
