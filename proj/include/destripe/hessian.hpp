#pragma once

#include "destripe/config.hpp"
#include "destripe/grid.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace destripe {

enum class Direction { xx, yy, zz, xy, xz, yz };
inline constexpr std::array<Direction, 6> kDirections = {Direction::xx, Direction::yy,
                                                         Direction::zz, Direction::xy,
                                                         Direction::xz, Direction::yz};
std::string to_string(Direction d);
bool touches_z(Direction d);

/// Reflective is half-sample symmetric (v[-1] = v[0], v[n] = v[n-1]).
enum class Boundary { reflective, periodic };

/// Pure second derivatives use [1, -2, 1]; mixed ones compose two forward
/// differences.
RealGrid second_derivative(const RealGrid& v, Direction d, Boundary b = Boundary::reflective);
RealGrid second_derivative_adjoint(const RealGrid& u, Direction d,
                                   Boundary b = Boundary::reflective);

inline double shrink(double v, double t) {
  const double m = std::abs(v) - t;
  return m > 0 ? (v > 0 ? m : -m) : 0.0;
}
RealGrid shrink(const RealGrid& v, double t);

/// Direction weights (lx, ly, lz, 2 sqrt(lx ly), 2 sqrt(lx lz), 2 sqrt(ly lz))
/// and which directions the volume supports.
struct HessianPrior {
  std::array<double, 6> weights{};
  std::array<bool, 6> active{};
  Boundary boundary = Boundary::reflective;

  HessianPrior() = default;
  HessianPrior(double lambda_x, double lambda_y, double lambda_z, const Shape3& shape,
               Boundary b = Boundary::reflective);
  static HessianPrior from_config(const RunConfig& cfg, const Shape3& shape,
                                  Boundary b = Boundary::reflective);

  /// lambda_i D_i v
  RealGrid apply(const RealGrid& v, std::size_t i) const;
  /// lambda_i D_i^T u
  RealGrid apply_adjoint(const RealGrid& u, std::size_t i) const;
  /// Directions dropped because the stack has fewer than 3 slices.
  std::vector<std::string> disabled() const;
};

struct IterationParams {
  double mu = 1.0;
  double alpha = 0.1;
};

/// X plus one split variable Z_i and Bregman variable B_i per direction.
/// Inactive directions keep all-zero Z and B.
struct SplitState {
  RealGrid X;
  std::array<RealGrid, 6> Z;
  std::array<RealGrid, 6> B;
  int k = 0;

  static SplitState initial(const RealGrid& Y);
};

/// Z_i = shrink(lambda_i D_i X + B_i, alpha / mu) with X already updated.
std::array<RealGrid, 6> prior_update(const HessianPrior& prior, const SplitState& state,
                                     const IterationParams& params);
/// B_i + lambda_i D_i X - Z_i with Z already updated.
std::array<RealGrid, 6> bregman_update(const HessianPrior& prior, const SplitState& state);

/// sum_i lambda_i D_i^T (Z_i - B_i)
RealGrid feedback_image(const HessianPrior& prior, const SplitState& state);

/// sqrt(sum_i ||Z_i - lambda_i D_i X - B_i||^2)
double split_residual(const HessianPrior& prior, const SplitState& state);

/// ||Y - X||^2 + alpha sum_i lambda_i ||D_i X||_1
double hessian_objective(const RealGrid& Y, const RealGrid& X, const HessianPrior& prior,
                         double alpha);

/// Exact minimizer of ||Y - X||^2 + mu/2 sum_i ||Z_i - lambda_i D_i X - B_i||^2
/// with periodic boundaries, solved in the 3D Fourier domain.
RealGrid classic_data_update(const RealGrid& Y, const HessianPrior& prior,
                             const SplitState& state, const IterationParams& params);

/// (2 I + mu sum_i lambda_i^2 D_i^T D_i) X and 2 Y + mu sum_i lambda_i D_i^T (Z_i - B_i),
/// the two sides of the normal equations solved above (periodic).
RealGrid normal_operator(const HessianPrior& prior, const RealGrid& X, double mu);
RealGrid normal_rhs(const RealGrid& Y, const HessianPrior& prior, const SplitState& state,
                    double mu);

struct ClassicRun {
  RealGrid X;
  std::vector<double> objective;  // after each iteration
};

/// Split Bregman with `classic_data_update`, starting from X = Y, Z = B = 0.
ClassicRun classic_split_bregman(const RealGrid& Y, const HessianPrior& prior,
                                 const IterationParams& params, int iterations);

}  // namespace destripe
