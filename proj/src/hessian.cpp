#include "destripe/hessian.hpp"

#include "destripe/error.hpp"
#include "destripe/parallel.hpp"

#include <unsupported/Eigen/FFT>

#include <numbers>

namespace destripe {

namespace {

enum Axis { z_axis = 0, y_axis = 1, x_axis = 2 };

struct Line {
  const double* in;
  double* out;
  Index stride;
  Index n;
  bool periodic;

  double at(Index m) const {
    if (periodic) return in[((m % n + n) % n) * stride];
    return in[std::clamp<Index>(m, 0, n - 1) * stride];
  }
  void put(Index m, double v) const { out[m * stride] = v; }
};

// [1, -2, 1]; symmetric for both boundaries so it is its own transpose.
void second_difference(const Line& l) {
  for (Index m = 0; m < l.n; ++m) l.put(m, l.at(m - 1) - 2.0 * l.at(m) + l.at(m + 1));
}

void forward_difference(const Line& l) {
  for (Index m = 0; m < l.n; ++m) {
    if (!l.periodic && m == l.n - 1) {
      l.put(m, 0.0);
    } else {
      l.put(m, l.at(m + 1) - l.at(m));
    }
  }
}

void forward_difference_t(const Line& l) {
  for (Index m = 0; m < l.n; ++m) {
    if (l.periodic) {
      l.put(m, l.at(m - 1) - l.at(m));
    } else {
      const double prev = m >= 1 ? l.in[(m - 1) * l.stride] : 0.0;
      const double own = m < l.n - 1 ? l.in[m * l.stride] : 0.0;
      l.put(m, prev - own);
    }
  }
}

template <typename Op>
RealGrid along(const RealGrid& v, Axis axis, bool periodic, Op op) {
  const Shape3& s = v.shape();
  RealGrid out(s);
  const Index n = axis == z_axis ? s.depth : axis == y_axis ? s.rows : s.cols;
  const Index stride = axis == z_axis ? s.slice_size() : axis == y_axis ? s.cols : 1;
  const Index lines = s.size() / n;
  parallel_for(lines, [&](Index line) {
    Index base;
    if (axis == x_axis) {
      base = line * s.cols;
    } else if (axis == y_axis) {
      base = (line / s.cols) * s.slice_size() + line % s.cols;
    } else {
      base = line;
    }
    op(Line{v.data() + base, out.data() + base, stride, n, periodic});
  });
  return out;
}

std::pair<Axis, Axis> axes_of(Direction d) {
  switch (d) {
    case Direction::xx: return {x_axis, x_axis};
    case Direction::yy: return {y_axis, y_axis};
    case Direction::zz: return {z_axis, z_axis};
    case Direction::xy: return {x_axis, y_axis};
    case Direction::xz: return {x_axis, z_axis};
    case Direction::yz: return {y_axis, z_axis};
  }
  return {x_axis, x_axis};
}

bool is_pure(Direction d) { return d == Direction::xx || d == Direction::yy || d == Direction::zz; }

// In-place 1D DFT along every line of `axis`.
void fft_axis(ComplexGrid& g, Axis axis, bool inverse) {
  const Shape3& s = g.shape();
  const Index n = axis == z_axis ? s.depth : axis == y_axis ? s.rows : s.cols;
  const Index stride = axis == z_axis ? s.slice_size() : axis == y_axis ? s.cols : 1;
  Eigen::FFT<double> fft;
  std::vector<Complex> in(static_cast<std::size_t>(n)), out;
  for (Index base = 0; base < s.size(); ++base) {
    const Index coord = (base / stride) % n;
    if (coord != 0) continue;
    for (Index m = 0; m < n; ++m) in[std::size_t(m)] = g[base + m * stride];
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (Index m = 0; m < n; ++m) g[base + m * stride] = out[std::size_t(m)];
  }
}

double second_symbol(Index u, Index n) {
  const double c = 2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * double(u) / double(n));
  return c;  // |F(w)|^2, and |D2(w)| for the pure second difference
}

HessianPrior periodic_copy(const HessianPrior& prior) {
  HessianPrior p = prior;
  p.boundary = Boundary::periodic;
  return p;
}

}  // namespace

std::string to_string(Direction d) {
  switch (d) {
    case Direction::xx: return "xx";
    case Direction::yy: return "yy";
    case Direction::zz: return "zz";
    case Direction::xy: return "xy";
    case Direction::xz: return "xz";
    case Direction::yz: return "yz";
  }
  return "?";
}

bool touches_z(Direction d) {
  return d == Direction::zz || d == Direction::xz || d == Direction::yz;
}

RealGrid second_derivative(const RealGrid& v, Direction d, Boundary b) {
  const bool periodic = b == Boundary::periodic;
  const auto [a1, a2] = axes_of(d);
  if (is_pure(d)) return along(v, a1, periodic, second_difference);
  return along(along(v, a2, periodic, forward_difference), a1, periodic, forward_difference);
}

RealGrid second_derivative_adjoint(const RealGrid& u, Direction d, Boundary b) {
  const bool periodic = b == Boundary::periodic;
  const auto [a1, a2] = axes_of(d);
  if (is_pure(d)) return along(u, a1, periodic, second_difference);
  return along(along(u, a1, periodic, forward_difference_t), a2, periodic, forward_difference_t);
}

RealGrid shrink(const RealGrid& v, double t) {
  RealGrid out(v.shape());
  out.array() = v.array().unaryExpr([t](double x) { return shrink(x, t); });
  return out;
}

HessianPrior::HessianPrior(double lambda_x, double lambda_y, double lambda_z, const Shape3& shape,
                           Boundary b)
    : boundary(b) {
  if (!(lambda_x > 0 && lambda_y > 0 && lambda_z > 0)) {
    throw ValidationError("Hessian weights must be positive");
  }
  weights = {lambda_x,
             lambda_y,
             lambda_z,
             2.0 * std::sqrt(lambda_x * lambda_y),
             2.0 * std::sqrt(lambda_x * lambda_z),
             2.0 * std::sqrt(lambda_y * lambda_z)};
  for (std::size_t i = 0; i < 6; ++i) active[i] = !touches_z(kDirections[i]) || shape.depth >= 3;
}

HessianPrior HessianPrior::from_config(const RunConfig& cfg, const Shape3& shape, Boundary b) {
  return HessianPrior(cfg.lambda_x, cfg.lambda_y, cfg.lambda_z, shape, b);
}

RealGrid HessianPrior::apply(const RealGrid& v, std::size_t i) const {
  RealGrid out = second_derivative(v, kDirections[i], boundary);
  out.array() *= weights[i];
  return out;
}

RealGrid HessianPrior::apply_adjoint(const RealGrid& u, std::size_t i) const {
  RealGrid out = second_derivative_adjoint(u, kDirections[i], boundary);
  out.array() *= weights[i];
  return out;
}

std::vector<std::string> HessianPrior::disabled() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!active[i]) names.push_back(to_string(kDirections[i]));
  }
  return names;
}

SplitState SplitState::initial(const RealGrid& Y) {
  SplitState s;
  s.X = Y;
  for (std::size_t i = 0; i < 6; ++i) {
    s.Z[i] = RealGrid(Y.shape());
    s.B[i] = RealGrid(Y.shape());
  }
  return s;
}

std::array<RealGrid, 6> prior_update(const HessianPrior& prior, const SplitState& state,
                                     const IterationParams& params) {
  std::array<RealGrid, 6> Z;
  const double t = params.alpha / params.mu;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!prior.active[i]) {
      Z[i] = RealGrid(state.X.shape());
      continue;
    }
    RealGrid v = prior.apply(state.X, i);
    v.array() += state.B[i].array();
    Z[i] = shrink(v, t);
  }
  return Z;
}

std::array<RealGrid, 6> bregman_update(const HessianPrior& prior, const SplitState& state) {
  std::array<RealGrid, 6> B;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!prior.active[i]) {
      B[i] = RealGrid(state.X.shape());
      continue;
    }
    B[i] = prior.apply(state.X, i);
    B[i].array() += state.B[i].array() - state.Z[i].array();
  }
  return B;
}

RealGrid feedback_image(const HessianPrior& prior, const SplitState& state) {
  RealGrid g(state.X.shape());
  for (std::size_t i = 0; i < 6; ++i) {
    if (!prior.active[i]) continue;
    RealGrid d(state.X.shape());
    d.array() = state.Z[i].array() - state.B[i].array();
    g.array() += prior.apply_adjoint(d, i).array();
  }
  return g;
}

double split_residual(const HessianPrior& prior, const SplitState& state) {
  double total = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!prior.active[i]) continue;
    const RealGrid dx = prior.apply(state.X, i);
    total += (state.Z[i].array() - dx.array() - state.B[i].array()).square().sum();
  }
  return std::sqrt(total);
}

double hessian_objective(const RealGrid& Y, const RealGrid& X, const HessianPrior& prior,
                         double alpha) {
  double value = (Y.array() - X.array()).square().sum();
  for (std::size_t i = 0; i < 6; ++i) {
    if (prior.active[i]) value += alpha * prior.apply(X, i).array().abs().sum();
  }
  return value;
}

RealGrid normal_operator(const HessianPrior& prior, const RealGrid& X, double mu) {
  const HessianPrior p = periodic_copy(prior);
  RealGrid out(X.shape());
  out.array() = 2.0 * X.array();
  for (std::size_t i = 0; i < 6; ++i) {
    if (p.active[i]) out.array() += mu * p.apply_adjoint(p.apply(X, i), i).array();
  }
  return out;
}

RealGrid normal_rhs(const RealGrid& Y, const HessianPrior& prior, const SplitState& state,
                    double mu) {
  RealGrid out = feedback_image(periodic_copy(prior), state);
  out.array() = 2.0 * Y.array() + mu * out.array();
  return out;
}

RealGrid classic_data_update(const RealGrid& Y, const HessianPrior& prior,
                             const SplitState& state, const IterationParams& params) {
  const Shape3& s = Y.shape();
  const RealGrid rhs = normal_rhs(Y, prior, state, params.mu);
  ComplexGrid g(s);
  for (Index n = 0; n < s.size(); ++n) g[n] = rhs[n];
  const bool use_z = s.depth > 1;
  fft_axis(g, x_axis, false);
  fft_axis(g, y_axis, false);
  if (use_z) fft_axis(g, z_axis, false);
  const auto& w = prior.weights;
  for (Index k = 0; k < s.depth; ++k) {
    const double cz = second_symbol(k, s.depth);
    for (Index i = 0; i < s.rows; ++i) {
      const double cy = second_symbol(i, s.rows);
      for (Index j = 0; j < s.cols; ++j) {
        const double cx = second_symbol(j, s.cols);
        const double sym[6] = {cx * cx, cy * cy, cz * cz, cx * cy, cx * cz, cy * cz};
        double denom = 2.0;
        for (std::size_t d = 0; d < 6; ++d) {
          if (prior.active[d]) denom += params.mu * w[d] * w[d] * sym[d];
        }
        g(k, i, j) /= denom;
      }
    }
  }
  if (use_z) fft_axis(g, z_axis, true);
  fft_axis(g, y_axis, true);
  fft_axis(g, x_axis, true);
  RealGrid out(s);
  for (Index n = 0; n < s.size(); ++n) out[n] = g[n].real();
  return out;
}

ClassicRun classic_split_bregman(const RealGrid& Y, const HessianPrior& prior,
                                 const IterationParams& params, int iterations) {
  SplitState state = SplitState::initial(Y);
  ClassicRun run;
  for (int k = 0; k < iterations; ++k) {
    state.X = classic_data_update(Y, prior, state, params);
    state.Z = prior_update(prior, state, params);
    state.B = bregman_update(prior, state);
    state.k = k + 1;
    run.objective.push_back(hessian_objective(Y, state.X, prior, params.alpha));
  }
  run.X = std::move(state.X);
  return run;
}

}  // namespace destripe
