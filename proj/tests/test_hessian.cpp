#include "doctest.h"
#include "helpers.hpp"

#include "destripe/hessian.hpp"

using namespace destripe;
using destripe::testing::random_grid;

namespace {

// Reflective [1, -2, 1] along a 1D line, written out by hand.
std::vector<double> dxx_1d(const std::vector<double>& x) {
  const int n = int(x.size());
  std::vector<double> d(x.size());
  for (int m = 0; m < n; ++m) {
    const double l = x[std::size_t(std::max(m - 1, 0))];
    const double r = x[std::size_t(std::min(m + 1, n - 1))];
    d[std::size_t(m)] = l - 2 * x[std::size_t(m)] + r;
  }
  return d;
}

}  // namespace

TEST_CASE("second derivatives vanish on constants") {
  const RealGrid c({4, 6, 7}, 3.25);
  for (Boundary b : {Boundary::reflective, Boundary::periodic}) {
    for (Direction d : kDirections) {
      CHECK(second_derivative(c, d, b).array().abs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("xx of a parabola is 2 in the interior") {
  RealGrid v({3, 4, 9});
  for (Index n = 0; n < v.size(); ++n) {
    const double x = double(n % 9);
    v[n] = x * x;
  }
  const RealGrid d = second_derivative(v, Direction::xx);
  for (Index k = 0; k < 3; ++k) {
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 1; j < 8; ++j) CHECK(d(k, i, j) == doctest::Approx(2.0));
    }
  }
  CHECK(second_derivative(v, Direction::yy).array().abs().maxCoeff() == 0.0);
  CHECK(second_derivative(v, Direction::xy).array().abs().maxCoeff() == 0.0);
}

TEST_CASE("mixed derivative of x*y is 1 away from the far edges") {
  RealGrid v({1, 6, 7});
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 7; ++j) v(0, i, j) = double(i * j);
  }
  const RealGrid d = second_derivative(v, Direction::xy);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 6; ++j) CHECK(d(0, i, j) == doctest::Approx(1.0));
  }
}

TEST_CASE("adjoints hold for all six directions and both boundaries") {
  const Shape3 shape{8, 16, 16};
  const RealGrid v = random_grid(shape, 1);
  const RealGrid u = random_grid(shape, 2);
  for (Boundary b : {Boundary::reflective, Boundary::periodic}) {
    for (Direction d : kDirections) {
      CAPTURE(to_string(d));
      const double lhs = dot(second_derivative(v, d, b), u);
      const double rhs = dot(v, second_derivative_adjoint(u, d, b));
      CHECK(std::abs(lhs - rhs) < 1e-10);
    }
  }
}

TEST_CASE("shrink") {
  CHECK(shrink(2.0, 0.5) == 1.5);
  CHECK(shrink(-0.3, 0.5) == 0.0);
  CHECK(shrink(-2.0, 0.5) == -1.5);
  CHECK(shrink(0.7, 0.0) == 0.7);
  const RealGrid v = random_grid({1, 8, 8}, 3);
  CHECK((shrink(v, 0.0).array() == v.array()).all());
}

TEST_CASE("prior weights and disabled directions") {
  const HessianPrior p(4.0, 1.0, 0.25, {3, 8, 8});
  CHECK(p.weights[0] == 4.0);
  CHECK(p.weights[3] == 2.0 * std::sqrt(4.0));
  CHECK(p.weights[4] == 2.0 * std::sqrt(1.0));
  CHECK(p.weights[5] == 2.0 * std::sqrt(0.25));
  CHECK(p.disabled().empty());
  const HessianPrior thin(1.0, 1.0, 1.0, {2, 8, 8});
  CHECK(thin.disabled() == std::vector<std::string>{"zz", "xz", "yz"});
  CHECK_THROWS(HessianPrior(1.0, 0.0, 1.0, {3, 8, 8}));
}

TEST_CASE("prior and Bregman updates") {
  const Shape3 shape{3, 8, 8};
  const HessianPrior prior(1.0, 2.0, 0.5, shape);
  SUBCASE("constant X and zero B give zero Z") {
    SplitState s = SplitState::initial(RealGrid(shape, 2.0));
    for (const RealGrid& z : prior_update(prior, s, {1.0, 0.1})) CHECK(z.array().abs().maxCoeff() == 0.0);
  }
  SUBCASE("zero threshold is an exact split and resets B") {
    SplitState s = SplitState::initial(random_grid(shape, 4));
    for (std::size_t i = 0; i < 6; ++i) s.B[i] = random_grid(shape, 10 + i);
    const auto B0 = s.B;
    s.Z = prior_update(prior, s, {1.0, 0.0});
    for (std::size_t i = 0; i < 6; ++i) {
      RealGrid expect = prior.apply(s.X, i);
      expect.array() += s.B[i].array();
      CHECK((s.Z[i].array() == expect.array()).all());
    }
    s.B = bregman_update(prior, s);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(s.B[i].array().abs().maxCoeff() < 1e-12 * (1.0 + B0[i].array().abs().maxCoeff()));
    }
  }
  SUBCASE("B starts at lambda D X when Z is zero") {
    SplitState s = SplitState::initial(random_grid(shape, 5));
    const auto B = bregman_update(prior, s);
    for (std::size_t i = 0; i < 6; ++i) CHECK((B[i].array() == prior.apply(s.X, i).array()).all());
  }
}

TEST_CASE("five-voxel line against a scalar oracle") {
  const std::vector<double> x = {1.0, 4.0, 2.0, 8.0, 3.0};
  const std::vector<double> b = {0.5, -1.0, 0.25, 2.0, -0.75};
  const double lambda = 1.5, mu = 2.0, alpha = 3.0;
  const HessianPrior prior(lambda, 1.0, 1.0, {1, 1, 5});
  SplitState s = SplitState::initial(RealGrid({1, 1, 5}));
  for (Index j = 0; j < 5; ++j) {
    s.X(0, 0, j) = x[std::size_t(j)];
    s.B[0](0, 0, j) = b[std::size_t(j)];
  }
  s.Z = prior_update(prior, s, {mu, alpha});
  const auto d = dxx_1d(x);
  std::vector<double> z(5), bn(5);
  for (std::size_t j = 0; j < 5; ++j) {
    const double t = lambda * d[j] + b[j];
    const double thr = alpha / mu;
    z[j] = std::abs(t) > thr ? (t > 0 ? t - thr : t + thr) : 0.0;
    bn[j] = b[j] + lambda * d[j] - z[j];
  }
  s.B = bregman_update(prior, s);
  for (Index j = 0; j < 5; ++j) {
    CHECK(s.Z[0](0, 0, j) == doctest::Approx(z[std::size_t(j)]).epsilon(1e-15));
    CHECK(s.B[0](0, 0, j) == doctest::Approx(bn[std::size_t(j)]).epsilon(1e-15));
  }
  // a single row: yy and xy see no variation
  CHECK(s.Z[1].array().abs().maxCoeff() == 0.0);
  CHECK(s.Z[3].array().abs().maxCoeff() == 0.0);
}

TEST_CASE("classic data update solves its normal equations") {
  const Shape3 shape{4, 8, 10};
  const HessianPrior prior(1.0, 1.0, 0.1, shape);
  const RealGrid Y = random_grid(shape, 6);
  SplitState s = SplitState::initial(Y);
  for (std::size_t i = 0; i < 6; ++i) {
    s.Z[i] = random_grid(shape, 20 + i);
    s.B[i] = random_grid(shape, 30 + i);
  }
  const IterationParams params{0.7, 0.1};
  const RealGrid X = classic_data_update(Y, prior, s, params);
  const RealGrid lhs = normal_operator(prior, X, params.mu);
  const RealGrid rhs = normal_rhs(Y, prior, s, params.mu);
  CHECK(destripe::testing::relative_l2(lhs, rhs) < 1e-12);

  const RealGrid still = classic_data_update(Y, prior, s, {1e-14, 0.1});
  CHECK(destripe::testing::relative_l2(still, Y) < 1e-10);
}

TEST_CASE("classic split Bregman decreases the objective") {
  RealGrid Y = random_grid({1, 32, 32}, 7, 0.0, 0.1);
  for (Index n = 0; n < Y.size(); ++n) Y[n] += 0.5 + 0.3 * ((n % 32) % 6 == 2);
  const HessianPrior prior(1.0, 1.0, 0.1, Y.shape());
  const ClassicRun run = classic_split_bregman(Y, prior, {1.0, 0.05}, 10);
  REQUIRE(run.objective.size() == 10);
  CHECK(run.objective.back() < hessian_objective(Y, Y, prior, 0.05));
  CHECK(run.X.shape() == Y.shape());
}

TEST_CASE("shrink is odd and 1-Lipschitz") {
  for (double t : {0.0, 0.3, 1.0}) {
    for (double a = -3.0; a <= 3.0; a += 0.25) {
      CHECK(shrink(-a, t) == -shrink(a, t));
      for (double b = -3.0; b <= 3.0; b += 0.5) {
        CHECK(std::abs(shrink(a, t) - shrink(b, t)) <= std::abs(a - b) + 1e-15);
      }
    }
  }
}

TEST_CASE("classic data update is a local minimum") {
  const Shape3 shape{3, 8, 8};
  const HessianPrior prior(1.0, 0.5, 0.2, shape, Boundary::periodic);
  const RealGrid Y = random_grid(shape, 8);
  SplitState s = SplitState::initial(Y);
  for (std::size_t i = 0; i < 6; ++i) {
    s.Z[i] = random_grid(shape, 40 + i);
    s.B[i] = random_grid(shape, 50 + i);
  }
  const IterationParams params{1.3, 0.1};
  auto energy = [&](const RealGrid& X) {
    double e = (Y.array() - X.array()).square().sum();
    for (std::size_t i = 0; i < 6; ++i) {
      e += 0.5 * params.mu *
           (s.Z[i].array() - prior.apply(X, i).array() - s.B[i].array()).square().sum();
    }
    return e;
  };
  const RealGrid X = classic_data_update(Y, prior, s, params);
  const double e0 = energy(X);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RealGrid P = random_grid(shape, 100 + seed, -1e-3, 1e-3);
    P.array() += X.array();
    CHECK(energy(P) > e0);
  }
}
