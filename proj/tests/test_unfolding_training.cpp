#include "doctest.h"
#include "helpers.hpp"

#include "destripe/error.hpp"
#include "destripe/parallel.hpp"
#include "destripe/simulation.hpp"
#include "destripe/training.hpp"

#include <cmath>
#include <sstream>

using namespace destripe;
using destripe::testing::random_grid;

namespace {

RealGrid striped_volume(const Shape3& shape, std::uint64_t seed) {
  PhantomOptions opt;
  if (shape.rows < 64) {
    opt.min_sigma_px = 1.5;
    opt.max_sigma_px = 3.0;
  }
  const RealGrid clean = make_phantom(shape, seed, opt);
  StripeModel m;
  m.thick.width_px = 6.0;
  return degrade(clean, generate_stripe_field(shape, m, seed + 1));
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.mask_threshold = 0.05;
  cfg.neighbors_N = 6;
  cfg.layers_L = 2;
  cfg.hidden_dims = {4};
  cfg.unroll_K = 2;
  cfg.dc_guard_radius_px = 2;
  cfg.train_epochs = 5;
  cfg.learning_rate = 1e-2;
  return cfg;
}

std::vector<double> perturbed(const UnrolledModel& model, std::uint64_t seed, double scale) {
  std::vector<double> p = model.initial_parameters(seed);
  const RealGrid noise = random_grid({1, 1, model.layout.size()}, seed + 99, -scale, scale);
  for (std::size_t n = 0; n < p.size(); ++n) p[n] += noise[Index(n)];
  return p;
}

}  // namespace

TEST_CASE("isotropy penalty on a four-bin ring") {
  const AnnulusIndex a = build_annuli(8, 8, 0.45);
  REQUIRE(a.ring_members.size() > 2);
  const auto& ring = a.ring_members[2];
  REQUIRE(ring.size() == 4);
  for (Index b : ring) CHECK(a.rho.data()[b] == doctest::Approx(1.0));

  ComplexGrid spec({1, 8, 8});
  MaskGrid M({1, 8, 8});
  spec[ring[0]] = Complex(0.0, 3.0);
  M[ring[0]] = 1;
  spec[ring[1]] = Complex(1.0, 0.0);
  spec[ring[2]] = Complex(0.0, -1.0);
  spec[ring[3]] = Complex(-0.6, 0.8);
  CHECK(isotropy_penalty(spec, M, a) == doctest::Approx(4.0).epsilon(1e-12));

  ComplexGrid grad;
  isotropy_penalty(spec, M, a, &grad);
  // d/dc of (|p| - mean|q|)^2 is 2 (|p| - 1) p/|p| on P and -2/3 (|p| - 1) q/|q| on Q.
  CHECK(std::abs(grad[ring[0]] - Complex(0.0, 4.0)) < 1e-12);
  CHECK(std::abs(grad[ring[1]] - Complex(-4.0 / 3.0, 0.0)) < 1e-12);
}

TEST_CASE("isotropy penalty invariances and gradient") {
  const AnnulusIndex a = build_annuli(12, 12, 1.0);
  const RealGrid re = random_grid({2, 12, 12}, 1), im = random_grid({2, 12, 12}, 2);
  const RealGrid pick = random_grid({2, 12, 12}, 3, 0.0, 1.0);
  ComplexGrid spec({2, 12, 12});
  MaskGrid M({2, 12, 12});
  for (Index n = 0; n < spec.size(); ++n) {
    spec[n] = Complex(re[n], im[n]);
    M[n] = pick[n] < 0.3;
  }
  const double base = isotropy_penalty(spec, M, a);
  CHECK(base > 0);

  SUBCASE("ring-constant magnitudes give zero") {
    ComplexGrid flat = spec;
    for (Index n = 0; n < flat.size(); ++n) {
      const Index in_slice = n % a.slice_size();
      flat[n] = std::polar(1.0 + a.ring_id.data()[in_slice], std::arg(spec[n]));
    }
    CHECK(isotropy_penalty(flat, M, a) < 1e-24);
  }
  SUBCASE("phases do not matter") {
    ComplexGrid rotated = spec;
    const RealGrid phase = random_grid({2, 12, 12}, 4, -3.0, 3.0);
    for (Index n = 0; n < spec.size(); ++n) rotated[n] *= std::polar(1.0, phase[n]);
    CHECK(isotropy_penalty(rotated, M, a) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("gradient matches central differences") {
    ComplexGrid grad;
    isotropy_penalty(spec, M, a, &grad);
    const double h = 1e-6;
    for (Index n = 0; n < spec.size(); n += 7) {
      for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
        ComplexGrid p = spec, m = spec;
        p[n] += h * dir;
        m[n] -= h * dir;
        const double num = (isotropy_penalty(p, M, a) - isotropy_penalty(m, M, a)) / (2 * h);
        const double ana = dir.real() != 0 ? grad[n].real() : grad[n].imag();
        CHECK(std::abs(num - ana) < 1e-6 * (1.0 + std::abs(ana)));
      }
    }
  }
}

TEST_CASE("self2self loss") {
  const Shape3 shape{2, 16, 16};
  const RealGrid Y = striped_volume(shape, 5);
  const RunConfig cfg = small_config();
  const DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  REQUIRE(p.field.masked_count() > 0);
  const RealGrid X = random_grid(shape, 6, 0.2, 1.0);

  const LossBreakdown l = self2self_loss(X, Y, p.field, p.annuli, 0.7);
  CHECK(l.mse == doctest::Approx((Y.array() - X.array()).square().sum()).epsilon(1e-12));
  CHECK(l.isotropy ==
        doctest::Approx(isotropy_penalty(forward_spectrum(X).coeffs, p.field.M, p.annuli))
            .epsilon(1e-12));
  CHECK(std::abs(l.total - (l.mse + 0.7 * l.isotropy)) < 1e-12 * l.total);

  SUBCASE("X = Y with an empty mask is zero") {
    CorruptionField none = p.field;
    none.M = MaskGrid(shape);
    const LossBreakdown z = self2self_loss(Y, Y, none, p.annuli, 1.0);
    CHECK(z.total == 0.0);
  }
  SUBCASE("gradient matches central differences") {
    RealGrid g;
    self2self_loss(X, Y, p.field, p.annuli, 0.7, &g);
    const double h = 1e-6;
    for (Index n = 0; n < X.size(); n += 13) {
      RealGrid a = X, b = X;
      a[n] += h;
      b[n] -= h;
      const double num = (self2self_loss(a, Y, p.field, p.annuli, 0.7).total -
                          self2self_loss(b, Y, p.field, p.annuli, 0.7).total) /
                         (2 * h);
      CHECK(std::abs(num - g[n]) < 1e-5 * (1.0 + std::abs(g[n])));
    }
  }
}

TEST_CASE("unrolled model starts at the observation") {
  const RealGrid Y = striped_volume({3, 16, 16}, 7);
  const RunConfig cfg = small_config();
  const DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  REQUIRE(!p.graph.corrupted_nodes.empty());
  const UnrolledModel model = UnrolledModel::create(cfg);
  const auto params = model.initial_parameters(3);
  for (int k = 0; k < model.K; ++k) {
    const IterationParams hp = model.hyperparams(params, k);
    CHECK(hp.mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hp.alpha == doctest::Approx(0.1).epsilon(1e-12));
  }
  std::vector<IterationReport> report;
  const RealGrid X = unfolded_forward(p, model, params, nullptr, &report);
  CHECK(destripe::testing::relative_l2(X, Y) < 1e-12);
  CHECK(report.size() == std::size_t(model.K));
  CHECK_THROWS_AS(model.hyperparams(params, model.K), ValidationError);
}

TEST_CASE("an empty mask leaves the output at Y for any parameters") {
  const RealGrid Y = striped_volume({3, 16, 16}, 8);
  RunConfig cfg = small_config();
  cfg.dc_guard_radius_px = 16;
  const DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  REQUIRE(p.graph.corrupted_nodes.empty());
  const UnrolledModel model = UnrolledModel::create(cfg);
  const RealGrid X = unfolded_forward(p, model, perturbed(model, 4, 0.5));
  CHECK(destripe::testing::relative_l2(X, Y) < 1e-12);

  auto train_cfg = cfg;
  DestripeProblem q = p;
  const TrainResult r = train(q, model, train_cfg, model.initial_parameters(1));
  CHECK(r.log.empty());
  CHECK(destripe::testing::relative_l2(r.output, Y) == 0.0);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("no corrupted bins") != std::string::npos);
}

TEST_CASE("loss gradient matches central differences on every block") {
  const RealGrid Y = striped_volume({3, 16, 16}, 9);
  const RunConfig cfg = small_config();
  const DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  REQUIRE(!p.graph.corrupted_nodes.empty());
  for (bool tied : {false, true}) {
    CAPTURE(tied);
    RunConfig c = cfg;
    c.tie_weights = tied;
    const UnrolledModel model = UnrolledModel::create(c);
    const auto params = perturbed(model, 11, 1.0);
    const GradientCheck gc = loss_gradient_check(p, model, params, 0.5, 64, 2, 1e-6);
    CHECK(gc.sampled.size() >= 60);
    for (const ParamBlock& b : model.layout.blocks()) {
      CHECK(std::find(gc.block.begin(), gc.block.end(), b.name) != gc.block.end());
    }
    CHECK(gc.max_relative_error < 1e-4);
  }
}

TEST_CASE("mse-only training does not move from the identity start") {
  const RealGrid Y = striped_volume({2, 16, 16}, 10);
  RunConfig cfg = small_config();
  cfg.loss_beta = 0.0;
  DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  const UnrolledModel model = UnrolledModel::create(cfg);
  const auto init = model.initial_parameters(1);
  std::vector<double> grad;
  loss_and_gradient(p, model, init, 0.0, &grad);
  for (double g : grad) CHECK(std::abs(g) < 1e-12);
  const TrainResult r = train(p, model, cfg, init);
  CHECK(destripe::testing::relative_l2(r.output, Y) < 1e-12);
  CHECK(r.best.total < 1e-20);
}

TEST_CASE("training is deterministic and thread independent") {
  const RealGrid Y = striped_volume({3, 16, 16}, 12);
  const RunConfig cfg = small_config();
  const UnrolledModel model = UnrolledModel::create(cfg);
  auto run = [&](int threads) {
    set_thread_count(threads);
    DestripeProblem p = prepare_problem(Y, cfg, 90.0, cfg.rng_seed);
    TrainResult r = train(p, model, cfg, model.initial_parameters(cfg.rng_seed));
    set_thread_count(1);
    return r;
  };
  const TrainResult a = run(1), b = run(1), c = run(4);
  std::ostringstream la, lb;
  write_training_log(a.log, la);
  write_training_log(b.log, lb);
  CHECK(la.str() == lb.str());
  CHECK(a.params == b.params);
  REQUIRE(a.log.size() == c.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(std::abs(a.log[e].loss.total - c.log[e].loss.total) <= 1e-6 * a.log[e].loss.total);
  }
  CHECK(destripe::testing::relative_l2(c.output, a.output) < 1e-6);
  CHECK(a.best.total <= a.log.front().loss.total);
}

TEST_CASE("training log CSV") {
  EpochRecord r;
  r.epoch = 3;
  r.loss = {1.5, 0.25, 1.75};
  r.mu = {1.0, 2.0};
  r.alpha = {0.5, 0.25};
  std::ostringstream out;
  write_training_log({r}, out);
  CHECK(out.str() == "epoch,mse,isotropy,total,mu_0,mu_1,alpha_0,alpha_1\n"
                     "3,1.5,0.25,1.75,1,2,0.5,0.25\n");
}

TEST_CASE("adam steps") {
  std::vector<double> x = {1.0, -2.0, 0.5};
  const std::vector<double> g = {2.0, -0.5, 0.0};
  AdamState s;
  adam_step(x, g, s, 0.1);
  CHECK(s.step == 1);
  CHECK(x[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(-2.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(x[2] == 0.5);

  adam_step(x, g, s, 0.1);
  // Constant gradient: both moments stay exact after bias correction.
  CHECK(x[0] == doctest::Approx(1.0 - 0.2 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  CHECK(s.m[0] == doctest::Approx(0.19 * 2.0).epsilon(1e-14));
  CHECK(s.v[0] == doctest::Approx((1.0 - 0.999 * 0.999) * 4.0).epsilon(1e-12));
}

TEST_CASE("training reduces the loss on a phantom" * doctest::test_suite("slow")) {
  const RealGrid Y = striped_volume({8, 64, 64}, 42);
  RunConfig cfg;
  cfg.train_epochs = 60;
  DestripeProblem p = prepare_problem(Y, cfg, 90.0, cfg.rng_seed);
  REQUIRE(!p.graph.corrupted_nodes.empty());
  const UnrolledModel model = UnrolledModel::create(cfg);
  const TrainResult r = train(p, model, cfg, model.initial_parameters(cfg.rng_seed));
  CHECK(r.best.total < 0.5 * r.log.front().loss.total);
}
