// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "helpers.hpp"

#include "destripe/checkpoint.hpp"
#include "destripe/hessian.hpp"
#include "destripe/network.hpp"
#include "destripe/pipeline.hpp"
#include "destripe/training.hpp"
#include "destripe/volume_io.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace destripe;
using destripe::testing::GraphBuilder;
using destripe::testing::random_grid;
using destripe::testing::TempDir;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_l2(const RealGrid& a, const RealGrid& b) {
  return (a.array() - b.array()).matrix().norm() / b.array().matrix().norm();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ":"
            << o.detail.str() << std::endl;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DESTRIPE_CLI) + " " + args;
  const int status = std::system(cmd.c_str());
  return status == 0 ? 0 : 1;
}

RealGrid striped_small(const Shape3& shape, std::uint64_t seed) {
  PhantomOptions opt;
  opt.min_sigma_px = 1.5;
  opt.max_sigma_px = 3.0;
  StripeModel m;
  m.thick.width_px = 6.0;
  return degrade(make_phantom(shape, seed, opt), generate_stripe_field(shape, m, seed + 1));
}

void set_weight(std::vector<double>& p, const ComplexLinear& lin, Complex w) {
  p[std::size_t(lin.re_offset)] = w.real();
  p[std::size_t(lin.im_offset)] = w.imag();
}

NodeMatrix input_of(const SpectralGraph& g) {
  NodeMatrix m(g.node_count(), 1);
  m.col(0) = g.attributes;
  return m;
}

void end_to_end(Outcome& o) {
  TempDir dir("accept");
  const std::string d = "\"" + dir.path().string() + "\"";
  o.require(run_cli("simulate --out " + d + " --shape 8,64,64 --seed 42") == 0, "simulate");
  const auto t0 = Clock::now();
  o.require(run_cli("--threads 1 destripe " + d + "/degraded.raw --out " + d + "/out.raw") == 0,
            "destripe");
  const double elapsed = seconds_since(t0);
  const RealGrid clean = load_volume(dir / "clean.raw").data;
  const RealGrid degraded = load_volume(dir / "degraded.raw").data;
  const RealGrid out = load_volume(dir / "out.raw").data;
  const double p0 = psnr(degraded, clean).db, p1 = psnr(out, clean).db;
  const double s0 = ssim(degraded, clean), s1 = ssim(out, clean);
  o.detail << " PSNR " << p0 << " -> " << p1 << " dB (+" << p1 - p0 << "), SSIM " << s0 << " -> "
           << s1 << " (+" << s1 - s0 << "), " << elapsed << " s";
  o.require(p1 >= p0 + 5.0, "PSNR gain >= 5 dB");
  o.require(s1 >= s0 + 0.05, "SSIM gain >= 0.05");
  o.require(elapsed < 600.0, "runtime < 10 min");
}

void detector(Outcome& o) {
  const SimulateResult sim = run_simulate({8, 64, 64}, StripeModel{}, 42);
  const RunConfig cfg;
  const AnnulusIndex a = build_annuli(64, 64, cfg.annulus_width_px);
  auto mask_of = [&](const RealGrid& v) {
    return corruption_mask(corruption_matrix(forward_spectrum(v), a), a, cfg, 90.0);
  };
  const CorruptionField f = mask_of(sim.degraded.data);
  Index in_wedge = 0;
  for (Index n = 0; n < f.M.size(); ++n) {
    if (f.M[n] && f.wedge_mask.data()[n % a.slice_size()]) ++in_wedge;
  }
  const double wedge_frac = f.masked_count() ? double(in_wedge) / double(f.masked_count()) : 0.0;
  const CorruptionField fc = mask_of(sim.clean.data);
  const double clean_frac = double(fc.masked_count()) / double(fc.M.size());
  o.detail << " masked " << f.masked_count() << ", in wedge " << 100 * wedge_frac
           << "%, clean masked " << 100 * clean_frac << "%";
  o.require(f.masked_count() > 0, "degraded volume has masked bins");
  o.require(wedge_frac >= 0.8, ">= 80% in wedge");
  o.require(clean_frac < 0.001, "clean < 0.1% masked");
  for (double c : {0.5, 3.0}) {
    RealGrid scaled = sim.degraded.data;
    scaled.array() *= c;
    const CorruptionField fs = mask_of(scaled);
    o.require((fs.M.array() == f.M.array()).all(), "M(cY) == M(Y) for c=" + std::to_string(c));
  }
}

void gradients(Outcome& o) {
  const RealGrid Y = striped_small({3, 16, 16}, 9);
  RunConfig cfg;
  cfg.mask_threshold = 0.05;
  cfg.neighbors_N = 6;
  cfg.hidden_dims = {4};
  cfg.unroll_K = 2;
  cfg.dc_guard_radius_px = 2;
  const DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  const UnrolledModel model = UnrolledModel::create(cfg);
  std::vector<double> params = model.initial_parameters(11);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : params) v += u(rng);
  const GradientCheck gc = loss_gradient_check(p, model, params, cfg.loss_beta, 64, 3, 1e-6);
  bool re = false, im = false, fatt = false, hyper = false;
  for (const std::string& b : gc.block) {
    re |= b.find("fgnn") != std::string::npos && b.ends_with(".re");
    im |= b.find("fgnn") != std::string::npos && b.ends_with(".im");
    fatt |= b.find("fatt") != std::string::npos;
    hyper |= b.starts_with("hyper.");
  }
  o.detail << " " << gc.sampled.size() << " parameters, max relative error "
           << gc.max_relative_error;
  o.require(gc.sampled.size() >= 50, ">= 50 parameters");
  o.require(re && im && fatt && hyper, "every layer type sampled");
  o.require(gc.max_relative_error < 1e-4, "max relative error < 1e-4");
}

void classic(Outcome& o) {
  const Shape3 shape{1, 32, 32};
  PhantomOptions opt;
  opt.min_sigma_px = 2.0;
  opt.max_sigma_px = 5.0;
  const RealGrid Y =
      degrade(make_phantom(shape, 42, opt), generate_stripe_field(shape, StripeModel{}, 43));
  const HessianPrior prior = HessianPrior::from_config(RunConfig{}, shape);
  const IterationParams hp{1.0, 0.1};
  const auto t0 = Clock::now();
  const ClassicRun r10 = classic_split_bregman(Y, prior, hp, 10);
  const ClassicRun r500 = classic_split_bregman(Y, prior, hp, 500);
  const double elapsed = seconds_since(t0);
  bool monotone = true;
  for (std::size_t k = 1; k < r10.objective.size(); ++k) {
    monotone &= r10.objective[k] <= r10.objective[k - 1];
  }
  const double rel = rel_l2(r10.X, r500.X);
  o.detail << " objective " << r10.objective.front() << " -> " << r10.objective.back()
           << ", 10 vs 500 iterations " << 100 * rel << "%, " << elapsed << " s";
  o.require(monotone, "objective non-increasing from iteration 2");
  o.require(rel < 0.01, "within 1% of 500 iterations");
  o.require(elapsed < 10.0, "runtime < 10 s");
}

void fgnn_examples(Outcome& o) {
  ParameterLayout layout;
  const FGNNLayer layer{ComplexLinear::add(layout, "w1", 1, 1),
                        ComplexLinear::add(layout, "w2", 1, 1), false};
  {
    GraphBuilder b;
    const Index p = b.add({1.0, 0.0}, false);
    const Index q1 = b.add({1.0, 0.0}, false), q2 = b.add({1.0, 0.0}, false);
    b.link(p, q1, 0.3);
    b.link(p, q2, 0.9);
    b.link(q1, q2, 1.0);
    b.link(q2, q1, 1.0);
    const SpectralGraph g = b.build();
    std::vector<double> params(std::size_t(layout.size()), 0.0);
    set_weight(params, layer.w1, 1.0);
    const Complex v = fgnn_forward(layer, params, g, input_of(g))(p, 0);
    o.detail << " first " << v;
    o.require(std::abs(v - Complex(1.0, 0.0)) < 1e-12, "first branch 1+0i");
  }
  {
    GraphBuilder b;
    const Index p = b.add({1.0, 0.0}, true);
    const Index q1 = b.add({0.1, 0.0}, false), q2 = b.add({1.0, 0.0}, false);
    b.link(p, q1, 2.0 / 3.0);
    b.link(p, q2, 1.0 / 3.0);
    b.link(q1, q2, 1.0);
    b.link(q2, q1, 1.0);
    const SpectralGraph g = b.build();
    std::vector<double> params(std::size_t(layout.size()), 0.0);
    set_weight(params, layer.w1, 1.0);
    set_weight(params, layer.w2, 1.0);
    const Complex v = fgnn_forward(layer, params, g, input_of(g))(p, 0);
    o.detail << ", second " << v;
    o.require(std::abs(v - Complex(0.6, 0.0)) < 1e-12, "second branch 0.6+0i");
  }
  {
    GraphBuilder b;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int n = 0; n < 6; ++n) b.add({u(rng), u(rng)}, n % 3 == 0);
    for (Index n = 0; n < 6; ++n) {
      b.link(n, 1, 0.5);
      b.link(n, 2, 0.25);
    }
    const SpectralGraph g = b.build();
    const std::vector<double> params(std::size_t(layout.size()), 0.0);
    const double m = fgnn_forward(layer, params, g, input_of(g)).cwiseAbs().maxCoeff();
    o.detail << ", zero weights max " << m;
    o.require(m < 1e-12, "zero weights give zero");
  }
}

void subgraph(Outcome& o) {
  const RealGrid Y = striped_small({1, 16, 16}, 13);
  RunConfig cfg;
  cfg.layers_L = 2;
  cfg.neighbors_N = 6;
  cfg.mask_threshold = 0.05;
  cfg.dc_guard_radius_px = 2;
  cfg.unroll_K = 2;
  const DestripeProblem pruned = prepare_problem(Y, cfg, 90.0, 21);
  DestripeProblem full = pruned;
  full.graph = build_full_graph(pruned.spectrum, pruned.field, pruned.annuli, cfg.neighbors_N, 21);
  const UnrolledModel model = UnrolledModel::create(cfg);
  std::vector<double> params = model.initial_parameters(5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : params) v += u(rng);
  const RealGrid a = unfolded_forward(pruned, model, params);
  const RealGrid b = unfolded_forward(full, model, params);
  o.detail << " nodes " << pruned.graph.node_count() << " vs " << full.graph.node_count()
           << ", corrupted " << pruned.graph.corrupted_nodes.size() << ", output change "
           << rel_l2(a, Y);
  o.require(!pruned.graph.corrupted_nodes.empty(), "has corrupted bins");
  o.require(pruned.graph.node_count() < full.graph.node_count(), "graph is pruned");
  o.require(rel_l2(a, Y) > 1e-6, "network changes the output");
  o.require((a.array() == b.array()).all(), "bit-identical outputs");
}

void round_trips(Outcome& o) {
  TempDir dir("accept_rt");
  const RealGrid v = random_grid({4, 24, 20}, 3, 0.0, 1.0);
  const double fft = rel_l2(inverse_spectrum(forward_spectrum(v)), v);
  o.detail << " FFT " << fft;
  o.require(fft < 1e-6, "FFT round trip");

  Volume f32;
  f32.data = v;
  quantize_float32(f32.data);
  f32.spacing = {2.0, 0.5, 0.5};
  f32.stripe_axis = StripeAxis::horizontal();
  for (const char* name : {"v.raw", "v.tif"}) {
    save_volume(f32, dir / name);
    const Volume back = load_volume(dir / name);
    o.require((back.data.array() == f32.data.array()).all(), std::string(name) + " bit-exact");
  }

  const SimulateResult sim = run_simulate({2, 32, 32}, StripeModel{}, 5);
  RunConfig cfg;
  cfg.train_epochs = 3;
  cfg.neighbors_N = 4;
  cfg.hidden_dims = {4};
  cfg.unroll_K = 1;
  cfg.mask_threshold = 0.05;
  cfg.dc_guard_radius_px = 2;
  const DestripeResult trained = run_destripe(sim.degraded, cfg, {});
  save_checkpoint(dir / "m.ckpt", trained.model.layout, trained.params);
  DestripeOptions reuse;
  reuse.load_checkpoint = dir / "m.ckpt";
  const DestripeResult again = run_destripe(sim.degraded, cfg, reuse);
  o.require((again.output.data.array() == trained.output.data.array()).all(),
            "checkpoint reproduces inference");
  o.detail << ", file I/O and checkpoint exact";
}

void loss_identities(Outcome& o) {
  const RealGrid Y = striped_small({2, 16, 16}, 5);
  RunConfig cfg;
  cfg.mask_threshold = 0.05;
  cfg.dc_guard_radius_px = 2;
  const DestripeProblem p = prepare_problem(Y, cfg, 90.0, 1);
  const RealGrid X = random_grid(Y.shape(), 6, 0.2, 1.0);
  const double beta = 0.7;
  const LossBreakdown l = self2self_loss(X, Y, p.field, p.annuli, beta);
  const double sum_err = std::abs(l.total - (l.mse + beta * l.isotropy)) / l.total;
  o.detail << " total identity " << sum_err;
  o.require(sum_err < 1e-12, "total = mse + beta iso");

  ComplexGrid flat = forward_spectrum(X).coeffs;
  for (Index n = 0; n < flat.size(); ++n) {
    flat[n] = std::polar(1.0 + p.annuli.ring_id.data()[n % p.annuli.slice_size()],
                         std::arg(flat[n]));
  }
  const double iso_flat = isotropy_penalty(flat, p.field.M, p.annuli);
  o.detail << ", annulus-constant " << iso_flat;
  o.require(iso_flat < 1e-20, "isotropy zero on annulus-constant spectra");

  const AnnulusIndex a = build_annuli(8, 8, 0.45);
  const auto& ring = a.ring_members[2];
  ComplexGrid spec({1, 8, 8});
  MaskGrid M({1, 8, 8});
  spec[ring[0]] = 3.0;
  M[ring[0]] = 1;
  spec[ring[1]] = Complex(0.0, 1.0);
  spec[ring[2]] = -1.0;
  spec[ring[3]] = Complex(0.6, -0.8);
  const double toy = isotropy_penalty(spec, M, a);
  o.detail << ", toy " << toy;
  o.require(ring.size() == 4 && std::abs(toy - 4.0) < 4e-12, "toy value 4");
}

void adjoints(Outcome& o) {
  const Shape3 shape{8, 16, 16};
  const RealGrid v = random_grid(shape, 1), u = random_grid(shape, 2);
  double worst = 0.0;
  for (Boundary b : {Boundary::reflective, Boundary::periodic}) {
    for (Direction d : kDirections) {
      const double lhs = (second_derivative(v, d, b).array() * u.array()).sum();
      const double rhs = (v.array() * second_derivative_adjoint(u, d, b).array()).sum();
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  o.detail << " max |<Dv,u> - <v,D^T u>| " << worst;
  o.require(worst < 1e-10, "adjoint gap < 1e-10");
}

}  // namespace

int main() {
  report(2, "end-to-end improvement", end_to_end);
  report(3, "detector localization", detector);
  report(4, "gradient correctness", gradients);
  report(5, "classic split Bregman", classic);
  report(6, "FGNN examples", fgnn_examples);
  report(7, "subgraph equivalence", subgraph);
  report(8, "round trips", round_trips);
  report(9, "loss identities", loss_identities);
  report(10, "Hessian adjoints", adjoints);
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failing" << std::endl;
  return failures ? 1 : 0;
}
