#include "destripe/pipeline.hpp"

#include "destripe/checkpoint.hpp"
#include "destripe/error.hpp"

#include <algorithm>
#include <sstream>

namespace destripe {

AxisChoice AxisChoice::parse(const std::string& text) {
  AxisChoice c;
  if (text.empty()) return c;
  if (text == "auto") {
    c.mode = Mode::automatic;
    return c;
  }
  c.mode = Mode::fixed;
  c.axis = parse_stripe_axis(text);
  return c;
}

ResolvedAxis resolve_axis(const Volume& v, const SpectralVolume& spectrum,
                          const AnnulusIndex& annuli, const RunConfig& cfg,
                          const AxisChoice& choice) {
  ResolvedAxis r;
  switch (choice.mode) {
    case AxisChoice::Mode::metadata:
      r.stripe_angle_deg = v.stripe_axis.degrees();
      break;
    case AxisChoice::Mode::fixed:
      r.stripe_angle_deg = choice.axis.degrees();
      break;
    case AxisChoice::Mode::automatic: {
      r.detected = detect_stripe_direction(spectrum, annuli, cfg.dc_guard_radius_px);
      if (r.detected->dominant) {
        r.stripe_angle_deg = r.detected->stripe_angle_deg;
      } else {
        r.stripe_angle_deg = v.stripe_axis.degrees();
        std::ostringstream msg;
        msg << "no dominant stripe direction (confidence " << r.detected->confidence
            << "); using the volume's stripe axis " << r.stripe_angle_deg << " deg";
        r.warnings.push_back(msg.str());
      }
      break;
    }
  }
  return r;
}

DetectResult run_detect(const Volume& v, const RunConfig& cfg, const AxisChoice& choice) {
  v.validate();
  cfg.validate();
  const SpectralVolume spectrum = forward_spectrum(v);
  const AnnulusIndex annuli = build_annuli(v.shape().rows, v.shape().cols, cfg.annulus_width_px);
  DetectResult out;
  out.axis = resolve_axis(v, spectrum, annuli, cfg, choice);
  const WhitenedSpectrum whitened = whiten_magnitudes(spectrum, annuli);
  out.field = corruption_mask(corruption_matrix(whitened), annuli, cfg, out.axis.stripe_angle_deg);

  const Index plane = annuli.slice_size();
  const Index total = v.data.size();
  const Index masked = out.field.masked_count();
  Index in_wedge = 0;
  for (Index n = 0; n < total; ++n) {
    if (out.field.M[n]) {
      const Index flat = n % plane;
      in_wedge += out.field.wedge_mask(flat / annuli.cols, flat % annuli.cols) != 0;
    }
  }
  nlohmann::json rings = nlohmann::json::array();
  for (int r = 0; r < annuli.ring_count(); ++r) {
    Index ring_masked = 0, flagged = 0;
    std::vector<double> sigmas;
    for (Index k = 0; k < v.shape().depth; ++k) {
      const RingScale& s = whitened.scales[std::size_t(k * annuli.ring_count() + r)];
      sigmas.push_back(s.sigma);
      flagged += s.flagged;
      for (Index flat : annuli.ring_members[std::size_t(r)]) ring_masked += out.field.M[k * plane + flat];
    }
    std::sort(sigmas.begin(), sigmas.end());
    rings.push_back({{"ring", r},
                     {"members_per_slice", annuli.ring_members[std::size_t(r)].size()},
                     {"masked", ring_masked},
                     {"median_sigma", sigmas[sigmas.size() / 2]},
                     {"flagged_slices", flagged}});
  }
  std::vector<std::string> warnings = out.axis.warnings;
  warnings.insert(warnings.end(), out.field.warnings.begin(), out.field.warnings.end());
  out.report = {{"schema_version", kReportSchemaVersion},
                {"command", "detect"},
                {"stripe_angle", out.axis.stripe_angle_deg},
                {"masked_bin_count", masked},
                {"masked_fraction", double(masked) / double(total)},
                {"masked_in_wedge", in_wedge},
                {"per_ring_stats", rings},
                {"warnings", warnings}};
  if (out.axis.detected) {
    out.report["confidence"] = out.axis.detected->confidence;
    out.report["dominant_direction"] = out.axis.detected->dominant;
    out.report["detected_stripe_angle"] = out.axis.detected->stripe_angle_deg;
  } else {
    const DirectionEstimate est =
        detect_stripe_direction(spectrum, annuli, cfg.dc_guard_radius_px);
    out.report["confidence"] = est.confidence;
    out.report["dominant_direction"] = est.dominant;
    out.report["detected_stripe_angle"] = est.stripe_angle_deg;
  }
  return out;
}

SimulateResult run_simulate(const Shape3& shape, const StripeModel& model, std::uint64_t seed) {
  model.validate();
  SimulateResult out;
  out.clean.data = make_phantom(shape, seed);
  out.stripes.data = generate_stripe_field(shape, model, seed + 1);
  quantize_float32(out.stripes.data);
  out.degraded.data = degrade(out.clean.data, out.stripes.data);
  quantize_float32(out.degraded.data);
  const StripeAxis axis = StripeAxis::at_angle(model.direction_deg);
  const StripeAxis named = axis.angle == 90.0  ? StripeAxis::vertical()
                           : axis.angle == 0.0 ? StripeAxis::horizontal()
                                               : axis;
  out.clean.stripe_axis = out.stripes.stripe_axis = out.degraded.stripe_axis = named;
  const Psnr p = psnr(out.degraded.data, out.clean.data);
  out.report = {{"schema_version", kReportSchemaVersion},
                {"command", "simulate"},
                {"shape", {shape.depth, shape.rows, shape.cols}},
                {"seed", seed},
                {"stripe_model", to_json(model)},
                {"psnr_degraded_db", p.db},
                {"ssim_degraded", ssim(out.degraded.data, out.clean.data)}};
  return out;
}

DestripeResult run_destripe(const Volume& Y, const RunConfig& cfg, const DestripeOptions& opt) {
  Y.validate();
  cfg.validate();
  const SpectralVolume spectrum = forward_spectrum(Y);
  const AnnulusIndex annuli = build_annuli(Y.shape().rows, Y.shape().cols, cfg.annulus_width_px);
  const ResolvedAxis axis = resolve_axis(Y, spectrum, annuli, cfg, opt.axis);

  DestripeProblem problem = prepare_problem(Y.data, cfg, axis.stripe_angle_deg, cfg.rng_seed);
  DestripeResult out;
  out.model = UnrolledModel::create(cfg);
  std::vector<std::string> warnings = axis.warnings;
  warnings.insert(warnings.end(), problem.warnings.begin(), problem.warnings.end());

  if (opt.load_checkpoint) {
    Checkpoint ck = load_checkpoint(*opt.load_checkpoint);
    if (!(ck.layout == out.model.layout)) {
      throw ValidationError("checkpoint parameters do not match the configured architecture");
    }
    out.params = std::move(ck.params);
  } else {
    TrainResult tr =
        train(problem, out.model, cfg, out.model.initial_parameters(cfg.rng_seed), opt.on_epoch);
    out.params = std::move(tr.params);
    out.log = std::move(tr.log);
    out.trained = true;
    warnings.insert(warnings.end(), tr.warnings.begin(), tr.warnings.end());
  }

  std::vector<IterationReport> iterations;
  out.output.data = unfolded_forward(problem, out.model, out.params, nullptr, &iterations);
  out.output.spacing = Y.spacing;
  out.output.stripe_axis = Y.stripe_axis;

  const GraphStats stats = graph_stats(problem.graph);
  const LossBreakdown final_loss =
      self2self_loss(out.output.data, Y.data, problem.field, problem.annuli, cfg.loss_beta);
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& r : iterations) iters.push_back(to_json(r));
  out.report = {{"schema_version", kReportSchemaVersion},
                {"command", "destripe"},
                {"stripe_angle", axis.stripe_angle_deg},
                {"trained", out.trained},
                {"epochs", out.log.size()},
                {"masked_bin_count", problem.field.masked_count()},
                {"graph",
                 {{"nodes", stats.nodes},
                  {"corrupted", stats.corrupted},
                  {"mean_degree", stats.mean_degree},
                  {"shortfall", stats.shortfall},
                  {"unrecoverable", stats.unrecoverable}}},
                {"parameter_count", out.model.layout.size()},
                {"final_loss",
                 {{"mse", final_loss.mse},
                  {"isotropy", final_loss.isotropy},
                  {"total", final_loss.total}}},
                {"iterations", iters},
                {"disabled_directions", problem.prior.disabled()},
                {"warnings", warnings}};
  if (axis.detected) out.report["direction_confidence"] = axis.detected->confidence;
  out.checkpoint_extra = {{"config", to_json(cfg)}, {"stripe_angle", axis.stripe_angle_deg}};
  return out;
}

nlohmann::json evaluate_report(const RealGrid& a, const RealGrid& b, double peak) {
  auto db = [](const Psnr& p) -> nlohmann::json {
    if (p.identical) return "identical";
    return p.db;
  };
  const Psnr whole = psnr(a, b, peak);
  const std::vector<Psnr> slices = psnr_per_slice(a, b, peak);
  const std::vector<double> s = ssim_per_slice(a, b, peak);
  double mean_ssim = 0.0;
  for (double v : s) mean_ssim += v;
  mean_ssim /= double(s.size());
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t k = 0; k < s.size(); ++k) {
    per.push_back({{"slice", k}, {"psnr_db", db(slices[k])}, {"ssim", s[k]}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"command", "evaluate"},
          {"peak", peak},
          {"psnr_db", db(whole)},
          {"ssim", mean_ssim},
          {"per_slice", per}};
}

}  // namespace destripe
