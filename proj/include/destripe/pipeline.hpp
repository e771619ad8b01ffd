#pragma once

#include "destripe/config.hpp"
#include "destripe/simulation.hpp"
#include "destripe/spectral.hpp"
#include "destripe/training.hpp"
#include "destripe/volume.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace destripe {

inline constexpr int kReportSchemaVersion = 1;

/// How the stripe direction is chosen: the volume's own metadata, a fixed
/// axis, or detection from the spectrum.
struct AxisChoice {
  enum class Mode { metadata, fixed, automatic } mode = Mode::metadata;
  StripeAxis axis;

  /// "auto", "horizontal", "vertical" or degrees.
  static AxisChoice parse(const std::string& text);
};

struct ResolvedAxis {
  double stripe_angle_deg = 90.0;
  std::optional<DirectionEstimate> detected;
  std::vector<std::string> warnings;
};

ResolvedAxis resolve_axis(const Volume& v, const SpectralVolume& spectrum,
                          const AnnulusIndex& annuli, const RunConfig& cfg,
                          const AxisChoice& choice);

struct DetectResult {
  ResolvedAxis axis;
  CorruptionField field;
  nlohmann::json report;
};

DetectResult run_detect(const Volume& v, const RunConfig& cfg, const AxisChoice& choice);

struct SimulateResult {
  Volume clean;
  Volume stripes;
  Volume degraded;
  nlohmann::json report;
};

/// Phantom, stripe field and their product, all rounded to float32.
SimulateResult run_simulate(const Shape3& shape, const StripeModel& model, std::uint64_t seed);

struct DestripeOptions {
  AxisChoice axis;
  std::optional<std::filesystem::path> load_checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct DestripeResult {
  Volume output;
  UnrolledModel model;
  std::vector<double> params;
  std::vector<EpochRecord> log;
  bool trained = false;
  nlohmann::json checkpoint_extra;
  nlohmann::json report;
};

/// detect, graph, train (or load parameters), final unrolled pass.
DestripeResult run_destripe(const Volume& Y, const RunConfig& cfg, const DestripeOptions& opt);

nlohmann::json evaluate_report(const RealGrid& a, const RealGrid& b, double peak = 1.0);

}  // namespace destripe
