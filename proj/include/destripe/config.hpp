#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace destripe {

/// Every tunable of a run. Defaults are the values documented in README.
struct RunConfig {
  double annulus_width_px = 1.0;
  double mask_threshold = 1e-3;
  double wedge_half_angle_deg = 10.0;
  int dc_guard_radius_px = 3;
  int neighbors_N = 32;
  int layers_L = 2;
  std::vector<int> hidden_dims = {16, 16};
  int unroll_K = 3;
  double loss_beta = 1.0;
  double lambda_x = 1.0;
  double lambda_y = 1.0;
  double lambda_z = 0.1;
  int train_epochs = 300;
  double learning_rate = 1e-3;
  std::uint64_t rng_seed = 42;
  // Share one network across all unrolled iterations.
  bool tie_weights = false;
  // Redraw neighbor sets every epoch instead of once at graph build.
  bool resample_neighbors = false;

  bool operator==(const RunConfig&) const = default;

  /// Throws ValidationError naming the first out-of-range key.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Absent keys keep their defaults; unknown keys and out-of-range values
/// raise ValidationError naming the key.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace destripe
