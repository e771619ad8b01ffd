#include "destripe/config.hpp"

#include "destripe/error.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

namespace destripe {

namespace {

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ValidationError(std::string("config key '") + key + "': " + what);
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "': wrong type");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "annulus_width_px", "mask_threshold", "wedge_half_angle_deg", "dc_guard_radius_px",
      "neighbors_N",      "layers_L",       "hidden_dims",          "unroll_K",
      "loss_beta",        "lambda_x",       "lambda_y",             "lambda_z",
      "train_epochs",     "learning_rate",  "rng_seed",             "tie_weights",
      "resample_neighbors"};
  return keys;
}

}  // namespace

void RunConfig::validate() const {
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0; };
  require(finite_pos(annulus_width_px), "annulus_width_px", "must be positive");
  require(mask_threshold > 0 && mask_threshold < 1, "mask_threshold", "must lie in (0, 1)");
  require(wedge_half_angle_deg > 0 && wedge_half_angle_deg < 90, "wedge_half_angle_deg",
          "must lie in (0, 90)");
  require(dc_guard_radius_px >= 0, "dc_guard_radius_px", "must be nonnegative");
  require(neighbors_N > 0, "neighbors_N", "must be positive");
  require(layers_L > 0, "layers_L", "must be positive");
  require(static_cast<int>(hidden_dims.size()) >= layers_L - 1, "hidden_dims",
          "needs at least layers_L - 1 entries");
  for (int d : hidden_dims) require(d > 0, "hidden_dims", "entries must be positive");
  require(unroll_K > 0, "unroll_K", "must be positive");
  require(std::isfinite(loss_beta) && loss_beta >= 0, "loss_beta", "must be nonnegative");
  require(finite_pos(lambda_x), "lambda_x", "must be positive");
  require(finite_pos(lambda_y), "lambda_y", "must be positive");
  require(finite_pos(lambda_z), "lambda_z", "must be positive");
  require(train_epochs > 0, "train_epochs", "must be positive");
  require(finite_pos(learning_rate), "learning_rate", "must be positive");
}

nlohmann::json to_json(const RunConfig& cfg) {
  return nlohmann::json{{"annulus_width_px", cfg.annulus_width_px},
                        {"mask_threshold", cfg.mask_threshold},
                        {"wedge_half_angle_deg", cfg.wedge_half_angle_deg},
                        {"dc_guard_radius_px", cfg.dc_guard_radius_px},
                        {"neighbors_N", cfg.neighbors_N},
                        {"layers_L", cfg.layers_L},
                        {"hidden_dims", cfg.hidden_dims},
                        {"unroll_K", cfg.unroll_K},
                        {"loss_beta", cfg.loss_beta},
                        {"lambda_x", cfg.lambda_x},
                        {"lambda_y", cfg.lambda_y},
                        {"lambda_z", cfg.lambda_z},
                        {"train_epochs", cfg.train_epochs},
                        {"learning_rate", cfg.learning_rate},
                        {"rng_seed", cfg.rng_seed},
                        {"tie_weights", cfg.tie_weights},
                        {"resample_neighbors", cfg.resample_neighbors}};
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  RunConfig cfg;
  read(j, "annulus_width_px", cfg.annulus_width_px);
  read(j, "mask_threshold", cfg.mask_threshold);
  read(j, "wedge_half_angle_deg", cfg.wedge_half_angle_deg);
  read(j, "dc_guard_radius_px", cfg.dc_guard_radius_px);
  read(j, "neighbors_N", cfg.neighbors_N);
  read(j, "layers_L", cfg.layers_L);
  read(j, "hidden_dims", cfg.hidden_dims);
  read(j, "unroll_K", cfg.unroll_K);
  read(j, "loss_beta", cfg.loss_beta);
  read(j, "lambda_x", cfg.lambda_x);
  read(j, "lambda_y", cfg.lambda_y);
  read(j, "lambda_z", cfg.lambda_z);
  read(j, "train_epochs", cfg.train_epochs);
  read(j, "learning_rate", cfg.learning_rate);
  read(j, "rng_seed", cfg.rng_seed);
  read(j, "tie_weights", cfg.tie_weights);
  read(j, "resample_neighbors", cfg.resample_neighbors);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed writing config " + path.string());
}

}  // namespace destripe
