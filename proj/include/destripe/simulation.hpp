#pragma once

#include "destripe/grid.hpp"

#include "json.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace destripe {

/// One family of stripes: `count` Gaussian bumps in the attenuation profile.
/// Each bump gets amplitude * U(0.5, 1) and a full width at half maximum
/// drawn from [width_px / 2, width_px].
struct StripeComponent {
  int count = 0;
  double amplitude = 0.0;
  double width_px = 1.0;
  bool operator==(const StripeComponent&) const = default;
};

/// Multiplicative stripe field S = exp(-a(t) g(u)), t across and u along the
/// stripes. Thin bumps sit near a regular grid (quasi-periodic), thick ones
/// anywhere.
struct StripeModel {
  double direction_deg = 90.0;
  StripeComponent thin{4, 0.8, 2.0};
  StripeComponent thick{1, 0.03, 20.0};
  double modulation_px = 64.0;  // infinity: constant along the stripes
  double slice_jitter = 0.1;    // per-slice relative amplitude spread

  bool operator==(const StripeModel&) const = default;
  void validate() const;
};

nlohmann::json to_json(const StripeModel& m);
StripeModel stripe_model_from_json(const nlohmann::json& j);

struct StripeBump {
  double center = 0.0;
  double amplitude = 0.0;
  double sigma = 0.0;
  bool thin = true;
};

/// The attenuation bumps `generate_stripe_field` uses for this seed and
/// in-slice size.
std::vector<StripeBump> stripe_bumps(const StripeModel& model, Index rows, Index cols,
                                     std::uint64_t seed);

RealGrid generate_stripe_field(const Shape3& shape, const StripeModel& model, std::uint64_t seed);

/// Y = S * X elementwise.
RealGrid degrade(const RealGrid& X, const RealGrid& S);

inline constexpr Index kAnisotropyMinSize = 64;

struct PhantomOptions {
  int min_blobs = 20;
  int max_blobs = 60;
  double min_sigma_px = 5.0;
  double max_sigma_px = 12.0;
  double background = 0.2;
  double noise_sigma = 0.0001;  // white texture, relative to the blob range
  double max_anisotropy = 2.0;
  int max_attempts = 32;
};

/// Gaussian blobs, periodic in-plane, plus weak white texture, rescaled to
/// [background, 1] and rounded to float32. Redrawn until `phantom_anisotropy` is within
/// `max_anisotropy`; smaller slices than kAnisotropyMinSize are not checked.
RealGrid make_phantom(const Shape3& shape, std::uint64_t seed, const PhantomOptions& opt = {});

/// Max over min of the slice-averaged angular profile (1 degree bins) of
/// spectral amplitude divided by its ring mean, over rings 4 .. min(rows, cols) / 2.
double phantom_anisotropy(const RealGrid& volume);

struct Psnr {
  double db = std::numeric_limits<double>::infinity();
  bool identical = true;
};

Psnr psnr(const RealGrid& a, const RealGrid& b, double peak = 1.0);
std::vector<Psnr> psnr_per_slice(const RealGrid& a, const RealGrid& b, double peak = 1.0);

/// Mean over slices of windowed SSIM (11 x 11 Gaussian, sigma 1.5, valid
/// windows only).
double ssim(const RealGrid& a, const RealGrid& b, double peak = 1.0);
std::vector<double> ssim_per_slice(const RealGrid& a, const RealGrid& b, double peak = 1.0);

/// Rounds every value to the nearest float32.
void quantize_float32(RealGrid& g);

}  // namespace destripe
