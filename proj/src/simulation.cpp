#include "destripe/simulation.hpp"

#include "destripe/error.hpp"
#include "destripe/parallel.hpp"
#include "destripe/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace destripe {

namespace {

constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

// Coordinates across (t) and along (u) the stripes for one stripe angle.
struct StripeFrame {
  double s = 1.0, c = 0.0;
  double t_min = 0.0;
  double extent = 0.0;
  bool periodic = true;

  StripeFrame(double direction_deg, Index rows, Index cols) {
    const double a = direction_deg * std::numbers::pi / 180.0;
    s = std::sin(a);
    c = std::cos(a);
    if (std::abs(c) < 1e-12) {
      s = s > 0 ? 1.0 : -1.0;
      c = 0.0;
    } else if (std::abs(s) < 1e-12) {
      s = 0.0;
      c = c > 0 ? 1.0 : -1.0;
    }
    periodic = s == 0.0 || c == 0.0;
    const double corners[4][2] = {{0, 0}, {double(cols - 1), 0}, {0, double(rows - 1)},
                                  {double(cols - 1), double(rows - 1)}};
    double lo = 1e300, hi = -1e300;
    for (const auto& p : corners) {
      const double t = p[0] * s - p[1] * c;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    t_min = lo;
    extent = periodic ? (c == 0.0 ? double(cols) : double(rows)) : hi - lo + 1.0;
  }

  double across(Index i, Index j) const { return double(j) * s - double(i) * c - t_min; }
  double along(Index i, Index j) const { return double(j) * c + double(i) * s; }

  double distance(double t, double center) const {
    double d = t - center;
    if (periodic) d -= extent * std::round(d / extent);
    return d;
  }
};

double gaussian_window_weight(int dy, int dx) {
  return std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
}

void check_pair(const RealGrid& a, const RealGrid& b) {
  if (!same_shape(a, b)) throw ValidationError("metric inputs have different shapes");
}

}  // namespace

// ---------------------------------------------------------------- stripes

void StripeModel::validate() const {
  auto check = [](const StripeComponent& c, const char* name) {
    if (c.count < 0) throw ValidationError(std::string(name) + ".count must be nonnegative");
    if (!(c.amplitude >= 0)) {
      throw ValidationError(std::string(name) + ".amplitude must be nonnegative");
    }
    if (!(c.width_px > 0)) throw ValidationError(std::string(name) + ".width_px must be positive");
  };
  check(thin, "thin");
  check(thick, "thick");
  if (!(modulation_px > 0)) throw ValidationError("modulation_px must be positive");
  if (!(slice_jitter >= 0 && slice_jitter < 1)) {
    throw ValidationError("slice_jitter must be in [0, 1)");
  }
  if (!std::isfinite(direction_deg)) throw ValidationError("direction_deg must be finite");
}

nlohmann::json to_json(const StripeModel& m) {
  auto comp = [](const StripeComponent& c) {
    return nlohmann::json{{"count", c.count}, {"amplitude", c.amplitude}, {"width_px", c.width_px}};
  };
  nlohmann::json j = {{"direction_deg", m.direction_deg},
                      {"thin_quasi_periodic", comp(m.thin)},
                      {"thick_aperiodic", comp(m.thick)},
                      {"slice_jitter", m.slice_jitter}};
  if (std::isinf(m.modulation_px)) {
    j["modulation_px"] = nullptr;
  } else {
    j["modulation_px"] = m.modulation_px;
  }
  return j;
}

StripeModel stripe_model_from_json(const nlohmann::json& j) {
  StripeModel m;
  try {
    auto comp = [](const nlohmann::json& c, StripeComponent& out) {
      out.count = c.value("count", out.count);
      out.amplitude = c.value("amplitude", out.amplitude);
      out.width_px = c.value("width_px", out.width_px);
    };
    m.direction_deg = j.value("direction_deg", m.direction_deg);
    if (j.contains("thin_quasi_periodic")) comp(j["thin_quasi_periodic"], m.thin);
    if (j.contains("thick_aperiodic")) comp(j["thick_aperiodic"], m.thick);
    if (j.contains("modulation_px")) {
      m.modulation_px = j["modulation_px"].is_null()
                            ? std::numeric_limits<double>::infinity()
                            : j["modulation_px"].get<double>();
    }
    m.slice_jitter = j.value("slice_jitter", m.slice_jitter);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad stripe model: ") + e.what());
  }
  m.validate();
  return m;
}

std::vector<StripeBump> stripe_bumps(const StripeModel& model, Index rows, Index cols,
                                     std::uint64_t seed) {
  model.validate();
  const StripeFrame frame(model.direction_deg, rows, cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<StripeBump> bumps;
  if (model.thin.count > 0) {
    const double period = frame.extent / model.thin.count;
    const double phase = draw(0.0, period);
    for (int n = 0; n < model.thin.count; ++n) {
      StripeBump b;
      b.center = phase + n * period + draw(-0.15, 0.15) * period;
      b.amplitude = draw(0.5, 1.0) * model.thin.amplitude;
      b.sigma = draw(0.5 * model.thin.width_px, model.thin.width_px) / kFwhmToSigma;
      bumps.push_back(b);
    }
  }
  for (int n = 0; n < model.thick.count; ++n) {
    StripeBump b;
    b.thin = false;
    b.center = draw(0.0, frame.extent);
    b.amplitude = draw(0.5, 1.0) * model.thick.amplitude;
    b.sigma = draw(0.5 * model.thick.width_px, model.thick.width_px) / kFwhmToSigma;
    bumps.push_back(b);
  }
  return bumps;
}

RealGrid generate_stripe_field(const Shape3& shape, const StripeModel& model, std::uint64_t seed) {
  const std::vector<StripeBump> bumps = stripe_bumps(model, shape.rows, shape.cols, seed);
  const StripeFrame frame(model.direction_deg, shape.rows, shape.cols);
  // Continue the stream after the bumps for modulation phase and jitter.
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  std::vector<double> jitter(std::size_t(shape.depth));
  for (auto& j : jitter) j = 1.0 + model.slice_jitter * (2.0 * unit(rng) - 1.0);

  Plane<double> exponent(shape.rows, shape.cols);
  for (Index i = 0; i < shape.rows; ++i) {
    for (Index j = 0; j < shape.cols; ++j) {
      const double t = frame.across(i, j);
      double a = 0.0;
      for (const StripeBump& b : bumps) {
        const double d = frame.distance(t, b.center);
        a += b.amplitude * std::exp(-d * d / (2.0 * b.sigma * b.sigma));
      }
      double g = 1.0;
      if (std::isfinite(model.modulation_px)) {
        g = 0.9 + 0.1 * std::cos(2.0 * std::numbers::pi * frame.along(i, j) / model.modulation_px +
                                 phase);
      }
      exponent(i, j) = a * g;
    }
  }
  RealGrid S(shape);
  for (Index k = 0; k < shape.depth; ++k) {
    S.slice(k) = (-jitter[std::size_t(k)] * exponent).exp();
  }
  return S;
}

RealGrid degrade(const RealGrid& X, const RealGrid& S) {
  if (!same_shape(X, S)) throw ValidationError("volume and stripe field shapes differ");
  RealGrid Y(X.shape());
  Y.array() = X.array() * S.array();
  return Y;
}

// ---------------------------------------------------------------- phantom

void quantize_float32(RealGrid& g) {
  g.array() = g.array().cast<float>().cast<double>();
}

double phantom_anisotropy(const RealGrid& volume) {
  const SpectralVolume spec = forward_spectrum(volume);
  const AnnulusIndex annuli = build_annuli(volume.rows(), volume.cols(), 1.0);
  const int last = int(std::min(volume.rows(), volume.cols()) / 2);
  std::vector<double> sum(180, 0.0);
  std::vector<Index> count(180, 0);
  for (Index k = 0; k < volume.depth(); ++k) {
    for (int r = 4; r <= last && r < annuli.ring_count(); ++r) {
      const auto& members = annuli.ring_members[std::size_t(r)];
      double mean = 0.0;
      for (Index flat : members) mean += std::abs(spec.coeffs[k * annuli.slice_size() + flat]);
      mean /= double(members.size());
      if (!(mean > 0)) continue;
      for (Index flat : members) {
        const Index i = flat / annuli.cols, j = flat % annuli.cols;
        const int bin = int(std::lround(annuli.theta_deg(i, j))) % 180;
        sum[std::size_t(bin)] += std::abs(spec.coeffs[k * annuli.slice_size() + flat]) / mean;
        ++count[std::size_t(bin)];
      }
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int b = 0; b < 180; ++b) {
    if (!count[std::size_t(b)]) continue;
    const double v = sum[std::size_t(b)] / double(count[std::size_t(b)]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return lo > 0 && std::isfinite(lo) ? hi / lo : std::numeric_limits<double>::infinity();
}

RealGrid make_phantom(const Shape3& shape, std::uint64_t seed, const PhantomOptions& opt) {
  if (shape.depth < 1 || shape.rows < 8 || shape.cols < 8) {
    throw ValidationError("phantom needs at least 1x8x8 voxels");
  }
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * std::uint64_t(attempt));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    std::uniform_int_distribution<int> blob_count(opt.min_blobs, opt.max_blobs);
    const int blobs = blob_count(rng);
    RealGrid v(shape);
    for (int n = 0; n < blobs; ++n) {
      const double cz = draw(0, double(shape.depth));
      const double cy = draw(0, double(shape.rows));
      const double cx = draw(0, double(shape.cols));
      const double sigma = draw(opt.min_sigma_px, opt.max_sigma_px);
      const double amp = draw(0.3, 1.0);
      const double inv = 1.0 / (2.0 * sigma * sigma);
      parallel_for(shape.depth, [&](Index k) {
        const double dz2 = (double(k) - cz) * (double(k) - cz);
        for (Index i = 0; i < shape.rows; ++i) {
          double wy = 0.0;
          for (int oy = -1; oy <= 1; ++oy) {
            const double dy = double(i) - cy - double(oy * shape.rows);
            wy += std::exp(-dy * dy * inv);
          }
          for (Index j = 0; j < shape.cols; ++j) {
            double wx = 0.0;
            for (int ox = -1; ox <= 1; ++ox) {
              const double dx = double(j) - cx - double(ox * shape.cols);
              wx += std::exp(-dx * dx * inv);
            }
            v(k, i, j) += amp * std::exp(-dz2 * inv) * wy * wx;
          }
        }
      });
    }
    if (opt.noise_sigma > 0) {
      std::normal_distribution<double> noise(0.0, opt.noise_sigma);
      const double range = v.array().maxCoeff() - v.array().minCoeff();
      for (Index n = 0; n < v.size(); ++n) v[n] += range * noise(rng);
    }
    const double lo = v.array().minCoeff(), hi = v.array().maxCoeff();
    if (hi > lo) {
      v.array() = opt.background + (1.0 - opt.background) * (v.array() - lo) / (hi - lo);
    } else {
      v.array() = opt.background;
    }
    quantize_float32(v);
    if (shape.rows < kAnisotropyMinSize || shape.cols < kAnisotropyMinSize) return v;
    if (phantom_anisotropy(v) <= opt.max_anisotropy) return v;
  }
  throw NumericalError("no phantom passed the isotropy check in " +
                       std::to_string(opt.max_attempts) + " attempts");
}

// ---------------------------------------------------------------- metrics

namespace {

Psnr psnr_of(double sq_sum, Index count, double peak) {
  Psnr p;
  if (sq_sum == 0.0) return p;
  p.identical = false;
  p.db = 10.0 * std::log10(peak * peak / (sq_sum / double(count)));
  return p;
}

}  // namespace

Psnr psnr(const RealGrid& a, const RealGrid& b, double peak) {
  check_pair(a, b);
  if (!(peak > 0)) throw ValidationError("psnr peak must be positive");
  return psnr_of((a.array() - b.array()).square().sum(), a.size(), peak);
}

std::vector<Psnr> psnr_per_slice(const RealGrid& a, const RealGrid& b, double peak) {
  check_pair(a, b);
  if (!(peak > 0)) throw ValidationError("psnr peak must be positive");
  std::vector<Psnr> out;
  for (Index k = 0; k < a.depth(); ++k) {
    out.push_back(psnr_of((a.slice(k) - b.slice(k)).square().sum(), a.shape().slice_size(), peak));
  }
  return out;
}

std::vector<double> ssim_per_slice(const RealGrid& a, const RealGrid& b, double peak) {
  check_pair(a, b);
  constexpr int kRadius = 5;
  if (a.rows() < 2 * kRadius + 1 || a.cols() < 2 * kRadius + 1) {
    throw ValidationError("slices are smaller than the 11x11 SSIM window");
  }
  double w[2 * kRadius + 1][2 * kRadius + 1];
  double norm = 0.0;
  for (int dy = -kRadius; dy <= kRadius; ++dy) {
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      w[dy + kRadius][dx + kRadius] = gaussian_window_weight(dy, dx);
      norm += w[dy + kRadius][dx + kRadius];
    }
  }
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  std::vector<double> out(std::size_t(a.depth()));
  parallel_for(a.depth(), [&](Index k) {
    const auto x = a.slice(k);
    const auto y = b.slice(k);
    double total = 0.0;
    Index windows = 0;
    for (Index i = kRadius; i + kRadius < a.rows(); ++i) {
      for (Index j = kRadius; j + kRadius < a.cols(); ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int dy = -kRadius; dy <= kRadius; ++dy) {
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const double g = w[dy + kRadius][dx + kRadius] / norm;
            const double p = x(i + dy, j + dx), q = y(i + dy, j + dx);
            mx += g * p;
            my += g * q;
            xx += g * p * p;
            yy += g * q * q;
            xy += g * p * q;
          }
        }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
    out[std::size_t(k)] = total / double(windows);
  });
  return out;
}

double ssim(const RealGrid& a, const RealGrid& b, double peak) {
  const std::vector<double> s = ssim_per_slice(a, b, peak);
  double total = 0.0;
  for (double v : s) total += v;
  return total / double(s.size());
}

}  // namespace destripe
