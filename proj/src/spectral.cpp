#include "destripe/spectral.hpp"

#include "destripe/error.hpp"
#include "destripe/parallel.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace destripe {

namespace {

constexpr double kImagTolerance = 1e-8;

// Unnormalized 2D DFT of one plane in place; `inverse` flips the exponent sign.
void transform_plane(Plane<Complex>& plane, bool inverse) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<Complex> in, out;
  auto run = [&] { inverse ? fft.inv(out, in) : fft.fwd(out, in); };
  in.resize(plane.cols());
  for (Index i = 0; i < plane.rows(); ++i) {
    for (Index j = 0; j < plane.cols(); ++j) in[j] = plane(i, j);
    run();
    for (Index j = 0; j < plane.cols(); ++j) plane(i, j) = out[j];
  }
  in.resize(plane.rows());
  for (Index j = 0; j < plane.cols(); ++j) {
    for (Index i = 0; i < plane.rows(); ++i) in[i] = plane(i, j);
    run();
    for (Index i = 0; i < plane.rows(); ++i) plane(i, j) = out[i];
  }
}

// raw DFT index u maps to centered index (u + n/2) mod n.
Plane<Complex> center(const Plane<Complex>& raw) {
  const Index r = raw.rows(), c = raw.cols();
  Plane<Complex> out(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) out((i + r / 2) % r, (j + c / 2) % c) = raw(i, j);
  }
  return out;
}

Plane<Complex> uncenter(Eigen::Ref<const Plane<Complex>> centered) {
  const Index r = centered.rows(), c = centered.cols();
  Plane<Complex> out(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) out(i, j) = centered((i + r / 2) % r, (j + c / 2) % c);
  }
  return out;
}

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  auto mid = values.begin() + n / 2;
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

SpectralVolume forward_spectrum(const RealGrid& volume) {
  SpectralVolume s{ComplexGrid(volume.shape())};
  parallel_for(volume.depth(), [&](Index k) {
    Plane<Complex> plane = volume.slice(k).cast<Complex>();
    transform_plane(plane, false);
    s.coeffs.slice(k) = center(plane);
  });
  return s;
}

RealGrid inverse_spectrum(const SpectralVolume& spectrum) {
  const ComplexGrid& c = spectrum.coeffs;
  RealGrid out(c.shape());
  std::vector<double> max_re(c.depth(), 0.0), max_im(c.depth(), 0.0);
  const double scale = 1.0 / double(c.rows() * c.cols());
  parallel_for(c.depth(), [&](Index k) {
    Plane<Complex> plane = uncenter(c.slice(k));
    transform_plane(plane, true);
    plane *= scale;
    max_re[k] = plane.real().abs().maxCoeff();
    max_im[k] = plane.imag().abs().maxCoeff();
    out.slice(k) = plane.real();
  });
  const double re = *std::max_element(max_re.begin(), max_re.end());
  const double im = *std::max_element(max_im.begin(), max_im.end());
  if (im > kImagTolerance * re && im > 1e-300) {
    std::ostringstream msg;
    msg << "inverse spectrum is not real (max|Im|/max|Re| = " << im / std::max(re, 1e-300)
        << "); Hermitian symmetry violated";
    throw NumericalError(msg.str());
  }
  return out;
}

RealGrid forward_spectrum_adjoint(const ComplexGrid& gradient) {
  RealGrid out(gradient.shape());
  parallel_for(gradient.depth(), [&](Index k) {
    Plane<Complex> plane = uncenter(gradient.slice(k));
    transform_plane(plane, true);
    out.slice(k) = plane.real();
  });
  return out;
}

ComplexGrid inverse_spectrum_adjoint(const RealGrid& gradient) {
  ComplexGrid out(gradient.shape());
  const double scale = 1.0 / double(gradient.rows() * gradient.cols());
  parallel_for(gradient.depth(), [&](Index k) {
    Plane<Complex> plane = gradient.slice(k).cast<Complex>();
    transform_plane(plane, false);
    out.slice(k) = center(plane) * scale;
  });
  return out;
}

// ---------------------------------------------------------------- annuli

Index AnnulusIndex::mirror(Index flat) const {
  const Index i = flat / cols, j = flat % cols;
  const Index mi = (2 * center_row() - i + 2 * rows) % rows;
  const Index mj = (2 * center_col() - j + 2 * cols) % cols;
  return mi * cols + mj;
}

AnnulusIndex build_annuli(Index rows, Index cols, double annulus_width_px) {
  if (rows < 8 || cols < 8) throw ValidationError("annuli need at least 8x8 slices");
  if (!(annulus_width_px > 0)) throw ValidationError("annulus width must be positive");
  AnnulusIndex a;
  a.rows = rows;
  a.cols = cols;
  a.width = annulus_width_px;
  a.ring_id.resize(rows, cols);
  a.rho.resize(rows, cols);
  a.theta_deg.resize(rows, cols);
  int max_ring = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const double fy = double(i - rows / 2), fx = double(j - cols / 2);
      const double rho = std::hypot(fy, fx);
      double theta = std::atan2(fy, fx) * 180.0 / std::numbers::pi;
      theta = std::fmod(theta + 360.0, 180.0);
      a.rho(i, j) = rho;
      a.theta_deg(i, j) = theta;
      a.ring_id(i, j) = static_cast<int>(std::floor(rho / annulus_width_px));
      max_ring = std::max(max_ring, a.ring_id(i, j));
      a.rho_max = std::max(a.rho_max, rho);
    }
  }
  a.ring_members.assign(max_ring + 1, {});
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) a.ring_members[a.ring_id(i, j)].push_back(i * cols + j);
  }
  return a;
}

// ---------------------------------------------------------------- detection

WhitenedSpectrum whiten_magnitudes(const SpectralVolume& spectrum, const AnnulusIndex& annuli) {
  const ComplexGrid& c = spectrum.coeffs;
  if (c.rows() != annuli.rows || c.cols() != annuli.cols) {
    throw ValidationError("annulus index does not match spectrum shape");
  }
  WhitenedSpectrum out{RealGrid(c.shape()), {}};
  const int rings = annuli.ring_count();
  out.scales.resize(std::size_t(c.depth() * rings));
  const double rayleigh_median = std::sqrt(std::log(4.0));
  parallel_for(c.depth(), [&](Index k) {
    const Index base = k * annuli.slice_size();
    for (int r = 0; r < rings; ++r) {
      const auto& members = annuli.ring_members[r];
      RingScale& scale = out.scales[std::size_t(k * rings + r)];
      scale.slice = k;
      scale.ring = r;
      scale.members = Index(members.size());
      if (members.empty()) {
        scale.flagged = true;
        continue;
      }
      std::vector<double> mags;
      mags.reserve(members.size());
      for (Index flat : members) mags.push_back(std::abs(c[base + flat]));
      scale.sigma = members.size() >= 4 ? median_of(mags) / rayleigh_median : 0.0;
      scale.flagged = !(scale.sigma > 0);
      for (std::size_t n = 0; n < members.size(); ++n) {
        out.magnitude[base + members[n]] = scale.flagged ? 0.0 : mags[n] / scale.sigma;
      }
    }
  });
  return out;
}

RealGrid corruption_matrix(const WhitenedSpectrum& whitened) {
  RealGrid W(whitened.magnitude.shape());
  W.array() = (-0.5 * whitened.magnitude.array().square()).exp();
  return W;
}

RealGrid corruption_matrix(const SpectralVolume& spectrum, const AnnulusIndex& annuli) {
  return corruption_matrix(whiten_magnitudes(spectrum, annuli));
}

Index CorruptionField::masked_count() const {
  return M.array().template cast<Index>().sum();
}

double orientation_distance_deg(double a, double b) {
  double d = std::fmod(std::abs(a - b), 180.0);
  return std::min(d, 180.0 - d);
}

Plane<std::uint8_t> wedge_mask(const AnnulusIndex& annuli, double stripe_angle_deg,
                               double half_angle_deg) {
  const double axis = stripe_angle_deg + 90.0;
  Plane<std::uint8_t> wedge(annuli.rows, annuli.cols);
  for (Index i = 0; i < annuli.rows; ++i) {
    for (Index j = 0; j < annuli.cols; ++j) {
      wedge(i, j) = annuli.rho(i, j) > 0 &&
                    orientation_distance_deg(annuli.theta_deg(i, j), axis) <= half_angle_deg;
    }
  }
  return wedge;
}

CorruptionField corruption_mask(RealGrid W, const AnnulusIndex& annuli, const RunConfig& cfg,
                                double stripe_angle_deg) {
  if (W.rows() != annuli.rows || W.cols() != annuli.cols) {
    throw ValidationError("corruption matrix does not match annulus index");
  }
  CorruptionField field;
  field.wedge_mask = wedge_mask(annuli, stripe_angle_deg, cfg.wedge_half_angle_deg);
  field.M = MaskGrid(W.shape(), 0);
  const Index plane = annuli.slice_size();
  const double guard = cfg.dc_guard_radius_px;
  for (Index k = 0; k < W.depth(); ++k) {
    const Index base = k * plane;
    for (Index flat = 0; flat < plane; ++flat) {
      const Index i = flat / annuli.cols, j = flat % annuli.cols;
      field.M[base + flat] = W[base + flat] < cfg.mask_threshold && field.wedge_mask(i, j) &&
                             annuli.rho(i, j) > guard;
    }
    for (Index flat = 0; flat < plane; ++flat) {
      const Index m = annuli.mirror(flat);
      if (m <= flat) continue;
      const std::uint8_t either = field.M[base + flat] | field.M[base + m];
      field.M[base + flat] = field.M[base + m] = either;
      const double w = std::min(W[base + flat], W[base + m]);
      W[base + flat] = W[base + m] = w;
    }
    for (int r = 0; r < annuli.ring_count(); ++r) {
      const auto& members = annuli.ring_members[r];
      Index masked = 0;
      for (Index flat : members) masked += field.M[base + flat];
      if (masked > 0 && 2 * masked > Index(members.size())) {
        std::ostringstream msg;
        msg << "slice " << k << " ring " << r << ": mask covers " << masked << " of "
            << members.size() << " bins; recovery is ill-posed";
        field.warnings.push_back(msg.str());
      }
    }
  }
  field.W = std::move(W);
  return field;
}

DirectionEstimate detect_stripe_direction(const SpectralVolume& spectrum,
                                          const AnnulusIndex& annuli, int dc_guard_radius_px) {
  const WhitenedSpectrum whitened = whiten_magnitudes(spectrum, annuli);
  const Index depth = spectrum.coeffs.depth();
  const Index plane = annuli.slice_size();
  std::vector<double> profile(180, 0.0);
  std::vector<int> populated(180, 0);
  for (Index k = 0; k < depth; ++k) {
    std::vector<double> energy(180, 0.0);
    std::vector<Index> count(180, 0);
    for (Index flat = 0; flat < plane; ++flat) {
      const Index i = flat / annuli.cols, j = flat % annuli.cols;
      if (annuli.rho(i, j) <= dc_guard_radius_px) continue;
      const int bin = static_cast<int>(std::lround(annuli.theta_deg(i, j))) % 180;
      const double x = whitened.magnitude[k * plane + flat];
      energy[bin] += x * x;
      ++count[bin];
    }
    for (int b = 0; b < 180; ++b) {
      if (count[b] == 0) continue;
      profile[b] += energy[b] / double(count[b]) / double(depth);
      populated[b] = 1;
    }
  }
  std::vector<double> values;
  int best = 0;
  for (int b = 0; b < 180; ++b) {
    if (!populated[b]) continue;
    values.push_back(profile[b]);
    if (profile[b] > profile[best] || !populated[best]) best = b;
  }
  DirectionEstimate est;
  if (values.empty() || profile[best] <= 0) return est;
  const double med = median_of(values);
  est.spectral_angle_deg = best;
  est.stripe_angle_deg = std::fmod(best + 90.0, 180.0);
  est.confidence = 1.0 - med / profile[best];
  est.dominant = est.confidence >= kDirectionConfidenceThreshold;
  return est;
}

}  // namespace destripe
