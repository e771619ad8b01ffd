#pragma once

#include "destripe/config.hpp"
#include "destripe/grid.hpp"
#include "destripe/volume.hpp"

#include <string>
#include <vector>

namespace destripe {

/// Per-slice 2D spectra with the zero frequency moved to
/// (rows / 2, cols / 2). Forward transform is unnormalized; the inverse
/// carries the 1 / (rows * cols) factor.
struct SpectralVolume {
  ComplexGrid coeffs;

  const Shape3& source_shape() const { return coeffs.shape(); }
};

SpectralVolume forward_spectrum(const RealGrid& volume);
inline SpectralVolume forward_spectrum(const Volume& volume) {
  return forward_spectrum(volume.data);
}

/// Throws NumericalError when the discarded imaginary part exceeds 1e-8 of
/// the real part's peak, which means Hermitian symmetry was broken upstream.
RealGrid inverse_spectrum(const SpectralVolume& spectrum);

/// Adjoint of `forward_spectrum` seen as a real-linear map R^n -> C^n.
RealGrid forward_spectrum_adjoint(const ComplexGrid& gradient);
/// Adjoint of `inverse_spectrum` (without the symmetry check).
ComplexGrid inverse_spectrum_adjoint(const RealGrid& gradient);

/// Concentric rings of a centered spectrum plus per-bin polar coordinates.
struct AnnulusIndex {
  Index rows = 0;
  Index cols = 0;
  double width = 1.0;
  Plane<int> ring_id;
  Plane<double> rho;        // distance to center, in bins
  Plane<double> theta_deg;  // orientation of the frequency vector, [0, 180)
  std::vector<std::vector<Index>> ring_members;  // in-slice flat indices, ascending
  double rho_max = 0.0;

  Index center_row() const { return rows / 2; }
  Index center_col() const { return cols / 2; }
  int ring_count() const { return static_cast<int>(ring_members.size()); }
  Index slice_size() const { return rows * cols; }
  /// Bin holding the conjugate-symmetric partner of `flat`.
  Index mirror(Index flat) const;
};

AnnulusIndex build_annuli(Index rows, Index cols, double annulus_width_px);

struct RingScale {
  Index slice = 0;
  int ring = 0;
  Index members = 0;
  double sigma = 0.0;
  bool flagged = false;  // fewer than 4 members or all-zero ring; whitened to 0
};

struct WhitenedSpectrum {
  RealGrid magnitude;
  std::vector<RingScale> scales;
};

/// |c| / sigma with sigma = median(|c| over the ring) / sqrt(ln 4), the
/// Rayleigh scale whose median matches.
WhitenedSpectrum whiten_magnitudes(const SpectralVolume& spectrum, const AnnulusIndex& annuli);

/// W = exp(-x^2 / 2) of the whitened magnitude: the Rayleigh survival value.
RealGrid corruption_matrix(const WhitenedSpectrum& whitened);
RealGrid corruption_matrix(const SpectralVolume& spectrum, const AnnulusIndex& annuli);

struct CorruptionField {
  RealGrid W;
  MaskGrid M;
  Plane<std::uint8_t> wedge_mask;
  std::vector<std::string> warnings;

  Index masked_count() const;
};

/// Bins whose frequency vector lies within `half_angle_deg` of the axis
/// perpendicular to the stripes.
Plane<std::uint8_t> wedge_mask(const AnnulusIndex& annuli, double stripe_angle_deg,
                               double half_angle_deg);

/// M = [W < threshold] & wedge & [rho > dc guard], closed under the
/// conjugate mirror; W is min-ed with its mirror to match.
CorruptionField corruption_mask(RealGrid W, const AnnulusIndex& annuli, const RunConfig& cfg,
                                double stripe_angle_deg);

/// Confidence below this means no dominant stripe direction.
inline constexpr double kDirectionConfidenceThreshold = 0.8;

struct DirectionEstimate {
  double stripe_angle_deg = 90.0;
  double spectral_angle_deg = 0.0;
  double confidence = 0.0;  // 1 - median / peak of the angular profile
  bool dominant = false;
};

/// Angular profile (1 degree bins) of mean whitened energy outside the DC
/// guard, averaged over slices; the stripes run perpendicular to its peak.
DirectionEstimate detect_stripe_direction(const SpectralVolume& spectrum,
                                          const AnnulusIndex& annuli, int dc_guard_radius_px);

/// Smallest angle between two orientations, both taken modulo 180 degrees.
double orientation_distance_deg(double a, double b);

}  // namespace destripe
