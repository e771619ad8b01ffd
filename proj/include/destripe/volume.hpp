#pragma once

#include "destripe/grid.hpp"

#include <string>

namespace destripe {

/// In-slice direction along which stripes run.
///
/// Angles are measured in degrees from the column (x) axis: horizontal
/// stripes are 0 degrees, vertical stripes 90 degrees. Only the value modulo
/// 180 is meaningful.
struct StripeAxis {
  enum class Kind { horizontal, vertical, angle_degrees };

  Kind kind = Kind::vertical;
  double angle = 90.0;

  static StripeAxis horizontal() { return {Kind::horizontal, 0.0}; }
  static StripeAxis vertical() { return {Kind::vertical, 90.0}; }
  static StripeAxis at_angle(double degrees);

  double degrees() const;
  bool operator==(const StripeAxis&) const = default;
};

/// Accepts "horizontal", "vertical" or a number of degrees.
StripeAxis parse_stripe_axis(const std::string& text);
std::string to_string(const StripeAxis& axis);

struct VoxelSpacing {
  double z_um = 1.0;
  double y_um = 1.0;
  double x_um = 1.0;
  bool operator==(const VoxelSpacing&) const = default;
};

/// Real-valued image stack plus acquisition metadata.
struct Volume {
  RealGrid data;
  VoxelSpacing spacing;
  StripeAxis stripe_axis;

  const Shape3& shape() const { return data.shape(); }

  /// Throws ValidationError when the shape is too small, values are
  /// non-finite, or spacing is not strictly positive.
  void validate() const;
};

/// Number of NaN/Inf entries.
Index count_non_finite(const RealGrid& grid);

}  // namespace destripe
