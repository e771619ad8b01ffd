#include "destripe/volume.hpp"

#include "destripe/error.hpp"

#include <cmath>
#include <sstream>

namespace destripe {

StripeAxis StripeAxis::at_angle(double degrees) {
  double wrapped = std::fmod(degrees, 180.0);
  if (wrapped < 0) wrapped += 180.0;
  return {Kind::angle_degrees, wrapped};
}

double StripeAxis::degrees() const {
  switch (kind) {
    case Kind::horizontal:
      return 0.0;
    case Kind::vertical:
      return 90.0;
    case Kind::angle_degrees:
      return angle;
  }
  return angle;
}

StripeAxis parse_stripe_axis(const std::string& text) {
  if (text == "horizontal") return StripeAxis::horizontal();
  if (text == "vertical") return StripeAxis::vertical();
  try {
    std::size_t used = 0;
    double value = std::stod(text, &used);
    if (used == text.size() && std::isfinite(value)) return StripeAxis::at_angle(value);
  } catch (const std::exception&) {
  }
  throw ValidationError("stripe_axis must be 'horizontal', 'vertical' or degrees, got '" +
                        text + "'");
}

std::string to_string(const StripeAxis& axis) {
  switch (axis.kind) {
    case StripeAxis::Kind::horizontal:
      return "horizontal";
    case StripeAxis::Kind::vertical:
      return "vertical";
    case StripeAxis::Kind::angle_degrees:
      break;
  }
  std::ostringstream out;
  out.precision(17);
  out << axis.angle;
  return out.str();
}

Index count_non_finite(const RealGrid& grid) {
  Index bad = 0;
  for (Index n = 0; n < grid.size(); ++n) {
    if (!std::isfinite(grid[n])) ++bad;
  }
  return bad;
}

void Volume::validate() const {
  const Shape3& s = data.shape();
  if (s.depth < 1 || s.rows < 8 || s.cols < 8) {
    std::ostringstream msg;
    msg << "volume shape (" << s.depth << ", " << s.rows << ", " << s.cols
        << ") too small: need depth >= 1 and rows, cols >= 8";
    throw ValidationError(msg.str());
  }
  if (!(spacing.z_um > 0 && spacing.y_um > 0 && spacing.x_um > 0)) {
    throw ValidationError("voxel_spacing must be strictly positive");
  }
  if (Index bad = count_non_finite(data); bad > 0) {
    throw ValidationError("volume contains " + std::to_string(bad) + " non-finite voxels");
  }
}

}  // namespace destripe
