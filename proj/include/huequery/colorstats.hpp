#pragma once

#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace hq {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Covariance regularization added to every matrix before inversion.
inline constexpr double kCovEpsilon = 1e-6;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// HSV pixel. Hue is an angle in radians reduced into [0, 2pi); saturation
/// and value are percentages clamped into [0, 100].
struct HsvPixel {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;

  HsvPixel() = default;
  HsvPixel(double hue, double sat, double val);

  friend bool operator==(const HsvPixel&, const HsvPixel&) = default;
};

/// Reduces an angle into [0, 2pi). Throws DomainError on non-finite input.
double wrap_hue(double radians);

/// Difference between two pixels with the hue component in [-pi, pi).
struct HsvDelta {
  double dh = 0.0;
  double ds = 0.0;
  double dv = 0.0;

  Vec3 vec() const { return {dh, ds, dv}; }
  double norm() const { return vec().norm(); }
};

struct HsvMoments {
  HsvPixel mean;
  Mat3 cov = Mat3::Zero();
};

HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

inline HsvDelta hsv_distance(const HsvPixel& p, const HsvPixel& q) {
  // Both hues live in [0, 2pi) so a single correction lands in [-pi, pi).
  double dh = p.h - q.h;
  if (dh >= std::numbers::pi) {
    dh -= kTwoPi;
  } else if (dh < -std::numbers::pi) {
    dh += kTwoPi;
  }
  return {dh, p.s - q.s, p.v - q.v};
}

/// Euclidean norm of the largest possible delta, (pi, 100, 100).
double max_delta_norm();

/// Circular mean (atan2 of mean sine and cosine) and covariance of the
/// deltas against that mean, normalised by n.
HsvMoments circular_moments(std::span<const HsvPixel> pixels);

/// Weighted form used by the mixture M-step. Weights need not sum to one
/// but their sum must be positive.
HsvMoments circular_moments(std::span<const HsvPixel> pixels,
                            std::span<const double> weights);

/// Precomputed inverse and log-determinant of a covariance, so repeated
/// distance queries against the same distribution stay cheap.
class Mahalanobis {
 public:
  /// When `regularize` is set, kCovEpsilon * I is added before factorizing.
  explicit Mahalanobis(const Mat3& cov, bool regularize = true);

  double squared(const HsvPixel& p, const HsvPixel& q) const;
  double operator()(const HsvPixel& p, const HsvPixel& q) const;
  double log_det() const { return log_det_; }

 private:
  Mat3 inverse_;
  double log_det_ = 0.0;
};

double mahalanobis(const HsvPixel& p, const HsvPixel& q, const Mat3& cov);

/// Rotates a pixel's hue by `radians`, used by equivariance checks and the
/// synthetic generators.
HsvPixel rotate_hue(const HsvPixel& p, double radians);

std::string to_string(const HsvPixel& p);

}  // namespace hq
