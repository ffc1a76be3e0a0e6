#include "huequery/colorstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Cholesky>

namespace hq {

double wrap_hue(double radians) {
  if (!std::isfinite(radians)) {
    throw DomainError("hue must be finite");
  }
  double h = std::fmod(radians, kTwoPi);
  if (h < 0.0) {
    h += kTwoPi;
  }
  // fmod of a tiny negative number plus 2pi can round up to exactly 2pi.
  if (h >= kTwoPi) {
    h = 0.0;
  }
  return h;
}

HsvPixel::HsvPixel(double hue, double sat, double val)
    : h(wrap_hue(hue)), s(std::clamp(sat, 0.0, 100.0)), v(std::clamp(val, 0.0, 100.0)) {
  if (!std::isfinite(sat) || !std::isfinite(val)) {
    throw DomainError("saturation and value must be finite");
  }
}

HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int hi = std::max({r, g, b});
  const int lo = std::min({r, g, b});
  const double chroma = hi - lo;
  const double v = 100.0 * hi / 255.0;
  const double s = hi == 0 ? 0.0 : 100.0 * chroma / hi;
  double degrees = 0.0;
  if (chroma > 0.0) {
    if (hi == r) {
      degrees = 60.0 * std::fmod((g - b) / chroma + 6.0, 6.0);
    } else if (hi == g) {
      degrees = 60.0 * ((b - r) / chroma + 2.0);
    } else {
      degrees = 60.0 * ((r - g) / chroma + 4.0);
    }
  }
  return {degrees * std::numbers::pi / 180.0, s, v};
}

double max_delta_norm() {
  static const double norm = Vec3(std::numbers::pi, 100.0, 100.0).norm();
  return norm;
}

namespace {

HsvMoments moments_impl(std::span<const HsvPixel> pixels, const double* weights) {
  if (pixels.empty()) {
    throw DomainError("circular_moments: empty pixel set");
  }
  double total = 0.0, sin_sum = 0.0, cos_sum = 0.0, s_sum = 0.0, v_sum = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double w = weights ? weights[i] : 1.0;
    const auto& p = pixels[i];
    total += w;
    sin_sum += w * std::sin(p.h);
    cos_sum += w * std::cos(p.h);
    s_sum += w * p.s;
    v_sum += w * p.v;
  }
  if (!(total > 0.0)) {
    throw DomainError("circular_moments: weights sum to zero");
  }

  HsvMoments m;
  // atan2 of the (unnormalised) sums has the same angle as the means.
  m.mean = HsvPixel(std::atan2(sin_sum, cos_sum), s_sum / total, v_sum / total);
  m.cov.setZero();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double w = weights ? weights[i] : 1.0;
    const Vec3 d = hsv_distance(pixels[i], m.mean).vec();
    m.cov.noalias() += w * d * d.transpose();
  }
  m.cov /= total;
  return m;
}

}  // namespace

HsvMoments circular_moments(std::span<const HsvPixel> pixels) {
  return moments_impl(pixels, nullptr);
}

HsvMoments circular_moments(std::span<const HsvPixel> pixels,
                            std::span<const double> weights) {
  if (weights.size() != pixels.size()) {
    throw std::invalid_argument("circular_moments: weight count mismatch");
  }
  return moments_impl(pixels, weights.data());
}

Mahalanobis::Mahalanobis(const Mat3& cov, bool regularize) {
  Mat3 c = cov;
  if (regularize) {
    c += kCovEpsilon * Mat3::Identity();
  }
  Eigen::LLT<Mat3> llt(c);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("covariance is not positive definite after regularization");
  }
  inverse_ = llt.solve(Mat3::Identity());
  const auto& l = llt.matrixL();
  log_det_ = 2.0 * (std::log(l(0, 0)) + std::log(l(1, 1)) + std::log(l(2, 2)));
  if (!std::isfinite(log_det_) || !inverse_.allFinite()) {
    throw NumericalError("covariance inverse is not finite");
  }
}

double Mahalanobis::squared(const HsvPixel& p, const HsvPixel& q) const {
  const Vec3 d = hsv_distance(p, q).vec();
  return std::max(0.0, d.dot(inverse_ * d));
}

double Mahalanobis::operator()(const HsvPixel& p, const HsvPixel& q) const {
  return std::sqrt(squared(p, q));
}

double mahalanobis(const HsvPixel& p, const HsvPixel& q, const Mat3& cov) {
  return Mahalanobis(cov)(p, q);
}

HsvPixel rotate_hue(const HsvPixel& p, double radians) {
  return {p.h + radians, p.s, p.v};
}

std::string to_string(const HsvPixel& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(h=%.5f, s=%.3f, v=%.3f)", p.h, p.s, p.v);
  return buf;
}

}  // namespace hq
