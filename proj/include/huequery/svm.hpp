#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "huequery/colorstats.hpp"
#include "huequery/segmentation.hpp"

namespace hq {

struct SvmConfig {
  double gamma = 0.01;
  double cost = 1.0;
  /// Stopping tolerance on the maximal KKT violation.
  double tolerance = 1e-3;
  /// Upper bound on SMO updates; 0 picks max(10'000'000, 100 n).
  std::size_t max_iterations = 0;
  std::size_t pixel_cap = 300;
  std::uint64_t seed = 1;
  /// Kernel row cache budget in megabytes.
  std::size_t cache_mb = 256;
  /// Gradient tolerance for the sigmoid calibration fit.
  double calibration_tolerance = 1e-9;
};

/// k(p, q) = exp(-gamma * |hsv_distance(p, q)|^2)
inline double rbf_kernel(const HsvPixel& p, const HsvPixel& q, double gamma) {
  const auto d = hsv_distance(p, q);
  return std::exp(-gamma * (d.dh * d.dh + d.ds * d.ds + d.dv * d.dv));
}

struct SvmModel {
  std::vector<HsvPixel> support_vectors;
  std::vector<double> coefficients;  // alpha_i * y_i
  double bias = 0.0;                 // decision = sum coef * k + bias
  double sigmoid_a = 0.0;            // P(+1 | f) = 1 / (1 + exp(a f + b))
  double sigmoid_b = 0.0;
  double gamma = 0.01;
  double cost = 1.0;

  // Provenance.
  std::string label;
  Garment garment = Garment::upper;
  std::vector<std::string> positive_ids;
  std::vector<std::string> negative_ids;
  std::size_t iterations = 0;
  bool converged = false;
  SvmConfig config;

  double decision(const HsvPixel& p) const;
  double probability(const HsvPixel& p) const;
};

/// Dual solution on a raw labelled point set (labels are +1 / -1).
struct SmoSolution {
  std::vector<double> alpha;
  double rho = 0.0;  // decision = sum alpha_i y_i k(x_i, x) - rho
  std::size_t iterations = 0;
  bool converged = false;
};

SmoSolution solve_smo(std::span<const HsvPixel> points, std::span<const int> labels,
                      const SvmConfig& cfg);

/// Maximum-likelihood fit of P(+1|f) = 1/(1+exp(a f + b)) with smoothed
/// targets. Returns {a, b}.
std::pair<double, double> fit_sigmoid(std::span<const double> decisions,
                                      std::span<const int> labels, double tolerance);

/// Uniform subsample of at most `cap` pixels without replacement.
std::vector<HsvPixel> subsample_pixels(std::span<const HsvPixel> pixels, std::size_t cap,
                                       std::uint64_t seed);

SvmModel train_svm(std::span<const SampleRegion> positives, std::span<const SampleRegion> negatives,
                   const SvmConfig& cfg);

/// Mean calibrated positive probability over the region's pixels.
double svm_region_score(const SampleRegion& region, const SvmModel& model);
double svm_region_score(std::span<const HsvPixel> pixels, const SvmModel& model);

void to_json(nlohmann::json& j, const SvmModel& m);
void from_json(const nlohmann::json& j, SvmModel& m);

std::string config_hash(const SvmConfig& cfg);

}  // namespace hq
