#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "huequery/colorstats.hpp"
#include "huequery/query.hpp"
#include "huequery/segmentation.hpp"

namespace hq {

struct FilterConfig {
  /// Mahalanobis threshold; infinity disables filtering.
  double tau = 2.0;
};

struct EmConfig {
  int components = 2;
  int max_iters = 200;
  double rel_tolerance = 1e-7;
  int restarts = 5;
  std::uint64_t seed = 1;
  /// Components lighter than this are dropped and the weights renormalised.
  double min_weight = 1e-4;
};

struct GaussianComponent {
  double weight = 1.0;
  HsvPixel mean;
  Mat3 cov = Mat3::Identity();  // already regularised
};

enum class LoglikForm {
  /// sum_c phi_c * log N_c, the per-pixel form used for retrieval.
  weighted_log_densities,
  /// log sum_c phi_c * N_c, the conventional mixture log-likelihood.
  standard_mixture,
};

struct ColorModel {
  std::string label;
  Garment garment = Garment::upper;
  std::vector<GaussianComponent> components;
  LoglikForm loglik_form = LoglikForm::weighted_log_densities;

  // Provenance.
  std::vector<std::string> sample_ids;
  FilterConfig filter;
  EmConfig em;
  std::vector<double> training_loglik_trace;

  std::size_t size() const { return components.size(); }
};

/// Per-sample outlier filter: keeps pixels whose Mahalanobis distance to the
/// sample's own circular moments is below tau. Throws DomainError when every
/// pixel is rejected.
SampleRegion filter_outliers(const SampleRegion& region, const FilterConfig& cfg);

struct EmResult {
  std::vector<GaussianComponent> components;
  std::vector<double> loglik_trace;  // mean log-likelihood per pixel, per iteration
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Circular-aware EM for an HSV Gaussian mixture. Best of `cfg.restarts`.
EmResult fit_mixture(std::span<const HsvPixel> pixels, const EmConfig& cfg);

/// Filters each region, pools the survivors and fits the mixture.
ColorModel train_color_model(std::span<const SampleRegion> regions, std::string label,
                             Garment garment, const FilterConfig& filter_cfg,
                             const EmConfig& em_cfg);

/// Component inverses and normalisers cached for fast repeated scoring.
class GmmScorer {
 public:
  explicit GmmScorer(const ColorModel& model);

  double pixel_loglik(const HsvPixel& p) const;
  /// log of the mean pixel likelihood, computed without underflow.
  double region_log_score(std::span<const HsvPixel> pixels) const;
  double region_score(std::span<const HsvPixel> pixels) const;

 private:
  struct Cached {
    double weight;
    double log_weight;
    HsvPixel mean;
    Mat3 inverse;
    double log_norm;
  };
  std::vector<Cached> parts_;
  LoglikForm form_;
};

double pixel_loglik(const HsvPixel& p, const ColorModel& model);
double region_score(const SampleRegion& region, const ColorModel& model);
double region_log_score(const SampleRegion& region, const ColorModel& model);

/// Leaf scores keyed by (garment, label).
using LeafScores = std::map<std::pair<Garment, std::string>, double>;

/// Leaf -> log(score); and -> sum; or -> max. Throws std::out_of_range when a
/// leaf has no score.
double combine(const QueryAst& query, const LeafScores& scores);

/// Same as combine but the map already holds log scores.
double combine_log(const QueryAst& query, const LeafScores& log_scores);

void to_json(nlohmann::json& j, const ColorModel& m);
void from_json(const nlohmann::json& j, ColorModel& m);

/// Stable hash of the training configuration, recorded with the model.
std::string config_hash(const FilterConfig& f, const EmConfig& em, LoglikForm form);

}  // namespace hq
