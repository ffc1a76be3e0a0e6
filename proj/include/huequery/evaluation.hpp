#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "huequery/corpus.hpp"
#include "huequery/gmm.hpp"
#include "huequery/metrics.hpp"
#include "huequery/svm.hpp"

namespace hq {

enum class EngineKind { generative, discriminative };

std::string to_string(EngineKind e);
EngineKind parse_engine(std::string_view text);

struct ExperimentConfig {
  FilterConfig filter;
  EmConfig em;
  LoglikForm loglik_form = LoglikForm::weighted_log_densities;
  SvmConfig svm;
  SplitOptions split;
  int workers = 1;
  /// P@N cut-offs reported per trial.
  std::vector<std::size_t> precision_cutoffs{5, 10, 20};
};

/// A model trained for one (garment, label) that scores regions; larger is
/// better. Scores are logs of the engine's region score.
class RegionScorer {
 public:
  virtual ~RegionScorer() = default;
  virtual double log_score(const SampleRegion& region) const = 0;
  virtual std::size_t complexity() const = 0;  // components or support vectors
};

std::unique_ptr<RegionScorer> make_scorer(ColorModel model);
std::unique_ptr<RegionScorer> make_scorer(SvmModel model);

/// Trains a scorer from sample ids of `dataset`. The generative engine
/// ignores `negative_ids`.
std::unique_ptr<RegionScorer> train_scorer(const Dataset& dataset, const QueryTarget& target,
                                           const std::vector<std::string>& positive_ids,
                                           const std::vector<std::string>& negative_ids,
                                           EngineKind engine, const ExperimentConfig& cfg);

struct TrialResult {
  std::uint64_t seed = 0;
  double bep = 0.0;
  std::vector<double> precision_at;  // parallel to precision_cutoffs
  double train_ms = 0.0;
  double score_ms = 0.0;
  std::size_t test_size = 0;
  std::size_t relevant = 0;
  std::vector<PrPoint> pr;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

Summary summarize(const std::vector<double>& xs);

struct ReportEntry {
  QueryTarget query;
  EngineKind engine = EngineKind::generative;
  std::size_t k = 0;
  std::string test_dataset;  // cross-database runs only
  std::string error;         // e.g. not enough positives; trials empty then
  std::vector<TrialResult> trials;

  Summary bep() const;
  Summary precision_at(std::size_t index) const;
};

struct EvalReport {
  std::string kind;  // robustness | cross | timing
  std::string dataset;
  std::vector<std::size_t> precision_cutoffs;
  std::vector<ReportEntry> entries;
};

/// Ranks `test_ids` of `dataset` with `scorer`; relevance from `relevant`.
RankedList rank_samples(const Dataset& dataset, const RegionScorer& scorer, Garment garment,
                        const std::vector<std::string>& test_ids, const std::vector<bool>& relevant);

EvalReport run_robustness(const Dataset& dataset, const std::vector<QueryTarget>& queries,
                          const std::vector<std::size_t>& ks, EngineKind engine,
                          const ExperimentConfig& cfg);

/// Trains on `train` (k positives per trial) and ranks every sample of each
/// test dataset.
EvalReport run_cross_database(const Dataset& train, const std::vector<const Dataset*>& tests,
                              const std::vector<QueryTarget>& queries,
                              const std::vector<std::size_t>& ks, EngineKind engine,
                              const ExperimentConfig& cfg);

struct TimingPoint {
  std::size_t k = 0;
  double train_ms = 0.0;
  double score_ms_per_100 = 0.0;  // median of `runs` after one warm-up
  std::size_t complexity = 0;
};

struct TimingReport {
  QueryTarget query;
  EngineKind engine = EngineKind::generative;
  std::vector<TimingPoint> points;
};

TimingReport run_timing(const Dataset& dataset, const QueryTarget& query,
                        const std::vector<std::size_t>& ks, EngineKind engine,
                        const ExperimentConfig& cfg, int runs = 5, std::size_t test_samples = 100);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const TimingReport& report);

/// Table-shaped text: one row per query, BEP columns per k, then P@N.
std::string format_table(const EvalReport& report);

/// Writes report.json, report.txt and pr_curves/*.csv into `dir`.
void emit_report(const EvalReport& report, const std::filesystem::path& dir);
void emit_report(const TimingReport& report, const std::filesystem::path& dir);

}  // namespace hq
