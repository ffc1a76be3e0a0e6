#pragma once

#include <condition_variable>
#include <functional>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "huequery/corpus.hpp"
#include "huequery/evaluation.hpp"
#include "huequery/query.hpp"

namespace hq {

struct EngineConfig {
  std::filesystem::path data_dir = "data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path lexicon_dir;  // empty: built-in lexicon
  ExperimentConfig experiment;
  SegmentationConfig segmentation;
  std::uint64_t seed = 1;
};

/// Reads a TOML-style file: `[section]` headers and `key = value` lines.
/// Unknown keys are an error so typos do not pass silently.
EngineConfig load_config(const std::filesystem::path& file);

/// HUEQUERY_PORT and HUEQUERY_DATA_DIR override the file.
void apply_env_overrides(EngineConfig& cfg);

/// Client-side faults carry an HTTP-style status.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

/// A query leaf without a trained model (409).
class UntrainedLabel : public ServiceError {
 public:
  UntrainedLabel(const std::string& message, std::vector<std::string> trained)
      : ServiceError(409, "untrained_label", message), trained_(std::move(trained)) {}
  const std::vector<std::string>& trained() const { return trained_; }

 private:
  std::vector<std::string> trained_;
};

struct ModelRecord {
  std::string id;
  EngineKind engine = EngineKind::generative;
  Garment garment = Garment::upper;
  std::string label;
  std::string dataset;
  std::string created;  // ISO-8601 UTC
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::filesystem::path path;
};

/// Append-only directory of model JSON files. Files are published with a
/// temporary write plus rename and never rewritten.
class ModelStore {
 public:
  explicit ModelStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  /// Writes `doc` as `<id>.json` unless the id already exists. Returns true
  /// when a new file was written.
  bool publish(const std::string& id, const nlohmann::json& doc);

  std::vector<ModelRecord> list() const;
  std::optional<ModelRecord> find(const std::string& id) const;
  /// Most recent model for a (garment, label, engine), optionally restricted
  /// to one dataset.
  std::optional<ModelRecord> latest(Garment g, const std::string& label, EngineKind engine,
                                    const std::string& dataset = {}) const;

  nlohmann::json read(const std::string& id) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

struct TrainRequest {
  std::string dataset;
  Garment garment = Garment::upper;
  std::string label;
  EngineKind engine = EngineKind::generative;
  /// Explicit positives; empty means the dataset's annotated positives.
  std::vector<std::string> sample_ids;
  /// Explicit negatives; rejected for the generative engine.
  std::vector<std::string> negative_ids;
  /// Use at most k positives (0 = all).
  std::size_t k = 0;
  std::optional<std::uint64_t> seed;
};

struct TrainResult {
  ModelRecord model;
  bool created = false;
};

struct RankedSample {
  std::string id;
  double score = 0.0;
  std::string image;  // relative URL of the original crop
};

struct RetrievalRequest {
  std::string dataset;
  std::string text;
  std::optional<QueryAst> ast;  // used instead of `text` when set
  EngineKind engine = EngineKind::generative;
  std::size_t top_n = 10;
};

struct RetrievalResponse {
  QueryAst ast;
  std::vector<RankedSample> ranked;
  std::map<std::string, std::string> model_ids;  // "label garment" -> id
  double elapsed_ms = 0.0;
};

nlohmann::json to_json(const QueryAst& ast);
QueryAst ast_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelRecord& r);
nlohmann::json to_json(const RetrievalResponse& r);

enum class JobState { queued, running, done, failed };
std::string to_string(JobState s);

struct JobStatus {
  std::string id;
  std::string kind;
  JobState state = JobState::queued;
  nlohmann::json result;
  std::string error;
  int error_status = 500;
};

/// Runs long tasks on background threads; callers poll by id.
class JobRunner {
 public:
  using Task = std::function<nlohmann::json()>;

  JobRunner() = default;
  JobRunner(const JobRunner&) = delete;
  JobRunner& operator=(const JobRunner&) = delete;
  ~JobRunner();

  std::string submit(std::string kind, Task task);
  std::optional<JobStatus> status(const std::string& id) const;
  /// Blocks until the job leaves queued/running.
  JobStatus wait(const std::string& id) const;

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, JobStatus> jobs_;
  std::vector<std::jthread> threads_;
  std::uint64_t next_ = 1;
};

class Engine {
 public:
  explicit Engine(EngineConfig cfg);

  const EngineConfig& config() const { return cfg_; }
  const Lexicon& lexicon() const { return lexicon_; }
  ModelStore& models() { return models_; }
  JobRunner& jobs() { return jobs_; }

  std::filesystem::path datasets_dir() const { return cfg_.data_dir / "datasets"; }
  std::filesystem::path reports_dir() const { return cfg_.data_dir / "reports"; }

  std::vector<std::string> dataset_names() const;
  /// Loads (and caches) a dataset; ServiceError 404 when it does not exist.
  std::shared_ptr<Dataset> dataset(const std::string& name);
  /// Drops the in-memory copy so the next access re-ingests.
  void reload(const std::string& name);

  /// Links an external directory as a dataset and ingests it.
  std::shared_ptr<Dataset> register_dataset(const std::string& name,
                                            const std::filesystem::path& source);

  /// Readers of a dataset's samples and annotations hold this while
  /// annotate() holds it exclusively.
  std::shared_lock<std::shared_mutex> read_lock() { return std::shared_lock(data_mutex_); }

  /// Returns false for a duplicate (image, garment, label).
  bool annotate(const std::string& dataset, Annotation a);

  /// Samples lacking `label` for the garment (both garments when unset).
  std::vector<const Sample*> unlabeled(const Dataset& ds, const std::string& label,
                                       std::optional<Garment> garment) const;

  TrainResult train(const TrainRequest& req);
  RetrievalResponse query(const RetrievalRequest& req);

  /// Trained labels for an engine, as "label garment" strings.
  std::vector<std::string> trained_labels(EngineKind engine) const;

  /// Writes `report` under reports/<id>/ and returns the id.
  std::string save_report(const std::string& kind, const nlohmann::json& report,
                          const std::function<void(const std::filesystem::path&)>& emit);
  nlohmann::json report(const std::string& id) const;

  /// Locates a sample's image across datasets (or in one dataset).
  std::filesystem::path sample_image(const std::string& id, const std::string& dataset = {});

 private:
  std::shared_ptr<const RegionScorer> scorer(const ModelRecord& record);

  EngineConfig cfg_;
  Lexicon lexicon_;
  ModelStore models_;
  JobRunner jobs_;

  mutable std::mutex datasets_mutex_;
  std::map<std::string, std::shared_ptr<Dataset>> datasets_;
  std::shared_mutex data_mutex_;
  std::mutex scorers_mutex_;
  std::map<std::string, std::shared_ptr<const RegionScorer>> scorers_;
};

/// Model file id: engine, garment, label slug and a hash of the training
/// configuration and sample ids.
std::string model_id(EngineKind engine, Garment g, const std::string& label,
                     const std::string& dataset, const std::string& config_hash,
                     const std::vector<std::string>& positives,
                     const std::vector<std::string>& negatives);

/// Region scorer over a persisted model document.
std::shared_ptr<const RegionScorer> scorer_from_json(const nlohmann::json& doc);

}  // namespace hq
