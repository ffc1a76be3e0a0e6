#include "huequery/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "huequery/hash.hpp"
#include "huequery/parallel.hpp"

namespace fs = std::filesystem;

namespace hq {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

double parse_double(const std::string& v) {
  if (v == "inf" || v == "\"inf\"") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("not a number: '" + v + "'");
  return d;
}

long long parse_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("not an integer: '" + v + "'");
  return i;
}

std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::string body = v;
  if (!body.empty() && body.front() == '[') body = body.substr(1);
  if (!body.empty() && body.back() == ']') body.pop_back();
  std::vector<std::size_t> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<std::size_t>(parse_int(item)));
  }
  return out;
}

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

std::string slug(const std::string& label) {
  std::string out;
  for (unsigned char c : label) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "label" : out;
}

bool valid_name(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

std::string leaf_key(Garment g, const std::string& label) { return label + " " + to_string(g); }

}  // namespace

EngineConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read config " + file.string());
  EngineConfig cfg;
  auto& ex = cfg.experiment;
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = file.string() + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(where + "expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    try {
      if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "service.host") cfg.host = value;
      else if (key == "service.port") cfg.port = static_cast<int>(parse_int(value));
      else if (key == "service.data_dir") cfg.data_dir = value;
      else if (key == "service.lexicon_dir") cfg.lexicon_dir = value;
      else if (key == "service.workers") ex.workers = static_cast<int>(parse_int(value));
      else if (key == "gmm.tau") ex.filter.tau = parse_double(value);
      else if (key == "gmm.components") ex.em.components = static_cast<int>(parse_int(value));
      else if (key == "gmm.max_iters") ex.em.max_iters = static_cast<int>(parse_int(value));
      else if (key == "gmm.rel_tolerance") ex.em.rel_tolerance = parse_double(value);
      else if (key == "gmm.restarts") ex.em.restarts = static_cast<int>(parse_int(value));
      else if (key == "gmm.seed") ex.em.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "gmm.min_weight") ex.em.min_weight = parse_double(value);
      else if (key == "gmm.standard_mixture")
        ex.loglik_form = parse_bool(value) ? LoglikForm::standard_mixture
                                           : LoglikForm::weighted_log_densities;
      else if (key == "svm.gamma") ex.svm.gamma = parse_double(value);
      else if (key == "svm.cost") ex.svm.cost = parse_double(value);
      else if (key == "svm.tolerance") ex.svm.tolerance = parse_double(value);
      else if (key == "svm.max_iterations") ex.svm.max_iterations = static_cast<std::size_t>(parse_int(value));
      else if (key == "svm.pixel_cap") ex.svm.pixel_cap = static_cast<std::size_t>(parse_int(value));
      else if (key == "svm.seed") ex.svm.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "svm.cache_mb") ex.svm.cache_mb = static_cast<std::size_t>(parse_int(value));
      else if (key == "svm.kernel") {
        if (value != "rbf") throw std::invalid_argument("only the rbf kernel is supported");
      }
      else if (key == "eval.trials") ex.split.trials = static_cast<int>(parse_int(value));
      else if (key == "eval.seed") ex.split.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "eval.pair_exclusive") ex.split.pair_exclusive = parse_bool(value);
      else if (key == "eval.precision_cutoffs") ex.precision_cutoffs = parse_size_list(value);
      else if (key == "segmentation.clusters") cfg.segmentation.kmeans.clusters = static_cast<int>(parse_int(value));
      else if (key == "segmentation.growcut_max_iters") cfg.segmentation.growcut.max_iters = static_cast<int>(parse_int(value));
      else if (key == "segmentation.split_lambda") cfg.segmentation.split.area_weight = parse_double(value);
      else if (key == "segmentation.head_fraction") cfg.segmentation.split.head_fraction = parse_double(value);
      else throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + e.what());
    } catch (const std::out_of_range&) {
      throw std::runtime_error(where + "value out of range for '" + key + "'");
    }
  }
  if (!(ex.svm.gamma > 0.0) || !(ex.svm.cost > 0.0)) {
    throw std::runtime_error(file.string() + ": svm gamma and cost must be positive");
  }
  return cfg;
}

void apply_env_overrides(EngineConfig& cfg) {
  if (const char* port = std::getenv("HUEQUERY_PORT"); port && *port) {
    cfg.port = static_cast<int>(parse_int(port));
  }
  if (const char* dir = std::getenv("HUEQUERY_DATA_DIR"); dir && *dir) cfg.data_dir = dir;
}

// ---------------------------------------------------------------------------

ModelStore::ModelStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

bool ModelStore::publish(const std::string& id, const nlohmann::json& doc) {
  std::lock_guard lock(mutex_);
  const fs::path target = dir_ / (id + ".json");
  if (fs::exists(target)) return false;
  const fs::path tmp = dir_ / ("." + id + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
  return true;
}

std::vector<ModelRecord> ModelStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<ModelRecord> out;
  if (!fs::exists(dir_)) return out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto& p = entry.path();
    if (p.extension() != ".json" || p.filename().string().front() == '.') continue;
    std::ifstream in(p);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id")) continue;
    ModelRecord r;
    r.id = j.at("id").get<std::string>();
    r.engine = parse_engine(j.at("engine").get<std::string>());
    r.garment = parse_garment(j.at("garment").get<std::string>());
    r.label = j.at("label").get<std::string>();
    r.dataset = j.value("dataset", "");
    r.created = j.value("created", "");
    r.positives = j.value("positives", std::size_t{0});
    r.negatives = j.value("negatives", std::size_t{0});
    r.path = p;
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const ModelRecord& a, const ModelRecord& b) {
    return std::tie(a.created, a.id) < std::tie(b.created, b.id);
  });
  return out;
}

std::optional<ModelRecord> ModelStore::find(const std::string& id) const {
  for (auto& r : list()) {
    if (r.id == id) return r;
  }
  return std::nullopt;
}

std::optional<ModelRecord> ModelStore::latest(Garment g, const std::string& label, EngineKind engine,
                                              const std::string& dataset) const {
  std::optional<ModelRecord> best;
  for (auto& r : list()) {
    if (r.garment != g || r.label != label || r.engine != engine) continue;
    if (!dataset.empty() && r.dataset != dataset) continue;
    best = r;
  }
  return best;
}

nlohmann::json ModelStore::read(const std::string& id) const {
  if (!valid_name(id)) throw ServiceError(404, "not_found", "no model '" + id + "'");
  const fs::path p = dir_ / (id + ".json");
  std::ifstream in(p);
  if (!in) throw ServiceError(404, "not_found", "no model '" + id + "'");
  return nlohmann::json::parse(in);
}

std::string model_id(EngineKind engine, Garment g, const std::string& label,
                     const std::string& dataset, const std::string& config_hash,
                     const std::vector<std::string>& positives,
                     const std::vector<std::string>& negatives) {
  const nlohmann::json key = {{"engine", to_string(engine)}, {"garment", to_string(g)},
                              {"label", label},           {"dataset", dataset},
                              {"config", config_hash},     {"positives", positives},
                              {"negatives", negatives}};
  return std::string(engine == EngineKind::generative ? "gmm" : "svm") + "-" + to_string(g) + "-" +
         slug(label) + "-" + hex64(fnv1a(key.dump())).substr(0, 12);
}

std::shared_ptr<const RegionScorer> scorer_from_json(const nlohmann::json& doc) {
  if (parse_engine(doc.at("engine").get<std::string>()) == EngineKind::generative) {
    return make_scorer(doc.get<ColorModel>());
  }
  return make_scorer(doc.get<SvmModel>());
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const QueryAst& ast) {
  if (ast.is_leaf()) {
    return {{"op", "leaf"}, {"garment", to_string(ast.garment)}, {"label", ast.color_label}};
  }
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : ast.children) children.push_back(to_json(c));
  return {{"op", ast.kind == QueryAst::Kind::all_of ? "and" : "or"}, {"children", children}};
}

QueryAst ast_from_json(const nlohmann::json& j) {
  const auto op = j.at("op").get<std::string>();
  if (op == "leaf") {
    return QueryAst::leaf(parse_garment(j.at("garment").get<std::string>()),
                          normalize_label(j.at("label").get<std::string>()));
  }
  std::vector<QueryAst> children;
  for (const auto& c : j.at("children")) children.push_back(ast_from_json(c));
  if (op == "and") return QueryAst::all_of(std::move(children));
  if (op == "or") return QueryAst::any_of(std::move(children));
  throw std::invalid_argument("unknown query op '" + op + "'");
}

nlohmann::json to_json(const ModelRecord& r) {
  return {{"id", r.id},
          {"engine", to_string(r.engine)},
          {"garment", to_string(r.garment)},
          {"label", r.label},
          {"dataset", r.dataset},
          {"created", r.created},
          {"positives", r.positives},
          {"negatives", r.negatives}};
}

nlohmann::json to_json(const RetrievalResponse& r) {
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    const auto& s = r.ranked[i];
    nlohmann::json item = {{"rank", i + 1}, {"id", s.id}, {"image", s.image}};
    item["score"] = std::isfinite(s.score) ? nlohmann::json(s.score) : nlohmann::json(nullptr);
    ranked.push_back(std::move(item));
  }
  return {{"query", to_json(r.ast)},
          {"query_text", to_text(r.ast)},
          {"ranked", ranked},
          {"model_ids", r.model_ids},
          {"elapsed_ms", r.elapsed_ms}};
}

// ---------------------------------------------------------------------------

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

JobRunner::~JobRunner() {
  std::vector<std::jthread> threads;
  {
    std::lock_guard lock(mutex_);
    threads.swap(threads_);
  }
  threads.clear();
}

std::string JobRunner::submit(std::string kind, Task task) {
  std::lock_guard lock(mutex_);
  const std::string id = "job-" + std::to_string(next_++);
  jobs_[id] = JobStatus{id, std::move(kind), JobState::queued, nullptr, {}, 500};
  threads_.emplace_back([this, id, task = std::move(task)] {
    {
      std::lock_guard l(mutex_);
      jobs_[id].state = JobState::running;
    }
    changed_.notify_all();
    nlohmann::json result;
    std::string error;
    int status = 500;
    bool ok = false;
    try {
      result = task();
      ok = true;
    } catch (const ServiceError& e) {
      error = e.what();
      status = e.status();
    } catch (const std::exception& e) {
      error = e.what();
    }
    {
      std::lock_guard l(mutex_);
      auto& job = jobs_[id];
      job.state = ok ? JobState::done : JobState::failed;
      job.result = std::move(result);
      job.error = std::move(error);
      job.error_status = status;
    }
    changed_.notify_all();
  });
  return id;
}

std::optional<JobStatus> JobRunner::status(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

JobStatus JobRunner::wait(const std::string& id) const {
  std::unique_lock lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw ServiceError(404, "not_found", "no job '" + id + "'");
  changed_.wait(lock, [&] {
    return it->second.state == JobState::done || it->second.state == JobState::failed;
  });
  return it->second;
}

// ---------------------------------------------------------------------------

Engine::Engine(EngineConfig cfg)
    : cfg_(std::move(cfg)),
      lexicon_(cfg_.lexicon_dir.empty() ? default_lexicon() : load_lexicon(cfg_.lexicon_dir)),
      models_(cfg_.data_dir / "models") {
  fs::create_directories(datasets_dir());
  fs::create_directories(reports_dir());
}

std::vector<std::string> Engine::dataset_names() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(datasets_dir())) {
    if (entry.is_directory() && valid_name(entry.path().filename().string())) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<Dataset> Engine::dataset(const std::string& name) {
  std::lock_guard lock(datasets_mutex_);
  if (auto it = datasets_.find(name); it != datasets_.end()) return it->second;
  if (!valid_name(name) || !fs::is_directory(datasets_dir() / name)) {
    throw ServiceError(404, "not_found", "no dataset '" + name + "'");
  }
  DatasetLayout layout;
  layout.root = datasets_dir() / name;
  IngestOptions opts;
  opts.segmentation = cfg_.segmentation;
  opts.workers = cfg_.experiment.workers;
  auto ds = std::make_shared<Dataset>(ingest(layout, name, opts));
  datasets_[name] = ds;
  return ds;
}

void Engine::reload(const std::string& name) {
  std::lock_guard lock(datasets_mutex_);
  datasets_.erase(name);
}

std::shared_ptr<Dataset> Engine::register_dataset(const std::string& name, const fs::path& source) {
  if (!valid_name(name)) throw ServiceError(422, "invalid_name", "bad dataset name '" + name + "'");
  const fs::path link = datasets_dir() / name;
  const fs::path src = fs::absolute(source);
  if (!fs::is_directory(src)) throw ServiceError(404, "not_found", "no directory " + src.string());
  if (fs::exists(link)) {
    if (!fs::equivalent(link, src)) {
      throw ServiceError(409, "conflict", "dataset '" + name + "' already points elsewhere");
    }
  } else {
    fs::create_directory_symlink(src, link);
  }
  reload(name);
  return dataset(name);
}

bool Engine::annotate(const std::string& name, Annotation a) {
  auto ds = dataset(name);
  std::unique_lock lock(data_mutex_);
  try {
    return hq::annotate(*ds, std::move(a));
  } catch (const std::invalid_argument& e) {
    throw ServiceError(422, "invalid_annotation", e.what());
  }
}

std::vector<const Sample*> Engine::unlabeled(const Dataset& ds, const std::string& label,
                                             std::optional<Garment> garment) const {
  std::vector<const Sample*> out;
  const std::string norm = label.empty() ? std::string() : normalize_label(label);
  for (const auto& s : ds.samples()) {
    bool has = false;
    if (!norm.empty()) {
      for (Garment g : {Garment::upper, Garment::lower}) {
        if (garment && *garment != g) continue;
        has = has || ds.has_label(s.id, g, norm);
      }
    }
    if (!has) out.push_back(&s);
  }
  return out;
}

TrainResult Engine::train(const TrainRequest& req) {
  auto ds = dataset(req.dataset);
  std::shared_lock lock(data_mutex_);
  std::string label;
  try {
    label = normalize_label(req.label);
  } catch (const std::invalid_argument& e) {
    throw ServiceError(422, "invalid_label", e.what());
  }
  const auto& ex = cfg_.experiment;
  const std::uint64_t seed = req.seed.value_or(cfg_.seed);

  std::vector<std::string> pos = req.sample_ids;
  if (pos.empty()) {
    pos = ds->positives(req.garment, label);
  } else {
    for (const auto& id : pos) {
      if (!ds->find(id)) throw ServiceError(404, "not_found", "no sample '" + id + "'");
    }
  }
  std::erase_if(pos, [&](const std::string& id) { return ds->find(id)->region(req.garment).pixels.empty(); });
  if (pos.empty()) {
    throw ServiceError(422, "insufficient_positives",
                       "no usable samples labeled '" + label + "' for " + to_string(req.garment));
  }
  std::mt19937_64 rng(seed);
  if (req.k > 0 && req.k < pos.size()) {
    std::shuffle(pos.begin(), pos.end(), rng);
    pos.resize(req.k);
  }

  std::vector<std::string> neg;
  nlohmann::json doc;
  std::string chash;
  if (req.engine == EngineKind::generative) {
    if (!req.negative_ids.empty()) {
      throw ServiceError(422, "negatives_rejected", "the generative engine trains on positives only");
    }
    std::vector<SampleRegion> regions;
    for (const auto& id : pos) regions.push_back(ds->find(id)->region(req.garment));
    ColorModel model;
    try {
      model = train_color_model(regions, label, req.garment, ex.filter, ex.em);
    } catch (const DomainError& e) {
      throw ServiceError(422, "training_failed", e.what());
    }
    model.loglik_form = ex.loglik_form;
    doc = model;
    chash = config_hash(ex.filter, ex.em, ex.loglik_form);
  } else {
    neg = req.negative_ids;
    if (neg.empty()) {
      std::vector<std::string> pool;
      for (const auto& s : ds->samples()) {
        if (!ds->has_label(s.id, req.garment, label) && !s.region(req.garment).pixels.empty()) {
          pool.push_back(s.id);
        }
      }
      if (pool.size() < pos.size()) {
        throw ServiceError(422, "insufficient_negatives",
                           "need " + std::to_string(pos.size()) + " negatives, corpus has " +
                               std::to_string(pool.size()));
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(pos.size());
      neg = std::move(pool);
    } else {
      for (const auto& id : neg) {
        if (!ds->find(id)) throw ServiceError(404, "not_found", "no sample '" + id + "'");
      }
    }
    std::vector<SampleRegion> p, n;
    for (const auto& id : pos) p.push_back(ds->find(id)->region(req.garment));
    for (const auto& id : neg) n.push_back(ds->find(id)->region(req.garment));
    SvmModel model;
    try {
      model = train_svm(p, n, ex.svm);
    } catch (const std::exception& e) {
      throw ServiceError(422, "training_failed", e.what());
    }
    model.label = label;
    model.garment = req.garment;
    doc = model;
    chash = config_hash(ex.svm);
  }

  TrainResult result;
  result.model.id = model_id(req.engine, req.garment, label, ds->name, chash, pos, neg);
  if (auto existing = models_.find(result.model.id)) {
    result.model = *existing;
    return result;
  }
  doc["id"] = result.model.id;
  doc["dataset"] = ds->name;
  doc["created"] = now_iso();
  doc["positives"] = pos.size();
  doc["negatives"] = neg.size();
  result.created = models_.publish(result.model.id, doc);
  result.model = *models_.find(result.model.id);
  return result;
}

std::shared_ptr<const RegionScorer> Engine::scorer(const ModelRecord& record) {
  {
    std::lock_guard lock(scorers_mutex_);
    if (auto it = scorers_.find(record.id); it != scorers_.end()) return it->second;
  }
  auto s = scorer_from_json(models_.read(record.id));
  std::lock_guard lock(scorers_mutex_);
  return scorers_.emplace(record.id, std::move(s)).first->second;
}

std::vector<std::string> Engine::trained_labels(EngineKind engine) const {
  std::set<std::string> labels;
  for (const auto& r : models_.list()) {
    if (r.engine == engine) labels.insert(leaf_key(r.garment, r.label));
  }
  return {labels.begin(), labels.end()};
}

RetrievalResponse Engine::query(const RetrievalRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  if (req.top_n < 1) throw ServiceError(422, "invalid_request", "top_n must be at least 1");
  RetrievalResponse resp;
  if (req.ast) {
    resp.ast = *req.ast;
  } else {
    try {
      resp.ast = parse_query(req.text, lexicon_);
    } catch (const ParseError& e) {
      throw ServiceError(422, "parse_error", e.what());
    }
  }
  auto ds = dataset(req.dataset);

  std::vector<std::pair<std::pair<Garment, std::string>, std::shared_ptr<const RegionScorer>>> leaf_models;
  for (const QueryAst* leaf : leaves(resp.ast)) {
    const auto key = std::make_pair(leaf->garment, leaf->color_label);
    if (std::any_of(leaf_models.begin(), leaf_models.end(),
                    [&](const auto& lm) { return lm.first == key; })) {
      continue;
    }
    auto rec = models_.latest(leaf->garment, leaf->color_label, req.engine, ds->name);
    if (!rec) rec = models_.latest(leaf->garment, leaf->color_label, req.engine);
    if (!rec) {
      throw UntrainedLabel("no " + to_string(req.engine) + " model for '" +
                               leaf_key(leaf->garment, leaf->color_label) + "'",
                           trained_labels(req.engine));
    }
    resp.model_ids[leaf_key(leaf->garment, leaf->color_label)] = rec->id;
    leaf_models.emplace_back(key, scorer(*rec));
  }

  std::shared_lock lock(data_mutex_);
  const auto& samples = ds->samples();
  std::vector<RankedItem> items(samples.size());
  parallel_for(samples.size(), cfg_.experiment.workers, [&](std::size_t i) {
    LeafScores scores;
    for (const auto& [key, sc] : leaf_models) scores[key] = sc->log_score(samples[i].region(key.first));
    items[i] = {samples[i].id, combine_log(resp.ast, scores), false};
  });
  const RankedList ranked(std::move(items));
  const std::size_t n = std::min(req.top_n, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& it = ranked.items()[i];
    resp.ranked.push_back({it.id, it.score, "/v1/samples/" + it.id + "/image?dataset=" + ds->name});
  }
  resp.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return resp;
}

std::string Engine::save_report(const std::string& kind, const nlohmann::json& report,
                                const std::function<void(const fs::path&)>& emit) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
  const std::string id = kind + "-" + stamp + "-" + hex64(fnv1a(report.dump())).substr(0, 8);
  emit(reports_dir() / id);
  return id;
}

nlohmann::json Engine::report(const std::string& id) const {
  const fs::path dir = reports_dir() / id;
  std::ifstream in(dir / "report.json");
  if (!valid_name(id) || !in) throw ServiceError(404, "not_found", "no report '" + id + "'");
  auto j = nlohmann::json::parse(in);
  j["id"] = id;
  if (std::ifstream txt(dir / "report.txt"); txt) {
    std::stringstream ss;
    ss << txt.rdbuf();
    j["table"] = ss.str();
  }
  nlohmann::json curves = nlohmann::json::object();
  if (fs::is_directory(dir / "pr_curves")) {
    for (const auto& entry : fs::directory_iterator(dir / "pr_curves")) {
      if (entry.path().extension() != ".csv") continue;
      std::ifstream csv(entry.path());
      std::string line;
      std::getline(csv, line);  // header
      nlohmann::json points = nlohmann::json::array();
      while (std::getline(csv, line)) {
        std::stringstream ls(line);
        std::string trial, rank, precision, recall;
        std::getline(ls, trial, ',');
        std::getline(ls, rank, ',');
        std::getline(ls, precision, ',');
        std::getline(ls, recall, ',');
        points.push_back({std::stoi(trial), std::stoi(rank), std::stod(precision), std::stod(recall)});
      }
      curves[entry.path().stem().string()] = {{"columns", {"trial", "rank", "precision", "recall"}},
                                              {"points", points}};
    }
  }
  j["pr_curves"] = curves;
  return j;
}

fs::path Engine::sample_image(const std::string& id, const std::string& dataset_name) {
  std::vector<std::string> names;
  if (!dataset_name.empty()) {
    names.push_back(dataset_name);
  } else {
    names = dataset_names();
  }
  for (const auto& name : names) {
    auto ds = dataset(name);
    std::shared_lock lock(data_mutex_);
    if (const Sample* s = ds->find(id)) return s->image_path;
  }
  throw ServiceError(404, "not_found", "no sample '" + id + "'");
}

}  // namespace hq
