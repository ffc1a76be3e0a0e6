#include "huequery/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "huequery/parallel.hpp"

namespace fs = std::filesystem;

namespace hq {

std::string to_string(EngineKind e) {
  return e == EngineKind::generative ? "generative" : "discriminative";
}

EngineKind parse_engine(std::string_view text) {
  if (text == "generative" || text == "gmm") return EngineKind::generative;
  if (text == "discriminative" || text == "svm") return EngineKind::discriminative;
  throw std::invalid_argument("unknown engine '" + std::string(text) + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

class GenerativeScorer final : public RegionScorer {
 public:
  explicit GenerativeScorer(ColorModel model) : model_(std::move(model)), scorer_(model_) {}
  double log_score(const SampleRegion& region) const override {
    if (region.pixels.empty()) return -std::numeric_limits<double>::infinity();
    return scorer_.region_log_score(region.pixels);
  }
  std::size_t complexity() const override { return model_.size(); }

 private:
  ColorModel model_;
  GmmScorer scorer_;
};

class DiscriminativeScorer final : public RegionScorer {
 public:
  explicit DiscriminativeScorer(SvmModel model) : model_(std::move(model)) {}
  double log_score(const SampleRegion& region) const override {
    if (region.pixels.empty()) return -std::numeric_limits<double>::infinity();
    return std::log(std::max(svm_region_score(region.pixels, model_), 1e-300));
  }
  std::size_t complexity() const override { return model_.support_vectors.size(); }

 private:
  SvmModel model_;
};

std::vector<SampleRegion> regions_for(const Dataset& ds, const std::vector<std::string>& ids,
                                      Garment g) {
  std::vector<SampleRegion> out;
  for (const auto& id : ids) {
    const Sample* s = ds.find(id);
    if (!s) throw std::invalid_argument("unknown sample id " + id);
    if (!s->region(g).pixels.empty()) out.push_back(s->region(g));
  }
  return out;
}

TrialResult evaluate_trial(const Dataset& train_ds, const Dataset& test_ds,
                           const QueryTarget& query, const std::vector<std::string>& pos,
                           const std::vector<std::string>& neg,
                           const std::vector<std::string>& test_ids,
                           const std::vector<bool>& relevant, EngineKind engine,
                           const ExperimentConfig& cfg) {
  TrialResult tr;
  auto t0 = Clock::now();
  const auto scorer = train_scorer(train_ds, query, pos, neg, engine, cfg);
  tr.train_ms = elapsed_ms(t0);
  t0 = Clock::now();
  const auto ranked = rank_samples(test_ds, *scorer, query.garment, test_ids, relevant);
  tr.score_ms = elapsed_ms(t0);
  tr.test_size = ranked.size();
  tr.relevant = ranked.relevant_count();
  tr.bep = bep(ranked);
  for (auto n : cfg.precision_cutoffs) tr.precision_at.push_back(p_at_n(ranked, n).percent);
  tr.pr = pr_curve(ranked);
  return tr;
}

}  // namespace

std::unique_ptr<RegionScorer> train_scorer(const Dataset& dataset, const QueryTarget& target,
                                           const std::vector<std::string>& positive_ids,
                                           const std::vector<std::string>& negative_ids,
                                           EngineKind engine, const ExperimentConfig& cfg) {
  const auto pos = regions_for(dataset, positive_ids, target.garment);
  if (engine == EngineKind::generative) {
    auto model = train_color_model(pos, target.label, target.garment, cfg.filter, cfg.em);
    model.loglik_form = cfg.loglik_form;
    return make_scorer(std::move(model));
  }
  const auto neg = regions_for(dataset, negative_ids, target.garment);
  auto model = train_svm(pos, neg, cfg.svm);
  model.label = target.label;
  model.garment = target.garment;
  return make_scorer(std::move(model));
}

std::unique_ptr<RegionScorer> make_scorer(ColorModel model) {
  return std::make_unique<GenerativeScorer>(std::move(model));
}

std::unique_ptr<RegionScorer> make_scorer(SvmModel model) {
  return std::make_unique<DiscriminativeScorer>(std::move(model));
}

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

Summary ReportEntry::bep() const {
  std::vector<double> xs;
  for (const auto& t : trials) xs.push_back(t.bep);
  return summarize(xs);
}

Summary ReportEntry::precision_at(std::size_t index) const {
  std::vector<double> xs;
  for (const auto& t : trials) xs.push_back(t.precision_at.at(index));
  return summarize(xs);
}

RankedList rank_samples(const Dataset& dataset, const RegionScorer& scorer, Garment garment,
                        const std::vector<std::string>& test_ids, const std::vector<bool>& relevant) {
  if (test_ids.size() != relevant.size()) {
    throw std::invalid_argument("rank_samples: relevance flags do not match ids");
  }
  std::vector<RankedItem> items;
  items.reserve(test_ids.size());
  for (std::size_t i = 0; i < test_ids.size(); ++i) {
    const Sample* s = dataset.find(test_ids[i]);
    if (!s) throw std::invalid_argument("unknown sample id " + test_ids[i]);
    items.push_back({s->id, scorer.log_score(s->region(garment)), relevant[i]});
  }
  return RankedList(std::move(items));
}

EvalReport run_robustness(const Dataset& dataset, const std::vector<QueryTarget>& queries,
                          const std::vector<std::size_t>& ks, EngineKind engine,
                          const ExperimentConfig& cfg) {
  EvalReport report;
  report.kind = "robustness";
  report.dataset = dataset.name;
  report.precision_cutoffs = cfg.precision_cutoffs;
  for (const auto& q : queries) {
    for (auto k : ks) {
      ReportEntry entry;
      entry.query = {q.garment, normalize_label(q.label)};
      entry.engine = engine;
      entry.k = k;
      try {
        const auto plan = make_splits(dataset, entry.query, k, cfg.split);
        entry.trials.resize(plan.trials.size());
        parallel_for(plan.trials.size(), cfg.workers, [&](std::size_t t) {
          const auto& tr = plan.trials[t];
          entry.trials[t] = evaluate_trial(dataset, dataset, entry.query, tr.train_positive,
                                           tr.train_negative, tr.test, tr.test_relevant, engine, cfg);
          entry.trials[t].seed = tr.seed;
        });
      } catch (const InsufficientPositives& e) {
        entry.error = e.what();
        entry.trials.clear();
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

EvalReport run_cross_database(const Dataset& train, const std::vector<const Dataset*>& tests,
                              const std::vector<QueryTarget>& queries,
                              const std::vector<std::size_t>& ks, EngineKind engine,
                              const ExperimentConfig& cfg) {
  EvalReport report;
  report.kind = "cross";
  report.dataset = train.name;
  report.precision_cutoffs = cfg.precision_cutoffs;
  for (const auto& q : queries) {
    const QueryTarget target{q.garment, normalize_label(q.label)};
    for (auto k : ks) {
      std::vector<ReportEntry> entries;
      for (const Dataset* test : tests) {
        ReportEntry e;
        e.query = target;
        e.engine = engine;
        e.k = k;
        e.test_dataset = test->name;
        entries.push_back(std::move(e));
      }
      try {
        const auto plan = make_splits(train, target, k, cfg.split);
        for (auto& e : entries) e.trials.resize(plan.trials.size());
        parallel_for(plan.trials.size(), cfg.workers, [&](std::size_t t) {
          const auto& tr = plan.trials[t];
          auto t0 = Clock::now();
          const auto scorer =
              train_scorer(train, target, tr.train_positive, tr.train_negative, engine, cfg);
          const double train_ms = elapsed_ms(t0);
          for (std::size_t d = 0; d < tests.size(); ++d) {
            const Dataset& test = *tests[d];
            std::vector<std::string> ids;
            std::vector<bool> rel;
            for (const auto& s : test.samples()) {
              ids.push_back(s.id);
              rel.push_back(test.has_label(s.id, target.garment, target.label));
            }
            auto& out = entries[d].trials[t];
            out.seed = tr.seed;
            out.train_ms = train_ms;
            t0 = Clock::now();
            const auto ranked = rank_samples(test, *scorer, target.garment, ids, rel);
            out.score_ms = elapsed_ms(t0);
            out.test_size = ranked.size();
            out.relevant = ranked.relevant_count();
            if (out.relevant == 0) {
              throw DomainError("test dataset " + test.name + " has no '" + target.label + " " +
                                to_string(target.garment) + "' samples");
            }
            out.bep = bep(ranked);
            for (auto n : cfg.precision_cutoffs) out.precision_at.push_back(p_at_n(ranked, n).percent);
            out.pr = pr_curve(ranked);
          }
        });
      } catch (const InsufficientPositives& ex) {
        for (auto& e : entries) {
          e.error = ex.what();
          e.trials.clear();
        }
      }
      for (auto& e : entries) report.entries.push_back(std::move(e));
    }
  }
  return report;
}

TimingReport run_timing(const Dataset& dataset, const QueryTarget& query,
                        const std::vector<std::size_t>& ks, EngineKind engine,
                        const ExperimentConfig& cfg, int runs, std::size_t test_samples) {
  TimingReport report;
  report.query = {query.garment, normalize_label(query.label)};
  report.engine = engine;
  SplitOptions split = cfg.split;
  split.trials = 1;
  for (auto k : ks) {
    const auto plan = make_splits(dataset, report.query, k, split);
    const auto& tr = plan.trials.front();
    std::vector<const SampleRegion*> test;
    for (const auto& id : tr.test) {
      const auto& region = dataset.find(id)->region(report.query.garment);
      if (!region.pixels.empty()) test.push_back(&region);
      if (test.size() == test_samples) break;
    }
    TimingPoint point;
    point.k = k;
    auto t0 = Clock::now();
    const auto scorer =
        train_scorer(dataset, report.query, tr.train_positive, tr.train_negative, engine, cfg);
    point.train_ms = elapsed_ms(t0);
    point.complexity = scorer->complexity();

    volatile double sink = 0.0;
    auto score_all = [&] {
      double acc = 0.0;
      for (const auto* r : test) acc += scorer->log_score(*r);
      sink = sink + acc;
    };
    score_all();  // warm-up
    std::vector<double> times;
    for (int r = 0; r < std::max(1, runs); ++r) {
      t0 = Clock::now();
      score_all();
      times.push_back(elapsed_ms(t0));
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    point.score_ms_per_100 = test.empty() ? 0.0 : median * 100.0 / static_cast<double>(test.size());
    report.points.push_back(point);
  }
  return report;
}

namespace {

nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

std::string entry_stem(const ReportEntry& e) {
  std::string label = e.query.label;
  std::replace(label.begin(), label.end(), ' ', '-');
  std::string stem = label + "_" + to_string(e.query.garment) + "_" + to_string(e.engine) + "_k" +
                     std::to_string(e.k);
  if (!e.test_dataset.empty()) stem += "_" + e.test_dataset;
  return stem;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : report.entries) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : e.trials) {
      trials.push_back({{"seed", t.seed},
                        {"bep", t.bep},
                        {"precision_at", t.precision_at},
                        {"train_ms", t.train_ms},
                        {"score_ms", t.score_ms},
                        {"test_size", t.test_size},
                        {"relevant", t.relevant}});
    }
    nlohmann::json j = {{"label", e.query.label},
                        {"garment", to_string(e.query.garment)},
                        {"engine", to_string(e.engine)},
                        {"k", e.k},
                        {"trials", trials}};
    if (!e.test_dataset.empty()) j["test_dataset"] = e.test_dataset;
    if (!e.error.empty()) {
      j["error"] = e.error;
    } else {
      j["bep"] = summary_json(e.bep());
      nlohmann::json pn = nlohmann::json::object();
      for (std::size_t i = 0; i < report.precision_cutoffs.size(); ++i) {
        pn["P@" + std::to_string(report.precision_cutoffs[i])] = summary_json(e.precision_at(i));
      }
      j["precision_at"] = pn;
    }
    entries.push_back(std::move(j));
  }
  return {{"kind", report.kind},
          {"dataset", report.dataset},
          {"precision_cutoffs", report.precision_cutoffs},
          {"entries", entries}};
}

nlohmann::json to_json(const TimingReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points) {
    points.push_back({{"k", p.k},
                      {"train_ms", p.train_ms},
                      {"score_ms_per_100", p.score_ms_per_100},
                      {"complexity", p.complexity}});
  }
  return {{"kind", "timing"},
          {"label", report.query.label},
          {"garment", to_string(report.query.garment)},
          {"engine", to_string(report.engine)},
          {"points", points}};
}

std::string format_table(const EvalReport& report) {
  // Rows keyed by query/engine/test set, BEP columns per k.
  std::vector<std::size_t> ks;
  std::map<std::string, std::map<std::size_t, const ReportEntry*>> rows;
  std::vector<std::string> order;
  for (const auto& e : report.entries) {
    if (std::find(ks.begin(), ks.end(), e.k) == ks.end()) ks.push_back(e.k);
    std::string name = e.query.label + " " + to_string(e.query.garment) + " [" + to_string(e.engine) + "]";
    if (!e.test_dataset.empty()) name += " -> " + e.test_dataset;
    if (!rows.contains(name)) order.push_back(name);
    rows[name][e.k] = &e;
  }
  std::sort(ks.begin(), ks.end());
  const std::size_t pn_k = std::find(ks.begin(), ks.end(), 10) != ks.end() ? 10 : (ks.empty() ? 0 : ks.back());

  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-40s", (report.kind + " / " + report.dataset).c_str());
  out << buf;
  for (auto k : ks) {
    std::snprintf(buf, sizeof buf, " %13s", ("BEP k=" + std::to_string(k)).c_str());
    out << buf;
  }
  for (auto n : report.precision_cutoffs) {
    std::snprintf(buf, sizeof buf, " %9s", ("P@" + std::to_string(n)).c_str());
    out << buf;
  }
  out << "   (P@N at k=" << pn_k << ")\n";

  std::map<std::size_t, std::vector<double>> col_means;
  std::vector<std::vector<double>> pn_means(report.precision_cutoffs.size());
  for (const auto& name : order) {
    std::snprintf(buf, sizeof buf, "%-40s", name.c_str());
    out << buf;
    for (auto k : ks) {
      auto it = rows[name].find(k);
      if (it == rows[name].end() || !it->second->error.empty() || it->second->trials.empty()) {
        std::snprintf(buf, sizeof buf, " %13s", "-");
      } else {
        const auto s = it->second->bep();
        col_means[k].push_back(s.mean);
        std::snprintf(buf, sizeof buf, " %6.1f(%5.1f)", s.mean, s.stddev);
      }
      out << buf;
    }
    auto it = rows[name].find(pn_k);
    for (std::size_t i = 0; i < report.precision_cutoffs.size(); ++i) {
      if (it == rows[name].end() || !it->second->error.empty() || it->second->trials.empty()) {
        std::snprintf(buf, sizeof buf, " %9s", "-");
      } else {
        const double m = it->second->precision_at(i).mean;
        pn_means[i].push_back(m);
        std::snprintf(buf, sizeof buf, " %9.1f", m);
      }
      out << buf;
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "%-40s", "Mean");
  out << buf;
  for (auto k : ks) {
    if (col_means[k].empty()) {
      std::snprintf(buf, sizeof buf, " %13s", "-");
    } else {
      std::snprintf(buf, sizeof buf, " %13.1f", summarize(col_means[k]).mean);
    }
    out << buf;
  }
  for (const auto& col : pn_means) {
    if (col.empty()) {
      std::snprintf(buf, sizeof buf, " %9s", "-");
    } else {
      std::snprintf(buf, sizeof buf, " %9.1f", summarize(col).mean);
    }
    out << buf;
  }
  out << '\n';
  return out.str();
}

void emit_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir / "pr_curves");
  std::ofstream(dir / "report.json") << to_json(report).dump(2) << '\n';
  std::ofstream(dir / "report.txt") << format_table(report);
  for (const auto& e : report.entries) {
    if (e.trials.empty()) continue;
    std::ofstream csv(dir / "pr_curves" / (entry_stem(e) + ".csv"));
    csv << "trial,rank,precision,recall\n";
    for (std::size_t t = 0; t < e.trials.size(); ++t) {
      const auto& pr = e.trials[t].pr;
      for (std::size_t i = 0; i < pr.size(); ++i) {
        csv << t << ',' << (i + 1) << ',' << pr[i].precision << ',' << pr[i].recall << '\n';
      }
    }
  }
}

void emit_report(const TimingReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "report.json") << to_json(report).dump(2) << '\n';
  std::ofstream txt(dir / "report.txt");
  txt << "timing " << report.query.label << ' ' << to_string(report.query.garment) << " ["
      << to_string(report.engine) << "]\n";
  txt << "     k   train_ms  score_ms/100  complexity\n";
  char buf[96];
  for (const auto& p : report.points) {
    std::snprintf(buf, sizeof buf, "%6zu %10.2f %13.2f %11zu\n", p.k, p.train_ms, p.score_ms_per_100,
                  p.complexity);
    txt << buf;
  }
}

}  // namespace hq
