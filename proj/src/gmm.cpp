#include "huequery/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "huequery/hash.hpp"
#include "huequery/kmeans.hpp"

namespace hq {

namespace {

const double kLogTwoPi = std::log(kTwoPi);

double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

struct Density {
  HsvPixel mean;
  Mat3 inverse;
  double log_norm;  // -3/2 log(2pi) - 1/2 log|cov|

  explicit Density(const GaussianComponent& c) : mean(c.mean) {
    Eigen::LLT<Mat3> llt(c.cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("mixture component covariance is not positive definite");
    }
    inverse = llt.solve(Mat3::Identity());
    const auto& l = llt.matrixL();
    const double log_det = 2.0 * (std::log(l(0, 0)) + std::log(l(1, 1)) + std::log(l(2, 2)));
    log_norm = -1.5 * kLogTwoPi - 0.5 * log_det;
  }

  double log_pdf(const HsvPixel& p) const {
    const Vec3 d = hsv_distance(p, mean).vec();
    return log_norm - 0.5 * d.dot(inverse * d);
  }
};

/// M-step: weighted circular moments per component. Components whose weight
/// falls under `min_weight` are dropped.
std::vector<GaussianComponent> maximize(std::span<const HsvPixel> pixels,
                                        const std::vector<std::vector<double>>& resp,
                                        double min_weight) {
  const double n = static_cast<double>(pixels.size());
  std::vector<GaussianComponent> out;
  for (const auto& r : resp) {
    const double mass = std::accumulate(r.begin(), r.end(), 0.0);
    if (!(mass > 0.0) || mass / n < min_weight) continue;
    auto m = circular_moments(pixels, r);
    out.push_back({mass / n, m.mean, m.cov + kCovEpsilon * Mat3::Identity()});
  }
  double total = 0.0;
  for (const auto& c : out) total += c.weight;
  for (auto& c : out) c.weight /= total;
  return out;
}

/// E-step. Fills responsibilities and returns the mean log-likelihood.
double expect(std::span<const HsvPixel> pixels, const std::vector<GaussianComponent>& comps,
              std::vector<std::vector<double>>& resp) {
  std::vector<Density> dens;
  std::vector<double> log_w;
  for (const auto& c : comps) {
    dens.emplace_back(c);
    log_w.push_back(std::log(c.weight));
  }
  resp.assign(comps.size(), std::vector<double>(pixels.size(), 0.0));
  std::vector<double> terms(comps.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    for (std::size_t c = 0; c < comps.size(); ++c) {
      terms[c] = log_w[c] + dens[c].log_pdf(pixels[i]);
    }
    const double lse = log_sum_exp(terms);
    total += lse;
    for (std::size_t c = 0; c < comps.size(); ++c) resp[c][i] = std::exp(terms[c] - lse);
  }
  return total / static_cast<double>(pixels.size());
}

EmResult run_em(std::span<const HsvPixel> pixels, std::span<const HueEmbedding> emb,
                const EmConfig& cfg, std::mt19937_64& rng) {
  const auto seeds = kmeans_pp_seed(emb, cfg.components, rng);
  std::vector<std::vector<double>> resp(seeds.size(), std::vector<double>(pixels.size(), 0.0));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < seeds.size(); ++c) {
      const double d = squared_distance(emb[i], emb[seeds[c]]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    resp[best][i] = 1.0;
  }

  EmResult result;
  auto comps = maximize(pixels, resp, cfg.min_weight);
  std::vector<GaussianComponent> previous;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const double ll = expect(pixels, comps, resp);
    if (!std::isfinite(ll)) {
      throw NumericalError("EM produced a non-finite log-likelihood");
    }
    if (!result.loglik_trace.empty()) {
      const double prev = result.loglik_trace.back();
      // The circular mean is not the exact maximiser on wrapped hues, and
      // pruning a component can also lower the likelihood; stop at the last
      // improving iterate so the trace stays monotone.
      if (ll < prev - 1e-9) {
        comps = std::move(previous);
        break;
      }
      result.loglik_trace.push_back(ll);
      result.iterations = it + 1;
      if (ll - prev <= cfg.rel_tolerance * std::abs(prev)) break;
    } else {
      result.loglik_trace.push_back(ll);
      result.iterations = it + 1;
    }
    if (it + 1 == cfg.max_iters) break;
    previous = comps;
    comps = maximize(pixels, resp, cfg.min_weight);
  }
  result.components = std::move(comps);
  result.loglik = result.loglik_trace.back();
  return result;
}

}  // namespace

SampleRegion filter_outliers(const SampleRegion& region, const FilterConfig& cfg) {
  if (region.pixels.empty()) {
    throw DomainError("filter_outliers: empty region " + region.image_id);
  }
  if (!(cfg.tau > 0.0)) {
    throw std::invalid_argument("filter_outliers: tau must be positive");
  }
  if (std::isinf(cfg.tau)) {
    return region;
  }
  const auto moments = circular_moments(region.pixels);
  const Mahalanobis metric(moments.cov);
  SampleRegion out{region.image_id, region.garment, {}};
  for (const auto& p : region.pixels) {
    if (metric(p, moments.mean) < cfg.tau) out.pixels.push_back(p);
  }
  if (out.pixels.empty()) {
    throw DomainError("sample degenerate under tau: " + region.image_id);
  }
  return out;
}

EmResult fit_mixture(std::span<const HsvPixel> pixels, const EmConfig& cfg) {
  if (cfg.components < 1) {
    throw std::invalid_argument("EM needs at least one component");
  }
  if (pixels.size() < static_cast<std::size_t>(cfg.components)) {
    throw DomainError("insufficient pixels for " + std::to_string(cfg.components) +
                      " mixture components");
  }
  std::vector<HueEmbedding> emb;
  emb.reserve(pixels.size());
  for (const auto& p : pixels) emb.push_back(embed(p));

  std::mt19937_64 rng(cfg.seed);
  EmResult best;
  for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
    auto res = run_em(pixels, emb, cfg, rng);
    if (res.loglik > best.loglik) best = std::move(res);
  }
  return best;
}

ColorModel train_color_model(std::span<const SampleRegion> regions, std::string label,
                             Garment garment, const FilterConfig& filter_cfg,
                             const EmConfig& em_cfg) {
  std::vector<HsvPixel> pooled;
  ColorModel model;
  for (const auto& region : regions) {
    if (region.pixels.empty()) continue;
    try {
      auto kept = filter_outliers(region, filter_cfg);
      pooled.insert(pooled.end(), kept.pixels.begin(), kept.pixels.end());
      model.sample_ids.push_back(region.image_id);
    } catch (const DomainError&) {
      // A sample fully rejected under tau contributes nothing.
    }
  }
  if (model.sample_ids.empty()) {
    throw DomainError("no training region survives outlier filtering");
  }
  auto em = fit_mixture(pooled, em_cfg);
  model.label = std::move(label);
  model.garment = garment;
  model.components = std::move(em.components);
  model.filter = filter_cfg;
  model.em = em_cfg;
  model.training_loglik_trace = std::move(em.loglik_trace);
  return model;
}

GmmScorer::GmmScorer(const ColorModel& model) : form_(model.loglik_form) {
  if (model.components.empty()) {
    throw std::invalid_argument("colour model has no components");
  }
  for (const auto& c : model.components) {
    Density d(c);
    parts_.push_back({c.weight, std::log(c.weight), c.mean, d.inverse, d.log_norm});
  }
}

double GmmScorer::pixel_loglik(const HsvPixel& p) const {
  if (form_ == LoglikForm::weighted_log_densities) {
    double acc = 0.0;
    for (const auto& c : parts_) {
      const Vec3 d = hsv_distance(p, c.mean).vec();
      acc += c.weight * (c.log_norm - 0.5 * d.dot(c.inverse * d));
    }
    return acc;
  }
  double terms[16];
  std::vector<double> spill;
  double* t = terms;
  if (parts_.size() > 16) {
    spill.resize(parts_.size());
    t = spill.data();
  }
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    const Vec3 d = hsv_distance(p, parts_[i].mean).vec();
    t[i] = parts_[i].log_weight + parts_[i].log_norm - 0.5 * d.dot(parts_[i].inverse * d);
  }
  return log_sum_exp(std::span<const double>(t, parts_.size()));
}

double GmmScorer::region_log_score(std::span<const HsvPixel> pixels) const {
  if (pixels.empty()) {
    throw DomainError("region_score: empty region");
  }
  std::vector<double> ll;
  ll.reserve(pixels.size());
  for (const auto& p : pixels) ll.push_back(pixel_loglik(p));
  return log_sum_exp(ll) - std::log(static_cast<double>(pixels.size()));
}

double GmmScorer::region_score(std::span<const HsvPixel> pixels) const {
  return std::exp(region_log_score(pixels));
}

double pixel_loglik(const HsvPixel& p, const ColorModel& model) {
  return GmmScorer(model).pixel_loglik(p);
}

double region_score(const SampleRegion& region, const ColorModel& model) {
  return GmmScorer(model).region_score(region.pixels);
}

double region_log_score(const SampleRegion& region, const ColorModel& model) {
  return GmmScorer(model).region_log_score(region.pixels);
}

double combine_log(const QueryAst& query, const LeafScores& log_scores) {
  switch (query.kind) {
    case QueryAst::Kind::leaf: {
      auto it = log_scores.find({query.garment, query.color_label});
      if (it == log_scores.end()) {
        throw std::out_of_range("no score for leaf " + to_debug_string(query));
      }
      return it->second;
    }
    case QueryAst::Kind::all_of: {
      double acc = 0.0;
      for (const auto& c : query.children) acc += combine_log(c, log_scores);
      return acc;
    }
    case QueryAst::Kind::any_of: {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& c : query.children) best = std::max(best, combine_log(c, log_scores));
      return best;
    }
  }
  return 0.0;
}

double combine(const QueryAst& query, const LeafScores& scores) {
  LeafScores logs;
  for (const auto& [key, s] : scores) logs.emplace(key, std::log(s));
  return combine_log(query, logs);
}

namespace {

nlohmann::json tau_json(double tau) {
  return std::isinf(tau) ? nlohmann::json("inf") : nlohmann::json(tau);
}

double tau_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bad tau value");
  }
  return j.get<double>();
}

const char* form_name(LoglikForm f) {
  return f == LoglikForm::weighted_log_densities ? "weighted_log_densities" : "standard_mixture";
}

LoglikForm form_from_name(const std::string& s) {
  if (s == "weighted_log_densities") return LoglikForm::weighted_log_densities;
  if (s == "standard_mixture") return LoglikForm::standard_mixture;
  throw std::invalid_argument("unknown loglik form '" + s + "'");
}

}  // namespace

std::string config_hash(const FilterConfig& f, const EmConfig& em, LoglikForm form) {
  const nlohmann::json j = {{"tau", tau_json(f.tau)},
                            {"components", em.components},
                            {"max_iters", em.max_iters},
                            {"rel_tolerance", em.rel_tolerance},
                            {"restarts", em.restarts},
                            {"seed", em.seed},
                            {"min_weight", em.min_weight},
                            {"loglik_form", form_name(form)}};
  return hex64(fnv1a(j.dump()));
}

void to_json(nlohmann::json& j, const ColorModel& m) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : m.components) {
    nlohmann::json cov = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) cov.push_back(c.cov(r, k));
    }
    comps.push_back({{"weight", c.weight}, {"mean", {c.mean.h, c.mean.s, c.mean.v}}, {"cov", cov}});
  }
  j = {{"format", "huequery.color_model/1"},
       {"engine", "generative"},
       {"label", m.label},
       {"garment", to_string(m.garment)},
       {"tau", tau_json(m.filter.tau)},
       {"M", m.em.components},
       {"loglik_form", form_name(m.loglik_form)},
       {"components", comps},
       {"provenance",
        {{"sample_ids", m.sample_ids},
         {"em",
          {{"max_iters", m.em.max_iters},
           {"rel_tolerance", m.em.rel_tolerance},
           {"restarts", m.em.restarts},
           {"seed", m.em.seed},
           {"min_weight", m.em.min_weight}}},
         {"training_loglik_trace", m.training_loglik_trace},
         {"config_hash", config_hash(m.filter, m.em, m.loglik_form)}}}};
}

void from_json(const nlohmann::json& j, ColorModel& m) {
  m = ColorModel{};
  m.label = j.at("label").get<std::string>();
  m.garment = parse_garment(j.at("garment").get<std::string>());
  m.filter.tau = tau_from_json(j.at("tau"));
  m.em.components = j.at("M").get<int>();
  m.loglik_form = form_from_name(j.value("loglik_form", "weighted_log_densities"));
  for (const auto& c : j.at("components")) {
    GaussianComponent g;
    g.weight = c.at("weight").get<double>();
    const auto& mean = c.at("mean");
    g.mean = HsvPixel(mean.at(0).get<double>(), mean.at(1).get<double>(), mean.at(2).get<double>());
    const auto& cov = c.at("cov");
    if (cov.size() != 9) throw std::invalid_argument("covariance must have 9 entries");
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) g.cov(r, k) = cov.at(r * 3 + k).get<double>();
    }
    m.components.push_back(g);
  }
  if (m.components.empty()) throw std::invalid_argument("model has no components");
  if (j.contains("provenance")) {
    const auto& p = j.at("provenance");
    m.sample_ids = p.value("sample_ids", std::vector<std::string>{});
    if (p.contains("em")) {
      const auto& e = p.at("em");
      m.em.max_iters = e.value("max_iters", m.em.max_iters);
      m.em.rel_tolerance = e.value("rel_tolerance", m.em.rel_tolerance);
      m.em.restarts = e.value("restarts", m.em.restarts);
      m.em.seed = e.value("seed", m.em.seed);
      m.em.min_weight = e.value("min_weight", m.em.min_weight);
    }
    m.training_loglik_trace = p.value("training_loglik_trace", std::vector<double>{});
  }
}

}  // namespace hq
