#include "huequery/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <numeric>
#include <random>

#include "huequery/hash.hpp"

namespace hq {

namespace {

constexpr double kTau = 1e-12;

/// LRU cache of kernel rows Q_ij = y_i y_j k(x_i, x_j).
class QMatrix {
 public:
  QMatrix(std::span<const HsvPixel> x, std::span<const int> y, double gamma, std::size_t cache_mb)
      : x_(x), y_(y), gamma_(gamma), slots_(x.size(), lru_.end()) {
    const std::size_t row_bytes = std::max<std::size_t>(1, x.size() * sizeof(double));
    capacity_ = std::max<std::size_t>(2, (cache_mb << 20) / row_bytes);
  }

  const std::vector<double>& row(std::size_t i) {
    auto& slot = slots_[i];
    if (slot != lru_.end()) {
      lru_.splice(lru_.begin(), lru_, slot);
      return slot->second;
    }
    std::vector<double> data;
    if (lru_.size() >= capacity_) {
      auto& victim = lru_.back();
      slots_[victim.first] = lru_.end();
      data = std::move(victim.second);
      lru_.pop_back();
    }
    data.resize(x_.size());
    const auto& xi = x_[i];
    const int yi = y_[i];
    for (std::size_t j = 0; j < x_.size(); ++j) {
      data[j] = yi * y_[j] * rbf_kernel(xi, x_[j], gamma_);
    }
    lru_.emplace_front(i, std::move(data));
    slot = lru_.begin();
    return slot->second;
  }

 private:
  std::span<const HsvPixel> x_;
  std::span<const int> y_;
  double gamma_;
  std::size_t capacity_ = 2;
  std::list<std::pair<std::size_t, std::vector<double>>> lru_;
  std::vector<std::list<std::pair<std::size_t, std::vector<double>>>::iterator> slots_;
};

}  // namespace

SmoSolution solve_smo(std::span<const HsvPixel> x, std::span<const int> y, const SvmConfig& cfg) {
  const std::size_t n = x.size();
  if (n == 0 || y.size() != n) {
    throw std::invalid_argument("solve_smo: empty problem or label count mismatch");
  }
  if (!(cfg.gamma > 0.0) || !(cfg.cost > 0.0)) {
    throw std::invalid_argument("solve_smo: gamma and cost must be positive");
  }
  const double c = cfg.cost;
  SmoSolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  QMatrix q(x, y, cfg.gamma, cfg.cache_mb);
  // k(x, x) = 1 for the RBF kernel.
  const double qd = 1.0;
  auto& alpha = sol.alpha;
  auto upper_bound = [&](std::size_t t) { return alpha[t] >= c; };
  auto lower_bound = [&](std::size_t t) { return alpha[t] <= 0.0; };

  const std::size_t max_iter =
      cfg.max_iterations ? cfg.max_iterations : std::max<std::size_t>(10'000'000, 100 * n);
  while (sol.iterations < max_iter) {
    // Working set selection with second-order information.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i = -1, j = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!upper_bound(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower_bound(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i < 0) {
      sol.converged = true;
      break;
    }
    const auto& qi = q.row(static_cast<std::size_t>(i));
    double obj_min = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (lower_bound(t)) continue;
        const double grad_diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (grad_diff > 0.0) {
          double quad = qd + qd - 2.0 * y[i] * qi[t];
          if (quad <= 0.0) quad = kTau;
          const double obj = -(grad_diff * grad_diff) / quad;
          if (obj <= obj_min) {
            j = static_cast<std::ptrdiff_t>(t);
            obj_min = obj;
          }
        }
      } else {
        if (upper_bound(t)) continue;
        const double grad_diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (grad_diff > 0.0) {
          double quad = qd + qd + 2.0 * y[i] * qi[t];
          if (quad <= 0.0) quad = kTau;
          const double obj = -(grad_diff * grad_diff) / quad;
          if (obj <= obj_min) {
            j = static_cast<std::ptrdiff_t>(t);
            obj_min = obj;
          }
        }
      }
    }
    if (gmax + gmax2 < cfg.tolerance || j < 0) {
      sol.converged = true;
      break;
    }
    ++sol.iterations;

    const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
    const auto& qj = q.row(uj);
    const auto& qi2 = q.row(ui);  // re-fetch: row(uj) may have evicted row i
    const double old_ai = alpha[ui], old_aj = alpha[uj];
    if (y[ui] != y[uj]) {
      double quad = qd + qd + 2.0 * qi2[uj];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[ui] - grad[uj]) / quad;
      const double diff = alpha[ui] - alpha[uj];
      alpha[ui] += delta;
      alpha[uj] += delta;
      if (diff > 0.0) {
        if (alpha[uj] < 0.0) {
          alpha[uj] = 0.0;
          alpha[ui] = diff;
        }
      } else if (alpha[ui] < 0.0) {
        alpha[ui] = 0.0;
        alpha[uj] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[ui] > c) {
          alpha[ui] = c;
          alpha[uj] = c - diff;
        }
      } else if (alpha[uj] > c) {
        alpha[uj] = c;
        alpha[ui] = c + diff;
      }
    } else {
      double quad = qd + qd - 2.0 * qi2[uj];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[ui] - grad[uj]) / quad;
      const double sum = alpha[ui] + alpha[uj];
      alpha[ui] -= delta;
      alpha[uj] += delta;
      if (sum > c) {
        if (alpha[ui] > c) {
          alpha[ui] = c;
          alpha[uj] = sum - c;
        }
      } else if (alpha[uj] < 0.0) {
        alpha[uj] = 0.0;
        alpha[ui] = sum;
      }
      if (sum > c) {
        if (alpha[uj] > c) {
          alpha[uj] = c;
          alpha[ui] = sum - c;
        }
      } else if (alpha[ui] < 0.0) {
        alpha[ui] = 0.0;
        alpha[uj] = sum;
      }
    }
    const double dai = alpha[ui] - old_ai, daj = alpha[uj] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += qi2[t] * dai + qj[t] * daj;
  }

  // Offset from free variables, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t nr_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (upper_bound(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower_bound(t)) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++nr_free;
      sum_free += yg;
    }
  }
  sol.rho = nr_free > 0 ? sum_free / static_cast<double>(nr_free) : (ub + lb) / 2.0;
  return sol;
}

std::pair<double, double> fit_sigmoid(std::span<const double> dec, std::span<const int> labels,
                                      double tolerance) {
  const std::size_t n = dec.size();
  double prior1 = 0.0, prior0 = 0.0;
  for (int l : labels) (l > 0 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] > 0 ? hi : lo;

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fab = dec[i] * a + b;
      f += fab >= 0.0 ? t[i] * fab + std::log1p(std::exp(-fab))
                      : (t[i] - 1.0) * fab + std::log1p(std::exp(fab));
    }
    return f;
  };

  double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(a, b);
  constexpr double sigma = 1e-12;
  for (int iter = 0; iter < 200; ++iter) {
    double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fab = dec[i] * a + b;
      double p, q;
      if (fab >= 0.0) {
        p = std::exp(-fab) / (1.0 + std::exp(-fab));
        q = 1.0 / (1.0 + std::exp(-fab));
      } else {
        p = 1.0 / (1.0 + std::exp(fab));
        q = std::exp(fab) / (1.0 + std::exp(fab));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < tolerance && std::abs(g2) < tolerance) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-12) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
  }
  return {a, b};
}

std::vector<HsvPixel> subsample_pixels(std::span<const HsvPixel> pixels, std::size_t cap,
                                       std::uint64_t seed) {
  if (cap == 0 || pixels.size() <= cap) {
    return {pixels.begin(), pixels.end()};
  }
  std::vector<std::size_t> idx(pixels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; keep the picks in original order.
  for (std::size_t i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, idx.size() - 1);
    std::swap(idx[i], idx[u(rng)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<HsvPixel> out;
  out.reserve(cap);
  for (auto k : idx) out.push_back(pixels[k]);
  return out;
}

double SvmModel::decision(const HsvPixel& p) const {
  double f = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i) {
    f += coefficients[i] * rbf_kernel(support_vectors[i], p, gamma);
  }
  return f;
}

double SvmModel::probability(const HsvPixel& p) const {
  const double fab = sigmoid_a * decision(p) + sigmoid_b;
  return fab >= 0.0 ? std::exp(-fab) / (1.0 + std::exp(-fab)) : 1.0 / (1.0 + std::exp(fab));
}

SvmModel train_svm(std::span<const SampleRegion> positives, std::span<const SampleRegion> negatives,
                   const SvmConfig& cfg) {
  std::vector<HsvPixel> x;
  std::vector<int> y;
  SvmModel model;
  auto add = [&](std::span<const SampleRegion> regions, int label, std::vector<std::string>& ids) {
    for (const auto& r : regions) {
      const auto picked = subsample_pixels(r.pixels, cfg.pixel_cap, fnv1a(r.image_id, cfg.seed));
      if (picked.empty()) continue;
      x.insert(x.end(), picked.begin(), picked.end());
      y.insert(y.end(), picked.size(), label);
      ids.push_back(r.image_id);
    }
  };
  add(positives, 1, model.positive_ids);
  add(negatives, -1, model.negative_ids);
  if (model.positive_ids.empty() || model.negative_ids.empty()) {
    throw DomainError("train_svm: both classes need at least one non-empty region");
  }

  const auto sol = solve_smo(x, y, cfg);
  model.gamma = cfg.gamma;
  model.cost = cfg.cost;
  model.bias = -sol.rho;
  model.iterations = sol.iterations;
  model.converged = sol.converged;
  model.config = cfg;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (sol.alpha[i] > 0.0) {
      model.support_vectors.push_back(x[i]);
      model.coefficients.push_back(sol.alpha[i] * y[i]);
    }
  }
  std::vector<double> dec(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dec[i] = model.decision(x[i]);
  std::tie(model.sigmoid_a, model.sigmoid_b) = fit_sigmoid(dec, y, cfg.calibration_tolerance);
  if (!positives.empty()) model.garment = positives.front().garment;
  return model;
}

double svm_region_score(std::span<const HsvPixel> pixels, const SvmModel& model) {
  if (pixels.empty()) {
    throw DomainError("svm_region_score: empty region");
  }
  double acc = 0.0;
  for (const auto& p : pixels) acc += model.probability(p);
  return acc / static_cast<double>(pixels.size());
}

double svm_region_score(const SampleRegion& region, const SvmModel& model) {
  return svm_region_score(region.pixels, model);
}

std::string config_hash(const SvmConfig& cfg) {
  const nlohmann::json j = {{"gamma", cfg.gamma},         {"cost", cfg.cost},
                            {"tolerance", cfg.tolerance}, {"max_iterations", cfg.max_iterations},
                            {"pixel_cap", cfg.pixel_cap}, {"seed", cfg.seed}};
  return hex64(fnv1a(j.dump()));
}

void to_json(nlohmann::json& j, const SvmModel& m) {
  nlohmann::json sv = nlohmann::json::array();
  for (const auto& p : m.support_vectors) sv.push_back({p.h, p.s, p.v});
  j = {{"format", "huequery.svm_model/1"},
       {"engine", "discriminative"},
       {"label", m.label},
       {"garment", to_string(m.garment)},
       {"gamma", m.gamma},
       {"cost", m.cost},
       {"support_vectors", sv},
       {"coefficients", m.coefficients},
       {"bias", m.bias},
       {"calibration", {{"a", m.sigmoid_a}, {"b", m.sigmoid_b}}},
       {"provenance",
        {{"positive_ids", m.positive_ids},
         {"negative_ids", m.negative_ids},
         {"iterations", m.iterations},
         {"converged", m.converged},
         {"tolerance", m.config.tolerance},
         {"pixel_cap", m.config.pixel_cap},
         {"seed", m.config.seed},
         {"config_hash", config_hash(m.config)}}}};
}

void from_json(const nlohmann::json& j, SvmModel& m) {
  m = SvmModel{};
  m.label = j.at("label").get<std::string>();
  m.garment = parse_garment(j.at("garment").get<std::string>());
  m.gamma = j.at("gamma").get<double>();
  m.cost = j.at("cost").get<double>();
  for (const auto& p : j.at("support_vectors")) {
    m.support_vectors.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                   p.at(2).get<double>());
  }
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  if (m.coefficients.size() != m.support_vectors.size()) {
    throw std::invalid_argument("support vector / coefficient count mismatch");
  }
  m.bias = j.at("bias").get<double>();
  m.sigmoid_a = j.at("calibration").at("a").get<double>();
  m.sigmoid_b = j.at("calibration").at("b").get<double>();
  m.config.gamma = m.gamma;
  m.config.cost = m.cost;
  if (j.contains("provenance")) {
    const auto& p = j.at("provenance");
    m.positive_ids = p.value("positive_ids", std::vector<std::string>{});
    m.negative_ids = p.value("negative_ids", std::vector<std::string>{});
    m.iterations = p.value("iterations", std::size_t{0});
    m.converged = p.value("converged", false);
    m.config.tolerance = p.value("tolerance", m.config.tolerance);
    m.config.pixel_cap = p.value("pixel_cap", m.config.pixel_cap);
    m.config.seed = p.value("seed", m.config.seed);
  }
}

}  // namespace hq
