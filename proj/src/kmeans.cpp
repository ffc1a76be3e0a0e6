#include "huequery/kmeans.hpp"

#include <cmath>
#include <limits>

namespace hq {

HueEmbedding embed(const HsvPixel& p) {
  return {std::cos(p.h), std::sin(p.h), p.s / 100.0, p.v / 100.0};
}

double squared_distance(const HueEmbedding& a, const HueEmbedding& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return d;
}

std::vector<std::size_t> kmeans_pp_seed(std::span<const HueEmbedding> points, int k,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> chosen;
  if (points.empty() || k <= 0) {
    return chosen;
  }
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  chosen.push_back(first(rng));
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < static_cast<std::size_t>(k) && chosen.size() < points.size()) {
    const auto& last = points[chosen.back()];
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points[i], last));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      // Every point coincides with a chosen centre; pick uniformly.
      pick = first(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick + 1 < points.size(); ++pick) {
        target -= nearest[pick];
        if (target < 0.0) break;
      }
    }
    chosen.push_back(pick);
  }
  return chosen;
}

namespace {

KMeansResult lloyd(std::span<const HueEmbedding> points, std::vector<HueEmbedding> centers,
                   int max_iters) {
  KMeansResult r;
  r.assignment.assign(points.size(), -1);
  const std::size_t k = centers.size();
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (r.assignment[i] != best) {
        r.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<HueEmbedding> sums(k, HueEmbedding{});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[r.assignment[i]];
      for (std::size_t d = 0; d < s.size(); ++d) s[d] += points[i][d];
      ++counts[r.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centre
      for (std::size_t d = 0; d < sums[c].size(); ++d) centers[c][d] = sums[c][d] / counts[c];
    }
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    r.inertia += squared_distance(points[i], centers[r.assignment[i]]);
  }
  r.centers = std::move(centers);
  return r;
}

}  // namespace

KMeansResult kmeans(std::span<const HueEmbedding> points, int k, int restarts, int max_iters,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::vector<HueEmbedding> centers;
    for (auto idx : kmeans_pp_seed(points, k, rng)) centers.push_back(points[idx]);
    auto result = lloyd(points, std::move(centers), max_iters);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

}  // namespace hq
