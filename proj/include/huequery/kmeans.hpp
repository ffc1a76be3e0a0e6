#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "huequery/colorstats.hpp"

namespace hq {

/// Unit-circle embedding (cos h, sin h, s/100, v/100). Euclidean distance in
/// this space respects hue wrap-around; used for clustering only.
using HueEmbedding = std::array<double, 4>;

HueEmbedding embed(const HsvPixel& p);
double squared_distance(const HueEmbedding& a, const HueEmbedding& b);

/// k-means++ seeding: returns indices of `k` chosen points (fewer if the
/// input has fewer points).
std::vector<std::size_t> kmeans_pp_seed(std::span<const HueEmbedding> points, int k,
                                        std::mt19937_64& rng);

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<HueEmbedding> centers;
  double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeds; best of `restarts` by inertia.
KMeansResult kmeans(std::span<const HueEmbedding> points, int k, int restarts, int max_iters,
                    std::uint64_t seed);

}  // namespace hq
