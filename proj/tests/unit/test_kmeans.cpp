#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>
#include <set>

#include "huequery/kmeans.hpp"

using namespace hq;

TEST_CASE("embedding respects the hue seam") {
  const double d = std::numbers::pi / 180.0;
  const auto a = embed(HsvPixel(2 * d, 50, 50));
  const auto b = embed(HsvPixel(358 * d, 50, 50));
  const auto c = embed(HsvPixel(20 * d, 50, 50));
  CHECK(squared_distance(a, b) < squared_distance(a, c));
}

TEST_CASE("kmeans separates three planted clusters") {
  std::vector<HueEmbedding> pts;
  std::vector<int> truth;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.5);
  const double centers[3][3] = {{0.1, 80, 70}, {2.1, 60, 40}, {4.2, 20, 90}};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 50 + 10 * c; ++i) {
      pts.push_back(embed(HsvPixel(centers[c][0] + n(rng) * 0.02, centers[c][1] + n(rng), centers[c][2] + n(rng))));
      truth.push_back(c);
    }
  }
  const auto km = kmeans(pts, 3, 5, 50, 9);
  REQUIRE(km.assignment.size() == pts.size());
  for (int c = 0; c < 3; ++c) {
    std::set<int> labels;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (truth[i] == c) labels.insert(km.assignment[i]);
    }
    CHECK(labels.size() == 1);
  }
  CHECK(kmeans(pts, 3, 5, 50, 9).inertia == km.inertia);
}

TEST_CASE("kmeans++ seeding on identical points returns k indices") {
  std::vector<HueEmbedding> pts(10, embed(HsvPixel(1, 2, 3)));
  std::mt19937_64 rng(1);
  CHECK(kmeans_pp_seed(pts, 3, rng).size() == 3);
  CHECK(kmeans_pp_seed(std::span(pts).first(2), 3, rng).size() == 2);
}
