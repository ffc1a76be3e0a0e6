#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "huequery/colorstats.hpp"
#include "huequery/metrics.hpp"
#include "metric_oracle.hpp"

using namespace hq;

namespace {

RankedList from_flags(const std::vector<int>& flags) {
  std::vector<RankedItem> items;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    items.push_back({"s" + std::to_string(100 + i), static_cast<double>(flags.size() - i), flags[i] != 0});
  }
  return RankedList(items);
}

}  // namespace

TEST_CASE("ranking order") {
  RankedList l({{"b", 1.0, false}, {"a", 1.0, true}, {"c", 2.0, false}, {"d", std::nan(""), true}});
  REQUIRE(l.size() == 4);
  CHECK(l.items()[0].id == "c");
  CHECK(l.items()[1].id == "a");
  CHECK(l.items()[2].id == "b");
  CHECK(l.items()[3].id == "d");
  CHECK(l.relevant_count() == 2);
}

TEST_CASE("pr_curve") {
  SUBCASE("all relevant") {
    const auto c = pr_curve(from_flags({1, 1, 1, 1}));
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(c[i].precision == 1.0);
      CHECK(c[i].recall == doctest::Approx((i + 1) / 4.0));
    }
  }
  SUBCASE("alternating") {
    const auto c = pr_curve(from_flags({1, 0, 1, 0}));
    REQUIRE(c.size() == 4);
    CHECK(c[0].precision == 1.0);
    CHECK(c[0].recall == 0.5);
    CHECK(c[1].precision == 0.5);
    CHECK(c[1].recall == 0.5);
    CHECK(c[2].precision == doctest::Approx(2.0 / 3));
    CHECK(c[2].recall == 1.0);
    CHECK(c[3].precision == 0.5);
    CHECK(c[3].recall == 1.0);
  }
  SUBCASE("single relevant first") {
    const auto c = pr_curve(from_flags({1, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
    CHECK(c[0].precision == 1.0);
    CHECK(c[0].recall == 1.0);
  }
  SUBCASE("no relevant items") {
    CHECK_THROWS_AS(pr_curve(from_flags({0, 0})), DomainError);
    CHECK_THROWS_AS(bep(from_flags({0, 0})), DomainError);
  }
}

TEST_CASE("bep examples") {
  CHECK(bep(from_flags({1, 1, 1, 0, 0})) == 100.0);
  CHECK(bep(from_flags({1, 0, 1, 0, 1, 1, 0})) == 50.0);
  CHECK(bep(from_flags({0, 0, 0, 1, 1})) == 0.0);
  CHECK(bep(from_flags({0, 0, 1, 1, 1})) == doctest::Approx(100.0 / 3));
}

TEST_CASE("p_at_n examples") {
  CHECK(p_at_n(from_flags({1, 1, 1, 1, 1, 0}), 5).percent == 100.0);
  CHECK(p_at_n(from_flags({1, 1, 0, 1, 0}), 5).percent == 60.0);
  const auto t = p_at_n(from_flags({1, 0, 1}), 10);
  CHECK(t.truncated);
  CHECK(t.percent == doctest::Approx(200.0 / 3));
  CHECK_FALSE(p_at_n(from_flags({1, 0, 1}), 3).truncated);
}

TEST_CASE("brute-force oracle agreement") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 1000; ++t) {
    const auto items = oracle::random_list(rng, 50);
    const auto flags = oracle::ranked_flags(items);
    const RankedList l(items);
    CHECK(bep(l) == oracle::bep(flags));
    for (std::size_t n : {1, 5, 10, 20, 60}) CHECK(p_at_n(l, n).percent == oracle::p_at_n(flags, n));
  }
}

TEST_CASE("monotone score transforms preserve the metrics") {
  std::mt19937_64 rng(18);
  for (int t = 0; t < 200; ++t) {
    auto items = oracle::random_list(rng, 40);
    const RankedList a(items);
    for (auto& it : items) it.score = std::exp(3.0 * it.score) - 7.0;
    const RankedList b(items);
    CHECK(bep(a) == bep(b));
    CHECK(p_at_n(a, 10).percent == p_at_n(b, 10).percent);
  }
}
