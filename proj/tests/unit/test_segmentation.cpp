#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "huequery/segmentation.hpp"
#include "huequery/synthetic.hpp"

using namespace hq;
namespace fs = std::filesystem;

namespace {

const HsvPixel kRed(0.0, 85, 75);
const HsvPixel kBlue(4.0, 70, 60);
const HsvPixel kBlack(0.0, 8, 10);
const HsvPixel kGreen(2.1, 60, 50);

PedestrianImage blank(int w, int h, HsvPixel fill) {
  PedestrianImage img;
  img.id = "t";
  img.width = img.source_width = w;
  img.height = img.source_height = h;
  img.pixels.assign(static_cast<std::size_t>(w) * h, fill);
  return img;
}

void paint(PedestrianImage& img, int r0, int r1, int c0, int c1, HsvPixel p) {
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) img.pixels[static_cast<std::size_t>(r) * img.width + c] = p;
  }
}

// Independent J(y): circular means of the rows above and below y.
double oracle_objective(const PedestrianImage& img, const ForegroundMask& m, int y, double lambda) {
  std::vector<HsvPixel> above, below;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (m.at(r, c) == PixelLabel::background) continue;
      (r < y ? above : below).push_back(img.at(r, c));
    }
  }
  if (above.empty() || below.empty()) return std::nan("");
  const double total = static_cast<double>(above.size() + below.size());
  const auto a = circular_moments(above).mean;
  const auto b = circular_moments(below).mean;
  return hsv_distance(a, b).norm() -
         lambda * std::abs(static_cast<double>(above.size()) - static_cast<double>(below.size())) / total;
}

int oracle_split(const PedestrianImage& img, const ForegroundMask& m, const SplitConfig& cfg) {
  const int lo = static_cast<int>(std::ceil(cfg.band_low * img.height));
  const int hi = static_cast<int>(std::floor(cfg.band_high * img.height));
  int best = -1;
  double best_j = -1e300;
  for (int y = lo; y <= hi; ++y) {
    const double j = oracle_objective(img, m, y, cfg.area_weight);
    if (!std::isnan(j) && j > best_j) {
      best_j = j;
      best = y;
    }
  }
  return best;
}

void write_pgm(const fs::path& p, int w, int h, const std::vector<std::uint8_t>& data) {
  std::ofstream out(p, std::ios::binary);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("garment names round-trip") {
  CHECK(parse_garment("upper") == Garment::upper);
  CHECK(parse_garment(to_string(Garment::lower)) == Garment::lower);
  CHECK_THROWS_AS(parse_garment("hat"), std::invalid_argument);
}

TEST_CASE("dominant_color_seeds") {
  SUBCASE("uniform rectangle returns every pixel") {
    auto img = blank(10, 20, kRed);
    const auto seeds = dominant_color_seeds(img, {0.0, 0.5, 0.0, 1.0});
    CHECK(seeds.size() == 100);
  }
  SUBCASE("70/30 mix returns the majority colour") {
    auto img = blank(10, 10, kBlue);
    paint(img, 0, 7, 0, 10, kRed);
    const auto seeds = dominant_color_seeds(img, {0.0, 1.0, 0.0, 1.0});
    REQUIRE(seeds.size() == 70);
    for (const auto& c : seeds) CHECK(img.at(c.row, c.col) == kRed);
  }
  SUBCASE("one-pixel rectangle") {
    auto img = blank(10, 10, kBlue);
    const auto seeds = dominant_color_seeds(img, {0.5, 0.6, 0.3, 0.4});
    REQUIRE(seeds.size() == 1);
    CHECK(seeds[0] == Coord{5, 3});
  }
  SUBCASE("degenerate rectangle") {
    auto img = blank(10, 10, kBlue);
    CHECK_THROWS_AS(dominant_color_seeds(img, {0.5, 0.5, 0.0, 1.0}), DomainError);
    CHECK_THROWS_AS(dominant_color_seeds(img, {0.2, 0.4, 0.6, 0.3}), DomainError);
    CHECK_THROWS_AS(dominant_color_seeds(img, {-0.1, 0.4, 0.0, 1.0}), DomainError);
  }
}

TEST_CASE("grow_cuts on synthetic rasters") {
  SUBCASE("uniform interior with one seed") {
    auto img = blank(12, 12, kGreen);
    paint(img, 1, 11, 1, 11, kRed);
    const auto border = border_coords(12, 12);
    auto res = grow_cuts(img, std::vector<Coord>{{6, 6}}, std::vector<Coord>{{1, 1}}, border);
    CHECK(res.converged);
    for (int r = 1; r < 11; ++r) {
      for (int c = 1; c < 11; ++c) CHECK(res.mask.at(r, c) != PixelLabel::background);
    }
    for (const auto& b : border) CHECK(res.mask.at(b.row, b.col) == PixelLabel::background);
  }
  SUBCASE("all pixels seeded is a fixed point") {
    auto img = blank(6, 6, kRed);
    paint(img, 3, 6, 0, 6, kBlack);
    std::vector<Coord> upper, lower, bg;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        if (c == 0) bg.push_back({r, c});
        else (r < 3 ? upper : lower).push_back({r, c});
      }
    }
    auto res = grow_cuts(img, upper, lower, bg);
    CHECK(res.iterations == 0);
    CHECK(res.converged);
    for (const auto& c : upper) CHECK(res.mask.at(c.row, c.col) == PixelLabel::upper);
    for (const auto& c : lower) CHECK(res.mask.at(c.row, c.col) == PixelLabel::lower);
    for (const auto& c : bg) CHECK(res.mask.at(c.row, c.col) == PixelLabel::background);
  }
  SUBCASE("two-tone split follows the colour edge") {
    auto img = blank(16, 20, kGreen);
    paint(img, 1, 10, 1, 15, kRed);
    paint(img, 10, 19, 1, 15, kBlack);
    auto res = grow_cuts(img, std::vector<Coord>{{3, 7}}, std::vector<Coord>{{15, 7}},
                         border_coords(16, 20));
    CHECK(res.converged);
    for (int r = 1; r < 19; ++r) {
      for (int c = 1; c < 15; ++c) {
        CHECK(res.mask.at(r, c) == (r < 10 ? PixelLabel::upper : PixelLabel::lower));
      }
    }
  }
  SUBCASE("seed sets must be non-empty and disjoint") {
    auto img = blank(6, 6, kRed);
    const std::vector<Coord> a{{2, 2}}, b{{3, 3}}, none;
    CHECK_THROWS_AS(grow_cuts(img, a, a, border_coords(6, 6)), std::invalid_argument);
    CHECK_THROWS_AS(grow_cuts(img, none, b, border_coords(6, 6)), std::invalid_argument);
  }
  SUBCASE("iteration cap reports non-convergence") {
    auto img = blank(40, 40, kRed);
    auto res = grow_cuts(img, std::vector<Coord>{{20, 20}}, std::vector<Coord>{{21, 21}},
                         std::vector<Coord>{{0, 0}}, GrowCutConfig{2});
    CHECK_FALSE(res.converged);
  }
}

TEST_CASE("split_parts agrees with an exhaustive scan") {
  SplitConfig cfg;
  SUBCASE("two-tone boundary at half height") {
    auto img = blank(48, 128, kGreen);
    paint(img, 0, 64, 0, 48, kRed);
    paint(img, 64, 128, 0, 48, kBlack);
    ForegroundMask m(48, 128, PixelLabel::foreground);
    const auto s = split_parts(img, m, cfg);
    CHECK(std::abs(s.split_row - 64) <= 1);
    CHECK(s.split_row == oracle_split(img, m, cfg));
  }
  SUBCASE("lambda zero lands exactly on the edge") {
    cfg.area_weight = 0.0;
    auto img = blank(48, 128, kGreen);
    paint(img, 0, 71, 0, 48, kRed);
    paint(img, 71, 128, 0, 48, kBlue);
    ForegroundMask m(48, 128, PixelLabel::foreground);
    CHECK(split_parts(img, m, cfg).split_row == 71);
  }
  SUBCASE("uniform foreground picks the area-balancing row") {
    auto img = blank(48, 128, kRed);
    ForegroundMask m(48, 128, PixelLabel::foreground);
    CHECK(split_parts(img, m, cfg).split_row == 64);
  }
  SUBCASE("random figures") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> row(20, 110), col(4, 20);
    std::uniform_real_distribution<double> hue(0, kTwoPi), sv(5, 95);
    for (int t = 0; t < 20; ++t) {
      auto img = blank(48, 128, HsvPixel(hue(rng), sv(rng), sv(rng)));
      const int edge = row(rng);
      const int c0 = col(rng);
      paint(img, 0, edge, 0, 48, HsvPixel(hue(rng), sv(rng), sv(rng)));
      ForegroundMask m(48, 128);
      for (int r = 5; r < 125; ++r) {
        for (int c = c0; c < 48 - c0 / 2; ++c) m.at(r, c) = PixelLabel::foreground;
      }
      const auto s = split_parts(img, m, cfg);
      CHECK(s.split_row == oracle_split(img, m, cfg));
      CHECK(split_objective(img, m, s.split_row, cfg.area_weight) ==
            doctest::Approx(oracle_objective(img, m, s.split_row, cfg.area_weight)).epsilon(1e-9));
    }
  }
  SUBCASE("head rows are excluded from the upper region") {
    auto img = blank(48, 128, kRed);
    ForegroundMask m(48, 128);
    for (int r = 8; r < 120; ++r) {
      for (int c = 10; c < 38; ++c) m.at(r, c) = PixelLabel::foreground;
    }
    const auto s = split_parts(img, m, cfg);
    CHECK(s.head_rows == static_cast<int>(std::floor(0.15 * 112)));
    for (int r = 8; r < 8 + s.head_rows; ++r) CHECK(s.labels.at(r, 20) == PixelLabel::head);
    CHECK(s.labels.at(8 + s.head_rows, 20) == PixelLabel::upper);
    CHECK(s.upper.size() + s.lower.size() + static_cast<std::size_t>(s.head_rows) * 28 == m.foreground_count());
  }
  SUBCASE("too few foreground rows") {
    auto img = blank(10, 10, kRed);
    ForegroundMask m(10, 10);
    m.at(4, 4) = PixelLabel::foreground;
    CHECK_THROWS_AS(split_parts(img, m, cfg), DomainError);
  }
}

TEST_CASE("external masks") {
  const auto dir = fs::temp_directory_path() / "hq_seg_mask";
  fs::create_directories(dir);
  std::vector<std::uint8_t> data(24 * 64, 0);
  for (int r = 10; r < 60; ++r) {
    for (int c = 6; c < 18; ++c) data[static_cast<std::size_t>(r) * 24 + c] = 255;
  }
  write_pgm(dir / "m.pgm", 24, 64, data);
  const auto m = load_external_mask(dir / "m.pgm", 24, 64);
  CHECK(m.width == kCanonicalWidth);
  CHECK(m.height == kCanonicalHeight);
  CHECK(m.at(64, 24) == PixelLabel::foreground);
  CHECK(m.at(2, 2) == PixelLabel::background);
  CHECK(m.foreground_count() == 50u * 2 * 12 * 2);
  CHECK_THROWS_AS(load_external_mask(dir / "m.pgm", 48, 128), std::invalid_argument);
  CHECK_THROWS(load_external_mask(dir / "missing.pgm", 24, 64));
  fs::remove_all(dir);
}

TEST_CASE("full pipeline on a rendered crop") {
  SyntheticConfig cfg;
  cfg.persons = 4;
  cfg.views_per_person = 1;
  for (const auto& s : render_synthetic(cfg)) {
    const auto img = image_from_rgb(s.truth.id, s.width, s.height, s.rgb);
    const auto seg = segment_pedestrian(img);
    CHECK(seg.provenance == "growcut");
    CHECK(seg.parts.upper.size() > 200);
    CHECK(seg.parts.lower.size() > 200);
    CHECK(std::abs(seg.parts.split_row - s.garment_boundary_row) <= 4);

    ForegroundMask truth(s.width, s.height);
    for (std::size_t i = 0; i < s.figure_mask.size(); ++i) {
      if (s.figure_mask[i]) truth.labels[i] = PixelLabel::foreground;
    }
    const auto ext = segment_with_mask(img, truth);
    CHECK(ext.provenance == "external");
    CHECK(std::abs(ext.parts.split_row - s.garment_boundary_row) <= 4);
  }
}
