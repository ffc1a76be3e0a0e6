#include "huequery/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;

namespace hq {

const std::vector<PaletteColor>& upper_palette() {
  static const std::vector<PaletteColor> p = {
      {"red", 0, 85, 75, {}},          {"blue", 225, 75, 65, {}},
      {"white", 0, 4, 93, {"light"}},  {"black", 0, 10, 12, {"dark"}},
      {"green", 120, 65, 55, {}},      {"yellow", 55, 80, 88, {"light"}},
      {"pink", 330, 40, 88, {"light"}}, {"gray", 0, 5, 52, {}},
      {"brown", 25, 60, 38, {"dark"}},
  };
  return p;
}

const std::vector<PaletteColor>& lower_palette() {
  static const std::vector<PaletteColor> p = {
      {"blue", 220, 60, 45, {}},      {"black", 0, 10, 12, {"dark"}},
      {"gray", 0, 5, 52, {}},         {"white", 0, 4, 93, {"light"}},
      {"brown", 30, 55, 38, {"dark"}},
  };
  return p;
}

namespace {

// Persons per palette entry out of 200; scaled for other sizes.
constexpr int kUpperQuota[] = {28, 28, 24, 24, 22, 22, 16, 20, 16};
constexpr int kLowerQuota[] = {70, 60, 30, 20, 20};

std::vector<int> assign_by_quota(std::span<const int> quota, std::size_t persons,
                                 std::mt19937_64& rng) {
  int total = 0;
  for (int q : quota) total += q;
  std::vector<int> out;
  for (std::size_t c = 0; c < quota.size(); ++c) {
    const auto n = static_cast<std::size_t>(std::llround(
        static_cast<double>(quota[c]) * static_cast<double>(persons) / total));
    out.insert(out.end(), n, static_cast<int>(c));
  }
  while (out.size() < persons) out.push_back(0);
  out.resize(persons);
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng() % i]);
  return out;
}

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double hue_deg, double sat, double val) {
  hue_deg = std::fmod(std::fmod(hue_deg, 360.0) + 360.0, 360.0);
  const double s = std::clamp(sat, 0.0, 100.0) / 100.0;
  const double v = std::clamp(val, 0.0, 100.0) / 100.0 * 255.0;
  const double c = v * s;
  const double hp = hue_deg / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb o{0, 0, 0};
  switch (static_cast<int>(hp) % 6) {
    case 0: o = {c, x, 0}; break;
    case 1: o = {x, c, 0}; break;
    case 2: o = {0, c, x}; break;
    case 3: o = {0, x, c}; break;
    case 4: o = {x, 0, c}; break;
    default: o = {c, 0, x}; break;
  }
  const double m = v - c;
  return {o.r + m, o.g + m, o.b + m};
}

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), rgb_(static_cast<std::size_t>(w) * h), mask_(rgb_.size(), 0) {}

  void fill(int r0, int r1, int c0, int c1, const Rgb& color, bool figure) {
    for (int r = std::max(0, r0); r < std::min(h_, r1); ++r) {
      for (int c = std::max(0, c0); c < std::min(w_, c1); ++c) set(r, c, color, figure);
    }
  }

  void set(int r, int c, const Rgb& color, bool figure) {
    if (r < 0 || r >= h_ || c < 0 || c >= w_) return;
    const auto i = static_cast<std::size_t>(r) * w_ + c;
    rgb_[i] = color;
    mask_[i] = figure ? 255 : 0;
  }

  const Rgb& at(int r, int c) const { return rgb_[static_cast<std::size_t>(r) * w_ + c]; }
  std::vector<std::uint8_t> mask() const { return mask_; }

  std::vector<std::uint8_t> quantize(double noise, std::mt19937_64& rng) const {
    std::normal_distribution<double> n(0.0, noise);
    std::vector<std::uint8_t> out;
    out.reserve(rgb_.size() * 3);
    for (const auto& p : rgb_) {
      for (double ch : {p.r, p.g, p.b}) {
        out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(ch + n(rng)), 0L, 255L)));
      }
    }
    return out;
  }

 private:
  int w_, h_;
  std::vector<Rgb> rgb_;
  std::vector<std::uint8_t> mask_;
};

struct GarmentTone {
  double hue, sat, val;
};

GarmentTone jitter(const PaletteColor& c, double brightness, double cast, std::mt19937_64& rng) {
  std::normal_distribution<double> dh(0.0, 4.0), dsv(0.0, 4.0);
  std::uniform_real_distribution<double> any_hue(0.0, 360.0);
  // Achromatic colours carry no meaningful hue.
  const double hue = c.sat < 15.0 ? any_hue(rng) : c.hue_deg + dh(rng);
  return {hue + cast, c.sat + dsv(rng), (c.val + dsv(rng)) * brightness};
}

void paint_garment(Canvas& cv, int r0, int r1, int c0, int c1, const GarmentTone& tone) {
  const double mid = 0.5 * (c0 + c1 - 1);
  const double half = std::max(1.0, 0.5 * (c1 - c0));
  for (int c = c0; c < c1; ++c) {
    const double x = (c - mid) / half;
    const auto color = hsv_to_rgb(tone.hue, tone.sat, tone.val * (1.0 - 0.15 * x * x));
    cv.fill(r0, r1, c, c + 1, color, true);
  }
}

SyntheticImage render_one(const std::string& id, const PaletteColor& upper,
                          const PaletteColor& lower, const CameraConditions& cam,
                          std::mt19937_64& rng) {
  const int w = kCanonicalWidth, h = kCanonicalHeight;
  Canvas cv(w, h);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-3, 3);
  const double cast = cam.color_cast_deg;

  // Background with a few clutter blocks.
  auto background = [&] {
    return hsv_to_rgb(360.0 * u01(rng) + cast, 25.0 * u01(rng), 25.0 + 60.0 * u01(rng));
  };
  cv.fill(0, h, 0, w, background(), false);
  for (int k = 0; k < 3; ++k) {
    const int r0 = static_cast<int>(u01(rng) * h), c0 = static_cast<int>(u01(rng) * w);
    cv.fill(r0, r0 + 10 + static_cast<int>(u01(rng) * 30), c0, c0 + 6 + static_cast<int>(u01(rng) * 12),
            background(), false);
  }

  const double brightness = cam.brightness_low + (cam.brightness_high - cam.brightness_low) * u01(rng);
  const int dx = shift(rng);
  const int center = w / 2 + dx;
  const int boundary = 60 + static_cast<int>(u01(rng) * 9);
  const int torso_top = 19 + shift(rng) / 2;
  const GarmentTone top = jitter(upper, brightness, cast, rng);
  const GarmentTone bottom = jitter(lower, brightness, cast, rng);
  const auto skin = hsv_to_rgb(25.0 + cast, 35.0, 82.0 * brightness);
  const auto hair = hsv_to_rgb(30.0 + cast, 40.0, 15.0 * brightness);
  const auto shoes = hsv_to_rgb(0.0, 5.0, 10.0 * brightness);

  // Head: ellipse with hair on top.
  for (int r = torso_top - 16; r < torso_top; ++r) {
    for (int c = center - 7; c <= center + 7; ++c) {
      const double yr = (r - (torso_top - 8.5)) / 8.0, xr = (c - center) / 6.0;
      if (yr * yr + xr * xr <= 1.0) cv.set(r, c, r < torso_top - 11 ? hair : skin, true);
    }
  }
  // Torso and arms.
  paint_garment(cv, torso_top, boundary, center - 11, center + 11, top);
  paint_garment(cv, torso_top + 3, boundary - 8, center - 15, center - 11, top);
  paint_garment(cv, torso_top + 3, boundary - 8, center + 11, center + 15, top);
  cv.fill(boundary - 8, boundary - 4, center - 15, center - 11, skin, true);
  cv.fill(boundary - 8, boundary - 4, center + 11, center + 15, skin, true);
  // Legs and shoes.
  paint_garment(cv, boundary, h - 7, center - 10, center - 1, bottom);
  paint_garment(cv, boundary, h - 7, center + 1, center + 10, bottom);
  cv.fill(h - 7, h - 2, center - 11, center - 1, shoes, true);
  cv.fill(h - 7, h - 2, center + 1, center + 11, shoes, true);

  if (u01(rng) < cam.logo_probability) {
    const auto logo = hsv_to_rgb(360.0 * u01(rng), 80.0, 80.0 * brightness);
    const int r0 = torso_top + 8 + static_cast<int>(u01(rng) * 10);
    cv.fill(r0, r0 + 7, center - 4, center + 3, logo, true);
  }
  if (u01(rng) < cam.bag_probability) {
    const auto bag = hsv_to_rgb(360.0 * u01(rng), 50.0 * u01(rng), 20.0 + 50.0 * u01(rng));
    cv.fill(boundary - 12, boundary + 8, center + 9, center + 17, bag, true);
  }

  SyntheticImage img;
  img.truth.id = id;
  img.truth.upper = upper.name;
  img.truth.lower = lower.name;
  img.truth.upper_labels = upper.extra_labels;
  img.truth.lower_labels = lower.extra_labels;
  img.rgb = cv.quantize(cam.pixel_noise, rng);
  img.figure_mask = cv.mask();
  img.garment_boundary_row = boundary;
  return img;
}

}  // namespace

std::vector<SyntheticImage> render_synthetic(const SyntheticConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const auto uppers = assign_by_quota(kUpperQuota, cfg.persons, rng);
  const auto lowers = assign_by_quota(kLowerQuota, cfg.persons, rng);
  std::vector<SyntheticImage> out;
  out.reserve(cfg.persons * static_cast<std::size_t>(cfg.views_per_person));
  for (std::size_t p = 0; p < cfg.persons; ++p) {
    for (int v = 0; v < cfg.views_per_person; ++v) {
      char id[64];
      std::snprintf(id, sizeof id, "%s%04zu_%c", cfg.id_prefix.c_str(), p, static_cast<char>('a' + v));
      std::mt19937_64 view_rng(cfg.seed * 1000003ULL + p * 31ULL + static_cast<unsigned>(v));
      out.push_back(render_one(id, upper_palette()[uppers[p]], lower_palette()[lowers[p]],
                               cfg.camera, view_rng));
    }
  }
  return out;
}

std::vector<SyntheticTruth> write_synthetic_dataset(const fs::path& root, const SyntheticConfig& cfg,
                                                    const SyntheticWriteOptions& opts) {
  const auto images = render_synthetic(cfg);
  fs::create_directories(root / "images");
  std::ofstream ann(root / "annotations.tsv", std::ios::trunc);
  std::vector<SyntheticTruth> truth;
  for (const auto& img : images) {
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        const auto i = 3 * (static_cast<std::size_t>(r) * img.width + c);
        bgr.at<cv::Vec3b>(r, c) = {img.rgb[i + 2], img.rgb[i + 1], img.rgb[i]};
      }
    }
    const auto path = root / "images" / (img.truth.id + ".png");
    if (!cv::imwrite(path.string(), bgr)) {
      throw std::runtime_error("cannot write " + path.string());
    }
    if (opts.write_masks) {
      cv::Mat mask(img.height, img.width, CV_8UC1, const_cast<std::uint8_t*>(img.figure_mask.data()));
      cv::imwrite((root / "images" / (img.truth.id + ".mask.png")).string(), mask);
    }
    ann << img.truth.id << "\tupper\t" << img.truth.upper << '\n';
    ann << img.truth.id << "\tlower\t" << img.truth.lower << '\n';
    if (opts.annotate_extra_labels) {
      for (const auto& l : img.truth.upper_labels) ann << img.truth.id << "\tupper\t" << l << '\n';
      for (const auto& l : img.truth.lower_labels) ann << img.truth.id << "\tlower\t" << l << '\n';
    }
    truth.push_back(img.truth);
  }
  return truth;
}

}  // namespace hq
