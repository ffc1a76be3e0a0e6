#include "huequery/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "huequery/kmeans.hpp"

namespace hq {

std::string to_string(Garment g) { return g == Garment::upper ? "upper" : "lower"; }

Garment parse_garment(std::string_view text) {
  if (text == "upper") return Garment::upper;
  if (text == "lower") return Garment::lower;
  throw std::invalid_argument("unknown garment '" + std::string(text) + "'");
}

PedestrianImage image_from_rgb(std::string id, int width, int height,
                               std::span<const std::uint8_t> rgb) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  const auto n = static_cast<std::size_t>(width) * height;
  if (rgb.size() != 3 * n) {
    throw std::invalid_argument("rgb buffer size does not match dimensions");
  }
  PedestrianImage img{std::move(id), width, height, {}, width, height};
  img.pixels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels.push_back(rgb_to_hsv(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]));
  }
  return img;
}

PedestrianImage load_pedestrian_image(const std::filesystem::path& file, std::string id) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw std::runtime_error("cannot decode image " + file.string());
  }
  const int source_w = bgr.cols, source_h = bgr.rows;
  if (bgr.cols != kCanonicalWidth || bgr.rows != kCanonicalHeight) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(kCanonicalWidth, kCanonicalHeight), 0, 0, cv::INTER_AREA);
    bgr = resized;
  }
  std::vector<std::uint8_t> rgb;
  rgb.reserve(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  for (int r = 0; r < bgr.rows; ++r) {
    const auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < bgr.cols; ++c) {
      rgb.push_back(row[c][2]);
      rgb.push_back(row[c][1]);
      rgb.push_back(row[c][0]);
    }
  }
  auto img = image_from_rgb(std::move(id), bgr.cols, bgr.rows, rgb);
  img.source_width = source_w;
  img.source_height = source_h;
  return img;
}

std::size_t ForegroundMask::foreground_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](PixelLabel l) {
    return l != PixelLabel::background;
  }));
}

std::vector<Coord> dominant_color_seeds(const PedestrianImage& image, const FracRect& rect,
                                        const KMeansConfig& cfg) {
  if (!(rect.top >= 0.0 && rect.left >= 0.0 && rect.bottom <= 1.0 && rect.right <= 1.0 &&
        rect.top < rect.bottom && rect.left < rect.right)) {
    throw DomainError("seed rectangle must be a non-empty sub-rectangle of [0,1]^2");
  }
  const int r0 = static_cast<int>(std::floor(rect.top * image.height));
  const int r1 = std::min(image.height, static_cast<int>(std::ceil(rect.bottom * image.height)));
  const int c0 = static_cast<int>(std::floor(rect.left * image.width));
  const int c1 = std::min(image.width, static_cast<int>(std::ceil(rect.right * image.width)));
  if (r1 <= r0 || c1 <= c0) {
    throw DomainError("seed rectangle covers no pixels");
  }

  std::vector<Coord> coords;
  std::vector<HueEmbedding> points;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      coords.push_back({r, c});
      points.push_back(embed(image.at(r, c)));
    }
  }
  const auto km = kmeans(points, cfg.clusters, cfg.restarts, cfg.max_iters, cfg.seed);
  std::vector<std::size_t> support(km.centers.size(), 0);
  for (int a : km.assignment) ++support[a];
  const auto largest = static_cast<int>(
      std::max_element(support.begin(), support.end()) - support.begin());

  std::vector<Coord> out;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (km.assignment[i] == largest) out.push_back(coords[i]);
  }
  return out;
}

namespace {

enum : std::uint8_t { kNone = 0, kUpper = 1, kLower = 2, kBackground = 3 };

constexpr int kDr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

}  // namespace

GrowCutResult grow_cuts(const PedestrianImage& image, std::span<const Coord> upper_seeds,
                        std::span<const Coord> lower_seeds,
                        std::span<const Coord> background_seeds, const GrowCutConfig& cfg) {
  if (upper_seeds.empty() || lower_seeds.empty() || background_seeds.empty()) {
    throw std::invalid_argument("grow_cuts: every seed set must be non-empty");
  }
  const int w = image.width, h = image.height;
  const auto n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint8_t> label(n, kNone);
  std::vector<double> strength(n, 0.0);

  auto place = [&](std::span<const Coord> seeds, std::uint8_t l) {
    for (const auto& s : seeds) {
      if (s.row < 0 || s.row >= h || s.col < 0 || s.col >= w) {
        throw std::invalid_argument("grow_cuts: seed outside the image");
      }
      const auto idx = static_cast<std::size_t>(s.row) * w + s.col;
      if (label[idx] != kNone && label[idx] != l) {
        throw std::invalid_argument("grow_cuts: seed sets overlap");
      }
      label[idx] = l;
      strength[idx] = 1.0;
    }
  };
  place(upper_seeds, kUpper);
  place(lower_seeds, kLower);
  place(background_seeds, kBackground);

  // Attack force of each neighbour direction, computed once.
  const double max_delta = max_delta_norm();
  std::vector<double> force(n * 8, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto idx = static_cast<std::size_t>(r) * w + c;
      for (int k = 0; k < 8; ++k) {
        const int rr = r + kDr[k], cc = c + kDc[k];
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        force[idx * 8 + k] = 1.0 - hsv_distance(image.at(r, c), image.at(rr, cc)).norm() / max_delta;
      }
    }
  }

  GrowCutResult result;
  std::vector<std::uint8_t> next_label = label;
  std::vector<double> next_strength = strength;
  result.converged = false;
  for (int it = 0; it < cfg.max_iters; ++it) {
    bool changed = false;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto idx = static_cast<std::size_t>(r) * w + c;
        double best = strength[idx];
        std::uint8_t best_label = label[idx];
        for (int k = 0; k < 8; ++k) {
          const int rr = r + kDr[k], cc = c + kDc[k];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const auto q = static_cast<std::size_t>(rr) * w + cc;
          if (label[q] == kNone) continue;
          const double attack = force[idx * 8 + k] * strength[q];
          if (attack > best) {
            best = attack;
            best_label = label[q];
          }
        }
        next_strength[idx] = best;
        if (best_label != label[idx] || best != strength[idx]) changed = true;
        next_label[idx] = best_label;
      }
    }
    if (!changed) {
      result.converged = true;
      break;
    }
    label.swap(next_label);
    strength.swap(next_strength);
    ++result.iterations;
  }

  result.mask = ForegroundMask(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    result.mask.labels[i] = label[i] == kUpper   ? PixelLabel::upper
                            : label[i] == kLower ? PixelLabel::lower
                                                 : PixelLabel::background;
  }
  result.strength = std::move(strength);
  return result;
}

namespace {

struct RowSums {
  double sin = 0, cos = 0, s = 0, v = 0, count = 0;
  RowSums& operator+=(const RowSums& o) {
    sin += o.sin; cos += o.cos; s += o.s; v += o.v; count += o.count;
    return *this;
  }
  RowSums operator-(const RowSums& o) const {
    return {sin - o.sin, cos - o.cos, s - o.s, v - o.v, count - o.count};
  }
  HsvPixel mean() const { return {std::atan2(sin, cos), s / count, v / count}; }
};

std::vector<RowSums> prefix_rows(const PedestrianImage& image, const ForegroundMask& mask) {
  std::vector<RowSums> prefix(image.height + 1);
  for (int r = 0; r < image.height; ++r) {
    RowSums row;
    for (int c = 0; c < image.width; ++c) {
      if (mask.at(r, c) == PixelLabel::background) continue;
      const auto& p = image.at(r, c);
      row += {std::sin(p.h), std::cos(p.h), p.s, p.v, 1.0};
    }
    prefix[r + 1] = prefix[r];
    prefix[r + 1] += row;
  }
  return prefix;
}

double objective_from_prefix(const std::vector<RowSums>& prefix, int split_row,
                             double area_weight) {
  const RowSums above = prefix[split_row];
  const RowSums below = prefix.back() - above;
  if (above.count <= 0 || below.count <= 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double dissimilarity = hsv_distance(above.mean(), below.mean()).norm();
  const double total = above.count + below.count;
  return dissimilarity - area_weight * std::abs(above.count - below.count) / total;
}

void check_mask(const PedestrianImage& image, const ForegroundMask& mask) {
  if (mask.width != image.width || mask.height != image.height) {
    throw std::invalid_argument("mask dimensions do not match the image");
  }
}

}  // namespace

double split_objective(const PedestrianImage& image, const ForegroundMask& mask, int split_row,
                       double area_weight) {
  check_mask(image, mask);
  if (split_row < 0 || split_row > image.height) {
    throw std::out_of_range("split row outside the image");
  }
  return objective_from_prefix(prefix_rows(image, mask), split_row, area_weight);
}

PartSplit split_parts(const PedestrianImage& image, const ForegroundMask& mask,
                      const SplitConfig& cfg) {
  check_mask(image, mask);
  std::vector<int> fg_rows;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      if (mask.at(r, c) != PixelLabel::background) {
        fg_rows.push_back(r);
        break;
      }
    }
  }
  if (fg_rows.size() < 2) {
    throw DomainError("split_parts: mask needs at least two foreground rows");
  }

  const auto prefix = prefix_rows(image, mask);
  const int lo = static_cast<int>(std::ceil(cfg.band_low * image.height));
  const int hi = static_cast<int>(std::floor(cfg.band_high * image.height));
  int best_row = -1;
  double best = -std::numeric_limits<double>::infinity();
  for (int y = std::max(lo, 0); y <= std::min(hi, image.height); ++y) {
    const double j = objective_from_prefix(prefix, y, cfg.area_weight);
    if (std::isnan(j)) continue;
    if (j > best) {
      best = j;
      best_row = y;
    }
  }
  if (best_row < 0) {
    throw DomainError("split_parts: no valid split row in the band");
  }

  PartSplit out;
  out.split_row = best_row;
  out.head_rows = static_cast<int>(std::floor(cfg.head_fraction * fg_rows.size()));
  const int head_end = out.head_rows > 0 ? fg_rows[out.head_rows - 1] : -1;  // inclusive
  out.labels = ForegroundMask(image.width, image.height);
  out.upper = {image.id, Garment::upper, {}};
  out.lower = {image.id, Garment::lower, {}};
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      if (mask.at(r, c) == PixelLabel::background) continue;
      if (r >= best_row) {
        out.labels.at(r, c) = PixelLabel::lower;
        out.lower.pixels.push_back(image.at(r, c));
      } else if (r <= head_end) {
        out.labels.at(r, c) = PixelLabel::head;
      } else {
        out.labels.at(r, c) = PixelLabel::upper;
        out.upper.pixels.push_back(image.at(r, c));
      }
    }
  }
  return out;
}

ForegroundMask load_external_mask(const std::filesystem::path& file, int source_width,
                                  int source_height, int target_width, int target_height) {
  cv::Mat raw = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) {
    throw std::runtime_error("cannot read mask " + file.string());
  }
  if (raw.cols != source_width || raw.rows != source_height) {
    throw std::invalid_argument("mask " + file.string() + " is " + std::to_string(raw.cols) + "x" +
                                std::to_string(raw.rows) + ", image is " +
                                std::to_string(source_width) + "x" +
                                std::to_string(source_height));
  }
  if (raw.cols != target_width || raw.rows != target_height) {
    cv::Mat resized;
    cv::resize(raw, resized, cv::Size(target_width, target_height), 0, 0, cv::INTER_NEAREST);
    raw = resized;
  }
  ForegroundMask mask(target_width, target_height);
  for (int r = 0; r < raw.rows; ++r) {
    const auto* row = raw.ptr<std::uint8_t>(r);
    for (int c = 0; c < raw.cols; ++c) {
      if (row[c] != 0) mask.at(r, c) = PixelLabel::foreground;
    }
  }
  return mask;
}

std::vector<Coord> border_coords(int width, int height) {
  std::vector<Coord> out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (r == 0 || c == 0 || r == height - 1 || c == width - 1) out.push_back({r, c});
    }
  }
  return out;
}

Segmentation segment_pedestrian(const PedestrianImage& image, const SegmentationConfig& cfg) {
  const auto border = border_coords(image.width, image.height);
  auto upper = dominant_color_seeds(image, cfg.upper_rect, cfg.kmeans);
  auto lower = dominant_color_seeds(image, cfg.lower_rect, cfg.kmeans);
  // Seed sets must be disjoint: border wins, then upper.
  auto on_border = [&](const Coord& c) {
    return c.row == 0 || c.col == 0 || c.row == image.height - 1 || c.col == image.width - 1;
  };
  std::erase_if(upper, on_border);
  std::erase_if(lower, on_border);
  std::erase_if(lower, [&](const Coord& c) {
    return std::binary_search(upper.begin(), upper.end(), c);
  });
  if (upper.empty() || lower.empty()) {
    throw DomainError("segmentation: seed rectangles produced no interior seeds for " + image.id);
  }
  auto grown = grow_cuts(image, upper, lower, border, cfg.growcut);
  Segmentation seg;
  seg.converged = grown.converged;
  seg.provenance = "growcut";
  seg.parts = split_parts(image, grown.mask, cfg.split);
  return seg;
}

Segmentation segment_with_mask(const PedestrianImage& image, const ForegroundMask& mask,
                               const SplitConfig& cfg) {
  Segmentation seg;
  seg.provenance = "external";
  seg.parts = split_parts(image, mask, cfg);
  return seg;
}

}  // namespace hq
