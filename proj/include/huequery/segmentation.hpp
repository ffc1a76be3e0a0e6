#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "huequery/colorstats.hpp"

namespace hq {

inline constexpr int kCanonicalHeight = 128;
inline constexpr int kCanonicalWidth = 48;

enum class Garment : std::uint8_t { upper, lower };

std::string to_string(Garment g);
/// Accepts "upper"/"lower"; throws std::invalid_argument otherwise.
Garment parse_garment(std::string_view text);

/// Row-major HSV raster of one pedestrian crop.
struct PedestrianImage {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<HsvPixel> pixels;
  // Dimensions of the file before resizing; equal to width/height otherwise.
  int source_width = 0;
  int source_height = 0;

  const HsvPixel& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// Builds an image from interleaved 8-bit RGB. Throws on size mismatch.
PedestrianImage image_from_rgb(std::string id, int width, int height,
                               std::span<const std::uint8_t> rgb);

/// Reads an image file, resizes it to the canonical 128x48 crop and converts
/// it to HSV. Throws std::runtime_error when the file cannot be decoded.
PedestrianImage load_pedestrian_image(const std::filesystem::path& file, std::string id);

enum class PixelLabel : std::uint8_t { background, foreground, upper, lower, head };

struct ForegroundMask {
  int width = 0;
  int height = 0;
  std::vector<PixelLabel> labels;

  ForegroundMask() = default;
  ForegroundMask(int w, int h, PixelLabel fill = PixelLabel::background)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

  PixelLabel& at(int row, int col) { return labels[static_cast<std::size_t>(row) * width + col]; }
  PixelLabel at(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t foreground_count() const;
};

/// The segmented pixels of one garment of one image.
struct SampleRegion {
  std::string image_id;
  Garment garment = Garment::upper;
  std::vector<HsvPixel> pixels;

  std::size_t size() const { return pixels.size(); }
};

struct Coord {
  int row = 0;
  int col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

/// Rectangle given as fractions of the image height (rows) and width (cols).
struct FracRect {
  double top = 0.0;
  double bottom = 1.0;
  double left = 0.0;
  double right = 1.0;
};

struct KMeansConfig {
  int clusters = 3;
  int restarts = 10;
  int max_iters = 50;
  std::uint64_t seed = 7;
};

/// K-means over the pixels inside `rect`; returns the coordinates of the
/// most populated cluster in row-major order.
std::vector<Coord> dominant_color_seeds(const PedestrianImage& image, const FracRect& rect,
                                        const KMeansConfig& cfg = {});

struct GrowCutConfig {
  int max_iters = 500;
};

struct GrowCutResult {
  ForegroundMask mask;
  std::vector<double> strength;
  int iterations = 0;
  bool converged = false;
};

/// Cellular-automaton region growing over 8-neighbourhoods. Cells keep a
/// (label, strength) pair; a neighbour conquers a cell when its attack force
/// times its strength beats the cell's current strength.
GrowCutResult grow_cuts(const PedestrianImage& image, std::span<const Coord> upper_seeds,
                        std::span<const Coord> lower_seeds,
                        std::span<const Coord> background_seeds, const GrowCutConfig& cfg = {});

struct SplitConfig {
  double band_low = 0.3;
  double band_high = 0.7;
  double head_fraction = 0.15;
  double area_weight = 0.2;  // lambda
};

/// Torso/legs boundary score for a candidate row: rows < split_row are above.
/// Returns NaN when one side has no foreground.
double split_objective(const PedestrianImage& image, const ForegroundMask& mask, int split_row,
                       double area_weight);

struct PartSplit {
  int split_row = 0;
  int head_rows = 0;
  ForegroundMask labels;  // background / head / upper / lower
  SampleRegion upper;
  SampleRegion lower;
};

/// Any non-background label of `mask` counts as foreground.
PartSplit split_parts(const PedestrianImage& image, const ForegroundMask& mask,
                      const SplitConfig& cfg = {});

/// Reads a single-channel mask (nonzero = foreground). Its dimensions must
/// equal `source_width` x `source_height`; it is then resized to the target
/// raster with nearest-neighbour sampling.
ForegroundMask load_external_mask(const std::filesystem::path& file, int source_width,
                                  int source_height, int target_width = kCanonicalWidth,
                                  int target_height = kCanonicalHeight);

struct SegmentationConfig {
  FracRect upper_rect{0.20, 0.45, 0.25, 0.75};
  FracRect lower_rect{0.55, 0.85, 0.25, 0.75};
  KMeansConfig kmeans;
  GrowCutConfig growcut;
  SplitConfig split;
};

struct Segmentation {
  PartSplit parts;
  bool converged = true;
  std::string provenance;  // "growcut" or "external"
};

std::vector<Coord> border_coords(int width, int height);

/// Full pipeline: dominant-colour seeds, GrowCut foreground, part split.
Segmentation segment_pedestrian(const PedestrianImage& image, const SegmentationConfig& cfg = {});

/// Part split on an externally supplied foreground mask.
Segmentation segment_with_mask(const PedestrianImage& image, const ForegroundMask& mask,
                               const SplitConfig& cfg = {});

}  // namespace hq
