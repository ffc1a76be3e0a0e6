#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "huequery/segmentation.hpp"

namespace hq {

/// A named garment colour: HSV centre (hue in degrees) and the per-image
/// spread around it.
struct PaletteColor {
  std::string name;
  double hue_deg = 0.0;
  double sat = 0.0;
  double val = 0.0;
  /// Labels besides `name` that annotators also attach, e.g. "light".
  std::vector<std::string> extra_labels;
};

const std::vector<PaletteColor>& upper_palette();
const std::vector<PaletteColor>& lower_palette();

/// Rendering conditions of a synthetic "camera".
struct CameraConditions {
  double brightness_low = 0.9;
  double brightness_high = 1.08;
  double pixel_noise = 6.0;       // RGB standard deviation
  double color_cast_deg = 0.0;    // hue shift applied to everything
  double logo_probability = 0.25; // small off-colour patch on the torso
  double bag_probability = 0.15;  // strap/bag crossing the figure
};

struct SyntheticConfig {
  std::size_t persons = 200;
  int views_per_person = 2;
  std::uint64_t seed = 2024;
  CameraConditions camera;
  std::string id_prefix = "p";
};

struct SyntheticTruth {
  std::string id;
  std::string upper;
  std::string lower;
  std::vector<std::string> upper_labels;
  std::vector<std::string> lower_labels;
};

struct SyntheticImage {
  SyntheticTruth truth;
  int width = kCanonicalWidth;
  int height = kCanonicalHeight;
  std::vector<std::uint8_t> rgb;  // interleaved
  std::vector<std::uint8_t> figure_mask;  // 255 on the person
  int garment_boundary_row = 0;
};

/// Renders the crops in memory. Colour counts follow fixed quotas so every
/// palette entry has a predictable number of persons.
std::vector<SyntheticImage> render_synthetic(const SyntheticConfig& cfg);

struct SyntheticWriteOptions {
  /// Also write `<id>.mask.png` files for the figure silhouettes.
  bool write_masks = false;
  /// Also annotate the extra labels ("light", "dark").
  bool annotate_extra_labels = false;
};

/// Writes `images/*.png` and `annotations.tsv` under `root`.
std::vector<SyntheticTruth> write_synthetic_dataset(const std::filesystem::path& root,
                                                    const SyntheticConfig& cfg,
                                                    const SyntheticWriteOptions& opts = {});

}  // namespace hq
