#include "huequery/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "huequery/hash.hpp"
#include "huequery/parallel.hpp"

namespace fs = std::filesystem;

namespace hq {

std::string normalize_label(std::string_view label) {
  std::string out;
  bool space = false;
  for (unsigned char c : label) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  if (out.empty()) {
    throw std::invalid_argument("colour label must not be empty");
  }
  return out;
}

const Sample* Dataset::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &samples_[it->second];
}

void Dataset::add_sample(Sample s) {
  if (index_.contains(s.id)) {
    throw std::invalid_argument("duplicate sample id " + s.id);
  }
  index_.emplace(s.id, samples_.size());
  samples_.push_back(std::move(s));
}

bool Dataset::add_annotation(Annotation a) {
  if (!find(a.image_id)) {
    throw std::invalid_argument("annotation references unknown sample " + a.image_id);
  }
  a.color_label = normalize_label(a.color_label);
  auto key = std::make_tuple(a.image_id, a.garment, a.color_label);
  if (annotation_index_.contains(key)) return false;
  annotation_index_.emplace(std::move(key), annotations_.size());
  annotations_.push_back(std::move(a));
  return true;
}

bool Dataset::has_label(std::string_view id, Garment g, std::string_view label) const {
  return annotation_index_.contains(std::make_tuple(std::string(id), g, std::string(label)));
}

std::vector<std::string> Dataset::positives(Garment g, std::string_view label) const {
  std::vector<std::string> out;
  for (const auto& s : samples_) {
    if (has_label(s.id, g, label)) out.push_back(s.id);
  }
  return out;
}

std::vector<Annotation> read_annotations(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open annotation file " + file.string());
  }
  std::vector<Annotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    auto fail = [&](const std::string& why) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() < 3 || fields.size() > 5) {
      fail("expected 3 to 5 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Annotation a;
    a.image_id = fields[0];
    if (a.image_id.empty()) fail("empty image id");
    try {
      a.garment = parse_garment(fields[1]);
      a.color_label = normalize_label(fields[2]);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    if (fields.size() > 3) a.author = fields[3];
    if (fields.size() > 4) a.timestamp = fields[4];
    out.push_back(std::move(a));
  }
  return out;
}

std::string format_annotation(const Annotation& a) {
  std::string line = a.image_id + '\t' + to_string(a.garment) + '\t' + a.color_label;
  if (!a.author.empty() || !a.timestamp.empty()) line += '\t' + a.author;
  if (!a.timestamp.empty()) line += '\t' + a.timestamp;
  return line;
}

bool annotate(Dataset& dataset, Annotation a) {
  if (a.image_id.find_first_of("\t\n") != std::string::npos ||
      a.color_label.find_first_of("\t\n") != std::string::npos ||
      a.author.find_first_of("\t\n") != std::string::npos) {
    throw std::invalid_argument("annotation fields must not contain tabs or newlines");
  }
  a.color_label = normalize_label(a.color_label);
  if (!dataset.add_annotation(a)) return false;
  const auto path = dataset.layout.resolve(dataset.layout.annotations);
  std::ofstream out(path, std::ios::app);
  if (!out) {
    throw std::runtime_error("cannot append to " + path.string());
  }
  out << format_annotation(a) << '\n';
  return true;
}

LabelHistogram list_labels(const Dataset& dataset) {
  LabelHistogram h;
  for (const auto& a : dataset.annotations()) ++h[{a.garment, a.color_label}];
  return h;
}

std::string file_hash(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

void write_region_cache(const fs::path& bin, const fs::path& sidecar, const SampleRegion& region,
                        const std::string& provenance, const std::string& source_hash) {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  fs::create_directories(bin.parent_path());
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    for (const auto& p : region.pixels) {
      const double v[3] = {p.h, p.s, p.v};
      out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
    if (!out) throw std::runtime_error("cannot write " + bin.string());
  }
  const nlohmann::json meta = {{"image_id", region.image_id},
                               {"garment", to_string(region.garment)},
                               {"n", region.pixels.size()},
                               {"mask_provenance", provenance},
                               {"source_hash", source_hash}};
  std::ofstream out(sidecar, std::ios::trunc);
  out << meta.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + sidecar.string());
}

std::optional<SampleRegion> read_region_cache(const fs::path& bin, const fs::path& sidecar,
                                              const std::string& expected_hash,
                                              std::string* provenance) {
  if (!fs::exists(bin) || !fs::exists(sidecar)) return std::nullopt;
  nlohmann::json meta;
  try {
    std::ifstream in(sidecar);
    meta = nlohmann::json::parse(in);
    if (meta.at("source_hash").get<std::string>() != expected_hash) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  const auto n = meta.at("n").get<std::size_t>();
  if (fs::file_size(bin) != n * 3 * sizeof(double)) return std::nullopt;
  SampleRegion r;
  r.image_id = meta.at("image_id").get<std::string>();
  r.garment = parse_garment(meta.at("garment").get<std::string>());
  r.pixels.reserve(n);
  std::ifstream in(bin, std::ios::binary);
  for (std::size_t i = 0; i < n; ++i) {
    double v[3];
    in.read(reinterpret_cast<char*>(v), sizeof v);
    if (!in) return std::nullopt;
    HsvPixel p;
    p.h = v[0];
    p.s = v[1];
    p.v = v[2];
    r.pixels.push_back(p);
  }
  if (provenance) *provenance = meta.value("mask_provenance", "");
  return r;
}

namespace {

bool is_image_file(const fs::path& p) {
  const auto name = p.filename().string();
  if (name.ends_with(".mask.png")) return false;
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

std::string segmentation_signature(const SegmentationConfig& c) {
  const nlohmann::json j = {
      {"upper", {c.upper_rect.top, c.upper_rect.bottom, c.upper_rect.left, c.upper_rect.right}},
      {"lower", {c.lower_rect.top, c.lower_rect.bottom, c.lower_rect.left, c.lower_rect.right}},
      {"kmeans", {c.kmeans.clusters, c.kmeans.restarts, c.kmeans.max_iters, c.kmeans.seed}},
      {"growcut", c.growcut.max_iters},
      {"split",
       {c.split.band_low, c.split.band_high, c.split.head_fraction, c.split.area_weight}}};
  return j.dump();
}

struct IngestSlot {
  std::optional<Sample> sample;
  std::string warning;
};

}  // namespace

Dataset ingest(const DatasetLayout& layout, std::string name, const IngestOptions& opts) {
  const auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };
  const fs::path images_dir = layout.resolve(layout.images);
  if (!fs::is_directory(images_dir)) {
    throw std::runtime_error("image directory " + images_dir.string() + " does not exist");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  const fs::path masks_dir = layout.resolve(layout.masks);
  const fs::path cache_dir = layout.resolve(layout.cache);
  const std::string signature = segmentation_signature(opts.segmentation);

  std::vector<IngestSlot> slots(files.size());
  parallel_for(files.size(), opts.workers, [&](std::size_t i) {
    const auto& file = files[i];
    const std::string id = file.stem().string();
    auto& slot = slots[i];
    try {
      fs::path mask_file = file.parent_path() / (id + ".mask.png");
      if (!fs::exists(mask_file)) mask_file = masks_dir / (id + ".mask.png");
      const bool has_mask = fs::exists(mask_file);

      std::string key = file_hash(file) + signature;
      if (has_mask) key += file_hash(mask_file);
      const std::string source_hash = hex64(fnv1a(key));

      Sample s;
      s.id = id;
      s.image_path = file;
      const auto cut = id.rfind('_');
      s.pair_key = opts.pair_from_id && cut != std::string::npos && cut > 0 ? id.substr(0, cut) : id;

      const auto base = cache_dir / id;
      std::optional<SampleRegion> upper, lower;
      std::string provenance;
      if (opts.use_cache) {
        upper = read_region_cache(base.string() + ".upper.bin", base.string() + ".upper.json",
                                  source_hash, &provenance);
        lower = read_region_cache(base.string() + ".lower.bin", base.string() + ".lower.json",
                                  source_hash);
      }
      if (upper && lower) {
        s.upper = std::move(*upper);
        s.lower = std::move(*lower);
        s.mask_provenance = provenance;
      } else {
        const auto image = load_pedestrian_image(file, id);
        Segmentation seg;
        if (has_mask) {
          const auto mask = load_external_mask(mask_file, image.source_width, image.source_height,
                                               image.width, image.height);
          seg = segment_with_mask(image, mask, opts.segmentation.split);
        } else {
          seg = segment_pedestrian(image, opts.segmentation);
          if (!seg.converged) slot.warning = "segmentation of " + id + " hit the iteration cap";
        }
        s.upper = std::move(seg.parts.upper);
        s.lower = std::move(seg.parts.lower);
        s.mask_provenance = seg.provenance;
        if (opts.use_cache) {
          write_region_cache(base.string() + ".upper.bin", base.string() + ".upper.json", s.upper,
                             s.mask_provenance, source_hash);
          write_region_cache(base.string() + ".lower.bin", base.string() + ".lower.json", s.lower,
                             s.mask_provenance, source_hash);
        }
      }
      slot.sample = std::move(s);
    } catch (const std::invalid_argument&) {
      // Mask dimension mismatches are input faults, not unreadable files.
      throw;
    } catch (const std::exception& e) {
      slot.warning = "skipping " + file.filename().string() + ": " + e.what();
    }
  });

  Dataset ds;
  ds.name = std::move(name);
  ds.layout = layout;
  for (auto& slot : slots) {
    if (!slot.warning.empty()) log(slot.warning);
    if (slot.sample) ds.add_sample(std::move(*slot.sample));
  }

  const auto ann_file = layout.resolve(layout.annotations);
  if (fs::exists(ann_file)) {
    for (auto& a : read_annotations(ann_file)) {
      if (!ds.find(a.image_id)) {
        log("dropping annotation for unknown sample " + a.image_id);
        continue;
      }
      ds.add_annotation(std::move(a));
    }
  }
  return ds;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Fisher-Yates with an explicit modulo draw so plans are identical across
/// standard library implementations.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng() % i]);
  }
}

}  // namespace

SplitPlan make_splits(const Dataset& dataset, const QueryTarget& query, std::size_t k,
                      const SplitOptions& opts) {
  if (k == 0) {
    throw std::invalid_argument("make_splits: k must be at least 1");
  }
  const auto label = normalize_label(query.label);
  const auto pos = dataset.positives(query.garment, label);
  if (pos.size() < 2 * k) {
    throw InsufficientPositives("not enough positive training examples for '" + label + " " +
                                to_string(query.garment) + "': " + std::to_string(pos.size()) +
                                " positives, need " + std::to_string(2 * k));
  }
  std::vector<std::string> others;
  for (const auto& s : dataset.samples()) {
    if (!dataset.has_label(s.id, query.garment, label)) others.push_back(s.id);
  }

  SplitPlan plan;
  plan.query = {query.garment, label};
  plan.k = k;
  const std::size_t train_half = pos.size() / 2;
  const std::uint64_t query_salt = fnv1a(to_string(query.garment) + "/" + label);
  for (int t = 0; t < opts.trials; ++t) {
    TrialSplit trial;
    trial.seed = splitmix(opts.seed ^ splitmix(query_salt + static_cast<std::uint64_t>(t)));
    std::mt19937_64 rng(trial.seed);

    // Group by pair so a person never straddles the split when requested.
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& id : pos) {
      groups[opts.pair_exclusive ? dataset.find(id)->pair_key : id].push_back(id);
    }
    std::vector<std::vector<std::string>> ordered;
    for (auto& [key, ids] : groups) ordered.push_back(std::move(ids));
    shuffle(ordered, rng);

    std::vector<std::string> train_pool, test_pos;
    for (auto& g : ordered) {
      auto& dst = train_pool.size() < train_half ? train_pool : test_pos;
      dst.insert(dst.end(), g.begin(), g.end());
    }
    if (train_pool.size() < k || test_pos.empty()) {
      throw InsufficientPositives("pair grouping leaves too few positives for k=" +
                                  std::to_string(k));
    }
    trial.train_positive.assign(train_pool.begin(), train_pool.begin() + static_cast<long>(k));

    auto shuffled_others = others;
    shuffle(shuffled_others, rng);
    const std::size_t reserve = std::min(train_half, shuffled_others.size());
    std::vector<std::string> negative_pool(shuffled_others.begin(),
                                           shuffled_others.begin() + static_cast<long>(reserve));
    trial.train_negative.assign(
        negative_pool.begin(),
        negative_pool.begin() + static_cast<long>(std::min(k, negative_pool.size())));

    std::set<std::string> excluded(train_pool.begin(), train_pool.end());
    excluded.insert(negative_pool.begin(), negative_pool.end());
    std::set<std::string> excluded_pairs;
    if (opts.pair_exclusive) {
      for (const auto& id : excluded) excluded_pairs.insert(dataset.find(id)->pair_key);
    }
    for (const auto& s : dataset.samples()) {
      if (excluded.contains(s.id)) continue;
      if (opts.pair_exclusive && excluded_pairs.contains(s.pair_key)) continue;
      trial.test.push_back(s.id);
      trial.test_relevant.push_back(dataset.has_label(s.id, query.garment, label));
    }
    plan.trials.push_back(std::move(trial));
  }
  return plan;
}

}  // namespace hq
