#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "huequery/segmentation.hpp"

namespace hq {

struct Annotation {
  std::string image_id;
  Garment garment = Garment::upper;
  std::string color_label;
  std::string author;
  std::string timestamp;
};

/// Lowercases and collapses whitespace; throws std::invalid_argument when
/// the result is empty.
std::string normalize_label(std::string_view label);

struct Sample {
  std::string id;
  std::filesystem::path image_path;
  std::string pair_key;  // images sharing a key belong to the same person
  SampleRegion upper;
  SampleRegion lower;
  std::string mask_provenance;  // "growcut" or "external"

  const SampleRegion& region(Garment g) const { return g == Garment::upper ? upper : lower; }
};

struct DatasetLayout {
  std::filesystem::path root;
  std::filesystem::path images = "images";
  std::filesystem::path masks = "masks";
  std::filesystem::path annotations = "annotations.tsv";
  std::filesystem::path cache = "cache";

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : root / p;
  }
};

class Dataset {
 public:
  std::string name;
  DatasetLayout layout;

  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }

  const Sample* find(std::string_view id) const;
  void add_sample(Sample s);

  /// Adds an annotation in memory. Returns false when the (image, garment,
  /// label) triple already exists. Throws when the image id is unknown.
  bool add_annotation(Annotation a);

  bool has_label(std::string_view id, Garment g, std::string_view label) const;

  /// Ids annotated with `label` for garment `g`, in sample order.
  std::vector<std::string> positives(Garment g, std::string_view label) const;

 private:
  std::vector<Sample> samples_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<Annotation> annotations_;
  std::map<std::tuple<std::string, Garment, std::string>, std::size_t> annotation_index_;
};

using LogSink = std::function<void(const std::string&)>;

struct IngestOptions {
  SegmentationConfig segmentation;
  bool use_cache = true;
  int workers = 1;
  /// Derives the pair key from the id: text before the last '_'.
  bool pair_from_id = true;
  LogSink log;
};

/// Reads `<root>/images`, segments every crop (external mask when one
/// exists, GrowCut otherwise), caches regions and loads the annotation file.
Dataset ingest(const DatasetLayout& layout, std::string name, const IngestOptions& opts = {});

/// Parses annotation lines `image_id<TAB>garment<TAB>label[<TAB>author[<TAB>timestamp]]`.
/// Blank lines and '#' comments are skipped; anything else malformed throws
/// std::runtime_error naming the line number.
std::vector<Annotation> read_annotations(const std::filesystem::path& file);

std::string format_annotation(const Annotation& a);

/// Validates, adds to the dataset and appends to the annotation file.
/// Returns false (and writes nothing) for a duplicate.
bool annotate(Dataset& dataset, Annotation a);

using LabelHistogram = std::map<std::pair<Garment, std::string>, std::size_t>;
LabelHistogram list_labels(const Dataset& dataset);

struct QueryTarget {
  Garment garment = Garment::upper;
  std::string label;
};

struct SplitOptions {
  int trials = 10;
  std::uint64_t seed = 1;
  /// Keep both images of a pair on the same side of the split.
  bool pair_exclusive = false;
};

struct TrialSplit {
  std::uint64_t seed = 0;
  std::vector<std::string> train_positive;
  std::vector<std::string> train_negative;
  std::vector<std::string> test;
  std::vector<bool> test_relevant;
};

struct SplitPlan {
  QueryTarget query;
  std::size_t k = 0;
  std::vector<TrialSplit> trials;
};

class InsufficientPositives : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per trial: positives are shuffled and halved; the first k of the training
/// half train the model and the other half is tested. An equally sized
/// reserve of non-positives supplies discriminative negatives (first k) and
/// is kept out of the test set; every other sample is tested. The test set
/// of a trial therefore does not depend on k.
SplitPlan make_splits(const Dataset& dataset, const QueryTarget& query, std::size_t k,
                      const SplitOptions& opts = {});

/// Region cache: little-endian float64 (h, s, v) triples plus a JSON sidecar.
void write_region_cache(const std::filesystem::path& bin, const std::filesystem::path& sidecar,
                        const SampleRegion& region, const std::string& provenance,
                        const std::string& source_hash);
std::optional<SampleRegion> read_region_cache(const std::filesystem::path& bin,
                                              const std::filesystem::path& sidecar,
                                              const std::string& expected_hash,
                                              std::string* provenance = nullptr);

std::string file_hash(const std::filesystem::path& file);

}  // namespace hq
