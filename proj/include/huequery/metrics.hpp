#pragma once

#include <string>
#include <vector>

namespace hq {

struct RankedItem {
  std::string id;
  double score = 0.0;
  bool relevant = false;
};

/// Items in descending score order; ties by ascending id. NaN scores sort
/// last.
class RankedList {
 public:
  RankedList() = default;
  explicit RankedList(std::vector<RankedItem> items);

  const std::vector<RankedItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t relevant_count() const { return relevant_; }

 private:
  std::vector<RankedItem> items_;
  std::size_t relevant_ = 0;
};

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per prefix length 1..n. Throws DomainError without relevant items.
std::vector<PrPoint> pr_curve(const RankedList& ranked);

/// Break-even point in percent: precision at prefix R, R = relevant count.
double bep(const RankedList& ranked);

struct PrecisionAtN {
  double percent = 0.0;
  /// Set when N exceeds the list length; the value covers the whole list.
  bool truncated = false;
};

PrecisionAtN p_at_n(const RankedList& ranked, std::size_t n);

}  // namespace hq
