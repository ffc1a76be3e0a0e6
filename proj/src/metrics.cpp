#include "huequery/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "huequery/colorstats.hpp"

namespace hq {

RankedList::RankedList(std::vector<RankedItem> items) : items_(std::move(items)) {
  std::sort(items_.begin(), items_.end(), [](const RankedItem& a, const RankedItem& b) {
    const bool an = std::isnan(a.score), bn = std::isnan(b.score);
    if (an != bn) return bn;
    if (!an && a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  relevant_ = static_cast<std::size_t>(
      std::count_if(items_.begin(), items_.end(), [](const RankedItem& i) { return i.relevant; }));
}

std::vector<PrPoint> pr_curve(const RankedList& ranked) {
  const auto r = ranked.relevant_count();
  if (r == 0) {
    throw DomainError("pr_curve: ranked list has no relevant items");
  }
  std::vector<PrPoint> out;
  out.reserve(ranked.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked.items()[i].relevant) ++tp;
    out.push_back({static_cast<double>(tp) / static_cast<double>(i + 1),
                   static_cast<double>(tp) / static_cast<double>(r)});
  }
  return out;
}

double bep(const RankedList& ranked) {
  const auto r = ranked.relevant_count();
  if (r == 0) {
    throw DomainError("bep: ranked list has no relevant items");
  }
  std::size_t tp = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (ranked.items()[i].relevant) ++tp;
  }
  return 100.0 * static_cast<double>(tp) / static_cast<double>(r);
}

PrecisionAtN p_at_n(const RankedList& ranked, std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("p_at_n: N must be positive");
  }
  PrecisionAtN out;
  const std::size_t len = std::min(n, ranked.size());
  out.truncated = n > ranked.size();
  if (len == 0) return out;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (ranked.items()[i].relevant) ++tp;
  }
  out.percent = 100.0 * static_cast<double>(tp) / static_cast<double>(len);
  return out;
}

}  // namespace hq
