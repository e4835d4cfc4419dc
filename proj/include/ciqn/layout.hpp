#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ciqn/errors.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn {

/// Rank owning the most interface rows; ties go to the lowest id.
inline RankId select_leader(std::span<const std::size_t> counts) {
  if (counts.empty()) throw LayoutError("partition needs at least one rank");
  std::size_t best = 0;
  for (std::size_t r = 1; r < counts.size(); ++r) {
    if (counts[r] > counts[best]) best = r;
  }
  if (counts[best] == 0) throw LayoutError("empty interface");
  return RankId{static_cast<int>(best)};
}

/// Row distribution of the interface over the ranks.
///
/// Rows are renumbered once: the leader's rows come first, followed by the
/// remaining ranks in rank order. This global numbering is the only one;
/// problems index their operators by it and Householder pivots refer to it,
/// so the first pivots are resident on the leader and the pivot rows are the
/// same rows of the problem whatever the partition.
class PartitionLayout {
 public:
  explicit PartitionLayout(std::vector<std::size_t> counts)
      : counts_(std::move(counts)), leader_(select_leader(counts_)) {
    global_begin_.resize(counts_.size());
    size_ = std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});

    std::size_t offset = counts_[leader_index()];
    for (std::size_t r = 0; r < counts_.size(); ++r) {
      if (r == leader_index()) {
        global_begin_[r] = 0;
      } else {
        global_begin_[r] = offset;
        offset += counts_[r];
      }
    }
  }

  /// Near-equal contiguous split of `size` rows over `ranks` ranks; earlier
  /// ranks receive the remainder.
  static PartitionLayout balanced(std::size_t size, int ranks) {
    if (ranks < 1) throw LayoutError("rank count must be at least 1");
    std::vector<std::size_t> counts(static_cast<std::size_t>(ranks), size / static_cast<std::size_t>(ranks));
    for (std::size_t r = 0; r < size % static_cast<std::size_t>(ranks); ++r) ++counts[r];
    return PartitionLayout(std::move(counts));
  }

  int ranks() const { return static_cast<int>(counts_.size()); }
  std::size_t size() const { return size_; }
  RankId leader() const { return leader_; }
  const std::vector<std::size_t>& counts() const { return counts_; }

  std::size_t count(RankId r) const { return counts_.at(index(r)); }
  std::size_t global_begin(RankId r) const { return global_begin_.at(index(r)); }

  RankId owner(std::size_t global_row) const {
    if (global_row >= size_) throw LayoutError("global row " + std::to_string(global_row) + " out of range");
    for (std::size_t r = 0; r < counts_.size(); ++r) {
      if (global_row >= global_begin_[r] && global_row < global_begin_[r] + counts_[r]) {
        return RankId{static_cast<int>(r)};
      }
    }
    throw LayoutError("unowned global row");
  }

  friend bool operator==(const PartitionLayout& a, const PartitionLayout& b) { return a.counts_ == b.counts_; }

 private:
  std::size_t leader_index() const { return static_cast<std::size_t>(leader_.value); }

  std::size_t index(RankId r) const {
    if (r.value < 0 || static_cast<std::size_t>(r.value) >= counts_.size()) {
      throw LayoutError("rank " + std::to_string(r.value) + " out of range");
    }
    return static_cast<std::size_t>(r.value);
  }

  std::vector<std::size_t> counts_;
  RankId leader_;
  std::size_t size_ = 0;
  std::vector<std::size_t> global_begin_;
};

}  // namespace ciqn
