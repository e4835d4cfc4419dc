#pragma once

// Partition-independent reductions.
//
// Summing local partial sums in rank order is deterministic for a fixed
// partition, but moving rows between ranks changes which terms are added
// together and therefore the rounding. ExactSum keeps a rank's contribution
// as a short list of non-overlapping doubles whose mathematical sum is the
// exact sum of the terms (Shewchuk's grow-expansion, the same scheme as
// Python's math.fsum). Gathering those lists and rounding once gives the
// correctly rounded total, which no longer depends on how rows are split.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ciqn/errors.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn::detail {

class ExactSum {
 public:
  void add(double x) {
    if (!std::isfinite(x)) {
      special_ += x;
      has_special_ = true;
      return;
    }
    std::size_t kept = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[kept++] = lo;
      x = hi;
    }
    partials_.resize(kept);
    partials_.push_back(x);
  }

  std::span<const double> partials() const { return partials_; }
  bool has_special() const { return has_special_; }
  double special() const { return special_; }

  /// Correctly rounded (to nearest, ties to even) value of the exact sum.
  double round() const {
    if (has_special_) return special_;
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    // The remaining partials can push a halfway case either way.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
  double special_ = 0.0;
  bool has_special_ = false;
};

/// Sums each entry of `local` over all ranks with a single allgather. The
/// result is the correctly rounded total and is identical on every rank and
/// for every partition of the terms.
inline std::vector<double> exact_allreduce(Communicator& comm, std::span<const ExactSum> local) {
  // Per entry: [partial count, special flag, special value, partials...].
  std::vector<double> packed;
  for (const auto& s : local) {
    packed.push_back(static_cast<double>(s.partials().size()));
    packed.push_back(s.has_special() ? 1.0 : 0.0);
    packed.push_back(s.special());
    packed.insert(packed.end(), s.partials().begin(), s.partials().end());
  }
  const std::vector<double> all = comm.allgather(packed);

  std::vector<ExactSum> totals(local.size());
  std::size_t pos = 0;
  while (pos < all.size()) {
    for (auto& total : totals) {
      if (pos + 3 > all.size()) throw CollectiveError("exact reduction: malformed contribution");
      const auto count = static_cast<std::size_t>(all[pos]);
      if (all[pos + 1] != 0.0) total.add(all[pos + 2]);
      pos += 3;
      if (pos + count > all.size()) throw CollectiveError("exact reduction: malformed contribution");
      for (std::size_t i = 0; i < count; ++i) total.add(all[pos + i]);
      pos += count;
    }
  }

  std::vector<double> out(local.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = totals[i].round();
  return out;
}

inline double exact_allreduce(Communicator& comm, const ExactSum& local) {
  return exact_allreduce(comm, std::span<const ExactSum>(&local, 1)).front();
}

}  // namespace ciqn::detail
