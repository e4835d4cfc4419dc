#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ciqn/detail/exact_sum.hpp"
#include "ciqn/detail/storage_meter.hpp"
#include "ciqn/errors.hpp"
#include "ciqn/layout.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn {

/// The rows of an interface field owned by one rank.
///
/// Arithmetic that spans ranks (dot, norm2) is collective and takes the
/// rank's communicator; purely local arithmetic (axpy, scaling) does not.
class InterfaceVector {
 public:
  using Storage = std::vector<double, detail::MeteredAllocator<double>>;

  InterfaceVector(std::shared_ptr<const PartitionLayout> layout, RankId rank)
      : layout_(std::move(layout)), rank_(rank), local_(layout_->count(rank), 0.0) {}

  InterfaceVector(std::shared_ptr<const PartitionLayout> layout, RankId rank, std::span<const double> local)
      : layout_(std::move(layout)), rank_(rank), local_(local.begin(), local.end()) {
    if (local_.size() != layout_->count(rank_)) {
      throw LayoutError("local length " + std::to_string(local_.size()) + " does not match layout count " +
                        std::to_string(layout_->count(rank_)));
    }
  }

  /// Picks this rank's rows out of a full vector in global order.
  static InterfaceVector from_global(std::shared_ptr<const PartitionLayout> layout, RankId rank,
                                     std::span<const double> full) {
    if (full.size() != layout->size()) throw LayoutError("full vector has wrong global length");
    auto rows = full.subspan(layout->global_begin(rank), layout->count(rank));
    return InterfaceVector(std::move(layout), rank, rows);
  }

  const PartitionLayout& layout() const { return *layout_; }
  const std::shared_ptr<const PartitionLayout>& shared_layout() const { return layout_; }
  RankId rank() const { return rank_; }

  std::size_t local_size() const { return local_.size(); }
  std::size_t global_size() const { return layout_->size(); }
  /// Renumbered global index of local row 0.
  std::size_t global_begin() const { return layout_->global_begin(rank_); }

  std::span<double> local() { return local_; }
  std::span<const double> local() const { return local_; }

  double& operator[](std::size_t i) { return local_[i]; }
  double operator[](std::size_t i) const { return local_[i]; }

  bool same_layout(const InterfaceVector& other) const {
    return rank_ == other.rank_ && (layout_ == other.layout_ || *layout_ == *other.layout_);
  }

  bool all_finite() const {
    for (double v : local_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  InterfaceVector& operator*=(double s) {
    for (double& v : local_) v *= s;
    return *this;
  }

 private:
  std::shared_ptr<const PartitionLayout> layout_;
  RankId rank_;
  Storage local_;
};

namespace detail {

inline void require_same_layout(const InterfaceVector& a, const InterfaceVector& b) {
  if (!a.same_layout(b)) throw LayoutError("interface vectors have different layouts");
}

/// Exact sum of this rank's products a_i * b_i (each product rounded once).
inline ExactSum local_dot(const InterfaceVector& a, const InterfaceVector& b) {
  ExactSum s;
  auto x = a.local();
  auto y = b.local();
  for (std::size_t i = 0; i < x.size(); ++i) s.add(x[i] * y[i]);
  return s;
}

}  // namespace detail

inline double dot(Communicator& comm, const InterfaceVector& a, const InterfaceVector& b) {
  detail::require_same_layout(a, b);
  return detail::exact_allreduce(comm, detail::local_dot(a, b));
}

inline double norm2(Communicator& comm, const InterfaceVector& a) {
  return std::sqrt(detail::exact_allreduce(comm, detail::local_dot(a, a)));
}

/// y + alpha * x. Local rows only, no communication.
inline InterfaceVector axpy(double alpha, const InterfaceVector& x, const InterfaceVector& y) {
  detail::require_same_layout(x, y);
  InterfaceVector out = y;
  auto o = out.local();
  auto xs = x.local();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += alpha * xs[i];
  return out;
}

/// a - b, local.
inline InterfaceVector difference(const InterfaceVector& a, const InterfaceVector& b) { return axpy(-1.0, b, a); }

/// Unit vector at renumbered global row j, as seen by `rank`.
inline InterfaceVector unit_at(std::shared_ptr<const PartitionLayout> layout, RankId rank, std::size_t j) {
  if (j >= layout->size()) throw LayoutError("unit index " + std::to_string(j) + " out of range");
  InterfaceVector e(layout, rank);
  const std::size_t begin = e.global_begin();
  if (j >= begin && j < begin + e.local_size()) e[j - begin] = 1.0;
  return e;
}

/// Full vector in global order, replicated on every rank (one allgather).
inline std::vector<double> gather_global(Communicator& comm, const InterfaceVector& v) {
  const std::vector<double> by_rank = comm.allgather(v.local());
  const PartitionLayout& layout = v.layout();
  std::vector<double> out(layout.size());
  std::size_t offset = 0;
  for (int r = 0; r < layout.ranks(); ++r) {
    const std::size_t n = layout.count(RankId{r});
    std::copy_n(by_rank.begin() + static_cast<std::ptrdiff_t>(offset), n,
                out.begin() + static_cast<std::ptrdiff_t>(layout.global_begin(RankId{r})));
    offset += n;
  }
  return out;
}

}  // namespace ciqn
