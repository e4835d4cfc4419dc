#pragma once

// Economy QR of a row-partitioned increment matrix kept as a stack of
// Householder vectors. Q is never formed; every product with it is a
// sequence of rank-one reflector applications, each costing one reduction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ciqn/dense_matrix.hpp"
#include "ciqn/errors.hpp"
#include "ciqn/interface_vector.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn {

enum class FilterNorm { frobenius, max_diagonal };

struct FilterOptions {
  /// Column j is dropped when |U_jj| < epsilon * ||U||. Zero disables filtering.
  double epsilon = 0.0;
  FilterNorm norm = FilterNorm::frobenius;
};

struct HouseholderVector {
  InterfaceVector u;  ///< unit length, or zero when the column is already triangular
  double alpha;       ///< value left at the pivot row after reflection
};

struct HouseholderStack {
  std::vector<InterfaceVector> reflectors;
  DenseMatrix upper;  ///< q x q, replicated

  std::size_t size() const { return reflectors.size(); }
};

struct FilterOutcome {
  std::vector<std::size_t> kept;     ///< original column indices, original order
  std::vector<std::size_t> dropped;  ///< in the order they were removed
  std::size_t restarts = 0;
};

struct Decomposition {
  HouseholderStack stack;
  FilterOutcome filter;
};

/// Reflector that maps rows >= pivot of `v` onto alpha * e_pivot. Rows above
/// the pivot are ignored (treated as already eliminated). alpha takes the sign
/// opposite to v_pivot so that forming n = v - alpha e never cancels.
inline HouseholderVector householder_vector(Communicator& comm, const InterfaceVector& v, std::size_t pivot) {
  const std::size_t begin = v.global_begin();
  const auto x = v.local();

  // [sum of squares below the pivot, pivot entry]; the pivot's owner is the
  // only nonzero contributor to the second slot.
  detail::ExactSum partial[2];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t g = begin + i;
    if (g > pivot) partial[0].add(x[i] * x[i]);
    if (g == pivot) partial[1].add(x[i]);
  }
  const std::vector<double> reduced = detail::exact_allreduce(comm, partial);
  const double tail_sq = reduced[0];
  const double pivot_value = reduced[1];

  InterfaceVector u(v.shared_layout(), v.rank());
  if (tail_sq == 0.0) return {std::move(u), pivot_value};

  const double norm = std::sqrt(tail_sq + pivot_value * pivot_value);
  const double alpha = pivot_value >= 0.0 ? -norm : norm;
  const double n_pivot = pivot_value - alpha;
  const double inv_n_norm = 1.0 / std::sqrt(tail_sq + n_pivot * n_pivot);

  auto out = u.local();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t g = begin + i;
    if (g > pivot) out[i] = x[i] * inv_n_norm;
    if (g == pivot) out[i] = n_pivot * inv_n_norm;
  }
  return {std::move(u), alpha};
}

/// (I - 2 u u^T) t. One reduction.
inline InterfaceVector apply_reflector(Communicator& comm, const InterfaceVector& u, const InterfaceVector& t) {
  return axpy(-2.0 * dot(comm, u, t), u, t);
}

namespace detail {

inline bool filter_rejects(const DenseMatrix& upper, std::size_t j, const FilterOptions& options) {
  if (options.epsilon <= 0.0) return false;
  const double diag = std::abs(upper(j, j));
  if (diag == 0.0) return true;

  double scale = 0.0;
  if (options.norm == FilterNorm::frobenius) {
    // Leading triangle of the columns processed so far.
    for (std::size_t k = 0; k <= j; ++k) {
      for (std::size_t i = 0; i <= k; ++i) scale += upper(i, k) * upper(i, k);
    }
    scale = std::sqrt(scale);
  } else {
    for (std::size_t i = 0; i <= j; ++i) scale = std::max(scale, std::abs(upper(i, i)));
  }
  return diag < options.epsilon * scale;
}

}  // namespace detail

/// Householder QR of `columns` (newest first), restarting from scratch each
/// time the filter removes a column.
inline Decomposition decompose(Communicator& comm, std::span<const InterfaceVector> columns,
                               const FilterOptions& options = {}) {
  if (columns.empty()) throw EmptySecantSpaceError();
  if (options.epsilon < 0.0) throw Error("filter epsilon must be non-negative");
  for (const auto& c : columns) detail::require_same_layout(c, columns.front());

  const auto& layout = columns.front().shared_layout();
  const RankId rank = columns.front().rank();
  const std::size_t begin = columns.front().global_begin();
  const std::size_t rows = columns.front().global_size();

  Decomposition result;
  std::vector<std::size_t> active(columns.size());
  std::iota(active.begin(), active.end(), std::size_t{0});

  for (;;) {
    if (active.empty()) throw EmptySecantSpaceError();
    const std::size_t q = active.size();
    if (q > rows) throw LayoutError("more increment columns than interface rows");

    std::vector<InterfaceVector> work;
    work.reserve(q);
    for (std::size_t idx : active) work.push_back(columns[idx]);

    HouseholderStack stack{{}, DenseMatrix(q, q)};
    stack.reflectors.reserve(q);
    bool restarted = false;

    for (std::size_t j = 0; j < q; ++j) {
      HouseholderVector h = householder_vector(comm, work[j], j);
      stack.upper(j, j) = h.alpha;

      if (detail::filter_rejects(stack.upper, j, options)) {
        result.filter.dropped.push_back(active[j]);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
        ++result.filter.restarts;
        restarted = true;
        break;
      }

      if (j + 1 < q) {
        // Reflect all remaining columns with a single batched reduction.
        std::vector<detail::ExactSum> local(q - j - 1);
        for (std::size_t k = j + 1; k < q; ++k) local[k - j - 1] = detail::local_dot(h.u, work[k]);
        const std::vector<double> projections = detail::exact_allreduce(comm, local);

        const auto u = h.u.local();
        for (std::size_t k = j + 1; k < q; ++k) {
          auto w = work[k].local();
          const double s = 2.0 * projections[k - j - 1];
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= s * u[i];
        }

        // Row j of U is final now; its owner publishes it.
        std::vector<double> row(q - j - 1, 0.0);
        const RankId owner = layout->owner(j);
        if (owner == rank) {
          for (std::size_t k = j + 1; k < q; ++k) row[k - j - 1] = work[k][j - begin];
        }
        comm.broadcast(row, owner);
        for (std::size_t k = j + 1; k < q; ++k) stack.upper(j, k) = row[k - j - 1];
      }
      stack.reflectors.push_back(std::move(h.u));
    }

    if (!restarted) {
      result.stack = std::move(stack);
      result.filter.kept = std::move(active);
      return result;
    }
  }
}

/// First q rows of Q^T r, replicated. Reflectors are applied first to last.
inline std::vector<double> apply_qt(Communicator& comm, const HouseholderStack& stack, const InterfaceVector& r) {
  InterfaceVector t = r;
  for (const auto& u : stack.reflectors) t = apply_reflector(comm, u, t);

  const std::size_t q = stack.size();
  const std::size_t begin = t.global_begin();
  std::vector<double> head(q, 0.0);
  for (std::size_t i = 0; i < t.local_size(); ++i) {
    if (begin + i < q) head[begin + i] = t[i];
  }
  // Each head row has exactly one owner; the others add exact zeros.
  comm.allreduce_sum(head);
  return head;
}

/// Q [coefficients; 0], reflectors applied last to first.
inline InterfaceVector apply_q(Communicator& comm, const HouseholderStack& stack, std::span<const double> coefficients,
                               const std::shared_ptr<const PartitionLayout>& layout, RankId rank) {
  InterfaceVector t(layout, rank);
  const std::size_t begin = t.global_begin();
  for (std::size_t i = 0; i < t.local_size(); ++i) {
    if (begin + i < coefficients.size()) t[i] = coefficients[begin + i];
  }
  for (auto it = stack.reflectors.rbegin(); it != stack.reflectors.rend(); ++it) t = apply_reflector(comm, *it, t);
  return t;
}

/// Throws SingularUError when a diagonal entry is zero or lost in rounding
/// relative to the whole factor.
inline void require_nonsingular(const DenseMatrix& upper) {
  const double threshold = 64.0 * std::numeric_limits<double>::epsilon() * upper.frobenius_norm();
  for (std::size_t j = 0; j < upper.rows(); ++j) {
    const double d = std::abs(upper(j, j));
    if (d == 0.0 || d <= threshold || !std::isfinite(d)) throw SingularUError();
  }
}

/// Solves U x = rhs for upper-triangular U.
inline std::vector<double> back_substitute(const DenseMatrix& upper, std::span<const double> rhs) {
  const std::size_t q = upper.rows();
  if (upper.cols() != q || rhs.size() != q) throw Error("back_substitute: dimension mismatch");
  require_nonsingular(upper);

  std::vector<double> x(rhs.begin(), rhs.end());
  for (std::size_t j = q; j-- > 0;) {
    double s = x[j];
    for (std::size_t k = j + 1; k < q; ++k) s -= upper(j, k) * x[k];
    x[j] = s / upper(j, j);
  }
  return x;
}

/// Coefficients lambda minimising ||r + V lambda|| for the decomposed V.
/// Only the leader back-substitutes; the result is broadcast.
inline std::vector<double> solve_coefficients(Communicator& comm, const HouseholderStack& stack,
                                              const InterfaceVector& r) {
  std::vector<double> rhs = apply_qt(comm, stack, r);
  for (double& v : rhs) v = -v;

  require_nonsingular(stack.upper);  // every rank agrees before the leader solves
  const RankId leader = r.layout().leader();
  std::vector<double> lambda(stack.size(), 0.0);
  if (comm.is(leader)) lambda = back_substitute(stack.upper, rhs);
  comm.broadcast(lambda, leader);
  return lambda;
}

}  // namespace ciqn
