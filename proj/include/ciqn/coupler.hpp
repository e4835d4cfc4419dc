#pragma once

// Coupling-iteration accelerators for the interface fixed point x = H(x):
// compact interface quasi-Newton (multi-secant least squares with history
// reuse and QR filtering), Aitken dynamic relaxation, and plain Picard.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ciqn/compact_qr.hpp"
#include "ciqn/errors.hpp"
#include "ciqn/interface_vector.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn {

enum class AcceleratorKind { ciqn, aitken, picard };

/// Which exchanged field the accelerator iterates on.
enum class RelaxOn { displacement, force };

struct CouplerConfig {
  double epsilon = 0.0;  ///< QR filter threshold
  int histories = 0;     ///< past time steps whose increments are reused
  int ranking = 5;       ///< increment columns kept per time step
  double omega0 = 0.1;   ///< fixed relaxation when no secant information exists
  double tol = 1e-6;     ///< on ||r|| relative to the step's first residual
  int max_iters = 100;   ///< composite evaluations per time step
  RelaxOn relax_on = RelaxOn::displacement;
  FilterNorm filter_norm = FilterNorm::frobenius;

  void validate() const {
    if (!(epsilon >= 0.0)) throw Error("epsilon must be >= 0");
    if (histories < 0) throw Error("histories must be >= 0");
    if (ranking < 1) throw Error("ranking must be >= 1");
    if (!(omega0 > 0.0 && omega0 <= 1.0)) throw Error("omega0 must lie in (0, 1]");
    if (!(tol > 0.0)) throw Error("tol must be > 0");
    if (max_iters < 1) throw Error("max_iters must be >= 1");
  }
};

/// Convergence floor on the reference residual norm.
inline constexpr double kResidualFloor = 1e-30;

struct IterationRecord {
  int time_index = 0;
  int iterations = 0;  ///< composite evaluations, startup evaluation included
  bool converged = false;
  bool diverged = false;
  std::size_t filtered = 0;  ///< columns dropped by the filter, summed over the step
  std::size_t restarts = 0;
  double residual_norm = 0.0;
  std::string failure;

  friend bool operator==(const IterationRecord& a, const IterationRecord& b) {
    // Residual norms are compared separately with a tolerance.
    return a.time_index == b.time_index && a.iterations == b.iterations && a.converged == b.converged &&
           a.diverged == b.diverged && a.filtered == b.filtered && a.restarts == b.restarts &&
           a.failure == b.failure;
  }
};

/// Paired increment columns contributed by one completed time step.
struct HistoryBlock {
  std::vector<InterfaceVector> v;  ///< residual increments
  std::vector<InterfaceVector> w;  ///< solver-output increments
};

/// Ring buffer of the most recent completed time steps, newest first.
class HistoryStore {
 public:
  explicit HistoryStore(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }

  void push(HistoryBlock block) {
    if (block.v.size() != block.w.size()) throw Error("history block columns are not paired");
    if (capacity_ == 0) return;
    blocks_.push_front(std::move(block));
    while (blocks_.size() > capacity_) blocks_.pop_back();
  }

  void clear() { blocks_.clear(); }

  std::size_t size() const { return blocks_.size(); }
  const HistoryBlock& block(std::size_t i) const { return blocks_.at(i); }
  HistoryBlock& block(std::size_t i) { return blocks_.at(i); }

  std::size_t column_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.v.size();
    return n;
  }

 private:
  std::size_t capacity_;
  std::deque<HistoryBlock> blocks_;
};

/// Common coupling-iteration state: current iterate, last solver output and
/// residual, and convergence bookkeeping for the running time step.
class Accelerator {
 public:
  Accelerator(Communicator& comm, CouplerConfig config) : comm_(&comm), config_(config) { config_.validate(); }
  virtual ~Accelerator() = default;

  Accelerator(const Accelerator&) = delete;
  Accelerator& operator=(const Accelerator&) = delete;

  virtual AcceleratorKind kind() const = 0;

  virtual void begin_time_step(int time_index, const InterfaceVector& x_initial) {
    time_index_ = time_index;
    iteration_ = 0;
    x_ = x_initial;
    x_tilde_.reset();
    residual_.reset();
    initial_norm_ = 0.0;
    residual_norm_ = 0.0;
    filtered_ = 0;
    restarts_ = 0;
  }

  /// Takes x~ = H(x) for the current iterate and forms r = x~ - x.
  void observe(const InterfaceVector& x_tilde) {
    if (!x_) throw Error("observe before begin_time_step");
    detail::require_same_layout(*x_, x_tilde);
    before_observe();
    x_tilde_ = x_tilde;
    residual_ = difference(x_tilde, *x_);
    residual_norm_ = norm2(*comm_, *residual_);
    if (iteration_ == 0) initial_norm_ = residual_norm_;
    ++iteration_;
  }

  bool diverged() const { return residual_ && !std::isfinite(residual_norm_); }

  bool check_convergence() const {
    if (!residual_ || diverged()) return false;
    return residual_norm_ <= config_.tol * std::max(initial_norm_, kResidualFloor);
  }

  /// Next iterate from the last observation; becomes the current iterate.
  InterfaceVector next() {
    if (!residual_) throw Error("next() needs an observed solver output");
    x_ = compute_next();
    return *x_;
  }

  InterfaceVector advance(const InterfaceVector& x_tilde) {
    observe(x_tilde);
    return next();
  }

  const InterfaceVector& current() const { return *x_; }
  const InterfaceVector& residual() const { return *residual_; }
  double residual_norm() const { return residual_norm_; }
  double initial_residual_norm() const { return initial_norm_; }
  int iteration() const { return iteration_; }
  int time_index() const { return time_index_; }
  std::size_t filtered() const { return filtered_; }
  std::size_t restarts() const { return restarts_; }
  const CouplerConfig& config() const { return config_; }

 protected:
  virtual void before_observe() {}
  virtual InterfaceVector compute_next() = 0;

  InterfaceVector relaxed(double omega) const { return axpy(omega, *residual_, *x_); }

  Communicator& comm() { return *comm_; }

  Communicator* comm_;
  CouplerConfig config_;
  int time_index_ = 0;
  int iteration_ = 0;
  std::optional<InterfaceVector> x_;
  std::optional<InterfaceVector> x_tilde_;
  std::optional<InterfaceVector> residual_;
  double initial_norm_ = 0.0;
  double residual_norm_ = 0.0;
  std::size_t filtered_ = 0;
  std::size_t restarts_ = 0;
};

/// x <- H(x).
class PicardAccelerator final : public Accelerator {
 public:
  using Accelerator::Accelerator;
  AcceleratorKind kind() const override { return AcceleratorKind::picard; }

 protected:
  InterfaceVector compute_next() override { return *x_tilde_; }
};

/// Dynamic relaxation
///   omega_I = -omega_{I-1} (r_{I-1} . (r_I - r_{I-1})) / ||r_I - r_{I-1}||^2,
/// clamped to [-2, 2]; the first iteration of each step uses omega0.
class AitkenAccelerator final : public Accelerator {
 public:
  using Accelerator::Accelerator;
  AcceleratorKind kind() const override { return AcceleratorKind::aitken; }

  void begin_time_step(int time_index, const InterfaceVector& x_initial) override {
    Accelerator::begin_time_step(time_index, x_initial);
    previous_residual_.reset();
    omega_ = config_.omega0;
  }

  double omega() const { return omega_; }

 protected:
  InterfaceVector compute_next() override {
    if (previous_residual_) {
      const InterfaceVector delta = difference(*residual_, *previous_residual_);
      const detail::ExactSum local[2] = {detail::local_dot(*previous_residual_, delta), detail::local_dot(delta, delta)};
      const std::vector<double> parts = detail::exact_allreduce(comm(), local);
      if (parts[1] > 0.0) omega_ = std::clamp(-omega_ * parts[0] / parts[1], -2.0, 2.0);
    } else {
      omega_ = config_.omega0;
    }
    previous_residual_ = *residual_;
    return relaxed(omega_);
  }

 private:
  std::optional<InterfaceVector> previous_residual_;
  double omega_ = 0.1;
};

/// Compact interface quasi-Newton.
///
/// Within a step, columns are differences against the current iterate,
/// V = [r^{I-1} - r, ..., r^{I-k} - r], W likewise with x~, newest first and
/// at most `ranking` of them. Completed steps contribute frozen blocks built
/// the same way against their final residual. The combined V = [current |
/// history] is decomposed with filtering, lambda solves min ||r + V lambda||,
/// and the update is x~ + W lambda.
class CiqnAccelerator final : public Accelerator {
 public:
  CiqnAccelerator(Communicator& comm, CouplerConfig config)
      : Accelerator(comm, config), history_(static_cast<std::size_t>(config.histories)) {}

  AcceleratorKind kind() const override { return AcceleratorKind::ciqn; }

  void begin_time_step(int time_index, const InterfaceVector& x_initial) override {
    if (residual_ && !diverged() && !past_.empty()) history_.push(current_block());
    past_.clear();
    last_filter_.reset();
    Accelerator::begin_time_step(time_index, x_initial);
  }

  HistoryStore& history() { return history_; }
  const HistoryStore& history() const { return history_; }

  /// Filter outcome of the most recent decomposition, if any.
  const std::optional<FilterOutcome>& last_filter() const { return last_filter_; }

  /// Column count of the most recent combined V (before filtering).
  std::size_t last_column_count() const { return last_columns_; }

  /// Current-step increments against the latest residual.
  HistoryBlock current_block() const {
    HistoryBlock block;
    for (const auto& p : past_) {
      block.v.push_back(difference(p.residual, *residual_));
      block.w.push_back(difference(p.x_tilde, *x_tilde_));
    }
    return block;
  }

 protected:
  void before_observe() override {
    if (!residual_) return;
    past_.push_front({*residual_, *x_tilde_});
    while (past_.size() > static_cast<std::size_t>(config_.ranking)) past_.pop_back();
  }

  InterfaceVector compute_next() override {
    HistoryBlock combined = current_block();
    for (std::size_t b = 0; b < history_.size(); ++b) {
      const auto& block = history_.block(b);
      combined.v.insert(combined.v.end(), block.v.begin(), block.v.end());
      combined.w.insert(combined.w.end(), block.w.begin(), block.w.end());
    }
    // A p-row matrix holds at most p independent columns; the oldest go first.
    const std::size_t cap = residual_->global_size();
    if (combined.v.size() > cap) {
      combined.v.erase(combined.v.begin() + static_cast<std::ptrdiff_t>(cap), combined.v.end());
      combined.w.erase(combined.w.begin() + static_cast<std::ptrdiff_t>(cap), combined.w.end());
    }
    last_columns_ = combined.v.size();
    last_filter_.reset();

    if (combined.v.empty()) return relaxed(config_.omega0);

    std::optional<Decomposition> qr;
    try {
      qr = decompose(comm(), combined.v, FilterOptions{config_.epsilon, config_.filter_norm});
    } catch (const EmptySecantSpaceError&) {
      filtered_ += combined.v.size();
      restarts_ += combined.v.size();
      return relaxed(config_.omega0);
    }
    filtered_ += qr->filter.dropped.size();
    restarts_ += qr->filter.restarts;
    last_filter_ = qr->filter;

    const std::vector<double> lambda = solve_coefficients(comm(), qr->stack, *residual_);
    InterfaceVector next = *x_tilde_;
    for (std::size_t k = 0; k < lambda.size(); ++k) next = axpy(lambda[k], combined.w[qr->filter.kept[k]], next);
    return next;
  }

 private:
  struct PastIterate {
    InterfaceVector residual;
    InterfaceVector x_tilde;
  };

  HistoryStore history_;
  std::deque<PastIterate> past_;  // newest first
  std::optional<FilterOutcome> last_filter_;
  std::size_t last_columns_ = 0;
};

inline std::unique_ptr<Accelerator> make_accelerator(AcceleratorKind kind, Communicator& comm,
                                                     const CouplerConfig& config) {
  switch (kind) {
    case AcceleratorKind::ciqn: return std::make_unique<CiqnAccelerator>(comm, config);
    case AcceleratorKind::aitken: return std::make_unique<AitkenAccelerator>(comm, config);
    case AcceleratorKind::picard: return std::make_unique<PicardAccelerator>(comm, config);
  }
  throw Error("unknown accelerator");
}

/// x~ = H(x) for this rank's rows. Collective.
class CompositeSolver {
 public:
  virtual ~CompositeSolver() = default;
  virtual InterfaceVector evaluate(Communicator& comm, int time_index, const InterfaceVector& x) = 0;
};

/// Drives evaluate -> observe -> next from `x` until convergence, divergence
/// or max_iters. On return `x` holds the last evaluated iterate.
inline IterationRecord run_time_step(Communicator& comm, CompositeSolver& solver, Accelerator& accelerator,
                                     int time_index, InterfaceVector& x) {
  const CouplerConfig& config = accelerator.config();
  IterationRecord record;
  record.time_index = time_index;
  accelerator.begin_time_step(time_index, x);

  InterfaceVector iterate = x;
  for (;;) {
    // Finiteness must be agreed on collectively before anyone evaluates.
    const double bad = comm.allreduce_sum(iterate.all_finite() ? 0.0 : 1.0);
    if (bad > 0.0) {
      record.diverged = true;
      record.failure = "non-finite iterate";
      break;
    }
    x = iterate;
    accelerator.observe(solver.evaluate(comm, time_index, iterate));
    record.iterations = accelerator.iteration();
    record.residual_norm = accelerator.residual_norm();

    if (accelerator.diverged()) {
      record.diverged = true;
      record.failure = "non-finite residual";
      break;
    }
    if (accelerator.check_convergence()) {
      record.converged = true;
      break;
    }
    if (accelerator.iteration() >= config.max_iters) {
      record.diverged = true;
      record.failure = "max_iters reached";
      break;
    }
    try {
      iterate = accelerator.next();
    } catch (const SingularUError& e) {
      record.diverged = true;
      record.failure = e.what();
      break;
    }
  }
  record.filtered = accelerator.filtered();
  record.restarts = accelerator.restarts();
  return record;
}

}  // namespace ciqn
