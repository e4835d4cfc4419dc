#pragma once

// Message-passing abstraction over P ranks plus an in-process backend that
// simulates them with one thread per rank.

#include <algorithm>
#include <compare>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ciqn/errors.hpp"

namespace ciqn {

struct RankId {
  int value = 0;

  friend auto operator<=>(RankId, RankId) = default;
};

/// Collective operations every distributed kernel is written against.
///
/// All ranks of a communicator must issue the same sequence of collectives.
/// Reductions accumulate contributions in rank order 0..P-1, so results are
/// bit-reproducible for a fixed P.
class Communicator {
 public:
  virtual ~Communicator() = default;

  virtual RankId rank() const = 0;
  virtual int size() const = 0;

  /// Element-wise sum over ranks, in place. Every rank receives the same values.
  virtual void allreduce_sum(std::span<double> values) = 0;

  /// Copies `values` from `root` into every rank's buffer.
  virtual void broadcast(std::span<double> values, RankId root) = 0;

  /// Concatenation of every rank's contribution in rank order.
  virtual std::vector<double> allgather(std::span<const double> local) = 0;

  /// Number of collectives this rank has entered.
  virtual std::uint64_t collective_count() const = 0;

  double allreduce_sum(double local) {
    allreduce_sum(std::span<double>(&local, 1));
    return local;
  }

  bool is(RankId r) const { return rank() == r; }
};

namespace detail {

enum class CollectiveKind { allreduce, broadcast, allgather };

inline const char* to_string(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::allreduce: return "allreduce";
    case CollectiveKind::broadcast: return "broadcast";
    case CollectiveKind::allgather: return "allgather";
  }
  return "?";
}

// Rendezvous shared by the simulated ranks. The last rank to arrive at a
// collective validates the call signatures, computes the result and releases
// the others.
class Rendezvous {
 public:
  explicit Rendezvous(int size) : size_(size), slots_(static_cast<std::size_t>(size)) {}

  std::vector<double> enter(int rank, CollectiveKind kind, int root, std::span<const double> data) {
    std::unique_lock lock(mutex_);
    if (!failure_.empty()) throw CollectiveError(failure_);

    auto& slot = slots_[static_cast<std::size_t>(rank)];
    slot.kind = kind;
    slot.root = root;
    slot.data.assign(data.begin(), data.end());

    const std::uint64_t generation = generation_;
    if (++arrived_ == size_) {
      complete();
    } else {
      check_deadlock();
      cv_.wait(lock, [&] { return generation_ != generation || !failure_.empty(); });
    }
    if (generation_ == generation) throw CollectiveError(failure_);
    return result_;
  }

  // Called once per rank when its program returns or throws.
  void leave() {
    std::lock_guard lock(mutex_);
    ++exited_;
    check_deadlock();
  }

 private:
  struct Slot {
    CollectiveKind kind = CollectiveKind::allreduce;
    int root = 0;
    std::vector<double> data;
  };

  void fail(std::string message) {
    failure_ = std::move(message);
    cv_.notify_all();
  }

  void check_deadlock() {
    if (failure_.empty() && arrived_ > 0 && exited_ > 0 && arrived_ + exited_ == size_) {
      fail("collective deadlock: " + std::to_string(exited_) +
           " rank(s) finished while others wait in a collective");
    }
  }

  void complete() {
    const Slot& first = slots_.front();
    for (int r = 1; r < size_; ++r) {
      const Slot& s = slots_[static_cast<std::size_t>(r)];
      if (s.kind != first.kind) {
        return fail(std::string("collective mismatch: rank 0 called ") + to_string(first.kind) +
                    ", rank " + std::to_string(r) + " called " + to_string(s.kind));
      }
      if (s.kind != CollectiveKind::allgather && s.data.size() != first.data.size()) {
        return fail("collective mismatch: buffer sizes differ between ranks");
      }
      if (s.kind == CollectiveKind::broadcast && s.root != first.root) {
        return fail("collective mismatch: broadcast roots differ between ranks");
      }
    }

    switch (first.kind) {
      case CollectiveKind::allreduce:
        result_ = first.data;
        for (int r = 1; r < size_; ++r) {
          const auto& d = slots_[static_cast<std::size_t>(r)].data;
          for (std::size_t i = 0; i < result_.size(); ++i) result_[i] += d[i];
        }
        break;
      case CollectiveKind::broadcast:
        result_ = slots_[static_cast<std::size_t>(first.root)].data;
        break;
      case CollectiveKind::allgather:
        result_.clear();
        for (const auto& s : slots_) result_.insert(result_.end(), s.data.begin(), s.data.end());
        break;
    }
    arrived_ = 0;
    ++generation_;
    cv_.notify_all();
  }

  const int size_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<Slot> slots_;
  std::vector<double> result_;
  int arrived_ = 0;
  int exited_ = 0;
  std::uint64_t generation_ = 0;
  std::string failure_;
};

}  // namespace detail

class SimulatedCommunicator final : public Communicator {
 public:
  SimulatedCommunicator(detail::Rendezvous& rendezvous, int rank, int size)
      : rendezvous_(&rendezvous), rank_(rank), size_(size) {}

  RankId rank() const override { return RankId{rank_}; }
  int size() const override { return size_; }

  void allreduce_sum(std::span<double> values) override {
    auto out = enter(detail::CollectiveKind::allreduce, 0, values);
    std::copy(out.begin(), out.end(), values.begin());
  }

  void broadcast(std::span<double> values, RankId root) override {
    if (root.value < 0 || root.value >= size_) {
      throw CollectiveError("broadcast root " + std::to_string(root.value) + " out of range");
    }
    auto out = enter(detail::CollectiveKind::broadcast, root.value, values);
    std::copy(out.begin(), out.end(), values.begin());
  }

  std::vector<double> allgather(std::span<const double> local) override {
    return enter(detail::CollectiveKind::allgather, 0, local);
  }

  std::uint64_t collective_count() const override { return count_; }

  using Communicator::allreduce_sum;

 private:
  std::vector<double> enter(detail::CollectiveKind kind, int root, std::span<const double> data) {
    ++count_;
    return rendezvous_->enter(rank_, kind, root, data);
  }

  detail::Rendezvous* rendezvous_;
  int rank_;
  int size_;
  std::uint64_t count_ = 0;
};

/// Runs `program(comm)` once per simulated rank, each on its own thread
/// (P = 1 runs inline). Rethrows the lowest-rank failure, preferring an
/// application error over the collective errors it caused on other ranks.
inline void run_ranks(int size, const std::function<void(Communicator&)>& program) {
  if (size < 1) throw CollectiveError("rank count must be at least 1");

  detail::Rendezvous rendezvous(size);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(size));
  std::vector<bool> collective_failure(static_cast<std::size_t>(size), false);

  auto body = [&](int r) {
    SimulatedCommunicator comm(rendezvous, r, size);
    try {
      program(comm);
    } catch (const CollectiveError&) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
      collective_failure[static_cast<std::size_t>(r)] = true;
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
    rendezvous.leave();
  };

  if (size == 1) {
    body(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(size));
    for (int r = 0; r < size; ++r) threads.emplace_back(body, r);
  }

  for (std::size_t r = 0; r < errors.size(); ++r) {
    if (errors[r] && !collective_failure[r]) std::rethrow_exception(errors[r]);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ciqn
