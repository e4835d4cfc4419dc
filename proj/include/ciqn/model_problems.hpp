#pragma once

// Surrogate coupled problems. Each is a pair of field solvers exchanging an
// interface field: the "fluid" maps displacements to forces, the "solid"
// maps forces to displacements. Block Gauss-Seidel composition of the two
// gives the fixed-point map the coupler accelerates.

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ciqn/coupler.hpp"
#include "ciqn/errors.hpp"
#include "ciqn/interface_vector.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn {

/// Time-dependent pair of field solvers over p interface rows in global
/// (leader-first) ordering. Implementations are immutable and shared by every rank; each
/// call fills rows [first, first + out.size()) from the full input field.
class CoupledProblem {
 public:
  virtual ~CoupledProblem() = default;

  virtual std::string name() const = 0;
  virtual std::size_t size() const = 0;

  virtual void fluid(int time_index, std::span<const double> displacement, std::size_t first,
                     std::span<double> force) const = 0;
  virtual void solid(int time_index, std::span<const double> force, std::size_t first,
                     std::span<double> displacement) const = 0;

  /// Fixed point of the relaxed field at `time_index`.
  virtual std::vector<double> exact_solution(int /*time_index*/, RelaxOn /*relax_on*/) const {
    throw NoOracleError("no closed-form solution for " + name());
  }

  virtual std::vector<double> initial_state(RelaxOn) const { return std::vector<double>(size(), 0.0); }

  /// Full composite map in global ordering, single process.
  std::vector<double> evaluate(int time_index, std::span<const double> x, RelaxOn relax_on) const {
    std::vector<double> mid(size()), out(size());
    if (relax_on == RelaxOn::displacement) {
      fluid(time_index, x, 0, mid);
      solid(time_index, mid, 0, out);
    } else {
      solid(time_index, x, 0, mid);
      fluid(time_index, mid, 0, out);
    }
    return out;
  }
};

/// Runs a CoupledProblem's field solvers on this rank's rows. Each field
/// solve needs the full input field, gathered in global order.
class DistributedSolver final : public CompositeSolver {
 public:
  DistributedSolver(const CoupledProblem& problem, RelaxOn relax_on) : problem_(&problem), relax_on_(relax_on) {}

  InterfaceVector evaluate(Communicator& comm, int time_index, const InterfaceVector& x) override {
    if (x.global_size() != problem_->size()) throw LayoutError("interface size does not match problem");
    if (!x.all_finite()) throw Error("non-finite input to " + problem_->name());

    const std::size_t first = x.global_begin();
    InterfaceVector mid(x.shared_layout(), x.rank());
    InterfaceVector out(x.shared_layout(), x.rank());
    const std::vector<double> full_in = gather_global(comm, x);
    if (relax_on_ == RelaxOn::displacement) {
      problem_->fluid(time_index, full_in, first, mid.local());
      problem_->solid(time_index, gather_global(comm, mid), first, out.local());
    } else {
      problem_->solid(time_index, full_in, first, mid.local());
      problem_->fluid(time_index, gather_global(comm, mid), first, out.local());
    }
    return out;
  }

 private:
  const CoupledProblem* problem_;
  RelaxOn relax_on_;
};

namespace detail {

inline void multiply_rows(const Eigen::MatrixXd& m, std::span<const double> x, std::size_t first,
                          std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(first + i);
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(row, j) * x[static_cast<std::size_t>(j)];
    out[i] = s;
  }
}

inline Eigen::MatrixXd random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform(rng);
  }
  return m;
}

inline Eigen::VectorXd random_vector(std::size_t n, std::mt19937_64& rng) {
  return random_matrix(n, 1, rng).col(0);
}

/// Random matrix with spectral norm exactly `norm`.
inline Eigen::MatrixXd random_with_norm(std::size_t n, double norm, std::mt19937_64& rng) {
  Eigen::MatrixXd g = random_matrix(n, n, rng);
  const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(g).singularValues()(0);
  return (norm / s) * g;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline double spectral_radius(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// H(x) = A x + b_t with b_t = b + sin(0.5 t) drift. The solid is the
/// identity, so both relaxation choices iterate the same map.
class LinearFixedPoint : public CoupledProblem {
 public:
  LinearFixedPoint(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd drift = {})
      : a_(std::move(a)), b_(std::move(b)), drift_(drift.size() ? std::move(drift) : Eigen::VectorXd::Zero(b_.size())) {
    if (a_.rows() != a_.cols() || a_.rows() != b_.size() || drift_.size() != b_.size()) {
      throw Error("LinearFixedPoint: inconsistent dimensions");
    }
    spectral_radius_ = detail::spectral_radius(a_);
  }

  /// Random A with ||A||_2 = contraction, random b and drift.
  static LinearFixedPoint random(std::size_t p, double contraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd a = detail::random_with_norm(p, contraction, rng);
    Eigen::VectorXd b = detail::random_vector(p, rng);
    Eigen::VectorXd drift = detail::random_vector(p, rng);
    return LinearFixedPoint(std::move(a), std::move(b), std::move(drift));
  }

  std::string name() const override { return "linear"; }
  std::size_t size() const override { return static_cast<std::size_t>(b_.size()); }

  const Eigen::MatrixXd& matrix() const { return a_; }
  double spectral_radius() const { return spectral_radius_; }

  Eigen::VectorXd forcing(int time_index) const { return b_ + std::sin(0.5 * time_index) * drift_; }

  void fluid(int time_index, std::span<const double> d, std::size_t first, std::span<double> f) const override {
    detail::multiply_rows(a_, d, first, f);
    const Eigen::VectorXd b = forcing(time_index);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += b(static_cast<Eigen::Index>(first + i));
  }

  void solid(int, std::span<const double> f, std::size_t first, std::span<double> d) const override {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f[first + i];
  }

  std::vector<double> exact_solution(int time_index, RelaxOn) const override {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(a_.rows(), a_.cols()) - a_;
    return detail::to_std(m.partialPivLu().solve(forcing(time_index)));
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd drift_;
  double spectral_radius_ = 0.0;
};

/// One-degree-of-freedom-per-node added-mass surrogate.
///
///   solid:  d = f / k
///   fluid:  f = p_t - mu * k * C d,   C = (1 - kappa) I + kappa S
///
/// S averages the two ring neighbours. The displacement map is
/// d -> p_t / k - mu C d, so Picard errors are multiplied by -mu C, whose
/// spectral radius is exactly mu (C has the constant vector as eigenvector
/// with eigenvalue 1). mu > 1 makes Picard diverge.
class AddedMassPiston : public CoupledProblem {
 public:
  struct Parameters {
    std::size_t size = 64;
    double mass_ratio = 5.0;
    double stiffness = 1.0;
    double time_step = 0.01;
    double row_coupling = 0.1;  ///< kappa
    double load = 1.0;
  };

  explicit AddedMassPiston(Parameters params) : params_(params) {
    if (params_.size == 0) throw Error("AddedMassPiston: size must be positive");
    if (!(params_.mass_ratio > 0.0)) throw Error("AddedMassPiston: mass ratio must be positive");
    if (!(params_.stiffness > 0.0)) throw Error("AddedMassPiston: stiffness must be positive");
  }

  std::string name() const override { return "piston"; }
  std::size_t size() const override { return params_.size; }
  const Parameters& parameters() const { return params_; }

  /// Pressure load on row i at time_index.
  double pressure(int time_index, std::size_t i) const {
    const double t = time_index * params_.time_step;
    const double shape = 1.0 + 0.1 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / params_.size);
    return params_.load * (1.0 + std::sin(2.0 * std::numbers::pi * t)) * shape;
  }

  void fluid(int time_index, std::span<const double> d, std::size_t first, std::span<double> f) const override {
    const double mu_k = params_.mass_ratio * params_.stiffness;
    for (std::size_t i = 0; i < f.size(); ++i) {
      f[i] = pressure(time_index, first + i) - mu_k * coupled(d, first + i);
    }
  }

  void solid(int, std::span<const double> f, std::size_t first, std::span<double> d) const override {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f[first + i] / params_.stiffness;
  }

  std::vector<double> exact_solution(int time_index, RelaxOn relax_on) const override {
    const auto n = static_cast<Eigen::Index>(params_.size);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
    std::vector<double> unit(params_.size, 0.0);
    for (std::size_t j = 0; j < params_.size; ++j) {
      unit[j] = 1.0;
      for (std::size_t i = 0; i < params_.size; ++i) {
        c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = coupled(unit, i);
      }
      unit[j] = 0.0;
    }
    Eigen::VectorXd load(n);
    for (Eigen::Index i = 0; i < n; ++i) load(i) = pressure(time_index, static_cast<std::size_t>(i));

    // (I + mu C) d = p / k, f = k d.
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) + params_.mass_ratio * c;
    Eigen::VectorXd d = m.partialPivLu().solve(load / params_.stiffness);
    if (relax_on == RelaxOn::force) d *= params_.stiffness;
    return detail::to_std(d);
  }

 private:
  double coupled(std::span<const double> d, std::size_t i) const {
    const std::size_t n = params_.size;
    const double neighbours = 0.5 * (d[(i + n - 1) % n] + d[(i + 1) % n]);
    return (1.0 - params_.row_coupling) * d[i] + params_.row_coupling * neighbours;
  }

  Parameters params_;
};

/// Two interfaces stacked into one unknown [x_a; x_b]:
///   H(x) = [A_a, c K_ab; c K_ba, A_b] x + [b_a; b_b] (+ drift).
/// With c = 0 the interfaces are independent.
class TwoInterfaceBlock : public CoupledProblem {
 public:
  struct Parameters {
    std::size_t size_a = 6;
    std::size_t size_b = 4;
    double contraction = 0.5;  ///< ||A_a||_2 = ||A_b||_2
    double coupling = 0.3;     ///< c; ||K_ab||_2 = ||K_ba||_2 = 1
    std::uint64_t seed = 1;
  };

  explicit TwoInterfaceBlock(Parameters params) : params_(params) {
    std::mt19937_64 rng(params_.seed);
    a_ = LinearFixedPoint::random(params_.size_a, params_.contraction, rng());
    b_ = LinearFixedPoint::random(params_.size_b, params_.contraction, rng());
    const Eigen::MatrixXd k_ab = normalized(detail::random_matrix(params_.size_a, params_.size_b, rng));
    const Eigen::MatrixXd k_ba = normalized(detail::random_matrix(params_.size_b, params_.size_a, rng));

    const auto na = static_cast<Eigen::Index>(params_.size_a);
    const auto nb = static_cast<Eigen::Index>(params_.size_b);
    operator_ = Eigen::MatrixXd::Zero(na + nb, na + nb);
    operator_.topLeftCorner(na, na) = a_->matrix();
    operator_.bottomRightCorner(nb, nb) = b_->matrix();
    operator_.topRightCorner(na, nb) = params_.coupling * k_ab;
    operator_.bottomLeftCorner(nb, na) = params_.coupling * k_ba;
  }

  std::string name() const override { return "two-interface"; }
  std::size_t size() const override { return params_.size_a + params_.size_b; }
  const Parameters& parameters() const { return params_; }

  /// Global rows [begin, end) of interface 0 (a) or 1 (b).
  std::pair<std::size_t, std::size_t> interface_rows(int which) const {
    if (which == 0) return {0, params_.size_a};
    if (which == 1) return {params_.size_a, size()};
    throw Error("interface index must be 0 or 1");
  }

  /// Interface `which` as a single-interface problem with its own data.
  const LinearFixedPoint& interface_problem(int which) const {
    if (which == 0) return *a_;
    if (which == 1) return *b_;
    throw Error("interface index must be 0 or 1");
  }

  Eigen::VectorXd forcing(int time_index) const {
    Eigen::VectorXd f(static_cast<Eigen::Index>(size()));
    f << a_->forcing(time_index), b_->forcing(time_index);
    return f;
  }

  void fluid(int time_index, std::span<const double> d, std::size_t first, std::span<double> f) const override {
    detail::multiply_rows(operator_, d, first, f);
    const Eigen::VectorXd b = forcing(time_index);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += b(static_cast<Eigen::Index>(first + i));
  }

  void solid(int, std::span<const double> f, std::size_t first, std::span<double> d) const override {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f[first + i];
  }

  std::vector<double> exact_solution(int time_index, RelaxOn) const override {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(operator_.rows(), operator_.cols()) - operator_;
    return detail::to_std(m.partialPivLu().solve(forcing(time_index)));
  }

 private:
  static Eigen::MatrixXd normalized(Eigen::MatrixXd m) {
    return m / Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
  }

  Parameters params_;
  std::optional<LinearFixedPoint> a_;
  std::optional<LinearFixedPoint> b_;
  Eigen::MatrixXd operator_;
};

/// One interface of a TwoInterfaceBlock evaluated through the block operator
/// with the other interface held at zero. Only meaningful when the block has
/// no cross-coupling; otherwise construction fails.
class InterfaceView : public CoupledProblem {
 public:
  InterfaceView(const TwoInterfaceBlock& block, int which) : block_(&block), which_(which) {
    if (block.parameters().coupling != 0.0) throw Error("interfaces are cross-coupled; a single view is not closed");
    rows_ = block.interface_rows(which);
  }

  std::string name() const override { return block_->name() + (which_ == 0 ? "[a]" : "[b]"); }
  std::size_t size() const override { return rows_.second - rows_.first; }

  void fluid(int time_index, std::span<const double> d, std::size_t first, std::span<double> f) const override {
    std::vector<double> stacked(block_->size(), 0.0);
    std::copy(d.begin(), d.end(), stacked.begin() + static_cast<std::ptrdiff_t>(rows_.first));
    block_->fluid(time_index, stacked, rows_.first + first, f);
  }

  void solid(int time_index, std::span<const double> f, std::size_t first, std::span<double> d) const override {
    block_->interface_problem(which_).solid(time_index, f, first, d);
  }

  std::vector<double> exact_solution(int time_index, RelaxOn relax_on) const override {
    return block_->interface_problem(which_).exact_solution(time_index, relax_on);
  }

 private:
  const TwoInterfaceBlock* block_;
  int which_;
  std::pair<std::size_t, std::size_t> rows_;
};

}  // namespace ciqn
