#pragma once

// Parameter sweeps over histories x ranking x epsilon with per-cell
// iteration statistics, rendered as a fixed-width table and as CSV.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ciqn/coupler.hpp"
#include "ciqn/errors.hpp"
#include "ciqn/layout.hpp"
#include "ciqn/model_problems.hpp"
#include "ciqn/simulation.hpp"

namespace ciqn {

inline constexpr std::uint64_t kDefaultSeed = 20190612;
inline constexpr const char* kSeedVariable = "CIQN_SEED";

/// Seed for random problem instances, from CIQN_SEED when set.
inline std::uint64_t seed_from_environment(std::uint64_t fallback = kDefaultSeed) {
  const char* value = std::getenv(kSeedVariable);
  if (value == nullptr || *value == '\0') return fallback;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(value, &end, 10);
  if (end == nullptr || *end != '\0') throw Error(std::string(kSeedVariable) + " is not an unsigned integer");
  return parsed;
}

struct ProblemSpec {
  std::string id = "linear";  ///< linear | piston | two-interface
  std::size_t size = 8;       ///< interface rows (two-interface: total, a third on interface b)
  double contraction = 0.5;   ///< linear and two-interface operator norm
  double mass_ratio = 5.0;    ///< piston
  double coupling = 0.3;      ///< two-interface cross coupling
  std::uint64_t seed = kDefaultSeed;
};

inline std::unique_ptr<CoupledProblem> make_problem(const ProblemSpec& spec) {
  if (spec.size == 0) throw Error("problem size must be positive");
  if (spec.id == "linear") {
    return std::make_unique<LinearFixedPoint>(LinearFixedPoint::random(spec.size, spec.contraction, spec.seed));
  }
  if (spec.id == "piston") {
    AddedMassPiston::Parameters p;
    p.size = spec.size;
    p.mass_ratio = spec.mass_ratio;
    return std::make_unique<AddedMassPiston>(p);
  }
  if (spec.id == "two-interface") {
    if (spec.size < 2) throw Error("two-interface problem needs at least two rows");
    TwoInterfaceBlock::Parameters p;
    p.size_b = std::max<std::size_t>(1, spec.size / 3);
    p.size_a = spec.size - p.size_b;
    p.contraction = spec.contraction;
    p.coupling = spec.coupling;
    p.seed = spec.seed;
    return std::make_unique<TwoInterfaceBlock>(p);
  }
  throw Error("unknown problem '" + spec.id + "' (expected linear, piston or two-interface)");
}

inline const char* to_string(AcceleratorKind k) {
  switch (k) {
    case AcceleratorKind::ciqn: return "ciqn";
    case AcceleratorKind::aitken: return "aitken";
    case AcceleratorKind::picard: return "picard";
  }
  return "?";
}

inline const char* to_string(RelaxOn r) { return r == RelaxOn::displacement ? "displacement" : "force"; }

inline AcceleratorKind parse_accelerator(const std::string& s) {
  if (s == "ciqn") return AcceleratorKind::ciqn;
  if (s == "aitken") return AcceleratorKind::aitken;
  if (s == "picard") return AcceleratorKind::picard;
  throw Error("unknown accelerator '" + s + "'");
}

inline RelaxOn parse_relax_on(const std::string& s) {
  if (s == "displacement") return RelaxOn::displacement;
  if (s == "force") return RelaxOn::force;
  throw Error("unknown relax-on field '" + s + "'");
}

struct SweepSpec {
  std::vector<int> histories{0, 1, 2, 5, 10};
  std::vector<int> ranking{5, 10};
  std::vector<double> epsilon{0.0, 1e-9, 1e-7, 1e-5, 1e-3, 0.1};
  ProblemSpec problem;
  AcceleratorKind accelerator = AcceleratorKind::ciqn;
  RelaxOn relax_on = RelaxOn::displacement;
  int steps = 50;
  int ranks = 1;
  std::vector<std::size_t> partition;  ///< explicit per-rank row counts; empty = balanced
  double tol = 1e-6;
  double omega0 = 0.1;
  int max_iters = 100;
  std::string output;  ///< path prefix for .csv / .txt; empty = none

  void validate() const {
    if (histories.empty() || ranking.empty() || epsilon.empty()) throw Error("sweep axes must be non-empty");
    if (steps < 1) throw Error("steps must be >= 1");
    if (ranks < 1) throw Error("ranks must be >= 1");
    if (!partition.empty() && partition.size() != static_cast<std::size_t>(ranks)) {
      throw Error("partition must list one row count per rank");
    }
  }

  PartitionLayout layout(std::size_t size) const {
    if (partition.empty()) return PartitionLayout::balanced(size, ranks);
    PartitionLayout l(partition);
    if (l.size() != size) throw LayoutError("partition row counts do not sum to the problem size");
    return l;
  }

  CouplerConfig config(int h, int k, double eps) const {
    CouplerConfig c;
    c.histories = h;
    c.ranking = k;
    c.epsilon = eps;
    c.omega0 = omega0;
    c.tol = tol;
    c.max_iters = max_iters;
    c.relax_on = relax_on;
    return c;
  }
};

struct IterationStats {
  double mean = 0.0;
  double sd = 0.0;  ///< sample (divide by N - 1); 0 for a single step
};

inline IterationStats summarize(const std::vector<int>& iterations) {
  if (iterations.empty()) return {};
  const double n = static_cast<double>(iterations.size());
  const double mean = std::accumulate(iterations.begin(), iterations.end(), 0.0) / n;
  if (iterations.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (int v : iterations) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

struct CellStats {
  int histories = 0;
  int ranking = 0;
  double epsilon = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  bool diverged = false;
  int steps_run = 0;
  std::size_t filtered = 0;
  std::size_t restarts = 0;
  double wall_seconds = 0.0;
};

struct SweepGrid {
  SweepSpec spec;
  std::vector<CellStats> cells;  ///< histories outermost, epsilon innermost
};

/// Runs one cell with a fresh problem instance and coupler.
inline CellStats run_cell(const SweepSpec& spec, int histories, int ranking, double epsilon) {
  const auto problem = make_problem(spec.problem);
  const auto start = std::chrono::steady_clock::now();
  const SimulationResult run = simulate(*problem, spec.accelerator, spec.config(histories, ranking, epsilon),
                                        spec.layout(problem->size()), spec.steps);

  CellStats cell;
  cell.histories = histories;
  cell.ranking = ranking;
  cell.epsilon = epsilon;
  cell.diverged = run.diverged;
  cell.steps_run = static_cast<int>(run.records.size());
  std::vector<int> iterations;
  for (const auto& r : run.records) {
    iterations.push_back(r.iterations);
    cell.filtered += r.filtered;
    cell.restarts += r.restarts;
  }
  const IterationStats stats = summarize(iterations);
  cell.mean = stats.mean;
  cell.sd = stats.sd;
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return cell;
}

inline SweepGrid run_sweep(const SweepSpec& spec, const std::function<void(const CellStats&)>& on_cell = {}) {
  spec.validate();
  SweepGrid grid{spec, {}};
  for (int h : spec.histories) {
    for (int k : spec.ranking) {
      for (double eps : spec.epsilon) {
        grid.cells.push_back(run_cell(spec, h, k, eps));
        if (on_cell) on_cell(grid.cells.back());
      }
    }
  }
  return grid;
}

namespace detail {

inline std::string printf_string(const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  return buffer;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string trim_right(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace detail

inline std::string format_epsilon(double eps) { return detail::printf_string("%g", eps); }

/// "14.00 (sd=1.00)", or "F" for a diverged cell.
inline std::string format_cell(const CellStats& c) {
  if (c.diverged) return "F";
  return detail::printf_string("%.2f", c.mean) + " (sd=" + detail::printf_string("%.2f", c.sd) + ")";
}

inline std::string csv_header() { return "histories,ranking,epsilon,mean,sd,diverged,restarts\n"; }

inline std::string csv_row(const CellStats& c) {
  std::ostringstream out;
  out << c.histories << ',' << c.ranking << ',' << format_epsilon(c.epsilon) << ','
      << detail::printf_string("%.6f", c.mean) << ',' << detail::printf_string("%.6f", c.sd) << ','
      << (c.diverged ? 1 : 0) << ',' << c.restarts << '\n';
  return out.str();
}

inline std::string render_csv(const SweepGrid& grid) {
  std::string out = csv_header();
  for (const auto& c : grid.cells) out += csv_row(c);
  return out;
}

/// Rows are histories x ranking, columns are epsilon. Missing cells of a
/// partial grid render as "-".
inline std::string render_table(const SweepGrid& grid) {
  constexpr std::size_t key_width = 11;
  constexpr std::size_t cell_width = 18;
  const auto& spec = grid.spec;

  std::string out;
  out += "problem=" + spec.problem.id + " accel=" + to_string(spec.accelerator) + " relax_on=" +
         to_string(spec.relax_on) + " steps=" + std::to_string(spec.steps) + " ranks=" + std::to_string(spec.ranks) +
         "\n";
  std::string header = detail::pad("histories", key_width) + detail::pad("ranking", key_width);
  for (double eps : spec.epsilon) header += detail::pad("eps=" + format_epsilon(eps), cell_width);
  out += detail::trim_right(std::move(header)) + '\n';

  std::size_t next = 0;
  for (int h : spec.histories) {
    for (int k : spec.ranking) {
      std::string line = detail::pad(std::to_string(h), key_width) + detail::pad(std::to_string(k), key_width);
      for (double eps : spec.epsilon) {
        std::string text = "-";
        if (next < grid.cells.size() && grid.cells[next].histories == h && grid.cells[next].ranking == k &&
            grid.cells[next].epsilon == eps) {
          text = format_cell(grid.cells[next++]);
        }
        line += detail::pad(text, cell_width);
      }
      out += detail::trim_right(std::move(line)) + '\n';
    }
  }
  return out;
}

struct AcceleratorComparison {
  CellStats ciqn;
  CellStats aitken;
  double speed_ratio = 0.0;  ///< aitken mean / ciqn mean; 0 when either diverged
};

/// CIQN at the first grid point of `spec` against Aitken on the same problem.
inline AcceleratorComparison compare_accelerators(const SweepSpec& spec) {
  spec.validate();
  SweepSpec ciqn = spec;
  ciqn.accelerator = AcceleratorKind::ciqn;
  SweepSpec aitken = spec;
  aitken.accelerator = AcceleratorKind::aitken;

  AcceleratorComparison out;
  out.ciqn = run_cell(ciqn, spec.histories.front(), spec.ranking.front(), spec.epsilon.front());
  out.aitken = run_cell(aitken, spec.histories.front(), spec.ranking.front(), spec.epsilon.front());
  if (!out.ciqn.diverged && !out.aitken.diverged && out.ciqn.mean > 0.0) {
    out.speed_ratio = out.aitken.mean / out.ciqn.mean;
  }
  return out;
}

inline std::string render_comparison(const SweepSpec& spec, const AcceleratorComparison& c) {
  std::string out;
  out += "problem=" + spec.problem.id + " relax_on=" + to_string(spec.relax_on) + " steps=" +
         std::to_string(spec.steps) + " ranks=" + std::to_string(spec.ranks) + "\n";
  out += detail::pad("accelerator", 12) + "iterations\n";
  out += detail::pad("ciqn", 12) + format_cell(c.ciqn) + "  [histories=" + std::to_string(c.ciqn.histories) +
         " ranking=" + std::to_string(c.ciqn.ranking) + " eps=" + format_epsilon(c.ciqn.epsilon) + "]\n";
  out += detail::pad("aitken", 12) + format_cell(c.aitken) + "\n";
  out += "speed ratio (aitken/ciqn): " +
         (c.speed_ratio > 0.0 ? detail::printf_string("%.3f", c.speed_ratio) : std::string("n/a")) + "\n";
  return out;
}

}  // namespace ciqn
