#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "ciqn/coupler.hpp"
#include "ciqn/errors.hpp"
#include "ciqn/interface_vector.hpp"
#include "ciqn/layout.hpp"
#include "ciqn/model_problems.hpp"
#include "ciqn/runtime.hpp"

namespace ciqn {

struct SimulationResult {
  std::vector<IterationRecord> records;
  std::vector<double> final_state;  ///< global ordering
  bool diverged = false;
};

/// Runs `steps` time steps of `problem` on the ranks described by `layout`.
/// Each step starts from the previous step's last iterate; the run stops at
/// the first diverged step. Throws if ranks disagree on any record.
inline SimulationResult simulate(const CoupledProblem& problem, AcceleratorKind kind, const CouplerConfig& config,
                                 const PartitionLayout& layout, int steps) {
  if (steps < 1) throw Error("need at least one time step");
  if (layout.size() != problem.size()) throw LayoutError("layout size does not match problem size");
  config.validate();

  auto shared = std::make_shared<const PartitionLayout>(layout);
  std::vector<SimulationResult> per_rank(static_cast<std::size_t>(layout.ranks()));

  run_ranks(layout.ranks(), [&](Communicator& comm) {
    DistributedSolver solver(problem, config.relax_on);
    auto accelerator = make_accelerator(kind, comm, config);
    InterfaceVector x = InterfaceVector::from_global(shared, comm.rank(), problem.initial_state(config.relax_on));

    SimulationResult& out = per_rank[static_cast<std::size_t>(comm.rank().value)];
    for (int t = 0; t < steps; ++t) {
      IterationRecord record = run_time_step(comm, solver, *accelerator, t, x);
      out.records.push_back(record);
      if (record.diverged) {
        out.diverged = true;
        break;
      }
    }
    out.final_state = gather_global(comm, x);
  });

  for (const auto& r : per_rank) {
    if (r.records != per_rank.front().records) throw Error("ranks disagree on iteration records");
  }
  return std::move(per_rank.front());
}

}  // namespace ciqn
