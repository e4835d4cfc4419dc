#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "ciqn/model_problems.hpp"
#include "ciqn/simulation.hpp"
#include "test_support.hpp"

namespace ciqn {
namespace {

using testing::LayoutPtr;
using testing::with_ranks;

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

TEST(LinearFixedPoint, ZeroMatrixReturnsForcing) {
  const LinearFixedPoint problem(Eigen::MatrixXd::Zero(3, 3), Eigen::Vector3d(1.0, -2.0, 0.5));
  for (const std::vector<double>& x : {std::vector<double>{0, 0, 0}, std::vector<double>{9, -4, 7}}) {
    EXPECT_EQ(problem.evaluate(0, x, RelaxOn::displacement), (std::vector<double>{1.0, -2.0, 0.5}));
  }
}

TEST(LinearFixedPoint, GeometricSeriesSolution) {
  const LinearFixedPoint problem(0.5 * Eigen::Matrix2d::Identity(), Eigen::Vector2d(1.0, 1.0));
  const auto x = problem.exact_solution(0, RelaxOn::displacement);
  EXPECT_NEAR(x[0], 2.0, 1e-15);
  EXPECT_NEAR(x[1], 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(problem.spectral_radius(), 0.5);
}

TEST(LinearFixedPoint, RandomHasRequestedNorm) {
  const auto problem = LinearFixedPoint::random(12, 0.7, 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(problem.matrix());
  EXPECT_NEAR(svd.singularValues()(0), 0.7, 1e-12);
  EXPECT_LE(problem.spectral_radius(), 0.7 + 1e-12);
}

TEST(LinearFixedPoint, RejectsInconsistentDimensions) {
  EXPECT_THROW(LinearFixedPoint(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2)), Error);
}

TEST(AddedMassPiston, PicardResidualGrowsByMassRatio) {
  AddedMassPiston problem({});
  std::vector<double> x = problem.initial_state(RelaxOn::displacement);
  std::vector<double> norms;
  for (int k = 0; k < 4; ++k) {
    const auto xt = problem.evaluate(0, x, RelaxOn::displacement);
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = xt[i] - x[i];
    norms.push_back(norm(r));
    x = xt;
  }
  for (std::size_t k = 1; k < norms.size(); ++k) EXPECT_NEAR(norms[k] / norms[k - 1], 5.0, 0.05) << k;
}

TEST(AddedMassPiston, ForceRelaxationAmplifiesTheSame) {
  AddedMassPiston problem({});
  std::vector<double> x(problem.size(), 0.0);
  const auto x1 = problem.evaluate(3, x, RelaxOn::force);
  const auto x2 = problem.evaluate(3, x1, RelaxOn::force);
  std::vector<double> r0 = x1, r1(x.size());
  for (std::size_t i = 0; i < r1.size(); ++i) r1[i] = x2[i] - x1[i];
  EXPECT_NEAR(norm(r1) / norm(r0), 5.0, 0.05);
}

TEST(AddedMassPiston, RejectsNonPositiveParameters) {
  AddedMassPiston::Parameters p;
  p.mass_ratio = 0.0;
  EXPECT_THROW(AddedMassPiston{p}, Error);
  p = {};
  p.size = 0;
  EXPECT_THROW(AddedMassPiston{p}, Error);
}

class ExactSolutionIsFixedPoint : public ::testing::TestWithParam<RelaxOn> {};

TEST_P(ExactSolutionIsFixedPoint, AllProblems) {
  const RelaxOn relax = GetParam();
  AddedMassPiston::Parameters pp;
  pp.size = 16;
  TwoInterfaceBlock::Parameters tp;
  std::vector<std::unique_ptr<CoupledProblem>> problems;
  problems.push_back(std::make_unique<LinearFixedPoint>(LinearFixedPoint::random(7, 0.9, 1)));
  problems.push_back(std::make_unique<AddedMassPiston>(pp));
  problems.push_back(std::make_unique<TwoInterfaceBlock>(tp));
  for (const auto& problem : problems) {
    for (int t : {0, 5, 17}) {
      const auto x = problem->exact_solution(t, relax);
      EXPECT_LE(max_abs_diff(problem->evaluate(t, x, relax), x), 1e-12 * (1.0 + norm(x)))
          << problem->name() << " t=" << t;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(BothFields, ExactSolutionIsFixedPoint,
                         ::testing::Values(RelaxOn::displacement, RelaxOn::force));

TEST(TwoInterfaceBlock, RowsAndSubproblems) {
  TwoInterfaceBlock block({});
  EXPECT_EQ(block.size(), 10u);
  EXPECT_EQ(block.interface_rows(0), (std::pair<std::size_t, std::size_t>{0, 6}));
  EXPECT_EQ(block.interface_rows(1), (std::pair<std::size_t, std::size_t>{6, 10}));
  EXPECT_THROW(block.interface_rows(2), Error);
  EXPECT_EQ(block.interface_problem(0).size(), 6u);
  EXPECT_EQ(block.interface_problem(1).size(), 4u);
}

TEST(TwoInterfaceBlock, CrossCouplingActsOnlyOffDiagonal) {
  TwoInterfaceBlock::Parameters p;
  p.coupling = 0.0;
  TwoInterfaceBlock uncoupled(p);
  p.coupling = 0.3;
  TwoInterfaceBlock coupled(p);
  std::mt19937_64 rng(8);
  const auto x = testing::random_vector(10, rng);
  // With x_b = 0 the top half sees no cross term.
  std::vector<double> only_a = x;
  std::fill(only_a.begin() + 6, only_a.end(), 0.0);
  const auto lhs = coupled.evaluate(2, only_a, RelaxOn::displacement);
  const auto rhs = uncoupled.evaluate(2, only_a, RelaxOn::displacement);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(lhs[i], rhs[i]);
  EXPECT_GT(max_abs_diff(coupled.evaluate(2, x, RelaxOn::displacement), uncoupled.evaluate(2, x, RelaxOn::displacement)),
            1e-3);
}

TEST(InterfaceView, MatchesStandaloneProblemWhenUncoupled) {
  TwoInterfaceBlock::Parameters p;
  p.coupling = 0.0;
  TwoInterfaceBlock block(p);
  std::mt19937_64 rng(21);
  for (int which : {0, 1}) {
    const InterfaceView view(block, which);
    const auto& standalone = block.interface_problem(which);
    const auto x = testing::random_vector(view.size(), rng);
    EXPECT_EQ(view.evaluate(4, x, RelaxOn::displacement), standalone.evaluate(4, x, RelaxOn::displacement));
    EXPECT_LE(max_abs_diff(view.exact_solution(4, RelaxOn::displacement),
                           standalone.exact_solution(4, RelaxOn::displacement)),
              1e-13);
  }
  p.coupling = 0.1;
  TwoInterfaceBlock linked(p);
  EXPECT_THROW(InterfaceView(linked, 0), Error);
}

struct NoOracleProblem final : CoupledProblem {
  std::string name() const override { return "opaque"; }
  std::size_t size() const override { return 1; }
  void fluid(int, std::span<const double> d, std::size_t first, std::span<double> f) const override {
    f[0] = std::sin(d[first]);
  }
  void solid(int, std::span<const double> f, std::size_t first, std::span<double> d) const override {
    d[0] = f[first];
  }
};

TEST(CoupledProblem, MissingOracleIsReported) {
  EXPECT_THROW(NoOracleProblem{}.exact_solution(0, RelaxOn::displacement), NoOracleError);
}

TEST(DistributedSolver, MatchesSingleProcessEvaluation) {
  AddedMassPiston::Parameters pp;
  pp.size = 13;
  const AddedMassPiston piston(pp);
  const TwoInterfaceBlock block({});
  std::mt19937_64 rng(4);
  for (const CoupledProblem* problem : {static_cast<const CoupledProblem*>(&piston),
                                        static_cast<const CoupledProblem*>(&block)}) {
    const auto x = testing::random_vector(problem->size(), rng);
    const std::size_t n = problem->size();
    for (RelaxOn relax : {RelaxOn::displacement, RelaxOn::force}) {
      const auto expected = problem->evaluate(7, x, relax);
      with_ranks(PartitionLayout({n / 3, n - n / 3 - 1, 1}), [&](Communicator& comm, const LayoutPtr& layout) {
        DistributedSolver solver(*problem, relax);
        const auto out = solver.evaluate(comm, 7, testing::distribute(layout, comm.rank(), x));
        EXPECT_EQ(gather_global(comm, out), expected);
      });
    }
  }
}

TEST(DistributedSolver, RejectsNonFiniteInput) {
  const auto problem = LinearFixedPoint::random(2, 0.5, 1);
  with_ranks(PartitionLayout({2}), [&](Communicator& comm, const LayoutPtr& layout) {
    DistributedSolver solver(problem, RelaxOn::displacement);
    EXPECT_THROW(solver.evaluate(comm, 0, testing::distribute(layout, comm.rank(), {1.0, NAN})), Error);
  });
}

TEST(DistributedSolver, RejectsWrongSize) {
  const auto problem = LinearFixedPoint::random(3, 0.5, 1);
  with_ranks(PartitionLayout({2}), [&](Communicator& comm, const LayoutPtr& layout) {
    DistributedSolver solver(problem, RelaxOn::displacement);
    EXPECT_THROW(solver.evaluate(comm, 0, testing::distribute(layout, comm.rank(), {1.0, 2.0})), LayoutError);
  });
}

TEST(Simulation, ConvergedLinearSolutionMatchesOracle) {
  const auto problem = LinearFixedPoint::random(8, 0.6, 12);
  CouplerConfig config;
  config.ranking = 8;
  config.tol = 1e-8;
  const auto result = simulate(problem, AcceleratorKind::ciqn, config, PartitionLayout({8}), 4);
  ASSERT_FALSE(result.diverged);
  const auto exact = problem.exact_solution(3, RelaxOn::displacement);
  EXPECT_LE(max_abs_diff(result.final_state, exact), 10 * config.tol * (1.0 + norm(exact)));
}

TEST(Simulation, PistonPicardDivergesWhileAcceleratorsConverge) {
  AddedMassPiston::Parameters pp;
  pp.size = 16;
  const AddedMassPiston problem(pp);
  CouplerConfig config;
  config.histories = 2;
  config.epsilon = 1e-9;
  const PartitionLayout layout({16});
  EXPECT_TRUE(simulate(problem, AcceleratorKind::picard, config, layout, 3).diverged);
  EXPECT_FALSE(simulate(problem, AcceleratorKind::aitken, config, layout, 3).diverged);
  EXPECT_FALSE(simulate(problem, AcceleratorKind::ciqn, config, layout, 3).diverged);
}

TEST(Simulation, RejectsLayoutOfWrongSize) {
  const auto problem = LinearFixedPoint::random(4, 0.5, 1);
  EXPECT_THROW(simulate(problem, AcceleratorKind::ciqn, CouplerConfig{}, PartitionLayout({3}), 1), LayoutError);
}

}  // namespace
}  // namespace ciqn
