#include <cstdlib>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ciqn/harness.hpp"

namespace ciqn {
namespace {

SweepSpec small_linear_sweep() {
  SweepSpec spec;
  spec.problem.id = "linear";
  spec.problem.size = 4;
  spec.histories = {0};
  spec.ranking = {5};
  spec.epsilon = {0.0};
  spec.steps = 10;
  spec.tol = 1e-10;
  return spec;
}

TEST(Summarize, MeanAndSpreadOfThreeSteps) {
  CellStats c;
  const auto stats = summarize({13, 14, 15});
  c.mean = stats.mean;
  c.sd = stats.sd;
  EXPECT_EQ(format_cell(c), "14.00 (sd=1.00)");
}

TEST(Summarize, SingleStepHasZeroSpread) {
  const auto stats = summarize({9});
  EXPECT_EQ(stats.mean, 9.0);
  EXPECT_EQ(stats.sd, 0.0);
}

TEST(Summarize, ConstantCountsHaveZeroSpread) {
  const auto stats = summarize({7, 7, 7, 7});
  EXPECT_EQ(stats.mean, 7.0);
  EXPECT_EQ(stats.sd, 0.0);
}

TEST(FormatCell, MeanAndSpread) {
  CellStats c;
  c.mean = 14.0;
  c.sd = 1.0;
  EXPECT_EQ(format_cell(c), "14.00 (sd=1.00)");
  c.diverged = true;
  EXPECT_EQ(format_cell(c), "F");
}

TEST(RunCell, LinearProblemIsExactWithinSizePlusTwo) {
  const auto spec = small_linear_sweep();
  const auto cell = run_cell(spec, 0, 5, 0.0);
  EXPECT_FALSE(cell.diverged);
  EXPECT_EQ(cell.steps_run, 10);
  EXPECT_LE(cell.mean, 6.0);
  EXPECT_GE(cell.sd, 0.0);
}

TEST(RunCell, CiqnBeatsAitkenOnPiston) {
  SweepSpec spec;
  spec.problem.id = "piston";
  spec.problem.size = 64;
  spec.problem.mass_ratio = 5.0;
  spec.histories = {2};
  spec.ranking = {5};
  spec.epsilon = {1e-9};
  spec.steps = 20;
  const auto cmp = compare_accelerators(spec);
  ASSERT_FALSE(cmp.ciqn.diverged);
  ASSERT_FALSE(cmp.aitken.diverged);
  EXPECT_LT(cmp.ciqn.mean, cmp.aitken.mean);
  EXPECT_GT(cmp.speed_ratio, 1.0);
  EXPECT_NE(render_comparison(spec, cmp).find("speed ratio (aitken/ciqn): "), std::string::npos);
}

TEST(RunCell, PicardOnPistonRendersF) {
  SweepSpec spec;
  spec.problem.id = "piston";
  spec.problem.size = 8;
  spec.accelerator = AcceleratorKind::picard;
  spec.histories = {0};
  spec.ranking = {5};
  spec.epsilon = {0.0};
  spec.steps = 5;
  const auto grid = run_sweep(spec);
  ASSERT_EQ(grid.cells.size(), 1u);
  EXPECT_TRUE(grid.cells[0].diverged);
  EXPECT_EQ(grid.cells[0].steps_run, 1);
  const std::string table = render_table(grid);
  EXPECT_NE(table.find("\n0          5          F\n"), std::string::npos) << table;
  EXPECT_NE(render_csv(grid).find(",1,0\n"), std::string::npos);
}

TEST(RunSweep, CsvIsReproducible) {
  auto spec = small_linear_sweep();
  spec.problem.size = 8;
  spec.histories = {0, 2};
  spec.ranking = {2, 4};
  spec.epsilon = {0.0, 1e-3};
  spec.ranks = 2;
  const auto first = render_csv(run_sweep(spec));
  const auto second = render_csv(run_sweep(spec));
  EXPECT_EQ(first, second);
  EXPECT_EQ(first.rfind(csv_header(), 0), 0u);
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 9);
}

TEST(RunSweep, SubGridRerunMatchesFullGrid) {
  auto spec = small_linear_sweep();
  spec.problem.size = 6;
  spec.histories = {0, 1};
  spec.ranking = {3};
  spec.epsilon = {0.0, 1e-5};
  const auto full = run_sweep(spec);

  auto sub = spec;
  sub.histories = {1};
  sub.epsilon = {1e-5};
  const auto part = run_sweep(sub);
  ASSERT_EQ(part.cells.size(), 1u);
  EXPECT_EQ(csv_row(part.cells[0]), csv_row(full.cells.back()));
}

TEST(RunSweep, ReportsEachCellAsItFinishes) {
  auto spec = small_linear_sweep();
  spec.epsilon = {0.0, 1e-7, 1e-3};
  std::vector<double> seen;
  run_sweep(spec, [&](const CellStats& c) { seen.push_back(c.epsilon); });
  EXPECT_EQ(seen, spec.epsilon);
}

TEST(RenderTable, PartialGridShowsPlaceholders) {
  SweepSpec spec;
  spec.problem.id = "linear";
  spec.histories = {0, 1};
  spec.ranking = {5};
  spec.epsilon = {0.0, 0.1};
  SweepGrid grid{spec, {}};
  CellStats c;
  c.ranking = 5;
  c.mean = 3.5;
  c.sd = 0.5;
  grid.cells.push_back(c);
  const std::string expected =
      "problem=linear accel=ciqn relax_on=displacement steps=50 ranks=1\n"
      "histories  ranking    eps=0             eps=0.1\n"
      "0          5          3.50 (sd=0.50)    -\n"
      "1          5          -                 -\n";
  EXPECT_EQ(render_table(grid), expected);
}

TEST(SweepSpec, Validation) {
  auto rejects = [](auto mutate) {
    SweepSpec s;
    mutate(s);
    EXPECT_THROW(s.validate(), Error);
  };
  EXPECT_NO_THROW(SweepSpec{}.validate());
  rejects([](SweepSpec& s) { s.histories.clear(); });
  rejects([](SweepSpec& s) { s.steps = 0; });
  rejects([](SweepSpec& s) { s.ranks = 0; });
  rejects([](SweepSpec& s) {
    s.ranks = 2;
    s.partition = {8};
  });
}

TEST(SweepSpec, ExplicitPartitionIsUsed) {
  SweepSpec spec;
  spec.ranks = 3;
  spec.partition = {1, 5, 2};
  EXPECT_EQ(spec.layout(8).counts(), (std::vector<std::size_t>{1, 5, 2}));
  spec.partition.clear();
  EXPECT_EQ(spec.layout(8).counts(), (std::vector<std::size_t>{3, 3, 2}));
}

TEST(MakeProblem, KnownIdentifiers) {
  ProblemSpec p;
  p.id = "two-interface";
  p.size = 9;
  EXPECT_EQ(make_problem(p)->size(), 9u);
  p.id = "piston";
  EXPECT_EQ(make_problem(p)->name(), "piston");
  p.id = "membrane";
  EXPECT_THROW(make_problem(p), Error);
}

TEST(Parsing, AcceleratorAndField) {
  EXPECT_EQ(parse_accelerator("aitken"), AcceleratorKind::aitken);
  EXPECT_EQ(parse_relax_on("force"), RelaxOn::force);
  EXPECT_THROW(parse_accelerator("anderson"), Error);
  EXPECT_THROW(parse_relax_on("pressure"), Error);
}

TEST(Seed, EnvironmentOverride) {
  ::unsetenv(kSeedVariable);
  EXPECT_EQ(seed_from_environment(), kDefaultSeed);
  ::setenv(kSeedVariable, "42", 1);
  EXPECT_EQ(seed_from_environment(), 42u);
  ::setenv(kSeedVariable, "4x", 1);
  EXPECT_THROW(seed_from_environment(), Error);
  ::unsetenv(kSeedVariable);
}

}  // namespace
}  // namespace ciqn
