// Command-line front end for parameter sweeps and accelerator comparisons.
//
//   ciqn_sweep sweep   --problem piston --histories 0,2 --ranking 5 --out results/piston
//   ciqn_sweep compare --problem piston --histories 2 --ranking 5 --epsilon 1e-9
//
// Settings come from an optional JSON file (--config) and are overridden by
// flags. CIQN_SEED seeds random problem instances.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ciqn/harness.hpp"

namespace {

using ciqn::SweepSpec;

struct Flags {
  std::string config;
  std::string problem;
  std::string accel;
  std::vector<int> histories;
  std::vector<int> ranking;
  std::vector<double> epsilon;
  std::string relax_on;
  int steps = 0;
  int ranks = 0;
  std::vector<std::size_t> partition;
  double tol = 0.0;
  double omega0 = 0.0;
  int max_iters = 0;
  std::size_t size = 0;
  double mass_ratio = 0.0;
  double coupling = 0.0;
  double contraction = 0.0;
  std::string out;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON file with sweep settings")->check(CLI::ExistingFile);
  app.add_option("--problem", f.problem, "linear | piston | two-interface");
  app.add_option("--accel", f.accel, "ciqn | aitken | picard")
      ->check(CLI::IsMember({"ciqn", "aitken", "picard"}));
  app.add_option("--histories", f.histories, "comma-separated history counts")->delimiter(',');
  app.add_option("--ranking", f.ranking, "comma-separated per-step column caps")->delimiter(',');
  app.add_option("--epsilon", f.epsilon, "comma-separated filter thresholds")->delimiter(',');
  app.add_option("--relax-on", f.relax_on, "displacement | force")
      ->check(CLI::IsMember({"displacement", "force"}));
  app.add_option("--steps", f.steps, "time steps per cell");
  app.add_option("--ranks", f.ranks, "simulated rank count");
  app.add_option("--partition", f.partition, "comma-separated rows per rank; the rank with the most rows leads and owns the first interface rows")->delimiter(',');
  app.add_option("--tol", f.tol, "relative residual tolerance");
  app.add_option("--omega0", f.omega0, "initial fixed relaxation");
  app.add_option("--max-iters", f.max_iters, "coupling iteration cap per step");
  app.add_option("--size", f.size, "interface rows");
  app.add_option("--mass-ratio", f.mass_ratio, "piston added-mass ratio");
  app.add_option("--coupling", f.coupling, "two-interface cross coupling");
  app.add_option("--contraction", f.contraction, "linear operator norm");
  app.add_option("--out", f.out, "output path prefix (.csv and .txt are appended)");
}

void apply_json(const std::string& path, SweepSpec& spec) {
  std::ifstream in(path);
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.contains("problem")) spec.problem.id = j.at("problem").get<std::string>();
  if (j.contains("accel")) spec.accelerator = ciqn::parse_accelerator(j.at("accel").get<std::string>());
  if (j.contains("histories")) spec.histories = j.at("histories").get<std::vector<int>>();
  if (j.contains("ranking")) spec.ranking = j.at("ranking").get<std::vector<int>>();
  if (j.contains("epsilon")) spec.epsilon = j.at("epsilon").get<std::vector<double>>();
  if (j.contains("relax_on")) spec.relax_on = ciqn::parse_relax_on(j.at("relax_on").get<std::string>());
  if (j.contains("steps")) spec.steps = j.at("steps").get<int>();
  if (j.contains("ranks")) spec.ranks = j.at("ranks").get<int>();
  if (j.contains("partition")) spec.partition = j.at("partition").get<std::vector<std::size_t>>();
  if (j.contains("tol")) spec.tol = j.at("tol").get<double>();
  if (j.contains("omega0")) spec.omega0 = j.at("omega0").get<double>();
  if (j.contains("max_iters")) spec.max_iters = j.at("max_iters").get<int>();
  if (j.contains("size")) spec.problem.size = j.at("size").get<std::size_t>();
  if (j.contains("mass_ratio")) spec.problem.mass_ratio = j.at("mass_ratio").get<double>();
  if (j.contains("coupling")) spec.problem.coupling = j.at("coupling").get<double>();
  if (j.contains("contraction")) spec.problem.contraction = j.at("contraction").get<double>();
  if (j.contains("out")) spec.output = j.at("out").get<std::string>();
}

SweepSpec build_spec(const CLI::App& app, const Flags& f) {
  SweepSpec spec;
  spec.problem.seed = ciqn::seed_from_environment();
  if (!f.config.empty()) apply_json(f.config, spec);

  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--problem")) spec.problem.id = f.problem;
  if (given("--accel")) spec.accelerator = ciqn::parse_accelerator(f.accel);
  if (given("--histories")) spec.histories = f.histories;
  if (given("--ranking")) spec.ranking = f.ranking;
  if (given("--epsilon")) spec.epsilon = f.epsilon;
  if (given("--relax-on")) spec.relax_on = ciqn::parse_relax_on(f.relax_on);
  if (given("--steps")) spec.steps = f.steps;
  if (given("--ranks")) spec.ranks = f.ranks;
  if (given("--partition")) spec.partition = f.partition;
  if (given("--tol")) spec.tol = f.tol;
  if (given("--omega0")) spec.omega0 = f.omega0;
  if (given("--max-iters")) spec.max_iters = f.max_iters;
  if (given("--size")) spec.problem.size = f.size;
  if (given("--mass-ratio")) spec.problem.mass_ratio = f.mass_ratio;
  if (given("--coupling")) spec.problem.coupling = f.coupling;
  if (given("--contraction")) spec.problem.contraction = f.contraction;
  if (given("--out")) spec.output = f.out;
  spec.validate();
  return spec;
}

std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ciqn::Error("cannot open " + path + " for writing");
  return out;
}

int run_sweep_command(const SweepSpec& spec) {
  std::ofstream csv;
  if (!spec.output.empty()) {
    csv = open_output(spec.output + ".csv");
    csv << ciqn::csv_header() << std::flush;
  }

  // Rows are flushed as cells finish so an interrupted sweep keeps its progress.
  const ciqn::SweepGrid grid = ciqn::run_sweep(spec, [&](const ciqn::CellStats& cell) {
    std::fprintf(stderr, "cell histories=%d ranking=%d eps=%s: %s  [%.3f s]\n", cell.histories, cell.ranking,
                 ciqn::format_epsilon(cell.epsilon).c_str(), ciqn::format_cell(cell).c_str(), cell.wall_seconds);
    if (csv.is_open()) {
      csv << ciqn::csv_row(cell) << std::flush;
      if (!csv) throw ciqn::Error("write failed on " + spec.output + ".csv");
    }
  });

  const std::string table = ciqn::render_table(grid);
  std::cout << table;
  if (!spec.output.empty()) {
    auto txt = open_output(spec.output + ".txt");
    txt << table;
    if (!txt) throw ciqn::Error("write failed on " + spec.output + ".txt");
  }
  return 0;
}

int run_compare_command(const SweepSpec& spec) {
  const auto result = ciqn::compare_accelerators(spec);
  const std::string text = ciqn::render_comparison(spec, result);
  std::cout << text;
  if (!spec.output.empty()) {
    auto txt = open_output(spec.output + ".txt");
    txt << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compact interface quasi-Newton sweep harness"};
  app.require_subcommand(1);

  Flags sweep_flags;
  Flags compare_flags;
  auto* sweep = app.add_subcommand("sweep", "run a histories x ranking x epsilon grid");
  auto* compare = app.add_subcommand("compare", "CIQN against Aitken on one configuration");
  add_flags(*sweep, sweep_flags);
  add_flags(*compare, compare_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep->parsed()) return run_sweep_command(build_spec(*sweep, sweep_flags));
    return run_compare_command(build_spec(*compare, compare_flags));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
