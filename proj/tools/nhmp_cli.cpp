// Command line front end: global planning, closed-loop simulation and map
// inflation for debugging.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nhmp/costmap.hpp"
#include "nhmp/rrt.hpp"
#include "nhmp/sim.hpp"

namespace {

void write_file(const std::string& path, const std::string& contents)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  out << contents;
}

nhmp::Scenario load(const std::string& path, const std::optional<std::uint64_t>& seed)
{
  nhmp::Scenario scenario = nhmp::load_scenario(path);
  if (seed) {
    scenario.rrt.rng_seed = *seed;
  }
  return scenario;
}

int plan_global(const std::string& scenario_path, const std::optional<std::uint64_t>& seed,
                const std::string& out_path)
{
  const nhmp::Scenario scenario = load(scenario_path, seed);
  const nhmp::OccupancyGrid grid = nhmp::prepare_grid(scenario);

  const auto started = std::chrono::steady_clock::now();
  const nhmp::PlanResult result = nhmp::plan_scenario_path(scenario, grid, scenario.start);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (!result.ok()) {
    std::cerr << nhmp::to_string(result.status) << '\n';
    fmt::print("wall_time_s: {:.4f}\niterations: {}\ntree_nodes: {}\n", seconds,
               result.iterations, result.tree.size());
    return 1;
  }
  fmt::print("path_length_m: {:.3f}\nwall_time_s: {:.4f}\niterations: {}\ntree_nodes: {}\n",
             result.path->length(), seconds, result.iterations, result.tree.size());
  if (!out_path.empty()) {
    write_file(out_path, nhmp::export_path(*result.path));
  }
  return 0;
}

int simulate(const std::string& scenario_path, const std::optional<std::uint64_t>& seed,
             const std::string& svg_path, const std::string& csv_path, bool mask_timing)
{
  const nhmp::Scenario scenario = load(scenario_path, seed);
  const nhmp::RunLog log = nhmp::run(scenario);

  if (!csv_path.empty()) {
    write_file(csv_path, nhmp::export_metrics(log, {.include_timing = !mask_timing}));
  }
  if (!svg_path.empty() && !log.ticks.empty()) {
    write_file(svg_path, nhmp::render(log, scenario));
  }
  fmt::print("outcome: {}\nticks: {}\nreplans: {}\n", nhmp::to_string(log.outcome),
             log.ticks.size(), log.paths.empty() ? 0 : log.paths.size() - 1);
  if (log.outcome != nhmp::Outcome::goal_reached) {
    std::cerr << nhmp::to_string(log.outcome);
    if (log.planning_failure) {
      std::cerr << " (" << nhmp::to_string(*log.planning_failure) << ')';
    }
    std::cerr << '\n';
    return 2;
  }
  return 0;
}

int inflate_map(const std::string& map_path, double radius, const std::string& out_path)
{
  const nhmp::OccupancyGrid grid = nhmp::load_map_file(map_path);
  const nhmp::OccupancyGrid inflated = nhmp::inflate(grid, {.inflation_radius = radius});
  const std::vector<std::uint8_t> pgm = nhmp::encode_pgm(inflated);
  write_file(out_path, std::string(pgm.begin(), pgm.end()));
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Non-holonomic RRT global planner and MPC local planner"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string svg_path;
  std::string csv_path;
  bool mask_timing = false;
  std::string map_path;
  double radius = 0.0;

  CLI::App* global = app.add_subcommand("plan-global", "Plan a global path only");
  global->add_option("scenario", scenario_path, "Scenario YAML")->required();
  global->add_option("--seed", seed, "RRT seed override");
  global->add_option("--out", out_path, "Write the path as CSV");

  CLI::App* sim = app.add_subcommand("simulate", "Run the closed-loop simulation");
  sim->add_option("scenario", scenario_path, "Scenario YAML")->required();
  sim->add_option("--seed", seed, "RRT seed override");
  sim->add_option("--svg", svg_path, "Write an SVG rendering of the run");
  sim->add_option("--csv", csv_path, "Write per-tick metrics as CSV");
  sim->add_flag("--mask-timing", mask_timing, "Write zeros in the cycle_ms column");

  CLI::App* inflate = app.add_subcommand("inflate-map", "Inflate a map and write it as PGM");
  inflate->add_option("map", map_path, "Map YAML")->required();
  inflate->add_option("--radius", radius, "Inflation radius in meters")->required();
  inflate->add_option("--out", out_path, "Output PGM")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (global->parsed()) {
      return plan_global(scenario_path, seed, out_path);
    }
    if (sim->parsed()) {
      return simulate(scenario_path, seed, svg_path, csv_path, mask_timing);
    }
    return inflate_map(map_path, radius, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
