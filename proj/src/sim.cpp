#include "nhmp/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace nhmp {

// ---------------------------------------------------------------------------
// Pedestrians

Pedestrian pedestrian_step(const Pedestrian& agent, double dt)
{
  Pedestrian next = agent;
  const auto close_enough = [&](const Point2& wp) {
    return std::hypot(wp.x - next.position.x, wp.y - next.position.y) <= kWaypointSwitchDistance;
  };
  while (next.active_waypoint < next.waypoints.size() &&
         close_enough(next.waypoints[next.active_waypoint])) {
    ++next.active_waypoint;
  }
  if (next.active_waypoint >= next.waypoints.size()) {
    return next;
  }

  const Point2 target = next.waypoints[next.active_waypoint];
  const double dx = target.x - next.position.x;
  const double dy = target.y - next.position.y;
  const double distance = std::hypot(dx, dy);
  const double travel = std::min(next.speed * dt, distance);
  next.position = {next.position.x + travel * dx / distance,
                   next.position.y + travel * dy / distance};
  if (close_enough(target)) {
    ++next.active_waypoint;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Scenario files

void Scenario::validate() const
{
  if (!(control_frequency > 0.0)) {
    throw ScenarioError("control_frequency must be positive");
  }
  if (!(sim_duration_limit > 0.0)) {
    throw ScenarioError("sim_duration_limit must be positive");
  }
  if (!(goal_tolerance > 0.0)) {
    throw ScenarioError("goal_tolerance must be positive");
  }
  if (replan_after_invalid < 1) {
    throw ScenarioError("replan_after_invalid must be >= 1");
  }
  if (!map && map_yaml.empty()) {
    throw ScenarioError("scenario has no map");
  }
  for (const Pedestrian& p : pedestrians) {
    if (!(p.speed >= 0.0) || !(p.radius >= 0.0)) {
      throw ScenarioError("pedestrian '" + p.id + "' needs non-negative speed and radius");
    }
  }
  try {
    vehicle.validate();
    rrt.validate();
    weights.validate();
    phi.validate();
    inflation.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
}

namespace {

template <typename T>
void read(const YAML::Node& node, const char* key, T& out)
{
  if (node && node[key]) {
    out = node[key].as<T>();
  }
}

VehicleState read_pose(const YAML::Node& node, const char* key)
{
  const YAML::Node pose = node[key];
  if (!pose || !pose.IsSequence() || pose.size() != 3) {
    throw ScenarioError(std::string("scenario '") + key + "' must be [x, y, theta]");
  }
  return {pose[0].as<double>(), pose[1].as<double>(), pose[2].as<double>()};
}

Point2 read_point(const YAML::Node& node)
{
  if (!node.IsSequence() || node.size() != 2) {
    throw ScenarioError("points must be [x, y]");
  }
  return {node[0].as<double>(), node[1].as<double>()};
}

} // namespace

Scenario parse_scenario(const std::string& yaml_text, const std::string& base_dir)
{
  Scenario s;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    if (!root.IsMap()) {
      throw ScenarioError("scenario must be a YAML mapping");
    }
    if (!root["map"]) {
      throw ScenarioError("scenario is missing 'map'");
    }
    std::filesystem::path map_path(root["map"].as<std::string>());
    if (map_path.is_relative()) {
      map_path = std::filesystem::path(base_dir) / map_path;
    }
    s.map_yaml = map_path.string();
    s.start = read_pose(root, "start");
    s.goal = read_pose(root, "goal");
    read(root, "sim_duration_limit", s.sim_duration_limit);
    read(root, "control_frequency", s.control_frequency);
    read(root, "goal_tolerance", s.goal_tolerance);
    read(root, "replan_after_invalid", s.replan_after_invalid);

    const YAML::Node vehicle = root["vehicle"];
    read(vehicle, "wheelbase", s.vehicle.wheelbase);
    read(vehicle, "max_velocity", s.vehicle.max_velocity);
    read(vehicle, "min_steering_angle", s.vehicle.min_steering_angle);
    read(vehicle, "max_steering_angle", s.vehicle.max_steering_angle);

    const YAML::Node inflation = root["inflation"];
    read(inflation, "inflation_radius", s.inflation.inflation_radius);
    read(inflation, "occupied_threshold", s.inflation.occupied_threshold);

    const YAML::Node rrt = root["rrt"];
    read(rrt, "steering_samples", s.rrt.steering_samples);
    read(rrt, "step_size", s.rrt.step_size);
    read(rrt, "integration_step_size", s.rrt.integration_step_size);
    read(rrt, "expansion_velocity", s.rrt.expansion_velocity);
    read(rrt, "goal_position_tolerance", s.rrt.goal_position_tolerance);
    read(rrt, "goal_heading_tolerance", s.rrt.goal_heading_tolerance);
    read(rrt, "goal_bias", s.rrt.goal_bias);
    read(rrt, "max_iterations", s.rrt.max_iterations);
    read(rrt, "seed", s.rrt.rng_seed);

    const YAML::Node mpc = root["mpc"];
    read(mpc, "horizon_steps", s.mpc.horizon_steps);
    read(mpc, "global_lookahead_distance", s.mpc.global_lookahead_distance);
    read(mpc, "max_obstacle_cost", s.mpc.max_obstacle_cost);
    read(mpc, "optimizer_iterations", s.mpc.optimizer_iterations);
    read(mpc, "fd_epsilon", s.mpc.fd_epsilon);
    read(mpc, "initial_step_length", s.mpc.initial_step_length);
    read(mpc, "step_shrink_factor", s.mpc.step_shrink_factor);

    const YAML::Node weights = root["weights"];
    read(weights, "c_terminal", s.weights.c_terminal);
    read(weights, "c_length", s.weights.c_length);
    read(weights, "c_map", s.weights.c_map);
    read(weights, "c_obstacle", s.weights.c_obstacle);
    read(weights, "c_smooth", s.weights.c_smooth);
    read(weights, "heading_weight", s.weights.heading_weight);

    const YAML::Node phi = root["phi"];
    read(phi, "phi_max", s.phi.phi_max);
    read(phi, "cutoff_distance", s.phi.cutoff_distance);

    if (const YAML::Node peds = root["pedestrians"]) {
      for (const YAML::Node& p : peds) {
        Pedestrian agent;
        read(p, "id", agent.id);
        if (!p["position"]) {
          throw ScenarioError("pedestrian is missing 'position'");
        }
        agent.position = read_point(p["position"]);
        if (const YAML::Node wps = p["waypoints"]) {
          for (const YAML::Node& wp : wps) {
            agent.waypoints.push_back(read_point(wp));
          }
        }
        read(p, "speed", agent.speed);
        read(p, "radius", agent.radius);
        if (agent.id.empty()) {
          agent.id = "ped" + std::to_string(s.pedestrians.size());
        }
        s.pedestrians.push_back(std::move(agent));
      }
    }
  } catch (const YAML::Exception& e) {
    throw ScenarioError(std::string("bad scenario: ") + e.what());
  }
  s.mpc.dt = 1.0 / s.control_frequency;
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError("cannot open scenario " + path);
  }
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  return parse_scenario(text, std::filesystem::path(path).parent_path().string());
}

std::string_view to_string(Outcome outcome)
{
  switch (outcome) {
  case Outcome::goal_reached:
    return "goal_reached";
  case Outcome::timeout:
    return "timeout";
  case Outcome::collision:
    return "collision";
  case Outcome::planning_failed:
    return "planning_failed";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Closed loop

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

} // namespace

OccupancyGrid prepare_grid(const Scenario& scenario)
{
  const OccupancyGrid raw = scenario.map ? *scenario.map : load_map_file(scenario.map_yaml);
  return inflate(raw, scenario.inflation);
}

PlanResult plan_scenario_path(const Scenario& scenario, const OccupancyGrid& grid,
                              const VehicleState& from)
{
  RrtParams rrt = scenario.rrt;
  rrt.collision_threshold = scenario.inflation.occupied_threshold;
  return plan(from, scenario.goal, grid, rrt, scenario.vehicle);
}

RunLog run(const Scenario& scenario)
{
  scenario.validate();
  RunLog log;
  log.grid = prepare_grid(scenario);
  const OccupancyGrid& grid = log.grid;
  for (const auto& [name, pose] : {std::pair{"start", scenario.start}, {"goal", scenario.goal}}) {
    if (!is_free(grid, pose.x, pose.y, scenario.inflation)) {
      throw ScenarioError(std::string(name) + " pose is not on a free cell after inflation");
    }
  }

  const double dt = 1.0 / scenario.control_frequency;
  LocalPlannerSettings settings{scenario.mpc, scenario.weights, scenario.phi, scenario.vehicle};
  settings.config.dt = dt;
  LocalPlanner local(settings);

  const auto plan_global = [&](const VehicleState& from) -> std::optional<GlobalPath> {
    const auto started = Clock::now();
    PlanResult result = plan_scenario_path(scenario, grid, from);
    log.global_planning_ms += elapsed_ms(started);
    if (!result.ok()) {
      log.planning_failure = result.status;
      return std::nullopt;
    }
    log.paths.push_back(*result.path);
    // The tree only gets within the position tolerance of the goal; the local
    // planner is asked to finish the approach.
    GlobalPath tracked = std::move(*result.path);
    const VehicleState& end = tracked.states.back();
    if (end.x != scenario.goal.x || end.y != scenario.goal.y) {
      tracked.states.push_back(scenario.goal);
      tracked.steering.push_back(0.0);
    }
    return tracked;
  };

  std::optional<GlobalPath> path = plan_global(scenario.start);
  if (!path) {
    log.outcome = Outcome::planning_failed;
    return log;
  }

  VehicleState state = scenario.start;
  std::vector<Pedestrian> pedestrians = scenario.pedestrians;
  std::vector<Point2> previous_positions;
  for (const Pedestrian& p : pedestrians) {
    previous_positions.push_back(p.position);
  }
  int invalid_streak = 0;

  for (long tick = 0;; ++tick) {
    TickRecord record;
    record.t = static_cast<double>(tick) * dt;
    record.state = state;

    std::vector<Obstacle> snapshot;
    snapshot.reserve(pedestrians.size());
    record.min_obstacle_distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pedestrians.size(); ++i) {
      const Pedestrian& p = pedestrians[i];
      const Point2 velocity{(p.position.x - previous_positions[i].x) / dt,
                            (p.position.y - previous_positions[i].y) / dt};
      snapshot.push_back({p.id, p.position, velocity, p.radius});
      record.pedestrians.push_back(p.position);
      record.min_obstacle_distance =
          std::min(record.min_obstacle_distance,
                   std::hypot(state.x - p.position.x, state.y - p.position.y) - p.radius);
    }
    record.obstacle_cost = obstacle_cost(state, snapshot, 0, dt, scenario.phi);
    record.map_collision = cost_at(grid, state.x, state.y) == kOccupiedCost;

    const bool collided = record.map_collision || record.min_obstacle_distance < 0.0;
    const bool arrived =
        std::hypot(state.x - scenario.goal.x, state.y - scenario.goal.y) <= scenario.goal_tolerance;
    const bool out_of_time = record.t >= scenario.sim_duration_limit;
    if (collided || arrived || out_of_time) {
      log.outcome = collided ? Outcome::collision
                             : (arrived ? Outcome::goal_reached : Outcome::timeout);
      log.ticks.push_back(std::move(record));
      break;
    }

    const Scene scene{grid, snapshot};
    const auto started = Clock::now();
    const PlanStepResult step_result = local.plan_step(state, *path, scene);
    record.cycle_ms = elapsed_ms(started);
    record.command = step_result.command;
    record.plan_valid = step_result.valid;

    invalid_streak = step_result.valid ? 0 : invalid_streak + 1;
    bool failed = false;
    if (invalid_streak >= scenario.replan_after_invalid) {
      record.replan = true;
      invalid_streak = 0;
      if (std::optional<GlobalPath> replanned = plan_global(state)) {
        path = std::move(replanned);
        local.reset();
      } else {
        failed = true;
      }
    }
    log.ticks.push_back(std::move(record));
    if (failed) {
      log.outcome = Outcome::planning_failed;
      break;
    }

    state = step(state, step_result.command, dt, scenario.vehicle);
    for (std::size_t i = 0; i < pedestrians.size(); ++i) {
      previous_positions[i] = pedestrians[i].position;
      pedestrians[i] = pedestrian_step(pedestrians[i], dt);
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// Exports

std::string export_metrics(const RunLog& log, const MetricsOptions& options)
{
  std::string out = "t,x,y,theta,v,delta,cycle_ms,min_obstacle_dist,obstacle_cost,replan\n";
  for (const TickRecord& r : log.ticks) {
    out += fmt::format("{:.3f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.3f},{:.6f},{:.6f},{}\n", r.t,
                       r.state.x, r.state.y, r.state.theta, r.command.v, r.command.delta,
                       options.include_timing ? r.cycle_ms : 0.0, r.min_obstacle_distance,
                       r.obstacle_cost, r.replan ? 1 : 0);
  }
  return out;
}

std::string export_path(const GlobalPath& path)
{
  std::string out = "x,y,theta\n";
  for (const VehicleState& s : path.states) {
    out += fmt::format("{:.9f},{:.9f},{:.9f}\n", s.x, s.y, s.theta);
  }
  return out;
}

namespace {

std::string polyline_points(const std::vector<Point2>& points)
{
  std::string out;
  for (const Point2& p : points) {
    if (!out.empty()) {
      out += ' ';
    }
    out += fmt::format("{:.4f},{:.4f}", p.x, p.y);
  }
  return out;
}

} // namespace

std::string render(const RunLog& log, const Scenario& scenario)
{
  const OccupancyGrid& grid = log.grid;
  const MapOrigin& origin = grid.origin();

  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const Point2 corner : {Point2{0, 0}, Point2{grid.size_x(), 0}, Point2{0, grid.size_y()},
                              Point2{grid.size_x(), grid.size_y()}}) {
    const Point2 w = grid.map_to_world(corner);
    min_x = std::min(min_x, w.x);
    max_x = std::max(max_x, w.x);
    min_y = std::min(min_y, w.y);
    max_y = std::max(max_y, w.y);
  }
  const double width = max_x - min_x;
  const double height = max_y - min_y;
  const double px_per_m = std::clamp(1200.0 / std::max(width, 1e-9), 1.0, 40.0);

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
                     "viewBox=\"{:.4f} {:.4f} {:.4f} {:.4f}\">\n",
                     width * px_per_m, height * px_per_m, min_x, -max_y, width, height);
  svg += "<style>.occupied{fill:#222}.inflated{fill:#bbb}.global-path{fill:none;stroke:#1f77b4;"
         "stroke-width:0.08}.vehicle-trace{fill:none;stroke:#d62728;stroke-width:0.1}"
         ".pedestrian-trace{fill:none;stroke:#2ca02c;stroke-width:0.06}.replan{fill:#ff7f0e}"
         ".vehicle{fill:#d62728}.goal{fill:none;stroke:#9467bd;stroke-width:0.08}</style>\n";
  // World y points up; the outer group flips it for display.
  svg += "<g transform=\"scale(1,-1)\">\n";

  svg += fmt::format("<g class=\"map\" transform=\"translate({:.4f},{:.4f}) rotate({:.6f})\">\n",
                     origin.x, origin.y, origin.yaw * 180.0 / std::numbers::pi);
  const double res = grid.resolution();
  for (int row = 0; row < grid.height(); ++row) {
    int col = 0;
    while (col < grid.width()) {
      const Cost value = grid.at({col, row});
      int end = col + 1;
      const bool occupied = value == kOccupiedCost;
      while (end < grid.width() && (grid.at({end, row}) == kOccupiedCost) == occupied &&
             (grid.at({end, row}) > 0) == (value > 0)) {
        ++end;
      }
      if (value > 0) {
        svg += fmt::format("<rect class=\"{}\" x=\"{:.4f}\" y=\"{:.4f}\" width=\"{:.4f}\" "
                           "height=\"{:.4f}\"/>\n",
                           occupied ? "occupied" : "inflated", col * res, row * res,
                           (end - col) * res, res);
      }
      col = end;
    }
  }
  svg += "</g>\n";

  for (const GlobalPath& path : log.paths) {
    std::vector<Point2> points;
    for (const VehicleState& s : path.states) {
      points.push_back({s.x, s.y});
    }
    svg += fmt::format("<polyline class=\"global-path\" points=\"{}\"/>\n", polyline_points(points));
  }

  std::vector<Point2> trace;
  for (const TickRecord& r : log.ticks) {
    trace.push_back({r.state.x, r.state.y});
  }
  svg += fmt::format("<polyline class=\"vehicle-trace\" points=\"{}\"/>\n", polyline_points(trace));

  for (std::size_t i = 0; i < scenario.pedestrians.size(); ++i) {
    std::vector<Point2> points;
    for (const TickRecord& r : log.ticks) {
      if (i < r.pedestrians.size()) {
        points.push_back(r.pedestrians[i]);
      }
    }
    svg += fmt::format("<polyline class=\"pedestrian-trace\" points=\"{}\"/>\n",
                       polyline_points(points));
  }

  for (const TickRecord& r : log.ticks) {
    if (r.replan) {
      svg += fmt::format("<circle class=\"replan\" cx=\"{:.4f}\" cy=\"{:.4f}\" r=\"0.3\"/>\n",
                         r.state.x, r.state.y);
    }
  }

  svg += fmt::format("<circle class=\"goal\" cx=\"{:.4f}\" cy=\"{:.4f}\" r=\"{:.4f}\"/>\n",
                     scenario.goal.x, scenario.goal.y, scenario.goal_tolerance);

  if (!log.ticks.empty()) {
    const VehicleState& s = log.ticks.back().state;
    const double c = std::cos(s.theta);
    const double n = std::sin(s.theta);
    const std::vector<Point2> triangle{{s.x + 0.8 * c, s.y + 0.8 * n},
                                       {s.x - 0.4 * c - 0.4 * n, s.y - 0.4 * n + 0.4 * c},
                                       {s.x - 0.4 * c + 0.4 * n, s.y - 0.4 * n - 0.4 * c}};
    svg += fmt::format("<polygon class=\"vehicle\" points=\"{}\"/>\n", polyline_points(triangle));
  }

  svg += "</g>\n</svg>\n";
  return svg;
}

} // namespace nhmp
