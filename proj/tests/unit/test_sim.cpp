#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <doctest.h>

#include "maps.hpp"
#include "nhmp/sim.hpp"

using namespace nhmp;
using doctest::Approx;

namespace {

Scenario open_scenario()
{
  Scenario s;
  s.map = maps::open_grid(20.0, 20.0, 0.1);
  s.start = {3.0, 10.0, 0.0};
  s.goal = {13.0, 10.0, 0.0};
  s.goal_tolerance = 0.5;
  s.rrt.rng_seed = 1;
  s.mpc.dt = 1.0 / s.control_frequency;
  return s;
}

Scenario corridor_scenario()
{
  Scenario s;
  s.map = maps::corridor(40.0, 6.0, 0.1);
  s.start = {2.0, 4.0, 0.0};
  s.goal = {38.0, 4.0, 0.0};
  s.sim_duration_limit = 90.0;
  s.inflation.inflation_radius = 1.0;
  s.weights.c_obstacle = 10.0;
  s.rrt.rng_seed = 1;
  Pedestrian crosser{"crosser", {15.0, 1.5}, {}, 0, 0.6, 0.3};
  for (int i = 0; i < 5; ++i) {
    crosser.waypoints.push_back({15.0, i % 2 == 0 ? 6.5 : 1.5});
  }
  s.pedestrians.push_back(crosser);
  return s;
}

Scenario wall_scenario()
{
  Scenario s = corridor_scenario();
  s.sim_duration_limit = 20.0;
  s.weights = MpcWeights{};
  s.pedestrians.clear();
  for (int i = 0; i < 6; ++i) {
    const double y = 1.5 + i;
    s.pedestrians.push_back({"w" + std::to_string(i), {18.0, y}, {{12.0, y}}, 0, 0.6, 0.3});
  }
  return s;
}

double goal_distance(const TickRecord& r, const Scenario& s)
{
  return std::hypot(r.state.x - s.goal.x, r.state.y - s.goal.y);
}

std::size_t count_lines(const std::string& text)
{
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

} // namespace

TEST_CASE("pedestrian_step examples")
{
  SUBCASE("at the final waypoint nothing moves")
  {
    const Pedestrian p{"p", {1.0, 1.0}, {{1.0, 1.0}}, 0, 1.0, 0.3};
    const Pedestrian next = pedestrian_step(p, 0.2);
    CHECK(next.position == p.position);
    CHECK(next.active_waypoint == 1);
    CHECK(pedestrian_step(next, 0.2).position == p.position);
  }
  SUBCASE("advances speed * dt toward the waypoint")
  {
    const Pedestrian p{"p", {0.0, 0.0}, {{1.0, 0.0}}, 0, 1.0, 0.3};
    const Pedestrian next = pedestrian_step(p, 0.2);
    CHECK(next.position.x == Approx(0.2));
    CHECK(next.position.y == 0.0);
    CHECK(next.active_waypoint == 0);
  }
  SUBCASE("switches once within the switch distance")
  {
    const Pedestrian p{"p", {0.0, 0.0}, {{0.15, 0.0}, {0.15, 5.0}}, 0, 1.0, 0.3};
    const Pedestrian next = pedestrian_step(p, 0.2);
    CHECK(next.active_waypoint == 1);
    const double norm = std::hypot(0.15, 5.0);
    CHECK(next.position.x == Approx(0.2 * 0.15 / norm));
    CHECK(next.position.y == Approx(0.2 * 5.0 / norm));
  }
  SUBCASE("no waypoints means standing still")
  {
    const Pedestrian p{"p", {4.0, 2.0}, {}, 0, 1.0, 0.3};
    CHECK(pedestrian_step(p, 0.2).position == p.position);
  }
}

TEST_CASE("pedestrian_step moves at most speed * dt and never passes the target")
{
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(-5.0, 5.0);
  std::uniform_real_distribution<double> speed(0.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    const Pedestrian p{"p", {pos(rng), pos(rng)}, {{pos(rng), pos(rng)}}, 0, speed(rng), 0.3};
    const Pedestrian next = pedestrian_step(p, 0.2);
    const double moved = std::hypot(next.position.x - p.position.x, next.position.y - p.position.y);
    REQUIRE(moved <= p.speed * 0.2 + 1e-12);
    const double before = std::hypot(p.waypoints[0].x - p.position.x, p.waypoints[0].y - p.position.y);
    const double after =
        std::hypot(p.waypoints[0].x - next.position.x, p.waypoints[0].y - next.position.y);
    REQUIRE(after <= before + 1e-12);
  }
}

TEST_CASE("parse_scenario reads every section")
{
  const std::string text = R"(
map: maps/room.yaml
start: [1.0, 2.0, 0.5]
goal: [8.0, 9.0, -1.0]
control_frequency: 10.0
goal_tolerance: 0.7
sim_duration_limit: 30
replan_after_invalid: 2
vehicle: {wheelbase: 2.0, max_velocity: 0.8}
inflation: {inflation_radius: 0.4, occupied_threshold: 200}
rrt: {steering_samples: 7, goal_bias: 0.1, seed: 42, max_iterations: 1000}
mpc: {horizon_steps: 20, max_obstacle_cost: 50.0}
weights: {c_terminal: 3.0, c_obstacle: 2.0}
phi: {phi_max: 5.0, cutoff_distance: 1.5}
pedestrians:
  - id: a
    position: [3.0, 3.0]
    waypoints: [[4.0, 3.0], [4.0, 4.0]]
    speed: 0.5
    radius: 0.25
  - position: [6.0, 6.0]
)";
  const Scenario s = parse_scenario(text, "/data/scenarios");
  CHECK(s.map_yaml == "/data/scenarios/maps/room.yaml");
  CHECK(s.start.theta == 0.5);
  CHECK(s.goal.x == 8.0);
  CHECK(s.control_frequency == 10.0);
  CHECK(s.mpc.dt == Approx(0.1));
  CHECK(s.goal_tolerance == 0.7);
  CHECK(s.sim_duration_limit == 30.0);
  CHECK(s.replan_after_invalid == 2);
  CHECK(s.vehicle.wheelbase == 2.0);
  CHECK(s.vehicle.max_velocity == 0.8);
  CHECK(s.inflation.inflation_radius == 0.4);
  CHECK(s.inflation.occupied_threshold == 200);
  CHECK(s.rrt.steering_samples == 7);
  CHECK(s.rrt.rng_seed == 42);
  CHECK(s.rrt.max_iterations == 1000);
  CHECK(s.mpc.horizon_steps == 20);
  CHECK(s.mpc.max_obstacle_cost == 50.0);
  CHECK(s.weights.c_terminal == 3.0);
  CHECK(s.phi.cutoff_distance == 1.5);
  REQUIRE(s.pedestrians.size() == 2);
  CHECK(s.pedestrians[0].id == "a");
  CHECK(s.pedestrians[0].waypoints.size() == 2);
  CHECK(s.pedestrians[0].radius == 0.25);
  CHECK(s.pedestrians[1].id == "ped1");
  CHECK(s.pedestrians[1].waypoints.empty());
}

TEST_CASE("parse_scenario keeps absolute map paths and applies defaults")
{
  const Scenario s = parse_scenario("map: /maps/a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\n", "/x");
  CHECK(s.map_yaml == "/maps/a.yaml");
  CHECK(s.control_frequency == 5.0);
  CHECK(s.mpc.dt == Approx(0.2));
  CHECK(s.replan_after_invalid == 3);
  CHECK(s.pedestrians.empty());
}

TEST_CASE("parse_scenario errors")
{
  const auto bad = [](const std::string& text) {
    CHECK_THROWS_AS(parse_scenario(text, "."), ScenarioError);
  };
  bad("- 1\n- 2\n");
  bad("start: [0,0,0]\ngoal: [1,1,0]\n");
  bad("map: a.yaml\nstart: [0,0]\ngoal: [1,1,0]\n");
  bad("map: a.yaml\nstart: [0,0,0]\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\ncontrol_frequency: 0\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\ngoal_tolerance: -1\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\nreplan_after_invalid: 0\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\npedestrians:\n  - speed: 1\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\npedestrians:\n  - position: [1]\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\npedestrians:\n  - {position: [1,1], speed: -1}\n");
  bad("map: a.yaml\nstart: [x,0,0]\ngoal: [1,1,0]\n");
  bad("map: a.yaml\nstart: [0,0,0]\ngoal: [1,1,0]\nvehicle: {wheelbase: 0}\n");
  bad("map: [unclosed\n");
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.yaml"), ScenarioError);
}

TEST_CASE("shipped scenarios load and their maps inflate")
{
  for (const char* name : {"empty", "corridor_150m", "sealed_pocket", "corridor_crossing",
                           "corridor_wall"}) {
    CAPTURE(name);
    const Scenario s = load_scenario(std::string(NHMP_SCENARIO_DIR) + "/" + name + ".yaml");
    const OccupancyGrid grid = prepare_grid(s);
    CHECK(grid.width() > 0);
    CHECK(is_free(grid, s.start.x, s.start.y, s.inflation));
    CHECK(is_free(grid, s.goal.x, s.goal.y, s.inflation));
  }
}

TEST_CASE("run rejects blocked start and goal poses")
{
  Scenario s = open_scenario();
  maps::paint(*s.map, {2.5, 9.5, 3.5, 10.5});
  CHECK_THROWS_AS(run(s), ScenarioError);
  s = open_scenario();
  s.goal = {30.0, 10.0, 0.0};
  CHECK_THROWS_AS(run(s), ScenarioError);
}

TEST_CASE("run on an open map reaches the goal")
{
  const Scenario s = open_scenario();
  const RunLog log = run(s);
  REQUIRE(log.outcome == Outcome::goal_reached);
  REQUIRE_FALSE(log.ticks.empty());
  CHECK(goal_distance(log.ticks.back(), s) <= s.goal_tolerance);
  CHECK(log.ticks.back().t <= 60.0);
  CHECK(log.paths.size() == 1);
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const TickRecord& r = log.ticks[i];
    CHECK(r.t == Approx(static_cast<double>(i) * 0.2));
    CHECK(std::abs(r.command.v) <= s.vehicle.max_velocity + 1e-12);
    CHECK_FALSE(r.replan);
    CHECK_FALSE(r.map_collision);
    CHECK(std::isinf(r.min_obstacle_distance));
  }
  // Progress: the distance to the goal shrinks over every 2 s window.
  for (std::size_t i = 10; i < log.ticks.size(); i += 10) {
    CHECK(goal_distance(log.ticks[i], s) < goal_distance(log.ticks[i - 10], s));
  }
}

TEST_CASE("run reports planning_failed when the goal is sealed off")
{
  Scenario s;
  s.map = maps::open_grid(20.0, 10.0, 0.1, kOccupiedCost);
  maps::paint(*s.map, {1.0, 3.0, 7.0, 7.0}, kFreeCost);
  maps::paint(*s.map, {13.0, 3.0, 19.0, 7.0}, kFreeCost);
  s.start = {2.0, 5.0, 0.0};
  s.goal = {16.0, 5.0, 0.0};
  s.inflation.inflation_radius = 0.5;
  const RunLog log = run(s);
  CHECK(log.outcome == Outcome::planning_failed);
  REQUIRE(log.planning_failure.has_value());
  CHECK(*log.planning_failure == PlanStatus::exhausted);
  CHECK(log.ticks.empty());
  CHECK(log.paths.empty());
}

TEST_CASE("corridor with a crossing pedestrian")
{
  const Scenario s = corridor_scenario();
  const RunLog log = run(s);
  CHECK(log.outcome == Outcome::goal_reached);
  double clearance = std::numeric_limits<double>::infinity();
  for (const TickRecord& r : log.ticks) {
    clearance = std::min(clearance, r.min_obstacle_distance);
    REQUIRE_FALSE(r.map_collision);
    REQUIRE(r.pedestrians.size() == 1);
  }
  CHECK(clearance > 0.3);
}

TEST_CASE("collision outcomes match the per-tick audit")
{
  SUBCASE("a pedestrian on top of the start ends the run at once")
  {
    Scenario s = open_scenario();
    s.pedestrians.push_back({"p", {3.2, 10.0}, {}, 0, 0.0, 0.5});
    const RunLog log = run(s);
    CHECK(log.outcome == Outcome::collision);
    REQUIRE(log.ticks.size() == 1);
    CHECK(log.ticks[0].min_obstacle_distance < 0.0);
  }
  SUBCASE("runs that do not collide never touch an obstacle")
  {
    for (const Scenario& s : {open_scenario(), corridor_scenario(), wall_scenario()}) {
      const RunLog log = run(s);
      const bool touched = std::any_of(log.ticks.begin(), log.ticks.end(), [](const TickRecord& r) {
        return r.map_collision || r.min_obstacle_distance < 0.0;
      });
      CHECK(touched == (log.outcome == Outcome::collision));
    }
  }
}

TEST_CASE("a pedestrian wall stops the vehicle and triggers replanning")
{
  const Scenario s = wall_scenario();
  const RunLog log = run(s);
  const auto first_invalid = std::find_if(log.ticks.begin(), log.ticks.end(),
                                          [](const TickRecord& r) { return !r.plan_valid; });
  REQUIRE(first_invalid != log.ticks.end());
  CHECK(first_invalid->command.v == 0.0);
  CHECK(std::any_of(log.ticks.begin(), log.ticks.end(),
                    [](const TickRecord& r) { return r.replan; }));
  CHECK(log.paths.size() > 1);

  // Every replan closes a streak of exactly replan_after_invalid invalid ticks.
  const int streak = s.replan_after_invalid;
  std::size_t last_replan = 0;
  bool seen = false;
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    if (!log.ticks[i].replan) {
      continue;
    }
    CAPTURE(i);
    REQUIRE(i + 1 >= static_cast<std::size_t>(streak));
    for (std::size_t j = i + 1 - streak; j <= i; ++j) {
      REQUIRE_FALSE(log.ticks[j].plan_valid);
      REQUIRE((j == i || !log.ticks[j].replan));
    }
    if (seen) {
      CHECK(i - last_replan >= static_cast<std::size_t>(streak));
    }
    seen = true;
    last_replan = i;
  }
}

TEST_CASE("metrics CSV")
{
  RunLog empty;
  const std::string header =
      "t,x,y,theta,v,delta,cycle_ms,min_obstacle_dist,obstacle_cost,replan\n";
  CHECK(export_metrics(empty) == header);

  RunLog log;
  for (int i = 0; i < 10; ++i) {
    TickRecord r;
    r.t = 0.2 * i;
    r.state = {0.5 * i, 1.0, 0.1};
    r.command = {1.0, -0.2};
    r.cycle_ms = 12.5;
    r.min_obstacle_distance = 3.0;
    r.replan = i == 4;
    log.ticks.push_back(r);
  }
  const std::string timed = export_metrics(log);
  CHECK(count_lines(timed) == 11);
  CHECK(timed.rfind(header, 0) == 0);

  std::istringstream in(timed);
  std::string line;
  std::getline(in, line);
  for (int i = 0; i < 10; ++i) {
    REQUIRE(std::getline(in, line));
    std::vector<double> fields;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      fields.push_back(std::stod(cell));
    }
    REQUIRE(fields.size() == 10);
    CHECK(fields[0] == Approx(log.ticks[i].t));
    CHECK(fields[1] == Approx(log.ticks[i].state.x));
    CHECK(fields[4] == Approx(1.0));
    CHECK(fields[5] == Approx(-0.2));
    CHECK(fields[6] == Approx(12.5));
    CHECK(fields[9] == (i == 4 ? 1.0 : 0.0));
  }

  const std::string masked = export_metrics(log, {.include_timing = false});
  CHECK(masked.find("12.500") == std::string::npos);
  CHECK(count_lines(masked) == 11);
}

TEST_CASE("masked metrics of repeated runs are byte identical")
{
  const Scenario s = corridor_scenario();
  const MetricsOptions masked{.include_timing = false};
  CHECK(export_metrics(run(s), masked) == export_metrics(run(s), masked));
}

TEST_CASE("export_path writes one line per state")
{
  GlobalPath path;
  path.states = {{0.0, 0.0, 0.0}, {1.0, 0.5, 0.25}};
  path.steering = {0.1};
  const std::string csv = export_path(path);
  CHECK(count_lines(csv) == 3);
  CHECK(csv.find("1.000000000,0.500000000,0.250000000") != std::string::npos);
}

TEST_CASE("SVG output is well-formed and shows the run")
{
  namespace pt = boost::property_tree;
  const Scenario s = corridor_scenario();
  const RunLog log = run(s);
  const std::string svg = render(log, s);

  std::istringstream in(svg);
  pt::ptree tree;
  REQUIRE_NOTHROW(pt::read_xml(in, tree));
  const pt::ptree& root = tree.get_child("svg");

  int vehicles = 0;
  int paths = 0;
  std::string trace;
  const std::function<void(const pt::ptree&)> walk = [&](const pt::ptree& node) {
    for (const auto& [tag, child] : node) {
      if (tag == "<xmlattr>") {
        continue;
      }
      const std::string cls = child.get("<xmlattr>.class", std::string());
      if (tag == "polygon" && cls == "vehicle") {
        ++vehicles;
      }
      if (tag == "polyline" && cls == "global-path") {
        ++paths;
      }
      if (tag == "polyline" && cls == "vehicle-trace") {
        trace = child.get<std::string>("<xmlattr>.points");
      }
      walk(child);
    }
  };
  walk(root);
  CHECK(vehicles == 1);
  CHECK(paths == static_cast<int>(log.paths.size()));

  // The drawn trace stays inside the free part of the corridor.
  std::istringstream points(trace);
  std::string pair;
  int count = 0;
  while (points >> pair) {
    const auto comma = pair.find(',');
    const double x = std::stod(pair.substr(0, comma));
    const double y = std::stod(pair.substr(comma + 1));
    CHECK(cost_at(log.grid, x, y) < kOccupiedCost);
    CHECK(x > 1.0);
    CHECK(x < 41.0);
    CHECK(y > 1.0);
    CHECK(y < 7.0);
    ++count;
  }
  CHECK(count == static_cast<int>(log.ticks.size()));
}

TEST_CASE("SVG of a run without ticks has no vehicle marker")
{
  Scenario s = open_scenario();
  RunLog log;
  log.grid = prepare_grid(s);
  const std::string svg = render(log, s);
  CHECK(svg.find("class=\"vehicle\"") == std::string::npos);
  std::istringstream in(svg);
  boost::property_tree::ptree tree;
  CHECK_NOTHROW(boost::property_tree::read_xml(in, tree));
}
