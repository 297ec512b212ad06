#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nhmp/costmap.hpp"
#include "nhmp/kinematics.hpp"
#include "nhmp/mpc.hpp"
#include "nhmp/obstacles.hpp"
#include "nhmp/rrt.hpp"

namespace nhmp {

/// Distance at which a pedestrian switches to its next waypoint.
inline constexpr double kWaypointSwitchDistance = 0.2;

/// Scripted agent walking a waypoint list at constant speed.
struct Pedestrian
{
  std::string id;
  Point2 position;
  std::vector<Point2> waypoints;
  std::size_t active_waypoint = 0;
  double speed = 1.0;
  double radius = 0.3;
};

Pedestrian pedestrian_step(const Pedestrian& agent, double dt);

class ScenarioError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct Scenario
{
  /// Map-server YAML; relative paths are resolved against the scenario file.
  std::string map_yaml;
  /// In-memory map used instead of `map_yaml` when set (uninflated).
  std::optional<OccupancyGrid> map;

  VehicleState start;
  VehicleState goal;
  VehicleParams vehicle;
  RrtParams rrt;
  MpcConfig mpc;
  MpcWeights weights;
  PhiParams phi;
  InflationParams inflation;
  std::vector<Pedestrian> pedestrians;
  double sim_duration_limit = 60.0;
  double control_frequency = 5.0;
  /// Distance to the goal position that ends the run successfully.
  double goal_tolerance = 1.0;
  /// Consecutive invalid local plans before the global path is replanned.
  int replan_after_invalid = 3;

  void validate() const;
};

/// Parses a scenario YAML document; `base_dir` anchors a relative map path.
Scenario parse_scenario(const std::string& yaml_text, const std::string& base_dir);
Scenario load_scenario(const std::string& path);

/// Loads (unless in memory) and inflates the scenario map.
OccupancyGrid prepare_grid(const Scenario& scenario);

/// Global path from `from` to the scenario goal on a prepared grid. The RRT
/// treats cells at or above the inflation occupied_threshold as blocked.
PlanResult plan_scenario_path(const Scenario& scenario, const OccupancyGrid& grid,
                              const VehicleState& from);

enum class Outcome
{
  goal_reached,
  timeout,
  collision,
  planning_failed,
};

std::string_view to_string(Outcome outcome);

struct TickRecord
{
  double t = 0.0;
  VehicleState state;
  ControlInput command;
  double cycle_ms = 0.0;
  /// Smallest pedestrian surface distance (center distance minus radius);
  /// negative inside a pedestrian, infinity without pedestrians.
  double min_obstacle_distance = 0.0;
  double obstacle_cost = 0.0;
  bool replan = false;
  bool plan_valid = true;
  /// Vehicle position on an occupied (255) or out-of-map cell.
  bool map_collision = false;
  std::vector<Point2> pedestrians;
};

struct RunLog
{
  std::vector<TickRecord> ticks;
  Outcome outcome = Outcome::timeout;
  /// Set when a global planning attempt failed.
  std::optional<PlanStatus> planning_failure;
  /// Inflated grid the run used.
  OccupancyGrid grid;
  /// Initial global path followed by every replanned one.
  std::vector<GlobalPath> paths;
  double global_planning_ms = 0.0;
};

/// Runs the closed loop until the goal, a collision, the duration limit, or a
/// failed global plan. Throws ScenarioError/MapFormatError before simulating
/// when the scenario cannot be set up.
RunLog run(const Scenario& scenario);

struct MetricsOptions
{
  /// Write planner wall-time; when false the column is written as zero so
  /// logs of identical runs compare byte for byte.
  bool include_timing = true;
};

/// CSV with header t,x,y,theta,v,delta,cycle_ms,min_obstacle_dist,obstacle_cost,replan.
std::string export_metrics(const RunLog& log, const MetricsOptions& options = {});

/// Path states as CSV (x,y,theta).
std::string export_path(const GlobalPath& path);

/// SVG overlay of map occupancy, global paths, vehicle and pedestrian traces
/// and replan markers. Drawing coordinates are world meters.
std::string render(const RunLog& log, const Scenario& scenario);

} // namespace nhmp
