#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nhmp/costmap.hpp"
#include "nhmp/kinematics.hpp"
#include "nhmp/obstacles.hpp"
#include "nhmp/rrt.hpp"

namespace nhmp {

/// N commands, each held for dt seconds; the horizon is N * dt.
struct ControlSequence
{
  std::vector<ControlInput> commands;
  double dt = 0.2;

  std::size_t size() const { return commands.size(); }
  /// Throws std::invalid_argument when empty, dt <= 0, or a command leaves the box.
  void validate(const VehicleParams& vehicle) const;

  static ControlSequence zeros(std::size_t n, double dt);
  /// Drops the first command and repeats the last one.
  ControlSequence shifted() const;
};

struct MpcWeights
{
  double c_terminal = 1.0;
  double c_length = 1.0;
  double c_map = 0.02;
  double c_obstacle = 1.0;
  double c_smooth = 0.1;
  double heading_weight = 1.0;

  void validate() const;
};

struct MpcConfig
{
  int horizon_steps = 25;
  double dt = 0.2;
  double global_lookahead_distance = 5.0;
  /// Per-step obstacle cost above which a trajectory is rejected.
  double max_obstacle_cost = 4.0;
  int optimizer_iterations = 60;
  double fd_epsilon = 1e-4;
  double initial_step_length = 0.5;
  double step_shrink_factor = 0.5;

  void validate() const;
};

/// Everything the local planner needs besides the scene.
struct LocalPlannerSettings
{
  MpcConfig config;
  MpcWeights weights;
  PhiParams phi;
  VehicleParams vehicle;
};

/// Scene of one planning cycle: the cost map and an obstacle snapshot.
struct Scene
{
  const OccupancyGrid& grid;
  std::span<const Obstacle> obstacles;
};

struct TargetSelection
{
  VehicleState target;
  std::size_t index = 0;
};

/// Advances along the path from `previous_index` while the vehicle is within
/// the lookahead distance of the indexed state; never moves backwards.
TargetSelection select_target(const GlobalPath& path, const VehicleState& pose,
                              const MpcConfig& config, std::size_t previous_index);

/// States x_0 .. x_N under the command sequence.
std::vector<VehicleState> rollout(const VehicleState& x0, const ControlSequence& u,
                                  const VehicleParams& vehicle);

/// c * (dx^2 + dy^2 + heading_weight * wrap(dtheta)^2).
double terminal_cost(const VehicleState& final_state, const VehicleState& target,
                     const MpcWeights& weights);

/// c_l * v * dt + c_m * m(x, y) + c_o * o(x, k).
double running_cost(const VehicleState& state, const ControlInput& control, int k,
                    const Scene& scene, const MpcWeights& weights, double dt,
                    const PhiParams& phi_params);

/// Sum of running costs times dt, plus the L1 smoothness penalty on
/// consecutive commands, plus the terminal cost.
double total_cost(const VehicleState& x0, const ControlSequence& u, const VehicleState& target,
                  const Scene& scene, const MpcWeights& weights, const PhiParams& phi_params,
                  const VehicleParams& vehicle);

/// Objective over a flattened control vector [v_0, delta_0, v_1, delta_1, ...].
class MpcObjective
{
public:
  MpcObjective(const VehicleState& x0, const VehicleState& target, const Scene& scene,
               const LocalPlannerSettings& settings);

  double evaluate(const ControlSequence& u) const;

  /// Central differences with step `epsilon`, one-sided where a bound would
  /// be crossed so every evaluated sequence stays admissible.
  std::vector<double> gradient(const ControlSequence& u, double epsilon) const;

  /// Box projection of the flattened vector.
  ControlSequence project(const ControlSequence& u) const;

  const LocalPlannerSettings& settings() const { return settings_; }

private:
  VehicleState x0_;
  VehicleState target_;
  Scene scene_;
  LocalPlannerSettings settings_;
};

struct OptimizeResult
{
  ControlSequence controls;
  double initial_cost = 0.0;
  double cost = 0.0;
  int iterations = 0;
};

/// Projected finite-difference gradient descent with backtracking line
/// search. Only strictly improving steps are accepted, so the returned cost
/// never exceeds the cost of `u_init`.
OptimizeResult optimize(const VehicleState& x0, const ControlSequence& u_init,
                        const VehicleState& target, const Scene& scene,
                        const LocalPlannerSettings& settings);

/// True when no state sits on an occupied or out-of-map cell and no state's
/// obstacle cost exceeds config.max_obstacle_cost.
bool validate_trajectory(std::span<const VehicleState> states, const ControlSequence& u,
                         const Scene& scene, const MpcConfig& config,
                         const PhiParams& phi_params);

struct PlanStepResult
{
  ControlInput command;
  ControlSequence sequence;
  bool valid = false;
  std::size_t target_index = 0;
  VehicleState target;
  double cost = 0.0;
};

/// One receding-horizon cycle. On an invalid trajectory the command is a stop
/// (v = 0) that keeps `previous_steering`.
PlanStepResult plan_step(const VehicleState& pose, const GlobalPath& path, const Scene& scene,
                         const LocalPlannerSettings& settings,
                         const std::optional<ControlSequence>& warm_start,
                         std::size_t previous_target_index, double previous_steering);

/// Stateful wrapper that carries the warm start, target index and last
/// steering command between cycles.
class LocalPlanner
{
public:
  explicit LocalPlanner(LocalPlannerSettings settings);

  PlanStepResult plan_step(const VehicleState& pose, const GlobalPath& path, const Scene& scene);

  /// Forgets cycle history; used after the global path is replaced.
  void reset();

  const LocalPlannerSettings& settings() const { return settings_; }

private:
  LocalPlannerSettings settings_;
  std::optional<ControlSequence> warm_start_;
  std::size_t target_index_ = 0;
  double last_steering_ = 0.0;
};

} // namespace nhmp
