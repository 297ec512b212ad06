#include "nhmp/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nhmp {

void ControlSequence::validate(const VehicleParams& vehicle) const
{
  if (commands.empty()) {
    throw std::invalid_argument("control sequence must not be empty");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("control sequence dt must be positive");
  }
  for (const ControlInput& c : commands) {
    if (!vehicle.admits(c)) {
      throw std::invalid_argument("control sequence leaves the vehicle's box constraints");
    }
  }
}

ControlSequence ControlSequence::zeros(std::size_t n, double dt)
{
  return {std::vector<ControlInput>(n), dt};
}

ControlSequence ControlSequence::shifted() const
{
  if (commands.empty()) {
    return *this;
  }
  ControlSequence out{{commands.begin() + 1, commands.end()}, dt};
  out.commands.push_back(commands.back());
  return out;
}

void MpcWeights::validate() const
{
  for (const double w : {c_terminal, c_length, c_map, c_obstacle, c_smooth, heading_weight}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("MPC weights must be finite and non-negative");
    }
  }
}

void MpcConfig::validate() const
{
  if (horizon_steps < 1) {
    throw std::invalid_argument("horizon_steps must be >= 1");
  }
  if (!(dt > 0.0) || !(global_lookahead_distance > 0.0) || !(max_obstacle_cost > 0.0) ||
      !(fd_epsilon > 0.0) || !(initial_step_length > 0.0)) {
    throw std::invalid_argument("MPC configuration values must be positive");
  }
  if (optimizer_iterations < 0) {
    throw std::invalid_argument("optimizer_iterations must be >= 0");
  }
  if (!(step_shrink_factor > 0.0 && step_shrink_factor < 1.0)) {
    throw std::invalid_argument("step_shrink_factor must be in (0, 1)");
  }
}

TargetSelection select_target(const GlobalPath& path, const VehicleState& pose,
                              const MpcConfig& config, std::size_t previous_index)
{
  if (path.states.empty()) {
    throw std::invalid_argument("global path is empty");
  }
  const std::size_t last = path.states.size() - 1;
  std::size_t index = std::min(previous_index, last);
  while (index < last && std::hypot(path.states[index].x - pose.x,
                                    path.states[index].y - pose.y) <=
                             config.global_lookahead_distance) {
    ++index;
  }
  return {path.states[index], index};
}

std::vector<VehicleState> rollout(const VehicleState& x0, const ControlSequence& u,
                                  const VehicleParams& vehicle)
{
  std::vector<VehicleState> states;
  states.reserve(u.size() + 1);
  states.push_back(x0);
  for (const ControlInput& c : u.commands) {
    states.push_back(step(states.back(), c, u.dt, vehicle));
  }
  return states;
}

double terminal_cost(const VehicleState& final_state, const VehicleState& target,
                     const MpcWeights& weights)
{
  const double dx = target.x - final_state.x;
  const double dy = target.y - final_state.y;
  const double dtheta = wrap_angle(target.theta - final_state.theta);
  return weights.c_terminal * (dx * dx + dy * dy + weights.heading_weight * dtheta * dtheta);
}

double running_cost(const VehicleState& state, const ControlInput& control, int k,
                    const Scene& scene, const MpcWeights& weights, double dt,
                    const PhiParams& phi_params)
{
  double cost = weights.c_length * control.v * dt;
  cost += weights.c_map * interpolated_cost(scene.grid, state.x, state.y);
  if (weights.c_obstacle != 0.0) {
    cost += weights.c_obstacle * obstacle_cost(state, scene.obstacles, k, dt, phi_params);
  }
  return cost;
}

namespace {

double smoothness(const ControlSequence& u)
{
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < u.size(); ++k) {
    total += std::abs(u.commands[k + 1].v - u.commands[k].v) +
             std::abs(u.commands[k + 1].delta - u.commands[k].delta);
  }
  return total;
}

// Running costs of steps k..N-1 (times dt) plus the terminal cost, starting
// from state x_k.
double tail_cost(std::size_t k, VehicleState state, const ControlSequence& u,
                 const VehicleState& target, const Scene& scene,
                 const LocalPlannerSettings& settings)
{
  double total = 0.0;
  for (std::size_t j = k; j < u.size(); ++j) {
    total += running_cost(state, u.commands[j], static_cast<int>(j), scene, settings.weights,
                          u.dt, settings.phi) *
             u.dt;
    state = step(state, u.commands[j], u.dt, settings.vehicle);
  }
  return total + terminal_cost(state, target, settings.weights);
}

} // namespace

double total_cost(const VehicleState& x0, const ControlSequence& u, const VehicleState& target,
                  const Scene& scene, const MpcWeights& weights, const PhiParams& phi_params,
                  const VehicleParams& vehicle)
{
  const std::vector<VehicleState> states = rollout(x0, u, vehicle);
  double running = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    running += running_cost(states[k], u.commands[k], static_cast<int>(k), scene, weights, u.dt,
                            phi_params) *
               u.dt;
  }
  return running + weights.c_smooth * smoothness(u) + terminal_cost(states.back(), target, weights);
}

// ---------------------------------------------------------------------------
// Optimizer

MpcObjective::MpcObjective(const VehicleState& x0, const VehicleState& target, const Scene& scene,
                           const LocalPlannerSettings& settings)
  : x0_(x0), target_(target), scene_(scene), settings_(settings)
{
}

double MpcObjective::evaluate(const ControlSequence& u) const
{
  return total_cost(x0_, u, target_, scene_, settings_.weights, settings_.phi, settings_.vehicle);
}

ControlSequence MpcObjective::project(const ControlSequence& u) const
{
  ControlSequence out = u;
  for (ControlInput& c : out.commands) {
    c = settings_.vehicle.clamp(c);
  }
  return out;
}

std::vector<double> MpcObjective::gradient(const ControlSequence& u, double epsilon) const
{
  const std::size_t n = u.size();
  const VehicleParams& vehicle = settings_.vehicle;

  // Perturbing command k leaves x_0..x_k and the running costs before k
  // untouched, so only the tail is re-simulated.
  std::vector<VehicleState> states = rollout(x0_, u, vehicle);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    prefix[k + 1] = prefix[k] + running_cost(states[k], u.commands[k], static_cast<int>(k),
                                             scene_, settings_.weights, u.dt, settings_.phi) *
                                    u.dt;
  }

  std::vector<double> grad(2 * n, 0.0);
  ControlSequence probe = u;
  for (std::size_t k = 0; k < n; ++k) {
    for (int component = 0; component < 2; ++component) {
      double& value = component == 0 ? probe.commands[k].v : probe.commands[k].delta;
      const double original = value;
      const double lo = component == 0 ? 0.0 : vehicle.min_steering_angle;
      const double hi = component == 0 ? vehicle.max_velocity : vehicle.max_steering_angle;
      const double up = std::min(original + epsilon, hi);
      const double down = std::max(original - epsilon, lo);
      if (up <= down) {
        continue;
      }
      const auto evaluate_at = [&](double v) {
        value = v;
        return prefix[k] + tail_cost(k, states[k], probe, target_, scene_, settings_) +
               settings_.weights.c_smooth * smoothness(probe);
      };
      const double f_up = evaluate_at(up);
      const double f_down = evaluate_at(down);
      value = original;
      grad[2 * k + static_cast<std::size_t>(component)] = (f_up - f_down) / (up - down);
    }
  }
  return grad;
}

OptimizeResult optimize(const VehicleState& x0, const ControlSequence& u_init,
                        const VehicleState& target, const Scene& scene,
                        const LocalPlannerSettings& settings)
{
  u_init.validate(settings.vehicle);
  settings.config.validate();
  const MpcObjective objective(x0, target, scene, settings);
  const VehicleParams& vehicle = settings.vehicle;
  constexpr int kMaxBacktracks = 40;
  constexpr double kRelativeTolerance = 1e-6;

  OptimizeResult result{.controls = u_init};
  result.initial_cost = objective.evaluate(u_init);
  result.cost = result.initial_cost;

  for (int iteration = 0; iteration < settings.config.optimizer_iterations; ++iteration) {
    const std::vector<double> grad = objective.gradient(result.controls, settings.config.fd_epsilon);

    // Components pushing against an active bound cannot move; leave them out
    // of the normalization.
    std::vector<double> direction(grad.size(), 0.0);
    double scale = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const ControlInput& c = result.controls.commands[i / 2];
      const bool is_v = i % 2 == 0;
      const double value = is_v ? c.v : c.delta;
      const double lo = is_v ? 0.0 : vehicle.min_steering_angle;
      const double hi = is_v ? vehicle.max_velocity : vehicle.max_steering_angle;
      if ((value <= lo && grad[i] > 0.0) || (value >= hi && grad[i] < 0.0) ||
          !std::isfinite(grad[i])) {
        continue;
      }
      direction[i] = grad[i];
      scale = std::max(scale, std::abs(grad[i]));
    }
    if (scale == 0.0) {
      break;
    }

    bool accepted = false;
    double step_length = settings.config.initial_step_length;
    for (int backtrack = 0; backtrack < kMaxBacktracks; ++backtrack) {
      ControlSequence candidate = result.controls;
      for (std::size_t i = 0; i < direction.size(); ++i) {
        ControlInput& c = candidate.commands[i / 2];
        (i % 2 == 0 ? c.v : c.delta) -= step_length * direction[i] / scale;
      }
      candidate = objective.project(candidate);
      const double cost = objective.evaluate(candidate);
      if (cost < result.cost) {
        const double improvement = (result.cost - cost) / std::max(std::abs(result.cost), 1e-12);
        result.controls = std::move(candidate);
        result.cost = cost;
        accepted = true;
        ++result.iterations;
        if (improvement < kRelativeTolerance) {
          return result;
        }
        break;
      }
      step_length *= settings.config.step_shrink_factor;
    }
    if (!accepted) {
      break;
    }
  }
  return result;
}

bool validate_trajectory(std::span<const VehicleState> states, const ControlSequence& u,
                         const Scene& scene, const MpcConfig& config,
                         const PhiParams& phi_params)
{
  for (std::size_t k = 0; k < states.size(); ++k) {
    const VehicleState& s = states[k];
    // The containing cell always carries interpolation weight, so this also
    // keeps the interpolated cost below 255.
    if (cost_at(scene.grid, s.x, s.y) == kOccupiedCost) {
      return false;
    }
    if (obstacle_cost(s, scene.obstacles, static_cast<int>(k), u.dt, phi_params) >
        config.max_obstacle_cost) {
      return false;
    }
  }
  return true;
}

PlanStepResult plan_step(const VehicleState& pose, const GlobalPath& path, const Scene& scene,
                         const LocalPlannerSettings& settings,
                         const std::optional<ControlSequence>& warm_start,
                         std::size_t previous_target_index, double previous_steering)
{
  const MpcConfig& config = settings.config;
  const auto n = static_cast<std::size_t>(config.horizon_steps);
  const TargetSelection target = select_target(path, pose, config, previous_target_index);

  ControlSequence init = ControlSequence::zeros(n, config.dt);
  if (warm_start && !warm_start->commands.empty()) {
    ControlSequence shifted = warm_start->shifted();
    shifted.commands.resize(n, shifted.commands.back());
    shifted.dt = config.dt;
    for (ControlInput& c : shifted.commands) {
      c = settings.vehicle.clamp(c);
    }
    init = std::move(shifted);
  }

  OptimizeResult optimized = optimize(pose, init, target.target, scene, settings);
  const std::vector<VehicleState> states = rollout(pose, optimized.controls, settings.vehicle);
  const bool valid = validate_trajectory(states, optimized.controls, scene, config, settings.phi);

  PlanStepResult result;
  result.valid = valid;
  result.command = valid ? optimized.controls.commands.front()
                         : settings.vehicle.clamp({0.0, previous_steering});
  result.sequence = std::move(optimized.controls);
  result.target_index = target.index;
  result.target = target.target;
  result.cost = optimized.cost;
  return result;
}

LocalPlanner::LocalPlanner(LocalPlannerSettings settings) : settings_(std::move(settings))
{
  settings_.config.validate();
  settings_.weights.validate();
  settings_.phi.validate();
  settings_.vehicle.validate();
}

PlanStepResult LocalPlanner::plan_step(const VehicleState& pose, const GlobalPath& path,
                                       const Scene& scene)
{
  PlanStepResult result = nhmp::plan_step(pose, path, scene, settings_, warm_start_,
                                          target_index_, last_steering_);
  warm_start_ = result.sequence;
  target_index_ = result.target_index;
  last_steering_ = result.command.delta;
  return result;
}

void LocalPlanner::reset()
{
  warm_start_.reset();
  target_index_ = 0;
  last_steering_ = 0.0;
}

} // namespace nhmp
