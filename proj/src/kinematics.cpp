#include "nhmp/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nhmp {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

void require_finite(const VehicleState& s)
{
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.theta)) {
    throw std::invalid_argument("vehicle state must be finite");
  }
}

// Relative slack so that e.g. 5.0 / 0.01 is not rounded up to 501 steps.
std::size_t arc_step_count(double duration, double integration_step)
{
  const double ratio = duration / integration_step;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(ratio - 1e-9 * ratio)));
}

} // namespace

double wrap_angle(double angle)
{
  double wrapped = std::remainder(angle, 2.0 * std::numbers::pi);
  if (wrapped <= -std::numbers::pi) {
    wrapped += 2.0 * std::numbers::pi;
  }
  return wrapped;
}

void VehicleParams::validate() const
{
  if (!(wheelbase > 0.0) || !std::isfinite(wheelbase)) {
    throw std::invalid_argument("wheelbase must be positive");
  }
  if (!(max_velocity > 0.0) || !std::isfinite(max_velocity)) {
    throw std::invalid_argument("max_velocity must be positive");
  }
  if (!(min_steering_angle < max_steering_angle)) {
    throw std::invalid_argument("min_steering_angle must be below max_steering_angle");
  }
  if (!(min_steering_angle > -kHalfPi) || !(max_steering_angle < kHalfPi)) {
    throw std::invalid_argument("steering limits must lie strictly inside (-pi/2, pi/2)");
  }
}

bool VehicleParams::admits(const ControlInput& control) const
{
  return control.v >= 0.0 && control.v <= max_velocity && control.delta >= min_steering_angle &&
         control.delta <= max_steering_angle;
}

ControlInput VehicleParams::clamp(const ControlInput& control) const
{
  return {std::clamp(control.v, 0.0, max_velocity),
          std::clamp(control.delta, min_steering_angle, max_steering_angle)};
}

VehicleState step(const VehicleState& state, const ControlInput& control, double dt,
                  const VehicleParams& params)
{
  require_finite(state);
  if (!std::isfinite(control.v) || !std::isfinite(control.delta)) {
    throw std::invalid_argument("control input must be finite");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("dt must be positive and finite");
  }
  if (!params.admits(control)) {
    throw std::invalid_argument("control (v=" + std::to_string(control.v) +
                                ", delta=" + std::to_string(control.delta) +
                                ") outside vehicle limits");
  }

  const double travel = control.v * dt;
  return {state.x + travel * std::cos(state.theta), state.y + travel * std::sin(state.theta),
          wrap_angle(state.theta + travel * std::tan(control.delta) / params.wheelbase)};
}

std::vector<VehicleState> integrate_arc(const VehicleState& state, const ControlInput& control,
                                        double duration, double integration_step,
                                        const VehicleParams& params)
{
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("arc duration must be positive and finite");
  }
  if (!(integration_step > 0.0) || integration_step > duration) {
    throw std::invalid_argument("integration step must be in (0, duration]");
  }

  const std::size_t count = arc_step_count(duration, integration_step);
  std::vector<VehicleState> states;
  states.reserve(count);
  VehicleState current = state;
  for (std::size_t i = 0; i < count; ++i) {
    const double dt = (i + 1 < count) ? integration_step
                                      : duration - static_cast<double>(count - 1) * integration_step;
    current = step(current, control, dt, params);
    states.push_back(current);
  }
  return states;
}

double turning_radius(double delta, const VehicleParams& params)
{
  if (delta == 0.0) {
    throw std::domain_error("turning radius is infinite for zero steering");
  }
  return params.wheelbase / std::tan(std::abs(delta));
}

} // namespace nhmp
