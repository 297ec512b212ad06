#pragma once

#include <vector>

namespace nhmp {

/// Wraps an angle into the half-open interval (-pi, pi].
double wrap_angle(double angle);

/// Planar pose of the vehicle's reference point (rear axle).
struct VehicleState
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Velocity and front-wheel steering command.
struct ControlInput
{
  double v = 0.0;
  double delta = 0.0;

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Physical limits of the single-track vehicle. `wheelbase` is the distance
/// between the axles, used as the model length in the heading update.
struct VehicleParams
{
  double wheelbase = 1.53;
  double max_velocity = 1.0;
  double min_steering_angle = -0.5;
  double max_steering_angle = 0.5;

  /// Throws std::invalid_argument when the limits are inconsistent.
  void validate() const;
  bool admits(const ControlInput& control) const;
  ControlInput clamp(const ControlInput& control) const;
};

/// One explicit Euler step of the kinematic single-track model. The position
/// update uses the heading from before the step; the new heading is wrapped.
///
/// Throws std::invalid_argument on non-finite input, dt <= 0, or a control
/// outside the vehicle's box limits.
VehicleState step(const VehicleState& state, const ControlInput& control, double dt,
                  const VehicleParams& params);

/// Repeated `step` at `integration_step` granularity for `duration` seconds.
/// Returns ceil(duration / integration_step) states; the last step is shortened
/// when duration is not a multiple of the step. The start state is not included.
std::vector<VehicleState> integrate_arc(const VehicleState& state, const ControlInput& control,
                                        double duration, double integration_step,
                                        const VehicleParams& params);

/// Radius of the circle driven at constant steering `delta`. Throws
/// std::domain_error for delta == 0.
double turning_radius(double delta, const VehicleParams& params);

} // namespace nhmp
