#pragma once

#include <functional>
#include <span>
#include <string>

#include "nhmp/costmap.hpp"
#include "nhmp/kinematics.hpp"

namespace nhmp {

/// Moving disc-shaped obstacle (typically a pedestrian).
struct Obstacle
{
  std::string id;
  Point2 center;
  Point2 velocity;
  double radius = 0.0;

  /// Throws std::invalid_argument on a negative radius or non-finite field.
  void validate() const;
};

/// Capped, compactly supported inverse-distance penalty.
struct PhiParams
{
  double phi_max = 10.0;
  double cutoff_distance = 3.0;

  void validate() const;
};

/// Constant-velocity extrapolation of the obstacle center.
Point2 predict(const Obstacle& obstacle, double t);

/// Position of an obstacle `t` seconds into the future.
using MotionPredictor = std::function<Point2(const Obstacle&, double)>;

/// min(phi_max, 1/d) below the cutoff, 0 at or beyond it. Contact and
/// negative distances give phi_max.
double phi(double distance, const PhiParams& params);

/// Surface distance from (x, y) to the obstacle predicted at time t,
/// clamped at zero.
double surface_distance(const Obstacle& obstacle, Point2 position, double t);

/// Sum over obstacles of phi(surface distance) at prediction time k * dt.
double obstacle_cost(const VehicleState& state, std::span<const Obstacle> obstacles, int k,
                     double dt, const PhiParams& params);

double obstacle_cost(const VehicleState& state, std::span<const Obstacle> obstacles, int k,
                     double dt, const PhiParams& params, const MotionPredictor& predictor);

} // namespace nhmp
