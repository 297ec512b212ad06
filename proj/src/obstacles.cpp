#include "nhmp/obstacles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nhmp {

void Obstacle::validate() const
{
  if (!std::isfinite(center.x) || !std::isfinite(center.y) || !std::isfinite(velocity.x) ||
      !std::isfinite(velocity.y) || !std::isfinite(radius)) {
    throw std::invalid_argument("obstacle '" + id + "' has a non-finite field");
  }
  if (radius < 0.0) {
    throw std::invalid_argument("obstacle '" + id + "' has a negative radius");
  }
}

void PhiParams::validate() const
{
  if (!(phi_max > 0.0) || !(cutoff_distance > 0.0)) {
    throw std::invalid_argument("phi_max and cutoff_distance must be positive");
  }
}

Point2 predict(const Obstacle& obstacle, double t)
{
  return {obstacle.center.x + obstacle.velocity.x * t, obstacle.center.y + obstacle.velocity.y * t};
}

double phi(double distance, const PhiParams& params)
{
  if (distance >= params.cutoff_distance) {
    return 0.0;
  }
  if (!(distance > 0.0)) {
    return params.phi_max;
  }
  return std::min(params.phi_max, 1.0 / distance);
}

double surface_distance(const Obstacle& obstacle, Point2 position, double t)
{
  const Point2 c = predict(obstacle, t);
  return std::max(0.0, std::hypot(position.x - c.x, position.y - c.y) - obstacle.radius);
}

double obstacle_cost(const VehicleState& state, std::span<const Obstacle> obstacles, int k,
                     double dt, const PhiParams& params)
{
  const double t = k * dt;
  double total = 0.0;
  for (const Obstacle& obstacle : obstacles) {
    total += phi(surface_distance(obstacle, {state.x, state.y}, t), params);
  }
  return total;
}

double obstacle_cost(const VehicleState& state, std::span<const Obstacle> obstacles, int k,
                     double dt, const PhiParams& params, const MotionPredictor& predictor)
{
  const double t = k * dt;
  double total = 0.0;
  for (const Obstacle& obstacle : obstacles) {
    const Point2 c = predictor(obstacle, t);
    const double d = std::max(0.0, std::hypot(state.x - c.x, state.y - c.y) - obstacle.radius);
    total += phi(d, params);
  }
  return total;
}

} // namespace nhmp
