#include "nhmp/rrt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nhmp {

void RrtParams::validate() const
{
  if (steering_samples < 2) {
    throw std::invalid_argument("steering_samples must be >= 2");
  }
  if (!(step_size > 0.0) || !(integration_step_size > 0.0) ||
      integration_step_size > step_size) {
    throw std::invalid_argument("need 0 < integration_step_size <= step_size");
  }
  if (!(expansion_velocity > 0.0)) {
    throw std::invalid_argument("expansion_velocity must be positive");
  }
  if (!(goal_position_tolerance > 0.0) || !(goal_heading_tolerance > 0.0)) {
    throw std::invalid_argument("goal tolerances must be positive");
  }
  if (!(goal_bias >= 0.0 && goal_bias <= 1.0)) {
    throw std::invalid_argument("goal_bias must be a probability");
  }
  if (max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  if (collision_threshold <= 0 || collision_threshold > 255) {
    throw std::invalid_argument("collision_threshold must be in (0, 255]");
  }
}

double GlobalPath::length() const
{
  double total = 0.0;
  for (std::size_t i = 1; i < states.size(); ++i) {
    total += std::hypot(states[i].x - states[i - 1].x, states[i].y - states[i - 1].y);
  }
  return total;
}

// ---------------------------------------------------------------------------
// SearchTree

SearchTree::SearchTree(double bucket_size) : bucket_size_(bucket_size)
{
  if (!(bucket_size > 0.0)) {
    throw std::invalid_argument("bucket size must be positive");
  }
}

SearchTree::BucketKey SearchTree::bucket_of(Point2 p) const
{
  return {static_cast<std::int64_t>(std::floor(p.x / bucket_size_)),
          static_cast<std::int64_t>(std::floor(p.y / bucket_size_))};
}

void SearchTree::index(NodeId id)
{
  const BucketKey key = bucket_of({nodes_[id].state.x, nodes_[id].state.y});
  buckets_[key].push_back(id);
  if (nodes_.size() == 1) {
    min_bx_ = max_bx_ = key.x;
    min_by_ = max_by_ = key.y;
  } else {
    min_bx_ = std::min(min_bx_, key.x);
    max_bx_ = std::max(max_bx_, key.x);
    min_by_ = std::min(min_by_, key.y);
    max_by_ = std::max(max_by_, key.y);
  }
}

NodeId SearchTree::add_root(const VehicleState& state)
{
  if (!nodes_.empty()) {
    throw std::logic_error("tree already has a root");
  }
  TreeNode root;
  root.state = state;
  nodes_.push_back(std::move(root));
  index(0);
  return 0;
}

NodeId SearchTree::add_child(NodeId parent, const VehicleState& state, double steering)
{
  TreeNode& p = nodes_.at(parent);
  if (p.dead_end) {
    throw std::logic_error("cannot attach a child to a dead-end node");
  }
  const NodeId id = nodes_.size();
  p.children.push_back(id);
  ++p.live_children;
  TreeNode child;
  child.state = state;
  child.parent = parent;
  child.steering_used = steering;
  nodes_.push_back(std::move(child));
  index(id);
  return id;
}

std::vector<NodeId> SearchTree::mark_dead_ends(NodeId id)
{
  std::vector<NodeId> marked;
  std::optional<NodeId> current = id;
  while (current) {
    TreeNode& n = nodes_.at(*current);
    if (n.dead_end || n.live_children > 0) {
      break;
    }
    // An unexpanded root still has its extension ahead of it.
    if (!n.parent && !n.expanded) {
      break;
    }
    n.dead_end = true;
    marked.push_back(*current);
    if (n.parent) {
      --nodes_[*n.parent].live_children;
      // Unexpanded ancestors cannot exist: a parent is expanded before it
      // has children. The loop stops at the first ancestor still alive.
    }
    current = n.parent;
  }
  return marked;
}

NodeId SearchTree::nearest_scan(Point2 point, bool include_dead) const
{
  std::optional<NodeId> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].dead_end && !include_dead) {
      continue;
    }
    const double dx = nodes_[id].state.x - point.x;
    const double dy = nodes_[id].state.y - point.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = id;
    }
  }
  if (!best) {
    throw TreeExhausted();
  }
  return *best;
}

NodeId SearchTree::nearest(Point2 point, bool include_dead) const
{
  if (nodes_.empty() || (!include_dead && exhausted())) {
    throw TreeExhausted();
  }
  const BucketKey center = bucket_of(point);
  std::optional<NodeId> best;
  double best_d2 = std::numeric_limits<double>::infinity();

  const auto visit = [&](std::int64_t bx, std::int64_t by) {
    const auto it = buckets_.find({bx, by});
    if (it == buckets_.end()) {
      return;
    }
    for (const NodeId id : it->second) {
      const TreeNode& n = nodes_[id];
      if (n.dead_end && !include_dead) {
        continue;
      }
      const double dx = n.state.x - point.x;
      const double dy = n.state.y - point.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2 || (d2 == best_d2 && id < *best)) {
        best_d2 = d2;
        best = id;
      }
    }
  };

  // Chebyshev rings around the query bucket, clipped to the occupied range.
  // After ring r every unvisited node is at least r * bucket_size away.
  for (std::int64_t r = 0;; ++r) {
    const std::int64_t x0 = center.x - r;
    const std::int64_t x1 = center.x + r;
    const std::int64_t y0 = center.y - r;
    const std::int64_t y1 = center.y + r;
    const std::int64_t cx0 = std::max(x0, min_bx_);
    const std::int64_t cx1 = std::min(x1, max_bx_);
    const std::int64_t cy0 = std::max(y0 + 1, min_by_);
    const std::int64_t cy1 = std::min(y1 - 1, max_by_);
    if (r == 0) {
      visit(center.x, center.y);
    } else {
      for (std::int64_t bx = cx0; bx <= cx1; ++bx) {
        if (y0 >= min_by_ && y0 <= max_by_) {
          visit(bx, y0);
        }
        if (y1 >= min_by_ && y1 <= max_by_) {
          visit(bx, y1);
        }
      }
      for (std::int64_t by = cy0; by <= cy1; ++by) {
        if (x0 >= min_bx_ && x0 <= max_bx_) {
          visit(x0, by);
        }
        if (x1 >= min_bx_ && x1 <= max_bx_) {
          visit(x1, by);
        }
      }
    }

    const double reach = static_cast<double>(r) * bucket_size_;
    if (best && best_d2 < reach * reach) {
      break;
    }
    if (x0 <= min_bx_ && x1 >= max_bx_ && y0 <= min_by_ && y1 >= max_by_) {
      break;
    }
  }
  if (!best) {
    throw TreeExhausted();
  }
  return *best;
}

bool SearchTree::has_similar(const VehicleState& state, double position_tolerance,
                             double heading_tolerance) const
{
  const BucketKey center = bucket_of({state.x, state.y});
  const auto reach = static_cast<std::int64_t>(std::ceil(position_tolerance / bucket_size_));
  const double tol2 = position_tolerance * position_tolerance;
  for (std::int64_t bx = center.x - reach; bx <= center.x + reach; ++bx) {
    for (std::int64_t by = center.y - reach; by <= center.y + reach; ++by) {
      const auto it = buckets_.find({bx, by});
      if (it == buckets_.end()) {
        continue;
      }
      for (const NodeId id : it->second) {
        const VehicleState& s = nodes_[id].state;
        const double dx = s.x - state.x;
        const double dy = s.y - state.y;
        if (dx * dx + dy * dy <= tol2 &&
            std::abs(wrap_angle(s.theta - state.theta)) < heading_tolerance) {
          return true;
        }
      }
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Planner phases

namespace {

constexpr int kMaxSampleAttempts = 100'000;

bool blocked(const OccupancyGrid& grid, double x, double y, const RrtParams& params)
{
  return cost_at(grid, x, y) >= params.collision_threshold;
}

bool in_goal_region(const VehicleState& s, const VehicleState& goal, const RrtParams& params)
{
  return std::hypot(s.x - goal.x, s.y - goal.y) <= params.goal_position_tolerance &&
         std::abs(wrap_angle(s.theta - goal.theta)) <= params.goal_heading_tolerance;
}

} // namespace

Point2 sample_free(const OccupancyGrid& grid, const VehicleState& goal, const RrtParams& params,
                   Rng& rng)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < params.goal_bias) {
    return {goal.x, goal.y};
  }
  std::uniform_real_distribution<double> along_x(0.0, grid.size_x());
  std::uniform_real_distribution<double> along_y(0.0, grid.size_y());
  for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
    const Point2 p = grid.map_to_world({along_x(rng), along_y(rng)});
    if (!blocked(grid, p.x, p.y, params)) {
      return p;
    }
  }
  throw std::runtime_error("no free cell found by rejection sampling");
}

std::vector<NodeId> extend_children(SearchTree& tree, NodeId parent, const OccupancyGrid& grid,
                                    const RrtParams& params, const VehicleParams& vehicle)
{
  const TreeNode& p = tree.node(parent);
  if (p.dead_end || p.expanded) {
    throw std::invalid_argument("node was already expanded or is a dead end");
  }
  const VehicleState origin = p.state;
  const double range = vehicle.max_steering_angle - vehicle.min_steering_angle;
  const double duplicate_radius = 0.5 * grid.resolution();

  std::vector<NodeId> inserted;
  for (int i = 0; i < params.steering_samples; ++i) {
    const double delta =
        vehicle.min_steering_angle + (static_cast<double>(i) / params.steering_samples) * range;
    const auto arc = integrate_arc(origin, {params.expansion_velocity, delta}, params.step_size,
                                   params.integration_step_size, vehicle);
    const bool collides = std::any_of(arc.begin(), arc.end(), [&](const VehicleState& s) {
      return blocked(grid, s.x, s.y, params);
    });
    if (collides || tree.has_similar(arc.back(), duplicate_radius, params.goal_heading_tolerance)) {
      continue;
    }
    inserted.push_back(tree.add_child(parent, arc.back(), delta));
  }
  tree.set_expanded(parent);
  return inserted;
}

GlobalPath extract_path(const SearchTree& tree, NodeId goal_node)
{
  GlobalPath path;
  std::optional<NodeId> current = goal_node;
  while (current) {
    const TreeNode& n = tree.node(*current);
    path.states.push_back(n.state);
    if (n.parent) {
      path.steering.push_back(n.steering_used);
    }
    current = n.parent;
  }
  std::reverse(path.states.begin(), path.states.end());
  std::reverse(path.steering.begin(), path.steering.end());
  return path;
}

std::string_view to_string(PlanStatus status)
{
  switch (status) {
  case PlanStatus::success:
    return "success";
  case PlanStatus::start_in_collision:
    return "start_in_collision";
  case PlanStatus::goal_in_collision:
    return "goal_in_collision";
  case PlanStatus::exhausted:
    return "exhausted";
  case PlanStatus::iteration_limit:
    return "iteration_limit";
  }
  return "unknown";
}

PlanResult plan(const VehicleState& start, const VehicleState& goal, const OccupancyGrid& grid,
                const RrtParams& params, const VehicleParams& vehicle, const Sampler& sampler,
                const PlanObserver& observer)
{
  params.validate();
  vehicle.validate();
  if (params.expansion_velocity > vehicle.max_velocity) {
    throw std::invalid_argument("expansion_velocity exceeds the vehicle's max_velocity");
  }

  const double arc_length = params.expansion_velocity * params.step_size;
  PlanResult result;
  result.tree = SearchTree(std::max(arc_length, 4.0 * grid.resolution()));
  if (blocked(grid, start.x, start.y, params)) {
    result.status = PlanStatus::start_in_collision;
    return result;
  }
  if (blocked(grid, goal.x, goal.y, params)) {
    result.status = PlanStatus::goal_in_collision;
    return result;
  }

  SearchTree& tree = result.tree;
  const NodeId root = tree.add_root(start);
  if (in_goal_region(start, goal, params)) {
    result.status = PlanStatus::success;
    result.path = extract_path(tree, root);
    return result;
  }

  Rng rng(params.rng_seed);
  const Sampler draw = sampler ? sampler : Sampler([&](Rng& r) {
    return sample_free(grid, goal, params, r);
  });

  for (int iteration = 1; iteration <= params.max_iterations; ++iteration) {
    if (tree.exhausted()) {
      break;
    }
    result.iterations = iteration;
    const Point2 target = draw(rng);
    const NodeId nearest = tree.nearest(target, !params.prune_dead_ends);
    if (observer.on_nearest) {
      observer.on_nearest(iteration, nearest, tree.node(nearest).dead_end);
    }
    if (tree.node(nearest).expanded) {
      ++result.skipped_reselections;
      continue;
    }

    const std::vector<NodeId> children = extend_children(tree, nearest, grid, params, vehicle);
    if (children.empty()) {
      for (const NodeId dead : tree.mark_dead_ends(nearest)) {
        if (observer.on_dead_end) {
          observer.on_dead_end(iteration, dead);
        }
      }
    }
    for (const NodeId child : children) {
      if (in_goal_region(tree.node(child).state, goal, params)) {
        result.status = PlanStatus::success;
        result.path = extract_path(tree, child);
        return result;
      }
    }
  }

  result.status = tree.exhausted() ? PlanStatus::exhausted : PlanStatus::iteration_limit;
  return result;
}

} // namespace nhmp
