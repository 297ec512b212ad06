#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nhmp/costmap.hpp"
#include "nhmp/kinematics.hpp"

namespace nhmp {

using NodeId = std::size_t;

struct TreeNode
{
  VehicleState state;
  std::optional<NodeId> parent;
  /// Steering angle of the arc from the parent (0 for the root).
  double steering_used = 0.0;
  std::vector<NodeId> children;
  std::size_t live_children = 0;
  bool expanded = false;
  bool dead_end = false;
};

struct RrtParams
{
  int steering_samples = 5;
  /// Duration of one tree edge in seconds.
  double step_size = 1.0;
  double integration_step_size = 0.1;
  double expansion_velocity = 1.0;
  double goal_position_tolerance = 1.0;
  double goal_heading_tolerance = 0.5;
  double goal_bias = 0.05;
  int max_iterations = 50'000;
  std::uint64_t rng_seed = 1;
  /// Arc states must lie on cells strictly below this cost.
  int collision_threshold = 255;
  /// Exclude dead-end nodes from the nearest-node search. Disabling this is
  /// only useful for measuring what the pruning buys.
  bool prune_dead_ends = true;

  void validate() const;
};

/// Planned states, root first. `steering[i]` produced the edge from
/// `states[i]` to `states[i + 1]`.
struct GlobalPath
{
  std::vector<VehicleState> states;
  std::vector<double> steering;

  double length() const;
};

class TreeExhausted : public std::runtime_error
{
public:
  TreeExhausted() : std::runtime_error("every tree node is a dead end") {}
};

/// Tree storage with a uniform bucket index over node positions for the
/// nearest-node query.
class SearchTree
{
public:
  explicit SearchTree(double bucket_size = 2.0);

  NodeId add_root(const VehicleState& state);
  NodeId add_child(NodeId parent, const VehicleState& state, double steering);

  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  bool exhausted() const { return !nodes_.empty() && nodes_.front().dead_end; }

  void set_expanded(NodeId id) { nodes_.at(id).expanded = true; }

  /// Marks `id` dead and walks up the ancestry, killing every expanded
  /// ancestor left without live children. Returns the nodes newly marked.
  std::vector<NodeId> mark_dead_ends(NodeId id);

  /// Closest node to `point` in (x, y), lowest id on ties. Dead-end nodes are
  /// skipped unless `include_dead`. Throws TreeExhausted when nothing is
  /// eligible.
  NodeId nearest(Point2 point, bool include_dead = false) const;
  /// Reference linear scan with the same contract as `nearest`.
  NodeId nearest_scan(Point2 point, bool include_dead = false) const;

  /// True when some node lies within `position_tolerance` of `state` with a
  /// heading difference below `heading_tolerance`.
  bool has_similar(const VehicleState& state, double position_tolerance,
                   double heading_tolerance) const;

private:
  struct BucketKey
  {
    std::int64_t x;
    std::int64_t y;
    friend bool operator==(const BucketKey&, const BucketKey&) = default;
  };
  struct BucketHash
  {
    std::size_t operator()(const BucketKey& k) const
    {
      return std::hash<std::int64_t>{}(k.x * 73856093 ^ k.y * 19349663);
    }
  };

  BucketKey bucket_of(Point2 p) const;
  void index(NodeId id);

  double bucket_size_;
  std::vector<TreeNode> nodes_;
  std::unordered_map<BucketKey, std::vector<NodeId>, BucketHash> buckets_;
  std::int64_t min_bx_ = 0;
  std::int64_t max_bx_ = 0;
  std::int64_t min_by_ = 0;
  std::int64_t max_by_ = 0;
};

using Rng = std::mt19937_64;

/// Samples a target point: the goal position with probability goal_bias,
/// otherwise a uniform point of the map whose cell is below the collision
/// threshold. Throws std::runtime_error if rejection sampling gives up.
Point2 sample_free(const OccupancyGrid& grid, const VehicleState& goal, const RrtParams& params,
                   Rng& rng);

/// Expands `parent` with steering_samples arcs,
/// delta_i = min + (i / steering_samples) * (max - min) for i < steering_samples.
/// Only arcs whose every integration state is collision free and that do not
/// duplicate an existing node are inserted. Marks the parent expanded.
std::vector<NodeId> extend_children(SearchTree& tree, NodeId parent, const OccupancyGrid& grid,
                                    const RrtParams& params, const VehicleParams& vehicle);

GlobalPath extract_path(const SearchTree& tree, NodeId goal_node);

enum class PlanStatus
{
  success,
  start_in_collision,
  goal_in_collision,
  exhausted,
  iteration_limit,
};

std::string_view to_string(PlanStatus status);

struct PlanResult
{
  PlanStatus status = PlanStatus::iteration_limit;
  std::optional<GlobalPath> path;
  SearchTree tree{};
  int iterations = 0;
  /// Iterations whose nearest node had already been expanded.
  int skipped_reselections = 0;

  bool ok() const { return status == PlanStatus::success; }
};

/// Point source for the sampling phase; defaults to `sample_free`.
using Sampler = std::function<Point2(Rng&)>;

/// Observation hooks for auditing a planning run.
struct PlanObserver
{
  std::function<void(int iteration, NodeId node, bool was_dead)> on_nearest;
  std::function<void(int iteration, NodeId node)> on_dead_end;
};

PlanResult plan(const VehicleState& start, const VehicleState& goal, const OccupancyGrid& grid,
                const RrtParams& params, const VehicleParams& vehicle,
                const Sampler& sampler = {}, const PlanObserver& observer = {});

} // namespace nhmp
