#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhmp {

using Cost = std::uint8_t;

inline constexpr Cost kFreeCost = 0;
inline constexpr Cost kMaxInflatedCost = 254;
inline constexpr Cost kOccupiedCost = 255;

struct Point2
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct MapOrigin
{
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

struct CellIndex
{
  int col = 0;
  int row = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Row-major cost grid. Row 0 is the bottom edge of the map (smallest y in
/// the map frame); the map frame is placed in the world by `origin`.
class OccupancyGrid
{
public:
  OccupancyGrid() = default;

  /// Throws std::invalid_argument unless cells.size() == width * height and
  /// resolution > 0.
  OccupancyGrid(int width, int height, double resolution, MapOrigin origin,
                std::vector<Cost> cells);

  /// Uniform grid filled with `fill`.
  static OccupancyGrid filled(int width, int height, double resolution, MapOrigin origin = {},
                              Cost fill = kFreeCost);

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const MapOrigin& origin() const { return origin_; }
  std::span<const Cost> cells() const { return cells_; }

  bool contains(CellIndex c) const
  {
    return c.col >= 0 && c.row >= 0 && c.col < width_ && c.row < height_;
  }
  std::size_t linear(CellIndex c) const
  {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.col);
  }
  Cost at(CellIndex c) const { return cells_[linear(c)]; }
  void set(CellIndex c, Cost value) { cells_[linear(c)] = value; }

  Point2 world_to_map(Point2 world) const;
  Point2 map_to_world(Point2 map) const;
  /// Cell containing a world point; may lie outside the grid.
  CellIndex cell_of(Point2 world) const;
  Point2 cell_center(CellIndex c) const;

  /// World extent of the map along its own axes.
  double size_x() const { return width_ * resolution_; }
  double size_y() const { return height_ * resolution_; }

private:
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 1.0;
  MapOrigin origin_;
  std::vector<Cost> cells_;
};

struct InflationParams
{
  double inflation_radius = 1.5;
  /// Cells with cost at or above this value are treated as not free.
  int occupied_threshold = 255;

  void validate() const;
};

/// Map metadata in the map-server YAML layout.
struct MapMetadata
{
  std::string image;
  double resolution = 0.0;
  MapOrigin origin;
  bool negate = false;
  double occupied_thresh = 0.65;
  double free_thresh = 0.196;
};

/// Parses map-server YAML text. Throws MapFormatError on missing keys.
MapMetadata parse_map_metadata(const std::string& yaml_text);

/// Builds a grid from a binary PGM (P5, maxval 255) image and YAML metadata.
/// Pixels are thresholded into 0 (free) or 255 (occupied); unknown pixels
/// between the thresholds are treated as occupied.
OccupancyGrid load_map(std::span<const std::uint8_t> image_bytes, const std::string& metadata);

/// Reads a map YAML file and the PGM it references (relative to the YAML).
OccupancyGrid load_map_file(const std::string& yaml_path);

/// Serializes costs as a P5 image with pixel = 255 - cost (occupied is black).
std::vector<std::uint8_t> encode_pgm(const OccupancyGrid& grid);

/// YAML metadata matching `encode_pgm` output.
std::string encode_map_metadata(const OccupancyGrid& grid, const std::string& image_name);

class MapFormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Euclidean distance in meters from every cell center to the nearest cell
/// with cost 255 (infinity when there is none). Exact; computed with a
/// separable squared distance transform.
std::vector<double> distance_to_occupied(const OccupancyGrid& grid);

/// Linear-decay inflation around cells with cost 255:
/// cost = floor(255 * (1 - d / radius)) capped at 254, zero at d >= radius.
/// Existing cell values are never lowered.
OccupancyGrid inflate(const OccupancyGrid& grid, const InflationParams& params);

/// Cost of the cell containing (x, y); 255 outside the grid.
Cost cost_at(const OccupancyGrid& grid, double x, double y);

/// Bilinear interpolation between the four surrounding cell centers (edge
/// cells are clamped); 255 outside the grid.
double interpolated_cost(const OccupancyGrid& grid, double x, double y);

bool is_free(const OccupancyGrid& grid, double x, double y, const InflationParams& params);

} // namespace nhmp
