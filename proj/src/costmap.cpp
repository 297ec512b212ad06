#include "nhmp/costmap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include <yaml-cpp/yaml.h>

namespace nhmp {

OccupancyGrid::OccupancyGrid(int width, int height, double resolution, MapOrigin origin,
                             std::vector<Cost> cells)
  : width_(width), height_(height), resolution_(resolution), origin_(origin),
    cells_(std::move(cells))
{
  if (width < 0 || height < 0) {
    throw std::invalid_argument("grid dimensions must be non-negative");
  }
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw std::invalid_argument("grid resolution must be positive");
  }
  if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("cell count does not match width * height");
  }
}

OccupancyGrid OccupancyGrid::filled(int width, int height, double resolution, MapOrigin origin,
                                    Cost fill)
{
  return OccupancyGrid(width, height, resolution, origin,
                       std::vector<Cost>(static_cast<std::size_t>(std::max(width, 0)) *
                                             static_cast<std::size_t>(std::max(height, 0)),
                                         fill));
}

Point2 OccupancyGrid::world_to_map(Point2 world) const
{
  const double dx = world.x - origin_.x;
  const double dy = world.y - origin_.y;
  if (origin_.yaw == 0.0) {
    return {dx, dy};
  }
  const double c = std::cos(origin_.yaw);
  const double s = std::sin(origin_.yaw);
  return {c * dx + s * dy, -s * dx + c * dy};
}

Point2 OccupancyGrid::map_to_world(Point2 map) const
{
  if (origin_.yaw == 0.0) {
    return {map.x + origin_.x, map.y + origin_.y};
  }
  const double c = std::cos(origin_.yaw);
  const double s = std::sin(origin_.yaw);
  return {origin_.x + c * map.x - s * map.y, origin_.y + s * map.x + c * map.y};
}

CellIndex OccupancyGrid::cell_of(Point2 world) const
{
  const Point2 m = world_to_map(world);
  const double col = std::floor(m.x / resolution_);
  const double row = std::floor(m.y / resolution_);
  // Saturate far-away points so the int conversion stays defined.
  constexpr double kLimit = 1e9;
  return {static_cast<int>(std::clamp(col, -kLimit, kLimit)),
          static_cast<int>(std::clamp(row, -kLimit, kLimit))};
}

Point2 OccupancyGrid::cell_center(CellIndex c) const
{
  return map_to_world({(c.col + 0.5) * resolution_, (c.row + 0.5) * resolution_});
}

void InflationParams::validate() const
{
  if (!(inflation_radius >= 0.0) || !std::isfinite(inflation_radius)) {
    throw std::invalid_argument("inflation_radius must be >= 0");
  }
  if (occupied_threshold <= 0 || occupied_threshold > 255) {
    throw std::invalid_argument("occupied_threshold must be in (0, 255]");
  }
}

// ---------------------------------------------------------------------------
// Map-server I/O

MapMetadata parse_map_metadata(const std::string& yaml_text)
{
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw MapFormatError(std::string("map metadata is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) {
    throw MapFormatError("map metadata must be a YAML mapping");
  }
  for (const char* key : {"resolution", "origin", "negate", "occupied_thresh", "free_thresh"}) {
    if (!root[key]) {
      throw MapFormatError(std::string("map metadata is missing key '") + key + "'");
    }
  }

  MapMetadata meta;
  try {
    if (root["image"]) {
      meta.image = root["image"].as<std::string>();
    }
    meta.resolution = root["resolution"].as<double>();
    const YAML::Node origin = root["origin"];
    if (!origin.IsSequence() || origin.size() != 3) {
      throw MapFormatError("map origin must be a sequence [x, y, yaw]");
    }
    meta.origin = {origin[0].as<double>(), origin[1].as<double>(), origin[2].as<double>()};
    meta.negate = root["negate"].as<int>() != 0;
    meta.occupied_thresh = root["occupied_thresh"].as<double>();
    meta.free_thresh = root["free_thresh"].as<double>();
  } catch (const YAML::Exception& e) {
    throw MapFormatError(std::string("bad map metadata value: ") + e.what());
  }
  if (!(meta.resolution > 0.0)) {
    throw MapFormatError("map resolution must be positive");
  }
  return meta;
}

namespace {

class PgmReader
{
public:
  explicit PgmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic()
  {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '5') {
      throw MapFormatError("image is not a binary PGM (missing P5 magic)");
    }
    pos_ = 2;
  }

  long header_number()
  {
    skip_whitespace_and_comments();
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) {
        throw MapFormatError("PGM header value too large");
      }
      ++pos_;
      ++digits;
    }
    if (digits == 0) {
      throw MapFormatError("malformed PGM header");
    }
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::span<const std::uint8_t> raster(std::size_t count)
  {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw MapFormatError("malformed PGM header terminator");
    }
    ++pos_;
    if (bytes_.size() - pos_ < count) {
      throw MapFormatError("PGM raster is truncated");
    }
    return bytes_.subspan(pos_, count);
  }

private:
  void skip_whitespace_and_comments()
  {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
          ++pos_;
        }
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr long kMaxCells = 1L << 28;

} // namespace

OccupancyGrid load_map(std::span<const std::uint8_t> image_bytes, const std::string& metadata)
{
  const MapMetadata meta = parse_map_metadata(metadata);

  PgmReader reader(image_bytes);
  reader.expect_magic();
  const long width = reader.header_number();
  const long height = reader.header_number();
  const long maxval = reader.header_number();
  if (width <= 0 || height <= 0) {
    throw MapFormatError("PGM dimensions must be positive");
  }
  if (width * height > kMaxCells) {
    throw MapFormatError("PGM dimensions overflow the supported grid size");
  }
  if (maxval != 255) {
    throw MapFormatError("PGM maxval must be 255");
  }
  const auto raster = reader.raster(static_cast<std::size_t>(width * height));

  std::vector<Cost> cells(raster.size());
  for (long r = 0; r < height; ++r) {
    // Image rows run top-down; grid rows bottom-up.
    const long grid_row = height - 1 - r;
    for (long c = 0; c < width; ++c) {
      const double pixel = raster[static_cast<std::size_t>(r * width + c)];
      const double occupancy = meta.negate ? pixel / 255.0 : (255.0 - pixel) / 255.0;
      const Cost cost = occupancy < meta.free_thresh ? kFreeCost : kOccupiedCost;
      cells[static_cast<std::size_t>(grid_row * width + c)] = cost;
    }
  }
  return OccupancyGrid(static_cast<int>(width), static_cast<int>(height), meta.resolution,
                       meta.origin, std::move(cells));
}

OccupancyGrid load_map_file(const std::string& yaml_path)
{
  std::ifstream yaml_in(yaml_path);
  if (!yaml_in) {
    throw MapFormatError("cannot open map metadata " + yaml_path);
  }
  const std::string yaml_text{std::istreambuf_iterator<char>(yaml_in), {}};
  const MapMetadata meta = parse_map_metadata(yaml_text);
  if (meta.image.empty()) {
    throw MapFormatError("map metadata is missing key 'image'");
  }

  std::filesystem::path image_path(meta.image);
  if (image_path.is_relative()) {
    image_path = std::filesystem::path(yaml_path).parent_path() / image_path;
  }
  std::ifstream image_in(image_path, std::ios::binary);
  if (!image_in) {
    throw MapFormatError("cannot open map image " + image_path.string());
  }
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(image_in), {}};
  return load_map(bytes, yaml_text);
}

std::vector<std::uint8_t> encode_pgm(const OccupancyGrid& grid)
{
  const std::string header =
      "P5\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + grid.cells().size());
  for (int r = grid.height() - 1; r >= 0; --r) {
    for (int c = 0; c < grid.width(); ++c) {
      out.push_back(static_cast<std::uint8_t>(255 - grid.at({c, r})));
    }
  }
  return out;
}

std::string encode_map_metadata(const OccupancyGrid& grid, const std::string& image_name)
{
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "image" << YAML::Value << image_name;
  out << YAML::Key << "resolution" << YAML::Value << grid.resolution();
  out << YAML::Key << "origin" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << grid.origin().x << grid.origin().y << grid.origin().yaw << YAML::EndSeq;
  out << YAML::Key << "negate" << YAML::Value << 0;
  out << YAML::Key << "occupied_thresh" << YAML::Value << 0.65;
  out << YAML::Key << "free_thresh" << YAML::Value << 0.196;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Inflation

namespace {

constexpr double kFar = 1e20;

// Lower envelope of parabolas rooted at (q, f[q]); writes squared distances.
// f values are bounded by kFar, so no intersection falls below -kFar.
void squared_distance_1d(std::span<const double> f, std::span<double> out,
                         std::vector<int>& vertices, std::vector<double>& bounds)
{
  const int n = static_cast<int>(f.size());
  vertices.assign(static_cast<std::size_t>(n), 0);
  bounds.assign(static_cast<std::size_t>(n) + 1, 0.0);
  const auto intersection = [&](int q, int v) {
    return ((f[q] + q * q) - (f[v] + v * v)) / (2.0 * (q - v));
  };

  std::size_t k = 0;
  bounds[0] = -2.0 * kFar;
  bounds[1] = 2.0 * kFar;
  for (int q = 1; q < n; ++q) {
    double s = intersection(q, vertices[k]);
    while (s <= bounds[k]) {
      --k;
      s = intersection(q, vertices[k]);
    }
    ++k;
    vertices[k] = q;
    bounds[k] = s;
    bounds[k + 1] = 2.0 * kFar;
  }

  k = 0;
  for (int q = 0; q < n; ++q) {
    while (bounds[k + 1] < q) {
      ++k;
    }
    const int v = vertices[k];
    out[static_cast<std::size_t>(q)] = (q - v) * (q - v) + f[v];
  }
}

} // namespace

std::vector<double> distance_to_occupied(const OccupancyGrid& grid)
{
  const int w = grid.width();
  const int h = grid.height();
  std::vector<double> field(grid.cells().size(), kFar);
  bool any_occupied = false;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (grid.cells()[i] == kOccupiedCost) {
      field[i] = 0.0;
      any_occupied = true;
    }
  }
  if (!any_occupied) {
    return std::vector<double>(field.size(), std::numeric_limits<double>::infinity());
  }

  std::vector<int> vertices;
  std::vector<double> bounds;
  std::vector<double> line_in;
  std::vector<double> line_out;

  line_in.resize(static_cast<std::size_t>(w));
  line_out.resize(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      line_in[static_cast<std::size_t>(c)] = field[grid.linear({c, r})];
    }
    squared_distance_1d(line_in, line_out, vertices, bounds);
    for (int c = 0; c < w; ++c) {
      field[grid.linear({c, r})] = line_out[static_cast<std::size_t>(c)];
    }
  }

  line_in.resize(static_cast<std::size_t>(h));
  line_out.resize(static_cast<std::size_t>(h));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) {
      line_in[static_cast<std::size_t>(r)] = field[grid.linear({c, r})];
    }
    squared_distance_1d(line_in, line_out, vertices, bounds);
    for (int r = 0; r < h; ++r) {
      field[grid.linear({c, r})] = line_out[static_cast<std::size_t>(r)];
    }
  }

  for (double& d : field) {
    d = std::sqrt(d) * grid.resolution();
  }
  return field;
}

OccupancyGrid inflate(const OccupancyGrid& grid, const InflationParams& params)
{
  params.validate();
  if (params.inflation_radius == 0.0) {
    return grid;
  }
  const std::vector<double> distance = distance_to_occupied(grid);
  std::vector<Cost> cells(grid.cells().begin(), grid.cells().end());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] == kOccupiedCost || distance[i] >= params.inflation_radius) {
      continue;
    }
    const double decay = std::floor(255.0 * (1.0 - distance[i] / params.inflation_radius));
    const auto inflated = static_cast<Cost>(std::clamp(decay, 0.0, double{kMaxInflatedCost}));
    cells[i] = std::max(cells[i], inflated);
  }
  return OccupancyGrid(grid.width(), grid.height(), grid.resolution(), grid.origin(),
                       std::move(cells));
}

// ---------------------------------------------------------------------------
// Queries

Cost cost_at(const OccupancyGrid& grid, double x, double y)
{
  const CellIndex c = grid.cell_of({x, y});
  return grid.contains(c) ? grid.at(c) : kOccupiedCost;
}

double interpolated_cost(const OccupancyGrid& grid, double x, double y)
{
  const Point2 m = grid.world_to_map({x, y});
  if (!(m.x >= 0.0 && m.y >= 0.0 && m.x < grid.size_x() && m.y < grid.size_y())) {
    return kOccupiedCost;
  }
  const double fx = m.x / grid.resolution() - 0.5;
  const double fy = m.y / grid.resolution() - 0.5;
  const double base_x = std::floor(fx);
  const double base_y = std::floor(fy);
  const double tx = fx - base_x;
  const double ty = fy - base_y;
  const int c0 = std::clamp(static_cast<int>(base_x), 0, grid.width() - 1);
  const int c1 = std::clamp(static_cast<int>(base_x) + 1, 0, grid.width() - 1);
  const int r0 = std::clamp(static_cast<int>(base_y), 0, grid.height() - 1);
  const int r1 = std::clamp(static_cast<int>(base_y) + 1, 0, grid.height() - 1);

  const double bottom = (1.0 - tx) * grid.at({c0, r0}) + tx * grid.at({c1, r0});
  const double top = (1.0 - tx) * grid.at({c0, r1}) + tx * grid.at({c1, r1});
  return (1.0 - ty) * bottom + ty * top;
}

bool is_free(const OccupancyGrid& grid, double x, double y, const InflationParams& params)
{
  return cost_at(grid, x, y) < params.occupied_threshold;
}

} // namespace nhmp
