#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mazeslam/geometry.hpp"
#include "mazeslam/sensor_log.hpp"

namespace mazeslam {

struct WorldModel;

inline constexpr double kLogOddsClamp = 8.0;
inline const double kLogOddsHit = std::log(0.7 / 0.3);
inline const double kLogOddsMiss = std::log(0.4 / 0.6);
inline constexpr double kOccupiedThreshold = 0.65;
inline constexpr double kFreeThreshold = 0.196;

[[nodiscard]] inline double logodds_to_prob(double l) noexcept { return 1.0 / (1.0 + std::exp(-l)); }
[[nodiscard]] inline double prob_to_logodds(double p) noexcept { return std::log(p / (1.0 - p)); }

enum class CellClass : std::uint8_t { Free, Unknown, Occupied };

[[nodiscard]] inline CellClass classify_logodds(double l) noexcept {
    const double p = logodds_to_prob(l);
    if (p > kOccupiedThreshold) return CellClass::Occupied;
    if (p < kFreeThreshold) return CellClass::Free;
    return CellClass::Unknown;
}

struct CellIndex {
    int col{0};
    int row{0};
    friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Axis-aligned log-odds raster. Cell (col, row) covers
/// [origin.x + col·res, origin.x + (col+1)·res) × [origin.y + row·res, ...).
/// Cells are stored row-major with row 0 at the minimum y.
class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(double resolution, int width, int height, Vec2 origin, double fill = 0.0);

    [[nodiscard]] double resolution() const noexcept { return resolution_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] Vec2 origin() const noexcept { return origin_; }
    [[nodiscard]] Pose2 origin_pose() const noexcept { return {origin_.x, origin_.y, 0.0}; }
    [[nodiscard]] std::size_t size() const noexcept { return cells_.size(); }

    [[nodiscard]] bool contains(CellIndex c) const noexcept {
        return c.col >= 0 && c.row >= 0 && c.col < width_ && c.row < height_;
    }
    [[nodiscard]] std::size_t index(CellIndex c) const noexcept {
        return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.col);
    }
    [[nodiscard]] double& at(CellIndex c) noexcept { return cells_[index(c)]; }
    [[nodiscard]] double at(CellIndex c) const noexcept { return cells_[index(c)]; }
    [[nodiscard]] CellClass classify(CellIndex c) const noexcept { return classify_logodds(at(c)); }

    /// Adds to a cell and clamps to ±8.
    void add(CellIndex c, double delta) noexcept;

    /// Continuous cell coordinates (cell units, relative to the origin).
    [[nodiscard]] Vec2 to_grid_units(Vec2 p) const noexcept {
        return {(p.x - origin_.x) / resolution_, (p.y - origin_.y) / resolution_};
    }
    /// floor of grid units; not bounds-checked.
    [[nodiscard]] CellIndex cell_of(Vec2 p) const noexcept;
    [[nodiscard]] Vec2 cell_center(CellIndex c) const noexcept {
        return {origin_.x + (c.col + 0.5) * resolution_, origin_.y + (c.row + 0.5) * resolution_};
    }

    [[nodiscard]] std::vector<double>& cells() noexcept { return cells_; }
    [[nodiscard]] const std::vector<double>& cells() const noexcept { return cells_; }

    [[nodiscard]] bool same_geometry(const OccupancyGrid& o) const noexcept {
        return resolution_ == o.resolution_ && width_ == o.width_ && height_ == o.height_ && origin_ == o.origin_;
    }

private:
    double resolution_{0.05};
    int width_{0};
    int height_{0};
    Vec2 origin_;
    std::vector<double> cells_;
};

/// Cell containing p, or nullopt when p lies outside the grid (never clamped).
[[nodiscard]] std::optional<CellIndex> world_to_cell(const OccupancyGrid& grid, Vec2 p) noexcept;

/// Visits, in order, every cell the segment p0→p1 passes through (4-connected
/// walk, x-step first on exact corner crossings), starting with the cell of p0
/// and ending with the cell of p1. Indices may lie outside the grid. The
/// visitor returns false to stop early.
template <class Visitor>
void traverse_cells(const OccupancyGrid& grid, Vec2 p0, Vec2 p1, Visitor&& visit) {
    const Vec2 u0 = grid.to_grid_units(p0);
    const Vec2 u1 = grid.to_grid_units(p1);
    CellIndex c = grid.cell_of(p0);
    const CellIndex end = grid.cell_of(p1);
    const Vec2 d = u1 - u0;
    const int step_x = end.col > c.col ? 1 : (end.col < c.col ? -1 : 0);
    const int step_y = end.row > c.row ? 1 : (end.row < c.row ? -1 : 0);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double t_max_x = kInf, t_max_y = kInf, t_delta_x = kInf, t_delta_y = kInf;
    if (step_x != 0 && d.x != 0.0) {
        t_delta_x = std::abs(1.0 / d.x);
        t_max_x = step_x > 0 ? (c.col + 1 - u0.x) / d.x : (u0.x - c.col) / -d.x;
    }
    if (step_y != 0 && d.y != 0.0) {
        t_delta_y = std::abs(1.0 / d.y);
        t_max_y = step_y > 0 ? (c.row + 1 - u0.y) / d.y : (u0.y - c.row) / -d.y;
    }
    int remaining_x = std::abs(end.col - c.col);
    int remaining_y = std::abs(end.row - c.row);
    while (true) {
        if (!visit(c)) return;
        if (remaining_x == 0 && remaining_y == 0) return;
        const bool take_x = remaining_y == 0 || (remaining_x > 0 && t_max_x <= t_max_y);
        if (take_x) {
            c.col += step_x;
            t_max_x += t_delta_x;
            --remaining_x;
        } else {
            c.row += step_y;
            t_max_y += t_delta_y;
            --remaining_y;
        }
    }
}

/// Inverse-sensor-model update. Throws UsageError if the pose lies outside.
void integrate_scan(OccupancyGrid& grid, const Pose2& pose, const LidarScan& scan);

/// Distance along the ray to the entry of the first cell with occupancy
/// probability above occ_threshold; nullopt if none within max_range.
/// Throws UsageError if origin lies outside the grid.
[[nodiscard]] std::optional<double> raycast_grid(const OccupancyGrid& grid, Vec2 origin, double angle,
                                                 double max_range, double occ_threshold = kOccupiedThreshold);

/// Distance from every cell center to the nearest occupied cell center,
/// capped at d_max.
class LikelihoodField {
public:
    LikelihoodField() = default;
    LikelihoodField(const OccupancyGrid& geometry, std::vector<double> distances, double d_max);

    [[nodiscard]] double resolution() const noexcept { return resolution_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] Vec2 origin() const noexcept { return origin_; }
    [[nodiscard]] double d_max() const noexcept { return d_max_; }

    [[nodiscard]] double at(CellIndex c) const noexcept {
        return distances_[static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) +
                          static_cast<std::size_t>(c.col)];
    }
    /// Distance at the cell containing p; nullopt off-grid.
    [[nodiscard]] std::optional<double> lookup(Vec2 p) const noexcept;
    /// Bilinear interpolation between cell centers (edge cells clamp);
    /// nullopt off-grid.
    [[nodiscard]] std::optional<double> interpolate(Vec2 p) const noexcept;
    [[nodiscard]] const std::vector<double>& distances() const noexcept { return distances_; }

private:
    double resolution_{0.05};
    int width_{0};
    int height_{0};
    Vec2 origin_;
    double d_max_{0};
    std::vector<double> distances_;
};

[[nodiscard]] LikelihoodField build_likelihood_field(const OccupancyGrid& grid, double d_max,
                                                     double occ_threshold = kOccupiedThreshold);

/// Ground-truth raster over the world bounds: cells touched by a wall are +8,
/// every other cell -8.
[[nodiscard]] OccupancyGrid rasterize_world(const WorldModel& world, double resolution);

/// Binary PGM (P5) body of the trinary map, top row first.
[[nodiscard]] std::string encode_pgm(const OccupancyGrid& grid);

/// Writes <stem>.pgm and the <stem>.yaml sidecar; `path` may name either.
void save_map(const OccupancyGrid& grid, const std::filesystem::path& path);

/// Reads a map from its sidecar (or its .pgm, with the sidecar next to it).
[[nodiscard]] OccupancyGrid load_map(const std::filesystem::path& path);

}  // namespace mazeslam
