#include "mazeslam/grid_map.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mazeslam/errors.hpp"
#include "mazeslam/world_sim.hpp"

namespace mazeslam {

namespace {

// Cell-unit tolerance so coordinates that sit on a cell boundary up to
// round-off land in the upper cell consistently.
constexpr double kBoundarySnap = 1e-9;

int snapped_floor(double u) noexcept { return static_cast<int>(std::floor(u + kBoundarySnap)); }

}  // namespace

OccupancyGrid::OccupancyGrid(double resolution, int width, int height, Vec2 origin, double fill)
    : resolution_(resolution), width_(width), height_(height), origin_(origin) {
    if (!(resolution > 0.0)) throw UsageError("grid resolution must be positive");
    if (width < 0 || height < 0) throw UsageError("grid dimensions must be non-negative");
    cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

void OccupancyGrid::add(CellIndex c, double delta) noexcept {
    double& v = at(c);
    v = std::clamp(v + delta, -kLogOddsClamp, kLogOddsClamp);
}

CellIndex OccupancyGrid::cell_of(Vec2 p) const noexcept {
    const Vec2 u = to_grid_units(p);
    return {snapped_floor(u.x), snapped_floor(u.y)};
}

std::optional<CellIndex> world_to_cell(const OccupancyGrid& grid, Vec2 p) noexcept {
    const Vec2 u = grid.to_grid_units(p);
    if (!(u.x + kBoundarySnap >= 0.0) || !(u.y + kBoundarySnap >= 0.0)) return std::nullopt;
    const CellIndex c = grid.cell_of(p);
    if (!grid.contains(c)) return std::nullopt;
    return c;
}

void integrate_scan(OccupancyGrid& grid, const Pose2& pose, const LidarScan& scan) {
    const Vec2 sensor = pose.translation();
    if (!world_to_cell(grid, sensor)) throw UsageError("integrate_scan: pose lies outside the grid");
    for (std::size_t i = 0; i < scan.size(); ++i) {
        const bool hit = scan.has_return(i);
        const double range = hit ? scan.ranges[i] : scan.range_max;
        const double a = pose.theta() + scan.angle(i);
        const Vec2 end = sensor + range * Vec2{std::cos(a), std::sin(a)};
        // Sensor and endpoint cells are excluded from the free update; the
        // endpoint cell of a return is marked occupied.
        bool first = true;
        bool has_pending = false;
        CellIndex pending;
        traverse_cells(grid, sensor, end, [&](CellIndex c) {
            if (!grid.contains(c)) return false;
            if (has_pending) grid.add(pending, kLogOddsMiss);
            has_pending = !first;
            pending = c;
            first = false;
            return true;
        });
        if (has_pending) {
            if (pending != grid.cell_of(end)) {
                grid.add(pending, kLogOddsMiss);  // ray left the grid early
            } else if (hit) {
                grid.add(pending, kLogOddsHit);
            }
        }
    }
}

std::optional<double> raycast_grid(const OccupancyGrid& grid, Vec2 origin, double angle, double max_range,
                                   double occ_threshold) {
    if (!world_to_cell(grid, origin)) throw UsageError("raycast_grid: origin lies outside the grid");
    const Vec2 d{std::cos(angle), std::sin(angle)};
    const Vec2 end = origin + max_range * d;
    const double res = grid.resolution();
    std::optional<double> result;
    traverse_cells(grid, origin, end, [&](CellIndex c) {
        if (!grid.contains(c)) return false;
        if (logodds_to_prob(grid.at(c)) > occ_threshold) {
            // Entry distance into the cell box.
            const double x0 = grid.origin().x + c.col * res;
            const double y0 = grid.origin().y + c.row * res;
            double tx = -std::numeric_limits<double>::infinity();
            double ty = tx;
            if (d.x > 0) tx = (x0 - origin.x) / d.x;
            if (d.x < 0) tx = (x0 + res - origin.x) / d.x;
            if (d.y > 0) ty = (y0 - origin.y) / d.y;
            if (d.y < 0) ty = (y0 + res - origin.y) / d.y;
            const double t = std::max({tx, ty, 0.0});
            if (t <= max_range) result = t;
            return false;
        }
        return true;
    });
    return result;
}

LikelihoodField::LikelihoodField(const OccupancyGrid& g, std::vector<double> distances, double d_max)
    : resolution_(g.resolution()),
      width_(g.width()),
      height_(g.height()),
      origin_(g.origin()),
      d_max_(d_max),
      distances_(std::move(distances)) {}

std::optional<double> LikelihoodField::lookup(Vec2 p) const noexcept {
    const double ux = (p.x - origin_.x) / resolution_;
    const double uy = (p.y - origin_.y) / resolution_;
    const int col = snapped_floor(ux);
    const int row = snapped_floor(uy);
    if (col < 0 || row < 0 || col >= width_ || row >= height_) return std::nullopt;
    return at({col, row});
}

std::optional<double> LikelihoodField::interpolate(Vec2 p) const noexcept {
    const double ux = (p.x - origin_.x) / resolution_;
    const double uy = (p.y - origin_.y) / resolution_;
    if (snapped_floor(ux) < 0 || snapped_floor(uy) < 0 || snapped_floor(ux) >= width_ ||
        snapped_floor(uy) >= height_) {
        return std::nullopt;
    }
    const double gx = std::clamp(ux - 0.5, 0.0, static_cast<double>(width_ - 1));
    const double gy = std::clamp(uy - 0.5, 0.0, static_cast<double>(height_ - 1));
    const int c0 = std::min(static_cast<int>(gx), width_ - 1);
    const int r0 = std::min(static_cast<int>(gy), height_ - 1);
    const int c1 = std::min(c0 + 1, width_ - 1);
    const int r1 = std::min(r0 + 1, height_ - 1);
    const double fx = gx - c0;
    const double fy = gy - r0;
    const double top = (1.0 - fx) * at({c0, r1}) + fx * at({c1, r1});
    const double bottom = (1.0 - fx) * at({c0, r0}) + fx * at({c1, r0});
    return (1.0 - fy) * bottom + fy * top;
}

namespace {

/// 1-D squared Euclidean distance transform (lower envelope of parabolas).
/// Cells without a seed carry kFar in f.
constexpr double kFar = 1e20;

void distance_transform_1d(const double* f, double* out, int n, std::vector<int>& v, std::vector<double>& z) {
    if (n <= 0) return;
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, 0.0);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::size_t k = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const int p = v[k];
        out[q] = static_cast<double>(q - p) * (q - p) + f[p];
    }
}

}  // namespace

LikelihoodField build_likelihood_field(const OccupancyGrid& grid, double d_max, double occ_threshold) {
    const int w = grid.width();
    const int h = grid.height();
    const double occ_logodds = prob_to_logodds(occ_threshold);
    std::vector<double> sq(grid.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = grid.cells()[i] > occ_logodds ? 0.0 : kFar;

    std::vector<int> v;
    std::vector<double> z;
    std::vector<double> in(static_cast<std::size_t>(std::max(w, h)));
    std::vector<double> out(in.size());
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) in[static_cast<std::size_t>(r)] = sq[static_cast<std::size_t>(r * w + c)];
        distance_transform_1d(in.data(), out.data(), h, v, z);
        for (int r = 0; r < h; ++r) sq[static_cast<std::size_t>(r * w + c)] = out[static_cast<std::size_t>(r)];
    }
    for (int r = 0; r < h; ++r) {
        double* row = sq.data() + static_cast<std::ptrdiff_t>(r) * w;
        std::copy(row, row + w, in.begin());
        distance_transform_1d(in.data(), row, w, v, z);
    }
    const double res = grid.resolution();
    for (double& d : sq) d = std::min(std::sqrt(d) * res, d_max);
    return LikelihoodField(grid, std::move(sq), d_max);
}

OccupancyGrid rasterize_world(const WorldModel& world, double resolution) {
    if (!(resolution > 0.0)) throw UsageError("rasterize_world: resolution must be positive");
    const auto& b = world.bounds;
    // One extra cell so walls lying on the max edges are representable.
    const int w = static_cast<int>(std::floor((b.xmax - b.xmin) / resolution + kBoundarySnap)) + 1;
    const int h = static_cast<int>(std::floor((b.ymax - b.ymin) / resolution + kBoundarySnap)) + 1;
    OccupancyGrid grid(resolution, w, h, {b.xmin, b.ymin}, -kLogOddsClamp);
    for (const auto& s : world.segments) {
        traverse_cells(grid, s.a, s.b, [&](CellIndex c) {
            if (grid.contains(c)) grid.at(c) = kLogOddsClamp;
            return true;
        });
    }
    return grid;
}

namespace {

constexpr unsigned char kPixelOccupied = 0;
constexpr unsigned char kPixelFree = 254;
constexpr unsigned char kPixelUnknown = 205;

std::pair<std::filesystem::path, std::filesystem::path> map_paths(const std::filesystem::path& path) {
    auto stem = path;
    if (stem.extension() == ".pgm" || stem.extension() == ".yaml") stem.replace_extension();
    auto pgm = stem;
    pgm += ".pgm";
    auto yaml = stem;
    yaml += ".yaml";
    return {pgm, yaml};
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string encode_pgm(const OccupancyGrid& grid) {
    std::string out = "P5\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) + "\n255\n";
    out.reserve(out.size() + grid.size());
    for (int r = grid.height() - 1; r >= 0; --r) {
        for (int c = 0; c < grid.width(); ++c) {
            switch (grid.classify({c, r})) {
                case CellClass::Occupied: out.push_back(static_cast<char>(kPixelOccupied)); break;
                case CellClass::Free: out.push_back(static_cast<char>(kPixelFree)); break;
                case CellClass::Unknown: out.push_back(static_cast<char>(kPixelUnknown)); break;
            }
        }
    }
    return out;
}

void save_map(const OccupancyGrid& grid, const std::filesystem::path& path) {
    const auto [pgm, yaml] = map_paths(path);
    {
        std::ofstream out(pgm, std::ios::binary);
        if (!out) throw IoError("cannot write " + pgm.string());
        const std::string bytes = encode_pgm(grid);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + pgm.string());
    }
    std::ofstream out(yaml, std::ios::binary);
    if (!out) throw IoError("cannot write " + yaml.string());
    out << "image: " << pgm.filename().string() << '\n'
        << "resolution: " << format_double(grid.resolution()) << '\n'
        << "origin: [" << format_double(grid.origin().x) << ", " << format_double(grid.origin().y) << ", 0]\n"
        << "occupied_thresh: 0.65\n"
        << "free_thresh: 0.196\n";
    if (!out) throw IoError("write failed for " + yaml.string());
}

namespace {

OccupancyGrid decode_pgm(const std::string& bytes, double resolution, Vec2 origin) {
    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos == start) throw InputError(std::string("malformed PGM header: missing ") + what);
        return std::stoi(bytes.substr(start, pos - start));
    };
    if (bytes.size() < 2 || bytes.compare(0, 2, "P5") != 0) throw InputError("malformed PGM: expected P5 magic");
    pos = 2;
    const int w = read_int("width");
    const int h = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval != 255) throw InputError("malformed PGM: maxval must be 255");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw InputError("malformed PGM: truncated header");
    }
    ++pos;
    const std::size_t expected = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const std::size_t available = bytes.size() - pos;
    if (available < expected) throw InputError("malformed PGM: truncated pixel data");
    if (available > expected) throw InputError("PGM dimension mismatch: trailing pixel data");

    OccupancyGrid grid(resolution, w, h, origin);
    for (int r = h - 1; r >= 0; --r) {
        for (int c = 0; c < w; ++c) {
            const auto px = static_cast<unsigned char>(bytes[pos++]);
            double l;
            switch (px) {
                case kPixelOccupied: l = kLogOddsClamp; break;
                case kPixelFree: l = -kLogOddsClamp; break;
                case kPixelUnknown: l = 0.0; break;
                default: throw InputError("PGM: unknown pixel value " + std::to_string(px));
            }
            grid.at({c, r}) = l;
        }
    }
    return grid;
}

}  // namespace

OccupancyGrid load_map(const std::filesystem::path& path) {
    const auto [pgm_default, yaml] = map_paths(path);
    YAML::Node meta;
    try {
        meta = YAML::LoadFile(yaml.string());
    } catch (const YAML::BadFile&) {
        throw IoError("cannot open map sidecar " + yaml.string());
    } catch (const YAML::Exception& e) {
        throw InputError("malformed map sidecar: " + std::string(e.what()));
    }
    double resolution;
    Vec2 origin;
    std::filesystem::path image;
    try {
        for (const char* key : {"image", "resolution", "origin"}) {
            if (!meta[key]) throw InputError(std::string("map sidecar is missing '") + key + "'");
        }
        image = yaml.parent_path() / meta["image"].as<std::string>();
        resolution = meta["resolution"].as<double>();
        const auto o = meta["origin"];
        if (!o.IsSequence() || o.size() != 3) throw InputError("map sidecar 'origin' must be [x, y, theta]");
        origin = {o[0].as<double>(), o[1].as<double>()};
        if (o[2].as<double>() != 0.0) throw InputError("map origin theta must be 0");
    } catch (const YAML::Exception& e) {
        throw InputError("malformed map sidecar: " + std::string(e.what()));
    }
    if (!(resolution > 0.0)) throw InputError("map resolution must be positive");
    std::ifstream in(image, std::ios::binary);
    if (!in) throw IoError("cannot open map image " + image.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_pgm(ss.str(), resolution, origin);
}

}  // namespace mazeslam
