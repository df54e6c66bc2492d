#include "mazeslam/nav_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "mazeslam/errors.hpp"
#include "mazeslam/world_sim.hpp"

namespace mazeslam {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

struct StepCounts {
    long straight{0};
    long diagonal{0};
};

}  // namespace

OccupancyGrid inflate(const OccupancyGrid& grid, double radius) {
    if (!(radius >= 0.0)) throw UsageError("inflation radius must be non-negative");
    const LikelihoodField field = build_likelihood_field(grid, radius + grid.resolution());
    OccupancyGrid out(grid.resolution(), grid.width(), grid.height(), grid.origin(), -kLogOddsClamp);
    const double tol = 1e-9 * std::max(1.0, radius);
    for (int r = 0; r < grid.height(); ++r) {
        for (int c = 0; c < grid.width(); ++c) {
            const CellIndex cell{c, r};
            const bool blocked = grid.classify(cell) != CellClass::Free || field.at(cell) <= radius + tol;
            if (blocked) out.at(cell) = kLogOddsClamp;
        }
    }
    return out;
}

double octile_distance(CellIndex a, CellIndex b, double resolution) noexcept {
    const int dx = std::abs(a.col - b.col);
    const int dy = std::abs(a.row - b.row);
    const int lo = std::min(dx, dy);
    const int hi = std::max(dx, dy);
    return resolution * (hi - lo) + resolution * kSqrt2 * lo;
}

Path plan_astar(const OccupancyGrid& inflated, const Pose2& start, Vec2 goal) {
    const auto s = world_to_cell(inflated, start.translation());
    const auto g = world_to_cell(inflated, goal);
    if (!s || is_blocked(inflated, *s)) throw PlanError(PlanFailure::StartBlocked, "start cell is blocked");
    if (!g || is_blocked(inflated, *g)) throw PlanError(PlanFailure::GoalBlocked, "goal cell is blocked");

    const int w = inflated.width();
    const double res = inflated.resolution();
    const std::size_t n = inflated.size();
    const auto index = [w](CellIndex c) { return static_cast<std::size_t>(c.row) * w + c.col; };
    const auto cell = [w](std::size_t i) { return CellIndex{static_cast<int>(i % w), static_cast<int>(i / w)}; };

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> cost(n, kInf);
    std::vector<StepCounts> steps(n);
    std::vector<std::size_t> parent(n, n);
    std::vector<bool> closed(n, false);
    using Entry = std::tuple<double, double, std::size_t>;  // f, h, index
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

    const std::size_t si = index(*s), gi = index(*g);
    cost[si] = 0.0;
    const double h0 = octile_distance(*s, *g, res);
    open.emplace(h0, h0, si);
    while (!open.empty()) {
        const auto [f, h, i] = open.top();
        open.pop();
        if (closed[i]) continue;
        closed[i] = true;
        if (i == gi) break;
        const CellIndex c = cell(i);
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const CellIndex nb{c.col + dc, c.row + dr};
                if (is_blocked(inflated, nb)) continue;
                const std::size_t j = index(nb);
                if (closed[j]) continue;
                const bool diag = dr != 0 && dc != 0;
                StepCounts sc = steps[i];
                (diag ? sc.diagonal : sc.straight) += 1;
                const double ng = res * static_cast<double>(sc.straight) + res * kSqrt2 * static_cast<double>(sc.diagonal);
                if (ng < cost[j]) {
                    cost[j] = ng;
                    steps[j] = sc;
                    parent[j] = i;
                    const double nh = octile_distance(nb, *g, res);
                    open.emplace(ng + nh, nh, j);
                }
            }
        }
    }
    if (!closed[gi]) throw PlanError(PlanFailure::NoPath, "goal is unreachable");

    Path path;
    for (std::size_t i = gi; i != n; i = parent[i]) {
        path.waypoints.push_back(inflated.cell_center(cell(i)));
        if (i == si) break;
    }
    std::reverse(path.waypoints.begin(), path.waypoints.end());
    path.total_cost = cost[gi];
    return path;
}

std::optional<CellIndex> nearest_free_cell(const OccupancyGrid& inflated, CellIndex from, int max_cells) {
    std::optional<CellIndex> best;
    long best_d = std::numeric_limits<long>::max();
    for (int dr = -max_cells; dr <= max_cells; ++dr) {
        for (int dc = -max_cells; dc <= max_cells; ++dc) {
            const CellIndex c{from.col + dc, from.row + dr};
            if (is_blocked(inflated, c)) continue;
            const long d = static_cast<long>(dc) * dc + static_cast<long>(dr) * dr;
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
    }
    return best;
}

double distance_to_path(Vec2 p, const Path& path) noexcept {
    if (path.waypoints.empty()) return std::numeric_limits<double>::infinity();
    if (path.waypoints.size() == 1) return (p - path.waypoints[0]).norm();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < path.waypoints.size(); ++i)
        best = std::min(best, point_segment_distance(p, Segment{path.waypoints[i - 1], path.waypoints[i]}));
    return best;
}

Twist2 pure_pursuit(const Pose2& pose, const Path& path, const PursuitConfig& cfg) {
    const auto& wp = path.waypoints;
    if (wp.empty()) return {};
    const Vec2 p = pose.translation();
    std::size_t closest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < wp.size(); ++i) {
        const double d = (wp[i] - p).norm();
        if (d < best) {
            best = d;
            closest = i;
        }
    }
    std::size_t target = wp.size() - 1;
    double arc = 0.0;
    for (std::size_t i = closest + 1; i < wp.size(); ++i) {
        arc += (wp[i] - wp[i - 1]).norm();
        if (arc >= cfg.lookahead) {
            target = i;
            break;
        }
    }
    double remaining = 0.0;
    for (std::size_t i = closest + 1; i < wp.size(); ++i) remaining += (wp[i] - wp[i - 1]).norm();
    remaining = std::max(remaining, (wp.back() - p).norm());

    const Vec2 d = wp[target] - p;
    if (d.norm() < 1e-12) return {};
    const double alpha = wrap_angle(std::atan2(d.y, d.x) - pose.theta());
    if (std::abs(alpha) > kPi / 2) return {0.0, (alpha >= 0 ? 1.0 : -1.0) * cfg.max_w / 2};
    const double kappa = 2.0 * std::sin(alpha) / cfg.lookahead;
    double v = std::min(cfg.v_cruise, cfg.max_v) * std::min(1.0, remaining / cfg.lookahead);
    double w = v * kappa;
    if (std::abs(w) > cfg.max_w) {
        // Keep the curvature, slow down.
        w = std::copysign(cfg.max_w, w);
        v = std::abs(w / kappa);
    }
    return {v, w};
}

const char* to_string(NavOutcome o) noexcept {
    switch (o) {
        case NavOutcome::Running: return "running";
        case NavOutcome::Reached: return "reached";
        case NavOutcome::NoPath: return "no_path";
        case NavOutcome::Stuck: return "stuck";
    }
    return "unknown";
}

Navigator::Navigator(OccupancyGrid map, Vec2 goal, std::optional<double> goal_heading, const NavConfig& cfg)
    : inflated_(inflate(map, cfg.inflation_radius)), goal_(goal), goal_heading_(goal_heading), cfg_(cfg) {}

void Navigator::set_map(OccupancyGrid map) {
    inflated_ = inflate(map, cfg_.inflation_radius);
    need_plan_ = true;
}

bool Navigator::replan(const Pose2& pose) {
    Pose2 from = pose;
    const auto here = world_to_cell(inflated_, pose.translation());
    if (here && is_blocked(inflated_, *here)) {
        if (const auto snap = nearest_free_cell(inflated_, *here, cfg_.start_snap_cells)) {
            const Vec2 c = inflated_.cell_center(*snap);
            from = {c.x, c.y, pose.theta()};
        }
    }
    try {
        path_ = plan_astar(inflated_, from, goal_);
    } catch (const PlanError& e) {
        if (e.kind() != PlanFailure::NoPath) throw;
        path_ = {};
        return false;
    }
    need_plan_ = false;
    ++replans_;
    return true;
}

NavTick Navigator::tick(const Pose2& pose, double t) {
    NavTick out;
    if (done_ != NavOutcome::Running) {
        out.outcome = done_;
        return out;
    }
    const Vec2 p = pose.translation();
    if (!anchor_t_ || (p - anchor_).norm() >= cfg_.stuck_progress) {
        anchor_t_ = t;
        anchor_ = p;
    }
    if ((p - goal_).norm() <= cfg_.goal_tolerance) {
        const double err = goal_heading_ ? wrap_angle(*goal_heading_ - pose.theta()) : 0.0;
        if (std::abs(err) <= cfg_.heading_tolerance) {
            done_ = out.outcome = NavOutcome::Reached;
            return out;
        }
        out.cmd = {0.0, std::clamp(2.0 * err, -cfg_.pursuit.max_w, cfg_.pursuit.max_w)};
        return out;
    }
    if (t - *anchor_t_ > cfg_.stuck_timeout) {
        done_ = out.outcome = NavOutcome::Stuck;
        return out;
    }
    if (need_plan_ || distance_to_path(p, path_) > cfg_.replan_deviation) {
        out.replanned = true;
        if (!replan(pose)) {
            done_ = out.outcome = NavOutcome::NoPath;
            return out;
        }
    }
    out.cmd = pure_pursuit(pose, path_, cfg_.pursuit);
    return out;
}

NavResult navigate(Simulator& sim, const OccupancyGrid& map, Vec2 goal, std::optional<double> goal_heading,
                   const NavConfig& cfg, double max_time) {
    Navigator nav(map, goal, goal_heading, cfg);
    NavResult r;
    const double t0 = sim.state().clock;
    Pose2 last = sim.state().true_pose;
    r.trajectory.push_back({t0, last});
    for (;;) {
        const double t = sim.state().clock;
        const NavTick tick = nav.tick(sim.state().true_pose, t);
        if (r.initial_plan.waypoints.empty() && !nav.path().waypoints.empty()) r.initial_plan = nav.path();
        if (tick.outcome != NavOutcome::Running) {
            r.outcome = tick.outcome;
            break;
        }
        if (t - t0 >= max_time) {
            r.outcome = NavOutcome::Stuck;
            break;
        }
        (void)sim.step(tick.cmd);
        const Pose2& now = sim.state().true_pose;
        r.path_length += (now.translation() - last.translation()).norm();
        last = now;
        r.trajectory.push_back({sim.state().clock, now});
    }
    r.elapsed = sim.state().clock - t0;
    r.replans = nav.replans();
    return r;
}

}  // namespace mazeslam
