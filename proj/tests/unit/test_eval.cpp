#include <doctest.h>

#include <random>

#include "mazeslam/eval_metrics.hpp"
#include "mazeslam/world_sim.hpp"

using namespace mazeslam;

namespace {

Trajectory line(int n, double dt, double dx = 0, double dy = 0, double dth = 0) {
    Trajectory t;
    for (int i = 0; i < n; ++i) t.push_back({i * dt, Pose2{0.1 * i + dx, 0.05 * i + dy, 0.02 * i + dth}});
    return t;
}

constexpr double kOcc = 8.0;
constexpr double kFree = -8.0;

// Oracle: walks truth cells in world coordinates and looks the prediction up by position.
MapScore brute_compare(const OccupancyGrid& pred, const OccupancyGrid& truth) {
    const auto cls = [](const OccupancyGrid& g, Vec2 p) -> std::optional<CellClass> {
        const auto c = world_to_cell(g, p);
        if (!c) return std::nullopt;
        return g.classify(*c);
    };
    const auto near_occ = [&](const OccupancyGrid& g, Vec2 p) {
        const double r = g.resolution();
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j)
                if (cls(g, {p.x + i * r, p.y + j * r}) == CellClass::Occupied) return true;
        return false;
    };
    double tp = 0, pred_occ = 0, truth_occ = 0, covered = 0, known = 0, agree = 0;
    for (int r = 0; r < truth.height(); ++r) {
        for (int c = 0; c < truth.width(); ++c) {
            const Vec2 p = truth.cell_center({c, r});
            const auto pc = cls(pred, p);
            if (!pc) continue;
            const CellClass tc = truth.classify({c, r});
            if (*pc != CellClass::Unknown) {
                ++known;
                agree += *pc == tc;
            }
            if (*pc == CellClass::Occupied) {
                ++pred_occ;
                tp += near_occ(truth, p);
            }
            if (tc == CellClass::Occupied) {
                ++truth_occ;
                covered += near_occ(pred, p);
            }
        }
    }
    MapScore s;
    const double fp = pred_occ - tp, fn = truth_occ - covered;
    s.occ_iou = tp + fp + fn > 0 ? tp / (tp + fp + fn) : 0;
    s.occ_precision = pred_occ > 0 ? tp / pred_occ : 0;
    s.occ_recall = truth_occ > 0 ? covered / truth_occ : 0;
    s.agreement_defined = known > 0;
    s.agreement = known > 0 ? agree / known : 0;
    return s;
}

OccupancyGrid random_map(std::mt19937_64& gen, Vec2 origin, int w, int h) {
    OccupancyGrid g(0.1, w, h, origin);
    std::uniform_int_distribution<int> pick(0, 9);
    for (auto& v : g.cells()) {
        const int k = pick(gen);
        v = k < 2 ? kOcc : (k < 7 ? kFree : 0.0);
    }
    return g;
}

}  // namespace

TEST_CASE("ate of a trajectory against itself is zero") {
    const Trajectory t = line(50, 0.1);
    const AteResult r = ate_rmse(t, t);
    CHECK(r.rmse_m == 0.0);
    CHECK(r.n_pairs == 50);
    CHECK(r.n_unpaired == 0);
    CHECK(heading_rmse(t, t) == 0.0);
}

TEST_CASE("a constant offset gives that offset as ate") {
    const AteResult r = ate_rmse(line(40, 0.1, 0.3, 0.4), line(40, 0.1));
    CHECK(r.rmse_m == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.mean_m == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.max_m == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("heading error wraps across pi") {
    Trajectory a{{0.0, Pose2{0, 0, kPi - 0.05}}};
    Trajectory b{{0.0, Pose2{0, 0, -kPi + 0.05}}};
    CHECK(heading_rmse(a, b) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("nearest-stamp pairing matches a brute-force search") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0, 10);
    for (int trial = 0; trial < 50; ++trial) {
        Trajectory est, truth;
        for (int i = 0; i < 60; ++i) est.push_back({u(gen), Pose2{u(gen), 0, 0}});
        for (int i = 0; i < 40; ++i) truth.push_back({std::round(u(gen) * 20) / 20, Pose2{u(gen), 0, 0}});
        const auto by_t = [](const StampedPose& a, const StampedPose& b) { return a.t < b.t; };
        std::sort(est.begin(), est.end(), by_t);
        std::sort(truth.begin(), truth.end(), by_t);
        truth.erase(std::unique(truth.begin(), truth.end(), [](const auto& a, const auto& b) { return a.t == b.t; }),
                    truth.end());
        const double max_dt = 0.1;
        const auto pairs = pair_by_stamp(est, truth, max_dt);
        std::size_t k = 0;
        for (const auto& e : est) {
            const StampedPose* best = nullptr;
            for (const auto& g : truth)
                if (best == nullptr || std::abs(g.t - e.t) < std::abs(best->t - e.t)) best = &g;
            if (best == nullptr || std::abs(best->t - e.t) > max_dt) continue;
            REQUIRE(k < pairs.size());
            CHECK(pairs[k].t == e.t);
            CHECK(std::abs(pairs[k].truth.x() - best->pose.x()) == 0.0);
            ++k;
        }
        CHECK(k == pairs.size());
    }
}

TEST_CASE("ties go to the earlier truth and distant stamps stay unpaired") {
    const Trajectory truth{{1.0, Pose2{1, 0, 0}}, {2.0, Pose2{2, 0, 0}}};
    const auto pairs = pair_by_stamp({{1.5, Pose2{}}, {9.0, Pose2{}}}, truth, 0.5);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].truth.x() == 1.0);
    CHECK_THROWS_AS((void)ate_rmse({{9.0, Pose2{}}}, truth), EvalError);
}

TEST_CASE("a map compared with itself scores one") {
    const OccupancyGrid truth = rasterize_world(load_world(std::string(MAZESLAM_DATA_DIR) + "/worlds/maze8.json"), 0.05);
    const MapScore s = map_compare(truth, truth);
    CHECK(s.occ_iou == 1.0);
    CHECK(s.occ_precision == 1.0);
    CHECK(s.occ_recall == 1.0);
    CHECK(s.agreement == 1.0);
    CHECK(s.agreement_defined);
}

TEST_CASE("an all-unknown prediction has zero recall and undefined agreement") {
    OccupancyGrid truth(0.1, 10, 10, {0, 0}, kFree);
    truth.at({3, 3}) = kOcc;
    const MapScore s = map_compare(OccupancyGrid(0.1, 10, 10, {0, 0}), truth);
    CHECK(s.occ_recall == 0.0);
    CHECK(s.occ_iou == 0.0);
    CHECK_FALSE(s.agreement_defined);
}

TEST_CASE("a one-cell shift keeps iou but breaks agreement") {
    OccupancyGrid truth(0.1, 20, 20, {0, 0}, kFree);
    for (int r = 2; r < 18; ++r) truth.at({10, r}) = kOcc;
    OccupancyGrid pred(0.1, 20, 20, {0, 0}, kFree);
    for (int r = 2; r < 18; ++r) pred.at({11, r}) = kOcc;
    const MapScore s = map_compare(pred, truth);
    CHECK(s.occ_iou == 1.0);
    CHECK(s.agreement < 1.0);
}

TEST_CASE("map scores match a brute-force oracle on offset grids") {
    std::mt19937_64 gen(12);
    std::uniform_int_distribution<int> off(-6, 6);
    for (int trial = 0; trial < 30; ++trial) {
        const OccupancyGrid truth = random_map(gen, {0, 0}, 25, 20);
        const OccupancyGrid pred = random_map(gen, {0.1 * off(gen), 0.1 * off(gen)}, 22, 24);
        const MapScore a = map_compare(pred, truth);
        const MapScore b = brute_compare(pred, truth);
        CHECK(a.occ_iou == doctest::Approx(b.occ_iou).epsilon(1e-12));
        CHECK(a.occ_precision == doctest::Approx(b.occ_precision).epsilon(1e-12));
        CHECK(a.occ_recall == doctest::Approx(b.occ_recall).epsilon(1e-12));
        CHECK(a.agreement == doctest::Approx(b.agreement).epsilon(1e-12));
    }
}

TEST_CASE("incomparable maps are rejected") {
    const OccupancyGrid a(0.1, 10, 10, {0, 0});
    CHECK_THROWS_AS((void)map_compare(OccupancyGrid(0.05, 10, 10, {0, 0}), a), EvalError);
    CHECK_THROWS_AS((void)map_compare(OccupancyGrid(0.1, 10, 10, {0.03, 0}), a), EvalError);
    CHECK_THROWS_AS((void)map_compare(OccupancyGrid(0.1, 10, 10, {5, 5}), a), EvalError);
}

TEST_CASE("heading offsets near pi wrap to the short way round") {
    const Trajectory truth = line(30, 0.1);
    CHECK(heading_rmse(line(30, 0.1, 0, 0, 0.1), truth) == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(heading_rmse(line(30, 0.1, 0, 0, kPi - 0.01), truth) == doctest::Approx(kPi - 0.01).epsilon(1e-9));
}

TEST_CASE("error statistics are ordered: max >= rmse >= mean >= 0") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> noise(0.0, 0.2);
    for (int trial = 0; trial < 50; ++trial) {
        const Trajectory truth = line(40, 0.1);
        Trajectory est = truth;
        for (auto& s : est) s.pose = Pose2{s.pose.x() + noise(gen), s.pose.y() + noise(gen), s.pose.theta()};
        const AteResult r = ate_rmse(est, truth);
        CHECK(r.mean_m >= 0.0);
        CHECK(r.rmse_m >= r.mean_m - 1e-12);
        CHECK(r.max_m >= r.rmse_m - 1e-12);
    }
}
