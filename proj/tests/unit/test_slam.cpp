#include <doctest.h>

#include <map>
#include <random>

#include "mazeslam/errors.hpp"
#include "mazeslam/slam_rbpf.hpp"
#include "mazeslam/world_sim.hpp"

using namespace mazeslam;

namespace {

WorldModel maze() { return load_world(std::string(MAZESLAM_DATA_DIR) + "/worlds/maze8.json"); }
WorldModel corridor() { return load_world(std::string(MAZESLAM_DATA_DIR) + "/worlds/corridor.json"); }

LidarConfig noiseless_lidar() {
    LidarConfig cfg;
    cfg.sigma_range = 0;
    return cfg;
}

LidarScan scan_at(const WorldModel& w, const Pose2& pose) {
    Rng rng(1);
    return simulate_lidar(w, pose, noiseless_lidar(), rng);
}

OccupancyGrid map_from_scan(const Pose2& pose, const LidarScan& scan) {
    SlamConfig cfg;
    OccupancyGrid g = empty_map(cfg);
    integrate_scan(g, pose, scan);
    return g;
}

std::vector<Particle> weighted(const std::vector<double>& w) {
    std::vector<Particle> ps(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        ps[i].log_weight = std::log(w[i]);
        ps[i].pose = {static_cast<double>(i), 0, 0};
        ps[i].map = OccupancyGrid(0.1, 4, 4, {0, 0});
    }
    return ps;
}

}  // namespace

TEST_CASE("score is one when every endpoint sits on an occupied cell") {
    OccupancyGrid g(0.1, 40, 40, {-2, -2});
    const Pose2 pose{0.05, 0.05, 0};
    LidarScan scan;
    scan.angle_min = 0;
    scan.angle_inc = kPi / 2;
    scan.range_max = 4;
    scan.ranges = {0.5, 0.7, 1.0, 0.3};
    for (std::size_t i = 0; i < scan.size(); ++i) {
        const Vec2 e = transform_point(pose, {scan.ranges[i] * std::cos(scan.angle(i)),
                                               scan.ranges[i] * std::sin(scan.angle(i))});
        g.at(*world_to_cell(g, e)) = 8;
    }
    const LikelihoodField field = build_likelihood_field(g, 1.0);
    CHECK(scan_score(field, pose, scan, 0.1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("far-field endpoints score near zero") {
    OccupancyGrid g(0.1, 40, 40, {-2, -2});
    g.at({39, 39}) = 8;
    const double d_max = 0.5;
    const LikelihoodField field = build_likelihood_field(g, d_max);
    LidarScan scan;
    scan.angle_inc = 0.3;
    scan.range_max = 4;
    scan.ranges = {0.4, 0.6, 0.2};
    CHECK(scan_score(field, Pose2{-1.0, -1.0, 0}, scan, 0.1) <= std::exp(-d_max * d_max / (2 * 0.01)) + 1e-15);
}

TEST_CASE("no returns score zero and an empty map leaves the pose alone") {
    const LikelihoodField field = build_likelihood_field(OccupancyGrid(0.1, 10, 10, {0, 0}), 1.0);
    LidarScan scan;
    scan.angle_inc = 0.1;
    scan.range_max = 4;
    scan.ranges = {5.0, 5.0};
    CHECK(scan_score(field, Pose2{0.5, 0.5, 0}, scan, 0.1) == 0.0);

    const LidarScan real = scan_at(corridor(), {1, 0.6, 0});
    const ScanMatchResult m = scan_match(OccupancyGrid(0.05, 100, 100, {0, 0}), real, {1, 0.6, 0}, ScanMatchConfig{});
    // The field saturates at d_max, so no move can improve on the start.
    CHECK(m.score <= std::exp(-1.0 / (2 * 0.01)) + 1e-30);
    CHECK(m.pose == Pose2{1, 0.6, 0});
}

TEST_CASE("the true pose outscores a shifted one in a corridor") {
    const Pose2 truth{4.0, 0.6, 0.0};
    const LidarScan scan = scan_at(corridor(), truth);
    const LikelihoodField field = build_likelihood_field(map_from_scan(truth, scan), 1.0);
    CHECK(scan_score(field, truth, scan, 0.1) > scan_score(field, Pose2{4.2, 0.6, 0.0}, scan, 0.1));
}

TEST_CASE("matching is idempotent and stays within a cell of the generating pose") {
    const WorldModel w = maze();
    const ScanMatchConfig cfg;
    const double final_step = cfg.linear_step / std::pow(2.0, cfg.halvings);
    for (const Pose2& truth : {Pose2{0.4, 0.4, 0}, Pose2{3.6, 3.6, 1.2}, Pose2{6.0, 2.0, -2.0}}) {
        const LidarScan scan = scan_at(w, truth);
        const LikelihoodField field = build_likelihood_field(map_from_scan(truth, scan), 1.0);
        const ScanMatchResult m = scan_match(field, scan, truth, cfg);
        CHECK(m.score >= scan_score(field, truth, scan, cfg.match_sigma));
        // Rasterizing moves endpoints to cell centers, so truth is off by at most a cell.
        CHECK((m.pose.translation() - truth.translation()).norm() <= 0.05);
        const ScanMatchResult again = scan_match(field, scan, m.pose, cfg);
        CHECK((again.pose.translation() - m.pose.translation()).norm() <= final_step * std::sqrt(2.0) + 1e-12);
        CHECK(again.score >= m.score);
    }
}

TEST_CASE("matching recovers a perturbed pose in the maze") {
    const WorldModel w = maze();
    const LikelihoodField field = build_likelihood_field(rasterize_world(w, 0.05), 1.0);
    std::mt19937_64 gen(21);
    std::uniform_int_distribution<int> cell(0, 9);
    std::uniform_real_distribution<double> ang(-kPi, kPi);
    int checked = 0;
    while (checked < 20) {
        const Pose2 truth{0.4 + 0.8 * cell(gen), 0.4 + 0.8 * cell(gen), ang(gen)};
        if (std::abs(truth.x() - 2.8) < 0.1 && std::abs(truth.y() - 5.2) < 0.1) continue;  // sealed cell
        const LidarScan scan = scan_at(w, truth);
        const Pose2 init{truth.x() + 0.1, truth.y() + 0.1, truth.theta() + 0.05};
        const ScanMatchResult m = scan_match(field, scan, init, ScanMatchConfig{});
        CHECK(m.score >= scan_score(field, init, scan, 0.1));
        CHECK(std::abs(m.pose.x() - truth.x()) <= 0.03);
        CHECK(std::abs(m.pose.y() - truth.y()) <= 0.03);
        CHECK(std::abs(wrap_angle(m.pose.theta() - truth.theta())) <= 0.02);
        ++checked;
    }
}

TEST_CASE("odometry motion sampling edge cases") {
    Rng rng(3);
    const Pose2 prev{1.0, -2.0, 0.7};
    CHECK(sample_odometry_motion(prev, OdometryDelta{}, OdometryNoise{}, rng) == prev);

    const OdometryNoise zero{0, 0, 0, 0};
    for (const Pose2& d : {Pose2{0.3, 0.1, 0.2}, Pose2{-0.3, 0.05, -0.1}, Pose2{0, 0, 1.0}, Pose2{0.0, 0.4, 0}}) {
        const Pose2 got = sample_odometry_motion(prev, OdometryDelta::from_relative(d), zero, rng);
        const Pose2 want = compose(prev, d);
        CHECK(got.x() == doctest::Approx(want.x()).epsilon(1e-12));
        CHECK(got.y() == doctest::Approx(want.y()).epsilon(1e-12));
        CHECK(std::abs(wrap_angle(got.theta() - want.theta())) < 1e-12);
    }
}

TEST_CASE("backward motion keeps rotations small") {
    const OdometryDelta d = OdometryDelta::from_relative({-0.3, 0.0, 0.0});
    CHECK(d.trans == doctest::Approx(-0.3));
    CHECK(std::abs(d.rot1) < 1e-12);
    CHECK(std::abs(d.rot2) < 1e-12);
}

TEST_CASE("translation noise has the configured spread") {
    const OdometryNoise a{0, 0, 0.01, 0};
    const OdometryDelta d = OdometryDelta::from_relative({1.0, 0, 0});
    double sum = 0, sq = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::stream(9, stream_tag("trans-test"), static_cast<std::uint64_t>(i));
        const double t = sample_odometry_motion(Pose2{}, d, a, rng).x();
        sum += t;
        sq += t * t;
    }
    const double mean = sum / n;
    const double sd = std::sqrt((sq - n * mean * mean) / (n - 1));
    CHECK(sd >= 0.095);
    CHECK(sd <= 0.105);
}

TEST_CASE("odometry motion Jacobian matches central differences") {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(-2, 2);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        const double in[6] = {u(gen), u(gen), u(gen), u(gen) / 2, u(gen), u(gen) / 2};
        const auto f = [](const double* v) {
            return apply_odometry(Pose2{v[0], v[1], v[2]}, OdometryDelta{v[3], v[4], v[5]});
        };
        const auto J = apply_odometry_jacobian(Pose2{in[0], in[1], in[2]}, OdometryDelta{in[3], in[4], in[5]});
        const double h = 1e-6;
        for (int j = 0; j < 6; ++j) {
            double p[6], m[6];
            std::copy(in, in + 6, p);
            std::copy(in, in + 6, m);
            p[j] += h;
            m[j] -= h;
            const Pose2 fp = f(p), fm = f(m);
            const double num[3] = {(fp.x() - fm.x()) / (2 * h), (fp.y() - fm.y()) / (2 * h),
                                   wrap_angle(fp.theta() - fm.theta()) / (2 * h)};
            for (int r = 0; r < 3; ++r)
                worst = std::max(worst, std::abs(J(r, j) - num[r]) / std::max(1.0, std::abs(J(r, j))));
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("effective sample size and normalization") {
    auto ps = weighted({0.25, 0.25, 0.25, 0.25});
    CHECK(effective_sample_size(ps) == doctest::Approx(4.0));
    std::vector<Particle> raw(5);
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(-50, 0);
    for (auto& p : raw) p.log_weight = u(gen);
    REQUIRE(normalize_log_weights(raw));
    double sum = 0;
    for (const auto& p : raw) sum += std::exp(p.log_weight);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    const double neff = effective_sample_size(raw);
    CHECK(neff >= 1.0 - 1e-12);
    CHECK(neff <= 5.0 + 1e-12);

    for (auto& p : raw) p.log_weight = -std::numeric_limits<double>::infinity();
    CHECK_FALSE(normalize_log_weights(raw));
    CHECK(effective_sample_size(raw) == doctest::Approx(5.0));
}

TEST_CASE("systematic resampling counts") {
    // Every offset in [0, 1/4) yields the same draw.
    for (int k = 0; k < 1000; ++k) {
        const double u = 0.25 * k / 1000.0;
        const auto idx = low_variance_indices({0.5, 0.25, 0.25, 0.0}, u);
        std::map<std::size_t, int> counts;
        for (auto i : idx) ++counts[i];
        CHECK(counts[0] == 2);
        CHECK(counts[1] == 1);
        CHECK(counts[2] == 1);
        CHECK(counts[3] == 0);
    }
    const auto uniform = low_variance_indices({0.2, 0.2, 0.2, 0.2, 0.2}, 0.13);
    CHECK(uniform == std::vector<std::size_t>{0, 1, 2, 3, 4});
    const auto one_hot = low_variance_indices({0, 0, 1, 0}, 0.2);
    CHECK(one_hot == std::vector<std::size_t>{2, 2, 2, 2});
}

TEST_CASE("expected copy count is n times the weight") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 7;
        std::vector<double> w(n);
        double total = 0;
        for (auto& x : w) total += (x = u(gen));
        for (auto& x : w) x /= total;
        std::vector<double> mean(n, 0.0);
        const int offsets = 20000;
        for (int k = 0; k < offsets; ++k) {
            const auto idx = low_variance_indices(w, (k + 0.5) / offsets / n);
            std::vector<int> c(n, 0);
            for (auto i : idx) ++c[i];
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(c[i] >= std::floor(n * w[i]) - 1e-9);
                CHECK(c[i] <= std::ceil(n * w[i]) + 1e-9);
                mean[i] += c[i];
            }
        }
        for (std::size_t i = 0; i < n; ++i) CHECK(mean[i] / offsets == doctest::Approx(n * w[i]).epsilon(1e-3));
    }
}

TEST_CASE("resampled maps are independent copies") {
    auto ps = weighted({1.0, 1e-300, 1e-300});
    REQUIRE(normalize_log_weights(ps));
    Rng rng(4);
    auto out = resample_low_variance(ps, rng);
    REQUIRE(out.size() == 3);
    for (const auto& p : out) CHECK(p.pose.x() == 0.0);
    out[0].map.at({1, 1}) = 5.0;
    CHECK(out[1].map.at({1, 1}) == 0.0);
    CHECK(ps[0].map.at({1, 1}) == 0.0);
    for (const auto& p : out) CHECK(std::exp(p.log_weight) == doctest::Approx(1.0 / 3));
}

TEST_CASE("one noiseless particle collapses to scan-matched dead reckoning") {
    const WorldModel w = maze();
    SlamConfig cfg;
    cfg.n_particles = 1;
    cfg.alphas = {0, 0, 0, 0};
    std::vector<Pose2> truth{{0.4, 0.4, 0}};
    for (int i = 1; i <= 6; ++i) truth.push_back({0.4 + 0.3 * i, 0.4, 0});
    std::vector<Particle> ps = slam_init(truth[0], scan_at(w, truth[0]), cfg);

    // Oracle: predict with odometry, match, integrate.
    OccupancyGrid oracle_map = empty_map(cfg);
    integrate_scan(oracle_map, truth[0], scan_at(w, truth[0]));
    Pose2 oracle_pose = truth[0];
    for (std::size_t i = 1; i < truth.size(); ++i) {
        const OdometryDelta d = OdometryDelta::between_poses(truth[i - 1], truth[i]);
        const LidarScan scan = scan_at(w, truth[i]);
        slam_process_scan(ps, d, scan, cfg, 42, i);
        const Pose2 predicted = apply_odometry(oracle_pose, d);
        oracle_pose = scan_match(build_likelihood_field(oracle_map, cfg.match.field_d_max), scan, predicted, cfg.match).pose;
        integrate_scan(oracle_map, oracle_pose, scan);
        CHECK(ps[0].pose == oracle_pose);
    }
    CHECK(ps[0].map.cells() == oracle_map.cells());
    CHECK(ps[0].trajectory.size() == truth.size());
}

TEST_CASE("updates below both gates are refused") {
    SlamConfig cfg;
    cfg.n_particles = 2;
    const WorldModel w = maze();
    auto ps = slam_init({0.4, 0.4, 0}, scan_at(w, {0.4, 0.4, 0}), cfg);
    CHECK_THROWS_AS(slam_process_scan(ps, OdometryDelta::from_relative({0.1, 0, 0.1}), scan_at(w, {0.5, 0.4, 0.1}),
                                      cfg, 1, 1),
                    UsageError);
}

TEST_CASE("all-zero scores reset the weights") {
    SlamConfig cfg;
    cfg.n_particles = 4;
    const WorldModel w = maze();
    auto ps = slam_init({0.4, 0.4, 0}, scan_at(w, {0.4, 0.4, 0}), cfg);
    LidarScan blind = scan_at(w, {0.7, 0.4, 0});
    for (auto& r : blind.ranges) r = blind.no_return_value();
    const SlamStepResult r = slam_process_scan(ps, OdometryDelta::from_relative({0.3, 0, 0}), blind, cfg, 1, 1);
    CHECK(r.degenerate);
    for (const auto& p : ps) CHECK(std::exp(p.log_weight) == doctest::Approx(0.25));
}

TEST_CASE("slam updates are reproducible for a seed") {
    SlamConfig cfg;
    cfg.n_particles = 8;
    const WorldModel w = maze();
    auto run = [&](std::uint64_t seed) {
        auto ps = slam_init({0.4, 0.4, 0}, scan_at(w, {0.4, 0.4, 0}), cfg);
        for (int i = 1; i <= 4; ++i) {
            const Pose2 a{0.4 + 0.3 * (i - 1), 0.4, 0}, b{0.4 + 0.3 * i, 0.4, 0};
            slam_process_scan(ps, OdometryDelta::between_poses(a, b), scan_at(w, b), cfg, seed, i);
        }
        return ps;
    };
    const auto a = run(5), b = run(5), c = run(6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].pose == b[i].pose);
        CHECK(a[i].log_weight == b[i].log_weight);
        CHECK(a[i].map.cells() == b[i].map.cells());
    }
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a[i].pose == c[i].pose);
    CHECK(differs);
}
