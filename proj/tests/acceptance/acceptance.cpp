// End-to-end acceptance run. Pipelines go through the CLI executable; numeric
// and format checks run in-process. Prints one PASS/FAIL line per criterion
// (also saved to acceptance.txt in the work directory) and exits non-zero if
// any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "mazeslam/fusion_ekf.hpp"
#include "mazeslam/grid_map.hpp"
#include "mazeslam/mazeslam.h"
#include "mazeslam/nav_planner.hpp"
#include "mazeslam/slam_rbpf.hpp"
#include "mazeslam/world_sim.hpp"
#include "support/oracles.hpp"

using namespace mazeslam;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MAZESLAM_DATA_DIR;
const fs::path kFixtures = MAZESLAM_FIXTURE_DIR;
const std::string kCli = MAZESLAM_CLI;
const fs::path kWork = MAZESLAM_ACCEPT_DIR;
const fs::path kMaze = kData / "worlds/maze8.json";
const fs::path kTour = kData / "scripts/maze_tour.json";

struct Outcome {
    bool pass{false};
    std::string detail;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

/// Runs the CLI; stdout and stderr go to out/cli.txt. Throws on a non-zero exit.
json cli(const std::string& args, const fs::path& out) {
    fs::create_directories(out);
    const std::string cmd = quote(kCli) + " --out " + quote(out) + " " + args + " > " + quote(out / "cli.txt") + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) throw std::runtime_error("command failed (" + std::to_string(rc) + "): " + cmd + "\n" + slurp(out / "cli.txt"));
    return json::parse(slurp(out / "summary.json"));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared between criteria: the seed-42 tour log and its two SLAM runs.
struct Runs {
    fs::path log;
    fs::path truth_map;
    json enc_eval, we_eval;
    double enc_wall{0};
};

Runs g_runs;

Outcome ac1() {
    const auto t0 = std::chrono::steady_clock::now();
    (void)cli("--seed 42 simulate --world " + quote(kMaze) + " --script " + quote(kTour), kWork / "sim");
    g_runs.log = kWork / "sim/log.jsonl";
    (void)cli("--seed 42 slam --mode encoderless --log " + quote(g_runs.log), kWork / "slam_encoderless");
    g_runs.enc_wall = seconds_since(t0);
    g_runs.enc_eval = cli("eval --map " + quote(kWork / "slam_encoderless/map.pgm") + " --world " + quote(kMaze) +
                              " --trajectory " + quote(kWork / "slam_encoderless/trajectory.csv") + " --log " +
                              quote(g_runs.log),
                          kWork / "eval_encoderless");
    g_runs.truth_map = kWork / "eval_encoderless/truth_map.pgm";
    const double iou = g_runs.enc_eval["map"]["occ_iou"];
    const double agree = g_runs.enc_eval["map"]["agreement"];
    return {iou >= 0.50 && agree >= 0.85 && g_runs.enc_wall < 120.0,
            fmt("occ_iou=%.3f (>= 0.50)", iou) + fmt(" agreement=%.3f (>= 0.85)", agree) +
                fmt(" wall=%.1fs (< 120 s)", g_runs.enc_wall)};
}

Outcome ac2() {
    (void)cli("--seed 42 slam --mode with_encoders --log " + quote(g_runs.log), kWork / "slam_with_encoders");
    g_runs.we_eval = cli("eval --map " + quote(kWork / "slam_with_encoders/map.pgm") + " --world " + quote(kMaze) +
                             " --trajectory " + quote(kWork / "slam_with_encoders/trajectory.csv") + " --log " +
                             quote(g_runs.log),
                         kWork / "eval_with_encoders");
    const double iou = g_runs.we_eval["map"]["occ_iou"];
    const double ate = g_runs.we_eval["ate"]["rmse_m"];
    const double enc_ate = g_runs.enc_eval["ate"]["rmse_m"];
    return {iou >= 0.70 && ate <= 0.15 && enc_ate <= 3.0 * ate,
            fmt("occ_iou=%.3f (>= 0.70)", iou) + fmt(" ate=%.4fm (<= 0.15)", ate) +
                fmt(" encoderless_ate=%.4fm", enc_ate) + fmt(" (<= 3x = %.4f)", 3.0 * ate)};
}

Outcome ac3() {
    constexpr int kSeeds = 20;
    constexpr std::size_t kUpdate = 50;
    int ok = 0;
    std::ofstream table(kWork / "mcl_seeds.csv");
    table << "seed,pos_err_m,heading_err_deg,pass\n";
    double worst_pos = 0, worst_deg = 0;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        const fs::path out = kWork / ("mcl/seed_" + std::to_string(seed));
        (void)cli("--seed " + std::to_string(seed) + " localize --map " + quote(g_runs.truth_map) + " --log " +
                      quote(g_runs.log),
                  out);
        std::ifstream csv(out / "errors.csv");
        std::string line;
        std::getline(csv, line);
        for (std::size_t i = 0; i < kUpdate && std::getline(csv, line); ++i) {
        }
        double t = 0, pos = 1e9, head = 1e9;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &pos, &head) != 3) pos = head = 1e9;
        const double deg = std::abs(head) * 180.0 / kPi;
        const bool pass = pos < 0.10 && deg < 5.0;
        ok += pass;
        worst_pos = std::max(worst_pos, pos);
        worst_deg = std::max(worst_deg, deg);
        table << seed << ',' << pos << ',' << deg << ',' << (pass ? 1 : 0) << '\n';
    }
    return {ok >= 18, std::to_string(ok) + "/20 seeds within 0.10 m and 5 deg after 50 updates (>= 18)" +
                          fmt("; worst %.4fm", worst_pos) + fmt(" %.2fdeg", worst_deg) + "; per-step CSVs in " +
                          (kWork / "mcl").string()};
}

Outcome ac4() {
    std::vector<std::string> failed;
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0, 1);
    const auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(gen); };

    // Jacobians.
    double worst_j = 0;
    for (int k = 0; k < 200; ++k) {
        Vec5 x;
        x << uni(-3, 3), uni(-3, 3), uni(-3, 3), uni(-1, 1), uni(-2, 2);
        const double dt = uni(0.01, 0.3);
        worst_j = std::max(worst_j, oracle::max_relative_error(
                                        propagate_jacobian(x, dt),
                                        oracle::numeric_jacobian(
                                            [&](const Vec5& s) -> Eigen::VectorXd { return propagate_mean(s, dt); },
                                            x, {2})));
        for (const Measurement& m :
             {Measurement::gyro(0, 0.1, 0.02), Measurement::wheel_odom(0, {0.3, 0.1}, 0.02, 0.05),
              Measurement::pose_delta(0, {0.03, 0.0, 0.01}, 0.1, Eigen::Matrix3d::Identity())}) {
            worst_j = std::max(worst_j,
                               oracle::max_relative_error(
                                   measurement_model(x, m).H,
                                   oracle::numeric_jacobian(
                                       [&](const Vec5& s) -> Eigen::VectorXd { return measurement_model(s, m).h; }, x,
                                       {})));
        }
        Eigen::Matrix<double, 6, 1> q;
        q << uni(-2, 2), uni(-2, 2), uni(-3, 3), uni(-1, 1), uni(-2, 2), uni(-1, 1);
        const auto motion = [](const Eigen::Matrix<double, 6, 1>& v) -> Eigen::VectorXd {
            const Pose2 p = apply_odometry(Pose2{v(0), v(1), v(2)}, OdometryDelta{v(3), v(4), v(5)});
            return Eigen::Vector3d(p.x(), p.y(), p.theta());
        };
        worst_j = std::max(worst_j, oracle::max_relative_error(
                                        apply_odometry_jacobian(Pose2{q(0), q(1), q(2)}, OdometryDelta{q(3), q(4), q(5)}),
                                        oracle::numeric_jacobian(motion, q, {2})));
    }
    if (worst_j > 1e-6) failed.push_back(fmt("jacobian rel err %.2e", worst_j));

    // Closed-form motion against fine Euler.
    double worst_step = 0;
    for (int i = 0; i < 500; ++i) {
        const Pose2 p(uni(-5, 5), uni(-5, 5), uni(-kPi, kPi));
        const Twist2 cmd{uni(-1, 1), i % 10 == 0 ? 0.0 : uni(-2, 2)};
        const double dt = uni(0.01, 1.0);
        const Pose2 a = step_exact(p, cmd, dt), b = oracle::euler(p, cmd, dt, 1000);
        worst_step = std::max({worst_step, std::abs(a.x() - b.x()), std::abs(a.y() - b.y()),
                               std::abs(wrap_angle(a.theta() - b.theta()))});
    }
    if (worst_step >= 1e-4) failed.push_back(fmt("step_exact err %.2e", worst_step));

    // Grid raycasts against marching.
    int ray_bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        OccupancyGrid g(0.05, 40, 40, {-1.0, -1.0});
        for (double& v : g.cells()) v = u(gen) < 0.03 ? 8.0 : (u(gen) < 0.5 ? -8.0 : 0.0);
        const Vec2 o{uni(-1, 1), uni(-1, 1)};
        const double a = uni(-kPi, kPi);
        const auto fast = raycast_grid(g, o, a, 1.5);
        const auto slow = oracle::march_grid(g, o, a, 1.5);
        const double diag = g.resolution() * std::sqrt(2.0);
        if (fast && slow) {
            ray_bad += std::abs(*fast - *slow) > diag;
        } else if (fast || slow) {
            ray_bad += (fast ? *fast : *slow) < 1.5 - diag;
        }
    }
    if (ray_bad > 0) failed.push_back(std::to_string(ray_bad) + " raycast mismatches");

    // A* against Dijkstra.
    int astar_bad = 0, solved = 0;
    for (int trial = 0; trial < 200; ++trial) {
        OccupancyGrid g(0.05, 50, 50, {0, 0}, -8.0);
        for (double& v : g.cells()) v = u(gen) < 0.3 ? 8.0 : -8.0;
        const CellIndex s{static_cast<int>(uni(0, 50)), static_cast<int>(uni(0, 50))};
        const CellIndex t{static_cast<int>(uni(0, 50)), static_cast<int>(uni(0, 50))};
        g.at(s) = -8.0;
        g.at(t) = -8.0;
        const auto best = oracle::dijkstra(g, s, t);
        const Vec2 sp = g.cell_center(s);
        try {
            const Path p = plan_astar(g, {sp.x, sp.y, 0}, g.cell_center(t));
            astar_bad += !best || std::abs(p.total_cost - best->meters(0.05)) > 1e-9;
            ++solved;
        } catch (const PlanError&) {
            astar_bad += best.has_value();
        }
    }
    if (astar_bad > 0) failed.push_back(std::to_string(astar_bad) + " A* cost mismatches");

    // Likelihood field against brute force.
    int field_bad = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const int w = 1 + static_cast<int>(uni(0, 64)), h = 1 + static_cast<int>(uni(0, 64));
        OccupancyGrid g(0.05, std::min(w, 64), std::min(h, 64), {0, 0});
        const double density = uni(0, 0.1);
        for (double& v : g.cells()) v = u(gen) < density ? 8.0 : 0.0;
        const double d_max = uni(0.05, 2.0);
        const auto f = build_likelihood_field(g, d_max);
        const auto brute = oracle::brute_distance_field(g, d_max);
        for (std::size_t i = 0; i < brute.size(); ++i) field_bad += std::abs(f.distances()[i] - brute[i]) > 1e-9;
    }
    if (field_bad > 0) failed.push_back(std::to_string(field_bad) + " field cells differ");

    std::string detail = fmt("jacobian=%.1e (<= 1e-6)", worst_j) + fmt(" step_exact=%.1e (< 1e-4)", worst_step) +
                         " raycast_mismatch=" + std::to_string(ray_bad) + "/500 astar_mismatch=" +
                         std::to_string(astar_bad) + "/200 (" + std::to_string(solved) +
                         " solvable) field_mismatch=" + std::to_string(field_bad);
    return {failed.empty(), detail};
}

/// Drives a live session over WebSocket, then replays its log through the CLI.
bool serve_replay(std::string& detail) {
    ms_config* cfg = nullptr;
    if (ms_config_parse(R"({"seed": 42, "mode": "with_encoders", "serve": {"port": 0}})", &cfg) != MS_OK) {
        detail = ms_last_error();
        return false;
    }
    ms_server* srv = nullptr;
    const fs::path live = kWork / "serve_live";
    fs::remove_all(live);
    const ms_status st = ms_server_new(cfg, kMaze.c_str(), live.c_str(), 0, &srv);
    ms_config_free(cfg);
    if (st != MS_OK || ms_server_start(srv) != MS_OK) {
        detail = ms_last_error();
        ms_server_free(srv);
        return false;
    }
    namespace beast = boost::beast;
    {
        boost::asio::io_context ioc;
        beast::websocket::stream<boost::asio::ip::tcp::socket> ws(ioc);
        boost::asio::ip::tcp::resolver resolver(ioc);
        boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(ms_server_port(srv))));
        ws.handshake("127.0.0.1", "/");
        const char* moves[] = {R"({"type": "teleop", "v": 0.3, "w": 0.0})", R"({"type": "teleop", "v": 0.2, "w": 0.6})"};
        int states = 0;
        for (int i = 0; states < 30; ++i) {
            beast::flat_buffer buf;
            ws.read(buf);
            if (json::parse(beast::buffers_to_string(buf.data()))["type"] == "state") {
                ++states;
                ws.write(boost::asio::buffer(std::string(moves[(states / 10) % 2])));
            }
        }
        beast::error_code ec;
        ws.close(beast::websocket::close_code::normal, ec);
    }
    ms_server_stop(srv);
    const bool saved = ms_server_wait(srv) == MS_OK;
    ms_server_free(srv);
    if (!saved) {
        detail = "session did not save";
        return false;
    }
    (void)cli("--config " + quote(live / "config.json") + " slam --log " + quote(live / "log.jsonl"),
              kWork / "serve_replay");
    const bool same = slurp(live / "map.pgm") == slurp(kWork / "serve_replay/map.pgm") &&
                      slurp(live / "map.yaml") == slurp(kWork / "serve_replay/map.yaml");
    detail = "live session replay map " + std::string(same ? "identical" : "DIFFERS");
    return same;
}

Outcome ac5() {
    // Second simulate + slam with identical seed and config; the first is the AC-2 run.
    (void)cli("--seed 42 simulate --world " + quote(kMaze) + " --script " + quote(kTour), kWork / "sim_again");
    (void)cli("--seed 42 slam --mode with_encoders --log " + quote(kWork / "sim_again/log.jsonl"),
              kWork / "slam_again");
    const bool log_same = slurp(kWork / "sim/log.jsonl") == slurp(kWork / "sim_again/log.jsonl");
    const bool map_same = slurp(kWork / "slam_with_encoders/map.pgm") == slurp(kWork / "slam_again/map.pgm") &&
                          slurp(kWork / "slam_with_encoders/map.yaml") == slurp(kWork / "slam_again/map.yaml");
    std::string serve_detail;
    bool serve_same = false;
    try {
        serve_same = serve_replay(serve_detail);
    } catch (const std::exception& e) {
        serve_detail = e.what();
    }
    return {log_same && map_same && serve_same, std::string("log ") + (log_same ? "identical" : "DIFFERS") +
                                                    ", map " + (map_same ? "identical" : "DIFFERS") + ", " +
                                                    serve_detail};
}

Outcome ac6() {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(-8, 8);
    std::uniform_int_distribution<int> dim(1, 60);
    const fs::path dir = kWork / "pgm";
    fs::create_directories(dir);
    int bad = 0;
    for (int trial = 0; trial < 50; ++trial) {
        OccupancyGrid g(0.01 + 0.1 * (u(gen) + 8) / 16, dim(gen), dim(gen), {u(gen) / 3, u(gen) / 7});
        for (double& v : g.cells()) v = u(gen);
        save_map(g, dir / "m");
        const OccupancyGrid back = load_map(dir / "m");
        bool ok = back.same_geometry(g);
        for (std::size_t i = 0; ok && i < g.size(); ++i)
            ok = classify_logodds(back.cells()[i]) == classify_logodds(g.cells()[i]);
        bad += !ok;
    }
    OccupancyGrid fixture(0.05, 2, 2, {-1.5, 2.25});
    fixture.at({0, 1}) = 8.0;
    fixture.at({1, 1}) = -8.0;
    fixture.at({0, 0}) = 0.0;
    fixture.at({1, 0}) = -8.0;
    save_map(fixture, dir / "map2x2");
    const bool fixture_same = slurp(dir / "map2x2.pgm") == slurp(kFixtures / "map2x2.pgm") &&
                              slurp(dir / "map2x2.yaml") == slurp(kFixtures / "map2x2.yaml");
    return {bad == 0 && fixture_same, std::to_string(50 - bad) + "/50 round trips exact, 2x2 fixture " +
                                          (fixture_same ? "byte-identical" : "DIFFERS")};
}

Outcome ac7() {
    const WorldModel world = load_world(kMaze);
    const NavConfig nav;
    const OccupancyGrid inflated = inflate(rasterize_world(world, 0.05), nav.inflation_radius);
    const Vec2 goal{7.6, 7.6};
    const double optimum = plan_astar(inflated, world.spawn, goal).total_cost;
    const json far = cli("navigate --world " + quote(kMaze) + " --goal 7.6,7.6,0", kWork / "nav_far");
    const json sealed = cli("navigate --world " + quote(kMaze) + " --goal 2.8,5.2", kWork / "nav_sealed");
    const double length = far["path_length_m"];
    const bool pass = far["outcome"] == "reached" && length <= 1.3 * optimum && sealed["outcome"] == "no_path";
    return {pass, "far corner " + far["outcome"].get<std::string>() + fmt(" length=%.3fm", length) +
                      fmt(" optimum=%.3fm", optimum) + fmt(" ratio=%.3f (<= 1.3)", length / optimum) +
                      "; walled-off goal " + sealed["outcome"].get<std::string>()};
}

}  // namespace

int main() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4}, {"AC-5", ac5}, {"AC-6", ac6}, {"AC-7", ac7}};
    int failures = 0;
    std::ofstream record(kWork / "acceptance.txt");
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %s  %s\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        record << name << (o.pass ? " PASS  " : " FAIL  ") << o.detail << '\n';
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
