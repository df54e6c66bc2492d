#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "mazeslam/run_config.hpp"
#include "mazeslam/world_sim.hpp"

namespace mazeslam {

/// WebSocket front end of a LiveSession. One io_context thread owns the
/// session: socket handlers and the tick timer never run concurrently, so
/// client messages land between ticks. The first connected client drives;
/// later ones observe. The driver role passes to the oldest remaining client
/// when the driver leaves.
class WsServer {
public:
    /// Binds cfg.serve.port (0 picks a free port). Throws std::runtime_error
    /// when the port is taken.
    WsServer(WorldModel world, RunConfig cfg, std::filesystem::path out_dir,
             std::optional<double> duration_s = std::nullopt);
    ~WsServer();
    WsServer(const WsServer&) = delete;
    WsServer& operator=(const WsServer&) = delete;

    [[nodiscard]] unsigned short port() const noexcept;

    /// Serves on the calling thread until stop(), SIGINT/SIGTERM, or the
    /// optional duration of sim time elapses.
    void run(bool handle_signals = true);
    /// Serves on a background thread.
    void start();
    /// Graceful shutdown: saves artifacts and closes every connection. Safe
    /// from any thread.
    void stop();
    /// Joins the background thread.
    void wait();

    [[nodiscard]] bool saved() const noexcept;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

}  // namespace mazeslam
