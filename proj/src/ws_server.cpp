#include "mazeslam/ws_server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <list>
#include <stdexcept>
#include <thread>

#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mazeslam/live_session.hpp"

namespace mazeslam {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

// Frames queued for a client that stops reading beyond this are dropped.
constexpr std::size_t kMaxQueuedFrames = 256;

}  // namespace

struct WsServer::Impl : std::enable_shared_from_this<WsServer::Impl> {
    struct Conn : std::enable_shared_from_this<Conn> {
        Conn(tcp::socket s, std::weak_ptr<Impl> owner) : ws(std::move(s)), owner(std::move(owner)) {}

        websocket::stream<beast::tcp_stream> ws;
        std::weak_ptr<Impl> owner;
        beast::flat_buffer buffer;
        std::deque<std::string> outbox;
        bool open{false};
        bool writing{false};

        void begin() {
            ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
            ws.async_accept([self = shared_from_this()](beast::error_code ec) {
                if (ec) return self->drop();
                self->open = true;
                if (auto o = self->owner.lock()) o->joined(self);
                self->read();
            });
        }

        void read() {
            ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) return self->drop();
                const std::string text = beast::buffers_to_string(self->buffer.data());
                self->buffer.consume(self->buffer.size());
                if (auto o = self->owner.lock()) o->message(self, text);
                self->read();
            });
        }

        void send(std::string frame) {
            if (!open || outbox.size() >= kMaxQueuedFrames) return;
            outbox.push_back(std::move(frame));
            if (!writing) write();
        }

        void write() {
            writing = true;
            ws.text(true);
            ws.async_write(asio::buffer(outbox.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                self->outbox.pop_front();
                if (ec) return self->drop();
                if (self->outbox.empty()) {
                    self->writing = false;
                } else {
                    self->write();
                }
            });
        }

        void drop() {
            const bool was_open = open;
            open = false;
            if (auto o = owner.lock(); o && was_open) o->left(shared_from_this());
        }

        void close() {
            open = false;
            beast::error_code ec;
            beast::get_lowest_layer(ws).socket().shutdown(tcp::socket::shutdown_both, ec);
            beast::get_lowest_layer(ws).socket().close(ec);
        }
    };

    Impl(WorldModel world, RunConfig cfg, std::filesystem::path out, std::optional<double> duration)
        : session(std::move(world), cfg),
          out_dir(std::move(out)),
          duration(duration),
          acceptor(ioc),
          timer(ioc),
          signals(ioc),
          period(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
              std::chrono::duration<double>(1.0 / cfg.serve.tick_hz))) {
        beast::error_code ec;
        const tcp::endpoint ep(asio::ip::make_address("0.0.0.0"), static_cast<unsigned short>(cfg.serve.port));
        acceptor.open(ep.protocol(), ec);
        if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
        if (!ec) acceptor.bind(ep, ec);
        if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
        if (ec) throw std::runtime_error("cannot listen on port " + std::to_string(cfg.serve.port) + ": " + ec.message());
        port = acceptor.local_endpoint().port();
    }

    void launch(bool handle_signals) {
        accept();
        if (handle_signals) {
            signals.add(SIGINT);
            signals.add(SIGTERM);
            signals.async_wait([self = shared_from_this()](beast::error_code ec, int) {
                if (!ec) self->shutdown();
            });
        }
        next_tick = std::chrono::steady_clock::now() + period;
        schedule();
    }

    void accept() {
        acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket s) {
            if (ec) return;  // acceptor closed
            auto c = std::make_shared<Conn>(std::move(s), self);
            c->begin();
            self->accept();
        });
    }

    void schedule() {
        timer.expires_at(next_tick);
        timer.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->stopping) return;
            self->next_tick += self->period;
            // Skip missed deadlines rather than bursting.
            const auto now = std::chrono::steady_clock::now();
            if (self->next_tick < now) self->next_tick = now + self->period;
            self->step();
            if (!self->stopping) self->schedule();
        });
    }

    void step() {
        const auto out = session.tick();
        for (const auto& f : out.frames)
            for (auto& c : conns) c->send(f);
        if (duration && session.sim_state().clock >= *duration - 1e-9) shutdown();
    }

    void joined(const std::shared_ptr<Conn>& c) {
        conns.push_back(c);
        c->send(session.map_frame());
        c->send(session.state_frame());
    }

    void left(const std::shared_ptr<Conn>& c) {
        const bool was_driver = !conns.empty() && conns.front() == c;
        conns.remove(c);
        if (was_driver) session.driver_lost();
    }

    void message(const std::shared_ptr<Conn>& c, const std::string& text) {
        if (stopping) return;
        const bool driver = !conns.empty() && conns.front() == c;
        if (auto err = session.handle(text, driver)) c->send(std::move(*err));
    }

    void shutdown() {
        if (stopping) return;
        stopping = true;
        session.save(out_dir);
        has_saved = true;
        beast::error_code ec;
        acceptor.close(ec);
        timer.cancel();
        signals.cancel(ec);
        for (auto& c : conns) c->close();
        conns.clear();
        ioc.stop();
    }

    LiveSession session;
    std::filesystem::path out_dir;
    std::optional<double> duration;
    asio::io_context ioc{1};
    tcp::acceptor acceptor;
    asio::steady_timer timer;
    asio::signal_set signals;
    std::chrono::steady_clock::duration period;
    std::chrono::steady_clock::time_point next_tick;
    std::list<std::shared_ptr<Conn>> conns;
    unsigned short port{0};
    bool stopping{false};
    std::atomic<bool> has_saved{false};
    std::thread thread;
};

WsServer::WsServer(WorldModel world, RunConfig cfg, std::filesystem::path out_dir, std::optional<double> duration_s)
    : impl_(std::make_shared<Impl>(std::move(world), std::move(cfg), std::move(out_dir), duration_s)) {}

WsServer::~WsServer() {
    if (impl_->thread.joinable()) {
        stop();
        impl_->thread.join();
    }
}

unsigned short WsServer::port() const noexcept { return impl_->port; }

void WsServer::run(bool handle_signals) {
    impl_->launch(handle_signals);
    impl_->ioc.run();
}

void WsServer::start() {
    impl_->launch(false);
    impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
}

void WsServer::stop() {
    asio::post(impl_->ioc, [impl = impl_] { impl->shutdown(); });
}

void WsServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

bool WsServer::saved() const noexcept { return impl_->has_saved; }

}  // namespace mazeslam
