#include "shield/teleop_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <boost/asio/signal_set.hpp>
#include <chrono>
#include <csignal>
#include <deque>

#include "shield/errors.hpp"

namespace shield {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, std::unique_ptr<TeleopSession> session, std::chrono::nanoseconds period)
        : ws_(std::move(socket)), timer_(ws_.get_executor()), session_(std::move(session)), period_(period) {}

    void start() {
        ws_.text(true);
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->send(self->session_->open());
            self->next_ = std::chrono::steady_clock::now() + self->period_;
            self->arm();
            self->read();
        });
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->close();
            std::string frame = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->send(self->session_->handle(frame));
            self->read();
        });
    }

    void arm() {
        timer_.expires_at(next_);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->closed_) return;
            self->send(self->session_->tick());
            self->next_ += self->period_;
            self->arm();
        });
    }

    void send(std::vector<std::string> frames) {
        if (closed_) return;
        const bool idle = queue_.empty();
        for (auto& f : frames) queue_.push_back(std::move(f));
        if (idle && !queue_.empty()) write();
    }

    void write() {
        ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec || self->closed_) return self->close();
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->write();
        });
    }

    void close() {
        closed_ = true;
        timer_.cancel();
        queue_.clear();
    }

    ws::stream<tcp::socket> ws_;
    asio::steady_timer timer_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    std::unique_ptr<TeleopSession> session_;
    std::chrono::nanoseconds period_;
    std::chrono::steady_clock::time_point next_;
    bool closed_ = false;
};

}  // namespace

struct TeleopServer::Impl {
    Impl(ServerOptions o, SessionFactory f) : opt(std::move(o)), factory(std::move(f)), acceptor(io) {
        beast::error_code ec;
        const tcp::endpoint ep(asio::ip::make_address(opt.address, ec), opt.port);
        require(!ec, ErrorCode::InvalidArgument, "bad listen address '" + opt.address + "'");
        acceptor.open(ep.protocol(), ec);
        if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
        if (!ec) acceptor.bind(ep, ec);
        if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
        require(!ec, ErrorCode::Io, "cannot listen on " + opt.address + ":" + std::to_string(opt.port) + ": " +
                                        ec.message());
    }

    void accept() {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            try {
                const auto period = std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::duration<double>(opt.tickSeconds));
                std::make_shared<Connection>(std::move(socket), factory(), period)->start();
            } catch (const std::exception&) {
                // a failed session only drops its own connection
            }
            accept();
        });
    }

    ServerOptions opt;
    SessionFactory factory;
    asio::io_context io;
    tcp::acceptor acceptor;
};

TeleopServer::TeleopServer(ServerOptions opt, SessionFactory factory) {
    require(opt.tickSeconds > 0.0, ErrorCode::InvalidArgument, "tick period must be positive");
    impl_ = std::make_unique<Impl>(std::move(opt), std::move(factory));
}

TeleopServer::~TeleopServer() = default;

unsigned short TeleopServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TeleopServer::run() {
    asio::signal_set signals(impl_->io);
    if (impl_->opt.stopOnSignal) {
        signals.add(SIGINT);
        signals.add(SIGTERM);
        signals.async_wait([this](beast::error_code ec, int) {
            if (!ec) stop();
        });
    }
    impl_->accept();
    impl_->io.run();
}

void TeleopServer::stop() {
    asio::post(impl_->io, [this] {
        beast::error_code ec;
        impl_->acceptor.close(ec);
        impl_->io.stop();
    });
}

}  // namespace shield
