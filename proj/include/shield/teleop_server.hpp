#pragma once

#include <functional>
#include <memory>
#include <string>

#include "shield/teleop.hpp"

namespace shield {

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8765;  ///< 0 picks a free port
    double tickSeconds = 0.05;
    bool stopOnSignal = false;  ///< SIGINT / SIGTERM end run()
};

/// WebSocket transport for TeleopSession. One session per connection, each
/// ticking on its own timer; all sessions share one I/O thread.
class TeleopServer {
public:
    using SessionFactory = std::function<std::unique_ptr<TeleopSession>()>;

    TeleopServer(ServerOptions opt, SessionFactory factory);
    ~TeleopServer();
    TeleopServer(const TeleopServer&) = delete;
    TeleopServer& operator=(const TeleopServer&) = delete;

    /// Bound port; valid once the constructor returns.
    unsigned short port() const;
    /// Blocks until stop().
    void run();
    /// Safe to call from any thread.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace shield
