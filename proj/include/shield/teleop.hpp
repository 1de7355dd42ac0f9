#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "shield/filter.hpp"

namespace shield {

inline constexpr int kProtocolVersion = 1;

// Client -> server.
struct ActionMessage {
    ActionId action;
};
struct ResetMessage {};
using ClientMessage = std::variant<ActionMessage, ResetMessage>;

/// Throws Format on malformed input, an unknown type or a wrong "v".
ClientMessage parse_client_message(const std::string& text);
std::string encode(const ClientMessage& m);

// Server -> client.
struct StateMessage {
    int t = 0;
    DubinsState state;
    double valueHere = 0.0;
    double margin = 0.0;  ///< analytic failure margin of the state
    std::array<double, kNumActions> uPerAction{};
    double epsilon = 0.0;
    double delta = 0.0;
    bool halted = false;
};

struct DecisionMessage {
    int t = 0;
    ActionId aTask;
    std::optional<ActionId> executed;  ///< empty is HALT
    bool intervened = false;
    double valueNext = 0.0;
};

struct Segment {
    double x0, y0, x1, y1;
};

/// Scene description and the V = delta contour at the current heading slice.
struct MetaMessage {
    WorldConfig world;
    double theta = 0.0;
    double delta = 0.0;
    std::vector<Segment> contour;
};

struct ErrorMessage {
    std::string message;
};

using ServerMessage = std::variant<StateMessage, DecisionMessage, MetaMessage, ErrorMessage>;

std::string encode(const ServerMessage& m);
ServerMessage parse_server_message(const std::string& text);

/// Marching squares on an n x n lattice over the bounding box at a fixed heading.
std::vector<Segment> level_contour(const SafetySolution& sol, const WorldConfig& world, double theta,
                                   double level, int n = 41);

struct TeleopOptions {
    FilterParams filter;
    WorldConfig world;
    int metaPeriod = 20;  ///< ticks between meta messages
    int contourResolution = 41;
    std::uint64_t seed = 31;
};

/// One teleoperation session, independent of any transport. The transport
/// calls tick() at 1/dt Hz and forwards every client frame to handle().
class TeleopSession {
public:
    TeleopSession(const SafetySolution& sol, const TransitionModel& model, std::vector<DubinsState> starts,
                  TeleopOptions opt);

    /// Initial meta and state frames.
    std::vector<std::string> open();
    /// Latest action wins until the next tick; reset re-samples the start.
    std::vector<std::string> handle(const std::string& frame);
    /// One filter step on the true dynamics; nothing while halted.
    std::vector<std::string> tick();

    const DubinsState& state() const { return state_; }
    int time() const { return t_; }
    bool halted() const { return halted_; }
    const std::vector<RolloutRecord>& log() const { return log_; }

private:
    std::string state_frame() const;
    std::string meta_frame() const;
    void reset();

    const SafetySolution& sol_;
    const TransitionModel& model_;
    std::vector<DubinsState> starts_;
    TeleopOptions opt_;
    Rng rng_;
    DubinsState state_;
    ActionId pending_ = ActionId::straight();
    int t_ = 0;
    bool halted_ = false;
    std::vector<RolloutRecord> log_;
};

/// States whose monitor value and analytic margin both exceed `minValue`,
/// taken from a coarse lattice over the bounding box.
std::vector<DubinsState> teleop_starts(const SafetySolution& sol, const WorldConfig& world, double minValue);

}  // namespace shield
