#include "shield/teleop.hpp"

#include <cmath>
#include <numbers>

#include "shield/config.hpp"
#include "shield/errors.hpp"
#include "shield/rng.hpp"

namespace shield {

using nlohmann::json;

namespace {

json envelope(const char* type) { return {{"v", kProtocolVersion}, {"type", type}}; }

json action_json(const std::optional<ActionId>& a) { return a ? json(a->index()) : json("HALT"); }

int action_index(const json& j) {
    require(j.is_number_integer(), ErrorCode::Format, "action must be an integer");
    const int a = j.get<int>();
    require(a >= 0 && a < kNumActions, ErrorCode::Format, "action index out of range");
    return a;
}

json parse_frame(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, std::string("malformed frame: ") + e.what());
    }
    require(j.is_object() && j.contains("type") && j["type"].is_string(), ErrorCode::Format,
            "frame needs a string type");
    require(j.contains("v") && j["v"] == kProtocolVersion, ErrorCode::Format, "unsupported protocol version");
    return j;
}

}  // namespace

ClientMessage parse_client_message(const std::string& text) {
    const json j = parse_frame(text);
    const std::string type = j["type"];
    if (type == "action") {
        require(j.contains("action"), ErrorCode::Format, "action frame without an action");
        return ActionMessage{ActionId(action_index(j["action"]))};
    }
    if (type == "reset") return ResetMessage{};
    throw Error(ErrorCode::Format, "unknown client message type '" + type + "'");
}

std::string encode(const ClientMessage& m) {
    if (const auto* a = std::get_if<ActionMessage>(&m)) {
        json j = envelope("action");
        j["action"] = a->action.index();
        return j.dump();
    }
    return envelope("reset").dump();
}

std::string encode(const ServerMessage& m) {
    json j;
    if (const auto* s = std::get_if<StateMessage>(&m)) {
        j = envelope("state");
        j["t"] = s->t;
        j["px"] = s->state.px;
        j["py"] = s->state.py;
        j["theta"] = s->state.theta;
        j["valueHere"] = s->valueHere;
        j["margin"] = s->margin;
        j["uPerAction"] = s->uPerAction;
        j["epsilon"] = std::isinf(s->epsilon) ? json(nullptr) : json(s->epsilon);
        j["delta"] = s->delta;
        j["halted"] = s->halted;
    } else if (const auto* d = std::get_if<DecisionMessage>(&m)) {
        j = envelope("decision");
        j["t"] = d->t;
        j["aTask"] = d->aTask.index();
        j["executed"] = action_json(d->executed);
        j["intervened"] = d->intervened;
        j["valueNext"] = d->valueNext;
    } else if (const auto* meta = std::get_if<MetaMessage>(&m)) {
        j = envelope("meta");
        j["world"] = {{"v", meta->world.v},
                      {"dt", meta->world.dt},
                      {"bbox", meta->world.bbox},
                      {"failure", to_json(meta->world.failure)}};
        j["theta"] = meta->theta;
        j["delta"] = meta->delta;
        json segs = json::array();
        for (const auto& s : meta->contour) segs.push_back({s.x0, s.y0, s.x1, s.y1});
        j["contour"] = segs;
    } else {
        j = envelope("error");
        j["message"] = std::get<ErrorMessage>(m).message;
    }
    return j.dump();
}

ServerMessage parse_server_message(const std::string& text) {
    const json j = parse_frame(text);
    const std::string type = j["type"];
    try {
        if (type == "state") {
            StateMessage s;
            s.t = j.at("t");
            s.state = {j.at("px"), j.at("py"), j.at("theta")};
            s.valueHere = j.at("valueHere");
            s.margin = j.at("margin");
            s.uPerAction = j.at("uPerAction").get<std::array<double, kNumActions>>();
            s.epsilon = j.at("epsilon").is_null() ? INFINITY : j.at("epsilon").get<double>();
            s.delta = j.at("delta");
            s.halted = j.at("halted");
            return s;
        }
        if (type == "decision") {
            DecisionMessage d;
            d.t = j.at("t");
            d.aTask = ActionId(action_index(j.at("aTask")));
            if (!(j.at("executed").is_string() && j.at("executed") == "HALT")) {
                d.executed = ActionId(action_index(j.at("executed")));
            }
            d.intervened = j.at("intervened");
            d.valueNext = j.at("valueNext");
            return d;
        }
        if (type == "meta") {
            MetaMessage m;
            const auto& w = j.at("world");
            m.world.v = w.at("v");
            m.world.dt = w.at("dt");
            m.world.bbox = w.at("bbox");
            m.world.failure = failure_from_json(w.at("failure"));
            m.theta = j.at("theta");
            m.delta = j.at("delta");
            for (const auto& s : j.at("contour")) m.contour.push_back({s.at(0), s.at(1), s.at(2), s.at(3)});
            return m;
        }
        if (type == "error") return ErrorMessage{j.at("message")};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, std::string("malformed ") + type + " frame: " + e.what());
    }
    throw Error(ErrorCode::Format, "unknown server message type '" + type + "'");
}

std::vector<Segment> level_contour(const SafetySolution& sol, const WorldConfig& world, double theta,
                                   double level, int n) {
    require(n >= 2, ErrorCode::InvalidArgument, "contour lattice needs n >= 2");
    const double lo = -world.bbox, h = 2.0 * world.bbox / (n - 1);
    std::vector<DubinsState> pts;
    pts.reserve(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) pts.push_back({lo + i * h, lo + j * h, theta});
    }
    std::vector<double> v = sol.monitor_values(pts);
    for (double& x : v) x -= level;
    const auto at = [&](int i, int j) { return v[static_cast<std::size_t>(i * n + j)]; };

    std::vector<Segment> out;
    for (int i = 0; i + 1 < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
            // corners counter-clockwise from (i, j)
            const double c[4] = {at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
            const double cx[4] = {lo + i * h, lo + (i + 1) * h, lo + (i + 1) * h, lo + i * h};
            const double cy[4] = {lo + j * h, lo + j * h, lo + (j + 1) * h, lo + (j + 1) * h};
            std::vector<std::pair<double, double>> cross;
            for (int e = 0; e < 4; ++e) {
                const int f = (e + 1) % 4;
                if ((c[e] > 0.0) != (c[f] > 0.0)) {
                    const double s = c[e] / (c[e] - c[f]);
                    cross.emplace_back(cx[e] + s * (cx[f] - cx[e]), cy[e] + s * (cy[f] - cy[e]));
                }
            }
            if (cross.size() == 2) {
                out.push_back({cross[0].first, cross[0].second, cross[1].first, cross[1].second});
            } else if (cross.size() == 4) {
                // saddle: pair edges according to the centre sign
                const bool centre = (c[0] + c[1] + c[2] + c[3]) > 0.0;
                const bool c0 = c[0] > 0.0;
                if (centre == c0) {
                    out.push_back({cross[0].first, cross[0].second, cross[1].first, cross[1].second});
                    out.push_back({cross[2].first, cross[2].second, cross[3].first, cross[3].second});
                } else {
                    out.push_back({cross[0].first, cross[0].second, cross[3].first, cross[3].second});
                    out.push_back({cross[1].first, cross[1].second, cross[2].first, cross[2].second});
                }
            }
        }
    }
    return out;
}

TeleopSession::TeleopSession(const SafetySolution& sol, const TransitionModel& model,
                             std::vector<DubinsState> starts, TeleopOptions opt)
    : sol_(sol), model_(model), starts_(std::move(starts)), opt_(std::move(opt)), rng_(make_rng(opt_.seed, 0)) {
    require(!starts_.empty(), ErrorCode::SamplingExhausted, "no teleop start states");
    require(!std::isnan(opt_.filter.epsilon), ErrorCode::UncalibratedThreshold, "epsilon is not calibrated");
    reset();
}

void TeleopSession::reset() {
    state_ = starts_[static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<int>(starts_.size()) - 1))];
    t_ = 0;
    halted_ = false;
    pending_ = ActionId::straight();
    log_.clear();
}

std::string TeleopSession::state_frame() const {
    StateMessage s;
    s.t = t_;
    s.state = state_;
    s.valueHere = sol_.monitor_value(state_);
    s.margin = margin(state_, opt_.world.failure);
    for (int a = 0; a < kNumActions; ++a) model_.next(state_, ActionId(a), &s.uPerAction[static_cast<std::size_t>(a)]);
    s.epsilon = opt_.filter.epsilon;
    s.delta = opt_.filter.delta;
    s.halted = halted_;
    return encode(ServerMessage{s});
}

std::string TeleopSession::meta_frame() const {
    MetaMessage m;
    m.world = opt_.world;
    m.theta = state_.theta;
    m.delta = opt_.filter.delta;
    m.contour = level_contour(sol_, opt_.world, state_.theta, opt_.filter.delta, opt_.contourResolution);
    return encode(ServerMessage{m});
}

std::vector<std::string> TeleopSession::open() { return {meta_frame(), state_frame()}; }

std::vector<std::string> TeleopSession::handle(const std::string& frame) {
    ClientMessage m;
    try {
        m = parse_client_message(frame);
    } catch (const Error& e) {
        return {encode(ServerMessage{ErrorMessage{e.what()}})};
    }
    if (const auto* a = std::get_if<ActionMessage>(&m)) {
        pending_ = a->action;
        return {};
    }
    reset();
    return {meta_frame(), state_frame()};
}

std::vector<std::string> TeleopSession::tick() {
    if (halted_) return {};
    const FilterDecision d = filter_step(state_, pending_, sol_, model_, opt_.filter);
    pending_ = ActionId::straight();
    log_.push_back({t_, state_, d});
    DecisionMessage msg{t_, d.aTask, d.executed, d.intervened, d.valueNext};
    std::vector<std::string> out{encode(ServerMessage{msg})};
    if (d.halted) {
        halted_ = true;
    } else {
        state_ = step(state_, *d.executed, opt_.world);
        ++t_;
    }
    if (opt_.metaPeriod > 0 && t_ % opt_.metaPeriod == 0 && !d.halted) out.push_back(meta_frame());
    out.push_back(state_frame());
    return out;
}

std::vector<DubinsState> teleop_starts(const SafetySolution& sol, const WorldConfig& world, double minValue) {
    constexpr int kN = 21, kK = 16;
    std::vector<DubinsState> pts;
    const double h = 2.0 * world.bbox / (kN - 1);
    for (int i = 0; i < kN; ++i) {
        for (int j = 0; j < kN; ++j) {
            for (int k = 0; k < kK; ++k) {
                pts.push_back({-world.bbox + i * h, -world.bbox + j * h,
                               wrap_angle(-std::numbers::pi + k * 2.0 * std::numbers::pi / kK)});
            }
        }
    }
    const auto v = sol.monitor_values(pts);
    std::vector<DubinsState> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (v[i] > minValue && margin(pts[i], world.failure) > minValue) out.push_back(pts[i]);
    }
    return out;
}

}  // namespace shield
