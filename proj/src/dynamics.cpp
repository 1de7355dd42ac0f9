#include "shield/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "shield/errors.hpp"

namespace shield {

ActionId::ActionId(int index) : index_(index) {
    require(index >= 0 && index < kNumActions, ErrorCode::InvalidArgument,
            "action index " + std::to_string(index) + " outside {0,1,2}");
}

FailureSpec FailureSpec::circle(double cx, double cy, double radius) {
    return FailureSpec{Circle{cx, cy, radius}};
}

FailureSpec FailureSpec::band(double halfWidth) { return FailureSpec{Band{halfWidth}}; }

FailureSpec FailureSpec::any_of(std::vector<FailureSpec> members) {
    return FailureSpec{FailureUnion{std::move(members)}};
}

void validate(const FailureSpec& f) {
    if (const auto* c = std::get_if<Circle>(&f.shape)) {
        require(c->radius > 0.0 && std::isfinite(c->cx) && std::isfinite(c->cy),
                ErrorCode::InvalidArgument, "circle radius must be > 0");
    } else if (const auto* b = std::get_if<Band>(&f.shape)) {
        require(b->halfWidth > 0.0, ErrorCode::InvalidArgument, "band halfWidth must be > 0");
    } else {
        const auto& u = std::get<FailureUnion>(f.shape);
        require(!u.members.empty(), ErrorCode::InvalidArgument, "union must be non-empty");
        for (const auto& m : u.members) validate(m);
    }
}

void validate(const WorldConfig& cfg) {
    require(cfg.v > 0.0 && cfg.dt > 0.0 && cfg.bbox > 0.0, ErrorCode::InvalidArgument,
            "world v, dt and bbox must be positive");
    validate(cfg.failure);
}

double wrap_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = theta - two_pi * std::floor((theta + std::numbers::pi) / two_pi);
    // floor rounding can land exactly on +pi (or a hair above) for inputs near the seam
    if (w >= std::numbers::pi) w -= two_pi;
    if (w < -std::numbers::pi) w = -std::numbers::pi;
    return w;
}

DubinsState step(const DubinsState& s, ActionId a, const WorldConfig& cfg) {
    return DubinsState{s.px + cfg.dt * cfg.v * std::cos(s.theta),
                       s.py + cfg.dt * cfg.v * std::sin(s.theta),
                       wrap_angle(s.theta + cfg.dt * a.turn_rate())};
}

double margin(const DubinsState& s, const FailureSpec& f) {
    if (const auto* c = std::get_if<Circle>(&f.shape)) {
        return std::hypot(s.px - c->cx, s.py - c->cy) - c->radius;
    }
    if (const auto* b = std::get_if<Band>(&f.shape)) {
        return b->halfWidth - std::abs(s.py);
    }
    double m = std::numeric_limits<double>::infinity();
    for (const auto& member : std::get<FailureUnion>(f.shape).members) {
        m = std::min(m, margin(s, member));
    }
    return m;
}

bool in_failure(const DubinsState& s, const FailureSpec& f) {
    if (const auto* c = std::get_if<Circle>(&f.shape)) {
        return std::hypot(s.px - c->cx, s.py - c->cy) < c->radius;
    }
    if (const auto* b = std::get_if<Band>(&f.shape)) {
        return std::abs(s.py) > b->halfWidth;
    }
    const auto& members = std::get<FailureUnion>(f.shape).members;
    return std::any_of(members.begin(), members.end(),
                       [&](const FailureSpec& m) { return in_failure(s, m); });
}

bool in_bbox(const DubinsState& s, const WorldConfig& cfg) {
    return std::abs(s.px) <= cfg.bbox && std::abs(s.py) <= cfg.bbox;
}

}  // namespace shield
