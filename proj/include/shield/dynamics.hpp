#pragma once

#include <array>
#include <numbers>
#include <variant>
#include <vector>

namespace shield {

/// Privileged Dubins-car state. theta is kept in [-pi, pi).
struct DubinsState {
    double px = 0.0;
    double py = 0.0;
    double theta = 0.0;

    bool operator==(const DubinsState&) const = default;
};

inline constexpr int kNumActions = 3;
inline constexpr std::array<double, kNumActions> kTurnRates{-1.25, 0.0, 1.25};

/// Discrete turn-rate action; index 0, 1, 2 map to -1.25, 0, +1.25 rad/s.
class ActionId {
public:
    constexpr ActionId() = default;
    explicit ActionId(int index);

    constexpr int index() const { return index_; }
    constexpr double turn_rate() const { return kTurnRates[static_cast<std::size_t>(index_)]; }

    static constexpr ActionId straight() { return ActionId(1, 0); }

    bool operator==(const ActionId&) const = default;

private:
    constexpr ActionId(int index, int) : index_(index) {}
    int index_ = 1;
};

struct Circle {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.5;
};

/// |py| > halfWidth is failure.
struct Band {
    double halfWidth = 0.6;
};

struct FailureSpec;

struct FailureUnion {
    std::vector<FailureSpec> members;
};

struct FailureSpec {
    std::variant<Circle, Band, FailureUnion> shape;

    static FailureSpec circle(double cx, double cy, double radius);
    static FailureSpec band(double halfWidth);
    static FailureSpec any_of(std::vector<FailureSpec> members);
};

void validate(const FailureSpec& f);

struct WorldConfig {
    double v = 1.0;
    double dt = 0.05;
    double bbox = 1.0;
    FailureSpec failure = FailureSpec::circle(0.0, 0.0, 0.5);
};

void validate(const WorldConfig& cfg);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double theta);

DubinsState step(const DubinsState& s, ActionId a, const WorldConfig& cfg);

/// Signed failure margin in meters; negative strictly inside the failure region.
double margin(const DubinsState& s, const FailureSpec& f);

/// Set-membership test written independently of the margin formula.
bool in_failure(const DubinsState& s, const FailureSpec& f);

/// Closed box: |px| <= bbox and |py| <= bbox.
bool in_bbox(const DubinsState& s, const WorldConfig& cfg);

}  // namespace shield
