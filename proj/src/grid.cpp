#include "shield/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shield/errors.hpp"

namespace shield {

std::array<int, 3> Grid3::unindex(std::size_t n) const {
    const auto nt = static_cast<std::size_t>(ntheta);
    const auto nyy = static_cast<std::size_t>(ny);
    const int ik = static_cast<int>(n % nt);
    n /= nt;
    const int iy = static_cast<int>(n % nyy);
    const int ix = static_cast<int>(n / nyy);
    return {ix, iy, ik};
}

double Grid3::dtheta() const { return 2.0 * std::numbers::pi / ntheta; }

double Grid3::theta(int ik) const { return -std::numbers::pi + ik * dtheta(); }

DubinsState Grid3::node(std::size_t n) const {
    const auto [ix, iy, ik] = unindex(n);
    return DubinsState{x(ix), y(iy), theta(ik)};
}

double Grid3::cell() const { return std::min(dx(), dy()); }

void validate(const Grid3& g) {
    require(g.nx >= 2 && g.ny >= 2 && g.ntheta >= 3, ErrorCode::InvalidArgument,
            "grid needs nx, ny >= 2 and ntheta >= 3");
    require(std::isfinite(g.xLo) && std::isfinite(g.xHi) && g.xLo < g.xHi &&
                std::isfinite(g.yLo) && std::isfinite(g.yHi) && g.yLo < g.yHi,
            ErrorCode::InvalidArgument, "grid bounds must be finite with lo < hi");
}

namespace {

void axis(double v, double lo, double h, int n, int& i0, double& f) {
    double t = (v - lo) / h;
    t = std::clamp(t, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<int>(std::floor(t)), n - 2);
    f = t - i0;
}

}  // namespace

Stencil make_stencil(const Grid3& g, const DubinsState& s) {
    Stencil st;
    axis(s.px, g.xLo, g.dx(), g.nx, st.ix, st.fx);
    axis(s.py, g.yLo, g.dy(), g.ny, st.iy, st.fy);
    double t = (wrap_angle(s.theta) + std::numbers::pi) / g.dtheta();
    int k = static_cast<int>(std::floor(t));
    st.fk = t - k;
    k %= g.ntheta;
    if (k < 0) k += g.ntheta;
    st.ik0 = k;
    st.ik1 = (k + 1) % g.ntheta;
    return st;
}

double interpolate(const Grid3& g, const std::vector<double>& v, const Stencil& st) {
    auto lerp_theta = [&](int ix, int iy) {
        return (1.0 - st.fk) * v[g.index(ix, iy, st.ik0)] + st.fk * v[g.index(ix, iy, st.ik1)];
    };
    const double c00 = lerp_theta(st.ix, st.iy);
    const double c01 = lerp_theta(st.ix, st.iy + 1);
    const double c10 = lerp_theta(st.ix + 1, st.iy);
    const double c11 = lerp_theta(st.ix + 1, st.iy + 1);
    const double c0 = (1.0 - st.fy) * c00 + st.fy * c01;
    const double c1 = (1.0 - st.fy) * c10 + st.fy * c11;
    return (1.0 - st.fx) * c0 + st.fx * c1;
}

double interpolate(const ValueGrid& vg, const DubinsState& s) {
    return interpolate(vg.grid, vg.values, make_stencil(vg.grid, s));
}

}  // namespace shield
