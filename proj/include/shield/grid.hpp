#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "shield/dynamics.hpp"

namespace shield {

/// Regular (x, y, theta) lattice. x and y include both end points; theta is
/// periodic with nodes at -pi + k * 2pi / ntheta.
struct Grid3 {
    int nx = 101;
    int ny = 101;
    int ntheta = 63;
    double xLo = -1.0;
    double xHi = 1.0;
    double yLo = -1.0;
    double yHi = 1.0;

    std::size_t size() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(ntheta);
    }
    /// x-major, then y, then theta (theta fastest).
    std::size_t index(int ix, int iy, int ik) const {
        return (static_cast<std::size_t>(ix) * static_cast<std::size_t>(ny) +
                static_cast<std::size_t>(iy)) * static_cast<std::size_t>(ntheta) +
               static_cast<std::size_t>(ik);
    }
    std::array<int, 3> unindex(std::size_t n) const;

    double dx() const { return (xHi - xLo) / (nx - 1); }
    double dy() const { return (yHi - yLo) / (ny - 1); }
    double dtheta() const;
    double x(int ix) const { return xLo + ix * dx(); }
    double y(int iy) const { return yLo + iy * dy(); }
    double theta(int ik) const;
    DubinsState node(std::size_t n) const;
    /// Smallest spatial cell edge; used as the one-cell slack for sign comparisons.
    double cell() const;

    bool operator==(const Grid3&) const = default;
};

void validate(const Grid3& g);

struct SolveMeta {
    double gamma = 1.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residualHistory;  ///< per sweep; not persisted
};

struct ValueGrid {
    Grid3 grid;
    std::vector<double> values;
    SolveMeta meta;

    double at(int ix, int iy, int ik) const { return values[grid.index(ix, iy, ik)]; }
};

/// Precomputed trilinear stencil of a continuous query point.
struct Stencil {
    int ix = 0, iy = 0, ik0 = 0, ik1 = 0;
    double fx = 0.0, fy = 0.0, fk = 0.0;
};

/// x/y are clamped into the grid bounds; theta wraps.
Stencil make_stencil(const Grid3& g, const DubinsState& s);
double interpolate(const Grid3& g, const std::vector<double>& values, const Stencil& st);
double interpolate(const ValueGrid& vg, const DubinsState& s);

}  // namespace shield
