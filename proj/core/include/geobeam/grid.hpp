#pragma once

#include "geobeam/common.hpp"

#include <array>

namespace geobeam {

// Tensor grid, axis 0 varies slowest. Periodic axes hold n nodes on [lo, hi).
struct Grid {
    int dim = 2;
    std::array<int, 3> n{1, 1, 1};
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{0, 0, 0};
    std::array<bool, 3> periodic{false, false, false};

    static Grid make(const std::vector<double>& lo, const std::vector<double>& hi, const std::vector<int>& n);

    double step(int k) const
    {
        return periodic[static_cast<std::size_t>(k)]
                   ? (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]) / n[static_cast<std::size_t>(k)]
                   : (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]) /
                         (n[static_cast<std::size_t>(k)] - 1);
    }
    double coord(int k, int i) const { return lo[static_cast<std::size_t>(k)] + i * step(k); }
    std::size_t size() const
    {
        return static_cast<std::size_t>(n[0]) * static_cast<std::size_t>(n[1]) * static_cast<std::size_t>(n[2]);
    }
    std::size_t index(int i, int j, int k = 0) const
    {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(n[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(n[2]) +
               static_cast<std::size_t>(k);
    }
    std::array<int, 3> multi(std::size_t idx) const;
    Vec point(std::size_t idx) const;
    double cell_volume() const;
    bool same(const Grid& o) const;
    std::size_t stride(int axis) const;
    // Simpson / trapezoid product weights (cell volume included).
    std::vector<double> quadrature_weights() const;
};

// Cubic convolution interpolation (Catmull-Rom, quadratic ghost nodes at edges).
cplx interp_cubic(const Grid& g, const std::vector<cplx>& f, const Vec& x);
double interp_cubic(const Grid& g, const std::vector<double>& f, const Vec& x);
cplx interp_linear(const Grid& g, const std::vector<cplx>& f, const Vec& x);
bool grid_contains(const Grid& g, const Vec& x, double slack = 1e-12);

// First derivative along one axis: 4th order central interior, 4 point one sided
// at the edges, periodic wrap on periodic axes.
void diff_axis(const Grid& g, const std::vector<cplx>& f, int axis, std::vector<cplx>& out);
void diff_axis(const Grid& g, const std::vector<double>& f, int axis, std::vector<double>& out);

} // namespace geobeam
