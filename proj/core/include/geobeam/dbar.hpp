#pragma once

#include "geobeam/grid.hpp"

namespace geobeam {

// Complex data on a rectangle in a 2-plane, z = x + i y with x along axis 0.
struct PlaneField {
    Grid grid;
    std::vector<cplx> values;
    // x0, x1, y0, y1
    std::array<double, 4> support{0, 0, 0, 0};

    void validate() const;
    static PlaneField sample(const Grid& g, const std::array<double, 4>& support,
                             const std::function<cplx(double, double)>& f);
};

enum class CauchyKind { dbar, d };
enum class CauchyMethod { automatic, direct, fft };

// u = (1 / pi z) * g solves dbar u = g; the conjugate kernel solves d u = g.
PlaneField cauchy_solve(const PlaneField& g, CauchyKind which, CauchyMethod method = CauchyMethod::automatic);

// dbar = (d_x + i d_y) / 2 and d = (d_x - i d_y) / 2 by finite differences.
std::vector<cplx> apply_wirtinger(const Grid& g, const std::vector<cplx>& u, CauchyKind which);

} // namespace geobeam
