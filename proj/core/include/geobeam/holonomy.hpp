#pragma once

#include "geobeam/fields.hpp"

namespace geobeam {

struct CurveSample {
    double t = 0;
    Vec x, dx;
};

struct Curve {
    std::string id;
    std::vector<CurveSample> samples;
    bool closed = false;

    void validate() const; // closed => endpoints coincide within 1e-10
    // cubic Hermite position and velocity between samples k and k + 1, s in [0, 1]
    std::pair<Vec, Vec> hermite(std::size_t k, double s) const;
};

Curve make_curve(const std::string& id, const std::function<Vec(double)>& x, const std::function<Vec(double)>& dx,
                 double a, double b, int n, bool closed);
Curve circle_loop(const Vec& center, double radius, int n = 2000, double turns = 1.0, const std::string& id = "");
Curve concatenate(const Curve& a, const Curve& b);
Curve reverse(const Curve& c);

// dr^2 + r^2 dtheta^2 on {r0 <= |x| <= r1} in Cartesian coordinates
MetricChart planar_annulus(double r0, double r1);

struct TransportResult {
    cplx s_rk4{0, 0};
    cplx s_closed{0, 0}; // exp(-i int A) s0
    cplx integral{0, 0};
    double discrepancy = 0;
};
// s' + i A(gamma, gamma') s = 0 by RK4 over the curve samples.
TransportResult parallel_transport(const SampledOneForm& A, const Curve& gamma, cplx s0, double tol = 1e-8);
cplx line_integral(const SampledOneForm& A, const Curve& gamma);

struct LoopHolonomy {
    std::string id;
    cplx integral{0, 0};
    cplx P{1, 0};
    double winding = 0;  // Re int A / 2 pi
    double distance = 0; // distance of int A / 2 pi to the integers (imaginary part included)
    bool trivial = true;
};

struct HolonomyOptions {
    double tol = 1e-4;
    double closed_tol = 1e-6;
    int ring_cells = 3; // nodes this close to the boundary are skipped in the closedness check
};

struct HolonomyReport {
    std::vector<LoopHolonomy> loops;
    bool trivial = true;
    double max_dA = 0;

    std::string to_json() const;
};

// sup |dA| over interior nodes
double closedness_defect(const SampledOneForm& A, int ring_cells = 3);
HolonomyReport loop_holonomy(const SampledOneForm& A, const std::vector<Curve>& loops, const HolonomyOptions& opt = {});

struct GaugeOptions {
    double tree_tol = 1e-6;
    int ring_cells = 3; // certificate evaluated this far from the boundary
    std::vector<Curve> loops; // checked with loop_holonomy first when not empty
    HolonomyOptions holonomy;
};

struct GaugeResult {
    SampledField F; // zero outside the domain
    double tree_discrepancy = 0;
    double boundary_error = 0; // max |F - 1| at boundary points next to the grid nodes
    double certificate = 0;    // sup |A + i F^{-1} dF| away from the boundary
    double min_modulus = 0;
};

// F(m) = exp(i int_{m_j}^{m} A) along two independent spanning trees of the grid nodes in the domain.
GaugeResult build_gauge(const SampledOneForm& A, const std::vector<Vec>& base_points, const GaugeOptions& opt = {});

} // namespace geobeam
