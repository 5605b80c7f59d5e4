#pragma once

#include "geobeam/common.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace geobeam {

struct BoundaryCircle {
    Vec center;
    double radius = 1.0;
    bool interior_inside = true; // false: the domain is the outside of the circle (a hole)
};

// Gamma^i_{jk}, symmetric in the lower pair.
struct Christoffel {
    int dim = 2;
    double v[3][3][3] = {};
    double operator()(int i, int j, int k) const { return v[i][j][k]; }
};

struct MetricChart {
    int dim = 2;
    std::string id;
    std::string kind;
    Vec lo, hi; // bounding box of the domain in chart coordinates
    std::optional<BoundaryCircle> circle;
    std::function<Mat(const Vec&)> metric_fn;
    std::function<double(const Vec&)> conformal_factor;
    std::function<double(const Vec&)> boundary_fn; // signed, negative inside
    std::function<Christoffel(const Vec&)> christoffel_fn; // optional analytic hook
    Vec period;              // empty unless the chart is a flat torus
    double extension = 0.25; // metric is valid for boundary_fn <= extension * diameter

    double diameter() const;
    double fd_step() const { return 1e-4 * diameter(); }
    bool periodic() const { return period.size() > 0; }
    Vec wrap(const Vec& x) const;
    // b - a, using the minimum image on periodic charts
    Vec displacement(const Vec& a, const Vec& b) const;
    bool inside(const Vec& x, double tol = 0.0) const { return boundary_fn(x) <= tol; }
    // metric with domain and conditioning checks
    Mat metric(const Vec& x) const;
    double sqrt_det(const Vec& x) const { return std::sqrt(metric(x).determinant()); }
    double norm(const Vec& x, const Vec& v) const { return std::sqrt(v.dot(metric(x) * v)); }
};

// Chart factories.
MetricChart euclidean_disk(double radius = 1.0);
MetricChart euclidean_box(const Vec& lo, const Vec& hi);
MetricChart conformal_disk(double radius, double amplitude);
// Stereographic chart of the cap {x_n >= alpha0} of the unit sphere.
MetricChart spherical_cap(double alpha0);
// dr^2 + r^2 dtheta^2 on a box in (r, theta)
MetricChart polar_plane(double r0, double r1, double th0, double th1);
// dtheta^2 + sin^2(theta) dphi^2 on a box in (theta, phi)
MetricChart sphere_angles(double th0, double th1, double ph0, double ph1);
// Metric entries g11, g12, g22 tabulated on a tensor grid, bicubic interpolation.
MetricChart tabulated_chart(const Vec& lo, const Vec& hi, int nx, int ny, const std::vector<double>& g11,
                            const std::vector<double>& g12, const std::vector<double>& g22,
                            std::optional<BoundaryCircle> circle = std::nullopt);
// Flat torus [0,Lx) x [0,Ly) with a disc removed; the hole is the boundary.
MetricChart flat_torus_with_hole(double Lx, double Ly, const Vec& hole_center, double hole_radius);
// c (dx1^2 + g0) on [x1_lo, x1_hi] x transversal
MetricChart admissible_chart(const MetricChart& transversal, double x1_lo, double x1_hi,
                             std::function<double(const Vec&)> c = nullptr);

Christoffel christoffel(const MetricChart& chart, const Vec& x);
// Gaussian curvature of a two dimensional chart.
double gaussian_curvature(const MetricChart& chart, const Vec& x);

enum class EntryClass { non_tangential, tangential, trapped };
std::string to_string(EntryClass c);

struct GeodesicSample {
    double t = 0;
    Vec x;
    Vec v;
};

struct GeodesicOptions {
    double step = 0.0; // 0 selects 0.005 * diameter
    double tangency_threshold = 0.05;
    double max_length = 0.0; // 0 selects 20 * diameter
};

struct GeodesicPath {
    std::vector<GeodesicSample> samples;
    double exit_time = std::numeric_limits<double>::infinity();
    EntryClass classification = EntryClass::trapped;
    Vec x0, v0;
    double step = 0;
    double entry_cos = 0, exit_cos = 0; // |<v, nu>| at both ends

    bool finite() const { return std::isfinite(exit_time); }
    // Position and velocity at arclength t; one RK4 step from the preceding sample,
    // several steps when t lies outside the sampled range.
    std::pair<Vec, Vec> state_at(const MetricChart& chart, double t) const;
};

GeodesicPath integrate_geodesic(const MetricChart& chart, const Vec& x0, const Vec& v0,
                                const GeodesicOptions& opt = {});
// Single RK4 step of the geodesic flow.
void geodesic_rk4_step(const MetricChart& chart, Vec& x, Vec& v, double dt);

struct BoundaryFrame {
    Vec x;
    Vec inward; // g-unit inward normal
    Vec tangent; // g-unit tangent, positively oriented with inward
};
BoundaryFrame boundary_frame(const MetricChart& chart, const Vec& x);
std::vector<Vec> boundary_points(const MetricChart& chart, int n);

struct FanOptions {
    GeodesicOptions geo;
    double min_fan_fraction = 0.5;
    int workers = 0;
};
std::vector<GeodesicPath> boundary_fan(const MetricChart& chart, int n_points, int n_dirs,
                                       const FanOptions& opt = {});

enum class Tri { no, yes, unknown };
std::string to_string(Tri t);

struct SimpleOptions {
    int n_boundary = 48;
    int n_dirs = 9;
    double convexity_tol = 1e-6;
    GeodesicOptions geo;
};
struct SimplicityReport {
    bool convex_boundary = false;
    bool no_conjugate_points = false;
    // Not verified independently; yes when both other checks pass, unknown otherwise.
    Tri diffeomorphic_exp = Tri::unknown;
    double min_second_fundamental = 0;
    double min_jacobi = 0;
    bool trapped_found = false;
    bool simple() const { return convex_boundary && no_conjugate_points && diffeomorphic_exp == Tri::yes; }
};
SimplicityReport check_simple(const MetricChart& chart, const SimpleOptions& opt = {});

class FermiFrame {
public:
    FermiFrame() = default;
    FermiFrame(MetricChart chart, GeodesicPath base, double half_width);

    Vec chart_map(double t, double y) const;
    // Newton inversion started from the nearest base sample with t in [t_lo, t_hi].
    std::pair<double, double> inverse_map(const Vec& x, double t_lo = -std::numeric_limits<double>::infinity(),
                                          double t_hi = std::numeric_limits<double>::infinity()) const;
    // d x / d(t, y), columns t and y
    Mat jacobian(double t, double y) const;
    // g0 expressed in (t, y)
    Mat metric_in_frame(double t, double y) const;
    // unit normal along the base geodesic
    Vec normal(double t) const;

    double half_width() const { return half_width_; }
    const GeodesicPath& base() const { return base_; }
    const MetricChart& chart() const { return chart_; }
    double length() const { return base_.exit_time; }

private:
    MetricChart chart_;
    GeodesicPath base_;
    double half_width_ = 0;
};

FermiFrame fermi_coordinates(const MetricChart& chart, const GeodesicPath& geo, double half_width);

class PolarNormalCoords {
public:
    PolarNormalCoords() = default;
    PolarNormalCoords(MetricChart chart, const Vec& omega, bool require_simple = true);

    Vec to_chart(double r, double theta) const;
    std::pair<double, double> from_chart(const Vec& x) const;
    // metric in (r, theta)
    Mat metric_block(double r, double theta) const;
    double m(double r, double theta) const { return metric_block(r, theta)(1, 1); }
    const Vec& omega() const { return omega_; }
    const MetricChart& chart() const { return chart_; }

private:
    MetricChart chart_;
    Vec omega_;
    Vec e1_, e2_;
};

PolarNormalCoords polar_normal_coords(const MetricChart& chart, const Vec& omega);

} // namespace geobeam
