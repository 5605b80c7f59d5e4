#pragma once

#include "geobeam/fields.hpp"

namespace geobeam {

// Chart in boundary normal coordinates (x', x_n), x_n >= 0 inside, x0 at the origin.
struct BoundaryNormalChart {
    ChartPtr chart;
    ChartPtr original;            // null for the flat half-space (identity map)
    Grid grid;                    // tabulation grid
    std::vector<std::vector<double>> position; // position[k][node]: original coordinate k
    std::vector<std::vector<double>> jacobian; // jacobian[k * n + j][node]: d original_k / d y_j

    Vec to_original(const Vec& y) const;
    Mat jacobian_at(const Vec& y) const;
    // Pull a covector field on the original chart back to boundary normal coordinates.
    SampledOneForm pullback(const std::function<CVec(const Vec&)>& A, const Grid& grid) const;
};

// Flat half-space box x' in [-w, w]^{n-1}, x_n in [0, depth].
BoundaryNormalChart half_space(int n, double half_width, double depth);
// 2D chart with circular boundary: normal geodesics from the boundary arc of half length
// `half_width` (metric arclength) around the boundary point at polar angle theta0.
BoundaryNormalChart boundary_normal_chart(ChartPtr chart, double theta0, double half_width, double depth,
                                          int n_s = 121, int n_n = 81);

struct BoundaryProbe {
    ChartPtr chart; // boundary normal coordinates
    Vec tau;        // unit tangent covector in R^{n-1}
    double lambda = 1e-3;
    double eta_radius = 1.0; // support of eta in the scaled variable x / sqrt(lambda)
    double eta_scale = 1.0;  // normalises int eta(x', 0)^2 dx' = 1

    int dim() const { return chart->dim; }
    double eta(const Vec& y) const;
    Vec grad_eta(const Vec& y) const;
    cplx v0(const Vec& x) const;
    CVec dv0(const Vec& x) const;
    // Normalisation, block form of the metric, support fit.
    void validate() const;
};

BoundaryProbe make_probe(ChartPtr chart, const Vec& tau, double lambda, double eta_radius = 1.0);
// int_{R^{n-1}} eta(x', 0)^2 dx' by radial Gauss quadrature
double eta_normalization(const BoundaryProbe& p);

SampledField oscillatory_data(const BoundaryProbe& probe, const Grid& grid);

struct ProbeNorms {
    double lambda = 0;
    double v0_l2 = 0;
    double dv0_l2 = 0;
    double delta_dv0_l2 = 0; // distance to the boundary times |dv0|
};
// Quadrature in the scaled variables y' = x' / sqrt(lambda), y_n = x_n / lambda.
ProbeNorms probe_norms(const BoundaryProbe& probe, int points = 32);

struct RateSuite {
    std::vector<ProbeNorms> norms;
    double v0_exponent = 0, dv0_exponent = 0, delta_dv0_exponent = 0;
    double expected_v0 = 0, expected_dv0 = 0;
};
RateSuite probe_rates(ChartPtr chart, const Vec& tau, const std::vector<double>& lambdas, int points = 32);

struct RecoveryReport {
    std::vector<double> lambdas;
    std::vector<cplx> I1;
    std::vector<cplx> extrapolated; // 2 I1(lambda_{k+1}) - I1(lambda_k), aligned with lambdas[k + 1]
    cplx estimate{0, 0};
    bool converged = true;
};

struct RecoveryOptions {
    double lambda0 = 4e-3;
    int levels = 3; // lambda0, lambda0 / 2, ...
    int points = 32;
    int workers = 0;
};

// lambda^{-(n-1)/2} int i <A, v0 d conj(v0) - conj(v0) d v0>_g dV, by quadrature.
cplx boundary_integral(const BoundaryProbe& probe, const std::function<CVec(const Vec&)>& A, int points = 32);
RecoveryReport tangential_recovery(const BoundaryProbe& probe, const SampledOneForm& A, const RecoveryOptions& opt = {});
RecoveryReport tangential_recovery(const BoundaryProbe& probe, const std::function<CVec(const Vec&)>& A,
                                   const RecoveryOptions& opt = {});

void write_recovery_csv(const RecoveryReport& r, const std::string& path);

} // namespace geobeam
