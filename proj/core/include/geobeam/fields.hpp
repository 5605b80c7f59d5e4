#pragma once

#include "geobeam/geometry.hpp"
#include "geobeam/grid.hpp"

#include <memory>
#include <optional>

namespace geobeam {

using ChartPtr = std::shared_ptr<const MetricChart>;

struct SampledField {
    ChartPtr chart;
    Grid grid;
    std::vector<cplx> values;

    void validate() const;
    cplx at(const Vec& x) const { return interp_cubic(grid, values, x); }
};

struct SampledOneForm {
    ChartPtr chart;
    Grid grid;
    std::vector<std::vector<cplx>> comp; // comp[k][node]
    bool boundary_tangential_zero = false;

    int dim() const { return static_cast<int>(comp.size()); }
    void validate() const;
    CVec at(const Vec& x) const;
};

struct SemiclassicalParams {
    double h = 0.1;
    double lambda = 0.0;

    double mu() const { return 1.0 / h; }
    cplx s() const { return {1.0 / h, lambda}; }
    void validate() const;
};

SampledField sample_field(ChartPtr chart, const Grid& grid, const std::function<cplx(const Vec&)>& f);
SampledOneForm sample_form(ChartPtr chart, const Grid& grid, const std::function<CVec(const Vec&)>& f);
SampledField zero_field(ChartPtr chart, const Grid& grid);
SampledOneForm zero_form(ChartPtr chart, const Grid& grid);

// Metric data sampled at grid nodes.
struct GridMetric {
    std::vector<Mat> g, ginv;
    std::vector<double> sqrtg;
    static GridMetric build(const MetricChart& chart, const Grid& grid);
};

SampledOneForm exterior_d(const SampledField& u);
SampledField codifferential(const SampledOneForm& v);
SampledField laplacian(const SampledField& u);
// bilinear pairing <A, B>_g
SampledField pairing(const SampledOneForm& a, const SampledOneForm& b);
SampledOneForm scale(const SampledOneForm& a, const SampledField& u);
// Checks that the pullback to the boundary vanishes at nodes within `band` of the boundary.
bool boundary_tangential_zero(const SampledOneForm& a, double tol = 1e-8, double band = -1);

SampledField magnetic_schrodinger_apply(const SampledField& u, const SampledOneForm& A, const SampledField& q);

enum class WeightKind { real_x1, complex_s };
struct ConjugationWeight {
    WeightKind kind = WeightKind::complex_s;
    double epsilon = 0; // convexification scale for real_x1; 0 means none
    bool h2_scaled = false;
};
// e^{rho} L e^{-rho} u in expanded form, rho = s x1 or phi~/h.
SampledField conjugated_apply(const SampledField& u, const SampledOneForm& A, const SampledField& q,
                              const SemiclassicalParams& params, const ConjugationWeight& w);

// Componentwise convolution with the normalised bump (1 - |x/tau|^2)^4, zero extension.
SampledOneForm mollify(const SampledOneForm& A, double tau);
SampledField mollify(const SampledField& u, double tau);
// Discrete kernel weights on a grid, normalised to unit mass.
double mollifier_profile(double r_over_tau);

struct ConformalReduction {
    SampledOneForm A;
    SampledField q_tilde;
    ChartPtr product_chart;
};
ConformalReduction conformal_reduce(const SampledOneForm& A, const SampledField& q);
// g / c with unit conformal factor
MetricChart divide_conformal(const MetricChart& chart);

// Semiclassical norms.
struct QuadratureNodes {
    std::vector<double> weight; // includes the volume density
    std::vector<Mat> ginv;      // for |covector|_g; may be empty (Euclidean)
    std::size_t size() const { return weight.size(); }
};
QuadratureNodes grid_nodes(const MetricChart& chart, const Grid& grid);

enum class TermTag { untagged, smooth, divergence };
struct TermGroup {
    std::string name;
    TermTag tag = TermTag::untagged;
    std::vector<cplx> scalar;   // smooth groups
    std::vector<CVec> covector; // divergence groups: residual contains d*(covector)
};

struct SclNorms {
    double l2 = 0;
    double h1_scl = 0;
    double h_minus1_scl_bound = 0;
    double smooth_l2 = 0;
    double divergence_l2 = 0;
    std::vector<std::pair<std::string, double>> groups;
};

SclNorms norm_scl(const SampledField& u, const SemiclassicalParams& p);
// Certified bound ||w0|| + h^{-1} ||w1|| for a tagged decomposition.
SclNorms norm_scl(const QuadratureNodes& nodes, const std::vector<TermGroup>& groups, const SemiclassicalParams& p);

double l2_norm(const SampledField& u);
cplx inner(const SampledField& u, const SampledField& v); // bilinear integral of u v dV

} // namespace geobeam
