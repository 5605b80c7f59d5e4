#pragma once

#include "geobeam/dbar.hpp"
#include "geobeam/fields.hpp"
#include "geobeam/geometry.hpp"

#include <cstdint>

namespace geobeam {

enum class SeedKind { one, exponential }; // a0 = 1 or e^{i lambda (x1 + i r)}
std::string to_string(SeedKind k);

struct WkbOptions {
    int n_x1 = 129, n_r = 129, n_theta = 33;
    double sigma = 0.4;
    double theta_pad = 0.05; // radians beyond the angular extent of M
    double pad_cells = 4;    // cells beyond the support of A_tau in (x1, r)
    SeedKind seed = SeedKind::one;
    std::function<double(double)> b; // angular weight, null means 1
    bool unmollified_phase = false;  // also solve for Phi from A itself
    int workers = 0;
};

struct WkbSolution {
    ChartPtr chart; // (x1, r, theta)
    PolarNormalCoords polar;
    Grid grid;
    SemiclassicalParams params;
    double sigma = 0.4;
    double tau = 0;
    bool mollified = true; // false when tau is below the resolution of A and A_tau = A
    SeedKind seed = SeedKind::one;

    std::vector<cplx> Phi_tau, Phi; // Phi only with unmollified_phase
    std::vector<cplx> a0, a;
    std::vector<char> inside;
    SampledOneForm A, A_tau; // polar components, zero outside M
    SampledField q;

    double transport_residual = 0; // max over nodes of M
    double eikonal_error = 0;      // max |c |d psi|^2 - 1| and |<d phi, d psi>|
    double seed_defect = 0;        // max |dbar a0|
    double Phi_sup = 0, grad_Phi_sup = 0;
    std::uint64_t source_tag = 0;

    cplx rho(double x1, double r) const { return {x1, r}; }
};

// M is the admissible chart (x1, x'); D is a simple transversal chart containing the pole.
// A and q live on M's chart coordinates.
WkbSolution build_wkb(const MetricChart& M, const MetricChart& D, const Vec& omega, const SampledOneForm& A,
                      const SampledField& q, const SemiclassicalParams& params, const WkbOptions& opt = {});

struct WkbGroup {
    std::string name;
    TermTag tag = TermTag::smooth;
    double norm = 0;      // L2 of the group (divergence groups: L2 of the covector)
    double reference = 0; // expected scale evaluated at (h, tau)
    std::string rate;
};

struct WkbResidualReport {
    double bound = 0;
    double smooth_l2 = 0;
    double divergence_l2 = 0;
    double h = 0, tau = 0;
    std::vector<WkbGroup> groups;
    const WkbGroup& group(const std::string& name) const;
};

WkbResidualReport wkb_residual(const WkbSolution& sol, const SampledOneForm& A, const SampledField& q);

} // namespace geobeam
