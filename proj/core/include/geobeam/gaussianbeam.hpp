#pragma once

#include "geobeam/dbar.hpp"
#include "geobeam/fields.hpp"
#include "geobeam/geometry.hpp"

#include <memory>

namespace geobeam {

// Solution of dH/dt + H^2 = F with complex symmetric H, Im H positive definite.
struct RiccatiSolution {
    std::vector<double> t;
    std::vector<CMat> H;
    std::vector<Mat> F;
    std::vector<cplx> trace_integral; // int_{t0}^{t} tr H ds at the nodes
    CMat H0;
    double t0 = 0;

    double max_asymmetry = 0;
    double min_imag_eigenvalue = 0;
    double max_residual = 0;
    double max_det_error = 0; // relative error of the det Im H identity

    int size() const { return static_cast<int>(H.empty() ? 0 : H[0].rows()); }
    // Cubic Hermite interpolation using dH/dt = F - H^2 at the nodes.
    CMat at(double t) const;
    CMat derivative(double t) const;
    cplx trace_integral_at(double t) const;
    double t_lo() const { return t.front(); }
    double t_hi() const { return t.back(); }
};

struct RiccatiOptions {
    double step = 0.005;
    double residual_tol = 1e-6;
    int max_refinements = 4;
};

RiccatiSolution solve_riccati(const std::function<Mat(double)>& F, const CMat& H0, double t0, double t_lo,
                              double t_hi, const RiccatiOptions& opt = {});

// F(t) = -1/2 d^2/dy^2 g^{tt}(t, 0) for a Fermi frame over a two dimensional transversal chart.
std::function<Mat(double)> frame_riccati_source(const FermiFrame& frame);

struct BeamPhase {
    FermiFrame frame;
    RiccatiSolution ric;

    cplx phi(double t, double y) const;
    // (d_t phi, d_y phi)
    std::array<cplx, 2> dphi(double t, double y) const;
    cplx eikonal_defect(double t, double y) const;
    // c = 1/2 min over t of the smallest eigenvalue of Im H
    double imag_lower_constant() const;
    double defect_exponent = 0;
};

struct PhaseCheckOptions {
    int n_t = 9;
    int n_y = 6;
    double y_max = 0; // 0 selects half the frame width
};
// Builds the phase and fits the eikonal defect exponent on tube samples.
BeamPhase build_phase(const FermiFrame& frame, const RiccatiSolution& ric, const PhaseCheckOptions& opt = {});

enum class BeamKind { v, w };
std::string to_string(BeamKind k);

struct AmplitudeOptions {
    double x1_lo = -1, x1_hi = 1; // x1 range the amplitude must cover
    double t_margin = 0.1;        // beyond [0, L]
    double plane_step = 0.005;
    double taper = 0.25; // width of the smooth cutoff applied to the transport source
    std::function<cplx(double, double)> eta; // holomorphic factor, null means 1
};

struct BeamAmplitude {
    BeamKind kind = BeamKind::v;
    Grid plane; // (x1, t)
    std::vector<cplx> Phi;
    std::vector<cplx> a0;
    std::vector<cplx> da0_dx1, da0_dt;
    std::array<double, 4> valid{0, 0, 0, 0}; // x1_lo, x1_hi, t_lo, t_hi where the transport equation holds
    double tau = 0;
    double f_t0 = 0;
    double transport_residual = 0;
    double normalization_error = 0;
    std::function<cplx(double, double)> eta;
    std::shared_ptr<const RiccatiSolution> ric;

    cplx f(double t) const;
    cplx a0_at(double x1, double t) const;
    cplx Phi_at(double x1, double t) const;
    cplx eta_at(double x1, double t) const { return eta ? eta(x1, t) : cplx(1.0); }
};

// A_tau is the mollified potential on a three dimensional (x1, x) chart grid.
BeamAmplitude build_amplitude(const FermiFrame& frame, const RiccatiSolution& ric, const SampledOneForm& A_tau,
                              BeamKind kind, double tau, const AmplitudeOptions& opt = {});

// Smooth cutoff: 1 on |r| <= 1/4, 0 on |r| >= 1/2.
double beam_cutoff(double r);
double beam_cutoff_derivative(double r);

struct BeamSegment {
    double t_lo = 0, t_hi = 0;       // support of the partition function
    double flat_lo = 0, flat_hi = 0; // partition function equals 1 here when no neighbour overlaps
};

struct BeamOptions {
    double delta_prime = 0.5;
    double sigma = 0.4;
    double t0 = 0;
    CMat H0; // empty selects i I
    double gluing_angle = 0.1;
    RiccatiOptions riccati;
    AmplitudeOptions amplitude;
};

struct GaussianBeam {
    BeamPhase phase;
    BeamAmplitude amp;
    SemiclassicalParams params;
    BeamKind kind = BeamKind::v;
    double delta_prime = 0.5;
    double tau = 0;
    std::shared_ptr<const SampledOneForm> A_tau;
    std::vector<BeamSegment> segments;
    double overlap_mismatch = 0;

    // mu^{1/4} a0(x1, t) chi(y / delta')
    cplx amplitude(double x1, double t, double y) const;
    // e^{i s phi} amplitude
    cplx value(double x1, double t, double y) const;
    // |e^{i s phi}| = e^{-mu Im phi - lambda Re phi}
    double modulus_weight(double t, double y) const;
    // partition function of segment j at t
    double partition(std::size_t j, double t) const;
    // Sum of the segment contributions at a chart point of the transversal manifold.
    cplx at_chart(double x1, const Vec& x) const;
    double length() const { return phase.frame.length(); }
};

GaussianBeam assemble_quasimode(const MetricChart& chart, const GeodesicPath& geo, const SampledOneForm& A,
                                const SemiclassicalParams& params, BeamKind kind, const BeamOptions& opt = {});

struct TubeOptions {
    int n_x1 = 81;
    int n_t = 201;
    int n_y = 61;
    double z_max = 7.5; // y range is min(delta'/2, z_max h^{1/2})
};

struct ResidualReport {
    double bound = 0;
    double smooth_l2 = 0;
    double divergence_l2 = 0;
    double cutoff_l2 = 0; // smooth residual restricted to the cutoff transition |y| > delta'/4
    double tau = 0;
    double h = 0;
    std::vector<std::pair<std::string, double>> groups;
};

// Certified H^{-1}_scl bound of e^{sx1} h^2 L e^{-sx1} v (v side) or the w-side analogue.
// `expected_tau`, when positive, must match the beam's mollification length.
ResidualReport residual_bound(const GaussianBeam& beam, const SampledOneForm& A, const SampledField& q,
                              double expected_tau = -1, const TubeOptions& opt = {});

struct SliceNorms {
    double l2 = 0;
    double h1_scl = 0;
};
SliceNorms slice_norm(const GaussianBeam& beam, double x1, int n_t = 801, int n_z = 41, double z_max = 7.0);
double boundary_trace_norm(const GaussianBeam& beam, double x1, int n_boundary = 4000);

enum class Pairing { product, alpha_dv, alpha_dw };
std::string to_string(Pairing p);

struct SliceOptions {
    int n_t = 2001;
    int n_z = 41;
    double z_max = 7.0;
};

// Finite-h slice integral over {x1} x M0. psi is a function on M0 chart coordinates; alpha
// is evaluated on (x1, x) chart coordinates.
cplx concentration_integral(const GaussianBeam& v, const GaussianBeam& w, const std::function<cplx(const Vec&)>& psi,
                            double x1, Pairing pairing, const std::function<CVec(const Vec&)>& alpha = nullptr,
                            const SliceOptions& opt = {});
// Right-hand side of the limit identity with the beams' transport phases.
cplx geodesic_limit(const GaussianBeam& v, const GaussianBeam& w, const std::function<cplx(const Vec&)>& psi,
                    double x1, Pairing pairing, const std::function<CVec(const Vec&)>& alpha = nullptr,
                    int n_t = 2001);

// Diagonal and mixed parts of the product slice integral for a glued beam pair.
struct CrossTerms {
    cplx diagonal = 0;
    cplx mixed = 0;
};
CrossTerms segment_cross_terms(const GaussianBeam& v, const GaussianBeam& w, double x1, const SliceOptions& opt = {});

struct SelfIntersection {
    double t_a = 0, t_b = 0;
    double angle = 0;
};
std::vector<SelfIntersection> find_self_intersections(const MetricChart& chart, const GeodesicPath& geo,
                                                      double min_separation);

} // namespace geobeam
