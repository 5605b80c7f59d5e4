#include "geobeam/gaussianbeam.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace geobeam {

std::string to_string(BeamKind k) { return k == BeamKind::v ? "v" : "w"; }

std::string to_string(Pairing p)
{
    switch (p) {
    case Pairing::product:
        return "product";
    case Pairing::alpha_dv:
        return "alpha_dv";
    case Pairing::alpha_dw:
        return "alpha_dw";
    }
    return "?";
}

// ---------------------------------------------------------------- Riccati

namespace {

CMat riccati_rhs(const Mat& F, const CMat& H) { return F.cast<cplx>() - H * H; }

double min_imag_eig(const CMat& H)
{
    Mat im = H.imag();
    Mat sym = 0.5 * (im + im.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    return es.eigenvalues().minCoeff();
}

double asymmetry(const CMat& H) { return (H - H.transpose()).cwiseAbs().maxCoeff(); }

// Integrates from t0 across `nodes` (monotone, starting at t0).
std::vector<CMat> rk4_sweep(const std::function<Mat(double)>& F, const CMat& H0, const std::vector<double>& nodes)
{
    std::vector<CMat> out;
    out.reserve(nodes.size());
    CMat H = H0;
    out.push_back(H);
    for (std::size_t k = 1; k < nodes.size(); ++k) {
        double a = nodes[k - 1], dt = nodes[k] - a;
        Mat Fa = F(a), Fm = F(a + 0.5 * dt), Fb = F(a + dt);
        CMat k1 = riccati_rhs(Fa, H);
        CMat k2 = riccati_rhs(Fm, H + 0.5 * dt * k1);
        CMat k3 = riccati_rhs(Fm, H + 0.5 * dt * k2);
        CMat k4 = riccati_rhs(Fb, H + dt * k3);
        H += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        H = 0.5 * (H + H.transpose()).eval();
        out.push_back(H);
    }
    return out;
}

} // namespace

CMat RiccatiSolution::at(double s) const
{
    if (s < t.front() - 1e-12 || s > t.back() + 1e-12)
        throw DomainError("Riccati solution evaluated outside its range");
    auto it = std::upper_bound(t.begin(), t.end(), s);
    std::size_t k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    if (k >= t.size() - 1)
        k = t.size() - 2;
    double a = t[k], b = t[k + 1], dt = b - a, u = (s - a) / dt;
    CMat da = riccati_rhs(F[k], H[k]), db = riccati_rhs(F[k + 1], H[k + 1]);
    double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u, h01 = -2 * u * u * u + 3 * u * u,
           h11 = u * u * u - u * u;
    return h00 * H[k] + (h10 * dt) * da + h01 * H[k + 1] + (h11 * dt) * db;
}

CMat RiccatiSolution::derivative(double s) const
{
    if (s < t.front() - 1e-12 || s > t.back() + 1e-12)
        throw DomainError("Riccati solution evaluated outside its range");
    auto it = std::upper_bound(t.begin(), t.end(), s);
    std::size_t k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    if (k >= t.size() - 1)
        k = t.size() - 2;
    double a = t[k], b = t[k + 1], dt = b - a, u = (s - a) / dt;
    CMat da = riccati_rhs(F[k], H[k]), db = riccati_rhs(F[k + 1], H[k + 1]);
    double d00 = 6 * u * u - 6 * u, d10 = 3 * u * u - 4 * u + 1, d01 = -6 * u * u + 6 * u, d11 = 3 * u * u - 2 * u;
    return (d00 / dt) * H[k] + d10 * da + (d01 / dt) * H[k + 1] + d11 * db;
}

cplx RiccatiSolution::trace_integral_at(double s) const
{
    if (s < t.front() - 1e-12 || s > t.back() + 1e-12)
        throw DomainError("Riccati solution evaluated outside its range");
    auto it = std::upper_bound(t.begin(), t.end(), s);
    std::size_t k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    if (k >= t.size() - 1)
        k = t.size() - 2;
    // Simpson on [t_k, s] with the interpolant
    double a = t[k], m = 0.5 * (a + s);
    cplx part = (s - a) / 6.0 * (H[k].trace() + 4.0 * at(m).trace() + at(s).trace());
    return trace_integral[k] + part;
}

RiccatiSolution solve_riccati(const std::function<Mat(double)>& F, const CMat& H0, double t0, double t_lo,
                              double t_hi, const RiccatiOptions& opt)
{
    if (H0.rows() != H0.cols() || H0.rows() < 1)
        throw ShapeError("H0 must be a square matrix");
    if (asymmetry(H0) > 1e-12)
        throw ParameterError("H0 must be complex symmetric");
    if (!(min_imag_eig(H0) > 0))
        throw ParameterError("Im H0 must be positive definite");
    if (!(t_lo <= t0 && t0 <= t_hi) || !(t_hi > t_lo))
        throw ParameterError("t0 must lie in [t_lo, t_hi]");

    double step = opt.step;
    for (int attempt = 0; attempt <= opt.max_refinements; ++attempt, step *= 0.5) {
        int nf = t_hi > t0 ? std::max(4, static_cast<int>(std::ceil((t_hi - t0) / step))) : 0;
        int nb = t0 > t_lo ? std::max(4, static_cast<int>(std::ceil((t0 - t_lo) / step))) : 0;
        std::vector<double> fwd{t0}, bwd{t0};
        for (int k = 1; k <= nf; ++k)
            fwd.push_back(t0 + (t_hi - t0) * k / nf);
        for (int k = 1; k <= nb; ++k)
            bwd.push_back(t0 - (t0 - t_lo) * k / nb);
        auto Hf = rk4_sweep(F, H0, fwd);
        auto Hb = rk4_sweep(F, H0, bwd);

        RiccatiSolution r;
        r.H0 = H0;
        r.t0 = t0;
        for (int k = nb; k >= 1; --k) {
            r.t.push_back(bwd[static_cast<std::size_t>(k)]);
            r.H.push_back(Hb[static_cast<std::size_t>(k)]);
        }
        for (std::size_t k = 0; k < fwd.size(); ++k) {
            r.t.push_back(fwd[k]);
            r.H.push_back(Hf[k]);
        }
        for (double s : r.t)
            r.F.push_back(F(s));

        // cumulative trace integral from t0 (node index nb), Hermite-exact per interval
        std::size_t i0 = static_cast<std::size_t>(nb);
        r.trace_integral.assign(r.t.size(), 0.0);
        auto seg = [&](std::size_t k) {
            double dt = r.t[k + 1] - r.t[k];
            cplx da = riccati_rhs(r.F[k], r.H[k]).trace(), db = riccati_rhs(r.F[k + 1], r.H[k + 1]).trace();
            return dt / 2 * (r.H[k].trace() + r.H[k + 1].trace()) + dt * dt / 12 * (da - db);
        };
        for (std::size_t k = i0; k + 1 < r.t.size(); ++k)
            r.trace_integral[k + 1] = r.trace_integral[k] + seg(k);
        for (std::size_t k = i0; k > 0; --k)
            r.trace_integral[k - 1] = r.trace_integral[k] - seg(k - 1);

        r.min_imag_eigenvalue = 1e300;
        double det0 = H0.imag().determinant();
        for (std::size_t k = 0; k < r.t.size(); ++k) {
            r.max_asymmetry = std::max(r.max_asymmetry, asymmetry(r.H[k]));
            r.min_imag_eigenvalue = std::min(r.min_imag_eigenvalue, min_imag_eig(r.H[k]));
            double predicted = det0 * std::exp(-2 * r.trace_integral[k].real());
            double actual = Mat(r.H[k].imag()).determinant();
            r.max_det_error = std::max(r.max_det_error, std::abs(actual - predicted) / std::abs(predicted));
        }
        if (!(r.min_imag_eigenvalue > 0))
            throw RiccatiError("Im H lost positive definiteness during integration");

        // residual by five point differences within each uniform half
        r.max_residual = 0;
        auto check = [&](std::size_t a, std::size_t b) {
            if (b < a + 4)
                return;
            for (std::size_t k = a + 2; k + 2 <= b; ++k) {
                double dt = r.t[k + 1] - r.t[k];
                CMat dH = (r.H[k - 2] - 8.0 * r.H[k - 1] + 8.0 * r.H[k + 1] - r.H[k + 2]) / (12 * dt);
                double res = (dH - riccati_rhs(r.F[k], r.H[k])).cwiseAbs().maxCoeff();
                r.max_residual = std::max(r.max_residual, res);
            }
        };
        check(0, i0);
        check(i0, r.t.size() - 1);
        if (r.max_residual < opt.residual_tol)
            return r;
        if (attempt == opt.max_refinements)
            throw RiccatiError("Riccati residual " + std::to_string(r.max_residual) +
                               " above tolerance after refinement");
    }
    throw RiccatiError("unreachable");
}

std::function<Mat(double)> frame_riccati_source(const FermiFrame& frame)
{
    double dy = 1e-2 * frame.chart().diameter();
    return [frame, dy](double t) {
        auto gtt = [&](double y) { return frame.metric_in_frame(t, y).inverse()(0, 0); };
        double d2 = (-gtt(2 * dy) + 16 * gtt(dy) - 30 * gtt(0) + 16 * gtt(-dy) - gtt(-2 * dy)) / (12 * dy * dy);
        Mat F(1, 1);
        F(0, 0) = -0.5 * d2;
        return F;
    };
}

// ---------------------------------------------------------------- phase

cplx BeamPhase::phi(double t, double y) const { return t + 0.5 * ric.at(t)(0, 0) * y * y; }

std::array<cplx, 2> BeamPhase::dphi(double t, double y) const
{
    return {1.0 + 0.5 * ric.derivative(t)(0, 0) * y * y, ric.at(t)(0, 0) * y};
}

cplx BeamPhase::eikonal_defect(double t, double y) const
{
    Mat Gi = frame.metric_in_frame(t, y).inverse();
    auto d = dphi(t, y);
    return Gi(0, 0) * d[0] * d[0] + 2.0 * Gi(0, 1) * d[0] * d[1] + Gi(1, 1) * d[1] * d[1] - 1.0;
}

double BeamPhase::imag_lower_constant() const { return 0.5 * ric.min_imag_eigenvalue; }

BeamPhase build_phase(const FermiFrame& frame, const RiccatiSolution& ric, const PhaseCheckOptions& opt)
{
    if (ric.size() != 1)
        throw UnsupportedGeometryError("beams are built over two dimensional transversal manifolds");
    double L = frame.length();
    if (ric.t_lo() > 1e-12 || ric.t_hi() < L - 1e-12)
        throw ParameterError("Riccati solution must cover the geodesic");
    BeamPhase ph{frame, ric};
    double ymax = opt.y_max > 0 ? opt.y_max : frame.half_width();
    std::vector<double> ys, defects;
    for (int k = 0; k < opt.n_y; ++k) {
        double y = ymax * std::pow(0.5, k);
        double worst = 0;
        for (int j = 0; j < opt.n_t; ++j) {
            double t = L * (j + 0.5) / opt.n_t;
            worst = std::max({worst, std::abs(ph.eikonal_defect(t, y)), std::abs(ph.eikonal_defect(t, -y))});
        }
        ys.push_back(y);
        defects.push_back(worst);
    }
    if (*std::max_element(defects.begin(), defects.end()) < 1e-11) {
        ph.defect_exponent = std::numeric_limits<double>::infinity();
        return ph;
    }
    // drop levels already at round-off
    std::vector<double> fy, fd;
    for (std::size_t k = 0; k < ys.size(); ++k)
        if (defects[k] > 1e-11) {
            fy.push_back(ys[k]);
            fd.push_back(defects[k]);
        }
    ph.defect_exponent = fy.size() >= 2 ? fit_loglog_slope(fy, fd) : std::numeric_limits<double>::infinity();
    if (ph.defect_exponent < 2.5)
        throw ConstructionError("eikonal defect exponent " + std::to_string(ph.defect_exponent) +
                                " below 2.5; the Riccati source does not match the frame");
    return ph;
}

// ---------------------------------------------------------------- amplitude

double beam_cutoff(double r) { return 1.0 - smooth_step((std::abs(r) - 0.25) / 0.25); }

double beam_cutoff_derivative(double r)
{
    double s = r < 0 ? -1.0 : 1.0;
    return -s * smooth_step_derivative((std::abs(r) - 0.25) / 0.25) / 0.25;
}

cplx BeamAmplitude::f(double t) const { return f_t0 - 0.5 * ric->trace_integral_at(t); }

cplx BeamAmplitude::a0_at(double x1, double t) const
{
    Vec p(2);
    p << x1, t;
    if (!grid_contains(plane, p, 1e-9))
        throw SamplingError("amplitude evaluated outside its (x1, t) grid");
    return interp_cubic(plane, a0, p);
}

cplx BeamAmplitude::Phi_at(double x1, double t) const
{
    Vec p(2);
    p << x1, t;
    if (!grid_contains(plane, p, 1e-9))
        throw SamplingError("transport phase evaluated outside its (x1, t) grid");
    return interp_cubic(plane, Phi, p);
}

namespace {

// 1 on [lo, hi], smooth decay to 0 over `w` on both sides.
double plateau(double x, double lo, double hi, double w)
{
    if (x < lo)
        return smooth_step(1 - (lo - x) / w);
    if (x > hi)
        return smooth_step(1 - (x - hi) / w);
    return 1.0;
}

Vec vec3(double a, const Vec& x)
{
    Vec p(3);
    p << a, x(0), x(1);
    return p;
}

CVec sample_form_at(const SampledOneForm& A, const Vec& p)
{
    if (!grid_contains(A.grid, p, 1e-9))
        throw SamplingError("potential evaluated outside its grid");
    return A.at(p);
}

} // namespace

BeamAmplitude build_amplitude(const FermiFrame& frame, const RiccatiSolution& ric, const SampledOneForm& A_tau,
                              BeamKind kind, double tau, const AmplitudeOptions& opt)
{
    if (A_tau.dim() != 3 || A_tau.grid.dim != 3)
        throw ShapeError("beam potentials live on (x1, x) grids of dimension three");
    const MetricChart& chart = frame.chart();
    double L = frame.length();
    double hstep = opt.plane_step;
    double w = opt.taper;
    double margin = 4 * hstep;
    double x_lo = opt.x1_lo - w - margin, x_hi = opt.x1_hi + w + margin;
    double t_lo = -opt.t_margin - w - margin, t_hi = L + opt.t_margin + w + margin;
    if (ric.t_lo() > t_lo + 1e-12 || ric.t_hi() < t_hi - 1e-12)
        throw ParameterError("Riccati solution does not cover the amplitude plane");
    int nx = static_cast<int>(std::ceil((x_hi - x_lo) / hstep)) + 1;
    int nt = static_cast<int>(std::ceil((t_hi - t_lo) / hstep)) + 1;
    Grid plane = Grid::make({x_lo, t_lo}, {x_hi, t_hi}, {nx, nt});

    BeamAmplitude amp;
    amp.kind = kind;
    amp.plane = plane;
    amp.tau = tau;
    amp.eta = opt.eta;
    amp.ric = std::make_shared<const RiccatiSolution>(ric);
    amp.valid = {opt.x1_lo, opt.x1_hi, -opt.t_margin, L + opt.t_margin};

    // axis samples
    std::vector<Vec> gam(static_cast<std::size_t>(nt)), gdot(static_cast<std::size_t>(nt));
    for (int j = 0; j < nt; ++j) {
        auto [x, v] = frame.base().state_at(chart, plane.coord(1, j));
        gam[static_cast<std::size_t>(j)] = x;
        gdot[static_cast<std::size_t>(j)] = v;
    }
    // A_1 and A_t on the axis where the source cutoff is active
    std::vector<cplx> A1(plane.size()), At(plane.size()), src(plane.size());
    std::array<double, 4> supp{opt.x1_lo - w, opt.x1_hi + w, -opt.t_margin - w, L + opt.t_margin + w};
    parallel_for(plane.size(), [&](std::size_t i) {
        auto m = plane.multi(i);
        double x1 = plane.coord(0, m[0]), t = plane.coord(1, m[1]);
        double cut = plateau(x1, opt.x1_lo, opt.x1_hi, w) * plateau(t, -opt.t_margin, L + opt.t_margin, w);
        if (cut <= 0)
            return;
        const Vec& g = gam[static_cast<std::size_t>(m[1])];
        const Vec& gd = gdot[static_cast<std::size_t>(m[1])];
        CVec a = sample_form_at(A_tau, vec3(x1, g));
        cplx a1 = a(0), at = a(1) * gd(0) + a(2) * gd(1);
        A1[i] = a1;
        At[i] = at;
        if (kind == BeamKind::v)
            src[i] = cut * (-0.5 * (I * a1 + at));
        else
            src[i] = cut * (0.5 * (-I * std::conj(a1) + std::conj(at)));
    });
    PlaneField g = PlaneField::sample(plane, supp, [](double, double) { return cplx(0); });
    g.values = src;
    for (std::size_t i = 0; i < plane.size(); ++i) {
        Vec p = plane.point(i);
        if (p(0) < supp[0] || p(0) > supp[1] || p(1) < supp[2] || p(1) > supp[3])
            g.values[i] = 0;
    }
    PlaneField Phi = cauchy_solve(g, kind == BeamKind::v ? CauchyKind::d : CauchyKind::dbar);
    amp.Phi = std::move(Phi.values);

    // normalisation e^{f1(t0) + f2(t0)} pi^{1/2} / sqrt(det Im H(t0)) = 1 with f1(t0) = f2(t0) real
    double det0 = ric.H0.imag().determinant();
    int m = ric.size();
    amp.f_t0 = 0.5 * std::log(std::sqrt(det0) / std::pow(pi, 0.5 * m));
    amp.normalization_error = std::abs(std::exp(2 * amp.f_t0) * std::pow(pi, 0.5 * m) / std::sqrt(det0) - 1.0);

    std::vector<cplx> ft(static_cast<std::size_t>(nt)), trH(static_cast<std::size_t>(nt));
    for (int j = 0; j < nt; ++j) {
        double t = plane.coord(1, j);
        ft[static_cast<std::size_t>(j)] = amp.f(t);
        trH[static_cast<std::size_t>(j)] = ric.at(t).trace();
    }
    amp.a0.resize(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) {
        auto mm = plane.multi(i);
        double x1 = plane.coord(0, mm[0]), t = plane.coord(1, mm[1]);
        amp.a0[i] = std::exp(amp.Phi[i] + ft[static_cast<std::size_t>(mm[1])]) * amp.eta_at(x1, t);
    }
    diff_axis(plane, amp.a0, 0, amp.da0_dx1);
    diff_axis(plane, amp.a0, 1, amp.da0_dt);

    // transport residual inside the valid box
    double res = 0;
    for (std::size_t i = 0; i < plane.size(); ++i) {
        auto mm = plane.multi(i);
        double x1 = plane.coord(0, mm[0]), t = plane.coord(1, mm[1]);
        if (x1 < amp.valid[0] || x1 > amp.valid[1] || t < amp.valid[2] || t > amp.valid[3])
            continue;
        cplx tr = trH[static_cast<std::size_t>(mm[1])];
        cplx r;
        if (kind == BeamKind::v)
            r = (amp.da0_dx1[i] - I * amp.da0_dt[i]) - 0.5 * (-2.0 * I * A1[i] - 2.0 * At[i] + I * tr) * amp.a0[i];
        else
            r = (amp.da0_dx1[i] + I * amp.da0_dt[i]) -
                0.5 * (-2.0 * I * std::conj(A1[i]) + 2.0 * std::conj(At[i]) - I * tr) * amp.a0[i];
        res = std::max(res, std::abs(r));
    }
    amp.transport_residual = res;
    return amp;
}

// ---------------------------------------------------------------- beam

cplx GaussianBeam::amplitude(double x1, double t, double y) const
{
    double chi = beam_cutoff(y / delta_prime);
    if (chi == 0)
        return 0;
    return std::pow(params.mu(), 0.25) * amp.a0_at(x1, t) * chi;
}

double GaussianBeam::modulus_weight(double t, double y) const
{
    cplx p = phase.phi(t, y);
    return std::exp(-params.mu() * p.imag() - params.lambda * p.real());
}

cplx GaussianBeam::value(double x1, double t, double y) const
{
    cplx a = amplitude(x1, t, y);
    if (a == 0.0)
        return 0;
    return std::exp(I * params.s() * phase.phi(t, y)) * a;
}

double GaussianBeam::partition(std::size_t j, double t) const
{
    if (segments.size() == 1)
        return 1.0;
    auto bump = [&](const BeamSegment& s) {
        if (t <= s.t_lo || t >= s.t_hi)
            return 0.0;
        double up = s.flat_lo > s.t_lo ? smooth_step((t - s.t_lo) / (s.flat_lo - s.t_lo)) : 1.0;
        double down = s.t_hi > s.flat_hi ? smooth_step((s.t_hi - t) / (s.t_hi - s.flat_hi)) : 1.0;
        return up * down;
    };
    double total = 0;
    for (const auto& s : segments)
        total += bump(s);
    return total > 0 ? bump(segments[j]) / total : 0.0;
}

cplx GaussianBeam::at_chart(double x1, const Vec& x) const
{
    cplx sum = 0;
    for (std::size_t j = 0; j < segments.size(); ++j) {
        const auto& s = segments[j];
        auto [t, y] = phase.frame.inverse_map(x, s.t_lo, s.t_hi);
        if (t < s.t_lo || t > s.t_hi || std::abs(y) >= 0.5 * delta_prime)
            continue;
        Vec back = phase.frame.chart_map(t, y);
        if (phase.frame.chart().displacement(back, x).norm() > 1e-8)
            continue;
        double p = partition(j, t);
        if (p > 0)
            sum += p * value(x1, t, y);
    }
    return sum;
}

std::vector<SelfIntersection> find_self_intersections(const MetricChart& chart, const GeodesicPath& geo,
                                                      double min_separation)
{
    std::vector<SelfIntersection> out;
    const auto& S = geo.samples;
    auto cross2 = [](const Vec& a, const Vec& b) { return a(0) * b(1) - a(1) * b(0); };
    for (std::size_t i = 0; i + 1 < S.size(); ++i) {
        for (std::size_t j = i + 1; j + 1 < S.size(); ++j) {
            if (S[j].t - S[i + 1].t < min_separation)
                continue;
            Vec p = S[i].x, r = chart.displacement(S[i].x, S[i + 1].x);
            Vec q = p + chart.displacement(p, S[j].x), sv = chart.displacement(S[j].x, S[j + 1].x);
            double den = cross2(r, sv);
            if (std::abs(den) < 1e-300)
                continue;
            Vec qp = q - p;
            double a = cross2(qp, sv) / den, b = cross2(qp, r) / den;
            if (a < 0 || a >= 1 || b < 0 || b >= 1)
                continue;
            SelfIntersection si;
            si.t_a = S[i].t + a * (S[i + 1].t - S[i].t);
            si.t_b = S[j].t + b * (S[j + 1].t - S[j].t);
            Mat g = chart.metric(S[i].x);
            double c = S[i].v.dot(g * S[j].v) / std::sqrt(S[i].v.dot(g * S[i].v) * S[j].v.dot(g * S[j].v));
            si.angle = std::acos(std::min(1.0, std::abs(c)));
            out.push_back(si);
        }
    }
    return out;
}

GaussianBeam assemble_quasimode(const MetricChart& chart, const GeodesicPath& geo, const SampledOneForm& A,
                                const SemiclassicalParams& params, BeamKind kind, const BeamOptions& opt)
{
    params.validate();
    if (!(opt.sigma > 0 && opt.sigma < 0.5))
        throw ParameterError("sigma must lie in (0, 1/2)");
    if (geo.classification != EntryClass::non_tangential || !geo.finite())
        throw GeometryError("beams need a non-tangential geodesic with finite exit time");
    if (!(opt.delta_prime > 0))
        throw ParameterError("delta' must be positive");

    GaussianBeam beam;
    beam.params = params;
    beam.kind = kind;
    beam.delta_prime = opt.delta_prime;
    beam.tau = std::pow(params.h, opt.sigma);

    double L = geo.exit_time;
    const auto& ao = opt.amplitude;
    auto isects = find_self_intersections(chart, geo, opt.delta_prime);
    for (const auto& s : isects)
        if (s.angle < opt.gluing_angle)
            throw GluingError("self-intersection at t = " + std::to_string(s.t_a) + ", " + std::to_string(s.t_b) +
                              " has angle " + std::to_string(s.angle) + " below the transversality threshold");

    FermiFrame frame = fermi_coordinates(chart, geo, 0.5 * opt.delta_prime);
    double t_lo = -ao.t_margin - ao.taper - 8 * ao.plane_step, t_hi = L + ao.t_margin + ao.taper + 8 * ao.plane_step;
    CMat H0 = opt.H0.size() ? opt.H0 : CMat(CMat::Identity(1, 1) * I);
    double t0 = std::clamp(opt.t0, 0.0, L);
    auto ric = solve_riccati(frame_riccati_source(frame), H0, t0, t_lo, t_hi, opt.riccati);
    beam.phase = build_phase(frame, ric);

    auto At = std::make_shared<SampledOneForm>(mollify(A, beam.tau));
    beam.A_tau = At;
    beam.amp = build_amplitude(frame, ric, *At, kind, beam.tau, ao);

    // partition of unity along t
    double ext_lo = -ao.t_margin, ext_hi = L + ao.t_margin;
    if (isects.empty()) {
        beam.segments.push_back({t_lo, t_hi, t_lo, t_hi});
    } else {
        double gap = 1e300;
        for (const auto& s : isects)
            gap = std::min(gap, std::abs(s.t_b - s.t_a));
        double len = 0.4 * gap;
        int n = static_cast<int>(std::ceil((ext_hi - ext_lo) / len));
        double piece = (ext_hi - ext_lo) / n, ov = 0.2 * piece;
        for (int j = 0; j < n; ++j) {
            double a = ext_lo + j * piece, b = a + piece;
            BeamSegment s;
            s.t_lo = j == 0 ? t_lo : a - ov;
            s.flat_lo = j == 0 ? t_lo : a + ov;
            s.t_hi = j == n - 1 ? t_hi : b + ov;
            s.flat_hi = j == n - 1 ? t_hi : b - ov;
            beam.segments.push_back(s);
        }
        // adjacent segments evaluate the same global phase and amplitude; confirm on the overlaps
        for (std::size_t j = 0; j + 1 < beam.segments.size(); ++j) {
            const auto& A0 = beam.segments[j];
            const auto& A1s = beam.segments[j + 1];
            for (double u : {0.25, 0.5, 0.75}) {
                double t = A1s.t_lo + u * (A0.t_hi - A1s.t_lo);
                for (double y : {0.0, 0.125 * opt.delta_prime, -0.125 * opt.delta_prime}) {
                    Vec x = frame.chart_map(t, y);
                    auto [ta, ya] = frame.inverse_map(x, A0.t_lo, A0.t_hi);
                    auto [tb, yb] = frame.inverse_map(x, A1s.t_lo, A1s.t_hi);
                    double scale = std::max(1e-300, std::abs(beam.amplitude(0.5 * (ao.x1_lo + ao.x1_hi), t, y)));
                    double d = std::abs(beam.amplitude(0.5 * (ao.x1_lo + ao.x1_hi), ta, ya) -
                                        beam.amplitude(0.5 * (ao.x1_lo + ao.x1_hi), tb, yb)) /
                               scale;
                    beam.overlap_mismatch = std::max(beam.overlap_mismatch, d);
                }
            }
        }
        if (beam.overlap_mismatch > 1e-8)
            throw GluingError("segment amplitudes disagree on an overlap by " + std::to_string(beam.overlap_mismatch));
    }
    return beam;
}

// ---------------------------------------------------------------- residual

namespace {

struct FrameTable {
    Grid ty; // (t, y)
    std::vector<Vec> X;
    std::vector<Mat> J, G;
    std::vector<char> inside;

    static FrameTable build(const FermiFrame& frame, const Grid& ty)
    {
        FrameTable T;
        T.ty = ty;
        T.X.resize(ty.size());
        T.J.resize(ty.size());
        T.G.resize(ty.size());
        T.inside.resize(ty.size());
        const auto& chart = frame.chart();
        parallel_for(ty.size(), [&](std::size_t i) {
            Vec p = ty.point(i);
            T.X[i] = frame.chart_map(p(0), p(1));
            T.J[i] = frame.jacobian(p(0), p(1));
            T.G[i] = T.J[i].transpose() * chart.metric(T.X[i]) * T.J[i];
            T.inside[i] = chart.boundary_fn(T.X[i]) <= 0;
        });
        return T;
    }
    std::size_t lookup(double t, double y) const
    {
        int i = static_cast<int>(std::lround((t - ty.lo[0]) / ty.step(0)));
        int j = static_cast<int>(std::lround((y - ty.lo[1]) / ty.step(1)));
        i = std::clamp(i, 0, ty.n[0] - 1);
        j = std::clamp(j, 0, ty.n[1] - 1);
        return ty.index(i, j);
    }
};

} // namespace

ResidualReport residual_bound(const GaussianBeam& beam, const SampledOneForm& A, const SampledField& q,
                              double expected_tau, const TubeOptions& opt)
{
    if (expected_tau > 0 && std::abs(expected_tau - beam.tau) > 1e-12 * std::max(1.0, beam.tau))
        throw ContractError("residual requested with tau " + std::to_string(expected_tau) +
                            " but the beam was built with tau " + std::to_string(beam.tau));
    if (!beam.A_tau || !beam.A_tau->grid.same(A.grid))
        throw ContractError("beam potential grid does not match the potential passed to the residual");
    if (!q.grid.same(A.grid))
        throw ShapeError("q and A must share a grid");

    const auto& amp = beam.amp;
    const auto& frame = beam.phase.frame;
    double h = beam.params.h, mu = beam.params.mu();
    cplx s = beam.params.s();
    double sigma = beam.kind == BeamKind::v ? 1.0 : -1.0;
    bool conj = beam.kind == BeamKind::w;

    double Y = std::min(0.5 * beam.delta_prime, opt.z_max * std::sqrt(h));
    Grid tube = Grid::make({amp.valid[0], amp.valid[2], -Y}, {amp.valid[1], amp.valid[3], Y}, {opt.n_x1, opt.n_t, opt.n_y});
    Grid ty = Grid::make({amp.valid[2], -Y}, {amp.valid[3], Y}, {opt.n_t, opt.n_y});
    auto T = std::make_shared<FrameTable>(FrameTable::build(frame, ty));

    auto tchart = std::make_shared<MetricChart>();
    tchart->dim = 3;
    tchart->id = "tube";
    tchart->kind = "tube";
    tchart->lo = Vec(3);
    tchart->hi = Vec(3);
    for (int k = 0; k < 3; ++k) {
        tchart->lo(k) = tube.lo[static_cast<std::size_t>(k)];
        tchart->hi(k) = tube.hi[static_cast<std::size_t>(k)];
    }
    tchart->metric_fn = [T](const Vec& x) {
        Mat g = Mat::Zero(3, 3);
        g(0, 0) = 1;
        g.block(1, 1, 2, 2) = T->G[T->lookup(x(1), x(2))];
        return g;
    };
    tchart->conformal_factor = [](const Vec&) { return 1.0; };
    tchart->boundary_fn = [](const Vec&) { return -1.0; };

    std::size_t N = tube.size();
    SampledField a = zero_field(tchart, tube), qa = zero_field(tchart, tube);
    SampledOneForm Af = zero_form(tchart, tube), Atf = zero_form(tchart, tube), dphi = zero_form(tchart, tube);
    std::vector<double> modw(N);
    std::vector<char> in(N);
    double mu4 = std::pow(mu, 0.25);
    parallel_for(N, [&](std::size_t i) {
        auto m = tube.multi(i);
        double x1 = tube.coord(0, m[0]), t = tube.coord(1, m[1]), y = tube.coord(2, m[2]);
        std::size_t k = T->ty.index(m[1], m[2]);
        const Vec& X = T->X[k];
        const Mat& J = T->J[k];
        double chi = beam_cutoff(y / beam.delta_prime);
        a.values[i] = chi == 0 ? cplx(0) : mu4 * amp.a0_at(x1, t) * chi;
        Vec p = vec3(x1, X);
        CVec av = sample_form_at(A, p), atv = sample_form_at(*beam.A_tau, p);
        cplx qv = interp_cubic(q.grid, q.values, p);
        if (conj) {
            av = av.conjugate();
            atv = atv.conjugate();
            qv = std::conj(qv);
        }
        Af.comp[0][i] = av(0);
        Af.comp[1][i] = av(1) * J(0, 0) + av(2) * J(1, 0);
        Af.comp[2][i] = av(1) * J(0, 1) + av(2) * J(1, 1);
        Atf.comp[0][i] = atv(0);
        Atf.comp[1][i] = atv(1) * J(0, 0) + atv(2) * J(1, 0);
        Atf.comp[2][i] = atv(1) * J(0, 1) + atv(2) * J(1, 1);
        qa.values[i] = qv * a.values[i];
        auto d = beam.phase.dphi(t, y);
        dphi.comp[1][i] = d[0];
        dphi.comp[2][i] = d[1];
        modw[i] = beam.modulus_weight(t, y);
        in[i] = T->inside[k];
    });

    auto da = exterior_d(a);
    auto second = codifferential(da);
    {
        auto dAa = codifferential(scale(Atf, a));
        auto Ada = pairing(Af, da);
        auto AA = pairing(Af, Af);
        for (std::size_t i = 0; i < N; ++i)
            second.values[i] += I * dAa.values[i] - I * Ada.values[i] + AA.values[i] * a.values[i];
    }
    std::vector<cplx> eik(N), tra(N), rough(N);
    std::vector<CVec> div(N);
    {
        auto pp = pairing(dphi, dphi);
        auto lap_phi = codifferential(dphi); // -Delta phi
        auto pda = pairing(dphi, da);
        auto pA = pairing(Af, dphi);
        SampledOneForm diff = Af;
        for (int k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < N; ++i)
                diff.comp[static_cast<std::size_t>(k)][i] -= Atf.comp[static_cast<std::size_t>(k)][i];
        auto pdiff = pairing(dphi, diff);
        for (std::size_t i = 0; i < N; ++i) {
            cplx av = a.values[i];
            eik[i] = s * s * (pp.values[i] - 1.0) * av;
            tra[i] = s * (2.0 * sigma * da.comp[0][i] - 2.0 * I * pda.values[i] + I * lap_phi.values[i] * av +
                          2.0 * I * sigma * Af.comp[0][i] * av + 2.0 * pA.values[i] * av);
            rough[i] = -s * pdiff.values[i] * av;
            CVec c(3);
            for (int k = 0; k < 3; ++k)
                c(k) = I * diff.comp[static_cast<std::size_t>(k)][i] * av;
            div[i] = c;
        }
    }

    auto nodes = grid_nodes(*tchart, tube);
    for (std::size_t i = 0; i < N; ++i)
        if (!in[i])
            nodes.weight[i] = 0;
    double h2 = h * h;
    auto scaled = [&](const std::vector<cplx>& v) {
        std::vector<cplx> o(N);
        for (std::size_t i = 0; i < N; ++i)
            o[i] = h2 * modw[i] * v[i];
        return o;
    };
    std::vector<TermGroup> groups;
    groups.push_back({"eikonal", TermTag::smooth, scaled(eik), {}});
    groups.push_back({"transport", TermTag::smooth, scaled(tra), {}});
    groups.push_back({"second_order", TermTag::smooth, scaled(second.values), {}});
    groups.push_back({"potential", TermTag::smooth, scaled(qa.values), {}});
    groups.push_back({"rough_phase", TermTag::smooth, scaled(rough), {}});
    {
        std::vector<CVec> dv(N);
        for (std::size_t i = 0; i < N; ++i)
            dv[i] = (h2 * modw[i]) * div[i];
        groups.push_back({"rough_divergence", TermTag::divergence, {}, std::move(dv)});
    }
    SclNorms norms = norm_scl(nodes, groups, beam.params);

    double cut = 0;
    for (std::size_t i = 0; i < N; ++i) {
        double y = tube.coord(2, tube.multi(i)[2]);
        if (std::abs(y) <= 0.25 * beam.delta_prime)
            continue;
        cplx w0 = 0;
        for (int g = 0; g < 5; ++g)
            w0 += groups[static_cast<std::size_t>(g)].scalar[i];
        cut += nodes.weight[i] * std::norm(w0);
    }

    ResidualReport r;
    r.bound = norms.h_minus1_scl_bound;
    r.smooth_l2 = norms.smooth_l2;
    r.divergence_l2 = norms.divergence_l2;
    r.cutoff_l2 = std::sqrt(cut);
    r.tau = beam.tau;
    r.h = h;
    r.groups = norms.groups;
    return r;
}

// ---------------------------------------------------------------- slices

namespace {

struct SliceGrid {
    std::vector<double> t, z, wt, wz;
};

SliceGrid slice_grid(const GaussianBeam& b, int n_t, int n_z, double z_max)
{
    SliceGrid g;
    double lo = b.amp.valid[2], hi = b.amp.valid[3];
    g.t = linspace(lo, hi, n_t);
    g.wt = simpson_weights(n_t, (hi - lo) / (n_t - 1));
    g.z = linspace(-z_max, z_max, n_z);
    g.wz = simpson_weights(n_z, 2 * z_max / (n_z - 1));
    return g;
}

// amplitude and its (x1, t, y) derivatives
std::array<cplx, 4> amplitude_jet(const GaussianBeam& b, double x1, double t, double y)
{
    double chi = beam_cutoff(y / b.delta_prime);
    double dchi = beam_cutoff_derivative(y / b.delta_prime) / b.delta_prime;
    if (chi == 0 && dchi == 0)
        return {0, 0, 0, 0};
    Vec p(2);
    p << x1, t;
    double m4 = std::pow(b.params.mu(), 0.25);
    cplx a0 = interp_cubic(b.amp.plane, b.amp.a0, p);
    cplx a1 = interp_cubic(b.amp.plane, b.amp.da0_dx1, p);
    cplx at = interp_cubic(b.amp.plane, b.amp.da0_dt, p);
    return {m4 * a0 * chi, m4 * a1 * chi, m4 * at * chi, m4 * a0 * dchi};
}

// d(value) in (x1, t, y) coordinates
CVec value_differential(const GaussianBeam& b, double x1, double t, double y)
{
    auto j = amplitude_jet(b, x1, t, y);
    cplx e = std::exp(I * b.params.s() * b.phase.phi(t, y));
    auto d = b.phase.dphi(t, y);
    cplx is = I * b.params.s();
    CVec out(3);
    out(0) = e * j[1];
    out(1) = e * (j[2] + is * d[0] * j[0]);
    out(2) = e * (j[3] + is * d[1] * j[0]);
    return out;
}

} // namespace

SliceNorms slice_norm(const GaussianBeam& beam, double x1, int n_t, int n_z, double z_max)
{
    auto g = slice_grid(beam, n_t, n_z, z_max);
    double sh = std::sqrt(beam.params.h);
    const auto& frame = beam.phase.frame;
    double l2 = 0, grad = 0;
    for (std::size_t i = 0; i < g.t.size(); ++i)
        for (std::size_t k = 0; k < g.z.size(); ++k) {
            double t = g.t[i], y = g.z[k] * sh;
            if (std::abs(y) >= 0.5 * beam.delta_prime)
                continue;
            Vec X = frame.chart_map(t, y);
            if (frame.chart().boundary_fn(X) > 0)
                continue;
            Mat G = frame.metric_in_frame(t, y);
            double w = g.wt[i] * g.wz[k] * sh * std::sqrt(G.determinant());
            l2 += w * std::norm(beam.value(x1, t, y));
            CVec dv = value_differential(beam, x1, t, y);
            Mat Gi = G.inverse();
            double gs = std::norm(dv(0));
            for (int a = 0; a < 2; ++a)
                for (int c = 0; c < 2; ++c)
                    gs += Gi(a, c) * std::real(dv(a + 1) * std::conj(dv(c + 1)));
            grad += w * gs;
        }
    double h = beam.params.h;
    return {std::sqrt(l2), std::sqrt(l2 + h * h * grad)};
}

double boundary_trace_norm(const GaussianBeam& beam, double x1, int n_boundary)
{
    const auto& chart = beam.phase.frame.chart();
    auto pts = boundary_points(chart, n_boundary);
    double s = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec& a = pts[i];
        const Vec& b = pts[(i + 1) % pts.size()];
        Vec d = chart.displacement(a, b);
        Vec mid = a + 0.5 * d;
        double len = chart.norm(mid, d);
        s += len * std::norm(beam.at_chart(x1, mid));
    }
    return std::sqrt(s);
}

cplx concentration_integral(const GaussianBeam& v, const GaussianBeam& w, const std::function<cplx(const Vec&)>& psi,
                            double x1, Pairing pairing, const std::function<CVec(const Vec&)>& alpha,
                            const SliceOptions& opt)
{
    if (v.kind != BeamKind::v || w.kind != BeamKind::w)
        throw ContractError("concentration integrals pair a v-kind beam with a w-kind beam");
    if (std::abs(v.length() - w.length()) > 1e-12 || std::abs(v.params.h - w.params.h) > 1e-15)
        throw ContractError("beams must share the geodesic and h");
    if (pairing != Pairing::product && !alpha)
        throw ContractError("alpha pairings need a one-form");
    if (x1 < v.amp.valid[0] || x1 > v.amp.valid[1])
        return 0.0;
    auto g = slice_grid(v, opt.n_t, opt.n_z, opt.z_max);
    double sh = std::sqrt(v.params.h), h = v.params.h;
    const auto& frame = v.phase.frame;
    cplx sum = 0;
    for (std::size_t i = 0; i < g.t.size(); ++i)
        for (std::size_t k = 0; k < g.z.size(); ++k) {
            double t = g.t[i], y = g.z[k] * sh;
            if (std::abs(y) >= 0.5 * v.delta_prime)
                continue;
            Vec X = frame.chart_map(t, y);
            if (frame.chart().boundary_fn(X) > 0)
                continue;
            Mat J = frame.jacobian(t, y);
            Mat G = J.transpose() * frame.chart().metric(X) * J;
            double wq = g.wt[i] * g.wz[k] * sh * std::sqrt(G.determinant());
            cplx ps = psi ? psi(X) : cplx(1.0);
            cplx term;
            if (pairing == Pairing::product) {
                term = v.value(x1, t, y) * std::conj(w.value(x1, t, y));
            } else {
                CVec al = alpha(vec3(x1, X));
                CVec af(3);
                af(0) = al(0);
                af(1) = al(1) * J(0, 0) + al(2) * J(1, 0);
                af(2) = al(1) * J(0, 1) + al(2) * J(1, 1);
                Mat Gi = G.inverse();
                CVec d = pairing == Pairing::alpha_dv ? value_differential(v, x1, t, y)
                                                     : CVec(value_differential(w, x1, t, y).conjugate());
                cplx pr = af(0) * d(0);
                for (int a = 0; a < 2; ++a)
                    for (int c = 0; c < 2; ++c)
                        pr += Gi(a, c) * af(a + 1) * d(c + 1);
                cplx other = pairing == Pairing::alpha_dv ? std::conj(w.value(x1, t, y)) : v.value(x1, t, y);
                term = h * pr * other;
            }
            sum += wq * term * ps;
        }
    return sum;
}

cplx geodesic_limit(const GaussianBeam& v, const GaussianBeam& w, const std::function<cplx(const Vec&)>& psi,
                    double x1, Pairing pairing, const std::function<CVec(const Vec&)>& alpha, int n_t)
{
    if (pairing != Pairing::product && !alpha)
        throw ContractError("alpha pairings need a one-form");
    const auto& frame = v.phase.frame;
    double L = v.length(), lam = v.params.lambda;
    auto ts = linspace(0, L, n_t);
    auto wt = simpson_weights(n_t, L / (n_t - 1));
    cplx sum = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        double t = ts[i];
        auto [X, gd] = frame.base().state_at(frame.chart(), t);
        cplx val = std::exp(-2 * lam * t) * v.amp.eta_at(x1, t) *
                   std::exp(v.amp.Phi_at(x1, t) + std::conj(w.amp.Phi_at(x1, t))) * (psi ? psi(X) : cplx(1.0));
        if (pairing != Pairing::product) {
            CVec al = alpha(vec3(x1, X));
            cplx ag = al(1) * gd(0) + al(2) * gd(1);
            val *= (pairing == Pairing::alpha_dv ? I : -I) * ag;
        }
        sum += wt[i] * val;
    }
    return sum;
}

CrossTerms segment_cross_terms(const GaussianBeam& v, const GaussianBeam& w, double x1, const SliceOptions& opt)
{
    if (v.segments.size() != w.segments.size())
        throw ContractError("beams must share the segment partition");
    const auto& frame = v.phase.frame;
    double sh = std::sqrt(v.params.h);
    CrossTerms ct;
    auto zs = linspace(-opt.z_max, opt.z_max, opt.n_z);
    auto wz = simpson_weights(opt.n_z, 2 * opt.z_max / (opt.n_z - 1));
    for (std::size_t j = 0; j < v.segments.size(); ++j) {
        const auto& sj = v.segments[j];
        double lo = std::max(sj.t_lo, v.amp.valid[2]), hi = std::min(sj.t_hi, v.amp.valid[3]);
        auto ts = linspace(lo, hi, opt.n_t);
        auto wt = simpson_weights(opt.n_t, (hi - lo) / (opt.n_t - 1));
        for (std::size_t i = 0; i < ts.size(); ++i) {
            double t = ts[i], pj = v.partition(j, t);
            if (pj == 0)
                continue;
            for (std::size_t k = 0; k < zs.size(); ++k) {
                double y = zs[k] * sh;
                if (std::abs(y) >= 0.5 * v.delta_prime)
                    continue;
                Vec X = frame.chart_map(t, y);
                if (frame.chart().boundary_fn(X) > 0)
                    continue;
                Mat G = frame.metric_in_frame(t, y);
                double wq = wt[i] * wz[k] * sh * std::sqrt(G.determinant());
                cplx vj = pj * v.value(x1, t, y);
                if (vj == 0.0)
                    continue;
                ct.diagonal += wq * vj * std::conj(w.value(x1, t, y));
                for (std::size_t m = 0; m < w.segments.size(); ++m) {
                    if (m == j)
                        continue;
                    const auto& sm = w.segments[m];
                    // only segments whose parameter range is far from t describe a different branch
                    if (t >= sm.t_lo && t <= sm.t_hi)
                        continue;
                    auto [tm, ym] = frame.inverse_map(X, sm.t_lo, sm.t_hi);
                    if (tm < sm.t_lo || tm > sm.t_hi || std::abs(ym) >= 0.5 * w.delta_prime)
                        continue;
                    if (frame.chart().displacement(frame.chart_map(tm, ym), X).norm() > 1e-8)
                        continue;
                    ct.mixed += wq * vj * std::conj(w.partition(m, tm) * w.value(x1, tm, ym));
                }
            }
        }
    }
    return ct;
}

} // namespace geobeam
