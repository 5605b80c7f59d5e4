#include "geobeam/boundary.hpp"

#include <cmath>
#include <fstream>

namespace geobeam {

namespace {

double bump(double r)
{
    return r < 1 ? std::exp(1 - 1 / (1 - r * r)) : 0.0;
}

double bump_derivative(double r)
{
    if (r >= 1)
        return 0.0;
    double d = 1 - r * r;
    return bump(r) * (-2 * r / (d * d));
}

// surface measure of the unit sphere in R^m
double sphere_area(int m)
{
    return 2 * std::pow(pi, 0.5 * m) / std::tgamma(0.5 * m);
}

struct Panel {
    std::vector<double> x, w;
};

Panel gauss_on(double a, double b, int n)
{
    auto g = gauss_legendre(n);
    Panel p;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        p.x.push_back(0.5 * (a + b) + 0.5 * (b - a) * g.x[i]);
        p.w.push_back(0.5 * (b - a) * g.w[i]);
    }
    return p;
}

// Scaled quadrature: y' in [-R, R]^m by tensor Gauss, y_n on graded panels.
struct ScaledRule {
    std::vector<Vec> y;
    std::vector<double> w;
};

ScaledRule scaled_rule(const BoundaryProbe& p, int points)
{
    int n = p.dim(), m = n - 1;
    double R = p.eta_radius;
    auto tang = gauss_on(-R, R, points);
    double ymax = std::min(R / std::sqrt(p.lambda), 30.0);
    Panel normal;
    const double edges[] = {0, 1, 2, 4, 8, 16, 30};
    for (int k = 0; k + 1 < 7 && edges[k] < ymax; ++k) {
        auto q = gauss_on(edges[k], std::min(edges[k + 1], ymax), std::max(8, points / 2));
        normal.x.insert(normal.x.end(), q.x.begin(), q.x.end());
        normal.w.insert(normal.w.end(), q.w.begin(), q.w.end());
    }
    ScaledRule r;
    std::size_t nt = tang.x.size();
    std::size_t ntot = 1;
    for (int k = 0; k < m; ++k)
        ntot *= nt;
    for (std::size_t t = 0; t < ntot; ++t) {
        Vec yt(m);
        double wt = 1;
        std::size_t rem = t;
        for (int k = 0; k < m; ++k) {
            yt(k) = tang.x[rem % nt];
            wt *= tang.w[rem % nt];
            rem /= nt;
        }
        if (yt.norm() >= R)
            continue;
        for (std::size_t j = 0; j < normal.x.size(); ++j) {
            Vec y(n);
            y.head(m) = yt;
            y(m) = normal.x[j];
            r.y.push_back(y);
            r.w.push_back(wt * normal.w[j]);
        }
    }
    return r;
}

Vec unscale(const BoundaryProbe& p, const Vec& y)
{
    int m = p.dim() - 1;
    Vec x = y;
    x.head(m) *= std::sqrt(p.lambda);
    x(m) = y(m) * p.lambda;
    return x;
}

} // namespace

Vec BoundaryNormalChart::to_original(const Vec& y) const
{
    if (!original)
        return y;
    Vec x(static_cast<int>(position.size()));
    for (std::size_t k = 0; k < position.size(); ++k)
        x(static_cast<int>(k)) = interp_cubic(grid, position[k], y);
    return x;
}

Mat BoundaryNormalChart::jacobian_at(const Vec& y) const
{
    int n = static_cast<int>(y.size());
    if (!original)
        return Mat::Identity(n, n);
    Mat J(n, n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            J(k, j) = interp_cubic(grid, jacobian[static_cast<std::size_t>(k * n + j)], y);
    return J;
}

SampledOneForm BoundaryNormalChart::pullback(const std::function<CVec(const Vec&)>& A, const Grid& g) const
{
    return sample_form(chart, g, [&](const Vec& y) {
        Mat J = jacobian_at(y);
        CVec a = A(to_original(y));
        return CVec(J.transpose().cast<cplx>() * a);
    });
}

BoundaryNormalChart half_space(int n, double half_width, double depth)
{
    if (n < 2 || n > 3)
        throw ParameterError("half space dimension must be 2 or 3");
    if (!(half_width > 0 && depth > 0))
        throw ParameterError("half space needs positive extent");
    Vec lo = Vec::Constant(n, -half_width), hi = Vec::Constant(n, half_width);
    lo(n - 1) = 0;
    hi(n - 1) = depth;
    MetricChart c = euclidean_box(lo, hi);
    c.id = "half_space";
    c.kind = "boundary_normal";
    BoundaryNormalChart b;
    b.chart = std::make_shared<const MetricChart>(c);
    return b;
}

BoundaryNormalChart boundary_normal_chart(ChartPtr chart, double theta0, double half_width, double depth, int n_s,
                                          int n_n)
{
    if (chart->dim != 2 || !chart->circle)
        throw UnsupportedGeometryError("boundary normal coordinates need a 2D chart with a circular boundary");
    if (!(half_width > 0 && depth > 0) || n_s < 9 || n_n < 5)
        throw ParameterError("invalid boundary normal chart extent");
    const auto& circ = *chart->circle;
    auto point = [&](double th) {
        Vec p(2);
        p << circ.center(0) + circ.radius * std::cos(th), circ.center(1) + circ.radius * std::sin(th);
        return p;
    };
    auto speed = [&](double th) {
        Vec t(2);
        t << -circ.radius * std::sin(th), circ.radius * std::cos(th);
        return chart->norm(point(th), t);
    };
    Grid g = Grid::make({-half_width, 0}, {half_width, depth}, {n_s, n_n});
    double ds = g.step(0), dn = g.step(1);
    int centre = (n_s - 1) / 2;
    if (2 * centre != n_s - 1)
        throw ParameterError("n_s must be odd so that x0 is a node");

    // theta(s) from d theta / ds = 1 / |p'(theta)|_g
    std::vector<double> theta(static_cast<std::size_t>(n_s));
    theta[static_cast<std::size_t>(centre)] = theta0;
    const int sub = 8;
    for (int dir : {1, -1}) {
        double th = theta0;
        for (int i = centre + dir; i >= 0 && i < n_s; i += dir) {
            double h = dir * ds / sub;
            for (int k = 0; k < sub; ++k) {
                double k1 = 1 / speed(th);
                double k2 = 1 / speed(th + 0.5 * h * k1);
                double k3 = 1 / speed(th + 0.5 * h * k2);
                double k4 = 1 / speed(th + h * k3);
                th += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            }
            theta[static_cast<std::size_t>(i)] = th;
        }
    }

    BoundaryNormalChart b;
    b.original = chart;
    b.grid = g;
    b.position.assign(2, std::vector<double>(g.size()));
    b.jacobian.assign(4, std::vector<double>(g.size()));
    parallel_for(static_cast<std::size_t>(n_s), [&](std::size_t i) {
        Vec x = point(theta[i]);
        Vec v = boundary_frame(*chart, x).inward;
        for (int j = 0; j < n_n; ++j) {
            if (j > 0)
                for (int k = 0; k < sub; ++k)
                    geodesic_rk4_step(*chart, x, v, dn / sub);
            std::size_t idx = g.index(static_cast<int>(i), j);
            for (int k = 0; k < 2; ++k) {
                b.position[static_cast<std::size_t>(k)][idx] = x(k);
                b.jacobian[static_cast<std::size_t>(k * 2 + 1)][idx] = v(k);
            }
        }
    });
    for (int k = 0; k < 2; ++k)
        diff_axis(g, b.position[static_cast<std::size_t>(k)], 0, b.jacobian[static_cast<std::size_t>(k * 2)]);

    std::vector<double> g11(g.size()), g12(g.size()), g22(g.size());
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        Vec x(2);
        x << b.position[0][idx], b.position[1][idx];
        Mat J(2, 2);
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 2; ++j)
                J(k, j) = b.jacobian[static_cast<std::size_t>(k * 2 + j)][idx];
        Mat G = J.transpose() * chart->metric(x) * J;
        g11[idx] = G(0, 0);
        g12[idx] = 0.5 * (G(0, 1) + G(1, 0));
        g22[idx] = G(1, 1);
    }
    Vec lo(2), hi(2);
    lo << -half_width, 0;
    hi << half_width, depth;
    MetricChart c = tabulated_chart(lo, hi, n_s, n_n, g11, g12, g22);
    c.id = "boundary_normal:" + chart->id;
    c.kind = "boundary_normal";
    b.chart = std::make_shared<const MetricChart>(c);
    return b;
}

double BoundaryProbe::eta(const Vec& y) const
{
    return eta_scale * bump(y.norm() / eta_radius);
}

Vec BoundaryProbe::grad_eta(const Vec& y) const
{
    double r = y.norm();
    if (r == 0 || r >= eta_radius)
        return Vec::Zero(y.size());
    return Vec(eta_scale * bump_derivative(r / eta_radius) / eta_radius * y / r);
}

cplx BoundaryProbe::v0(const Vec& x) const
{
    int m = dim() - 1;
    double sl = std::sqrt(lambda);
    double e = eta(x / sl);
    if (e == 0)
        return 0.0;
    double phase = tau.dot(x.head(m)) / lambda;
    return e * std::exp(-x(m) / lambda) * std::exp(I * phase);
}

CVec BoundaryProbe::dv0(const Vec& x) const
{
    int n = dim(), m = n - 1;
    double sl = std::sqrt(lambda);
    Vec y = x / sl;
    double e = eta(y);
    CVec out = CVec::Zero(n);
    if (e == 0 && grad_eta(y).isZero())
        return out;
    cplx osc = std::exp(-x(m) / lambda) * std::exp(I * tau.dot(x.head(m)) / lambda);
    CVec k(n);
    for (int j = 0; j < m; ++j)
        k(j) = tau(j);
    k(m) = I;
    Vec ge = grad_eta(y);
    for (int j = 0; j < n; ++j)
        out(j) = osc * (ge(j) / sl + e * (I / lambda) * k(j));
    return out;
}

double eta_normalization(const BoundaryProbe& p)
{
    int m = p.dim() - 1;
    auto q = gauss_on(0, p.eta_radius, 200);
    double s = 0;
    for (std::size_t i = 0; i < q.x.size(); ++i) {
        double b = p.eta_scale * bump(q.x[i] / p.eta_radius);
        s += q.w[i] * b * b * std::pow(q.x[i], m - 1);
    }
    return m == 1 ? 2 * s : sphere_area(m) * s;
}

void BoundaryProbe::validate() const
{
    if (!chart)
        throw ContractError("probe without chart");
    int n = dim(), m = n - 1;
    if (tau.size() != m)
        throw ShapeError("tangent vector must have n - 1 components");
    if (!(lambda > 0) || !(eta_radius > 0))
        throw ParameterError("probe needs lambda > 0 and a positive profile radius");
    // independent tensor quadrature of int eta(y', 0)^2 dy'
    auto q = gauss_on(-eta_radius, eta_radius, 160);
    double s = 0;
    if (m == 1) {
        for (std::size_t i = 0; i < q.x.size(); ++i) {
            Vec y = Vec::Zero(n);
            y(0) = q.x[i];
            s += q.w[i] * std::pow(eta(y), 2);
        }
    } else {
        for (std::size_t i = 0; i < q.x.size(); ++i)
            for (std::size_t j = 0; j < q.x.size(); ++j) {
                Vec y = Vec::Zero(n);
                y(0) = q.x[i];
                y(1) = q.x[j];
                s += q.w[i] * q.w[j] * std::pow(eta(y), 2);
            }
    }
    if (std::abs(s - 1) > 1e-8)
        throw ContractError("profile normalisation off by " + std::to_string(s - 1));
    double reach = eta_radius * std::sqrt(lambda);
    for (int k = 0; k < m; ++k)
        if (chart->lo(k) > -reach || chart->hi(k) < reach)
            throw GeometryError("probe support exceeds the chart");
    if (chart->lo(m) > 0 || chart->hi(m) < reach)
        throw GeometryError("probe support exceeds the chart depth");
    // block form with g_nn = 1 on the support and g^{ab}(0) = identity
    Mat g0 = chart->metric(Vec::Zero(n));
    if ((g0.topLeftCorner(m, m) - Mat::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-6)
        throw ContractError("tangential metric at x0 is not the identity");
    for (int t = -2; t <= 2; ++t)
        for (int j = 0; j <= 2; ++j) {
            Vec x = Vec::Zero(n);
            x(0) = 0.5 * t * reach;
            x(m) = 0.5 * j * reach;
            Mat gx = chart->metric(x);
            if (std::abs(gx(m, m) - 1) > 1e-6)
                throw ContractError("g_nn differs from 1: not boundary normal coordinates");
            for (int a = 0; a < m; ++a)
                if (std::abs(gx(a, m)) > 1e-6)
                    throw ContractError("mixed metric entries do not vanish: not boundary normal coordinates");
        }
    if (std::abs(tau.norm() - 1) > 1e-12)
        throw ParameterError("tangent vector must be unit");
}

BoundaryProbe make_probe(ChartPtr chart, const Vec& tau, double lambda, double eta_radius)
{
    BoundaryProbe p;
    p.chart = std::move(chart);
    p.tau = tau;
    p.lambda = lambda;
    p.eta_radius = eta_radius;
    p.eta_scale = 1.0;
    p.eta_scale = 1 / std::sqrt(eta_normalization(p));
    p.validate();
    return p;
}

SampledField oscillatory_data(const BoundaryProbe& probe, const Grid& grid)
{
    probe.validate();
    return sample_field(probe.chart, grid, [&](const Vec& x) { return probe.v0(x); });
}

ProbeNorms probe_norms(const BoundaryProbe& probe, int points)
{
    probe.validate();
    int n = probe.dim(), m = n - 1;
    auto rule = scaled_rule(probe, points);
    double jac = std::pow(probe.lambda, 0.5 * m + 1);
    double a = 0, b = 0, c = 0;
    for (std::size_t i = 0; i < rule.y.size(); ++i) {
        Vec x = unscale(probe, rule.y[i]);
        Mat g = probe.chart->metric(x);
        double w = rule.w[i] * jac * std::sqrt(g.determinant());
        cplx v = probe.v0(x);
        CVec dv = probe.dv0(x);
        double d2 = std::real((dv.adjoint() * g.inverse().cast<cplx>() * dv)(0, 0));
        a += w * std::norm(v);
        b += w * d2;
        c += w * x(m) * x(m) * d2;
    }
    return {probe.lambda, std::sqrt(a), std::sqrt(b), std::sqrt(c)};
}

RateSuite probe_rates(ChartPtr chart, const Vec& tau, const std::vector<double>& lambdas, int points)
{
    if (lambdas.size() < 2)
        throw ParameterError("rate fit needs at least two lambda values");
    RateSuite r;
    int n = chart->dim;
    std::vector<double> a, b, c;
    for (double l : lambdas) {
        auto p = make_probe(chart, tau, l);
        r.norms.push_back(probe_norms(p, points));
        a.push_back(r.norms.back().v0_l2);
        b.push_back(r.norms.back().dv0_l2);
        c.push_back(r.norms.back().delta_dv0_l2);
    }
    r.v0_exponent = fit_loglog_slope(lambdas, a);
    r.dv0_exponent = fit_loglog_slope(lambdas, b);
    r.delta_dv0_exponent = fit_loglog_slope(lambdas, c);
    r.expected_v0 = (n - 1) / 4.0 + 0.5;
    r.expected_dv0 = (n - 1) / 4.0 - 0.5;
    return r;
}

cplx boundary_integral(const BoundaryProbe& probe, const std::function<CVec(const Vec&)>& A, int points)
{
    probe.validate();
    auto rule = scaled_rule(probe, points);
    // lambda^{-m/2} times the volume scaling lambda^{m/2 + 1}
    double jac = probe.lambda;
    cplx s = 0;
    for (std::size_t i = 0; i < rule.y.size(); ++i) {
        Vec x = unscale(probe, rule.y[i]);
        Mat g = probe.chart->metric(x);
        cplx v = probe.v0(x);
        if (v == 0.0)
            continue;
        CVec dv = probe.dv0(x);
        CVec flux = v * dv.conjugate() - std::conj(v) * dv;
        CVec a = A(x);
        cplx pair = (a.transpose() * g.inverse().cast<cplx>() * flux)(0, 0);
        s += rule.w[i] * jac * std::sqrt(g.determinant()) * I * pair;
    }
    return s;
}

RecoveryReport tangential_recovery(const BoundaryProbe& probe, const std::function<CVec(const Vec&)>& A,
                                   const RecoveryOptions& opt)
{
    if (opt.levels < 1)
        throw ParameterError("recovery needs at least one lambda level");
    probe.validate();
    RecoveryReport r;
    std::size_t L = static_cast<std::size_t>(opt.levels);
    r.lambdas.resize(L);
    r.I1.resize(L);
    for (std::size_t k = 0; k < L; ++k)
        r.lambdas[k] = probe.lambda * std::ldexp(1.0, static_cast<int>(L - 1 - k));
    parallel_for(
        L,
        [&](std::size_t k) {
            BoundaryProbe p = probe;
            p.lambda = r.lambdas[k];
            r.I1[k] = boundary_integral(p, A, opt.points);
        },
        opt.workers);
    for (std::size_t k = 0; k + 1 < L; ++k)
        r.extrapolated.push_back(2.0 * r.I1[k + 1] - r.I1[k]);
    if (r.extrapolated.empty()) {
        r.estimate = r.I1.back();
        return r;
    }
    r.estimate = r.extrapolated.back();
    if (r.extrapolated.size() >= 2) {
        double raw = std::abs(r.I1[L - 1] - r.I1[L - 2]);
        double ext = std::abs(r.extrapolated.back() - r.extrapolated[r.extrapolated.size() - 2]);
        if (ext > raw && ext > 1e-12 * std::max(1.0, std::abs(r.estimate))) {
            r.converged = false;
            r.estimate = r.I1.back();
        }
    }
    return r;
}

RecoveryReport tangential_recovery(const BoundaryProbe& probe, const SampledOneForm& A, const RecoveryOptions& opt)
{
    if (A.chart.get() != probe.chart.get() && A.chart->id != probe.chart->id)
        throw ContractError("potential and probe live on different charts");
    return tangential_recovery(probe, [&A](const Vec& x) { return A.at(x); }, opt);
}

void write_recovery_csv(const RecoveryReport& r, const std::string& path)
{
    std::ofstream os(path);
    if (!os)
        throw ConfigurationError("cannot write " + path);
    os << "lambda,I1_re,I1_im,extrapolated_re,extrapolated_im\n";
    char buf[256];
    for (std::size_t k = 0; k < r.lambdas.size(); ++k) {
        if (k == 0) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,,\n", r.lambdas[k], r.I1[k].real(), r.I1[k].imag());
        } else {
            cplx e = r.extrapolated[k - 1];
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.lambdas[k], r.I1[k].real(),
                          r.I1[k].imag(), e.real(), e.imag());
        }
        os << buf;
    }
}

} // namespace geobeam
