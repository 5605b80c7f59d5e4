#include "geobeam/raytransform.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace geobeam {

void RayMeasurement::validate() const
{
    if (values.size() != fan.size())
        throw ShapeError("ray measurement holds " + std::to_string(values.size()) + " values for " +
                         std::to_string(fan.size()) + " geodesics");
    for (const auto& v : values)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw DomainError("non-finite ray measurement");
}

namespace {

struct PathNodes {
    std::vector<Vec> x, v;
    std::vector<double> w; // Simpson weight times e^{-lambda t}
};

double default_step(const MetricChart& chart, double step) { return step > 0 ? step : 0.0025 * chart.diameter(); }

PathNodes path_nodes(const MetricChart& chart, const GeodesicPath& p, double lambda, double step)
{
    if (!p.finite())
        throw SamplingError("geodesic does not reach the boundary");
    if (p.classification == EntryClass::tangential)
        throw SamplingError("tangential geodesic in the fan");
    double L = p.exit_time;
    int n = 2 * std::max(1, static_cast<int>(std::ceil(L / (2 * step)))) + 1;
    PathNodes out;
    out.w = simpson_weights(n, L / (n - 1));
    out.x.resize(static_cast<std::size_t>(n));
    out.v.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double t = L * i / (n - 1);
        auto [x, v] = p.state_at(chart, t);
        auto k = static_cast<std::size_t>(i);
        out.x[k] = x;
        out.v[k] = v;
        out.w[k] *= std::exp(-lambda * t);
    }
    return out;
}

RayMeasurement forward_impl(const MetricChart& chart, const std::vector<GeodesicPath>& fan, double lambda,
                            const ForwardOptions& opt, const std::function<cplx(const Vec&, const Vec&)>& integrand)
{
    RayMeasurement m;
    m.fan = fan;
    m.attenuation = lambda;
    m.quadrature_step = default_step(chart, opt.quadrature_step);
    m.values.assign(fan.size(), cplx(0));
    parallel_for(
        fan.size(),
        [&](std::size_t g) {
            PathNodes nodes = path_nodes(chart, fan[g], lambda, m.quadrature_step);
            cplx acc = 0;
            for (std::size_t i = 0; i < nodes.w.size(); ++i)
                acc += nodes.w[i] * integrand(nodes.x[i], nodes.v[i]);
            m.values[g] = acc;
        },
        opt.workers);
    m.validate();
    return m;
}

} // namespace

RayMeasurement forward(const MetricChart& chart, const ScalarFn& f, const CovectorFn& alpha,
                       const std::vector<GeodesicPath>& fan, double lambda, const ForwardOptions& opt)
{
    if (chart.dim != 2)
        throw GeometryError("ray transform needs a two dimensional chart");
    return forward_impl(chart, fan, lambda, opt, [&](const Vec& x, const Vec& v) {
        cplx r = 0;
        if (f)
            r += f(x);
        if (alpha) {
            CVec a = alpha(x);
            r += a(0) * v(0) + a(1) * v(1);
        }
        return r;
    });
}

RayMeasurement forward(const SampledField& f, const SampledOneForm& alpha, const std::vector<GeodesicPath>& fan,
                       double lambda, const ForwardOptions& opt)
{
    f.validate();
    alpha.validate();
    if (!f.chart)
        throw ContractError("sampled field without chart");
    if (alpha.dim() != 2)
        throw ShapeError("ray transform needs a two dimensional form");
    const MetricChart& chart = *f.chart;
    return forward_impl(chart, fan, lambda, opt, [&](const Vec& x, const Vec& v) {
        if (!grid_contains(f.grid, x, 1e-9) || !grid_contains(alpha.grid, x, 1e-9))
            throw SamplingError("geodesic leaves the field grid");
        cplx r = interp_linear(f.grid, f.values, x);
        r += interp_linear(alpha.grid, alpha.comp[0], x) * v(0) + interp_linear(alpha.grid, alpha.comp[1], x) * v(1);
        return r;
    });
}

GaugeProjection gauge_project(const SampledOneForm& alpha)
{
    alpha.validate();
    const Grid& g = alpha.grid;
    if (g.dim != 2 || alpha.dim() != 2)
        throw ShapeError("gauge projection needs a two dimensional form");
    const int n0 = g.n[0], n1 = g.n[1];
    const std::size_t N = g.size();
    const double d[2] = {g.step(0), g.step(1)};

    GaugeProjection out;
    {
        std::vector<cplx> d1a2, d2a1;
        diff_axis(g, alpha.comp[1], 0, d1a2);
        diff_axis(g, alpha.comp[0], 1, d2a1);
        out.curl.resize(N);
        for (std::size_t i = 0; i < N; ++i)
            out.curl[i] = d1a2[i] - d2a1[i];
    }

    auto inside = [&](const Vec& x) { return !alpha.chart || alpha.chart->boundary_fn(x) < 0; };
    std::vector<int> unknown(N, -1);
    int n_unknown = 0;
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j) {
            bool edge = (!g.periodic[0] && (i == 0 || i == n0 - 1)) || (!g.periodic[1] && (j == 0 || j == n1 - 1));
            std::size_t k = g.index(i, j);
            if (!edge && inside(g.point(k)))
                unknown[k] = n_unknown++;
        }

    // Distance fraction to the boundary crossing between an unknown node and a fixed neighbour.
    auto crossing = [&](const Vec& a, const Vec& b) {
        if (!alpha.chart || alpha.chart->boundary_fn(b) <= 0)
            return 1.0;
        double lo = 0, hi = 1;
        for (int it = 0; it < 60; ++it) {
            double m = 0.5 * (lo + hi);
            if (alpha.chart->boundary_fn(a + m * (b - a)) <= 0)
                lo = m;
            else
                hi = m;
        }
        return std::max(0.5 * (lo + hi), 1e-3);
    };

    using Trip = Eigen::Triplet<double>;
    std::vector<Trip> trip;
    std::vector<std::size_t> row_node;
    std::vector<int> row_axis;
    int rows = 0;
    for (std::size_t k = 0; k < N; ++k) {
        if (unknown[k] < 0)
            continue;
        auto mi = g.multi(k);
        Vec xk = g.point(k);
        for (int ax = 0; ax < 2; ++ax) {
            std::array<int, 2> lm{mi[0], mi[1]}, rm{mi[0], mi[1]};
            auto a = static_cast<std::size_t>(ax);
            lm[a] -= 1;
            rm[a] += 1;
            if (g.periodic[a]) {
                lm[a] = (lm[a] + g.n[a]) % g.n[a];
                rm[a] = rm[a] % g.n[a];
            }
            std::size_t kl = g.index(lm[0], lm[1]), kr = g.index(rm[0], rm[1]);
            std::array<int, 2> lm2 = lm, rm2 = rm;
            lm2[a] -= 1;
            rm2[a] += 1;
            if (g.periodic[a]) {
                lm2[a] = (lm2[a] + g.n[a]) % g.n[a];
                rm2[a] = rm2[a] % g.n[a];
            }
            bool wide = lm2[a] >= 0 && rm2[a] < g.n[a] && unknown[kl] >= 0 && unknown[kr] >= 0 &&
                        unknown[g.index(lm2[0], lm2[1])] >= 0 && unknown[g.index(rm2[0], rm2[1])] >= 0;
            if (wide) {
                double c1 = 8.0 / (12.0 * d[ax]), c2 = 1.0 / (12.0 * d[ax]);
                trip.emplace_back(rows, unknown[kr], c1);
                trip.emplace_back(rows, unknown[kl], -c1);
                trip.emplace_back(rows, unknown[g.index(rm2[0], rm2[1])], -c2);
                trip.emplace_back(rows, unknown[g.index(lm2[0], lm2[1])], c2);
                row_node.push_back(k);
                row_axis.push_back(ax);
                ++rows;
                continue;
            }
            double hl = d[ax], hr = d[ax];
            if (unknown[kl] < 0)
                hl *= crossing(xk, g.point(kl));
            if (unknown[kr] < 0)
                hr *= crossing(xk, g.point(kr));
            double cl = -hr / (hl * (hl + hr)), cc = (hr - hl) / (hl * hr), cr = hl / (hr * (hl + hr));
            if (unknown[kl] >= 0)
                trip.emplace_back(rows, unknown[kl], cl);
            if (unknown[kr] >= 0)
                trip.emplace_back(rows, unknown[kr], cr);
            trip.emplace_back(rows, unknown[k], cc);
            row_node.push_back(k);
            row_axis.push_back(ax);
            ++rows;
        }
    }

    out.solenoidal = alpha;
    out.potential.chart = alpha.chart;
    out.potential.grid = g;
    out.potential.values.assign(N, cplx(0));
    if (n_unknown == 0)
        return out;

    Eigen::SparseMatrix<double> D(rows, n_unknown);
    D.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseMatrix<double> DtD = D.transpose() * D;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(DtD);
    if (solver.info() != Eigen::Success)
        throw ConditioningError("gauge potential system is singular");
    Eigen::VectorXd br(rows), bi(rows);
    for (int r = 0; r < rows; ++r) {
        cplx a = alpha.comp[static_cast<std::size_t>(row_axis[static_cast<std::size_t>(r)])]
                           [row_node[static_cast<std::size_t>(r)]];
        br(r) = a.real();
        bi(r) = a.imag();
    }
    Eigen::VectorXd pr = solver.solve(D.transpose() * br);
    Eigen::VectorXd pi_ = solver.solve(D.transpose() * bi);
    Eigen::VectorXd dr = D * pr, di = D * pi_;
    for (std::size_t k = 0; k < N; ++k)
        if (unknown[k] >= 0)
            out.potential.values[k] = cplx(pr(unknown[k]), pi_(unknown[k]));
    for (int r = 0; r < rows; ++r) {
        auto ru = static_cast<std::size_t>(r);
        out.solenoidal.comp[static_cast<std::size_t>(row_axis[ru])][row_node[ru]] -= cplx(dr(r), di(r));
    }
    return out;
}

namespace {

struct Legendre {
    int m;
    double lo[2], hi[2];
    // values and x-derivatives of P_i(u(x)) for one axis
    void eval(int axis, double x, double* p, double* dp) const
    {
        double s = 2.0 / (hi[axis] - lo[axis]);
        double u = s * (x - lo[axis]) - 1.0;
        p[0] = 1;
        dp[0] = 0;
        if (m > 1) {
            p[1] = u;
            dp[1] = 1;
        }
        for (int n = 1; n + 1 < m; ++n) {
            p[n + 1] = ((2 * n + 1) * u * p[n] - n * p[n - 1]) / (n + 1);
            dp[n + 1] = dp[n - 1] + (2 * n + 1) * p[n];
        }
        for (int n = 0; n < m; ++n)
            dp[n] *= s;
    }
};

} // namespace

InversionResult invert(const RayMeasurement& meas, ChartPtr chart, const Grid& grid, const InversionOptions& opt)
{
    meas.validate();
    if (!chart || chart->dim != 2 || grid.dim != 2)
        throw ShapeError("inversion needs a two dimensional chart and grid");
    if (opt.basis < 1 || opt.basis > 40)
        throw ConfigurationError("basis size out of range");
    if (!(opt.ridge >= 0))
        throw ConfigurationError("ridge must be non-negative");
    const int m = opt.basis;
    const int mb = m * m;
    const int nu = 3 * mb;
    const std::size_t ng = meas.fan.size();
    Legendre leg{m, {chart->lo(0), chart->lo(1)}, {chart->hi(0), chart->hi(1)}};

    Eigen::MatrixXd A(static_cast<Eigen::Index>(ng), nu);
    A.setZero();
    double step = default_step(*chart, meas.quadrature_step);
    parallel_for(
        ng,
        [&](std::size_t gi) {
            PathNodes nodes = path_nodes(*chart, meas.fan[gi], meas.attenuation, step);
            std::vector<double> p0(static_cast<std::size_t>(m)), p1(static_cast<std::size_t>(m)),
                dp(static_cast<std::size_t>(m));
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nu);
            for (std::size_t q = 0; q < nodes.w.size(); ++q) {
                leg.eval(0, nodes.x[q](0), p0.data(), dp.data());
                leg.eval(1, nodes.x[q](1), p1.data(), dp.data());
                double w = nodes.w[q];
                double w1 = w * nodes.v[q](0), w2 = w * nodes.v[q](1);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < m; ++j) {
                        double b = p0[static_cast<std::size_t>(i)] * p1[static_cast<std::size_t>(j)];
                        int c = i * m + j;
                        row(c) += w * b;
                        row(mb + c) += w1 * b;
                        row(2 * mb + c) += w2 * b;
                    }
            }
            A.row(static_cast<Eigen::Index>(gi)) = row.transpose();
        },
        opt.workers);

    // Regularization: ||f||^2 + ||d alpha||^2 + ||div alpha||^2 over the domain.
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(nu, nu);
    {
        GaussRule gr = gauss_legendre(opt.gram_points);
        std::vector<Eigen::VectorXd> frows, crows, vrows;
        std::vector<double> wts;
        std::vector<double> p0(static_cast<std::size_t>(m)), p1(static_cast<std::size_t>(m)),
            d0(static_cast<std::size_t>(m)), d1(static_cast<std::size_t>(m));
        for (int a = 0; a < opt.gram_points; ++a)
            for (int b = 0; b < opt.gram_points; ++b) {
                double ha = 0.5 * (leg.hi[0] - leg.lo[0]), hb = 0.5 * (leg.hi[1] - leg.lo[1]);
                Vec x(2);
                x << leg.lo[0] + ha * (gr.x[static_cast<std::size_t>(a)] + 1),
                    leg.lo[1] + hb * (gr.x[static_cast<std::size_t>(b)] + 1);
                if (!chart->inside(x))
                    continue;
                double w = gr.w[static_cast<std::size_t>(a)] * gr.w[static_cast<std::size_t>(b)] * ha * hb *
                           chart->sqrt_det(x);
                leg.eval(0, x(0), p0.data(), d0.data());
                leg.eval(1, x(1), p1.data(), d1.data());
                Eigen::VectorXd fr(mb), cr(2 * mb), vr(2 * mb);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < m; ++j) {
                        auto si = static_cast<std::size_t>(i), sj = static_cast<std::size_t>(j);
                        int c = i * m + j;
                        fr(c) = p0[si] * p1[sj];
                        double dx1 = d0[si] * p1[sj], dx2 = p0[si] * d1[sj];
                        // curl = d1 alpha_2 - d2 alpha_1, div = d1 alpha_1 + d2 alpha_2
                        cr(c) = -dx2;
                        cr(mb + c) = dx1;
                        vr(c) = dx1;
                        vr(mb + c) = dx2;
                    }
                frows.push_back(fr);
                crows.push_back(cr);
                vrows.push_back(vr);
                wts.push_back(w);
            }
        auto gram = [&](const std::vector<Eigen::VectorXd>& rows, int width) {
            Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), width);
            for (std::size_t r = 0; r < rows.size(); ++r)
                M.row(static_cast<Eigen::Index>(r)) = std::sqrt(wts[r]) * rows[r].transpose();
            return Eigen::MatrixXd(M.transpose() * M);
        };
        R.block(0, 0, mb, mb) = gram(frows, mb);
        R.block(mb, mb, 2 * mb, 2 * mb) = gram(crows, 2 * mb) + gram(vrows, 2 * mb);
    }

    // Polynomial directions that vanish numerically on the domain are dropped; the rest are
    // orthonormalised in L2 of the domain.
    Eigen::MatrixXd T;
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gs(R.block(0, 0, mb, mb));
        double gmax = gs.eigenvalues().maxCoeff();
        std::vector<int> keep;
        for (int i = 0; i < mb; ++i)
            if (gs.eigenvalues()(i) > 1e-10 * gmax)
                keep.push_back(i);
        int kb = static_cast<int>(keep.size());
        Eigen::MatrixXd Tb(mb, kb);
        for (int c = 0; c < kb; ++c)
            Tb.col(c) = gs.eigenvectors().col(keep[static_cast<std::size_t>(c)]) /
                        std::sqrt(gs.eigenvalues()(keep[static_cast<std::size_t>(c)]));
        T = Eigen::MatrixXd::Zero(nu, 3 * kb);
        for (int b = 0; b < 3; ++b)
            T.block(b * mb, b * kb, mb, kb) = Tb;
    }
    Eigen::MatrixXd AT = A * T;
    Eigen::MatrixXd Nmat = AT.transpose() * AT + opt.ridge * (T.transpose() * R * T);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Nmat);
    if (es.info() != Eigen::Success)
        throw ConditioningError("normal matrix eigen-decomposition failed");
    double emax = es.eigenvalues().maxCoeff(), emin = es.eigenvalues().minCoeff();
    InversionResult res;
    res.unknowns = static_cast<int>(T.cols());
    res.rcond = emax > 0 ? emin / emax : 0;
    if (!(res.rcond >= opt.min_rcond)) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "normal system rank deficient: rcond %.3e, %d unknowns, %zu measurements",
                      res.rcond, res.unknowns, ng);
        throw ConditioningError(buf);
    }
    Eigen::VectorXd br(static_cast<Eigen::Index>(ng)), bi(static_cast<Eigen::Index>(ng));
    for (std::size_t i = 0; i < ng; ++i) {
        br(static_cast<Eigen::Index>(i)) = meas.values[i].real();
        bi(static_cast<Eigen::Index>(i)) = meas.values[i].imag();
    }
    const auto& Q = es.eigenvectors();
    Eigen::VectorXd inv = es.eigenvalues().cwiseInverse();
    Eigen::VectorXd cr = T * (Q * inv.cwiseProduct(Q.transpose() * (AT.transpose() * br)));
    Eigen::VectorXd ci = T * (Q * inv.cwiseProduct(Q.transpose() * (AT.transpose() * bi)));
    res.coefficients.resize(static_cast<std::size_t>(nu));
    for (int c = 0; c < nu; ++c)
        res.coefficients[static_cast<std::size_t>(c)] = cplx(cr(c), ci(c));
    double bn = std::sqrt(br.squaredNorm() + bi.squaredNorm());
    double rn = std::sqrt((A * cr - br).squaredNorm() + (A * ci - bi).squaredNorm());
    res.data_residual = bn > 0 ? rn / bn : rn;

    res.f.chart = chart;
    res.f.grid = grid;
    res.f.values.assign(grid.size(), cplx(0));
    res.alpha.chart = chart;
    res.alpha.grid = grid;
    res.alpha.comp.assign(2, std::vector<cplx>(grid.size(), cplx(0)));
    parallel_for(
        grid.size(),
        [&](std::size_t k) {
            Vec x = grid.point(k);
            std::vector<double> p0(static_cast<std::size_t>(m)), p1(static_cast<std::size_t>(m)),
                d(static_cast<std::size_t>(m));
            leg.eval(0, x(0), p0.data(), d.data());
            leg.eval(1, x(1), p1.data(), d.data());
            cplx f = 0, a1 = 0, a2 = 0;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    double b = p0[static_cast<std::size_t>(i)] * p1[static_cast<std::size_t>(j)];
                    auto c = static_cast<std::size_t>(i * m + j);
                    f += b * res.coefficients[c];
                    a1 += b * res.coefficients[static_cast<std::size_t>(mb) + c];
                    a2 += b * res.coefficients[static_cast<std::size_t>(2 * mb) + c];
                }
            res.f.values[k] = f;
            res.alpha.comp[0][k] = a1;
            res.alpha.comp[1][k] = a2;
        },
        opt.workers);
    res.gauge = gauge_project(res.alpha);
    return res;
}

void write_sinogram_csv(const RayMeasurement& meas, const std::string& path)
{
    meas.validate();
    std::ofstream os(path);
    if (!os)
        throw ConfigurationError("cannot write " + path);
    os << "entry_x1,entry_x2,dir_x1,dir_x2,exit_time,value_re,value_im\n";
    char buf[256];
    for (std::size_t i = 0; i < meas.fan.size(); ++i) {
        const auto& p = meas.fan[i];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.x0(0), p.x0(1), p.v0(0),
                      p.v0(1), p.exit_time, meas.values[i].real(), meas.values[i].imag());
        os << buf;
    }
}

} // namespace geobeam
