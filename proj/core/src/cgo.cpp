#include "geobeam/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace geobeam {

std::string to_string(SeedKind k) { return k == SeedKind::one ? "one" : "exponential"; }

const WkbGroup& WkbResidualReport::group(const std::string& name) const
{
    for (const auto& g : groups)
        if (g.name == name)
            return g;
    throw ContractError("no residual group named " + name);
}

namespace {

Vec vec2(double a, double b)
{
    Vec x(2);
    x << a, b;
    return x;
}

Vec v3(double a, double b, double c)
{
    Vec x(3);
    x << a, b, c;
    return x;
}

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t source_hash(const SampledOneForm& A, const SampledField& q)
{
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& c : A.comp)
        h = fnv(h, c.data(), c.size() * sizeof(cplx));
    h = fnv(h, q.values.data(), q.values.size() * sizeof(cplx));
    h = fnv(h, A.grid.lo.data(), sizeof(double) * 3);
    h = fnv(h, A.grid.hi.data(), sizeof(double) * 3);
    h = fnv(h, A.grid.n.data(), sizeof(int) * 3);
    return h;
}

// Polar tables on the (r, theta) grid: chart point, Jacobian columns, metric block.
struct PolarTable {
    Grid g;
    std::vector<double> x2, x3, jr2, jr3, jt2, jt3, grr, grt, gtt;
};

PolarTable polar_table(const PolarNormalCoords& pc, const Grid& rt, int workers)
{
    PolarTable t;
    t.g = rt;
    std::size_t n = rt.size();
    for (auto* v : {&t.x2, &t.x3, &t.jr2, &t.jr3, &t.jt2, &t.jt3, &t.grr, &t.grt, &t.gtt})
        v->assign(n, 0.0);
    const MetricChart& D = pc.chart();
    double h = 1e-3 * std::max(1.0, D.diameter());
    parallel_for(
        n,
        [&](std::size_t k) {
            Vec p = rt.point(k);
            double r = p(0), th = p(1);
            auto P = [&](double dr, double dt) { return pc.to_chart(r + dr, th + dt); };
            Vec x = P(0, 0);
            Vec jr = (-P(2 * h, 0) + 8 * P(h, 0) - 8 * P(-h, 0) + P(-2 * h, 0)) / (12 * h);
            Vec jt = (-P(0, 2 * h) + 8 * P(0, h) - 8 * P(0, -h) + P(0, -2 * h)) / (12 * h);
            Mat g0 = D.metric_fn(D.wrap(x));
            t.x2[k] = x(0);
            t.x3[k] = x(1);
            t.jr2[k] = jr(0);
            t.jr3[k] = jr(1);
            t.jt2[k] = jt(0);
            t.jt3[k] = jt(1);
            t.grr[k] = jr.dot(g0 * jr);
            t.grt[k] = jr.dot(g0 * jt);
            t.gtt[k] = jt.dot(g0 * jt);
        },
        workers);
    return t;
}

// Mollified form evaluated directly at arbitrary points, kernel normalised per point so the
// result is as smooth as the kernel.
std::vector<std::array<cplx, 3>> mollify_at(const SampledOneForm& A, double tau, const std::vector<Vec>& pts,
                                            int workers)
{
    const Grid& g = A.grid;
    // bounding box of the nonzero samples
    std::array<double, 3> blo{1e300, 1e300, 1e300}, bhi{-1e300, -1e300, -1e300};
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (A.comp[0][k] == 0.0 && A.comp[1][k] == 0.0 && A.comp[2][k] == 0.0)
            continue;
        Vec p = g.point(k);
        for (std::size_t a = 0; a < 3; ++a) {
            blo[a] = std::min(blo[a], p(static_cast<int>(a)));
            bhi[a] = std::max(bhi[a], p(static_cast<int>(a)));
        }
    }
    const double s[3] = {g.step(0), g.step(1), g.step(2)};
    const double t2 = tau * tau;
    std::vector<std::array<cplx, 3>> out(pts.size(), {cplx(0), cplx(0), cplx(0)});
    parallel_for(
        pts.size(),
        [&](std::size_t k) {
            const Vec& x = pts[k];
            bool near = true;
            for (int a = 0; a < 3; ++a)
                near = near && x(a) > blo[static_cast<std::size_t>(a)] - tau && x(a) < bhi[static_cast<std::size_t>(a)] + tau;
            if (!near)
                return;
            std::array<cplx, 3> acc{cplx(0), cplx(0), cplx(0)};
            double wsum = 0;
            // the normalisation runs over the full kernel, including nodes outside the grid
            int i0 = static_cast<int>(std::ceil((x(0) - tau - g.lo[0]) / s[0]));
            int i1 = static_cast<int>(std::floor((x(0) + tau - g.lo[0]) / s[0]));
            for (int i = i0; i <= i1; ++i) {
                double d0 = g.lo[0] + i * s[0] - x(0);
                double r0 = t2 - d0 * d0;
                if (r0 <= 0)
                    continue;
                double e1 = std::sqrt(r0);
                int j0 = static_cast<int>(std::ceil((x(1) - e1 - g.lo[1]) / s[1]));
                int j1 = static_cast<int>(std::floor((x(1) + e1 - g.lo[1]) / s[1]));
                for (int j = j0; j <= j1; ++j) {
                    double d1 = g.lo[1] + j * s[1] - x(1);
                    double r1 = r0 - d1 * d1;
                    if (r1 <= 0)
                        continue;
                    double e2 = std::sqrt(r1);
                    int l0 = static_cast<int>(std::ceil((x(2) - e2 - g.lo[2]) / s[2]));
                    int l1 = static_cast<int>(std::floor((x(2) + e2 - g.lo[2]) / s[2]));
                    bool in_ij = i >= 0 && i < g.n[0] && j >= 0 && j < g.n[1];
                    for (int l = l0; l <= l1; ++l) {
                        double d2 = g.lo[2] + l * s[2] - x(2);
                        double u = 1.0 - (d0 * d0 + d1 * d1 + d2 * d2) / t2;
                        if (u <= 0)
                            continue;
                        double w = u * u;
                        w *= w;
                        wsum += w;
                        if (!in_ij || l < 0 || l >= g.n[2])
                            continue;
                        std::size_t idx = g.index(i, j, l);
                        acc[0] += w * A.comp[0][idx];
                        acc[1] += w * A.comp[1][idx];
                        acc[2] += w * A.comp[2][idx];
                    }
                }
            }
            if (wsum > 0)
                for (auto& v : acc)
                    v /= wsum;
            out[k] = acc;
        },
        workers);
    return out;
}

} // namespace

WkbSolution build_wkb(const MetricChart& M, const MetricChart& D, const Vec& omega, const SampledOneForm& A,
                      const SampledField& q, const SemiclassicalParams& params, const WkbOptions& opt)
{
    params.validate();
    if (!(opt.sigma > 0 && opt.sigma < 0.5))
        throw ParameterError("sigma must lie in (0, 1/2)");
    if (M.dim != 3 || D.dim != 2)
        throw UnsupportedGeometryError("WKB construction needs a three dimensional admissible chart");
    A.validate();
    q.validate();
    if (A.dim() != 3 || A.grid.dim != 3 || q.grid.dim != 3)
        throw ShapeError("A and q must live on a three dimensional grid");
    if (opt.n_x1 < 16 || opt.n_r < 16 || opt.n_theta < 5)
        throw ConfigurationError("WKB grid too coarse");

    if (!D.inside(omega))
        throw GeometryError("pole lies outside the transversal chart");
    for (double x1 : linspace(M.lo(0), M.hi(0), 201))
        if (M.boundary_fn(v3(x1, omega(0), omega(1))) <= 0)
            throw GeometryError("pole line meets M");

    WkbSolution sol;
    sol.params = params;
    sol.sigma = opt.sigma;
    sol.seed = opt.seed;
    sol.tau = std::pow(params.h, opt.sigma);
    sol.polar = PolarNormalCoords(D, omega, true);
    const double tau = sol.tau;

    // Extent of M as seen from the pole.
    double rmin = 1e300, rmax = -1e300, tmin = 1e300, tmax = -1e300;
    {
        const int ns = 64;
        auto xs = linspace(M.lo(0), M.hi(0), 5);
        auto ys = linspace(M.lo(1), M.hi(1), ns);
        auto zs = linspace(M.lo(2), M.hi(2), ns);
        for (double y : ys)
            for (double z : zs) {
                bool in = false;
                for (double x1 : xs)
                    in = in || M.boundary_fn(v3(x1, y, z)) <= 0;
                if (!in)
                    continue;
                auto [r, th] = sol.polar.from_chart(vec2(y, z));
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                tmin = std::min(tmin, th);
                tmax = std::max(tmax, th);
            }
        if (!(rmax > rmin))
            throw GeometryError("M has empty transversal section");
        double dy = (M.hi(1) - M.lo(1)) / (ns - 1), dz = (M.hi(2) - M.lo(2)) / (ns - 1);
        double slack = std::hypot(dy, dz);
        rmin -= slack;
        rmax += slack;
        tmin -= slack / rmin;
        tmax += slack / rmin;
    }

    double amax = std::max({A.grid.step(0), A.grid.step(1), A.grid.step(2)});
    sol.mollified = tau > 2 * amax;
    const double reach = sol.mollified ? tau : 0.0;
    auto axis = [&](double lo, double hi, int n) {
        double span = hi - lo + 2 * reach;
        double step = span / (n - 1 - 2 * opt.pad_cells);
        return std::array<double, 3>{lo - reach - opt.pad_cells * step, hi + reach + opt.pad_cells * step, step};
    };
    auto ax1 = axis(M.lo(0), M.hi(0), opt.n_x1);
    auto axr = axis(rmin, rmax, opt.n_r);
    if (!(axr[0] > 0))
        throw GeometryError("pole too close to M for the padded radial range");
    double th0 = tmin - opt.theta_pad, th1 = tmax + opt.theta_pad;
    sol.grid = Grid::make({ax1[0], axr[0], th0}, {ax1[1], axr[1], th1}, {opt.n_x1, opt.n_r, opt.n_theta});
    const Grid& G = sol.grid;
    Grid rt = Grid::make({axr[0], th0}, {axr[1], th1}, {opt.n_r, opt.n_theta});
    auto tab = std::make_shared<PolarTable>(polar_table(sol.polar, rt, opt.workers));

    auto Mp = std::make_shared<MetricChart>(M);
    MetricChart pc;
    pc.dim = 3;
    pc.id = "polar(" + M.id + ")";
    pc.kind = "polar_cylinder";
    pc.lo = v3(G.lo[0], G.lo[1], G.lo[2]);
    pc.hi = v3(G.hi[0], G.hi[1], G.hi[2]);
    pc.extension = 1e6;
    auto chart_point = [tab](const Vec& x) {
        Vec rtp = vec2(x(1), x(2));
        return v3(x(0), interp_cubic(tab->g, tab->x2, rtp), interp_cubic(tab->g, tab->x3, rtp));
    };
    pc.conformal_factor = [Mp, chart_point](const Vec& x) {
        return Mp->conformal_factor ? Mp->conformal_factor(chart_point(x)) : 1.0;
    };
    pc.metric_fn = [tab, Mp, chart_point](const Vec& x) {
        Vec rtp = vec2(x(1), x(2));
        double c = Mp->conformal_factor ? Mp->conformal_factor(chart_point(x)) : 1.0;
        Mat g = Mat::Zero(3, 3);
        g(0, 0) = 1;
        g(1, 1) = interp_cubic(tab->g, tab->grr, rtp);
        g(1, 2) = g(2, 1) = interp_cubic(tab->g, tab->grt, rtp);
        g(2, 2) = interp_cubic(tab->g, tab->gtt, rtp);
        return Mat(c * g);
    };
    pc.boundary_fn = [Mp, chart_point](const Vec& x) { return Mp->boundary_fn(chart_point(x)); };
    sol.chart = std::make_shared<const MetricChart>(std::move(pc));
    const MetricChart& chart = *sol.chart;

    const std::size_t N = G.size();
    std::vector<Vec> xm(N);
    sol.inside.assign(N, 0);
    for (std::size_t k = 0; k < N; ++k) {
        auto m = G.multi(k);
        std::size_t tk = rt.index(m[1], m[2]);
        xm[k] = v3(G.coord(0, m[0]), tab->x2[tk], tab->x3[tk]);
        sol.inside[k] = M.boundary_fn(xm[k]) <= 0;
    }

    // Zero extension outside M, then mollification on M's grid.
    SampledOneForm Am = A;
    SampledField qm = q;
    for (std::size_t k = 0; k < A.grid.size(); ++k)
        if (M.boundary_fn(A.grid.point(k)) > 0)
            for (auto& c : Am.comp)
                c[k] = 0;
    for (std::size_t k = 0; k < q.grid.size(); ++k)
        if (M.boundary_fn(q.grid.point(k)) > 0)
            qm.values[k] = 0;

    auto polar_form = [&](const SampledOneForm& src) {
        SampledOneForm out;
        out.chart = sol.chart;
        out.grid = G;
        out.comp.assign(3, std::vector<cplx>(N, cplx(0)));
        for (std::size_t k = 0; k < N; ++k) {
            if (!grid_contains(src.grid, xm[k], 1e-9)) {
                if (sol.inside[k])
                    throw SamplingError("A does not cover M");
                continue;
            }
            auto m = G.multi(k);
            std::size_t tk = rt.index(m[1], m[2]);
            cplx a[3];
            for (int c = 0; c < 3; ++c)
                a[c] = interp_linear(src.grid, src.comp[static_cast<std::size_t>(c)], xm[k]);
            out.comp[0][k] = a[0];
            out.comp[1][k] = a[1] * tab->jr2[tk] + a[2] * tab->jr3[tk];
            out.comp[2][k] = a[1] * tab->jt2[tk] + a[2] * tab->jt3[tk];
        }
        return out;
    };
    sol.A = polar_form(Am);
    if (sol.mollified) {
        auto vals = mollify_at(Am, tau, xm, opt.workers);
        sol.A_tau = sol.A;
        for (std::size_t k = 0; k < N; ++k) {
            auto m = G.multi(k);
            std::size_t tk = rt.index(m[1], m[2]);
            const auto& a = vals[k];
            sol.A_tau.comp[0][k] = a[0];
            sol.A_tau.comp[1][k] = a[1] * tab->jr2[tk] + a[2] * tab->jr3[tk];
            sol.A_tau.comp[2][k] = a[1] * tab->jt2[tk] + a[2] * tab->jt3[tk];
        }
    } else {
        sol.A_tau = sol.A;
    }
    sol.q.chart = sol.chart;
    sol.q.grid = G;
    sol.q.values.assign(N, cplx(0));
    for (std::size_t k = 0; k < N; ++k)
        if (grid_contains(q.grid, xm[k], 1e-9))
            sol.q.values[k] = interp_linear(qm.grid, qm.values, xm[k]);

    // Phi_tau per theta slice: dbar Phi = -(A_1 + i A_r) / 2 in the (x1, r) plane.
    Grid plane = Grid::make({G.lo[0], G.lo[1]}, {G.hi[0], G.hi[1]}, {G.n[0], G.n[1]});
    double extra = 1.5 * std::max(G.step(0), G.step(1));
    std::array<double, 4> support{M.lo(0) - reach - extra, M.hi(0) + reach + extra, rmin - reach - extra,
                                  rmax + reach + extra};
    auto solve_slices = [&](const SampledOneForm& form, std::vector<cplx>& out) {
        out.assign(N, cplx(0));
        parallel_for(
            static_cast<std::size_t>(G.n[2]),
            [&](std::size_t kt) {
                PlaneField f;
                f.grid = plane;
                f.support = support;
                f.values.resize(plane.size());
                for (int i = 0; i < G.n[0]; ++i)
                    for (int j = 0; j < G.n[1]; ++j) {
                        std::size_t k = G.index(i, j, static_cast<int>(kt));
                        f.values[plane.index(i, j)] = -0.5 * (form.comp[0][k] + I * form.comp[1][k]);
                    }
                PlaneField u = cauchy_solve(f, CauchyKind::dbar);
                for (int i = 0; i < G.n[0]; ++i)
                    for (int j = 0; j < G.n[1]; ++j)
                        out[G.index(i, j, static_cast<int>(kt))] = u.values[plane.index(i, j)];
            },
            opt.workers);
    };
    solve_slices(sol.A_tau, sol.Phi_tau);
    if (opt.unmollified_phase)
        solve_slices(sol.A, sol.Phi);

    const double lam = params.lambda;
    auto seed = [&](double x1, double r) {
        return opt.seed == SeedKind::one ? cplx(1.0) : std::exp(I * lam * cplx(x1, r));
    };
    auto GM = GridMetric::build(chart, G);
    std::vector<cplx> logw(N);
    sol.a0.resize(N);
    sol.a.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
        Vec p = G.point(k);
        double c = chart.conformal_factor(p);
        double detg = GM.g[k].determinant();
        double b = opt.b ? opt.b(p(2)) : 1.0;
        sol.a0[k] = seed(p(0), p(1));
        sol.a[k] = std::pow(detg, -0.25) * std::sqrt(c) * std::exp(I * sol.Phi_tau[k]) * sol.a0[k] * b;
        logw[k] = std::log(detg / (c * c));
        double e1 = std::abs(c * GM.ginv[k](1, 1) - 1.0), e2 = std::abs(c * GM.ginv[k](0, 1));
        sol.eikonal_error = std::max({sol.eikonal_error, e1, e2});
    }

    std::vector<cplx> da1, dar, dl1, dlr, dp1, dpr;
    diff_axis(G, sol.a, 0, da1);
    diff_axis(G, sol.a, 1, dar);
    diff_axis(G, logw, 0, dl1);
    diff_axis(G, logw, 1, dlr);
    diff_axis(G, sol.Phi_tau, 0, dp1);
    diff_axis(G, sol.Phi_tau, 1, dpr);
    const double hs = 1e-3;
    for (std::size_t k = 0; k < N; ++k) {
        if (!sol.inside[k])
            continue;
        cplx dbar_a = 0.5 * (da1[k] + I * dar[k]);
        cplx dbar_l = 0.5 * (dl1[k] + I * dlr[k]);
        cplx res = 4.0 * dbar_a + dbar_l * sol.a[k] + 2.0 * I * (sol.A_tau.comp[0][k] + I * sol.A_tau.comp[1][k]) * sol.a[k];
        sol.transport_residual = std::max(sol.transport_residual, std::abs(res));
        sol.Phi_sup = std::max(sol.Phi_sup, std::abs(sol.Phi_tau[k]));
        sol.grad_Phi_sup = std::max(sol.grad_Phi_sup, std::sqrt(std::norm(dp1[k]) + std::norm(dpr[k])));
        Vec p = G.point(k);
        auto d5 = [&](int ax) {
            auto at = [&](double s) { return ax == 0 ? seed(p(0) + s, p(1)) : seed(p(0), p(1) + s); };
            return (-at(2 * hs) + 8.0 * at(hs) - 8.0 * at(-hs) + at(-2 * hs)) / (12 * hs);
        };
        sol.seed_defect = std::max(sol.seed_defect, std::abs(0.5 * (d5(0) + I * d5(1))));
    }
    sol.source_tag = source_hash(A, q);
    return sol;
}

WkbResidualReport wkb_residual(const WkbSolution& sol, const SampledOneForm& A, const SampledField& q)
{
    if (source_hash(A, q) != sol.source_tag)
        throw ContractError("WKB solution was built from a different A or q");
    double expect = std::pow(sol.params.h, sol.sigma);
    if (std::abs(sol.tau - expect) > 1e-12 * expect)
        throw ContractError("mollification length does not follow tau = h^sigma");
    const double h = sol.params.h, tau = sol.tau;
    const Grid& G = sol.grid;
    const std::size_t N = G.size();

    SampledField a{sol.chart, G, sol.a};
    SampledOneForm diff = sol.A;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < N; ++k)
            diff.comp[c][k] = sol.A.comp[c][k] - sol.A_tau.comp[c][k];
    SampledOneForm drho = zero_form(sol.chart, G);
    for (std::size_t k = 0; k < N; ++k) {
        drho.comp[0][k] = 1.0;
        drho.comp[1][k] = I;
    }
    auto lap = laplacian(a);
    auto da = exterior_d(a);
    auto Ada = pairing(sol.A, da);
    auto phase = pairing(diff, drho);
    auto divs = codifferential(scale(sol.A_tau, a));
    auto AA = pairing(sol.A, sol.A);

    auto nodes = grid_nodes(*sol.chart, G);
    for (std::size_t k = 0; k < N; ++k)
        if (!sol.inside[k])
            nodes.weight[k] = 0;

    const double h2 = h * h;
    std::vector<TermGroup> groups(6);
    groups[0] = {"laplacian", TermTag::smooth, std::vector<cplx>(N), {}};
    groups[1] = {"A_da", TermTag::smooth, std::vector<cplx>(N), {}};
    groups[2] = {"phase_A_minus_A_tau", TermTag::smooth, std::vector<cplx>(N), {}};
    groups[3] = {"codiff_A_tau_a", TermTag::smooth, std::vector<cplx>(N), {}};
    groups[4] = {"codiff_rough", TermTag::divergence, {}, std::vector<CVec>(N)};
    groups[5] = {"zeroth_order", TermTag::smooth, std::vector<cplx>(N), {}};
    for (std::size_t k = 0; k < N; ++k) {
        groups[0].scalar[k] = h2 * lap.values[k];
        groups[1].scalar[k] = I * h2 * Ada.values[k];
        groups[2].scalar[k] = -2.0 * I * h * phase.values[k] * sol.a[k];
        groups[3].scalar[k] = -I * h2 * divs.values[k];
        CVec cv(3);
        for (int c = 0; c < 3; ++c)
            cv(c) = -I * h2 * diff.comp[static_cast<std::size_t>(c)][k] * sol.a[k];
        groups[4].covector[k] = cv;
        groups[5].scalar[k] = -h2 * (AA.values[k] + sol.q.values[k]) * sol.a[k];
    }
    auto n = norm_scl(nodes, groups, sol.params);

    WkbResidualReport rep;
    rep.bound = n.h_minus1_scl_bound;
    rep.smooth_l2 = n.smooth_l2;
    rep.divergence_l2 = n.divergence_l2;
    rep.h = h;
    rep.tau = tau;
    const std::pair<const char*, double> rates[6] = {{"h^2/tau^2", h2 / (tau * tau)}, {"h^2/tau", h2 / tau},
                                                     {"h o(1)", h},                  {"h^2/tau", h2 / tau},
                                                     {"h o(1)", h},                  {"h^2", h2}};
    for (std::size_t i = 0; i < groups.size(); ++i) {
        WkbGroup g;
        g.name = groups[i].name;
        g.tag = groups[i].tag;
        g.norm = n.groups[i].second;
        g.rate = rates[i].first;
        g.reference = rates[i].second;
        rep.groups.push_back(g);
    }
    return rep;
}

} // namespace geobeam
