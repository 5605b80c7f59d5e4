#include "geobeam/carleman.hpp"

#include "json.hpp"

#include <cmath>
#include <random>

namespace geobeam {

std::string to_string(CarlemanKind k)
{
    return k == CarlemanKind::laplace_s0 ? "laplace_s0" : "magnetic";
}

void CarlemanWeight::validate(const MetricChart& chart) const
{
    if (!(h > 0))
        throw ParameterError("Carleman weight needs h > 0");
    if (!(eps0 > 0 && eps0 < 1))
        throw ParameterError("eps0 must lie in (0, 1)");
    if (!convexified())
        return;
    if (!(epsilon > 0))
        throw ParameterError("convexification scale must be positive");
    if (h / epsilon > eps0)
        throw ParameterError("h / eps exceeds eps0");
    double lo = chart.lo(0), hi = chart.hi(0);
    double worst = std::min(dphi_tilde(lo), dphi_tilde(hi));
    if (worst < 0.5)
        throw ParameterError("1 + (h / eps) x1 drops below 1/2 on the domain");
}

namespace {

double weighted_l2sq(const QuadratureNodes& q, const std::vector<cplx>& v)
{
    double s = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weight[i] * std::norm(v[i]);
    return s;
}

double grad_sq(const QuadratureNodes& q, const SampledOneForm& du)
{
    double s = 0;
    int d = du.dim();
    for (std::size_t i = 0; i < q.size(); ++i) {
        double gs = 0;
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                gs += q.ginv[i](j, k) * std::real(du.comp[static_cast<std::size_t>(j)][i] *
                                                  std::conj(du.comp[static_cast<std::size_t>(k)][i]));
        s += q.weight[i] * gs;
    }
    return s;
}

// Coordinate Hessian, Frobenius norm squared.
double hessian_sq(const QuadratureNodes& q, const SampledField& u)
{
    const Grid& g = u.grid;
    std::vector<std::vector<cplx>> d1(static_cast<std::size_t>(g.dim));
    for (int j = 0; j < g.dim; ++j)
        diff_axis(g, u.values, j, d1[static_cast<std::size_t>(j)]);
    std::vector<double> acc(g.size(), 0.0);
    std::vector<cplx> tmp;
    for (int j = 0; j < g.dim; ++j)
        for (int k = 0; k < g.dim; ++k) {
            diff_axis(g, d1[static_cast<std::size_t>(j)], k, tmp);
            for (std::size_t i = 0; i < g.size(); ++i)
                acc[i] += std::norm(tmp[i]);
        }
    double s = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weight[i] * acc[i];
    return s;
}

void check_support(const SampledField& u, const CarlemanOptions& opt, std::size_t member)
{
    const Grid& g = u.grid;
    double ring = 0;
    for (int k = 0; k < g.dim; ++k)
        ring = std::max(ring, opt.ring_cells * g.step(k));
    double umax = 0, trace = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double a = std::abs(u.values[i]);
        umax = std::max(umax, a);
        auto m = g.multi(i);
        bool edge = false;
        for (int k = 0; k < g.dim; ++k) {
            auto kk = static_cast<std::size_t>(k);
            if (!g.periodic[kk] && (m[kk] < opt.ring_cells || m[kk] >= g.n[kk] - opt.ring_cells))
                edge = true;
        }
        if (edge || u.chart->boundary_fn(g.point(i)) > -ring)
            trace = std::max(trace, a);
    }
    if (umax == 0)
        throw ContractError("family member " + std::to_string(member) + " vanishes identically");
    if (trace >= opt.support_tol)
        throw ContractError("family member " + std::to_string(member) + " is not compactly supported: trace " +
                            std::to_string(trace));
}

SampledOneForm dphi_form(const SampledField& u, const CarlemanWeight& w)
{
    SampledOneForm f = zero_form(u.chart, u.grid);
    for (std::size_t i = 0; i < u.grid.size(); ++i)
        f.comp[0][i] = w.dphi_tilde(u.grid.point(i)(0));
    return f;
}

// A~ u = -h^2 Delta u - |d phi~|^2 u,  B~ u = -2 i h <d phi~, du> - i h (Delta phi~) u.
struct SplitOps {
    SampledOneForm dphi;
    SampledField sq, lap_phi;
    double h;

    SampledField A(const SampledField& u) const
    {
        auto lu = laplacian(u);
        SampledField r{u.chart, u.grid, std::vector<cplx>(u.grid.size())};
        for (std::size_t i = 0; i < r.values.size(); ++i)
            r.values[i] = -h * h * lu.values[i] - sq.values[i] * u.values[i];
        return r;
    }
    SampledField B(const SampledField& u) const
    {
        auto pd = pairing(dphi, exterior_d(u));
        SampledField r{u.chart, u.grid, std::vector<cplx>(u.grid.size())};
        for (std::size_t i = 0; i < r.values.size(); ++i)
            r.values[i] = -2.0 * I * h * pd.values[i] - I * h * lap_phi.values[i] * u.values[i];
        return r;
    }
};

cplx herm(const QuadratureNodes& q, const std::vector<cplx>& a, const std::vector<cplx>& b)
{
    cplx s = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weight[i] * a[i] * std::conj(b[i]);
    return s;
}

} // namespace

CarlemanReport verify_carleman(const std::vector<SampledField>& family, const CarlemanWeight& weight,
                               CarlemanKind kind, const CarlemanOptions& opt, const std::string& family_id)
{
    if (family.empty())
        throw ContractError("empty test family");
    const auto& chart = *family.front().chart;
    weight.validate(chart);
    double eps_lhs = weight.convexified() ? weight.epsilon : opt.reference_epsilon;
    if (!(eps_lhs > 0))
        throw ParameterError("reference epsilon must be positive");
    double h = weight.h;
    double pref = h / std::sqrt(eps_lhs);

    CarlemanReport rep;
    rep.h = h;
    rep.epsilon = weight.epsilon;
    rep.family = family_id;
    rep.kind = kind;
    std::size_t n = family.size();
    rep.lhs.assign(n, 0.0);
    rep.rhs.assign(n, 0.0);
    rep.ratios.assign(n, 0.0);
    rep.identity_error.assign(n, 0.0);

    for (std::size_t m = 0; m < n; ++m)
        check_support(family[m], opt, m);

    const Grid& g0 = family.front().grid;
    auto nodes = grid_nodes(chart, g0);
    SemiclassicalParams sp;
    sp.h = h;
    ConjugationWeight cw;
    cw.kind = WeightKind::real_x1;
    cw.epsilon = weight.convexified() ? weight.epsilon : 0.0;
    cw.h2_scaled = true;

    SampledOneForm A0 = zero_form(family.front().chart, g0);
    SampledField q0 = zero_field(family.front().chart, g0);
    const SampledOneForm& A = (kind == CarlemanKind::magnetic && opt.A) ? *opt.A : A0;
    const SampledField& q = (kind == CarlemanKind::magnetic && opt.q) ? *opt.q : q0;

    SplitOps ops;
    ops.h = h;
    ops.dphi = dphi_form(family.front(), weight);
    ops.sq = pairing(ops.dphi, ops.dphi);
    ops.lap_phi = codifferential(ops.dphi);
    for (auto& z : ops.lap_phi.values)
        z = -z;

    parallel_for(
        n,
        [&](std::size_t m) {
            const SampledField& u = family[m];
            if (!u.grid.same(g0))
                throw ShapeError("family members must share one grid");
            double l2 = weighted_l2sq(nodes, u.values);
            auto du = exterior_d(u);
            double g2 = grad_sq(nodes, du);
            if (kind == CarlemanKind::laplace_s0) {
                auto Pu = conjugated_apply(u, A0, q0, sp, cw);
                double hs = hessian_sq(nodes, u);
                double lhs = pref * std::sqrt(l2 + h * h * g2 + h * h * h * h * hs);
                double pu2 = weighted_l2sq(nodes, Pu.values);
                rep.lhs[m] = lhs;
                rep.rhs[m] = std::sqrt(pu2);
                auto Au = ops.A(u);
                auto Bu = ops.B(u);
                auto ABu = ops.A(Bu);
                auto BAu = ops.B(Au);
                std::vector<cplx> comm(u.grid.size());
                for (std::size_t i = 0; i < comm.size(); ++i)
                    comm[i] = ABu.values[i] - BAu.values[i];
                double rhs_id = weighted_l2sq(nodes, Au.values) + weighted_l2sq(nodes, Bu.values) +
                                std::real(I * herm(nodes, comm, u.values));
                rep.identity_error[m] = std::abs(pu2 - rhs_id) / std::max(pu2, 1e-300);
            } else {
                auto lp = conjugated_apply(u, A, q, sp, cw);
                // h^2 d*(du + i A u) is a divergence; the rest is smooth.
                auto Au = scale(A, u);
                std::vector<TermGroup> groups(2);
                groups[0].name = "smooth";
                groups[0].tag = TermTag::smooth;
                groups[1].name = "divergence";
                groups[1].tag = TermTag::divergence;
                auto dv = codifferential([&] {
                    SampledOneForm c = du;
                    for (int k = 0; k < c.dim(); ++k)
                        for (std::size_t i = 0; i < u.grid.size(); ++i)
                            c.comp[static_cast<std::size_t>(k)][i] += I * Au.comp[static_cast<std::size_t>(k)][i];
                    return c;
                }());
                groups[0].scalar.resize(u.grid.size());
                groups[1].covector.resize(u.grid.size());
                for (std::size_t i = 0; i < u.grid.size(); ++i) {
                    groups[0].scalar[i] = lp.values[i] - h * h * dv.values[i];
                    CVec c(du.dim());
                    for (int k = 0; k < du.dim(); ++k)
                        c(k) = h * h * (du.comp[static_cast<std::size_t>(k)][i] + I * Au.comp[static_cast<std::size_t>(k)][i]);
                    groups[1].covector[i] = c;
                }
                auto nr = norm_scl(nodes, groups, sp);
                rep.lhs[m] = pref * std::sqrt(l2 + h * h * g2);
                rep.rhs[m] = nr.h_minus1_scl_bound;
            }
            rep.ratios[m] = rep.rhs[m] / rep.lhs[m];
        },
        opt.workers);

    rep.argmin = 0;
    for (std::size_t m = 1; m < n; ++m)
        if (rep.ratios[m] < rep.ratios[rep.argmin])
            rep.argmin = m;
    rep.min_ratio = rep.ratios[rep.argmin];
    for (double e : rep.identity_error)
        rep.max_identity_error = std::max(rep.max_identity_error, e);
    return rep;
}

std::string CarlemanReport::to_json() const
{
    nlohmann::json j;
    j["h"] = h;
    if (std::isfinite(epsilon))
        j["epsilon"] = epsilon;
    else
        j["epsilon"] = "inf";
    j["family"] = family;
    j["kind"] = to_string(kind);
    j["min_ratio"] = min_ratio;
    j["argmin"] = argmin;
    j["ratios"] = ratios;
    if (kind == CarlemanKind::laplace_s0)
        j["max_identity_error"] = max_identity_error;
    return j.dump(2);
}

std::vector<SampledField> bump_family(ChartPtr chart, const Grid& grid, double h, const BumpFamilyOptions& opt)
{
    if (opt.count < 1)
        throw ParameterError("bump family needs at least one member");
    if (!(h > 0))
        throw ParameterError("bump family needs h > 0");
    std::mt19937_64 rng(opt.seed);
    auto uni = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    int d = grid.dim;
    Vec mid = 0.5 * (chart->lo + chart->hi);
    Vec half = 0.5 * (chart->hi - chart->lo);
    std::vector<SampledField> out;
    for (int m = 0; m < opt.count; ++m) {
        Vec c(d);
        for (int k = 0; k < d; ++k)
            c(k) = mid(k) + (2 * uni() - 1) * opt.center_fraction * half(k);
        double R = opt.radius_lo + (opt.radius_hi - opt.radius_lo) * uni();
        Vec xi = Vec::Zero(d);
        bool mod = opt.modulated && (!opt.plain_members || m % 2 == 0);
        if (mod) {
            // unit vector orthogonal to dx1
            Vec t = Vec::Zero(d);
            for (int k = 1; k < d; ++k)
                t(k) = 2 * uni() - 1;
            if (t.norm() < 1e-3)
                t(1) = 1;
            xi = t / t.norm();
        }
        out.push_back(sample_field(chart, grid, [c, R, xi, h, mod](const Vec& x) {
            double r2 = (x - c).squaredNorm() / (R * R);
            if (r2 >= 1)
                return cplx(0, 0);
            double b = std::exp(1 - 1 / (1 - r2));
            return mod ? b * std::exp(I * xi.dot(x) / h) : cplx(b, 0);
        }));
    }
    return out;
}

} // namespace geobeam
