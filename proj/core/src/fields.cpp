#include "geobeam/fields.hpp"

#include "fft_conv.hpp"

#include <cmath>

namespace geobeam {

namespace {

void check_finite(const std::vector<cplx>& v, const char* what)
{
    for (const auto& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw DomainError(std::string(what) + " contains non-finite values");
}

void require_same(const Grid& a, const Grid& b)
{
    if (!a.same(b))
        throw ShapeError("mismatched grids");
}

void require_resolution(const Grid& g)
{
    for (int k = 0; k < g.dim; ++k)
        if (g.n[static_cast<std::size_t>(k)] < 4)
            throw ResolutionError("grid needs at least 4 nodes per axis");
}

} // namespace

void SampledField::validate() const
{
    if (values.size() != grid.size())
        throw ShapeError("field values do not match grid size");
    check_finite(values, "field");
}

void SampledOneForm::validate() const
{
    if (chart && static_cast<int>(comp.size()) != chart->dim)
        throw ShapeError("one-form component count differs from chart dimension");
    for (const auto& c : comp) {
        if (c.size() != grid.size())
            throw ShapeError("one-form component does not match grid size");
        check_finite(c, "one-form");
    }
    if (boundary_tangential_zero && !geobeam::boundary_tangential_zero(*this))
        throw DomainError("one-form flagged boundary-tangential-zero has a tangential boundary trace");
}

CVec SampledOneForm::at(const Vec& x) const
{
    CVec out(dim());
    for (int k = 0; k < dim(); ++k)
        out(k) = interp_cubic(grid, comp[static_cast<std::size_t>(k)], x);
    return out;
}

void SemiclassicalParams::validate() const
{
    if (!(h > 0) || h > 1)
        throw ParameterError("semiclassical parameter h must lie in (0, 1]");
    if (!std::isfinite(lambda))
        throw ParameterError("lambda must be finite");
}

SampledField sample_field(ChartPtr chart, const Grid& grid, const std::function<cplx(const Vec&)>& f)
{
    SampledField u{std::move(chart), grid, std::vector<cplx>(grid.size())};
    parallel_for(grid.size(), [&](std::size_t i) { u.values[i] = f(grid.point(i)); });
    u.validate();
    return u;
}

SampledOneForm sample_form(ChartPtr chart, const Grid& grid, const std::function<CVec(const Vec&)>& f)
{
    int d = chart ? chart->dim : grid.dim;
    SampledOneForm a;
    a.chart = std::move(chart);
    a.grid = grid;
    a.comp.assign(static_cast<std::size_t>(d), std::vector<cplx>(grid.size()));
    parallel_for(grid.size(), [&](std::size_t i) {
        CVec v = f(grid.point(i));
        for (int k = 0; k < d; ++k)
            a.comp[static_cast<std::size_t>(k)][i] = v(k);
    });
    a.validate();
    return a;
}

SampledField zero_field(ChartPtr chart, const Grid& grid)
{
    return SampledField{std::move(chart), grid, std::vector<cplx>(grid.size())};
}

SampledOneForm zero_form(ChartPtr chart, const Grid& grid)
{
    SampledOneForm a;
    int d = chart ? chart->dim : grid.dim;
    a.chart = std::move(chart);
    a.grid = grid;
    a.comp.assign(static_cast<std::size_t>(d), std::vector<cplx>(grid.size()));
    return a;
}

GridMetric GridMetric::build(const MetricChart& chart, const Grid& grid)
{
    GridMetric m;
    m.g.resize(grid.size());
    m.ginv.resize(grid.size());
    m.sqrtg.resize(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        Vec x = grid.point(i);
        Mat g = chart.metric_fn(chart.wrap(x));
        m.g[i] = g;
        m.ginv[i] = g.inverse();
        m.sqrtg[i] = std::sqrt(g.determinant());
    });
    return m;
}

SampledOneForm exterior_d(const SampledField& u)
{
    u.validate();
    require_resolution(u.grid);
    SampledOneForm a;
    a.chart = u.chart;
    a.grid = u.grid;
    a.comp.resize(static_cast<std::size_t>(u.grid.dim));
    for (int k = 0; k < u.grid.dim; ++k)
        diff_axis(u.grid, u.values, k, a.comp[static_cast<std::size_t>(k)]);
    return a;
}

SampledField codifferential(const SampledOneForm& v)
{
    require_resolution(v.grid);
    if (!v.chart)
        throw ShapeError("codifferential needs a chart");
    const Grid& g = v.grid;
    auto gm = GridMetric::build(*v.chart, g);
    int d = g.dim;
    SampledField out{v.chart, g, std::vector<cplx>(g.size())};
    std::vector<cplx> flux(g.size()), dflux;
    for (int j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            cplx s = 0;
            for (int k = 0; k < d; ++k)
                s += gm.ginv[i](j, k) * v.comp[static_cast<std::size_t>(k)][i];
            flux[i] = gm.sqrtg[i] * s;
        }
        diff_axis(g, flux, j, dflux);
        for (std::size_t i = 0; i < g.size(); ++i)
            out.values[i] -= dflux[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        out.values[i] /= gm.sqrtg[i];
    return out;
}

SampledField laplacian(const SampledField& u)
{
    SampledField r = codifferential(exterior_d(u));
    for (auto& z : r.values)
        z = -z;
    return r;
}

SampledField pairing(const SampledOneForm& a, const SampledOneForm& b)
{
    require_same(a.grid, b.grid);
    auto gm = GridMetric::build(*a.chart, a.grid);
    SampledField out{a.chart, a.grid, std::vector<cplx>(a.grid.size())};
    int d = a.dim();
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
        cplx s = 0;
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                s += gm.ginv[i](j, k) * a.comp[static_cast<std::size_t>(j)][i] * b.comp[static_cast<std::size_t>(k)][i];
        out.values[i] = s;
    }
    return out;
}

SampledOneForm scale(const SampledOneForm& a, const SampledField& u)
{
    require_same(a.grid, u.grid);
    SampledOneForm r = a;
    r.boundary_tangential_zero = false;
    for (auto& c : r.comp)
        for (std::size_t i = 0; i < c.size(); ++i)
            c[i] *= u.values[i];
    return r;
}

bool boundary_tangential_zero(const SampledOneForm& a, double tol, double band)
{
    if (!a.chart || a.chart->dim != 2 || !a.chart->boundary_fn)
        return true;
    const auto& chart = *a.chart;
    double h = 0;
    for (int k = 0; k < a.grid.dim; ++k)
        h = std::max(h, a.grid.step(k));
    if (band < 0)
        band = 0.5 * h;
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
        Vec x = a.grid.point(i);
        if (std::abs(chart.boundary_fn(x)) > band)
            continue;
        BoundaryFrame f = boundary_frame(chart, x);
        cplx t = 0;
        for (int k = 0; k < 2; ++k)
            t += a.comp[static_cast<std::size_t>(k)][i] * f.tangent(k);
        if (std::abs(t) > tol)
            return false;
    }
    return true;
}

SampledField magnetic_schrodinger_apply(const SampledField& u, const SampledOneForm& A, const SampledField& q)
{
    require_same(u.grid, A.grid);
    require_same(u.grid, q.grid);
    u.validate();
    auto du = exterior_d(u);
    auto lap_part = codifferential(du); // -Delta u
    auto dAu = codifferential(scale(A, u));
    auto Adu = pairing(A, du);
    auto AA = pairing(A, A);
    SampledField out{u.chart, u.grid, std::vector<cplx>(u.grid.size())};
    for (std::size_t i = 0; i < u.grid.size(); ++i)
        out.values[i] = lap_part.values[i] + I * dAu.values[i] - I * Adu.values[i] +
                        (AA.values[i] + q.values[i]) * u.values[i];
    return out;
}

SampledField conjugated_apply(const SampledField& u, const SampledOneForm& A, const SampledField& q,
                              const SemiclassicalParams& params, const ConjugationWeight& w)
{
    if (!(params.h > 0))
        throw ParameterError("conjugation needs h > 0");
    const Grid& g = u.grid;
    // d rho = rho'(x1) dx1
    std::function<cplx(double)> rho_p;
    if (w.kind == WeightKind::complex_s) {
        cplx s = params.s();
        rho_p = [s](double) { return s; };
    } else {
        double h = params.h, eps = w.epsilon;
        rho_p = [h, eps](double x1) { return cplx(eps > 0 ? (1 + (h / eps) * x1) / h : 1 / h, 0); };
    }
    SampledOneForm drho = zero_form(u.chart, g);
    for (std::size_t i = 0; i < g.size(); ++i)
        drho.comp[0][i] = rho_p(g.point(i)(0));
    auto lap_rho = codifferential(drho); // -Delta rho
    auto Lu = magnetic_schrodinger_apply(u, A, q);
    auto du = exterior_d(u);
    auto rdu = pairing(drho, du);
    auto rr = pairing(drho, drho);
    auto Ar = pairing(A, drho);
    SampledField out{u.chart, g, std::vector<cplx>(g.size())};
    double scale_f = w.h2_scaled ? params.h * params.h : 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        cplx v = Lu.values[i] + 2.0 * rdu.values[i] - lap_rho.values[i] * u.values[i] - rr.values[i] * u.values[i] +
                 2.0 * I * Ar.values[i] * u.values[i];
        out.values[i] = scale_f * v;
    }
    return out;
}

double mollifier_profile(double r)
{
    if (r >= 1)
        return 0;
    double t = 1 - r * r;
    return t * t * t * t;
}

SampledField mollify(const SampledField& u, double tau)
{
    const Grid& g = u.grid;
    std::array<int, 3> rad{0, 0, 0};
    for (int k = 0; k < g.dim; ++k) {
        double h = g.step(k);
        if (!(tau > 2 * h))
            throw ResolutionError("mollification length below two grid steps");
        rad[static_cast<std::size_t>(k)] = static_cast<int>(std::ceil(tau / h));
    }
    double hx = g.step(0), hy = g.dim > 1 ? g.step(1) : 0, hz = g.dim > 2 ? g.step(2) : 0;
    double mass = 0;
    for (int a = -rad[0]; a <= rad[0]; ++a)
        for (int b = -rad[1]; b <= rad[1]; ++b)
            for (int c = -rad[2]; c <= rad[2]; ++c) {
                double r = std::sqrt(a * a * hx * hx + b * b * hy * hy + c * c * hz * hz) / tau;
                mass += mollifier_profile(r);
            }
    auto kernel = [&](int a, int b, int c) {
        double r = std::sqrt(a * a * hx * hx + b * b * hy * hy + c * c * hz * hz) / tau;
        return cplx(mollifier_profile(r) / mass, 0);
    };
    SampledField out{u.chart, g, detail::fft_convolve(g, u.values, rad, kernel)};
    return out;
}

SampledOneForm mollify(const SampledOneForm& A, double tau)
{
    SampledOneForm out = A;
    out.boundary_tangential_zero = false;
    for (std::size_t k = 0; k < A.comp.size(); ++k) {
        SampledField c{A.chart, A.grid, A.comp[k]};
        out.comp[k] = mollify(c, tau).values;
    }
    return out;
}

MetricChart divide_conformal(const MetricChart& chart)
{
    MetricChart p = chart;
    auto base = std::make_shared<MetricChart>(chart);
    p.id = chart.id + "/c";
    p.metric_fn = [base](const Vec& x) { return Mat(base->metric_fn(x) / base->conformal_factor(x)); };
    p.conformal_factor = [](const Vec&) { return 1.0; };
    p.christoffel_fn = nullptr;
    return p;
}

ConformalReduction conformal_reduce(const SampledOneForm& A, const SampledField& q)
{
    require_same(A.grid, q.grid);
    const auto& chart = *q.chart;
    const Grid& g = q.grid;
    double n = chart.dim;
    double e = (n - 2) / 4;
    std::vector<double> c(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        c[i] = chart.conformal_factor(g.point(i));
        if (!(c[i] > 1e-10))
            throw ConformalError("conformal factor not bounded below");
    }
    SampledField w{q.chart, g, std::vector<cplx>(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i)
        w.values[i] = std::pow(c[i], -e);
    auto lw = laplacian(w);
    ConformalReduction r;
    r.A = A;
    r.product_chart = std::make_shared<MetricChart>(divide_conformal(chart));
    r.A.chart = r.product_chart;
    r.q_tilde = SampledField{r.product_chart, g, std::vector<cplx>(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i)
        r.q_tilde.values[i] = c[i] * (q.values[i] - std::pow(c[i], e) * lw.values[i]);
    return r;
}

QuadratureNodes grid_nodes(const MetricChart& chart, const Grid& grid)
{
    QuadratureNodes q;
    auto w = grid.quadrature_weights();
    auto gm = GridMetric::build(chart, grid);
    q.weight.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        q.weight[i] = w[i] * gm.sqrtg[i];
    q.ginv = std::move(gm.ginv);
    return q;
}

double l2_norm(const SampledField& u)
{
    auto q = grid_nodes(*u.chart, u.grid);
    double s = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weight[i] * std::norm(u.values[i]);
    return std::sqrt(s);
}

cplx inner(const SampledField& u, const SampledField& v)
{
    require_same(u.grid, v.grid);
    auto q = grid_nodes(*u.chart, u.grid);
    cplx s = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weight[i] * u.values[i] * v.values[i];
    return s;
}

SclNorms norm_scl(const SampledField& u, const SemiclassicalParams& p)
{
    auto q = grid_nodes(*u.chart, u.grid);
    auto du = exterior_d(u);
    double l2 = 0, grad = 0;
    int d = du.dim();
    for (std::size_t i = 0; i < q.size(); ++i) {
        l2 += q.weight[i] * std::norm(u.values[i]);
        double gs = 0;
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                gs += q.ginv[i](j, k) *
                      std::real(du.comp[static_cast<std::size_t>(j)][i] * std::conj(du.comp[static_cast<std::size_t>(k)][i]));
        grad += q.weight[i] * gs;
    }
    SclNorms r;
    r.l2 = std::sqrt(l2);
    r.h1_scl = std::sqrt(l2 + p.h * p.h * grad);
    r.smooth_l2 = r.l2;
    r.h_minus1_scl_bound = r.l2;
    return r;
}

SclNorms norm_scl(const QuadratureNodes& nodes, const std::vector<TermGroup>& groups, const SemiclassicalParams& p)
{
    std::size_t n = nodes.size();
    std::vector<cplx> w0(n, 0.0);
    std::vector<CVec> w1;
    SclNorms r;
    auto cov_norm2 = [&](std::size_t i, const CVec& v) {
        if (nodes.ginv.empty())
            return v.squaredNorm();
        double s = 0;
        for (int j = 0; j < v.size(); ++j)
            for (int k = 0; k < v.size(); ++k)
                s += nodes.ginv[i](j, k) * std::real(v(j) * std::conj(v(k)));
        return s;
    };
    for (const auto& gr : groups) {
        if (gr.tag == TermTag::untagged)
            throw ContractError("term group '" + gr.name + "' is untagged; split it into smooth and divergence parts");
        double s = 0;
        if (gr.tag == TermTag::smooth) {
            if (!gr.covector.empty() || gr.scalar.size() != n)
                throw ContractError("smooth group '" + gr.name + "' must carry scalar values only");
            for (std::size_t i = 0; i < n; ++i) {
                w0[i] += gr.scalar[i];
                s += nodes.weight[i] * std::norm(gr.scalar[i]);
            }
        } else {
            if (!gr.scalar.empty() || gr.covector.size() != n)
                throw ContractError("divergence group '" + gr.name + "' must carry covector values only");
            if (w1.empty())
                w1.assign(n, CVec::Zero(gr.covector[0].size()));
            for (std::size_t i = 0; i < n; ++i) {
                w1[i] += gr.covector[i];
                s += nodes.weight[i] * cov_norm2(i, gr.covector[i]);
            }
        }
        r.groups.emplace_back(gr.name, std::sqrt(s));
    }
    double a = 0, b = 0;
    for (std::size_t i = 0; i < n; ++i) {
        a += nodes.weight[i] * std::norm(w0[i]);
        if (!w1.empty())
            b += nodes.weight[i] * cov_norm2(i, w1[i]);
    }
    r.smooth_l2 = std::sqrt(a);
    r.divergence_l2 = std::sqrt(b);
    r.h_minus1_scl_bound = r.smooth_l2 + r.divergence_l2 / p.h;
    r.l2 = std::numeric_limits<double>::quiet_NaN();
    r.h1_scl = std::numeric_limits<double>::quiet_NaN();
    return r;
}

} // namespace geobeam
