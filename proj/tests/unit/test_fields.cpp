#include "doctest.h"

#include "geobeam/fields.hpp"

#include <random>

using namespace geobeam;

namespace {

ChartPtr box2(double a = 1.0)
{
    return std::make_shared<MetricChart>(euclidean_box(Vec::Constant(2, -a), Vec::Constant(2, a)));
}

double max_abs_interior(const Grid& g, const std::vector<cplx>& v, int margin,
                        const std::function<cplx(const Vec&)>& exact)
{
    double m = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto mm = g.multi(i);
        bool in = true;
        for (int k = 0; k < g.dim; ++k)
            in = in && mm[static_cast<std::size_t>(k)] >= margin &&
                 mm[static_cast<std::size_t>(k)] < g.n[static_cast<std::size_t>(k)] - margin;
        if (in)
            m = std::max(m, std::abs(v[i] - exact(g.point(i))));
    }
    return m;
}

double bump(double r2)
{
    return r2 < 1 ? std::exp(1 - 1 / (1 - r2)) : 0.0;
}

} // namespace

TEST_CASE("exterior derivative of constants, linear and trigonometric functions")
{
    auto c = box2();
    Grid g = Grid::make({-1, -1}, {1, 1}, {128, 128});
    auto one = exterior_d(sample_field(c, g, [](const Vec&) { return cplx(1); }));
    auto lin = exterior_d(sample_field(c, g, [](const Vec& x) { return cplx(x(0)); }));
    double z = 0, l = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        z = std::max({z, std::abs(one.comp[0][i]), std::abs(one.comp[1][i])});
        l = std::max({l, std::abs(lin.comp[0][i] - 1.0), std::abs(lin.comp[1][i])});
    }
    CHECK(z < 1e-12);
    CHECK(l < 1e-11);

    auto tr = exterior_d(sample_field(c, g, [](const Vec& x) { return cplx(std::sin(x(0)) * std::cos(x(1))); }));
    double e = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        e = std::max({e, std::abs(tr.comp[0][i] - std::cos(x(0)) * std::cos(x(1))),
                      std::abs(tr.comp[1][i] + std::sin(x(0)) * std::sin(x(1)))});
    }
    CHECK(e < 1e-6);

    Grid tiny = Grid::make({-1, -1}, {1, 1}, {3, 3});
    CHECK_THROWS_AS(exterior_d(zero_field(c, tiny)), ResolutionError);
}

TEST_CASE("codifferential on euclidean and polar charts")
{
    auto c = box2();
    Grid g = Grid::make({-1, -1}, {1, 1}, {41, 41});
    auto v = sample_form(c, g, [](const Vec& x) {
        CVec a(2);
        a << x(0), 0.0;
        return a;
    });
    auto d = codifferential(v);
    CHECK(max_abs_interior(g, d.values, 0, [](const Vec&) { return cplx(-1); }) < 1e-10);

    auto polar = std::make_shared<MetricChart>(polar_plane(0.5, 2.0, -1.0, 1.0));
    Grid gp = Grid::make({0.5, -1}, {2.0, 1}, {61, 41});
    auto dr = sample_form(polar, gp, [](const Vec&) {
        CVec a(2);
        a << 1.0, 0.0;
        return a;
    });
    auto dd = codifferential(dr);
    CHECK(max_abs_interior(gp, dd.values, 0, [](const Vec& x) { return cplx(-1 / x(0)); }) < 1e-6);
}

TEST_CASE("d and d* are adjoint on compactly supported fields")
{
    auto c = std::make_shared<MetricChart>(conformal_disk(1.0, 0.3));
    Grid g = Grid::make({-1, -1}, {1, 1}, {161, 161});
    auto u = sample_field(c, g, [](const Vec& x) { return cplx(bump(x.squaredNorm() / 0.49), 0.3 * x(0)); });
    auto v = sample_form(c, g, [](const Vec& x) {
        double b = bump((x - Vec::Constant(2, 0.1)).squaredNorm() / 0.36);
        CVec a(2);
        a << cplx(b * x(1), b), cplx(-b, b * x(0) * x(0));
        return a;
    });
    auto du = exterior_d(u);
    auto dv = codifferential(v);
    auto nodes = grid_nodes(*c, g);
    cplx lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        cplx p = 0;
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                p += nodes.ginv[i](j, k) * du.comp[static_cast<std::size_t>(j)][i] *
                     std::conj(v.comp[static_cast<std::size_t>(k)][i]);
        lhs += nodes.weight[i] * p;
        rhs += nodes.weight[i] * u.values[i] * std::conj(dv.values[i]);
    }
    CHECK(std::abs(lhs - rhs) < 1e-5);
}

TEST_CASE("magnetic schrodinger operator on simple inputs and under gauge changes")
{
    auto c = box2();
    Grid g = Grid::make({-1, -1}, {1, 1}, {41, 41});
    auto A0 = zero_form(c, g);
    auto q0 = zero_field(c, g);
    auto Lx2 = magnetic_schrodinger_apply(sample_field(c, g, [](const Vec& x) { return cplx(x(0) * x(0)); }), A0, q0);
    CHECK(max_abs_interior(g, Lx2.values, 0, [](const Vec&) { return cplx(-2); }) < 1e-9);
    auto qc = sample_field(c, g, [](const Vec&) { return cplx(1.7, -0.2); });
    auto Lq = magnetic_schrodinger_apply(sample_field(c, g, [](const Vec&) { return cplx(1); }), A0, qc);
    CHECK(max_abs_interior(g, Lq.values, 0, [](const Vec&) { return cplx(1.7, -0.2); }) < 1e-12);

    Grid gf = Grid::make({-1, -1}, {1, 1}, {161, 161});
    auto cc = std::make_shared<MetricChart>(conformal_disk(1.0, 0.2));
    auto phi = [](const Vec& x) { return 0.8 * std::sin(x(0) + 0.5 * x(1)); };
    auto A = sample_form(cc, gf, [](const Vec& x) {
        CVec a(2);
        a << cplx(0.3 + x(1), 0.1), cplx(-0.2 * x(0), 0);
        return a;
    });
    auto Ag = sample_form(cc, gf, [&](const Vec& x) {
        CVec a(2);
        double cs = 0.8 * std::cos(x(0) + 0.5 * x(1));
        a << cplx(0.3 + x(1) + cs, 0.1), cplx(-0.2 * x(0) + 0.5 * cs, 0);
        return a;
    });
    auto q = sample_field(cc, gf, [](const Vec& x) { return cplx(1 + x(0) * x(1)); });
    auto ufn = [](const Vec& x) { return cplx(std::exp(-x.squaredNorm()), 0.2 * x(1)); };
    auto u = sample_field(cc, gf, ufn);
    auto eu = sample_field(cc, gf, [&](const Vec& x) { return std::exp(I * phi(x)) * ufn(x); });
    auto lhs = magnetic_schrodinger_apply(eu, A, q);
    auto rhs = magnetic_schrodinger_apply(u, Ag, q);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < gf.size(); ++i) {
        auto m = gf.multi(i);
        if (m[0] < 4 || m[1] < 4 || m[0] > 156 || m[1] > 156)
            continue;
        num = std::max(num, std::abs(std::exp(-I * phi(gf.point(i))) * lhs.values[i] - rhs.values[i]));
        den = std::max(den, std::abs(rhs.values[i]));
    }
    CHECK(num / den < 1e-5);
}

TEST_CASE("conjugated operator: constants, linear functions and the direct product")
{
    auto c = box2();
    Grid g = Grid::make({-1, -1}, {1, 1}, {41, 41});
    auto A0 = zero_form(c, g);
    auto q0 = zero_field(c, g);
    SemiclassicalParams p{0.1, 0.7};
    ConjugationWeight scaled{WeightKind::complex_s, 0, true};
    auto one = conjugated_apply(sample_field(c, g, [](const Vec&) { return cplx(1); }), A0, q0, p, scaled);
    cplx expect = -std::pow(1.0 + I * p.h * p.lambda, 2);
    CHECK(max_abs_interior(g, one.values, 0, [&](const Vec&) { return expect; }) < 1e-12);

    ConjugationWeight plain{WeightKind::complex_s, 0, false};
    cplx s = p.s();
    auto lin = conjugated_apply(sample_field(c, g, [](const Vec& x) { return cplx(x(0)); }), A0, q0, p, plain);
    CHECK(max_abs_interior(g, lin.values, 0, [&](const Vec& x) { return -s * s * x(0) + 2.0 * s; }) <
          1e-9 * std::abs(s * s));

    // constant A and q, cubic u: e^{s x1} L e^{-s x1} u in closed form
    SemiclassicalParams pm{0.25, 0.5};
    cplx sm = pm.s();
    CVec a(2);
    a << cplx(0.4, 0.1), cplx(-0.3, 0);
    cplx qv(0.9, 0.2);
    auto A = sample_form(c, g, [&](const Vec&) { return a; });
    auto q = sample_field(c, g, [&](const Vec&) { return qv; });
    auto u = [](const Vec& x) { return cplx(x(0) * x(0) * x(1) + 0.5 * x(1) * x(1), -x(0)); };
    auto out = conjugated_apply(sample_field(c, g, u), A, q, pm, plain);
    auto exact = [&](const Vec& x) {
        double x1 = x(0), x2 = x(1);
        cplx u1(2 * x1 * x2, -1), u2(x1 * x1 + x2, 0);
        cplx lap(2 * x2 + 1, 0);
        cplx val = u(x);
        return -(lap - 2.0 * sm * u1 + sm * sm * val) - 2.0 * I * (a(0) * u1 + a(1) * u2 - sm * a(0) * val) +
               (a(0) * a(0) + a(1) * a(1) + qv) * val;
    };
    double scale = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        scale = std::max(scale, std::abs(exact(g.point(i))));
    CHECK(max_abs_interior(g, out.values, 0, exact) / scale < 1e-8);

    // smooth u, grid conjugation e^{s x1} L (e^{-s x1} u) at mu = 4
    Grid gf = Grid::make({-1, -1}, {1, 1}, {201, 201});
    auto Af = sample_form(c, gf, [](const Vec& x) {
        CVec b(2);
        b << cplx(std::sin(x(1)), 0), cplx(0.2 * x(0), 0.1);
        return b;
    });
    auto qf = sample_field(c, gf, [](const Vec& x) { return cplx(1 + x(0)); });
    auto uf = [](const Vec& x) { return cplx(std::cos(x(0) + x(1)), 0.3 * x(0)); };
    auto expanded = conjugated_apply(sample_field(c, gf, uf), Af, qf, pm, plain);
    auto direct = magnetic_schrodinger_apply(sample_field(c, gf, [&](const Vec& x) { return std::exp(-sm * x(0)) * uf(x); }),
                                             Af, qf);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < gf.size(); ++i) {
        auto m = gf.multi(i);
        if (m[0] < 4 || m[1] < 4 || m[0] > 196 || m[1] > 196)
            continue;
        cplx d = std::exp(sm * gf.point(i)(0)) * direct.values[i];
        num = std::max(num, std::abs(d - expanded.values[i]));
        den = std::max(den, std::abs(d));
    }
    CHECK(num / den < 1e-6);

    SemiclassicalParams bad{0.0, 0.0};
    CHECK_THROWS_AS(conjugated_apply(zero_field(c, g), A0, q0, bad, plain), ParameterError);
}

TEST_CASE("mollification keeps constants and follows the expected rates")
{
    auto c = box2();
    Grid g = Grid::make({-1, -1}, {1, 1}, {201, 201});
    auto kink = [](const Vec& x) {
        double r = x.norm();
        return r < 0.6 ? 1.0 : std::max(0.0, 1 - (r - 0.6) / 0.3);
    };
    auto A = sample_form(c, g, [&](const Vec& x) {
        CVec a(2);
        a << kink(x), -0.5 * kink(x);
        return a;
    });
    double tau = 0.1;
    auto At = mollify(A, tau);
    double e = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.point(i).norm() < 0.6 - tau - 1e-9)
            e = std::max(e, std::abs(At.comp[0][i] - 1.0));
    CHECK(e < 1e-10);

    CHECK_THROWS_AS(mollify(A, 0.01), ResolutionError);

    std::vector<double> taus{0.1, 0.05, 0.025}, grad, lap, l2;
    for (double t : taus) {
        auto m = mollify(A, t);
        SampledField c0{c, g, m.comp[0]};
        auto d = exterior_d(c0);
        auto L = laplacian(c0);
        double gm = 0, lm = 0, diff = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            gm = std::max(gm, std::hypot(std::abs(d.comp[0][i]), std::abs(d.comp[1][i])));
            lm = std::max(lm, std::abs(L.values[i]));
            diff += std::norm(m.comp[0][i] - A.comp[0][i]) * g.cell_volume();
        }
        grad.push_back(t * gm);
        lap.push_back(t * t * lm);
        l2.push_back(std::sqrt(diff));
    }
    for (std::size_t k = 0; k < taus.size(); ++k) {
        CHECK(grad[k] <= 2 * grad[0]);
        CHECK(lap[k] <= 2 * lap[0]);
    }
    CHECK(l2[1] < l2[0]);
    CHECK(l2[2] < l2[1]);
}

TEST_CASE("conformal reduction")
{
    auto tr = euclidean_box(Vec::Constant(2, -1), Vec::Constant(2, 1));
    Grid g = Grid::make({-1, -1, -1}, {1, 1, 1}, {64, 64, 64});
    auto unit = std::make_shared<MetricChart>(admissible_chart(tr, -1, 1));
    auto A = sample_form(unit, g, [](const Vec& x) {
        CVec a(3);
        a << cplx(0.2 * x(1), 0), cplx(0.1, 0.05), cplx(-0.3 * x(0), 0);
        return a;
    });
    auto q = sample_field(unit, g, [](const Vec& x) { return cplx(1 + 0.5 * x(2)); });
    auto r1 = conformal_reduce(A, q);
    double e = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        e = std::max(e, std::abs(r1.q_tilde.values[i] - q.values[i]));
    CHECK(e < 1e-12);

    auto konst = std::make_shared<MetricChart>(admissible_chart(tr, -1, 1, [](const Vec&) { return 2.5; }));
    SampledField qk{konst, g, q.values};
    SampledOneForm Ak = A;
    Ak.chart = konst;
    auto rk = conformal_reduce(Ak, qk);
    e = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        e = std::max(e, std::abs(rk.q_tilde.values[i] - 2.5 * q.values[i]));
    CHECK(e < 1e-10);

    auto cf = [](const Vec& x) { return 1 + 0.2 * std::exp(-x.squaredNorm()); };
    auto conf = std::make_shared<MetricChart>(admissible_chart(tr, -1, 1, cf));
    SampledField qc{conf, g, q.values};
    SampledOneForm Ac = A;
    Ac.chart = conf;
    auto red = conformal_reduce(Ac, qc);
    double n = 3;
    auto wfn = [](const Vec& x) { return cplx(std::cos(x(0)) * std::exp(-0.5 * x.squaredNorm()), 0.2 * x(1)); };
    auto lhs_in = sample_field(conf, g, [&](const Vec& x) { return std::pow(cf(x), -(n - 2) / 4) * wfn(x); });
    auto lhs = magnetic_schrodinger_apply(lhs_in, Ac, qc);
    auto rhs = magnetic_schrodinger_apply(sample_field(red.product_chart, g, wfn), red.A, red.q_tilde);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto m = g.multi(i);
        if (m[0] < 4 || m[1] < 4 || m[2] < 4 || m[0] > 59 || m[1] > 59 || m[2] > 59)
            continue;
        cplx l = std::pow(cf(g.point(i)), (n + 2) / 4) * lhs.values[i];
        num = std::max(num, std::abs(l - rhs.values[i]));
        den = std::max(den, std::abs(rhs.values[i]));
    }
    CHECK(num / den < 1e-4);

    auto bad = std::make_shared<MetricChart>(admissible_chart(tr, -1, 1, [](const Vec&) { return 0.0; }));
    SampledField qb{bad, g, q.values};
    SampledOneForm Ab = A;
    Ab.chart = bad;
    CHECK_THROWS_AS(conformal_reduce(Ab, qb), ConformalError);
}

TEST_CASE("semiclassical norms and the certified dual bound")
{
    auto c = box2(0.5);
    Grid g = Grid::make({-0.5, -0.5}, {0.5, 0.5}, {81, 81});
    SemiclassicalParams p{0.05, 0};
    auto z = norm_scl(zero_field(c, g), p);
    CHECK(z.l2 == 0);
    CHECK(z.h1_scl == 0);
    auto o = norm_scl(sample_field(c, g, [](const Vec&) { return cplx(1); }), p);
    CHECK(o.l2 == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(o.h1_scl == doctest::Approx(1.0).epsilon(1e-10));

    auto nodes = grid_nodes(*c, g);
    TermGroup smooth{"smooth", TermTag::smooth, {}, {}};
    TermGroup div{"div", TermTag::divergence, {}, {}};
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        smooth.scalar.push_back(cplx(std::cos(3 * x(0)), x(1)));
        double b = bump(x.squaredNorm() / 0.16);
        CVec w(2);
        w << cplx(b, 0.5 * b), cplx(-b * x(0), 0);
        div.covector.push_back(w);
    }
    auto bound = norm_scl(nodes, {smooth, div}, p).h_minus1_scl_bound;

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-3, 3);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        double a = U(rng), b = U(rng), cph = U(rng), k = std::abs(U(rng)) * 10;
        auto psi = [&](const Vec& x) { return cplx(std::sin(k * x(0) + a * x(1) + cph), std::cos(b * x(1))); };
        auto dpsi = [&](const Vec& x) {
            CVec d(2);
            double cs = std::cos(k * x(0) + a * x(1) + cph);
            d << cplx(k * cs, 0), cplx(a * cs, -b * std::sin(b * x(1)));
            return d;
        };
        cplx pairing = 0;
        double n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            Vec x = g.point(i);
            cplx ps = psi(x);
            CVec dp = dpsi(x);
            // <w0 + d* w1, psi> = int w0 psi + <w1, d psi>; w1 vanishes near the edge
            pairing += nodes.weight[i] * (smooth.scalar[i] * ps + (div.covector[i].array() * dp.array()).sum());
            n0 += nodes.weight[i] * std::norm(ps);
            n1 += nodes.weight[i] * dp.squaredNorm();
        }
        double q = std::abs(pairing) / std::sqrt(n0 + p.h * p.h * n1);
        worst = std::max(worst, q / bound);
    }
    CHECK(worst <= 1.0);

    TermGroup untagged{"raw", TermTag::untagged, smooth.scalar, {}};
    CHECK_THROWS_AS(norm_scl(nodes, {untagged}, p), ContractError);
}
