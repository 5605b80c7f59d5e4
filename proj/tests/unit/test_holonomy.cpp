#include "doctest.h"

#include "geobeam/holonomy.hpp"

using namespace geobeam;

namespace {

SampledOneForm vortex(double kappa, double r0, double r1, int n = 201)
{
    auto ann = std::make_shared<const MetricChart>(planar_annulus(r0, r1));
    double b = r1 + 0.1;
    Grid g = Grid::make({-b, -b}, {b, b}, {n, n});
    return sample_form(ann, g, [=](const Vec& x) {
        CVec a = CVec::Zero(2);
        double r2 = x.squaredNorm();
        if (r2 < 0.25 * r0 * r0)
            return a;
        a << -kappa * x(1) / r2, kappa * x(0) / r2;
        return a;
    });
}

} // namespace

TEST_CASE("vortex potential has holonomy exp(-2 pi i kappa)")
{
    for (double kappa : {0.0, 0.25, 1.0, 1.5, 3.0}) {
        auto A = vortex(kappa, 0.5, 1.5);
        auto rep = loop_holonomy(A, {circle_loop(Vec::Zero(2), 1.0)});
        const auto& h = rep.loops[0];
        CHECK(std::abs(h.integral - 2 * pi * kappa) < 1e-6);
        CHECK(std::abs(h.P - std::exp(-2.0 * pi * I * kappa)) < 1e-6);
        CHECK(h.trivial == (kappa == std::round(kappa)));
    }
}

TEST_CASE("transport by RK4 matches the closed form")
{
    auto A = vortex(0.7, 0.5, 1.5);
    auto tr = parallel_transport(A, circle_loop(Vec::Zero(2), 0.9), cplx(0.6, 0.8));
    CHECK(tr.discrepancy < 1e-8);
    CHECK(std::abs(tr.s_closed - std::exp(-I * tr.integral) * cplx(0.6, 0.8)) < 1e-12);
}

TEST_CASE("curve helpers")
{
    auto c = circle_loop(Vec::Zero(2), 1.0, 200);
    CHECK(c.closed);
    auto r = reverse(c);
    auto A = vortex(1.3, 0.5, 1.5);
    CHECK(std::abs(line_integral(A, r) + line_integral(A, c)) < 1e-9);
    auto half = make_curve(
        "half", [](double t) { Vec x(2); x << std::cos(t), std::sin(t); return x; },
        [](double t) { Vec v(2); v << -std::sin(t), std::cos(t); return v; }, 0, pi, 100, false);
    CHECK_THROWS_AS(loop_holonomy(A, {half}), ShapeError);
    Curve open = half;
    open.closed = true;
    CHECK_THROWS_AS(open.validate(), ShapeError);
}

TEST_CASE("gauge of an exact potential")
{
    auto ann = std::make_shared<const MetricChart>(planar_annulus(0.5, 1.5));
    Grid g = Grid::make({-1.6, -1.6}, {1.6, 1.6}, {161, 161});
    auto phi = [](const Vec& x) { return 0.4 * x(0) * x(1) + std::sin(x(0)); };
    auto A = sample_form(ann, g, [](const Vec& x) {
        CVec a(2);
        a << 0.4 * x(1) + std::cos(x(0)), 0.4 * x(0);
        return a;
    });
    Vec base(2);
    base << 1.5, 0.0;
    GaugeOptions opt;
    opt.loops = {circle_loop(Vec::Zero(2), 1.0)};
    auto res = build_gauge(A, {base}, opt);
    CHECK(res.tree_discrepancy < 1e-6);
    CHECK(res.certificate < 1e-3);
    double e = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        if (!ann->inside(x, -0.05))
            continue;
        e = std::max(e, std::abs(res.F.values[i] - std::exp(I * (phi(x) - phi(base)))));
    }
    CHECK(e < 1e-3);

    auto V = vortex(0.5, 0.5, 1.5);
    CHECK_THROWS_AS(build_gauge(V, {base}, opt), GaugeError);
}
