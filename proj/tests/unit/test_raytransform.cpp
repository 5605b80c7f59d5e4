#include "doctest.h"

#include "geobeam/raytransform.hpp"

using namespace geobeam;

TEST_CASE("forward transform of constants and constant one-forms")
{
    auto disk = euclidean_disk(1.0);
    auto fan = boundary_fan(disk, 8, 6);
    REQUIRE(!fan.empty());
    auto one = forward(disk, [](const Vec&) { return cplx(1); }, nullptr, fan, 0.0);
    double lam = 0.7;
    auto att = forward(disk, [](const Vec&) { return cplx(1); }, nullptr, fan, lam);
    CVec c(2);
    c << cplx(0.3, 0.1), cplx(-1.2, 0);
    auto lin = forward(disk, nullptr, [&](const Vec&) { return c; }, fan, 0.0);
    for (std::size_t k = 0; k < fan.size(); ++k) {
        double L = fan[k].exit_time;
        CHECK(std::abs(one.values[k] - L) < 1e-9);
        CHECK(std::abs(att.values[k] - (1 - std::exp(-lam * L)) / lam) < 1e-9);
        cplx e = (c(0) * fan[k].v0(0) + c(1) * fan[k].v0(1)) * L;
        CHECK(std::abs(lin.values[k] - e) < 1e-9);
    }
}

TEST_CASE("exact one-forms vanishing potentials are invisible without attenuation")
{
    auto disk = euclidean_disk(1.0);
    auto fan = boundary_fan(disk, 10, 10);
    // p = (1 - |x|^2) x1
    auto dp = [](const Vec& x) {
        CVec g(2);
        double w = 1 - x.squaredNorm();
        g << w - 2 * x(0) * x(0), -2 * x(0) * x(1);
        return g;
    };
    auto m = forward(disk, nullptr, dp, fan, 0.0);
    double worst = 0;
    for (auto v : m.values)
        worst = std::max(worst, std::abs(v));
    CHECK(worst < 1e-9);
}

TEST_CASE("gauge projection removes gradients of potentials vanishing on the boundary")
{
    auto c = std::make_shared<const MetricChart>(euclidean_disk(1.0));
    Grid g = Grid::make({-1, -1}, {1, 1}, {61, 61});
    auto a = sample_form(c, g, [](const Vec& x) {
        CVec v(2);
        // d[(1 - |x|^2) sin(x1) x2]
        double w = 1 - x.squaredNorm(), p = std::sin(x(0)) * x(1);
        v << cplx(-2 * x(0) * p + w * std::cos(x(0)) * x(1), 0), cplx(-2 * x(1) * p + w * std::sin(x(0)), 0);
        return v;
    });
    auto gp = gauge_project(a);
    double curl = 0, sol = 0, ref = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!c->inside(g.point(i), -0.1))
            continue;
        curl = std::max(curl, std::abs(gp.curl[i]));
        sol = std::max(sol, std::abs(gp.solenoidal.comp[0][i]) + std::abs(gp.solenoidal.comp[1][i]));
        ref = std::max(ref, std::abs(a.comp[0][i]) + std::abs(a.comp[1][i]));
    }
    CHECK(curl < 1e-3);
    CHECK(sol < 1e-2 * ref);
}

TEST_CASE("inversion recovers a smooth function and rejects bad options")
{
    auto c = std::make_shared<const MetricChart>(euclidean_disk(1.0));
    auto fan = boundary_fan(*c, 16, 16);
    auto f = [](const Vec& x) { return cplx(1 + 0.5 * x(0) - x(1) * x(1)); };
    auto m = forward(*c, f, nullptr, fan, 0.3);
    Grid g = Grid::make({-1, -1}, {1, 1}, {41, 41});
    InversionOptions io;
    io.basis = 6;
    auto inv = invert(m, c, g, io);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        if (!c->inside(x))
            continue;
        num += std::norm(inv.f.values[i] - f(x));
        den += std::norm(f(x));
    }
    CHECK(std::sqrt(num / den) < 1e-2);
    io.basis = 0;
    CHECK_THROWS_AS(invert(m, c, g, io), ConfigurationError);
    io.basis = 6;
    io.ridge = -1;
    CHECK_THROWS_AS(invert(m, c, g, io), ConfigurationError);
}

TEST_CASE("measurement validation")
{
    auto disk = euclidean_disk(1.0);
    auto fan = boundary_fan(disk, 4, 4);
    auto m = forward(disk, [](const Vec&) { return cplx(1); }, nullptr, fan, 0.0);
    m.values.pop_back();
    CHECK_THROWS_AS(m.validate(), ShapeError);
}
