#include "doctest.h"

#include "geobeam/dbar.hpp"

using namespace geobeam;

namespace {

double bump(double r2)
{
    return r2 < 1 ? std::exp(1 - 1 / (1 - r2)) : 0.0;
}

double rel_interior_residual(const PlaneField& g, const PlaneField& u, CauchyKind which)
{
    auto du = apply_wirtinger(u.grid, u.values, which);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.grid.size(); ++i) {
        auto m = g.grid.multi(i);
        if (m[0] < 3 || m[1] < 3 || m[0] >= g.grid.n[0] - 3 || m[1] >= g.grid.n[1] - 3)
            continue;
        num += std::norm(du[i] - g.values[i]);
        den += std::norm(g.values[i]);
    }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("cauchy transform of zero data")
{
    Grid G = Grid::make({-1, -1}, {1, 1}, {33, 33});
    auto g = PlaneField::sample(G, {-0.5, 0.5, -0.5, 0.5}, [](double, double) { return cplx(0); });
    auto u = cauchy_solve(g, CauchyKind::dbar);
    for (auto v : u.values)
        CHECK(v == cplx(0));
}

TEST_CASE("dbar and d solves of a smooth bump at 256^2")
{
    Grid G = Grid::make({-1, -1}, {1, 1}, {256, 256});
    auto g = PlaneField::sample(G, {-0.7, 0.7, -0.7, 0.7}, [](double x, double y) {
        return cplx(bump((x * x + y * y) / 0.49), 0.5 * bump(((x - 0.1) * (x - 0.1) + y * y) / 0.25));
    });
    for (auto which : {CauchyKind::dbar, CauchyKind::d}) {
        auto u = cauchy_solve(g, which);
        CHECK(rel_interior_residual(g, u, which) < 1e-3);
    }
}

TEST_CASE("direct and fft paths agree and are linear")
{
    Grid G = Grid::make({-1, -1}, {1, 1}, {65, 65});
    auto g1 = PlaneField::sample(G, {-0.6, 0.6, -0.6, 0.6}, [](double x, double y) { return cplx(bump((x * x + y * y) / 0.36)); });
    auto g2 = PlaneField::sample(G, {-0.6, 0.6, -0.6, 0.6},
                                 [](double x, double y) { return cplx(0, x * bump((x * x + y * y) / 0.36)); });
    PlaneField sum = g1;
    for (std::size_t i = 0; i < sum.values.size(); ++i)
        sum.values[i] += g2.values[i];
    auto a = cauchy_solve(g1, CauchyKind::dbar, CauchyMethod::direct);
    auto b = cauchy_solve(g2, CauchyKind::dbar, CauchyMethod::direct);
    auto s = cauchy_solve(sum, CauchyKind::dbar, CauchyMethod::direct);
    auto f = cauchy_solve(sum, CauchyKind::dbar, CauchyMethod::fft);
    double lin = 0, path = 0, scale = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        lin = std::max(lin, std::abs(s.values[i] - a.values[i] - b.values[i]));
        path = std::max(path, std::abs(s.values[i] - f.values[i]));
        scale = std::max(scale, std::abs(s.values[i]));
    }
    CHECK(lin < 1e-12);
    CHECK(path < 1e-10 * scale);
}

TEST_CASE("residual decreases under refinement")
{
    double prev = 1e300;
    for (int n : {33, 65, 129}) {
        Grid G = Grid::make({-1, -1}, {1, 1}, {n, n});
        auto g = PlaneField::sample(G, {-0.7, 0.7, -0.7, 0.7}, [](double x, double y) { return cplx(bump((x * x + y * y) / 0.49)); });
        double r = rel_interior_residual(g, cauchy_solve(g, CauchyKind::dbar), CauchyKind::dbar);
        CHECK(r < 0.5 * prev);
        prev = r;
    }
}

TEST_CASE("support touching the grid edge is rejected")
{
    Grid G = Grid::make({-1, -1}, {1, 1}, {33, 33});
    auto g = PlaneField::sample(G, {-1, 1, -1, 1}, [](double, double) { return cplx(1); });
    CHECK_THROWS_AS(cauchy_solve(g, CauchyKind::dbar), MarginError);
}
