#include "doctest.h"

#include "geobeam/cgo.hpp"

using namespace geobeam;

namespace {

struct Cylinder {
    MetricChart M = admissible_chart(euclidean_disk(1.0), -1, 1);
    MetricChart D = euclidean_disk(4.0);
    ChartPtr Mc = std::make_shared<const MetricChart>(M);
    Grid g = Grid::make({-1.6, -1.6, -1.6}, {1.6, 1.6, 1.6}, {41, 41, 41});
    Vec omega = (Vec(2) << -2.0, 0.0).finished();
};

WkbOptions small()
{
    WkbOptions o;
    o.n_x1 = o.n_r = 65;
    o.n_theta = 17;
    return o;
}

} // namespace

TEST_CASE("WKB construction with a smooth potential")
{
    Cylinder c;
    auto A = sample_form(c.Mc, c.g, [](const Vec& x) {
        CVec a(3);
        double b = std::exp(-2 * x.squaredNorm());
        a << 0.3 * b, -0.2 * b, 0.1 * b;
        return a;
    });
    auto q = sample_field(c.Mc, c.g, [](const Vec& x) { return cplx(1 + 0.2 * x(1)); });
    SemiclassicalParams p{0.1, 0.5};
    auto sol = build_wkb(c.M, c.D, c.omega, A, q, p, small());
    CHECK(sol.eikonal_error < 1e-6);
    CHECK(sol.seed_defect < 1e-8);
    CHECK(sol.transport_residual < 1e-2);
    CHECK(sol.tau == doctest::Approx(std::pow(0.1, 0.4)));
    auto rep = wkb_residual(sol, A, q);
    CHECK(rep.bound > 0);
    CHECK(std::isfinite(rep.bound));
    CHECK_THROWS_AS(rep.group("no such group"), ContractError);

    auto other = zero_form(c.Mc, c.g);
    CHECK_THROWS_AS(wkb_residual(sol, other, q), ContractError);
}

TEST_CASE("WKB geometry checks")
{
    Cylinder c;
    auto A = zero_form(c.Mc, c.g);
    auto q = zero_field(c.Mc, c.g);
    SemiclassicalParams p{0.1, 0.0};
    Vec inside = Vec::Zero(2);
    CHECK_THROWS_AS(build_wkb(c.M, c.D, inside, A, q, p, small()), GeometryError);
    Vec far(2);
    far << 10, 0;
    CHECK_THROWS_AS(build_wkb(c.M, c.D, far, A, q, p, small()), GeometryError);
    auto o = small();
    o.sigma = 0.5;
    CHECK_THROWS_AS(build_wkb(c.M, c.D, c.omega, A, q, p, o), ParameterError);
}
