#include "doctest.h"

#include "geobeam/boundary.hpp"

using namespace geobeam;

TEST_CASE("probe profile is normalised and the flat half-space is in normal form")
{
    for (int n : {2, 3}) {
        auto hs = half_space(n, 0.3, 0.3);
        Vec tau = Vec::Zero(n - 1);
        tau(0) = 1;
        auto pr = make_probe(hs.chart, tau, 1e-3);
        CHECK_NOTHROW(pr.validate());
        CHECK(eta_normalization(pr) == doctest::Approx(1.0).epsilon(1e-10));
        Vec y = Vec::Zero(n);
        y(n - 1) = 0.01;
        // v0 decays like e^{-x_n / lambda} away from the boundary
        CHECK(std::abs(pr.v0(y)) < 1e-3 * std::abs(pr.v0(Vec::Zero(n))));
    }
    auto hs = half_space(2, 0.3, 0.3);
    CHECK_THROWS_AS(make_probe(hs.chart, Vec::Constant(1, 2.0), 1e-3).validate(), ParameterError);
    CHECK_THROWS_AS(make_probe(hs.chart, Vec::Constant(2, 1.0), 1e-3), ShapeError);
    CHECK_THROWS_AS(half_space(4, 0.3, 0.3), ParameterError);
}

TEST_CASE("recovery of a constant potential: first order error in lambda, removed by extrapolation")
{
    auto hs = half_space(3, 0.3, 0.3);
    Vec tau(2);
    tau << 0.6, 0.8;
    auto pr = make_probe(hs.chart, tau, 1e-3);
    auto rec = tangential_recovery(pr, [](const Vec&) {
        CVec a(3);
        a << cplx(0.5, 0.1), cplx(-1.0, 0), cplx(7.0, 0);
        return a;
    });
    cplx exact = 0.6 * cplx(0.5, 0.1) + 0.8 * cplx(-1.0, 0);
    // the normal component drops out; the profile's normal variation gives an O(lambda) error
    REQUIRE(rec.I1.size() == 3);
    for (std::size_t k = 0; k + 1 < rec.I1.size(); ++k) {
        double q = std::abs(rec.I1[k] - exact) / std::abs(rec.I1[k + 1] - exact);
        CHECK(q == doctest::Approx(2.0).epsilon(0.05));
    }
    CHECK(std::abs(rec.estimate - exact) < 1e-4);
}

TEST_CASE("recovery of a linear potential at first order in lambda")
{
    auto hs = half_space(2, 0.3, 0.3);
    auto pr = make_probe(hs.chart, Vec::Ones(1), 1e-3);
    auto rec = tangential_recovery(pr, [](const Vec& x) {
        CVec a(2);
        a << cplx(1.0 + 3.0 * x(1), 0), cplx(0, 0);
        return a;
    });
    CHECK(std::abs(rec.estimate - 1.0) < 1e-4);
    CHECK(std::abs(rec.I1.front() - 1.0) > std::abs(rec.estimate - 1.0));
}

TEST_CASE("probe norm rates in dimension 2 and 3")
{
    for (int n : {2, 3}) {
        auto hs = half_space(n, 0.3, 0.3);
        Vec tau = Vec::Zero(n - 1);
        tau(0) = 1;
        auto rs = probe_rates(hs.chart, tau, {1e-2, 5e-3, 2.5e-3, 1.25e-3});
        CHECK(rs.expected_v0 == doctest::Approx((n - 1) / 4.0 + 0.5));
        CHECK(std::abs(rs.v0_exponent - rs.expected_v0) < 0.05);
        CHECK(std::abs(rs.dv0_exponent - rs.expected_dv0) < 0.05);
    }
}

TEST_CASE("boundary normal coordinates on the disk")
{
    auto disk = std::make_shared<const MetricChart>(euclidean_disk(1.0));
    auto bnc = boundary_normal_chart(disk, 0.3, 0.3, 0.3);
    Vec y(2);
    y << 0.0, 0.1;
    Vec x = bnc.to_original(y);
    CHECK(x.norm() == doctest::Approx(0.9).epsilon(1e-8));
    CHECK(std::atan2(x(1), x(0)) == doctest::Approx(0.3).epsilon(1e-8));
    Mat G = bnc.chart->metric(y);
    CHECK(G(1, 1) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(std::abs(G(0, 1)) < 1e-8);
    auto pr = make_probe(bnc.chart, Vec::Ones(1), 1e-3);
    CHECK_NOTHROW(pr.validate());
    CHECK_THROWS_AS(boundary_normal_chart(disk, 0.3, 0.3, 0.3, 120), ParameterError);
}
