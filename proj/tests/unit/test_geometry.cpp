#include "doctest.h"

#include "geobeam/geometry.hpp"

#include <random>

using namespace geobeam;

namespace {

Vec v2(double a, double b)
{
    Vec v(2);
    v << a, b;
    return v;
}

// inverse stereographic projection onto the unit sphere
Eigen::Vector3d lift(const Vec& p)
{
    double s = 1 + p.squaredNorm();
    return {2 * p(0) / s, 2 * p(1) / s, (1 - p.squaredNorm()) / s};
}

} // namespace

TEST_CASE("christoffel symbols: euclidean, polar and sphere charts")
{
    auto disk = euclidean_disk(1.0);
    auto G = christoffel(disk, v2(0.2, -0.1));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                CHECK(G(i, j, k) == doctest::Approx(0).epsilon(1e-12));

    auto polar = polar_plane(0.5, 3.0, -1.0, 1.0);
    auto P = christoffel(polar, v2(2.0, 0.3));
    CHECK(P(0, 1, 1) == doctest::Approx(-2.0).epsilon(1e-7));
    CHECK(P(1, 0, 1) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(P(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-7));

    auto sph = sphere_angles(0.3, 1.4, -1.0, 1.0);
    auto S = christoffel(sph, v2(pi / 4, 0.0));
    CHECK(S(0, 1, 1) == doctest::Approx(-0.5).epsilon(1e-7));
}

TEST_CASE("christoffel outside the chart is a domain error")
{
    auto disk = euclidean_disk(1.0);
    CHECK_THROWS_AS(christoffel(disk, v2(3.0, 0.0)), DomainError);
}

TEST_CASE("diameter and chord of the unit disk")
{
    auto disk = euclidean_disk(1.0);
    auto g = integrate_geodesic(disk, v2(1, 0), v2(-1, 0));
    CHECK(g.classification == EntryClass::non_tangential);
    CHECK(g.exit_time == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(g.samples.back().x(0) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(std::abs(g.samples.back().x(1)) < 1e-9);

    double a = pi / 3;
    auto c = integrate_geodesic(disk, v2(1, 0), v2(-std::cos(a), std::sin(a)));
    CHECK(c.exit_time == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("geodesics on a spherical cap are great circles, unit speed and reversible")
{
    auto cap = spherical_cap(0.5);
    double rho0 = std::sqrt(1.0 / 3.0);
    Vec x0 = v2(rho0, 0);
    Vec d = v2(-std::cos(0.4), std::sin(0.4));
    Vec v0 = d / cap.norm(x0, d);
    auto g = integrate_geodesic(cap, x0, v0);
    REQUIRE(g.finite());
    Eigen::Vector3d p0 = lift(g.samples[0].x), p1 = lift(g.samples[1].x);
    Eigen::Vector3d n = p0.cross(p1).normalized();
    double dev = 0, drift = 0;
    for (const auto& s : g.samples) {
        dev = std::max(dev, std::abs(n.dot(lift(s.x))));
        drift = std::max(drift, std::abs(cap.norm(s.x, s.v) - 1));
    }
    CHECK(dev < 1e-6);
    CHECK(drift < 1e-7 * std::max(1.0, g.exit_time));

    Vec xe = g.samples.back().x, ve = -g.samples.back().v;
    auto back = integrate_geodesic(cap, xe, ve);
    CHECK((back.samples.back().x - x0).norm() < 1e-6);
}

TEST_CASE("boundary fans on the disk")
{
    auto disk = euclidean_disk(1.0);
    FanOptions fo;
    fo.geo.tangency_threshold = 0.1;
    auto fan = boundary_fan(disk, 4, 3, fo);
    CHECK(fan.size() == 12);
    double total = 0, exact = 0;
    for (const auto& g : fan) {
        CHECK(g.classification == EntryClass::non_tangential);
        total += g.exit_time;
        // chord length 2 <v, -x>
        exact += 2 * (-g.x0.dot(g.v0));
    }
    CHECK(total == doctest::Approx(exact).epsilon(1e-6 / exact));

    FanOptions strict;
    strict.geo.tangency_threshold = 0.999;
    CHECK_THROWS_AS(boundary_fan(disk, 4, 3, strict), ConfigurationError);
}

TEST_CASE("simplicity of caps, hemisphere and flat disk")
{
    CHECK(check_simple(euclidean_disk(1.0)).simple());
    CHECK(check_simple(spherical_cap(0.5)).simple());
    auto hemi = check_simple(spherical_cap(0.0));
    CHECK_FALSE(hemi.convex_boundary);
    CHECK(hemi.diffeomorphic_exp == Tri::unknown);
}

TEST_CASE("fermi frame on a perturbed metric")
{
    auto flat = euclidean_disk(1.0);
    auto diam = integrate_geodesic(flat, v2(-1, 0), v2(1, 0));
    auto ff = fermi_coordinates(flat, diam, 0.2);
    for (double t : {0.2, 1.0, 1.7})
        for (double y : {-0.1, 0.0, 0.15}) {
            CHECK((ff.chart_map(t, y) - v2(-1 + t, y)).norm() < 1e-9);
            CHECK((ff.metric_in_frame(t, y) - Mat::Identity(2, 2)).norm() < 1e-8);
        }

    auto pert = conformal_disk(1.0, 0.1);
    Vec x0 = v2(-1, 0.05);
    x0 /= x0.norm();
    Vec d = v2(1, 0.1);
    auto geo = integrate_geodesic(pert, x0, d / pert.norm(x0, d));
    auto fr = fermi_coordinates(pert, geo, 0.2);
    double e = 1e-3;
    for (double t : {0.3, 0.9, 1.5}) {
        CHECK((fr.metric_in_frame(t, 0) - Mat::Identity(2, 2)).norm() < 1e-6);
        Mat dg = (fr.metric_in_frame(t, e) - fr.metric_in_frame(t, -e)) / (2 * e);
        CHECK(dg.norm() < 1e-4);
    }
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ut(0.1, geo.exit_time - 0.1), uy(-0.1, 0.1);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        double t = ut(rng), y = uy(rng);
        Vec x = fr.chart_map(t, y);
        auto [t2, y2] = fr.inverse_map(x);
        worst = std::max(worst, (fr.chart_map(t2, y2) - x).norm());
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("polar normal coordinates")
{
    auto disk = euclidean_disk(1.0);
    auto pc = polar_normal_coords(disk, v2(0, 0));
    auto [r, th] = pc.from_chart(v2(0.3, 0.4));
    CHECK(r == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(pc.m(0.5, th) == doctest::Approx(0.25).epsilon(1e-6));

    auto pb = polar_normal_coords(disk, v2(-1, 0));
    for (Vec x : {v2(0.2, 0.1), v2(-0.5, -0.6), v2(0.7, 0.0)})
        CHECK(pb.from_chart(x).first == doctest::Approx((x - v2(-1, 0)).norm()).epsilon(1e-8));

    auto cap = spherical_cap(0.5);
    auto pcap = polar_normal_coords(cap, v2(0, 0));
    for (double rr : {0.2, 0.5, 0.8})
        for (double tt : {-0.5, 0.4}) {
            Mat m = pcap.metric_block(rr, tt);
            CHECK(m(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
            CHECK(std::abs(m(0, 1)) < 1e-6);
        }
}

TEST_CASE("polar normal coordinates reject non-simple charts")
{
    CHECK_THROWS_AS(polar_normal_coords(spherical_cap(0.0), v2(0, 0)), UnsupportedGeometryError);
}
