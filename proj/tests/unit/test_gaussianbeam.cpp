#include "doctest.h"

#include "geobeam/gaussianbeam.hpp"

using namespace geobeam;

namespace {

struct Straight {
    MetricChart disk = euclidean_disk(1.0);
    GeodesicPath geo;
    ChartPtr c3;
    Grid g3 = Grid::make({-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}, {49, 49, 49});
    SampledOneForm A;
    SampledField q;

    Straight()
    {
        Vec x0(2), v0(2);
        x0 << -1, 0;
        v0 << 1, 0;
        geo = integrate_geodesic(disk, x0, v0);
        c3 = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(3, -1.5), Vec::Constant(3, 1.5)));
        A = zero_form(c3, g3);
        q = zero_field(c3, g3);
    }
};

} // namespace

TEST_CASE("riccati equation without source matches the closed form")
{
    CMat H0(2, 2);
    H0 << cplx(0, 1), cplx(0.2, 0.1), cplx(0.2, 0.1), cplx(0.5, 2);
    auto sol = solve_riccati([](double) { return Mat(Mat::Zero(2, 2)); }, H0, 0.5, 0.0, 2.0);
    CMat Id = CMat::Identity(2, 2);
    double e = 0;
    for (double t : {0.0, 0.3, 0.5, 1.1, 2.0}) {
        CMat exact = H0 * (Id + (t - 0.5) * H0).inverse();
        e = std::max(e, (sol.at(t) - exact).norm());
    }
    CHECK(e < 1e-8);
    CHECK(sol.max_det_error < 1e-8);
    CHECK(sol.min_imag_eigenvalue > 0);
    CHECK(sol.max_asymmetry < 1e-12);
    CHECK_THROWS_AS(sol.at(2.5), DomainError);
}

TEST_CASE("riccati input validation")
{
    auto F = [](double) { return Mat(Mat::Zero(2, 2)); };
    CMat bad(2, 2);
    bad << cplx(0, 1), 1.0, 0.0, cplx(0, 1);
    CHECK_THROWS_AS(solve_riccati(F, bad, 0, 0, 1), ParameterError);
    CMat real = CMat::Identity(2, 2);
    CHECK_THROWS_AS(solve_riccati(F, real, 0, 0, 1), ParameterError);
    CMat ok = I * CMat::Identity(2, 2);
    CHECK_THROWS_AS(solve_riccati(F, ok, 2, 0, 1), ParameterError);
}

TEST_CASE("beam cutoff")
{
    CHECK(beam_cutoff(0.0) == 1.0);
    CHECK(beam_cutoff(0.25) == 1.0);
    CHECK(beam_cutoff(-0.5) == 0.0);
    CHECK(beam_cutoff(0.7) == 0.0);
    double prev = 1;
    for (double r = 0.25; r <= 0.5; r += 0.01) {
        double c = beam_cutoff(r);
        CHECK(c <= prev + 1e-15);
        prev = c;
        double fd = (beam_cutoff(r + 1e-6) - beam_cutoff(r - 1e-6)) / 2e-6;
        CHECK(std::abs(fd - beam_cutoff_derivative(r)) < 1e-5);
    }
}

TEST_CASE("quasimode on a straight geodesic")
{
    Straight s;
    SemiclassicalParams p{0.1, 0.5};
    BeamOptions opt;
    opt.t0 = 1.0;
    auto v = assemble_quasimode(s.disk, s.geo, s.A, p, BeamKind::v, opt);
    auto w = assemble_quasimode(s.disk, s.geo, s.A, p, BeamKind::w, opt);
    CHECK(v.length() == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(v.phase.defect_exponent >= 2.5);
    CHECK(v.tau == doctest::Approx(std::pow(0.1, 0.4)));
    // on the geodesic phi = t, so the modulus is e^{-lambda t}
    CHECK(v.modulus_weight(1.5, 0.0) == doctest::Approx(std::exp(-0.5 * 1.5)).epsilon(1e-6));
    CHECK(v.modulus_weight(1.5, 0.2) < v.modulus_weight(1.5, 0.0));

    auto rep = residual_bound(v, s.A, s.q);
    CHECK(std::isfinite(rep.bound));
    CHECK(rep.bound > 0);
    CHECK_THROWS_AS(residual_bound(v, s.A, s.q, 0.5 * v.tau), ContractError);

    CHECK_THROWS_AS(concentration_integral(v, v, nullptr, 0.0, Pairing::product), ContractError);
    CHECK_THROWS_AS(concentration_integral(v, w, nullptr, 0.0, Pairing::alpha_dv), ContractError);
    // psi = 1, A = 0: the product pairing tends to the length of the geodesic weighted by e^{-2 lambda t}
    cplx lim = geodesic_limit(v, w, nullptr, 0.0, Pairing::product);
    CHECK(std::abs(lim - (1 - std::exp(-2 * 0.5 * 2.0)) / (2 * 0.5)) < 1e-6);

    opt.sigma = 0.6;
    CHECK_THROWS_AS(assemble_quasimode(s.disk, s.geo, s.A, p, BeamKind::v, opt), ParameterError);
}
