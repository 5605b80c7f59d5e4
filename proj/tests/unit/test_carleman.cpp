#include "doctest.h"

#include "geobeam/carleman.hpp"

using namespace geobeam;

namespace {

struct Slab {
    ChartPtr chart = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(2, -1), Vec::Constant(2, 1)));
    Grid grid = Grid::make({-1, -1}, {1, 1}, {161, 161});
};

} // namespace

TEST_CASE("weight validation")
{
    Slab s;
    CarlemanWeight w;
    w.h = 0.1;
    w.epsilon = 0.3;
    CHECK_NOTHROW(w.validate(*s.chart));
    CHECK(w.phi_tilde(1.0) == doctest::Approx(1 + 0.1 / 0.6));
    w.epsilon = 0.1;
    CHECK_THROWS_AS(w.validate(*s.chart), ParameterError);
    w.h = 0;
    CHECK_THROWS_AS(w.validate(*s.chart), ParameterError);
}

TEST_CASE("ratios are scale invariant and the conjugation identity holds")
{
    Slab s;
    double h = 0.05;
    BumpFamilyOptions bo;
    bo.count = 6;
    auto fam = bump_family(s.chart, s.grid, h, bo);
    auto scaled = fam;
    for (auto& u : scaled)
        for (auto& v : u.values)
            v *= cplx(3, -1);
    CarlemanWeight w;
    w.h = h;
    w.epsilon = 0.3;
    auto a = verify_carleman(fam, w, CarlemanKind::laplace_s0);
    auto b = verify_carleman(scaled, w, CarlemanKind::laplace_s0);
    for (std::size_t i = 0; i < a.ratios.size(); ++i)
        CHECK(a.ratios[i] == doctest::Approx(b.ratios[i]).epsilon(1e-10));
    CHECK(a.max_identity_error < 1e-3);
    CHECK(a.min_ratio > 0);

    auto m = verify_carleman(fam, w, CarlemanKind::magnetic);
    CHECK(m.min_ratio > 0);
    CHECK(std::isfinite(m.min_ratio));
}

TEST_CASE("the discrete conjugation identity converges under refinement")
{
    double prev = 1;
    for (int n : {81, 161, 321}) {
        auto chart = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(2, -1), Vec::Constant(2, 1)));
        Grid g = Grid::make({-1, -1}, {1, 1}, {n, n});
        BumpFamilyOptions bo;
        bo.count = 2;
        bo.modulated = false;
        auto fam = bump_family(chart, g, 0.1, bo);
        CarlemanWeight w;
        w.h = 0.1;
        w.epsilon = 0.3;
        double e = verify_carleman(fam, w, CarlemanKind::laplace_s0).max_identity_error;
        CHECK(e < 0.5 * prev);
        prev = e;
    }
}

TEST_CASE("contract violations")
{
    Slab s;
    CarlemanWeight w;
    w.h = 0.1;
    w.epsilon = 0.3;
    CHECK_THROWS_AS(verify_carleman({}, w, CarlemanKind::laplace_s0), ContractError);
    CHECK_THROWS_AS(verify_carleman({zero_field(s.chart, s.grid)}, w, CarlemanKind::laplace_s0), ContractError);
    auto wide = sample_field(s.chart, s.grid, [](const Vec& x) { return cplx(std::exp(-x.squaredNorm())); });
    CHECK_THROWS_AS(verify_carleman({wide}, w, CarlemanKind::laplace_s0), ContractError);
    BumpFamilyOptions bo;
    bo.count = 0;
    CHECK_THROWS_AS(bump_family(s.chart, s.grid, 0.1, bo), ParameterError);
}

TEST_CASE("bump families are reproducible from the seed")
{
    Slab s;
    BumpFamilyOptions bo;
    bo.count = 3;
    bo.seed = 11;
    auto a = bump_family(s.chart, s.grid, 0.1, bo);
    auto b = bump_family(s.chart, s.grid, 0.1, bo);
    bo.seed = 12;
    auto c = bump_family(s.chart, s.grid, 0.1, bo);
    CHECK(a[2].values == b[2].values);
    CHECK(a[2].values != c[2].values);
}
