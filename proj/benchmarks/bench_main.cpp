#include "geobeam/carleman.hpp"
#include "geobeam/dbar.hpp"
#include "geobeam/gaussianbeam.hpp"
#include "geobeam/holonomy.hpp"
#include "geobeam/raytransform.hpp"

#include <benchmark/benchmark.h>

using namespace geobeam;

static void BM_Geodesic(benchmark::State& st)
{
    auto cap = spherical_cap(0.3);
    Vec x0(2), v0(2);
    double rho = std::sqrt(0.7 / 1.3);
    x0 << -rho, 0;
    v0 << 0.5 * (1 + rho * rho), 0; // unit speed for 4 / (1 + |p|^2)^2
    for (auto _ : st)
        benchmark::DoNotOptimize(integrate_geodesic(cap, x0, v0).exit_time);
}
BENCHMARK(BM_Geodesic)->Unit(benchmark::kMillisecond);

static void BM_Riccati(benchmark::State& st)
{
    CMat H0 = I * CMat::Identity(2, 2);
    auto F = [](double t) { return Mat(0.1 * std::sin(t) * Mat::Identity(2, 2)); };
    for (auto _ : st)
        benchmark::DoNotOptimize(solve_riccati(F, H0, 0, 0, 2).max_residual);
}
BENCHMARK(BM_Riccati)->Unit(benchmark::kMillisecond);

static void BM_CauchySolve(benchmark::State& st)
{
    int n = static_cast<int>(st.range(0));
    Grid G = Grid::make({-1, -1}, {1, 1}, {n, n});
    auto g = PlaneField::sample(G, {-0.6, 0.6, -0.6, 0.6}, [](double x, double y) {
        double r2 = (x * x + y * y) / 0.36;
        return cplx(r2 < 1 ? std::exp(1 - 1 / (1 - r2)) : 0.0);
    });
    for (auto _ : st)
        benchmark::DoNotOptimize(cauchy_solve(g, CauchyKind::dbar).values.data());
}
BENCHMARK(BM_CauchySolve)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_ForwardRay(benchmark::State& st)
{
    auto disk = euclidean_disk(1.0);
    auto fan = boundary_fan(disk, 20, 20);
    auto f = [](const Vec& x) { return cplx(std::exp(-3 * x.squaredNorm())); };
    for (auto _ : st)
        benchmark::DoNotOptimize(forward(disk, f, nullptr, fan, 0.5).values.data());
}
BENCHMARK(BM_ForwardRay)->Unit(benchmark::kMillisecond);

static void BM_Mollify(benchmark::State& st)
{
    auto c = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(2, -1), Vec::Constant(2, 1)));
    Grid g = Grid::make({-1, -1}, {1, 1}, {201, 201});
    auto A = sample_form(c, g, [](const Vec& x) {
        CVec a(2);
        a << std::abs(x.norm() - 0.5), 0.0;
        return a;
    });
    for (auto _ : st)
        benchmark::DoNotOptimize(mollify(A, 0.05).comp[0].data());
}
BENCHMARK(BM_Mollify)->Unit(benchmark::kMillisecond);

static void BM_GaugeProject(benchmark::State& st)
{
    auto c = std::make_shared<const MetricChart>(euclidean_disk(1.0));
    Grid g = Grid::make({-1, -1}, {1, 1}, {101, 101});
    auto a = sample_form(c, g, [](const Vec& x) {
        CVec v(2);
        v << -x(1), x(0) * x(0);
        return v;
    });
    for (auto _ : st)
        benchmark::DoNotOptimize(gauge_project(a).curl.data());
}
BENCHMARK(BM_GaugeProject)->Unit(benchmark::kMillisecond);

static void BM_LoopHolonomy(benchmark::State& st)
{
    auto ann = std::make_shared<const MetricChart>(planar_annulus(0.5, 1.5));
    Grid g = Grid::make({-1.6, -1.6}, {1.6, 1.6}, {201, 201});
    auto A = sample_form(ann, g, [](const Vec& x) {
        CVec a = CVec::Zero(2);
        double r2 = x.squaredNorm();
        if (r2 > 0.0625)
            a << -0.5 * x(1) / r2, 0.5 * x(0) / r2;
        return a;
    });
    auto loop = circle_loop(Vec::Zero(2), 1.0);
    for (auto _ : st)
        benchmark::DoNotOptimize(loop_holonomy(A, {loop}).loops[0].P);
}
BENCHMARK(BM_LoopHolonomy)->Unit(benchmark::kMillisecond);

static void BM_Carleman(benchmark::State& st)
{
    auto c = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(2, -1), Vec::Constant(2, 1)));
    Grid g = Grid::make({-1, -1}, {1, 1}, {161, 161});
    BumpFamilyOptions bo;
    bo.count = 4;
    auto fam = bump_family(c, g, 0.05, bo);
    CarlemanWeight w;
    w.h = 0.05;
    w.epsilon = 0.3;
    for (auto _ : st)
        benchmark::DoNotOptimize(verify_carleman(fam, w, CarlemanKind::laplace_s0).min_ratio);
}
BENCHMARK(BM_Carleman)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
