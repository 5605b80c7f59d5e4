#include "geobeam/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace geobeam {

namespace {
std::atomic<int> g_workers{0};
}

void set_default_workers(int workers) { g_workers = std::max(0, workers); }

int default_workers()
{
    int w = g_workers.load();
    if (w > 0)
        return w;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers)
{
    if (n == 0)
        return;
    int w = workers > 0 ? workers : default_workers();
    w = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(w), n));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::exception_ptr first;
    std::mutex mu;
    {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(w));
        for (int k = 0; k < w; ++k) {
            std::size_t lo = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(w);
            std::size_t hi = n * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(w);
            pool.emplace_back([&, lo, hi] {
                try {
                    for (std::size_t i = lo; i < hi; ++i)
                        fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!first)
                        first = std::current_exception();
                }
            });
        }
    }
    if (first)
        std::rethrow_exception(first);
}

std::vector<double> linspace(double a, double b, int n)
{
    std::vector<double> out(static_cast<std::size_t>(std::max(n, 0)));
    if (n == 1) {
        out[0] = a;
        return out;
    }
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
    return out;
}

std::vector<double> simpson_weights(int n, double dx)
{
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    if (n == 1)
        return w;
    if (n == 2) {
        w[0] = w[1] = dx / 2;
        return w;
    }
    int m = (n % 2 == 1) ? n : n - 1;
    for (int i = 0; i < m; ++i) {
        double c = (i == 0 || i == m - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        w[static_cast<std::size_t>(i)] += c * dx / 3.0;
    }
    if (m != n) {
        w[static_cast<std::size_t>(n - 2)] += dx / 2;
        w[static_cast<std::size_t>(n - 1)] += dx / 2;
    }
    return w;
}

GaussRule gauss_legendre(int n)
{
    GaussRule r;
    r.x.resize(static_cast<std::size_t>(n));
    r.w.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1)
                p0 = 1, p1 = x;
            dp = n * (x * p1 - p0) / (x * x - 1);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        r.x[static_cast<std::size_t>(i)] = x;
        r.w[static_cast<std::size_t>(i)] = 2.0 / ((1 - x * x) * dp * dp);
    }
    return r;
}

namespace {
double edge(double u) { return u > 0 ? std::exp(-1.0 / u) : 0.0; }
double edge_d(double u) { return u > 0 ? std::exp(-1.0 / u) / (u * u) : 0.0; }
} // namespace

double smooth_step(double u)
{
    if (u <= 0)
        return 0;
    if (u >= 1)
        return 1;
    double a = edge(u), b = edge(1 - u);
    return a / (a + b);
}

double smooth_step_derivative(double u)
{
    if (u <= 0 || u >= 1)
        return 0;
    double a = edge(u), b = edge(1 - u), da = edge_d(u), db = edge_d(1 - u);
    return (da * b + a * db) / ((a + b) * (a + b));
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(std::min(x.size(), y.size()));
    for (int i = 0; i < n; ++i) {
        double lx = std::log(x[static_cast<std::size_t>(i)]);
        double ly = std::log(y[static_cast<std::size_t>(i)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double den = n * sxx - sx * sx;
    return den == 0 ? 0.0 : (n * sxy - sx * sy) / den;
}

} // namespace geobeam
