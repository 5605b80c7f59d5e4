#include "geobeam/grid.hpp"

#include <cmath>

namespace geobeam {

Grid Grid::make(const std::vector<double>& lo, const std::vector<double>& hi, const std::vector<int>& n)
{
    if (lo.size() != hi.size() || lo.size() != n.size() || lo.empty() || lo.size() > 3)
        throw ShapeError("grid spec needs matching lo/hi/n of length 1..3");
    Grid g;
    g.dim = static_cast<int>(lo.size());
    for (std::size_t k = 0; k < lo.size(); ++k) {
        g.lo[k] = lo[k];
        g.hi[k] = hi[k];
        g.n[k] = n[k];
        if (n[k] < 2 || !(hi[k] > lo[k]))
            throw ShapeError("degenerate grid axis");
    }
    return g;
}

std::array<int, 3> Grid::multi(std::size_t idx) const
{
    std::array<int, 3> m{};
    m[2] = static_cast<int>(idx % static_cast<std::size_t>(n[2]));
    idx /= static_cast<std::size_t>(n[2]);
    m[1] = static_cast<int>(idx % static_cast<std::size_t>(n[1]));
    m[0] = static_cast<int>(idx / static_cast<std::size_t>(n[1]));
    return m;
}

Vec Grid::point(std::size_t idx) const
{
    auto m = multi(idx);
    Vec p(dim);
    for (int k = 0; k < dim; ++k)
        p(k) = coord(k, m[static_cast<std::size_t>(k)]);
    return p;
}

double Grid::cell_volume() const
{
    double v = 1;
    for (int k = 0; k < dim; ++k)
        v *= step(k);
    return v;
}

bool Grid::same(const Grid& o) const
{
    if (dim != o.dim)
        return false;
    for (int k = 0; k < dim; ++k) {
        auto K = static_cast<std::size_t>(k);
        if (n[K] != o.n[K] || std::abs(lo[K] - o.lo[K]) > 1e-12 || std::abs(hi[K] - o.hi[K]) > 1e-12 ||
            periodic[K] != o.periodic[K])
            return false;
    }
    return true;
}

std::size_t Grid::stride(int axis) const
{
    if (axis == 0)
        return static_cast<std::size_t>(n[1]) * static_cast<std::size_t>(n[2]);
    if (axis == 1)
        return static_cast<std::size_t>(n[2]);
    return 1;
}

std::vector<double> Grid::quadrature_weights() const
{
    std::array<std::vector<double>, 3> w;
    for (int k = 0; k < 3; ++k) {
        auto K = static_cast<std::size_t>(k);
        if (k >= dim) {
            w[K] = {1.0};
            continue;
        }
        if (periodic[K])
            w[K].assign(static_cast<std::size_t>(n[K]), step(k));
        else
            w[K] = simpson_weights(n[K], step(k));
    }
    std::vector<double> out(size());
    for (int i = 0; i < n[0]; ++i)
        for (int j = 0; j < n[1]; ++j)
            for (int k = 0; k < n[2]; ++k)
                out[index(i, j, k)] = w[0][static_cast<std::size_t>(i)] * w[1][static_cast<std::size_t>(j)] *
                                      w[2][static_cast<std::size_t>(k)];
    return out;
}

namespace {

struct AxisStencil {
    int count = 0;
    int idx[8];
    double w[8];
    void add(int i, double wt)
    {
        for (int k = 0; k < count; ++k)
            if (idx[k] == i) {
                w[k] += wt;
                return;
            }
        idx[count] = i;
        w[count] = wt;
        ++count;
    }
};

AxisStencil cubic_axis(const Grid& g, int axis, double x)
{
    AxisStencil s;
    auto A = static_cast<std::size_t>(axis);
    int n = g.n[A];
    if (n == 1) {
        s.add(0, 1.0);
        return s;
    }
    double h = g.step(axis);
    double q = (x - g.lo[A]) / h;
    int i0 = static_cast<int>(std::floor(q));
    if (!g.periodic[A]) {
        if (i0 < 0)
            i0 = 0;
        if (i0 > n - 2)
            i0 = n - 2;
    }
    double u = q - i0;
    if (n == 2 && !g.periodic[A]) {
        s.add(0, 1 - u);
        s.add(1, u);
        return s;
    }
    double wt[4] = {(-u * u * u + 2 * u * u - u) / 2, (3 * u * u * u - 5 * u * u + 2) / 2,
                    (-3 * u * u * u + 4 * u * u + u) / 2, (u * u * u - u * u) / 2};
    for (int m = 0; m < 4; ++m) {
        int j = i0 - 1 + m;
        if (g.periodic[A]) {
            j %= n;
            if (j < 0)
                j += n;
            s.add(j, wt[m]);
        } else if (j < 0) {
            s.add(0, 3 * wt[m]);
            s.add(1, -3 * wt[m]);
            s.add(2, wt[m]);
        } else if (j > n - 1) {
            s.add(n - 1, 3 * wt[m]);
            s.add(n - 2, -3 * wt[m]);
            s.add(n - 3, wt[m]);
        } else {
            s.add(j, wt[m]);
        }
    }
    return s;
}

template <class T>
T interp_cubic_t(const Grid& g, const std::vector<T>& f, const Vec& x)
{
    AxisStencil s[3];
    for (int k = 0; k < 3; ++k)
        s[k] = k < g.dim ? cubic_axis(g, k, x(k)) : AxisStencil{};
    for (int k = g.dim; k < 3; ++k)
        s[k].add(0, 1.0);
    T acc{};
    for (int a = 0; a < s[0].count; ++a)
        for (int b = 0; b < s[1].count; ++b) {
            double wab = s[0].w[a] * s[1].w[b];
            for (int c = 0; c < s[2].count; ++c)
                acc += (wab * s[2].w[c]) * f[g.index(s[0].idx[a], s[1].idx[b], s[2].idx[c])];
        }
    return acc;
}

template <class T>
void diff_axis_t(const Grid& g, const std::vector<T>& f, int axis, std::vector<T>& out)
{
    auto A = static_cast<std::size_t>(axis);
    int n = g.n[A];
    if (n < 4 && !(g.periodic[A] && n >= 5))
        throw ResolutionError("finite differences need at least 4 nodes per axis");
    if (g.periodic[A] && n < 5)
        throw ResolutionError("periodic finite differences need at least 5 nodes");
    out.assign(f.size(), T{});
    double h = g.step(axis);
    std::size_t st = g.stride(axis);
    std::size_t total = g.size();
    std::size_t lines = total / static_cast<std::size_t>(n);
    for (std::size_t l = 0; l < lines; ++l) {
        // base offset of line l
        std::size_t outer = l / st, inner = l % st;
        std::size_t base = outer * st * static_cast<std::size_t>(n) + inner;
        auto F = [&](int i) -> const T& { return f[base + static_cast<std::size_t>(i) * st]; };
        for (int i = 0; i < n; ++i) {
            T d;
            if (g.periodic[A]) {
                auto P = [&](int k) -> const T& { return F(((k % n) + n) % n); };
                d = (P(i - 2) - 8.0 * P(i - 1) + 8.0 * P(i + 1) - P(i + 2)) / (12 * h);
            } else if (i == 0) {
                d = (-11.0 * F(0) + 18.0 * F(1) - 9.0 * F(2) + 2.0 * F(3)) / (6 * h);
            } else if (i == 1) {
                d = (-2.0 * F(0) - 3.0 * F(1) + 6.0 * F(2) - F(3)) / (6 * h);
            } else if (i == n - 1) {
                d = (11.0 * F(n - 1) - 18.0 * F(n - 2) + 9.0 * F(n - 3) - 2.0 * F(n - 4)) / (6 * h);
            } else if (i == n - 2) {
                d = (2.0 * F(n - 1) + 3.0 * F(n - 2) - 6.0 * F(n - 3) + F(n - 4)) / (6 * h);
            } else {
                d = (F(i - 2) - 8.0 * F(i - 1) + 8.0 * F(i + 1) - F(i + 2)) / (12 * h);
            }
            out[base + static_cast<std::size_t>(i) * st] = d;
        }
    }
}

} // namespace

cplx interp_cubic(const Grid& g, const std::vector<cplx>& f, const Vec& x) { return interp_cubic_t(g, f, x); }
double interp_cubic(const Grid& g, const std::vector<double>& f, const Vec& x) { return interp_cubic_t(g, f, x); }

cplx interp_linear(const Grid& g, const std::vector<cplx>& f, const Vec& x)
{
    int i0[3] = {0, 0, 0};
    double u[3] = {0, 0, 0};
    for (int k = 0; k < g.dim; ++k) {
        auto K = static_cast<std::size_t>(k);
        double q = (x(k) - g.lo[K]) / g.step(k);
        int i = static_cast<int>(std::floor(q));
        if (g.periodic[K]) {
            u[k] = q - i;
            i0[k] = ((i % g.n[K]) + g.n[K]) % g.n[K];
        } else {
            if (i < 0)
                i = 0;
            if (i > g.n[K] - 2)
                i = g.n[K] - 2;
            i0[k] = i;
            u[k] = q - i;
        }
    }
    cplx acc{};
    int corners = 1 << g.dim;
    for (int c = 0; c < corners; ++c) {
        int id[3] = {0, 0, 0};
        double w = 1;
        for (int k = 0; k < g.dim; ++k) {
            int bit = (c >> k) & 1;
            int j = i0[k] + bit;
            if (g.periodic[static_cast<std::size_t>(k)])
                j %= g.n[static_cast<std::size_t>(k)];
            id[k] = j;
            w *= bit ? u[k] : 1 - u[k];
        }
        acc += w * f[g.index(id[0], id[1], id[2])];
    }
    return acc;
}

bool grid_contains(const Grid& g, const Vec& x, double slack)
{
    for (int k = 0; k < g.dim; ++k) {
        auto K = static_cast<std::size_t>(k);
        if (g.periodic[K])
            continue;
        if (x(k) < g.lo[K] - slack || x(k) > g.hi[K] + slack)
            return false;
    }
    return true;
}

void diff_axis(const Grid& g, const std::vector<cplx>& f, int axis, std::vector<cplx>& out)
{
    diff_axis_t(g, f, axis, out);
}
void diff_axis(const Grid& g, const std::vector<double>& f, int axis, std::vector<double>& out)
{
    diff_axis_t(g, f, axis, out);
}

} // namespace geobeam
