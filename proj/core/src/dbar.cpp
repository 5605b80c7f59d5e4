#include "geobeam/dbar.hpp"

#include "fft_conv.hpp"

#include <cmath>

namespace geobeam {

void PlaneField::validate() const
{
    if (grid.dim != 2)
        throw ShapeError("plane fields live on two dimensional grids");
    if (values.size() != grid.size())
        throw ShapeError("plane field size mismatch");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Vec p = grid.point(i);
        bool in = p(0) >= support[0] - 1e-12 && p(0) <= support[1] + 1e-12 && p(1) >= support[2] - 1e-12 &&
                  p(1) <= support[3] + 1e-12;
        if (!std::isfinite(values[i].real()) || !std::isfinite(values[i].imag()))
            throw DomainError("plane field has non-finite values");
        if (!in && std::abs(values[i]) > 1e-12)
            throw MarginError("plane field does not vanish outside its support box");
    }
}

PlaneField PlaneField::sample(const Grid& g, const std::array<double, 4>& support,
                              const std::function<cplx(double, double)>& f)
{
    PlaneField p{g, std::vector<cplx>(g.size()), support};
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec x = g.point(i);
        bool in = x(0) >= support[0] && x(0) <= support[1] && x(1) >= support[2] && x(1) <= support[3];
        p.values[i] = in ? f(x(0), x(1)) : cplx(0);
    }
    return p;
}

std::vector<cplx> apply_wirtinger(const Grid& g, const std::vector<cplx>& u, CauchyKind which)
{
    std::vector<cplx> ux, uy;
    diff_axis(g, u, 0, ux);
    diff_axis(g, u, 1, uy);
    double sgn = which == CauchyKind::dbar ? 1.0 : -1.0;
    std::vector<cplx> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        out[i] = 0.5 * (ux[i] + sgn * I * uy[i]);
    return out;
}

namespace {

// Integral of (x^2 - y^2) / (x^2 + y^2) over [-a, a] x [-b, b]; zero for square cells.
double anisotropy_integral(double a, double b)
{
    if (std::abs(a - b) < 1e-14 * a)
        return 0;
    auto r = gauss_legendre(48);
    // split each axis at 0 so the integrand is smooth on every piece
    double s = 0;
    for (std::size_t i = 0; i < r.x.size(); ++i)
        for (std::size_t j = 0; j < r.x.size(); ++j) {
            double x = 0.5 * a * (r.x[i] + 1), y = 0.5 * b * (r.x[j] + 1);
            s += r.w[i] * r.w[j] * (x * x - y * y) / (x * x + y * y);
        }
    return 4 * s * 0.25 * a * b;
}

} // namespace

PlaneField cauchy_solve(const PlaneField& g, CauchyKind which, CauchyMethod method)
{
    g.validate();
    const Grid& G = g.grid;
    double hx = G.step(0), hy = G.step(1);
    double mx = std::min(g.support[0] - G.lo[0], G.hi[0] - g.support[1]);
    double my = std::min(g.support[2] - G.lo[1], G.hi[1] - g.support[3]);
    if (mx < 2 * hx || my < 2 * hy)
        throw MarginError("support box must stay at least two cells inside the grid");

    int nx = G.n[0], ny = G.n[1];
    double area = hx * hy;
    bool bar = which == CauchyKind::dbar;
    auto kernel = [&](int a, int b, int) -> cplx {
        if (a == 0 && b == 0)
            return 0.0;
        cplx z(a * hx, b * hy);
        return area / (pi * (bar ? z : std::conj(z)));
    };

    std::vector<cplx> u;
    if (method == CauchyMethod::automatic)
        method = G.size() > 4096 ? CauchyMethod::fft : CauchyMethod::direct;
    if (method == CauchyMethod::fft) {
        u = detail::fft_convolve(G, g.values, {nx - 1, ny - 1, 0}, kernel);
    } else {
        u.assign(G.size(), 0.0);
        std::vector<std::size_t> nz;
        for (std::size_t k = 0; k < G.size(); ++k)
            if (g.values[k] != 0.0)
                nz.push_back(k);
        parallel_for(G.size(), [&](std::size_t i) {
            auto mi = G.multi(i);
            cplx s = 0;
            for (std::size_t k : nz) {
                auto mk = G.multi(k);
                s += kernel(mi[0] - mk[0], mi[1] - mk[1], 0) * g.values[k];
            }
            u[i] = s;
        });
    }

    // Diagonal cell: the integral of 1/z over the cell vanishes; the linear Taylor
    // terms of g leave -(area/pi) d g (dbar kernel) plus an anisotropy term.
    auto dg = apply_wirtinger(G, g.values, bar ? CauchyKind::d : CauchyKind::dbar);
    auto dgc = apply_wirtinger(G, g.values, bar ? CauchyKind::dbar : CauchyKind::d);
    double C = anisotropy_integral(0.5 * hx, 0.5 * hy);
    for (std::size_t i = 0; i < G.size(); ++i)
        u[i] += -(area / pi) * dg[i] - (C / pi) * dgc[i];

    PlaneField out{G, std::move(u), {G.lo[0], G.hi[0], G.lo[1], G.hi[1]}};
    return out;
}

} // namespace geobeam
