#include "geobeam/holonomy.hpp"

#include "json.hpp"

#include <cmath>
#include <deque>
#include <optional>

namespace geobeam {

void Curve::validate() const
{
    if (samples.size() < 2)
        throw ShapeError("curve needs at least two samples");
    for (std::size_t k = 1; k < samples.size(); ++k)
        if (!(samples[k].t > samples[k - 1].t))
            throw ShapeError("curve parameter must increase");
    if (closed && (samples.front().x - samples.back().x).norm() > 1e-10)
        throw ShapeError("closed curve '" + id + "' does not return to its start");
}

std::pair<Vec, Vec> Curve::hermite(std::size_t k, double s) const
{
    const auto& a = samples[k];
    const auto& b = samples[k + 1];
    double dt = b.t - a.t;
    double s2 = s * s, s3 = s2 * s;
    double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    double d00 = 6 * s2 - 6 * s, d10 = 3 * s2 - 4 * s + 1, d01 = -6 * s2 + 6 * s, d11 = 3 * s2 - 2 * s;
    Vec x = h00 * a.x + h10 * dt * a.dx + h01 * b.x + h11 * dt * b.dx;
    Vec v = (d00 * a.x + d01 * b.x) / dt + d10 * a.dx + d11 * b.dx;
    return {x, v};
}

Curve make_curve(const std::string& id, const std::function<Vec(double)>& x, const std::function<Vec(double)>& dx,
                 double a, double b, int n, bool closed)
{
    if (n < 2 || !(b > a))
        throw ParameterError("curve needs n >= 2 samples on a non-empty interval");
    Curve c;
    c.id = id;
    c.closed = closed;
    for (int k = 0; k < n; ++k) {
        double t = a + (b - a) * k / (n - 1);
        c.samples.push_back({t, x(t), dx(t)});
    }
    if (closed)
        c.samples.back().x = c.samples.front().x;
    c.validate();
    return c;
}

Curve circle_loop(const Vec& center, double radius, int n, double turns, const std::string& id)
{
    double T = 2 * pi * turns;
    return make_curve(
        id.empty() ? "circle" : id,
        [&](double t) {
            Vec x(2);
            x << center(0) + radius * std::cos(t), center(1) + radius * std::sin(t);
            return x;
        },
        [&](double t) {
            Vec v(2);
            v << -radius * std::sin(t), radius * std::cos(t);
            return v;
        },
        0.0, T, n, std::abs(turns - std::round(turns)) < 1e-14);
}

Curve concatenate(const Curve& a, const Curve& b)
{
    a.validate();
    b.validate();
    if ((a.samples.back().x - b.samples.front().x).norm() > 1e-10)
        throw ShapeError("curves do not connect");
    Curve c;
    c.id = a.id + "+" + b.id;
    c.samples = a.samples;
    double shift = a.samples.back().t - b.samples.front().t;
    for (std::size_t k = 1; k < b.samples.size(); ++k) {
        auto s = b.samples[k];
        s.t += shift;
        c.samples.push_back(s);
    }
    c.closed = (c.samples.front().x - c.samples.back().x).norm() <= 1e-10;
    return c;
}

Curve reverse(const Curve& c)
{
    Curve r;
    r.id = c.id + "^-1";
    r.closed = c.closed;
    double T = c.samples.back().t + c.samples.front().t;
    for (auto it = c.samples.rbegin(); it != c.samples.rend(); ++it)
        r.samples.push_back({T - it->t, it->x, Vec(-it->dx)});
    return r;
}

MetricChart planar_annulus(double r0, double r1)
{
    if (!(r0 > 0 && r1 > r0))
        throw ParameterError("annulus needs 0 < r0 < r1");
    Vec lo(2), hi(2);
    lo << -r1, -r1;
    hi << r1, r1;
    MetricChart c = euclidean_box(lo, hi);
    c.id = "annulus";
    c.kind = "annulus";
    c.boundary_fn = [r0, r1](const Vec& x) {
        double r = x.norm();
        return std::max(r - r1, r0 - r);
    };
    return c;
}

namespace {

cplx pair_at(const SampledOneForm& A, const Vec& x, const Vec& v)
{
    if (!grid_contains(A.grid, x, 1e-9))
        throw SamplingError("curve leaves the sampling grid");
    CVec a = A.at(x);
    cplx s = 0;
    for (int k = 0; k < v.size(); ++k)
        s += a(k) * v(k);
    return s;
}

} // namespace

cplx line_integral(const SampledOneForm& A, const Curve& gamma)
{
    gamma.validate();
    cplx s = 0;
    for (std::size_t k = 0; k + 1 < gamma.samples.size(); ++k) {
        const auto& a = gamma.samples[k];
        const auto& b = gamma.samples[k + 1];
        auto mid = gamma.hermite(k, 0.5);
        double dt = b.t - a.t;
        s += dt / 6 * (pair_at(A, a.x, a.dx) + 4.0 * pair_at(A, mid.first, mid.second) + pair_at(A, b.x, b.dx));
    }
    return s;
}

TransportResult parallel_transport(const SampledOneForm& A, const Curve& gamma, cplx s0, double tol)
{
    gamma.validate();
    TransportResult r;
    cplx s = s0;
    for (std::size_t k = 0; k + 1 < gamma.samples.size(); ++k) {
        const auto& a = gamma.samples[k];
        const auto& b = gamma.samples[k + 1];
        double dt = b.t - a.t;
        auto mid = gamma.hermite(k, 0.5);
        cplx fa = -I * pair_at(A, a.x, a.dx);
        cplx fm = -I * pair_at(A, mid.first, mid.second);
        cplx fb = -I * pair_at(A, b.x, b.dx);
        cplx k1 = fa * s;
        cplx k2 = fm * (s + 0.5 * dt * k1);
        cplx k3 = fm * (s + 0.5 * dt * k2);
        cplx k4 = fb * (s + dt * k3);
        s += dt / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    r.s_rk4 = s;
    r.integral = line_integral(A, gamma);
    r.s_closed = std::exp(-I * r.integral) * s0;
    r.discrepancy = std::abs(r.s_rk4 - r.s_closed);
    if (r.discrepancy > tol * std::max(1.0, std::abs(s0)))
        throw IntegrationError("RK4 transport and closed form differ by " + std::to_string(r.discrepancy));
    return r;
}

double closedness_defect(const SampledOneForm& A, int ring_cells)
{
    const Grid& g = A.grid;
    int d = A.dim();
    std::vector<std::vector<std::vector<cplx>>> D(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        D[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k)
            if (j != k)
                diff_axis(g, A.comp[static_cast<std::size_t>(j)], k, D[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]);
    }
    double ring = 0;
    for (int k = 0; k < g.dim; ++k)
        ring = std::max(ring, ring_cells * g.step(k));
    double worst = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto m = g.multi(i);
        bool skip = false;
        for (int k = 0; k < g.dim; ++k) {
            auto kk = static_cast<std::size_t>(k);
            if (!g.periodic[kk] && (m[kk] < ring_cells || m[kk] >= g.n[kk] - ring_cells))
                skip = true;
        }
        if (skip || A.chart->boundary_fn(g.point(i)) > -ring)
            continue;
        for (int j = 0; j < d; ++j)
            for (int k = j + 1; k < d; ++k) {
                cplx c = D[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)][i] -
                         D[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)][i];
                worst = std::max(worst, std::abs(c));
            }
    }
    return worst;
}

HolonomyReport loop_holonomy(const SampledOneForm& A, const std::vector<Curve>& loops, const HolonomyOptions& opt)
{
    HolonomyReport rep;
    rep.max_dA = closedness_defect(A, opt.ring_cells);
    if (rep.max_dA > opt.closed_tol)
        throw ClosednessError("|dA| reaches " + std::to_string(rep.max_dA) + "; holonomy is not homotopy invariant");
    rep.loops.resize(loops.size());
    parallel_for(loops.size(), [&](std::size_t k) {
        const Curve& c = loops[k];
        // on a torus a loop may close up to a period
        bool wraps = A.chart->periodic() && c.samples.size() > 1 &&
                     A.chart->displacement(c.samples.front().x, c.samples.back().x).norm() < 1e-10;
        if (!c.closed && !wraps)
            throw ShapeError("holonomy needs closed loops; '" + c.id + "' is open");
        LoopHolonomy& h = rep.loops[k];
        h.id = c.id.empty() ? "loop" + std::to_string(k) : c.id;
        h.integral = line_integral(A, c);
        h.P = std::exp(-I * h.integral);
        cplx w = h.integral / (2 * pi);
        h.winding = w.real();
        h.distance = std::hypot(w.real() - std::round(w.real()), w.imag());
        h.trivial = h.distance <= opt.tol;
    });
    for (const auto& h : rep.loops)
        rep.trivial = rep.trivial && h.trivial;
    return rep;
}

std::string HolonomyReport::to_json() const
{
    nlohmann::json j;
    j["trivial"] = trivial;
    j["max_dA"] = max_dA;
    j["loops"] = nlohmann::json::array();
    for (const auto& h : loops)
        j["loops"].push_back({{"loop", h.id},
                              {"integral_over_2pi_re", h.integral.real() / (2 * pi)},
                              {"integral_over_2pi_im", h.integral.imag() / (2 * pi)},
                              {"distance_to_integers", h.distance},
                              {"trivial", h.trivial}});
    return j.dump(2);
}

namespace {

// int over the edge from node a to its neighbour along `axis` in direction dir (+1 / -1) of A_axis,
// 4th order from node values on the grid line; falls back to one sided stencils near the boundary.
std::optional<cplx> edge_integral(const Grid& g, const std::vector<cplx>& a, const std::vector<char>& inside,
                                  std::size_t i, int axis, int dir, bool allow_low_order)
{
    auto kk = static_cast<std::size_t>(axis);
    auto m = g.multi(i);
    auto node = [&](int off) -> long {
        int j = m[kk] + off * dir;
        if (g.periodic[kk])
            j = ((j % g.n[kk]) + g.n[kk]) % g.n[kk];
        else if (j < 0 || j >= g.n[kk])
            return -1;
        auto mm = m;
        mm[kk] = j;
        std::size_t idx = g.index(mm[0], mm[1], mm[2]);
        return inside[idx] ? static_cast<long>(idx) : -1;
    };
    long p0 = node(0), p1 = node(1), pm = node(-1), p2 = node(2), p3 = node(3), pm2 = node(-2);
    double h = g.step(axis) * dir;
    auto f = [&](long p) { return a[static_cast<std::size_t>(p)]; };
    if (pm >= 0 && p2 >= 0)
        return h / 24 * (-f(pm) + 13.0 * f(p0) + 13.0 * f(p1) - f(p2));
    if (p2 >= 0 && p3 >= 0)
        return h / 24 * (9.0 * f(p0) + 19.0 * f(p1) - 5.0 * f(p2) + f(p3));
    if (pm >= 0 && pm2 >= 0)
        return h / 24 * (f(pm2) - 5.0 * f(pm) + 19.0 * f(p0) + 9.0 * f(p1));
    if (!allow_low_order)
        return std::nullopt;
    return h / 2 * (f(p0) + f(p1));
}

// Breadth-first spanning forest; `order` lists (axis, dir) neighbour moves. Edges without a
// 4th order stencil are used only for nodes the first pass cannot reach.
std::vector<cplx> integrate_tree(const SampledOneForm& A, const std::vector<char>& inside,
                                 const std::vector<std::size_t>& roots, const std::vector<std::pair<int, int>>& order)
{
    const Grid& g = A.grid;
    std::vector<cplx> phase(g.size(), 0.0);
    std::vector<char> seen(g.size(), 0);
    std::deque<std::size_t> queue;
    for (auto r : roots) {
        seen[r] = 1;
        queue.push_back(r);
    }
    for (bool low : {false, true}) {
        if (low)
            for (std::size_t i = 0; i < g.size(); ++i)
                if (seen[i])
                    queue.push_back(i);
        while (!queue.empty()) {
            std::size_t i = queue.front();
            queue.pop_front();
            auto m = g.multi(i);
            for (auto [axis, dir] : order) {
                auto kk = static_cast<std::size_t>(axis);
                int j = m[kk] + dir;
                if (g.periodic[kk])
                    j = ((j % g.n[kk]) + g.n[kk]) % g.n[kk];
                else if (j < 0 || j >= g.n[kk])
                    continue;
                auto mm = m;
                mm[kk] = j;
                std::size_t nb = g.index(mm[0], mm[1], mm[2]);
                if (!inside[nb] || seen[nb])
                    continue;
                auto e = edge_integral(g, A.comp[kk], inside, i, axis, dir, low);
                if (!e)
                    continue;
                seen[nb] = 1;
                phase[nb] = phase[i] + *e;
                queue.push_back(nb);
            }
        }
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        if (inside[i] && !seen[i])
            throw GaugeError("grid node " + std::to_string(i) + " is not connected to any base point");
    return phase;
}

const double gauss3_x[3] = {0.5 - 0.5 * 0.7745966692414834, 0.5, 0.5 + 0.5 * 0.7745966692414834};
const double gauss3_w[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};

Vec project_to_boundary(const MetricChart& chart, Vec x)
{
    double e = 1e-6 * chart.diameter();
    for (int it = 0; it < 6; ++it) {
        double f = chart.boundary_fn(x);
        Vec grad(x.size());
        for (int k = 0; k < x.size(); ++k) {
            Vec p = x, m = x;
            p(k) += e;
            m(k) -= e;
            grad(k) = (chart.boundary_fn(p) - chart.boundary_fn(m)) / (2 * e);
        }
        double n2 = grad.squaredNorm();
        if (!(n2 > 0))
            break;
        x -= f / n2 * grad;
        if (std::abs(f) < 1e-14)
            break;
    }
    return x;
}

} // namespace

GaugeResult build_gauge(const SampledOneForm& A, const std::vector<Vec>& base_points, const GaugeOptions& opt)
{
    A.validate();
    if (base_points.empty())
        throw ParameterError("gauge construction needs at least one base point");
    if (!opt.loops.empty()) {
        auto rep = loop_holonomy(A, opt.loops, opt.holonomy);
        for (const auto& h : rep.loops)
            if (!h.trivial)
                throw GaugeError("non-trivial holonomy along loop '" + h.id + "': int A / 2 pi = " +
                                 std::to_string(h.winding));
    }
    const Grid& g = A.grid;
    const auto& chart = *A.chart;
    std::vector<char> inside(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i)
        inside[i] = chart.boundary_fn(g.point(i)) <= 0;

    std::vector<std::size_t> roots;
    for (const auto& b : base_points) {
        double best = 1e300;
        std::size_t arg = g.size();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!inside[i])
                continue;
            double d = chart.displacement(b, g.point(i)).norm();
            if (d < best) {
                best = d;
                arg = i;
            }
        }
        if (arg == g.size())
            throw GaugeError("no grid node inside the domain");
        roots.push_back(arg);
    }

    std::vector<std::pair<int, int>> fwd, bwd;
    for (int k = 0; k < g.dim; ++k) {
        fwd.emplace_back(k, 1);
        fwd.emplace_back(k, -1);
    }
    for (int k = g.dim - 1; k >= 0; --k) {
        bwd.emplace_back(k, -1);
        bwd.emplace_back(k, 1);
    }
    auto p1 = integrate_tree(A, inside, roots, fwd);
    auto p2 = integrate_tree(A, inside, roots, bwd);

    GaugeResult res;
    res.F = zero_field(A.chart, g);
    double ring = 0;
    for (int k = 0; k < g.dim; ++k)
        ring = std::max(ring, g.step(k));
    res.min_modulus = 1e300;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!inside[i])
            continue;
        cplx F1 = std::exp(I * p1[i]);
        cplx F2 = std::exp(I * p2[i]);
        res.tree_discrepancy = std::max(res.tree_discrepancy, std::abs(F1 - F2));
        res.F.values[i] = F1;
        res.min_modulus = std::min(res.min_modulus, std::abs(F1));
        Vec x = g.point(i);
        if (chart.boundary_fn(x) > -ring) {
            // continue F to the nearest boundary point along a straight segment
            Vec xb = project_to_boundary(chart, x);
            Vec dx = chart.displacement(x, xb);
            cplx s = 0;
            for (std::size_t q = 0; q < 3; ++q) {
                Vec y = chart.wrap(Vec(x + gauss3_x[q] * dx));
                CVec a = A.at(y);
                for (int k = 0; k < dx.size(); ++k)
                    s += gauss3_w[q] * a(k) * dx(k);
            }
            res.boundary_error = std::max(res.boundary_error, std::abs(F1 * std::exp(I * s) - 1.0));
        }
    }
    if (res.tree_discrepancy > opt.tree_tol)
        throw GaugeError("spanning trees disagree by " + std::to_string(res.tree_discrepancy) +
                         "; holonomy is not trivial or A is not closed");

    // certificate: A + i F^{-1} dF away from the boundary
    double cring = 0;
    for (int k = 0; k < g.dim; ++k)
        cring = std::max(cring, opt.ring_cells * g.step(k));
    std::vector<std::vector<cplx>> dF(static_cast<std::size_t>(g.dim));
    for (int k = 0; k < g.dim; ++k)
        diff_axis(g, res.F.values, k, dF[static_cast<std::size_t>(k)]);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!inside[i])
            continue;
        auto m = g.multi(i);
        bool skip = chart.boundary_fn(g.point(i)) > -cring;
        for (int k = 0; k < g.dim; ++k) {
            auto kk = static_cast<std::size_t>(k);
            if (!g.periodic[kk] && (m[kk] < opt.ring_cells || m[kk] >= g.n[kk] - opt.ring_cells))
                skip = true;
        }
        if (skip)
            continue;
        for (int k = 0; k < g.dim; ++k) {
            cplx c = A.comp[static_cast<std::size_t>(k)][i] + I * dF[static_cast<std::size_t>(k)][i] / res.F.values[i];
            res.certificate = std::max(res.certificate, std::abs(c));
        }
    }
    return res;
}

} // namespace geobeam
