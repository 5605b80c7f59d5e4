#include "geobeam/geometry.hpp"
#include "geobeam/grid.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace geobeam {

namespace {

Vec vec2(double a, double b)
{
    Vec v(2);
    v << a, b;
    return v;
}

Mat diag2(double a, double b)
{
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

Christoffel zero_christoffel(int dim)
{
    Christoffel c;
    c.dim = dim;
    return c;
}

// Gradient of a scalar function by 4th order central differences.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h)
{
    Vec g(x.size());
    for (int k = 0; k < x.size(); ++k) {
        Vec e = Vec::Zero(x.size());
        e(k) = h;
        g(k) = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h);
    }
    return g;
}

double circle_signed_distance(const BoundaryCircle& c, const Vec& x)
{
    double r = (x - c.center).norm();
    return c.interior_inside ? r - c.radius : c.radius - r;
}

} // namespace

std::string to_string(EntryClass c)
{
    switch (c) {
    case EntryClass::non_tangential:
        return "non_tangential";
    case EntryClass::tangential:
        return "tangential";
    default:
        return "trapped";
    }
}

std::string to_string(Tri t)
{
    switch (t) {
    case Tri::yes:
        return "true";
    case Tri::no:
        return "false";
    default:
        return "unknown";
    }
}

double MetricChart::diameter() const
{
    if (circle && circle->interior_inside)
        return 2 * circle->radius;
    return (hi - lo).norm();
}

Vec MetricChart::wrap(const Vec& x) const
{
    if (!periodic())
        return x;
    Vec y = x;
    for (int k = 0; k < period.size(); ++k) {
        double p = period(k);
        y(k) = x(k) - p * std::floor((x(k) - lo(k)) / p);
    }
    return y;
}

Vec MetricChart::displacement(const Vec& a, const Vec& b) const
{
    Vec d = b - a;
    if (periodic())
        for (int k = 0; k < period.size(); ++k)
            d(k) -= period(k) * std::round(d(k) / period(k));
    return d;
}

Mat MetricChart::metric(const Vec& x) const
{
    if (x.size() != dim)
        throw DomainError("point has wrong dimension for chart " + id);
    if (!x.allFinite())
        throw DomainError("non-finite point");
    if (boundary_fn && boundary_fn(x) > extension * diameter())
        throw DomainError("point outside chart " + id);
    Mat g = metric_fn(wrap(x));
    double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()))
        throw ConditioningError("metric not symmetric");
    double tr = g.trace();
    double det = g.determinant();
    if (!(tr > 0) || !(det > 1e-12 * std::pow(tr / dim, dim)))
        throw ConditioningError("near-singular metric in chart " + id);
    return g;
}

MetricChart euclidean_disk(double radius)
{
    MetricChart c;
    c.dim = 2;
    c.id = "euclidean_disk";
    c.kind = "euclidean_disk";
    c.lo = vec2(-radius, -radius);
    c.hi = vec2(radius, radius);
    c.circle = BoundaryCircle{vec2(0, 0), radius, true};
    c.metric_fn = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
    c.conformal_factor = [](const Vec&) { return 1.0; };
    c.boundary_fn = [radius](const Vec& x) { return x.norm() - radius; };
    c.christoffel_fn = [](const Vec&) { return zero_christoffel(2); };
    return c;
}

MetricChart euclidean_box(const Vec& lo, const Vec& hi)
{
    MetricChart c;
    c.dim = static_cast<int>(lo.size());
    c.id = "euclidean_box";
    c.kind = "euclidean_box";
    c.lo = lo;
    c.hi = hi;
    int d = c.dim;
    c.metric_fn = [d](const Vec&) { return Mat(Mat::Identity(d, d)); };
    c.conformal_factor = [](const Vec&) { return 1.0; };
    c.boundary_fn = [lo, hi](const Vec& x) {
        double s = -1e300;
        for (int k = 0; k < x.size(); ++k)
            s = std::max(s, std::max(lo(k) - x(k), x(k) - hi(k)));
        return s;
    };
    c.christoffel_fn = [d](const Vec&) { return zero_christoffel(d); };
    return c;
}

MetricChart conformal_disk(double radius, double amplitude)
{
    MetricChart c = euclidean_disk(radius);
    c.id = "conformal_disk";
    c.kind = "conformal_disk";
    c.metric_fn = [amplitude](const Vec& x) {
        double f = 1 + amplitude * std::exp(-x.squaredNorm());
        return Mat(f * Mat::Identity(2, 2));
    };
    c.christoffel_fn = nullptr;
    return c;
}

MetricChart spherical_cap(double alpha0)
{
    if (!(alpha0 > -1 && alpha0 < 1))
        throw ParameterError("cap parameter must lie in (-1, 1)");
    double rho0 = std::sqrt((1 - alpha0) / (1 + alpha0));
    MetricChart c;
    c.dim = 2;
    c.id = "spherical_cap";
    c.kind = "spherical_cap";
    c.lo = vec2(-rho0, -rho0);
    c.hi = vec2(rho0, rho0);
    c.circle = BoundaryCircle{vec2(0, 0), rho0, true};
    c.metric_fn = [](const Vec& p) {
        double s = 1 + p.squaredNorm();
        return Mat((4 / (s * s)) * Mat::Identity(2, 2));
    };
    c.conformal_factor = [](const Vec&) { return 1.0; };
    c.boundary_fn = [rho0](const Vec& p) { return p.norm() - rho0; };
    return c;
}

MetricChart polar_plane(double r0, double r1, double th0, double th1)
{
    if (!(r0 > 0))
        throw ParameterError("polar chart needs r0 > 0");
    MetricChart c = euclidean_box(vec2(r0, th0), vec2(r1, th1));
    c.id = "polar_plane";
    c.kind = "polar";
    c.metric_fn = [](const Vec& x) { return diag2(1, x(0) * x(0)); };
    c.christoffel_fn = nullptr;
    return c;
}

MetricChart sphere_angles(double th0, double th1, double ph0, double ph1)
{
    MetricChart c = euclidean_box(vec2(th0, ph0), vec2(th1, ph1));
    c.id = "sphere_angles";
    c.kind = "sphere_angles";
    c.metric_fn = [](const Vec& x) {
        double s = std::sin(x(0));
        return diag2(1, s * s);
    };
    c.christoffel_fn = nullptr;
    return c;
}

MetricChart tabulated_chart(const Vec& lo, const Vec& hi, int nx, int ny, const std::vector<double>& g11,
                            const std::vector<double>& g12, const std::vector<double>& g22,
                            std::optional<BoundaryCircle> circle)
{
    auto grid = Grid::make({lo(0), lo(1)}, {hi(0), hi(1)}, {nx, ny});
    if (g11.size() != grid.size() || g12.size() != grid.size() || g22.size() != grid.size())
        throw ShapeError("tabulated metric size does not match grid");
    auto data = std::make_shared<std::array<std::vector<double>, 3>>(std::array<std::vector<double>, 3>{g11, g12, g22});
    MetricChart c = euclidean_box(lo, hi);
    c.id = "tabulated";
    c.kind = "tabulated";
    c.christoffel_fn = nullptr;
    c.metric_fn = [grid, data](const Vec& x) {
        Mat m(2, 2);
        m(0, 0) = interp_cubic(grid, (*data)[0], x);
        m(0, 1) = m(1, 0) = interp_cubic(grid, (*data)[1], x);
        m(1, 1) = interp_cubic(grid, (*data)[2], x);
        return m;
    };
    if (circle) {
        c.circle = circle;
        BoundaryCircle bc = *circle;
        c.boundary_fn = [bc](const Vec& x) { return circle_signed_distance(bc, x); };
    }
    return c;
}

MetricChart flat_torus_with_hole(double Lx, double Ly, const Vec& hole_center, double hole_radius)
{
    MetricChart c;
    c.dim = 2;
    c.id = "flat_torus_with_hole";
    c.kind = "flat_torus";
    c.lo = vec2(0, 0);
    c.hi = vec2(Lx, Ly);
    c.period = vec2(Lx, Ly);
    c.circle = BoundaryCircle{hole_center, hole_radius, false};
    c.metric_fn = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
    c.conformal_factor = [](const Vec&) { return 1.0; };
    c.christoffel_fn = [](const Vec&) { return zero_christoffel(2); };
    Vec per = c.period;
    c.boundary_fn = [hole_center, hole_radius, per](const Vec& x) {
        Vec d = x - hole_center;
        for (int k = 0; k < 2; ++k)
            d(k) -= per(k) * std::round(d(k) / per(k));
        return hole_radius - d.norm();
    };
    return c;
}

MetricChart admissible_chart(const MetricChart& transversal, double x1_lo, double x1_hi,
                             std::function<double(const Vec&)> cfun)
{
    if (transversal.dim != 2)
        throw ParameterError("admissible chart needs a two dimensional transversal chart");
    MetricChart c;
    c.dim = 3;
    c.id = "admissible(" + transversal.id + ")";
    c.kind = "admissible";
    c.lo = Vec(3);
    c.hi = Vec(3);
    c.lo << x1_lo, transversal.lo(0), transversal.lo(1);
    c.hi << x1_hi, transversal.hi(0), transversal.hi(1);
    auto tr = std::make_shared<MetricChart>(transversal);
    if (!cfun)
        cfun = [](const Vec&) { return 1.0; };
    c.conformal_factor = cfun;
    c.metric_fn = [tr, cfun](const Vec& x) {
        Vec xp = x.tail(2);
        Mat g = Mat::Zero(3, 3);
        g(0, 0) = 1;
        g.bottomRightCorner(2, 2) = tr->metric_fn(tr->wrap(xp));
        return Mat(cfun(x) * g);
    };
    c.boundary_fn = [tr, x1_lo, x1_hi](const Vec& x) {
        Vec xp = x.tail(2);
        double b = tr->boundary_fn ? tr->boundary_fn(xp) : -1.0;
        return std::max(b, std::max(x1_lo - x(0), x(0) - x1_hi));
    };
    return c;
}

Christoffel christoffel(const MetricChart& chart, const Vec& x)
{
    if (chart.boundary_fn && chart.boundary_fn(x) > chart.extension * chart.diameter())
        throw DomainError("christoffel: point outside chart " + chart.id);
    if (chart.christoffel_fn)
        return chart.christoffel_fn(x);
    int d = chart.dim;
    double h = chart.fd_step();
    Mat g = chart.metric(x);
    Mat gi = g.inverse();
    Mat dg[3];
    for (int k = 0; k < d; ++k) {
        Vec e = Vec::Zero(d);
        e(k) = h;
        dg[k] = (-chart.metric_fn(chart.wrap(x + 2 * e)) + 8 * chart.metric_fn(chart.wrap(x + e)) -
                 8 * chart.metric_fn(chart.wrap(x - e)) + chart.metric_fn(chart.wrap(x - 2 * e))) /
                (12 * h);
    }
    Christoffel G;
    G.dim = d;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = j; k < d; ++k) {
                double s = 0;
                for (int l = 0; l < d; ++l)
                    s += gi(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
                G.v[i][j][k] = G.v[i][k][j] = 0.5 * s;
            }
    return G;
}

double gaussian_curvature(const MetricChart& chart, const Vec& x)
{
    if (chart.dim != 2)
        throw GeometryError("gaussian curvature needs a two dimensional chart");
    double h = 10 * chart.fd_step();
    Christoffel G = christoffel(chart, x);
    // dG[k] = d/dx_k Gamma
    Christoffel dG[2];
    for (int k = 0; k < 2; ++k) {
        Vec e = Vec::Zero(2);
        e(k) = h;
        Christoffel a = christoffel(chart, x + 2 * e), b = christoffel(chart, x + e);
        Christoffel c = christoffel(chart, x - e), dd = christoffel(chart, x - 2 * e);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int l = 0; l < 2; ++l)
                    dG[k].v[i][j][l] = (-a.v[i][j][l] + 8 * b.v[i][j][l] - 8 * c.v[i][j][l] + dd.v[i][j][l]) / (12 * h);
    }
    // R^i_{212} = d_1 G^i_22 - d_2 G^i_12 + G^i_1m G^m_22 - G^i_2m G^m_12
    double R[2];
    for (int i = 0; i < 2; ++i) {
        double s = dG[0].v[i][1][1] - dG[1].v[i][0][1];
        for (int m = 0; m < 2; ++m)
            s += G.v[i][0][m] * G.v[m][1][1] - G.v[i][1][m] * G.v[m][0][1];
        R[i] = s;
    }
    Mat g = chart.metric(x);
    double R1212 = g(0, 0) * R[0] + g(0, 1) * R[1];
    return R1212 / g.determinant();
}

void geodesic_rk4_step(const MetricChart& chart, Vec& x, Vec& v, double dt)
{
    int d = chart.dim;
    auto acc = [&](const Vec& xx, const Vec& vv) {
        Christoffel G = christoffel(chart, xx);
        Vec a = Vec::Zero(d);
        for (int i = 0; i < d; ++i) {
            double s = 0;
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k)
                    s += G.v[i][j][k] * vv(j) * vv(k);
            a(i) = -s;
        }
        return a;
    };
    Vec k1x = v, k1v = acc(x, v);
    Vec x2 = x + 0.5 * dt * k1x, v2 = v + 0.5 * dt * k1v;
    Vec k2x = v2, k2v = acc(x2, v2);
    Vec x3 = x + 0.5 * dt * k2x, v3 = v + 0.5 * dt * k2v;
    Vec k3x = v3, k3v = acc(x3, v3);
    Vec x4 = x + dt * k3x, v4 = v + dt * k3v;
    Vec k4x = v4, k4v = acc(x4, v4);
    x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (!x.allFinite() || !v.allFinite() || v.norm() > 1e8)
        throw IntegrationError("geodesic state blew up");
}

namespace {

// |<v, nu>|_g with nu the outward g-unit normal; sign positive for outward v.
double normal_component(const MetricChart& chart, const Vec& x, const Vec& v)
{
    Vec db = fd_gradient(chart.boundary_fn, x, chart.fd_step());
    Mat gi = chart.metric(x).inverse();
    double nrm = std::sqrt(db.dot(gi * db));
    if (!(nrm > 1e-12))
        throw GeometryError("boundary function has vanishing gradient");
    return db.dot(v) / nrm;
}

} // namespace

GeodesicPath integrate_geodesic(const MetricChart& chart, const Vec& x0, const Vec& v0, const GeodesicOptions& opt)
{
    double diam = chart.diameter();
    double step = opt.step > 0 ? opt.step : 0.005 * diam;
    double maxlen = opt.max_length > 0 ? opt.max_length : 20 * diam;
    if (std::abs(chart.boundary_fn(x0)) > 1e-6 * std::max(1.0, diam))
        throw DomainError("geodesic start is not on the boundary");
    double speed = chart.norm(x0, v0);
    if (std::abs(speed - 1) > 1e-8)
        throw DomainError("initial vector is not unit speed");

    GeodesicPath path;
    path.x0 = x0;
    path.v0 = v0;
    path.step = step;
    double cin = -normal_component(chart, x0, v0);
    path.entry_cos = std::abs(cin);
    path.samples.push_back({0.0, chart.wrap(x0), v0});
    if (cin <= opt.tangency_threshold) {
        path.classification = EntryClass::tangential;
        path.exit_time = 0.0;
        return path;
    }

    Vec x = chart.wrap(x0), v = v0;
    double t = 0;
    while (t < maxlen) {
        Vec x1 = x, v1 = v;
        geodesic_rk4_step(chart, x1, v1, step);
        double b1 = chart.boundary_fn(x1);
        if (b1 > 0) {
            double lo = 0, hi = 1;
            Vec xe = x1, ve = v1;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                Vec xm = x, vm = v;
                geodesic_rk4_step(chart, xm, vm, mid * step);
                double bm = chart.boundary_fn(xm);
                if (bm > 0) {
                    hi = mid;
                    xe = xm;
                    ve = vm;
                } else {
                    lo = mid;
                }
                if (std::abs(bm) < 1e-12 || (hi - lo) * step < 1e-14) {
                    if (bm <= 0) {
                        xe = xm;
                        ve = vm;
                        hi = mid;
                    }
                    break;
                }
            }
            double te = t + hi * step;
            path.samples.push_back({te, chart.wrap(xe), ve});
            path.exit_time = te;
            double cout = normal_component(chart, xe, ve);
            path.exit_cos = std::abs(cout);
            bool ok = cin > opt.tangency_threshold && cout > opt.tangency_threshold;
            path.classification = ok ? EntryClass::non_tangential : EntryClass::tangential;
            return path;
        }
        x = chart.wrap(x1);
        v = v1;
        t += step;
        path.samples.push_back({t, x, v});
    }
    path.classification = EntryClass::trapped;
    path.exit_time = std::numeric_limits<double>::infinity();
    return path;
}

std::pair<Vec, Vec> GeodesicPath::state_at(const MetricChart& chart, double t) const
{
    if (samples.empty())
        throw DomainError("empty geodesic");
    const auto& first = samples.front();
    const auto& last = samples.back();
    auto run = [&](const GeodesicSample& s, double dt) {
        Vec x = s.x, v = s.v;
        int n = std::max(1, static_cast<int>(std::ceil(std::abs(dt) / step - 1e-9)));
        for (int k = 0; k < n; ++k)
            geodesic_rk4_step(chart, x, v, dt / n);
        return std::make_pair(chart.wrap(x), v);
    };
    if (t <= first.t)
        return t == first.t ? std::make_pair(first.x, first.v) : run(first, t - first.t);
    if (t >= last.t)
        return t == last.t ? std::make_pair(last.x, last.v) : run(last, t - last.t);
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double tt, const GeodesicSample& s) { return tt < s.t; });
    const auto& s = *(it - 1);
    if (t == s.t)
        return {s.x, s.v};
    return run(s, t - s.t);
}

BoundaryFrame boundary_frame(const MetricChart& chart, const Vec& x)
{
    if (chart.dim != 2)
        throw GeometryError("boundary frame needs a two dimensional chart");
    Vec db = fd_gradient(chart.boundary_fn, x, chart.fd_step());
    Mat g = chart.metric(x);
    Mat gi = g.inverse();
    double nrm = std::sqrt(db.dot(gi * db));
    if (!(nrm > 1e-12))
        throw GeometryError("non-smooth boundary sampling: vanishing boundary gradient");
    BoundaryFrame f;
    f.x = x;
    f.inward = -(gi * db) / nrm;
    Vec w = g * f.inward;
    Vec t = vec2(-w(1), w(0));
    f.tangent = t / std::sqrt(t.dot(g * t));
    return f;
}

std::vector<Vec> boundary_points(const MetricChart& chart, int n)
{
    if (!chart.circle)
        throw GeometryError("chart " + chart.id + " has no smooth boundary parametrisation");
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const auto& c = *chart.circle;
    for (int i = 0; i < n; ++i) {
        double a = 2 * pi * i / n;
        pts.push_back(chart.wrap(c.center + c.radius * vec2(std::cos(a), std::sin(a))));
    }
    return pts;
}

std::vector<GeodesicPath> boundary_fan(const MetricChart& chart, int n_points, int n_dirs, const FanOptions& opt)
{
    if (n_points <= 0 || n_dirs <= 0)
        throw ConfigurationError("fan needs positive point and direction counts");
    auto pts = boundary_points(chart, n_points);
    std::size_t total = static_cast<std::size_t>(n_points) * static_cast<std::size_t>(n_dirs);
    std::vector<GeodesicPath> all(total);
    parallel_for(
        total,
        [&](std::size_t idx) {
            int i = static_cast<int>(idx / static_cast<std::size_t>(n_dirs));
            int j = static_cast<int>(idx % static_cast<std::size_t>(n_dirs));
            BoundaryFrame f = boundary_frame(chart, pts[static_cast<std::size_t>(i)]);
            double th = -pi / 2 + pi * (j + 0.5) / n_dirs;
            Vec v = std::cos(th) * f.inward + std::sin(th) * f.tangent;
            all[idx] = integrate_geodesic(chart, f.x, v, opt.geo);
        },
        opt.workers);
    std::vector<GeodesicPath> kept;
    for (auto& p : all)
        if (p.classification == EntryClass::non_tangential)
            kept.push_back(std::move(p));
    double frac = static_cast<double>(kept.size()) / static_cast<double>(total);
    if (kept.empty() || frac < opt.min_fan_fraction)
        throw ConfigurationError("fan nearly empty after tangency filtering (" + std::to_string(kept.size()) + " of " +
                                 std::to_string(total) + " kept)");
    return kept;
}

SimplicityReport check_simple(const MetricChart& chart, const SimpleOptions& opt)
{
    if (chart.dim != 2)
        throw GeometryError("simplicity check needs a two dimensional chart");
    SimplicityReport rep;
    auto pts = boundary_points(chart, opt.n_boundary);

    double hb = 1e-3 * chart.diameter();
    auto grad = [&](const Vec& x) { return fd_gradient(chart.boundary_fn, x, chart.fd_step()); };
    double min_kappa = 1e300;
    for (const auto& p : pts) {
        Mat hess(2, 2);
        for (int j = 0; j < 2; ++j) {
            Vec e = Vec::Zero(2);
            e(j) = hb;
            Vec d = (-grad(p + 2 * e) + 8 * grad(p + e) - 8 * grad(p - e) + grad(p - 2 * e)) / (12 * hb);
            hess.col(j) = d;
        }
        hess = 0.5 * (hess + hess.transpose()).eval();
        Vec db = grad(p);
        Christoffel G = christoffel(chart, p);
        BoundaryFrame f = boundary_frame(chart, p);
        Mat gi = chart.metric(p).inverse();
        double nrm = std::sqrt(db.dot(gi * db));
        double s = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double hij = hess(i, j);
                for (int k = 0; k < 2; ++k)
                    hij -= G.v[k][i][j] * db(k);
                s += f.tangent(i) * f.tangent(j) * hij;
            }
        min_kappa = std::min(min_kappa, s / nrm);
    }
    rep.min_second_fundamental = min_kappa;
    rep.convex_boundary = min_kappa > opt.convexity_tol;

    FanOptions fo;
    fo.geo = opt.geo;
    fo.min_fan_fraction = 0.0;
    std::vector<GeodesicPath> fan;
    try {
        fan = boundary_fan(chart, std::max(4, opt.n_boundary / 4), opt.n_dirs, fo);
    } catch (const ConfigurationError&) {
        fan.clear();
    }
    double min_j = 1e300;
    bool conj = false;
    for (const auto& path : fan) {
        if (path.classification == EntryClass::trapped) {
            rep.trapped_found = true;
            continue;
        }
        // J'' + K J = 0, J(0) = 0, J'(0) = 1
        double L = path.exit_time;
        int n = std::max(8, static_cast<int>(std::ceil(L / (4 * path.step))));
        double dt = L / n;
        double J = 0, Jp = 1;
        auto K = [&](double t) { return gaussian_curvature(chart, path.state_at(chart, t).first); };
        double Ka = K(0);
        for (int k = 0; k < n; ++k) {
            double t = k * dt;
            double Km = K(t + 0.5 * dt), Kb = K(t + dt);
            double a1 = Jp, b1 = -Ka * J;
            double a2 = Jp + 0.5 * dt * b1, b2 = -Km * (J + 0.5 * dt * a1);
            double a3 = Jp + 0.5 * dt * b2, b3 = -Km * (J + 0.5 * dt * a2);
            double a4 = Jp + dt * b3, b4 = -Kb * (J + dt * a3);
            J += dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
            Jp += dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
            Ka = Kb;
            double ratio = J / (t + dt);
            min_j = std::min(min_j, ratio);
            if (J <= 1e-6 * (t + dt))
                conj = true;
        }
    }
    rep.min_jacobi = fan.empty() ? 0.0 : min_j;
    rep.no_conjugate_points = !fan.empty() && !conj;
    if (rep.convex_boundary && rep.no_conjugate_points && !rep.trapped_found)
        rep.diffeomorphic_exp = Tri::yes;
    else
        rep.diffeomorphic_exp = Tri::unknown;
    return rep;
}

FermiFrame::FermiFrame(MetricChart chart, GeodesicPath base, double half_width)
    : chart_(std::move(chart)), base_(std::move(base)), half_width_(half_width)
{
    if (chart_.dim != 2)
        throw FrameError("Fermi frames are built on two dimensional transversal charts");
    if (base_.classification != EntryClass::non_tangential)
        throw FrameError("Fermi frame needs a non-tangential geodesic");
    if (!(half_width > 0))
        throw FrameError("tube half width must be positive");
}

Vec FermiFrame::normal(double t) const
{
    auto [x, v] = base_.state_at(chart_, t);
    Mat g = chart_.metric(x);
    Vec w = g * v;
    Vec n = vec2(-w(1), w(0));
    return n / std::sqrt(n.dot(g * n));
}

Vec FermiFrame::chart_map(double t, double y) const
{
    auto [x, v] = base_.state_at(chart_, t);
    if (y == 0)
        return x;
    Mat g = chart_.metric(x);
    Vec w = g * v;
    Vec n = vec2(-w(1), w(0));
    n /= std::sqrt(n.dot(g * n));
    Vec xx = x, vv = y * n;
    const int steps = 16;
    for (int k = 0; k < steps; ++k)
        geodesic_rk4_step(chart_, xx, vv, 1.0 / steps);
    return chart_.wrap(xx);
}

Mat FermiFrame::jacobian(double t, double y) const
{
    double h = 5e-4 * chart_.diameter();
    Vec c = chart_map(t, y);
    auto d = [&](double dt, double dy) { return chart_.displacement(c, chart_map(t + dt, y + dy)); };
    Mat J(2, 2);
    J.col(0) = (-d(2 * h, 0) + 8 * d(h, 0) - 8 * d(-h, 0) + d(-2 * h, 0)) / (12 * h);
    J.col(1) = (-d(0, 2 * h) + 8 * d(0, h) - 8 * d(0, -h) + d(0, -2 * h)) / (12 * h);
    return J;
}

Mat FermiFrame::metric_in_frame(double t, double y) const
{
    Mat J = jacobian(t, y);
    Mat g = chart_.metric(chart_map(t, y));
    return J.transpose() * g * J;
}

std::pair<double, double> FermiFrame::inverse_map(const Vec& x, double t_lo, double t_hi) const
{
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t k = 0; k < base_.samples.size(); ++k) {
        if (base_.samples[k].t < t_lo || base_.samples[k].t > t_hi)
            continue;
        double d = chart_.displacement(base_.samples[k].x, x).norm();
        if (d < bd) {
            bd = d;
            best = k;
        }
    }
    const auto& s = base_.samples[best];
    double t = s.t;
    Vec d0 = chart_.displacement(s.x, x);
    double y = d0.dot(chart_.metric(s.x) * normal(t));
    for (int it = 0; it < 40; ++it) {
        Vec r = chart_.displacement(x, chart_map(t, y));
        if (r.norm() < 1e-15 * std::max(1.0, chart_.diameter()))
            break;
        Mat J = jacobian(t, y);
        Vec dlt = J.fullPivLu().solve(-r);
        t += dlt(0);
        y += dlt(1);
        if (dlt.norm() < 1e-15)
            break;
    }
    return {t, y};
}

FermiFrame fermi_coordinates(const MetricChart& chart, const GeodesicPath& geo, double half_width)
{
    FermiFrame f(chart, geo, half_width);
    double L = geo.exit_time;
    for (int k = 0; k <= 20; ++k) {
        double t = L * k / 20.0;
        for (double y : {-half_width, -0.5 * half_width, 0.5 * half_width, half_width}) {
            Mat G;
            try {
                G = f.metric_in_frame(t, y);
            } catch (const Error& e) {
                throw FrameError(std::string("tube leaves the chart: ") + e.what());
            }
            Eigen::SelfAdjointEigenSolver<Mat> es(G);
            if (!(es.eigenvalues().minCoeff() > 1e-3 * std::max(1.0, es.eigenvalues().maxCoeff())))
                throw FrameError("tube width exceeds the focal radius (frame metric degenerates)");
        }
    }
    return f;
}

PolarNormalCoords::PolarNormalCoords(MetricChart chart, const Vec& omega, bool require_simple)
    : chart_(std::move(chart)), omega_(omega)
{
    if (chart_.dim != 2)
        throw UnsupportedGeometryError("polar normal coordinates need a two dimensional chart");
    if (require_simple) {
        auto rep = check_simple(chart_);
        if (!rep.simple())
            throw UnsupportedGeometryError("chart " + chart_.id + " is not simple");
    }
    Mat g = chart_.metric(omega_);
    bool on_boundary = std::abs(chart_.boundary_fn(omega_)) < 1e-8 * std::max(1.0, chart_.diameter());
    if (on_boundary) {
        BoundaryFrame f = boundary_frame(chart_, omega_);
        e1_ = f.inward;
        e2_ = f.tangent;
    } else {
        Vec a = vec2(1, 0);
        e1_ = a / std::sqrt(a.dot(g * a));
        Vec w = g * e1_;
        Vec b = vec2(-w(1), w(0));
        e2_ = b / std::sqrt(b.dot(g * b));
    }
}

Vec PolarNormalCoords::to_chart(double r, double theta) const
{
    if (r == 0)
        return omega_;
    Vec x = omega_;
    Vec v = r * (std::cos(theta) * e1_ + std::sin(theta) * e2_);
    const int steps = 128;
    for (int k = 0; k < steps; ++k)
        geodesic_rk4_step(chart_, x, v, 1.0 / steps);
    return x;
}

std::pair<double, double> PolarNormalCoords::from_chart(const Vec& x) const
{
    Mat g = chart_.metric(omega_);
    Vec d = x - omega_;
    double a = e1_.dot(g * d), b = e2_.dot(g * d);
    double r = std::hypot(a, b);
    if (r < 1e-14)
        return {0.0, 0.0};
    double th = std::atan2(b, a);
    double h = 1e-6 * std::max(1.0, chart_.diameter());
    for (int it = 0; it < 40; ++it) {
        Vec res = to_chart(r, th) - x;
        if (res.norm() < 1e-14)
            break;
        Mat J(2, 2);
        J.col(0) = (to_chart(r + h, th) - to_chart(r - h, th)) / (2 * h);
        J.col(1) = (to_chart(r, th + h) - to_chart(r, th - h)) / (2 * h);
        Vec dl = J.fullPivLu().solve(-res);
        r += dl(0);
        th += dl(1);
        if (dl.norm() < 1e-15)
            break;
    }
    return {r, th};
}

Mat PolarNormalCoords::metric_block(double r, double theta) const
{
    double h = 1e-3 * std::max(1.0, chart_.diameter());
    auto D = [&](double dr, double dth) { return to_chart(r + dr, theta + dth); };
    Mat J(2, 2);
    J.col(0) = (-D(2 * h, 0) + 8 * D(h, 0) - 8 * D(-h, 0) + D(-2 * h, 0)) / (12 * h);
    J.col(1) = (-D(0, 2 * h) + 8 * D(0, h) - 8 * D(0, -h) + D(0, -2 * h)) / (12 * h);
    Mat g = chart_.metric(to_chart(r, theta));
    return J.transpose() * g * J;
}

PolarNormalCoords polar_normal_coords(const MetricChart& chart, const Vec& omega)
{
    return PolarNormalCoords(chart, omega, true);
}

} // namespace geobeam
