#include "geobeam/experiments.hpp"

#include "geobeam/boundary.hpp"
#include "geobeam/carleman.hpp"
#include "geobeam/cgo.hpp"
#include "geobeam/gaussianbeam.hpp"
#include "geobeam/holonomy.hpp"
#include "geobeam/raytransform.hpp"

#include "json.hpp"

#include <fftw3.h>
#include <openssl/opensslv.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef GEOBEAM_VERSION
#define GEOBEAM_VERSION "0.0.0"
#endif

namespace geobeam {

namespace fs = std::filesystem;
using nlohmann::json;

std::string library_version()
{
    return GEOBEAM_VERSION;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v == 0 ? 0.0 : v);
    return buf;
}

bool RunResult::passed() const
{
    for (const auto& a : assertions)
        if (!a.pass)
            return false;
    return true;
}

namespace {

struct Cell {
    std::string text;
    Cell(double v) : text(csv_number(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(std::size_t v) : text(std::to_string(v)) {}
    Cell(const char* s) : text(csv_field(s)) {}
    Cell(const std::string& s) : text(csv_field(s)) {}
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::initializer_list<Cell> cells)
    {
        std::vector<std::string> r;
        for (const auto& c : cells)
            r.push_back(c.text);
        rows.push_back(std::move(r));
    }
    std::string text() const
    {
        std::string out;
        for (std::size_t k = 0; k < header.size(); ++k)
            out += (k ? "," : "") + csv_field(header[k]);
        out += "\n";
        for (const auto& r : rows) {
            for (std::size_t k = 0; k < r.size(); ++k)
                out += (k ? "," : "") + r[k];
            out += "\n";
        }
        return out;
    }
};

struct Output {
    std::vector<std::pair<std::string, Table>> tables; // suffix ("" for the main table), table
    json results = json::object();
    std::vector<Assertion> assertions;

    void check(const std::string& name, double value, const std::string& rel, double threshold)
    {
        bool ok = rel == "<=" ? value <= threshold : rel == ">=" ? value >= threshold : value == threshold;
        assertions.push_back({name, value, rel, threshold, ok && std::isfinite(value)});
    }
};

json number_json(double v)
{
    if (std::isfinite(v))
        return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

Vec vec_of(const std::vector<double>& v)
{
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k)
        out(static_cast<Eigen::Index>(k)) = v[k];
    return out;
}

Vec vector_key(const ExperimentConfig& cfg, const std::string& key, const std::vector<double>& fallback, int dim)
{
    auto v = cfg.numbers(key, fallback);
    if (static_cast<int>(v.size()) != dim)
        throw ConfigurationError("'" + key + "' needs " + std::to_string(dim) + " components");
    return vec_of(v);
}

std::function<cplx(const Vec&)> interpolant(const Grid& g, std::vector<cplx> values)
{
    auto data = std::make_shared<std::vector<cplx>>(std::move(values));
    return [g, data](const Vec& x) { return grid_contains(g, x) ? interp_cubic(g, *data, x) : cplx(0.0); };
}

// expression under `key` or the tabulated file under `file_key`; null when neither is given
std::function<cplx(const Vec&)> scalar_source(const ExperimentConfig& cfg, const std::string& key,
                                              const std::string& file_key, int dim)
{
    if (auto e = cfg.expr(key))
        return [e = *e](const Vec& x) { return e(x); };
    if (!file_key.empty() && cfg.has(file_key)) {
        auto tab = load_tabulated(cfg.file(file_key), dim, 1);
        return interpolant(tab.grid, tab.columns[0]);
    }
    return nullptr;
}

std::function<CVec(const Vec&)> covector_source(const ExperimentConfig& cfg, const std::string& prefix,
                                                const std::string& file_key, int dim)
{
    std::vector<std::optional<Expr>> parts;
    bool any = false;
    for (int k = 1; k <= dim; ++k) {
        parts.push_back(cfg.expr(prefix + std::to_string(k)));
        any = any || parts.back().has_value();
    }
    if (cfg.has(prefix + std::to_string(dim + 1)))
        throw ConfigurationError("'" + prefix + std::to_string(dim + 1) + "' exceeds the dimension " +
                                 std::to_string(dim));
    if (any) {
        if (!file_key.empty() && cfg.has(file_key))
            throw ConfigurationError("give either " + prefix + "k expressions or " + file_key + ", not both");
        return [parts, dim](const Vec& x) {
            CVec a = CVec::Zero(dim);
            for (int k = 0; k < dim; ++k)
                if (parts[static_cast<std::size_t>(k)])
                    a(k) = (*parts[static_cast<std::size_t>(k)])(x);
            return a;
        };
    }
    if (!file_key.empty() && cfg.has(file_key)) {
        auto tab = load_tabulated(cfg.file(file_key), dim, dim);
        std::vector<std::function<cplx(const Vec&)>> comps;
        for (auto& c : tab.columns)
            comps.push_back(interpolant(tab.grid, std::move(c)));
        return [comps, dim](const Vec& x) {
            CVec a(dim);
            for (int k = 0; k < dim; ++k)
                a(k) = comps[static_cast<std::size_t>(k)](x);
            return a;
        };
    }
    return nullptr;
}

std::string fmt_short(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

double local_order(double h0, double b0, double h1, double b1)
{
    return std::log(b1 / b0) / std::log(h1 / h0);
}

void sweep_assertions(const ExperimentConfig& cfg, Output& out, const std::vector<double>& hs,
                      std::vector<double> ratio)
{
    if (cfg.flag("test.inject_nonmonotone", false) && ratio.size() >= 2) {
        // synthetic bound that grows relative to h at the last step
        ratio.back() = 2 * ratio[ratio.size() - 2];
        out.results["injected_nonmonotone"] = true;
    }
    if (cfg.flag("assert.monotone", true)) {
        double worst = -1e300;
        for (std::size_t k = 1; k < ratio.size(); ++k)
            worst = std::max(worst, ratio[k] / ratio[k - 1]);
        if (ratio.size() >= 2)
            out.check("bound_over_h_strictly_decreasing (max successive quotient)", worst, "<=",
                      std::nextafter(1.0, 0.0));
    }
    if (cfg.has("assert.final_ratio") && ratio.size() >= 2)
        out.check("bound_over_h[last] / bound_over_h[first]", ratio.back() / ratio.front(), "<=",
                  cfg.number("assert.final_ratio", 0.5));
    std::vector<double> bounds;
    for (std::size_t k = 0; k < hs.size(); ++k)
        bounds.push_back(ratio[k] * hs[k]);
    if (hs.size() >= 2)
        out.results["fitted_order"] = fit_loglog_slope(hs, bounds);
}

// ---------------------------------------------------------------- riccati_demo

Output run_riccati(const ExperimentConfig& cfg)
{
    Output out;
    int m = cfg.integer("dim", 2);
    if (m < 1 || m > 3)
        throw ConfigurationError("dim must be 1, 2 or 3");
    double t0 = cfg.number("t0", 0), lo = cfg.number("t_lo", 0), hi = cfg.number("t_hi", 2);
    double c = cfg.number("h0_imag", 1);
    if (!(c > 0))
        throw ConfigurationError("h0_imag must be positive");
    RiccatiOptions ro;
    ro.step = cfg.number("step", ro.step);
    CMat H0 = CMat::Identity(m, m) * (I * c);
    auto sol = solve_riccati([m](double) { return Mat(Mat::Zero(m, m)); }, H0, t0, lo, hi, ro);

    Table t;
    t.header = {"t"};
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            t.header.push_back("H" + std::to_string(i + 1) + std::to_string(j + 1) + "_re");
            t.header.push_back("H" + std::to_string(i + 1) + std::to_string(j + 1) + "_im");
        }
    for (const char* h : {"exact_re", "exact_im", "error", "min_imag_eigenvalue"})
        t.header.push_back(h);
    double max_err = 0, min_eig = 1e300;
    for (std::size_t k = 0; k < sol.t.size(); ++k) {
        const CMat& H = sol.H[k];
        cplx exact = 1.0 / (sol.t[k] - t0 - I / c);
        double err = (H - CMat::Identity(m, m) * exact).cwiseAbs().maxCoeff();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(H.imag()));
        double e = es.eigenvalues().minCoeff();
        max_err = std::max(max_err, err);
        min_eig = std::min(min_eig, e);
        std::vector<std::string> row{csv_number(sol.t[k])};
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                row.push_back(csv_number(H(i, j).real()));
                row.push_back(csv_number(H(i, j).imag()));
            }
        for (double v : {exact.real(), exact.imag(), err, e})
            row.push_back(csv_number(v));
        t.rows.push_back(row);
    }
    out.tables.push_back({"", t});
    out.results["nodes"] = sol.t.size();
    out.results["max_error"] = max_err;
    out.results["min_imag_eigenvalue"] = min_eig;
    out.results["max_det_error"] = sol.max_det_error;
    out.results["max_residual"] = sol.max_residual;
    out.check("max |H - (t - t0 - i/c)^-1 I|", max_err, "<=", cfg.number("assert.max_error", 1e-6));
    out.check("min eigenvalue of Im H", min_eig, ">=", 0.0);
    out.check("det Im H identity error", sol.max_det_error, "<=", cfg.number("assert.det_error", 1e-6));
    return out;
}

// ---------------------------------------------------------------- beams

struct BeamSetup {
    MetricChart disk;
    GeodesicPath geo;
    ChartPtr c3;
    Grid g3;
    SampledOneForm A;
    SampledField q;
    BeamOptions opt;
    bool A_given = false, q_given = false;
};

BeamSetup beam_setup(const ExperimentConfig& cfg, int default_grid)
{
    BeamSetup s;
    double R = cfg.number("chart.radius", 1.0);
    s.disk = euclidean_disk(R);
    Vec x0 = vector_key(cfg, "beam.x0", {-R, 0.0}, 2);
    Vec v0 = vector_key(cfg, "beam.v0", {1.0, 0.0}, 2);
    s.geo = integrate_geodesic(s.disk, x0, v0.normalized());
    int n = cfg.grid > 0 ? cfg.grid : default_grid;
    double b = 1.5 * R;
    s.g3 = Grid::make({-b, -b, -b}, {b, b, b}, {n, n, n});
    s.c3 = std::make_shared<MetricChart>(euclidean_box(Vec::Constant(3, -b), Vec::Constant(3, b)));
    auto A = covector_source(cfg, "A", "A_file", 3);
    auto q = scalar_source(cfg, "q", "q_file", 3);
    s.A_given = static_cast<bool>(A);
    s.q_given = static_cast<bool>(q);
    s.A = A ? sample_form(s.c3, s.g3, A) : zero_form(s.c3, s.g3);
    s.q = q ? sample_field(s.c3, s.g3, q) : zero_field(s.c3, s.g3);
    s.opt.sigma = cfg.sigma;
    s.opt.delta_prime = cfg.delta_prime;
    s.opt.t0 = cfg.number("beam.t0", 0.5 * s.geo.exit_time);
    return s;
}

std::vector<double> h_list_or(const ExperimentConfig& cfg, std::vector<double> fallback)
{
    return cfg.h_list.empty() ? fallback : cfg.h_list;
}

Output run_beam_sweep(const ExperimentConfig& cfg)
{
    Output out;
    auto s = beam_setup(cfg, 97);
    auto hs = h_list_or(cfg, {0.1, 0.05, 0.025, 0.0125});
    std::vector<ResidualReport> reps(hs.size());
    parallel_for(hs.size(), [&](std::size_t k) {
        SemiclassicalParams p{hs[k], cfg.lambda};
        auto beam = assemble_quasimode(s.disk, s.geo, s.A, p, BeamKind::v, s.opt);
        reps[k] = residual_bound(beam, s.A, s.q);
    });
    Table t;
    t.header = {"h", "tau", "bound", "bound_over_h", "smooth_l2", "divergence_l2", "cutoff_l2"};
    std::vector<double> ratio;
    for (std::size_t k = 0; k < hs.size(); ++k) {
        const auto& r = reps[k];
        t.add({hs[k], r.tau, r.bound, r.bound / hs[k], r.smooth_l2, r.divergence_l2, r.cutoff_l2});
        ratio.push_back(r.bound / hs[k]);
    }
    out.tables.push_back({"", t});
    Table gt;
    gt.header = {"h", "group", "l2"};
    for (std::size_t k = 0; k < hs.size(); ++k)
        for (const auto& [name, v] : reps[k].groups)
            gt.add({hs[k], name, v});
    out.tables.push_back({"groups", gt});
    out.results["geodesic_length"] = s.geo.exit_time;
    sweep_assertions(cfg, out, hs, ratio);
    return out;
}

Output run_concentration(const ExperimentConfig& cfg)
{
    Output out;
    auto s = beam_setup(cfg, 97);
    auto hs = h_list_or(cfg, {1e-3});
    auto lambdas = cfg.numbers("lambda", {0.0, 1.0});
    double x1 = cfg.number("x1", 0.0);
    auto psi = scalar_source(cfg, "psi", "", 2);
    auto alpha = covector_source(cfg, "alpha", "", 3);
    // closed forms hold for psi = 1, alpha = dt along the geodesic and A = 0
    bool closed = !psi && !alpha && !s.A_given;
    if (!alpha) {
        Vec d = s.geo.v0.normalized();
        alpha = [d](const Vec&) {
            CVec a(3);
            a << 0.0, d(0), d(1);
            return a;
        };
    }
    SliceOptions so;
    so.n_t = cfg.integer("slice.n_t", so.n_t);
    double L = s.geo.exit_time;
    struct Row {
        double h, lambda;
        Pairing pairing;
        cplx slice, limit, reference;
    };
    std::vector<std::pair<double, double>> jobs;
    for (double h : hs)
        for (double lam : lambdas)
            jobs.push_back({h, lam});
    std::vector<std::vector<Row>> rows(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
        auto [h, lam] = jobs[j];
        SemiclassicalParams p{h, lam};
        auto v = assemble_quasimode(s.disk, s.geo, s.A, p, BeamKind::v, s.opt);
        auto w = assemble_quasimode(s.disk, s.geo, s.A, p, BeamKind::w, s.opt);
        double base = lam == 0 ? L : (1 - std::exp(-2 * lam * L)) / (2 * lam);
        for (Pairing pr : {Pairing::product, Pairing::alpha_dv, Pairing::alpha_dw}) {
            Row r{h, lam, pr, 0, 0, 0};
            auto a = pr == Pairing::product ? nullptr : alpha;
            r.slice = concentration_integral(v, w, psi, x1, pr, a, so);
            r.limit = geodesic_limit(v, w, psi, x1, pr, a);
            r.reference = !closed ? r.limit
                          : pr == Pairing::product ? cplx(base)
                          : pr == Pairing::alpha_dv ? I * base
                                                    : -I * base;
            rows[j].push_back(r);
        }
    });
    Table t;
    t.header = {"h",        "lambda",   "pairing",      "slice_re",    "slice_im",
                "limit_re", "limit_im", "reference_re", "reference_im", "relative_error"};
    double worst = 0;
    for (const auto& block : rows)
        for (const auto& r : block) {
            double e = std::abs(r.slice - r.reference) / std::abs(r.reference);
            worst = std::max(worst, e);
            t.add({r.h, r.lambda, to_string(r.pairing), r.slice.real(), r.slice.imag(), r.limit.real(), r.limit.imag(),
                   r.reference.real(), r.reference.imag(), e});
        }
    out.tables.push_back({"", t});
    out.results["reference"] = closed ? "closed_form" : "geodesic_limit";
    out.results["geodesic_length"] = L;
    out.check("max relative error of the slice integrals", worst, "<=", cfg.number("assert.rel_error", 0.05));
    return out;
}

Output run_wkb_sweep(const ExperimentConfig& cfg)
{
    Output out;
    double R = cfg.number("chart.radius", 1.0);
    auto M = admissible_chart(euclidean_disk(R), cfg.number("x1_lo", -1), cfg.number("x1_hi", 1));
    auto D = euclidean_disk(cfg.number("pole_radius", 4 * R));
    Vec omega = vector_key(cfg, "pole", {-2 * R, 0.0}, 2);
    auto Mc = std::make_shared<MetricChart>(M);
    int n = cfg.grid > 0 ? cfg.grid : 81;
    double b = 1.6 * R;
    Grid g = Grid::make({-b, -b, -b}, {b, b, b}, {n, n, n});
    auto Af = covector_source(cfg, "A", "A_file", 3);
    auto qf = scalar_source(cfg, "q", "q_file", 3);
    auto A = Af ? sample_form(Mc, g, Af) : zero_form(Mc, g);
    auto q = qf ? sample_field(Mc, g, qf) : zero_field(Mc, g);
    WkbOptions wo;
    wo.sigma = cfg.sigma;
    if (cfg.has("wkb.n"))
        wo.n_x1 = wo.n_r = cfg.integer("wkb.n", 129);
    auto hs = h_list_or(cfg, {0.1, 0.05, 0.025, 0.0125});
    std::vector<WkbResidualReport> reps(hs.size());
    std::vector<double> transport(hs.size());
    parallel_for(hs.size(), [&](std::size_t k) {
        SemiclassicalParams p{hs[k], cfg.lambda};
        auto sol = build_wkb(M, D, omega, A, q, p, wo);
        reps[k] = wkb_residual(sol, A, q);
        transport[k] = sol.transport_residual;
    });
    Table t;
    t.header = {"h", "tau", "bound", "bound_over_h", "smooth_l2", "divergence_l2", "transport_residual"};
    std::vector<double> ratio;
    for (std::size_t k = 0; k < hs.size(); ++k) {
        const auto& r = reps[k];
        t.add({hs[k], r.tau, r.bound, r.bound / hs[k], r.smooth_l2, r.divergence_l2, transport[k]});
        ratio.push_back(r.bound / hs[k]);
    }
    out.tables.push_back({"", t});
    Table gt;
    gt.header = {"h", "group", "l2", "reference", "rate"};
    for (std::size_t k = 0; k < hs.size(); ++k)
        for (const auto& gr : reps[k].groups)
            gt.add({hs[k], gr.name, gr.norm, gr.reference, gr.rate});
    out.tables.push_back({"groups", gt});
    sweep_assertions(cfg, out, hs, ratio);
    return out;
}

// ---------------------------------------------------------------- carleman_check

Output run_carleman(const ExperimentConfig& cfg)
{
    Output out;
    double w = cfg.number("slab", 1.0);
    int n = cfg.grid > 0 ? cfg.grid : 201;
    auto chart = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(2, -w), Vec::Constant(2, w)));
    Grid g = Grid::make({-w, -w}, {w, w}, {n, n});
    double eps = cfg.number("epsilon", 0.3);
    std::string op = cfg.get("operator", "laplace_s0");
    CarlemanKind kind;
    if (op == "laplace_s0")
        kind = CarlemanKind::laplace_s0;
    else if (op == "magnetic")
        kind = CarlemanKind::magnetic;
    else
        throw ConfigurationError("operator must be laplace_s0 or magnetic");
    auto Af = covector_source(cfg, "A", "", 2);
    auto qf = scalar_source(cfg, "q", "", 2);
    if (kind == CarlemanKind::laplace_s0 && (Af || qf))
        throw ConfigurationError("A and q apply to the magnetic operator only");
    SampledOneForm A = Af ? sample_form(chart, g, Af) : zero_form(chart, g);
    SampledField q = qf ? sample_field(chart, g, qf) : zero_field(chart, g);
    auto hs = h_list_or(cfg, {0.1, 0.05, 0.025});
    bool adversarial = cfg.flag("adversarial", false);

    std::vector<CarlemanReport> conv(hs.size()), adv(hs.size());
    for (std::size_t k = 0; k < hs.size(); ++k) {
        double h = hs[k];
        BumpFamilyOptions bo;
        bo.count = cfg.integer("bumps", 20);
        bo.seed = cfg.seed;
        auto fam = bump_family(chart, g, h, bo);
        CarlemanWeight wt;
        wt.h = h;
        wt.epsilon = eps;
        CarlemanOptions co;
        if (kind == CarlemanKind::magnetic) {
            co.A = &A;
            co.q = &q;
        }
        conv[k] = verify_carleman(fam, wt, kind, co, "bumps");
        if (adversarial) {
            // wide envelopes oscillating along the characteristic set, no convexification
            BumpFamilyOptions ba;
            ba.count = bo.count;
            ba.seed = cfg.seed;
            ba.plain_members = false;
            ba.radius_lo = 0.6 * w;
            ba.radius_hi = 0.95 * w;
            ba.center_fraction = 0.05;
            auto fa = bump_family(chart, g, h, ba);
            CarlemanWeight wa;
            wa.h = h;
            CarlemanOptions ca = co;
            ca.reference_epsilon = cfg.number("reference_epsilon", eps);
            adv[k] = verify_carleman(fa, wa, kind, ca, "adversarial");
        }
    }
    Table t;
    t.header = {"h", "epsilon", "family", "operator", "min_ratio", "argmin", "max_identity_error"};
    std::vector<double> C;
    for (std::size_t k = 0; k < hs.size(); ++k) {
        t.add({hs[k], eps, "bumps", op, conv[k].min_ratio, conv[k].argmin, conv[k].max_identity_error});
        C.push_back(1 / conv[k].min_ratio);
        if (adversarial)
            t.add({hs[k], std::numeric_limits<double>::infinity(), "adversarial", op, adv[k].min_ratio, adv[k].argmin,
                   adv[k].max_identity_error});
    }
    out.tables.push_back({"", t});
    Table mt;
    mt.header = {"h", "family", "member", "lhs", "rhs", "ratio"};
    for (std::size_t k = 0; k < hs.size(); ++k) {
        for (const CarlemanReport* r : {&conv[k], &adv[k]}) {
            if (r->ratios.empty())
                continue;
            for (std::size_t i = 0; i < r->ratios.size(); ++i)
                mt.add({hs[k], r->family, i, r->lhs[i], r->rhs[i], r->ratios[i]});
        }
    }
    out.tables.push_back({"members", mt});
    double cmax = *std::max_element(C.begin(), C.end()), cmin = *std::min_element(C.begin(), C.end());
    out.results["C"] = C;
    out.results["fitted_inverse_C"] = 1 / cmax;
    for (std::size_t k = 0; k < hs.size(); ++k)
        out.check("min_ratio >= fitted 1/C at h = " + fmt_short(hs[k]), conv[k].min_ratio, ">=", 1 / cmax);
    out.check("C max / C min across h", cmax / cmin, "<=", cfg.number("assert.c_variation", 2.0));
    if (adversarial) {
        double drop = conv.back().min_ratio / adv.back().min_ratio;
        out.results["adversarial_drop"] = drop;
        out.check("convexified / adversarial min_ratio at the smallest h", drop, ">=",
                  cfg.number("assert.adversarial_drop", 10.0));
    }
    return out;
}

// ---------------------------------------------------------------- ray_roundtrip

std::function<CVec(const Vec&)> gradient_of(const Expr& p)
{
    return [p](const Vec& x) {
        CVec g(x.size());
        double e = 1e-5;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            Vec a = x, b = x;
            a(k) += e;
            b(k) -= e;
            // fourth order central difference
            Vec a2 = x, b2 = x;
            a2(k) += 2 * e;
            b2(k) -= 2 * e;
            g(k) = (8.0 * (p(a) - p(b)) - (p(a2) - p(b2))) / (12 * e);
        }
        return g;
    };
}

cplx curl_of(const std::function<CVec(const Vec&)>& a, const Vec& x)
{
    double e = 1e-5;
    Vec xp = x, xm = x, yp = x, ym = x;
    xp(0) += e;
    xm(0) -= e;
    yp(1) += e;
    ym(1) -= e;
    return (a(xp)(1) - a(xm)(1) - a(yp)(0) + a(ym)(0)) / (2 * e);
}

Output run_ray(const ExperimentConfig& cfg)
{
    Output out;
    double R = cfg.number("chart.radius", 1.0);
    auto chart = std::make_shared<const MetricChart>(euclidean_disk(R));
    auto fan = boundary_fan(*chart, cfg.integer("fan.points", 20), cfg.integer("fan.dirs", 20));
    ScalarFn f = scalar_source(cfg, "f", "", 2);
    CovectorFn alpha = covector_source(cfg, "alpha", "", 2);
    if (!f && !alpha)
        throw ConfigurationError("ray_roundtrip needs f or alpha1/alpha2");
    double lam = cfg.lambda;
    auto meas = forward(*chart, f, alpha, fan, lam);

    int n = cfg.grid > 0 ? cfg.grid : 101;
    Grid grid = Grid::make({-R, -R}, {R, R}, {n, n});
    InversionOptions io;
    io.basis = cfg.integer("basis", io.basis);
    io.ridge = cfg.number("ridge", io.ridge);
    auto inv = invert(meas, chart, grid, io);

    double fn = 0, fd = 0, cn = 0, cd = 0, sn = 0, sd = 0;
    auto alpha_s = alpha ? sample_form(chart, grid, alpha) : zero_form(chart, grid);
    SampledOneForm diff = inv.alpha;
    for (int c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < grid.size(); ++k)
            diff.comp[static_cast<std::size_t>(c)][k] -= alpha_s.comp[static_cast<std::size_t>(c)][k];
    auto gp = gauge_project(diff);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Vec x = grid.point(k);
        if (!chart->inside(x))
            continue;
        cplx fx = f ? f(x) : cplx(0.0);
        fn += std::norm(inv.f.values[k] - fx);
        fd += std::norm(fx);
        cplx cx = alpha ? curl_of(alpha, x) : cplx(0.0);
        cn += std::norm(inv.gauge.curl[k] - cx);
        cd += std::norm(cx);
        sn += std::norm(gp.solenoidal.comp[0][k]) + std::norm(gp.solenoidal.comp[1][k]);
        sd += std::norm(alpha_s.comp[0][k]) + std::norm(alpha_s.comp[1][k]);
    }
    Table t;
    t.header = {"geodesic", "x0_1", "x0_2", "v0_1", "v0_2", "length", "value_re", "value_im"};
    for (std::size_t k = 0; k < fan.size(); ++k)
        t.add({k, fan[k].x0(0), fan[k].x0(1), fan[k].v0(0), fan[k].v0(1), fan[k].exit_time, meas.values[k].real(),
               meas.values[k].imag()});
    out.tables.push_back({"", t});
    out.results["geodesics"] = fan.size();
    out.results["rcond"] = inv.rcond;
    out.results["data_residual"] = inv.data_residual;
    if (f) {
        double e = std::sqrt(fn / fd);
        out.results["f_relative_l2"] = e;
        out.check("relative L2 error of f", e, "<=", cfg.number("assert.f_error", 0.05));
    }
    if (alpha) {
        double e = std::sqrt(cn / cd), sol = std::sqrt(sn / sd);
        out.results["dalpha_relative_l2"] = e;
        out.results["solenoidal_certificate"] = sol;
        out.check("relative L2 error of d alpha", e, "<=", cfg.number("assert.curl_error", 0.05));
    }
    auto p = Expr::parse(cfg.get("gauge_p", "(1 - x1^2 - x2^2) * sin(x1 + 2*x2)"));
    auto dp = gradient_of(p);
    auto mg = forward(*chart, nullptr, dp, fan, lam);
    double gmax = 0;
    for (auto v : mg.values)
        gmax = std::max(gmax, std::abs(v));
    out.results["gauge_invariance"] = gmax;
    out.check("max |I(0, dp)| over the fan", gmax, "<=", cfg.number("assert.gauge", 1e-6));
    return out;
}

// ---------------------------------------------------------------- boundary_recovery

Output run_boundary(const ExperimentConfig& cfg)
{
    Output out;
    std::string geom = cfg.get("geometry", "half_space");
    int n = cfg.integer("dim", 2);
    double lam = cfg.number("lambda", 1e-3);
    RecoveryOptions ro;
    ro.levels = cfg.integer("levels", 3);
    ro.points = cfg.integer("points", 32);
    BoundaryNormalChart bnc;
    std::function<CVec(const Vec&)> A = covector_source(cfg, "A", "", n);
    if (!A)
        throw ConfigurationError("boundary_recovery needs A1..A" + std::to_string(n));
    cplx exact;
    Vec tau;
    RecoveryReport rec;
    if (geom == "half_space") {
        if (n != 2 && n != 3)
            throw ConfigurationError("dim must be 2 or 3");
        bnc = half_space(n, 0.3, 0.3);
        std::vector<double> t0(static_cast<std::size_t>(n - 1), 0.0);
        t0[0] = 1;
        tau = vector_key(cfg, "tau", t0, n - 1).normalized();
        auto probe = make_probe(bnc.chart, tau, lam);
        probe.validate();
        rec = tangential_recovery(probe, A, ro);
        CVec a0 = A(Vec::Zero(n));
        exact = 0;
        for (int k = 0; k < n - 1; ++k)
            exact += a0(k) * tau(k);
    } else if (geom == "disk") {
        if (n != 2)
            throw ConfigurationError("the disk geometry is two dimensional");
        double th = cfg.number("theta0", 0.3);
        auto disk = std::make_shared<const MetricChart>(euclidean_disk(1.0));
        bnc = boundary_normal_chart(disk, th, 0.3, 0.3);
        tau = Vec::Ones(1);
        auto probe = make_probe(bnc.chart, tau, lam);
        probe.validate();
        Grid g = Grid::make({-0.3, 0}, {0.3, 0.3}, {121, 61});
        rec = tangential_recovery(probe, bnc.pullback(A, g), ro);
        Vec x0(2), t(2);
        x0 << std::cos(th), std::sin(th);
        t << -std::sin(th), std::cos(th);
        CVec a0 = A(x0);
        exact = a0(0) * t(0) + a0(1) * t(1);
    } else {
        throw ConfigurationError("geometry must be half_space or disk");
    }
    Table t;
    t.header = {"lambda", "I1_re", "I1_im", "extrapolated_re", "extrapolated_im"};
    for (std::size_t k = 0; k < rec.lambdas.size(); ++k) {
        cplx e = k == 0 ? cplx(std::nan(""), std::nan("")) : rec.extrapolated[k - 1];
        t.add({rec.lambdas[k], rec.I1[k].real(), rec.I1[k].imag(), e.real(), e.imag()});
    }
    out.tables.push_back({"", t});
    double rel = std::abs(rec.estimate - exact) / std::abs(exact);
    out.results["estimate_re"] = rec.estimate.real();
    out.results["estimate_im"] = rec.estimate.imag();
    out.results["exact_re"] = exact.real();
    out.results["exact_im"] = exact.imag();
    out.results["relative_error"] = rel;
    out.check("relative error of the extrapolated I1", rel, "<=", cfg.number("assert.rel_error", 0.05));

    auto lams = cfg.numbers("rates.lambdas", {1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4});
    if (!lams.empty()) {
        auto rs = probe_rates(bnc.chart, tau, lams, ro.points);
        Table rt;
        rt.header = {"lambda", "v0_l2", "dv0_l2", "delta_dv0_l2"};
        for (const auto& nm : rs.norms)
            rt.add({nm.lambda, nm.v0_l2, nm.dv0_l2, nm.delta_dv0_l2});
        out.tables.push_back({"rates", rt});
        out.results["v0_exponent"] = rs.v0_exponent;
        out.results["v0_expected"] = rs.expected_v0;
        out.results["dv0_exponent"] = rs.dv0_exponent;
        out.results["delta_dv0_exponent"] = rs.delta_dv0_exponent;
        out.check("|v0 exponent - (n-1)/4 - 1/2|", std::abs(rs.v0_exponent - rs.expected_v0), "<=",
                  cfg.number("assert.exponent_tol", 0.1));
    }
    return out;
}

// ---------------------------------------------------------------- holonomy_gauge

Output run_holonomy(const ExperimentConfig& cfg)
{
    Output out;
    double r0 = cfg.number("r0", 0.5), r1 = cfg.number("r1", 1.5);
    auto ann = std::make_shared<const MetricChart>(planar_annulus(r0, r1));
    double b = r1 + 0.1;
    Grid g = Grid::make({-b, -b}, {b, b}, {201, 201});
    auto kappas = cfg.numbers("kappa", {0.0, 0.5, 0.999, 1.0, 1.001, 1.5, 2.0});
    Vec c0 = Vec::Zero(2);
    Curve loop = circle_loop(c0, 0.5 * (r0 + r1), 2000, 1.0, "core");
    Table t;
    t.header = {"kappa", "integral_re", "integral_im", "winding", "P_re", "P_im", "trivial", "integer_kappa", "max_dA"};
    int mismatches = 0;
    for (double kappa : kappas) {
        auto A = sample_form(ann, g, [&](const Vec& x) {
            CVec a = CVec::Zero(2);
            double r2 = x.squaredNorm();
            if (r2 < 0.25 * r0 * r0)
                return a;
            a << -kappa * x(1) / r2, kappa * x(0) / r2;
            return a;
        });
        auto rep = loop_holonomy(A, {loop});
        const auto& h = rep.loops[0];
        bool integer = kappa == std::round(kappa);
        mismatches += h.trivial != integer;
        t.add({kappa, h.integral.real(), h.integral.imag(), h.winding, h.P.real(), h.P.imag(), int(h.trivial),
               int(integer), rep.max_dA});
    }
    out.tables.push_back({"", t});
    out.results["flip_mismatches"] = mismatches;
    out.check("kappa values whose triviality differs from kappa in Z", mismatches, "<=", cfg.number("assert.flips", 0));

    // trivial holonomy, non-exact potential on a flat torus with a disk removed:
    // A = k dx1 - k d(d1 G), G = exp(-(|d|^2 - R^2) / s^2), d the displacement from the hole centre
    double L = cfg.number("torus.length", 4.0), R = cfg.number("hole.radius", 0.3), s = cfg.number("hole.width", 0.4);
    int N = cfg.grid > 0 ? cfg.grid : 801;
    Vec hc(2);
    hc << 0.5 * L, 0.5 * L;
    auto tor = std::make_shared<const MetricChart>(flat_torus_with_hole(L, L, hc, R));
    Grid gt = Grid::make({0, 0}, {L, L}, {N - 1, N - 1});
    gt.periodic[0] = gt.periodic[1] = true;
    double k = 2 * pi / L;
    auto At = sample_form(tor, gt, [&](const Vec& x) {
        Vec d = tor->displacement(hc, x);
        double G = std::exp(-(d.squaredNorm() - R * R) / (s * s));
        CVec a(2);
        a(0) = k * (1 - G + d(0) * G * 2 * d(0) / (s * s));
        a(1) = k * d(0) * G * 2 * d(1) / (s * s);
        return a;
    });
    GaugeOptions go;
    double y0 = 0.1 * L;
    go.loops.push_back(make_curve(
        "x_cycle", [&](double u) { Vec x(2); x << u, y0; return x; }, [](double) { Vec v(2); v << 1, 0; return v; }, 0, L,
        2001, false));
    go.loops.push_back(make_curve(
        "y_cycle", [&](double u) { Vec x(2); x << y0, u; return x; }, [](double) { Vec v(2); v << 0, 1; return v; }, 0, L,
        2001, false));
    go.loops.push_back(circle_loop(hc, R + 0.25 * L, 2000, 1.0, "hole"));
    if (cfg.has("loops")) {
        std::vector<Curve> keep;
        std::stringstream ss(cfg.get("loops", ""));
        for (std::string id; std::getline(ss, id, ',');) {
            id.erase(0, id.find_first_not_of(" \t"));
            id.erase(id.find_last_not_of(" \t") + 1);
            auto it = std::find_if(go.loops.begin(), go.loops.end(), [&](const Curve& c) { return c.id == id; });
            if (it == go.loops.end())
                throw ConfigurationError("unknown loop '" + id + "' (x_cycle, y_cycle, hole)");
            keep.push_back(*it);
        }
        go.loops = keep;
    }
    Vec base = vector_key(cfg, "base", {hc(0) + R, hc(1)}, 2);
    auto gr = build_gauge(At, {base}, go);
    auto hol = loop_holonomy(At, go.loops, go.holonomy);
    Table lt;
    lt.header = {"loop", "integral_over_2pi_re", "integral_over_2pi_im", "trivial"};
    for (const auto& h : hol.loops)
        lt.add({h.id, h.integral.real() / (2 * pi), h.integral.imag() / (2 * pi), int(h.trivial)});
    out.tables.push_back({"loops", lt});
    out.results["torus_max_dA"] = hol.max_dA;
    out.results["tree_discrepancy"] = gr.tree_discrepancy;
    out.results["certificate"] = gr.certificate;
    out.results["boundary_error"] = gr.boundary_error;
    out.results["min_modulus"] = gr.min_modulus;
    out.check("sup |A + i F^-1 dF|", gr.certificate, "<=", cfg.number("assert.certificate", 1e-5));
    out.check("max |F - 1| on the boundary", gr.boundary_error, "<=", cfg.number("assert.boundary", 1e-6));
    return out;
}

Output dispatch(const ExperimentConfig& cfg)
{
    switch (cfg.kind) {
    case ExperimentKind::riccati_demo:
        return run_riccati(cfg);
    case ExperimentKind::beam_residual_sweep:
        return run_beam_sweep(cfg);
    case ExperimentKind::concentration:
        return run_concentration(cfg);
    case ExperimentKind::wkb_residual_sweep:
        return run_wkb_sweep(cfg);
    case ExperimentKind::carleman_check:
        return run_carleman(cfg);
    case ExperimentKind::ray_roundtrip:
        return run_ray(cfg);
    case ExperimentKind::boundary_recovery:
        return run_boundary(cfg);
    case ExperimentKind::holonomy_gauge:
        return run_holonomy(cfg);
    }
    throw UsageError("unknown experiment kind");
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream o(p, std::ios::binary);
    if (!o)
        throw UsageError("cannot write " + p.string());
    o << text;
}

json assertions_json(const std::vector<Assertion>& as)
{
    json a = json::array();
    for (const auto& x : as)
        a.push_back({{"name", x.name},
                     {"value", number_json(x.value)},
                     {"relation", x.relation},
                     {"threshold", x.threshold},
                     {"pass", x.pass}});
    return a;
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg_in, const RunOptions& opt)
{
    ExperimentConfig cfg = cfg_in;
    if (opt.seed)
        cfg.seed = *opt.seed;
    if (opt.workers > 0)
        set_default_workers(opt.workers);
    else if (cfg.has("workers"))
        set_default_workers(cfg.integer("workers", 0));
    std::string kind = to_string(cfg.kind);

    Output o = dispatch(cfg);

    RunResult res;
    fs::path dir = opt.out_dir.empty() ? fs::path("runs") / (cfg.source.empty() ? kind : fs::path(cfg.source).stem().string())
                                       : fs::path(opt.out_dir);
    fs::create_directories(dir);
    res.dir = dir.string();
    for (const auto& [suffix, table] : o.tables) {
        std::string name = kind + (suffix.empty() ? "" : "_" + suffix) + ".csv";
        write_text(dir / name, table.text());
        res.files.push_back(name);
    }
    res.assertions = o.assertions;

    json summary;
    summary["experiment"] = kind;
    summary["seed"] = cfg.seed;
    summary["results"] = o.results;
    summary["assertions"] = assertions_json(o.assertions);
    summary["passed"] = res.passed();
    write_text(dir / (kind + ".json"), summary.dump(2) + "\n");
    res.files.push_back(kind + ".json");

    json manifest;
    manifest["tool"] = "geobeam";
    manifest["experiment"] = kind;
    manifest["config_hash"] = cfg.hash();
    manifest["config"] = cfg.entries;
    manifest["seed"] = cfg.seed;
    manifest["versions"] = {{"geobeam", library_version()},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"fftw", std::string(fftw_version)},
                            {"openssl", std::string(OPENSSL_VERSION_TEXT)},
                            {"compiler", std::string(__VERSION__)}};
    manifest["files"] = res.files;
    manifest["assertions"] = assertions_json(o.assertions);
    manifest["passed"] = res.passed();
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return res;
}

// ---------------------------------------------------------------- report

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw UsageError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::string s = ss.str();
    std::vector<std::vector<std::string>> rows(1);
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (quoted) {
            if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            rows.back().push_back(cell);
            cell.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n')
                ++i;
            rows.back().push_back(cell);
            cell.clear();
            rows.emplace_back();
        } else {
            cell += c;
        }
    }
    if (!cell.empty() || !rows.back().empty())
        rows.back().push_back(cell);
    if (rows.back().empty())
        rows.pop_back();
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name)
{
    for (std::size_t k = 0; k < header.size(); ++k)
        if (header[k] == name)
            return k;
    throw UsageError("column '" + name + "' missing");
}

std::string fmt(double v, int prec = 6)
{
    std::ostringstream o;
    o << std::setprecision(prec) << v;
    return o.str();
}

void report_one(const fs::path& dir, std::ostream& os)
{
    std::ifstream in(dir / "manifest.json");
    json m = json::parse(in);
    std::string kind = m.at("experiment");
    os << "experiment " << kind << "  config " << m.at("config_hash").get<std::string>().substr(0, 12) << "  seed "
       << m.at("seed") << "  " << (m.at("passed").get<bool>() ? "PASS" : "FAIL") << "\n";
    for (const auto& a : m.at("assertions")) {
        os << "  [" << (a.at("pass").get<bool>() ? "pass" : "FAIL") << "] " << a.at("name").get<std::string>() << ": ";
        if (a.at("value").is_number())
            os << fmt(a.at("value").get<double>());
        else
            os << a.at("value").get<std::string>();
        os << " " << a.at("relation").get<std::string>() << " " << fmt(a.at("threshold").get<double>()) << "\n";
    }
    auto rows = read_csv(dir / (kind + ".csv"));
    const auto& hd = rows.at(0);
    if (kind == "beam_residual_sweep" || kind == "wkb_residual_sweep") {
        auto ih = column(hd, "h"), ib = column(hd, "bound");
        os << "  " << std::left << std::setw(12) << "h" << std::setw(16) << "bound" << std::setw(16) << "bound/h"
           << "fitted order\n";
        double ph = 0, pb = 0;
        std::vector<double> hs, bs;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            double h = std::stod(rows[r][ih]), b = std::stod(rows[r][ib]);
            os << "  " << std::setw(12) << fmt(h) << std::setw(16) << fmt(b) << std::setw(16) << fmt(b / h)
               << (r == 1 ? std::string("-") : fmt(local_order(ph, pb, h, b), 4)) << "\n";
            ph = h;
            pb = b;
            hs.push_back(h);
            bs.push_back(b);
        }
        if (hs.size() >= 2)
            os << "  fitted order (all h): " << fmt(fit_loglog_slope(hs, bs), 4) << "\n";
    } else if (kind == "carleman_check") {
        auto ih = column(hd, "h"), ie = column(hd, "epsilon"), im = column(hd, "min_ratio"), ifam = column(hd, "family");
        os << "  " << std::left << std::setw(12) << "h" << std::setw(12) << "epsilon" << std::setw(16) << "min_ratio"
           << "family\n";
        for (std::size_t r = 1; r < rows.size(); ++r)
            os << "  " << std::setw(12) << fmt(std::stod(rows[r][ih])) << std::setw(12) << fmt(std::stod(rows[r][ie]))
               << std::setw(16)
               << fmt(std::stod(rows[r][im])) << rows[r][ifam] << "\n";
    } else {
        std::ifstream sj(dir / (kind + ".json"));
        json s = json::parse(sj);
        for (const auto& [key, v] : s.at("results").items())
            os << "  " << key << " = " << (v.is_number_float() ? fmt(v.get<double>()) : v.dump()) << "\n";
    }
}

} // namespace

std::string report(const std::string& dir_s)
{
    fs::path dir(dir_s);
    if (!fs::is_directory(dir))
        throw UsageError("not a directory: " + dir_s);
    std::vector<fs::path> dirs;
    if (fs::is_regular_file(dir / "manifest.json")) {
        dirs.push_back(dir);
    } else {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_directory() && fs::is_regular_file(e.path() / "manifest.json"))
                dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
    }
    if (dirs.empty())
        throw UsageError("no manifest.json in " + dir_s);
    std::ostringstream os;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        if (k)
            os << "\n";
        try {
            report_one(dirs[k], os);
        } catch (const json::exception& e) {
            throw UsageError("malformed artifacts in " + dirs[k].string() + ": " + e.what());
        }
    }
    return os.str();
}

} // namespace geobeam
