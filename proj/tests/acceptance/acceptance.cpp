// Acceptance checks: one PASS/FAIL line per criterion.
#include "geobeam/experiments.hpp"
#include "geobeam/fields.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace geobeam;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Timed {
    RunResult run;
    double seconds = 0;
    nlohmann::json results;
};

fs::path g_configs;
fs::path g_out;
std::map<std::string, fs::path> g_first; // kind -> first artifact directory

std::string fmt(double v)
{
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", v);
    return b;
}

Timed run(const std::string& stem, const std::map<std::string, std::string>& asserts, const std::string& sub = "a")
{
    auto cfg = load_config((g_configs / (stem + ".cfg")).string());
    for (const auto& [k, v] : asserts)
        cfg.entries[k] = v;
    cfg = parse_config_text(cfg.canonical(), cfg.base_dir);
    RunOptions opt;
    opt.out_dir = (g_out / stem / sub).string();
    fs::remove_all(opt.out_dir);
    auto t0 = std::chrono::steady_clock::now();
    Timed t;
    t.run = run_experiment(cfg, opt);
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ifstream in(fs::path(opt.out_dir) / (to_string(cfg.kind) + ".json"));
    nlohmann::json j;
    in >> j;
    t.results = j.contains("results") ? j["results"] : j;
    if (sub == "a")
        g_first[stem] = opt.out_dir;
    return t;
}

Outcome from_assertions(const Timed& t, double max_seconds)
{
    Outcome o{true, ""};
    for (const auto& a : t.run.assertions) {
        if (!a.pass) {
            o.pass = false;
            o.detail += a.name + " = " + fmt(a.value) + " (needs " + a.relation + " " + fmt(a.threshold) + "); ";
        }
    }
    if (max_seconds > 0 && t.seconds >= max_seconds) {
        o.pass = false;
        o.detail += "runtime " + fmt(t.seconds) + " s >= " + fmt(max_seconds) + " s; ";
    }
    if (o.detail.empty())
        o.detail = "runtime " + fmt(t.seconds) + " s";
    return o;
}

Outcome criterion1()
{
    auto t = run("riccati_demo", {{"assert.max_error", "1e-6"}, {"assert.det_error", "1e-6"}});
    return from_assertions(t, 1.0);
}

Outcome sweep(const std::string& stem)
{
    auto t = run(stem, {{"assert.monotone", "true"}, {"assert.final_ratio", "0.5"}});
    auto o = from_assertions(t, 300.0);
    if (o.pass && t.results.contains("fitted_order"))
        o.detail += ", fitted order " + fmt(t.results["fitted_order"].get<double>());
    return o;
}

Outcome criterion4()
{
    auto t = run("concentration", {{"assert.rel_error", "0.05"}});
    auto o = from_assertions(t, 0);
    if (t.results.value("reference", "") != "closed_form") {
        o.pass = false;
        o.detail += "reference is not the closed form; ";
    }
    return o;
}

Outcome criterion5()
{
    auto t = run("ray_roundtrip", {{"fan.points", "20"},
                                   {"fan.dirs", "20"},
                                   {"assert.f_error", "0.05"},
                                   {"assert.curl_error", "0.05"},
                                   {"assert.gauge", "1e-6"}});
    auto o = from_assertions(t, 120.0);
    int n = t.results.value("geodesics", 0);
    double sol = t.results.value("solenoidal_certificate", 1.0);
    if (n != 400) {
        o.pass = false;
        o.detail += "fan has " + std::to_string(n) + " geodesics; ";
    }
    if (!(sol < 0.05)) {
        o.pass = false;
        o.detail += "solenoidal certificate " + fmt(sol) + "; ";
    }
    if (o.pass)
        o.detail += ", f " + fmt(t.results["f_relative_l2"].get<double>()) + ", d alpha " +
                    fmt(t.results["dalpha_relative_l2"].get<double>()) + ", solenoidal " + fmt(sol);
    return o;
}

Outcome criterion6()
{
    auto t = run("carleman_check", {{"bumps", "20"},
                                    {"h", "0.1, 0.05, 0.025"},
                                    {"adversarial", "true"},
                                    {"assert.c_variation", "2"},
                                    {"assert.adversarial_drop", "10"}});
    return from_assertions(t, 0);
}

Outcome criterion7()
{
    auto t = run("boundary_recovery",
                 {{"dim", "3"}, {"lambda", "0.001"}, {"assert.rel_error", "0.05"}, {"assert.exponent_tol", "0.1"}});
    return from_assertions(t, 120.0);
}

// Lipschitz kink on [-1, 1]^2, components mollified at tau = 0.1, 0.05, 0.025.
Outcome criterion8()
{
    auto chart = std::make_shared<const MetricChart>(euclidean_box(Vec::Constant(2, -1), Vec::Constant(2, 1)));
    Grid g = Grid::make({-1, -1}, {1, 1}, {201, 201});
    auto A = sample_form(chart, g, [](const Vec& x) {
        double k = std::abs(x.norm() - 0.5);
        CVec a(2);
        a << cplx(k, 0), cplx(0.5 * std::abs(x(0) - 0.1 * x(1)), 0);
        return a;
    });
    std::vector<double> taus{0.1, 0.05, 0.025};
    std::vector<double> s1, s2, g1, g2;
    for (double tau : taus) {
        auto At = mollify(A, tau);
        double gm = 0, lm = 0;
        for (int c = 0; c < 2; ++c) {
            SampledField u{chart, g, At.comp[static_cast<std::size_t>(c)]};
            auto du = exterior_d(u);
            auto lu = laplacian(u);
            for (std::size_t i = 0; i < g.size(); ++i) {
                auto m = g.multi(i);
                // sup over nodes whose mollifier ball stays in the box
                int ring = static_cast<int>(std::ceil(tau / g.step(0))) + 2;
                if (m[0] < ring || m[1] < ring || m[0] >= g.n[0] - ring || m[1] >= g.n[1] - ring)
                    continue;
                gm = std::max(gm, std::hypot(std::abs(du.comp[0][i]), std::abs(du.comp[1][i])));
                lm = std::max(lm, std::abs(lu.values[i]));
            }
        }
        g1.push_back(gm);
        g2.push_back(lm);
        s1.push_back(tau * gm);
        s2.push_back(tau * tau * lm);
    }
    Outcome o{true, ""};
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (s1[k] > 2 * s1[0] || s2[k] > 2 * s2[0])
            o.pass = false;
    }
    std::vector<double> lt;
    for (double t : taus)
        lt.push_back(std::log(t));
    auto slope = [&](const std::vector<double>& v) {
        std::vector<double> lv;
        for (double x : v)
            lv.push_back(std::log(x));
        double mx = 0, my = 0;
        for (std::size_t k = 0; k < lv.size(); ++k) {
            mx += lt[k];
            my += lv[k];
        }
        mx /= lt.size();
        my /= lt.size();
        double sxy = 0, sxx = 0;
        for (std::size_t k = 0; k < lv.size(); ++k) {
            sxy += (lt[k] - mx) * (lv[k] - my);
            sxx += (lt[k] - mx) * (lt[k] - mx);
        }
        return sxy / sxx;
    };
    double p1 = slope(g1), p2 = slope(g2);
    if (p1 < -1 - 0.15 || p2 < -2 - 0.15)
        o.pass = false;
    o.detail = "tau|grad A_tau| " + fmt(s1[0]) + " " + fmt(s1[1]) + " " + fmt(s1[2]) + ", tau^2|lap A_tau| " +
               fmt(s2[0]) + " " + fmt(s2[1]) + " " + fmt(s2[2]) + ", slopes " + fmt(p1) + " " + fmt(p2);
    return o;
}

Outcome criterion9()
{
    auto t = run("holonomy_gauge", {{"kappa", "0, 0.5, 0.999, 1, 1.001, 1.5, 2"},
                                    {"assert.certificate", "1e-5"},
                                    {"assert.boundary", "1e-6"}});
    return from_assertions(t, 0);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion10()
{
    Outcome o{true, ""};
    int files = 0;
    for (const auto& [stem, dir] : g_first) {
        auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
        // rerun with the configuration recorded in the first run's manifest
        std::string text;
        for (auto it = m["config"].begin(); it != m["config"].end(); ++it)
            text += it.key() + " = " + it.value().get<std::string>() + "\n";
        auto cfg = parse_config_text(text, g_configs.string());
        RunOptions opt;
        opt.out_dir = (g_out / stem / "b").string();
        fs::remove_all(opt.out_dir);
        run_experiment(cfg, opt);
        for (const auto& f : m["files"]) {
            auto name = f.get<std::string>();
            ++files;
            if (slurp(dir / name) != slurp(fs::path(opt.out_dir) / name)) {
                o.pass = false;
                o.detail += stem + "/" + name + " differs; ";
            }
        }
    }
    if (o.pass)
        o.detail = std::to_string(g_first.size()) + " experiments, " + std::to_string(files) + " files identical";
    return o;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    std::string configs = GEOBEAM_CONFIG_DIR, out = "acceptance_runs";
    std::vector<int> expected_fail;
    app.add_option("--configs", configs, "directory with the experiment configs");
    app.add_option("--out", out, "artifact directory");
    app.add_option("--expect-fail", expected_fail,
                   "criteria known to fail; the exit code is 0 iff exactly these fail");
    CLI11_PARSE(app, argc, argv);
    g_configs = configs;
    g_out = out;

    std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1},
        {2, [] { return sweep("beam_residual_sweep"); }},
        {3, [] { return sweep("wkb_residual_sweep"); }},
        {4, criterion4},
        {5, criterion5},
        {6, criterion6},
        {7, criterion7},
        {8, criterion8},
        {9, criterion9},
        {10, criterion10},
    };
    std::set<int> failed;
    for (auto& [id, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass)
            failed.insert(id);
        std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    std::set<int> expect(expected_fail.begin(), expected_fail.end());
    if (!expect.empty())
        std::printf("expected failures:%s\n", [&] {
            std::string s;
            for (int e : expect)
                s += " " + std::to_string(e);
            return s;
        }().c_str());
    return failed == expect ? 0 : 1;
}
