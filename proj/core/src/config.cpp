#include "geobeam/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace geobeam {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>> kind_names = {
    {ExperimentKind::riccati_demo, "riccati_demo"},
    {ExperimentKind::beam_residual_sweep, "beam_residual_sweep"},
    {ExperimentKind::concentration, "concentration"},
    {ExperimentKind::wkb_residual_sweep, "wkb_residual_sweep"},
    {ExperimentKind::carleman_check, "carleman_check"},
    {ExperimentKind::ray_roundtrip, "ray_roundtrip"},
    {ExperimentKind::boundary_recovery, "boundary_recovery"},
    {ExperimentKind::holonomy_gauge, "holonomy_gauge"},
};

const std::set<std::string> common_keys = {"kind", "seed", "workers", "test.inject_nonmonotone"};

const std::set<std::string>& kind_keys(ExperimentKind k)
{
    static const std::map<ExperimentKind, std::set<std::string>> table = {
        {ExperimentKind::riccati_demo,
         {"t0", "t_lo", "t_hi", "dim", "h0_imag", "step", "assert.max_error", "assert.det_error"}},
        {ExperimentKind::beam_residual_sweep,
         {"h", "sigma", "lambda", "delta_prime", "grid", "chart.radius", "beam.x0", "beam.v0", "beam.t0", "A1", "A2",
          "A3", "A_file", "q", "q_file", "assert.monotone", "assert.final_ratio"}},
        {ExperimentKind::concentration,
         {"h", "sigma", "lambda", "delta_prime", "grid", "chart.radius", "beam.x0", "beam.v0", "beam.t0", "x1", "psi",
          "alpha1", "alpha2", "alpha3", "slice.n_t", "assert.rel_error"}},
        {ExperimentKind::wkb_residual_sweep,
         {"h", "sigma", "lambda", "grid", "chart.radius", "x1_lo", "x1_hi", "pole", "pole_radius", "wkb.n", "A1", "A2",
          "A3", "A_file", "q", "q_file", "assert.monotone", "assert.final_ratio"}},
        {ExperimentKind::carleman_check,
         {"h", "epsilon", "reference_epsilon", "grid", "slab", "bumps", "operator", "adversarial", "A1", "A2", "q",
          "assert.c_variation", "assert.adversarial_drop"}},
        {ExperimentKind::ray_roundtrip,
         {"chart.radius", "fan.points", "fan.dirs", "lambda", "f", "alpha1", "alpha2", "gauge_p", "grid", "basis",
          "ridge", "assert.f_error", "assert.curl_error", "assert.gauge"}},
        {ExperimentKind::boundary_recovery,
         {"dim", "geometry", "lambda", "levels", "tau", "theta0", "A1", "A2", "A3", "points", "rates.lambdas",
          "assert.rel_error", "assert.exponent_tol"}},
        {ExperimentKind::holonomy_gauge,
         {"r0", "r1", "kappa", "grid", "torus.length", "hole.radius", "hole.width", "base", "loops",
          "assert.flips", "assert.certificate", "assert.boundary"}},
    };
    return table.at(k);
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& key, const std::string& s)
{
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty())
        throw ConfigurationError("'" + key + "' expects a number, got '" + s + "'");
    return v;
}

} // namespace

std::string to_string(ExperimentKind k)
{
    for (const auto& [kind, name] : kind_names)
        if (kind == k)
            return name;
    return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& s)
{
    for (const auto& [kind, name] : kind_names)
        if (name == s)
            return kind;
    throw UsageError("unknown experiment kind '" + s + "'");
}

std::string ExperimentConfig::get(const std::string& key, const std::string& fallback) const
{
    auto it = entries.find(key);
    return it == entries.end() ? fallback : it->second;
}

double ExperimentConfig::number(const std::string& key, double fallback) const
{
    auto it = entries.find(key);
    return it == entries.end() ? fallback : parse_double(key, it->second);
}

int ExperimentConfig::integer(const std::string& key, int fallback) const
{
    double v = number(key, fallback);
    if (v != std::floor(v) || std::abs(v) > 1e9)
        throw ConfigurationError("'" + key + "' expects an integer");
    return static_cast<int>(v);
}

bool ExperimentConfig::flag(const std::string& key, bool fallback) const
{
    auto it = entries.find(key);
    if (it == entries.end())
        return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes")
        return true;
    if (it->second == "false" || it->second == "0" || it->second == "no")
        return false;
    throw ConfigurationError("'" + key + "' expects true or false");
}

std::vector<double> ExperimentConfig::numbers(const std::string& key, const std::vector<double>& fallback) const
{
    auto it = entries.find(key);
    if (it == entries.end())
        return fallback;
    std::vector<double> out;
    for (const auto& item : split(it->second, ','))
        out.push_back(parse_double(key, item));
    return out;
}

std::optional<Expr> ExperimentConfig::expr(const std::string& key) const
{
    auto it = entries.find(key);
    if (it == entries.end())
        return std::nullopt;
    return Expr::parse(it->second);
}

std::string ExperimentConfig::file(const std::string& key) const
{
    auto it = entries.find(key);
    if (it == entries.end())
        return "";
    fs::path p(it->second);
    if (p.is_relative())
        p = fs::path(base_dir) / p;
    return p.lexically_normal().string();
}

std::string ExperimentConfig::canonical() const
{
    std::string out;
    for (const auto& [k, v] : entries)
        out += k + " = " + v + "\n";
    return out;
}

std::string ExperimentConfig::hash() const
{
    return sha256_hex(canonical());
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir)
{
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty())
            throw UsageError("line " + std::to_string(lineno) + ": empty key");
        if (cfg.entries.count(key))
            throw UsageError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.entries[key] = value;
    }
    if (!cfg.has("kind"))
        throw UsageError("config has no 'kind'");
    cfg.kind = experiment_kind_from_string(cfg.get("kind", ""));

    const auto& allowed = kind_keys(cfg.kind);
    for (const auto& [k, v] : cfg.entries)
        if (!common_keys.count(k) && !allowed.count(k))
            throw UsageError("key '" + k + "' is not used by " + to_string(cfg.kind));

    cfg.h_list = cfg.numbers("h", {});
    for (double h : cfg.h_list)
        if (!(h > 0))
            throw ConfigurationError("h values must be positive");
    for (std::size_t i = 1; i < cfg.h_list.size(); ++i)
        if (!(cfg.h_list[i] < cfg.h_list[i - 1]))
            throw ConfigurationError("h list must be strictly decreasing");
    cfg.sigma = cfg.number("sigma", 0.4);
    if (!(cfg.sigma > 0 && cfg.sigma < 0.5))
        throw ConfigurationError("sigma must lie in (0, 1/2)");
    auto lambdas = cfg.numbers("lambda", {0.0});
    cfg.lambda = lambdas.empty() ? 0.0 : lambdas.front();
    cfg.delta_prime = cfg.number("delta_prime", 0.5);
    cfg.grid = cfg.integer("grid", 0);
    double seed = cfg.number("seed", 1);
    if (seed < 0 || seed != std::floor(seed))
        throw ConfigurationError("seed must be a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(seed);

    for (const auto& [k, v] : cfg.entries) {
        if (k.size() > 5 && k.compare(k.size() - 5, 5, "_file") == 0) {
            auto p = cfg.file(k);
            if (!fs::is_regular_file(p))
                throw ConfigurationError("'" + k + "' refers to a missing file: " + p);
        }
    }
    // expressions are checked here so that a typo fails before any work starts
    for (const char* k : {"A1", "A2", "A3", "q", "psi", "alpha1", "alpha2", "alpha3", "f", "gauge_p"})
        if (cfg.has(k))
            (void)cfg.expr(k);
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto dir = fs::path(path).parent_path();
    auto cfg = parse_config_text(ss.str(), dir.empty() ? "." : dir.string());
    cfg.source = path;
    return cfg;
}

Tabulated load_tabulated(const std::string& path, int dim, int components)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigurationError("cannot read " + path);
    std::string line;
    std::getline(in, line); // header
    std::vector<std::array<double, 3>> pts;
    std::vector<std::vector<cplx>> vals(static_cast<std::size_t>(components));
    std::array<std::set<double>, 3> axes;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty())
            continue;
        auto cells = split(line, ',');
        if (static_cast<int>(cells.size()) != dim + 2 * components)
            throw ConfigurationError(path + ": expected " + std::to_string(dim + 2 * components) + " columns");
        std::array<double, 3> p{0, 0, 0};
        for (int k = 0; k < dim; ++k) {
            p[static_cast<std::size_t>(k)] = parse_double(path, cells[static_cast<std::size_t>(k)]);
            axes[static_cast<std::size_t>(k)].insert(p[static_cast<std::size_t>(k)]);
        }
        pts.push_back(p);
        for (int c = 0; c < components; ++c)
            vals[static_cast<std::size_t>(c)].emplace_back(
                parse_double(path, cells[static_cast<std::size_t>(dim + 2 * c)]),
                parse_double(path, cells[static_cast<std::size_t>(dim + 2 * c + 1)]));
    }
    std::vector<double> lo, hi;
    std::vector<int> n;
    std::size_t total = 1;
    for (int k = 0; k < dim; ++k) {
        const auto& ax = axes[static_cast<std::size_t>(k)];
        if (ax.size() < 4)
            throw ConfigurationError(path + ": each axis needs at least 4 nodes");
        lo.push_back(*ax.begin());
        hi.push_back(*ax.rbegin());
        n.push_back(static_cast<int>(ax.size()));
        total *= ax.size();
    }
    if (pts.size() != total)
        throw ConfigurationError(path + ": samples do not form a tensor grid");
    Tabulated t;
    t.grid = Grid::make(lo, hi, n);
    t.columns.assign(static_cast<std::size_t>(components), std::vector<cplx>(total));
    for (std::size_t r = 0; r < pts.size(); ++r) {
        std::array<int, 3> idx{0, 0, 0};
        for (int k = 0; k < dim; ++k) {
            double h = t.grid.step(k);
            double f = (pts[r][static_cast<std::size_t>(k)] - t.grid.lo[static_cast<std::size_t>(k)]) / h;
            int i = static_cast<int>(std::lround(f));
            if (std::abs(f - i) > 1e-6)
                throw ConfigurationError(path + ": samples are not uniformly spaced");
            idx[static_cast<std::size_t>(k)] = i;
        }
        std::size_t node = t.grid.index(idx[0], idx[1], idx[2]);
        for (int c = 0; c < components; ++c)
            t.columns[static_cast<std::size_t>(c)][node] = vals[static_cast<std::size_t>(c)][r];
    }
    return t;
}

std::string sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

} // namespace geobeam
