#pragma once

#include "geobeam/expr.hpp"
#include "geobeam/grid.hpp"

#include <cstdint>
#include <map>
#include <optional>

namespace geobeam {

enum class ExperimentKind {
    riccati_demo,
    beam_residual_sweep,
    concentration,
    wkb_residual_sweep,
    carleman_check,
    ray_roundtrip,
    boundary_recovery,
    holonomy_gauge
};
std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s); // UsageError when unknown

// Tensor-grid samples read from a CSV file: columns x1..xd, then (re, im) pairs.
struct Tabulated {
    Grid grid;
    std::vector<std::vector<cplx>> columns;
};
Tabulated load_tabulated(const std::string& path, int dim, int components);

// key = value text; '#' starts a comment. Lists are comma separated.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::riccati_demo;
    std::string source;   // path of the file, empty for in-memory configs
    std::string base_dir; // relative file references resolve here
    std::map<std::string, std::string> entries;

    std::vector<double> h_list;
    double sigma = 0.4;
    double lambda = 0.0;
    double delta_prime = 0.5;
    int grid = 0;
    std::uint64_t seed = 1;

    bool has(const std::string& key) const { return entries.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key, double fallback) const;
    int integer(const std::string& key, int fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;
    std::optional<Expr> expr(const std::string& key) const;
    std::string file(const std::string& key) const; // resolved path, empty when absent

    // Sorted key = value lines; the config hash is taken over this text.
    std::string canonical() const;
    std::string hash() const;
};

// Throws UsageError for unknown kinds or keys and ConfigurationError for broken invariants.
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

std::string sha256_hex(const std::string& data);

} // namespace geobeam
