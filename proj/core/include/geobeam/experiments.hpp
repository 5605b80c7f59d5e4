#pragma once

#include "geobeam/config.hpp"

#include <optional>

namespace geobeam {

struct Assertion {
    std::string name;
    double value = 0;
    std::string relation; // "<=", ">=", "=="
    double threshold = 0;
    bool pass = false;
};

struct RunOptions {
    std::string out_dir; // empty selects runs/<config stem>
    int workers = 0;
    std::optional<std::uint64_t> seed;
};

struct RunResult {
    std::string dir;
    std::vector<std::string> files; // relative to dir
    std::vector<Assertion> assertions;
    bool passed() const;
};

// Runs the experiment, writes <kind>.csv, <kind>.json and manifest.json into the artifact directory.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});

// Summary table for an artifact directory (or a directory of artifact directories).
// Throws UsageError when no manifest is found.
std::string report(const std::string& dir);

// RFC 4180 field quoting.
std::string csv_field(const std::string& s);
std::string csv_number(double v); // %.17g

std::string library_version();

} // namespace geobeam
