#pragma once

#include "geobeam/fields.hpp"

#include <cstdint>
#include <limits>

namespace geobeam {

// phi~ = x1 + (h / 2 eps) x1^2; eps = infinity switches the convexification off.
struct CarlemanWeight {
    double h = 0.1;
    double epsilon = std::numeric_limits<double>::infinity();
    double eps0 = 0.5; // admissible bound on h / eps

    bool convexified() const { return std::isfinite(epsilon); }
    double phi(double x1) const { return x1; }
    double phi_tilde(double x1) const { return convexified() ? x1 + h / (2 * epsilon) * x1 * x1 : x1; }
    double dphi_tilde(double x1) const { return convexified() ? 1 + h / epsilon * x1 : 1.0; }
    // h / eps <= eps0 and 1 + (h / eps) x1 >= 1/2 on the chart domain.
    void validate(const MetricChart& chart) const;
};

enum class CarlemanKind { laplace_s0, magnetic };
std::string to_string(CarlemanKind k);

struct CarlemanOptions {
    // Left side prefactor is h / sqrt(eps); with eps = infinity this reference value is used instead.
    double reference_epsilon = 1.0;
    double support_tol = 1e-12;
    int ring_cells = 2;
    const SampledOneForm* A = nullptr; // magnetic only, zero when null
    const SampledField* q = nullptr;
    int workers = 0;
};

struct CarlemanReport {
    double h = 0, epsilon = 0;
    std::string family;
    CarlemanKind kind = CarlemanKind::laplace_s0;
    std::vector<double> lhs, rhs, ratios;
    std::vector<double> identity_error; // laplace_s0: relative error of the A~ + i B~ identity
    double min_ratio = 0;
    std::size_t argmin = 0;
    double max_identity_error = 0;

    std::string to_json() const;
};

CarlemanReport verify_carleman(const std::vector<SampledField>& family, const CarlemanWeight& weight,
                               CarlemanKind kind, const CarlemanOptions& opt = {}, const std::string& family_id = "");

struct BumpFamilyOptions {
    int count = 20;
    double radius_lo = 0.3, radius_hi = 0.45;
    double center_fraction = 0.5; // centres drawn from this fraction of the box around its centre
    bool modulated = true;        // e^{i xi.x / h} with xi on {xi_1 = 0, |xi| = 1}
    bool plain_members = true;    // half of the family without modulation
    std::uint64_t seed = 1;
};
// Smooth compactly supported bumps exp(-1 / (1 - |x - c|^2 / R^2)).
std::vector<SampledField> bump_family(ChartPtr chart, const Grid& grid, double h, const BumpFamilyOptions& opt = {});

} // namespace geobeam
