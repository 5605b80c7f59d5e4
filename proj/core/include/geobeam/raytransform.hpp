#pragma once

#include "geobeam/fields.hpp"
#include "geobeam/geometry.hpp"

namespace geobeam {

struct RayMeasurement {
    std::vector<GeodesicPath> fan;
    std::vector<cplx> values;
    double attenuation = 0;
    double quadrature_step = 0;

    void validate() const;
};

using ScalarFn = std::function<cplx(const Vec&)>;
using CovectorFn = std::function<CVec(const Vec&)>;

struct ForwardOptions {
    double quadrature_step = 0; // 0 selects 0.0025 * diameter
    int workers = 0;
};

// int_0^tau [f(gamma) + alpha(gamma')] e^{-lambda t} dt, composite Simpson.
// Null f or alpha contribute nothing.
RayMeasurement forward(const MetricChart& chart, const ScalarFn& f, const CovectorFn& alpha,
                       const std::vector<GeodesicPath>& fan, double lambda, const ForwardOptions& opt = {});
// Sampled data, bilinear interpolation.
RayMeasurement forward(const SampledField& f, const SampledOneForm& alpha, const std::vector<GeodesicPath>& fan,
                       double lambda, const ForwardOptions& opt = {});

struct GaugeProjection {
    std::vector<cplx> curl;     // coefficient of dx1 ^ dx2 at each node
    SampledOneForm solenoidal;  // alpha - dp
    SampledField potential;     // p, zero outside the domain
};
// Potential fit restricted to grid nodes inside the chart domain.
GaugeProjection gauge_project(const SampledOneForm& alpha);

struct InversionOptions {
    int basis = 12; // Legendre modes per axis
    double ridge = 1e-6;
    int gram_points = 48; // per axis, for the regularization integrals
    double min_rcond = 1e-15;
    int workers = 0;
};

struct InversionResult {
    SampledField f;
    SampledOneForm alpha;
    GaugeProjection gauge;
    std::vector<cplx> coefficients; // f, alpha_1, alpha_2 blocks
    double data_residual = 0;       // relative
    double rcond = 0;
    int unknowns = 0;
};

InversionResult invert(const RayMeasurement& meas, ChartPtr chart, const Grid& grid, const InversionOptions& opt = {});

void write_sinogram_csv(const RayMeasurement& meas, const std::string& path);

} // namespace geobeam
