#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace geobeam {

using cplx = std::complex<double>;
constexpr double pi = 3.141592653589793238462643383279502884;
constexpr cplx I{0.0, 1.0};

// Small fixed-capacity types: charts are at most three dimensional.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using CVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1, 0, 3, 1>;
using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define GEOBEAM_ERROR(Name, tag)                                              \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& w) : Error(tag, w) {}                \
    };

GEOBEAM_ERROR(DomainError, "domain")
GEOBEAM_ERROR(ConditioningError, "conditioning")
GEOBEAM_ERROR(IntegrationError, "integration")
GEOBEAM_ERROR(ConfigurationError, "configuration")
GEOBEAM_ERROR(GeometryError, "geometry")
GEOBEAM_ERROR(FrameError, "frame")
GEOBEAM_ERROR(UnsupportedGeometryError, "unsupported-geometry")
GEOBEAM_ERROR(ResolutionError, "resolution")
GEOBEAM_ERROR(ShapeError, "shape")
GEOBEAM_ERROR(ParameterError, "parameter")
GEOBEAM_ERROR(ContractError, "contract")
GEOBEAM_ERROR(ConformalError, "conformal")
GEOBEAM_ERROR(MarginError, "margin")
GEOBEAM_ERROR(SamplingError, "sampling")
GEOBEAM_ERROR(ConstructionError, "construction")
GEOBEAM_ERROR(GluingError, "gluing")
GEOBEAM_ERROR(RiccatiError, "riccati")
GEOBEAM_ERROR(ClosednessError, "closedness")
GEOBEAM_ERROR(GaugeError, "gauge")
GEOBEAM_ERROR(UsageError, "usage")

#undef GEOBEAM_ERROR

// Runs fn(i) for i in [0, n) on up to `workers` threads. Work is split into
// contiguous blocks so callers writing into out[i] stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0);

// Global default used when workers == 0.
void set_default_workers(int workers);
int default_workers();

std::vector<double> linspace(double a, double b, int n);

// Composite Simpson weights for n nodes with spacing dx (n odd); falls back to
// trapezoid on the last interval when n is even.
std::vector<double> simpson_weights(int n, double dx);

struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};
// Gauss-Legendre rule on [-1, 1].
GaussRule gauss_legendre(int n);

// C-infinity step: 0 for u <= 0, 1 for u >= 1.
double smooth_step(double u);
double smooth_step_derivative(double u);

// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace geobeam
