#pragma once

#include "geobeam/grid.hpp"

namespace geobeam::detail {

// Linear (non-circular) convolution out[i] = sum_k K(i - k) f[k] on a tensor grid,
// with K supported on offsets |d_a| <= radius[a]. Zero padding removes wrap-around.
std::vector<cplx> fft_convolve(const Grid& g, const std::vector<cplx>& f, const std::array<int, 3>& radius,
                               const std::function<cplx(int, int, int)>& kernel);

int fft_good_size(int n);

} // namespace geobeam::detail
