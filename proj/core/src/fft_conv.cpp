#include "fft_conv.hpp"

#include <fftw3.h>

#include <mutex>

namespace geobeam::detail {

namespace {
std::mutex& plan_mutex()
{
    static std::mutex m;
    return m;
}

struct Plan {
    fftw_plan p = nullptr;
    ~Plan()
    {
        if (p) {
            std::lock_guard<std::mutex> lk(plan_mutex());
            fftw_destroy_plan(p);
        }
    }
};

struct Buffer {
    fftw_complex* data = nullptr;
    explicit Buffer(std::size_t n) : data(fftw_alloc_complex(n)) {}
    ~Buffer() { fftw_free(data); }
};
} // namespace

int fft_good_size(int n)
{
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0)
                r /= p;
        if (r == 1)
            return m;
    }
}

std::vector<cplx> fft_convolve(const Grid& g, const std::vector<cplx>& f, const std::array<int, 3>& radius,
                               const std::function<cplx(int, int, int)>& kernel)
{
    int N[3] = {1, 1, 1};
    for (int a = 0; a < g.dim; ++a)
        N[a] = fft_good_size(g.n[static_cast<std::size_t>(a)] + radius[static_cast<std::size_t>(a)]);
    std::size_t tot = static_cast<std::size_t>(N[0]) * static_cast<std::size_t>(N[1]) * static_cast<std::size_t>(N[2]);
    Buffer fb(tot), kb(tot);
    for (std::size_t i = 0; i < tot; ++i) {
        fb.data[i][0] = fb.data[i][1] = 0;
        kb.data[i][0] = kb.data[i][1] = 0;
    }
    auto pidx = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(N[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(N[2]) +
               static_cast<std::size_t>(k);
    };
    for (int i = 0; i < g.n[0]; ++i)
        for (int j = 0; j < g.n[1]; ++j)
            for (int k = 0; k < g.n[2]; ++k) {
                cplx v = f[g.index(i, j, k)];
                auto p = pidx(i, j, k);
                fb.data[p][0] = v.real();
                fb.data[p][1] = v.imag();
            }
    int r0 = g.dim > 0 ? radius[0] : 0, r1 = g.dim > 1 ? radius[1] : 0, r2 = g.dim > 2 ? radius[2] : 0;
    for (int a = -r0; a <= r0; ++a)
        for (int b = -r1; b <= r1; ++b)
            for (int c = -r2; c <= r2; ++c) {
                cplx v = kernel(a, b, c);
                if (v == cplx(0, 0))
                    continue;
                auto p = pidx((a + N[0]) % N[0], (b + N[1]) % N[1], (c + N[2]) % N[2]);
                kb.data[p][0] += v.real();
                kb.data[p][1] += v.imag();
            }
    int rank = g.dim;
    int dims[3] = {N[0], N[1], N[2]};
    Plan fwd_f, fwd_k, bwd;
    {
        std::lock_guard<std::mutex> lk(plan_mutex());
        fwd_f.p = fftw_plan_dft(rank, dims, fb.data, fb.data, FFTW_FORWARD, FFTW_ESTIMATE);
        fwd_k.p = fftw_plan_dft(rank, dims, kb.data, kb.data, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd.p = fftw_plan_dft(rank, dims, fb.data, fb.data, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_execute(fwd_f.p);
    fftw_execute(fwd_k.p);
    for (std::size_t i = 0; i < tot; ++i) {
        double ar = fb.data[i][0], ai = fb.data[i][1], br = kb.data[i][0], bi = kb.data[i][1];
        fb.data[i][0] = ar * br - ai * bi;
        fb.data[i][1] = ar * bi + ai * br;
    }
    fftw_execute(bwd.p);
    double scale = 1.0 / static_cast<double>(tot);
    std::vector<cplx> out(g.size());
    for (int i = 0; i < g.n[0]; ++i)
        for (int j = 0; j < g.n[1]; ++j)
            for (int k = 0; k < g.n[2]; ++k) {
                auto p = pidx(i, j, k);
                out[g.index(i, j, k)] = cplx(fb.data[p][0], fb.data[p][1]) * scale;
            }
    return out;
}

} // namespace geobeam::detail
