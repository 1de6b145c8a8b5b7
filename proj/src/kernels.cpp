#include "lgvq/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>

namespace lgvq::kernels {

int num_threads() { return omp_get_max_threads(); }

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          int m, int k, int n, bool accumulate) {
    assert(a.size() >= std::size_t(m) * k && b.size() >= std::size_t(k) * n && c.size() >= std::size_t(m) * n);
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = C + std::int64_t(i) * n;
        if (!accumulate) std::fill(ci, ci + n, 0.0);
        const double* ai = A + std::int64_t(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = B + std::int64_t(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int k, int n) {
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
#pragma omp parallel for schedule(static)
    for (int kk = 0; kk < k; ++kk) {
        double* ck = C + std::int64_t(kk) * n;
        for (int i = 0; i < m; ++i) {
            const double av = A[std::int64_t(i) * k + kk];
            const double* bi = B + std::int64_t(i) * n;
            for (int j = 0; j < n; ++j) ck[j] += av * bi[j];
        }
    }
}

void gemm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int n, int k) {
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = A + std::int64_t(i) * n;
        for (int p = 0; p < k; ++p) {
            const double* bp = B + std::int64_t(p) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += ai[j] * bp[j];
            C[std::int64_t(i) * k + p] += s;
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    const int ci_n = g.in_c;
    const int co_n = g.out_c;
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < g.batch; ++n) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* o = out.data() + ((std::int64_t(n) * oh + oy) * ow + ox) * co_n;
                for (int co = 0; co < co_n; ++co) o[co] = bias[co];
                for (int ky = 0; ky < g.kernel; ++ky) {
                    const int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int kx = 0; kx < g.kernel; ++kx) {
                        const int ix = ox * g.stride + kx - g.pad;
                        if (ix < 0 || ix >= g.in_w) continue;
                        const double* x = in.data() + ((std::int64_t(n) * g.in_h + iy) * g.in_w + ix) * ci_n;
                        const double* w = weight.data() + (std::int64_t(ky) * g.kernel + kx) * ci_n * co_n;
                        for (int ci = 0; ci < ci_n; ++ci) {
                            const double xv = x[ci];
                            const double* wc = w + std::int64_t(ci) * co_n;
                            for (int co = 0; co < co_n; ++co) o[co] += xv * wc[co];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    const int ci_n = g.in_c;
    const int co_n = g.out_c;
    // Receptive fields overlap inside an image, so threads own whole images.
#pragma omp parallel for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double* go = grad_out.data() + ((std::int64_t(n) * oh + oy) * ow + ox) * co_n;
                for (int ky = 0; ky < g.kernel; ++ky) {
                    const int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int kx = 0; kx < g.kernel; ++kx) {
                        const int ix = ox * g.stride + kx - g.pad;
                        if (ix < 0 || ix >= g.in_w) continue;
                        double* gi = grad_in.data() + ((std::int64_t(n) * g.in_h + iy) * g.in_w + ix) * ci_n;
                        const double* w = weight.data() + (std::int64_t(ky) * g.kernel + kx) * ci_n * co_n;
                        for (int ci = 0; ci < ci_n; ++ci) {
                            const double* wc = w + std::int64_t(ci) * co_n;
                            double s = 0.0;
                            for (int co = 0; co < co_n; ++co) s += go[co] * wc[co];
                            gi[ci] += s;
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    const int ci_n = g.in_c;
    const int co_n = g.out_c;
    const int taps = g.kernel * g.kernel;
    // One thread per (tap, input channel) row of the weight tensor.
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < taps; ++t) {
        for (int ci = 0; ci < ci_n; ++ci) {
            const int ky = t / g.kernel;
            const int kx = t % g.kernel;
            double* gw = grad_weight.data() + (std::int64_t(t) * ci_n + ci) * co_n;
            for (int n = 0; n < g.batch; ++n) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad;
                        if (ix < 0 || ix >= g.in_w) continue;
                        const double xv = in[((std::int64_t(n) * g.in_h + iy) * g.in_w + ix) * ci_n + ci];
                        const double* go = grad_out.data() + ((std::int64_t(n) * oh + oy) * ow + ox) * co_n;
                        for (int co = 0; co < co_n; ++co) gw[co] += xv * go[co];
                    }
                }
            }
        }
    }
    const std::int64_t pixels = std::int64_t(g.batch) * oh * ow;
    for (std::int64_t p = 0; p < pixels; ++p) {
        const double* go = grad_out.data() + p * co_n;
        for (int co = 0; co < co_n; ++co) grad_bias[co] += go[co];
    }
}

void nearest_codes(std::span<const double> rows, std::span<const double> codebook, int dim,
                   std::span<std::int64_t> out) {
    const std::int64_t m = std::int64_t(rows.size()) / dim;
    const std::int64_t K = std::int64_t(codebook.size()) / dim;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* z = rows.data() + i * dim;
        std::int64_t best = 0;
        double best_d = 0.0;
        for (std::int64_t k = 0; k < K; ++k) {
            const double* e = codebook.data() + k * dim;
            double d = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double diff = z[j] - e[j];
                d += diff * diff;
            }
            if (k == 0 || d < best_d) {
                best = k;
                best_d = d;
            }
        }
        out[i] = best;
    }
}

}  // namespace lgvq::kernels
