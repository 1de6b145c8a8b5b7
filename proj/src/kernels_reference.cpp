// Serial reference kernels. Straight loops, no threading; kept for testing
// and for the benchmark baseline.

#include <algorithm>

#include "lgvq/kernels.hpp"

namespace lgvq::kernels::reference {

namespace {
std::int64_t at4(int n, int y, int x, int c, int h, int w, int ch) {
    return ((std::int64_t(n) * h + y) * w + x) * ch + c;
}
}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = accumulate ? c[std::int64_t(i) * n + j] : 0.0;
            for (int p = 0; p < k; ++p) s += a[std::int64_t(i) * k + p] * b[std::int64_t(p) * n + j];
            c[std::int64_t(i) * n + j] = s;
        }
    }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int k, int n) {
    for (int kk = 0; kk < k; ++kk) {
        for (int j = 0; j < n; ++j) {
            double s = c[std::int64_t(kk) * n + j];
            for (int i = 0; i < m; ++i) s += a[std::int64_t(i) * k + kk] * b[std::int64_t(i) * n + j];
            c[std::int64_t(kk) * n + j] = s;
        }
    }
}

void gemm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += a[std::int64_t(i) * n + j] * b[std::int64_t(p) * n + j];
            c[std::int64_t(i) * k + p] += s;
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    for (int n = 0; n < g.batch; ++n)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int co = 0; co < g.out_c; ++co) {
                    double s = bias[co];
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            const int iy = oy * g.stride + ky - g.pad;
                            const int ix = ox * g.stride + kx - g.pad;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            for (int ci = 0; ci < g.in_c; ++ci) {
                                const double w = weight[((std::int64_t(ky) * g.kernel + kx) * g.in_c + ci) * g.out_c + co];
                                s += in[at4(n, iy, ix, ci, g.in_h, g.in_w, g.in_c)] * w;
                            }
                        }
                    out[at4(n, oy, ox, co, oh, ow, g.out_c)] = s;
                }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    for (int n = 0; n < g.batch; ++n)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ky = 0; ky < g.kernel; ++ky)
                    for (int kx = 0; kx < g.kernel; ++kx) {
                        const int iy = oy * g.stride + ky - g.pad;
                        const int ix = ox * g.stride + kx - g.pad;
                        if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                        for (int ci = 0; ci < g.in_c; ++ci) {
                            double s = 0.0;
                            for (int co = 0; co < g.out_c; ++co) {
                                s += grad_out[at4(n, oy, ox, co, oh, ow, g.out_c)] *
                                     weight[((std::int64_t(ky) * g.kernel + kx) * g.in_c + ci) * g.out_c + co];
                            }
                            grad_in[at4(n, iy, ix, ci, g.in_h, g.in_w, g.in_c)] += s;
                        }
                    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    for (int ky = 0; ky < g.kernel; ++ky)
        for (int kx = 0; kx < g.kernel; ++kx)
            for (int ci = 0; ci < g.in_c; ++ci)
                for (int co = 0; co < g.out_c; ++co) {
                    double& gw = grad_weight[((std::int64_t(ky) * g.kernel + kx) * g.in_c + ci) * g.out_c + co];
                    for (int n = 0; n < g.batch; ++n)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                const int iy = oy * g.stride + ky - g.pad;
                                const int ix = ox * g.stride + kx - g.pad;
                                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                                gw += in[at4(n, iy, ix, ci, g.in_h, g.in_w, g.in_c)] *
                                      grad_out[at4(n, oy, ox, co, oh, ow, g.out_c)];
                            }
                }
    for (int co = 0; co < g.out_c; ++co)
        for (int n = 0; n < g.batch; ++n)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) grad_bias[co] += grad_out[at4(n, oy, ox, co, oh, ow, g.out_c)];
}

void nearest_codes(std::span<const double> rows, std::span<const double> codebook, int dim,
                   std::span<std::int64_t> out) {
    const std::size_t m = rows.size() / dim;
    const std::size_t K = codebook.size() / dim;
    for (std::size_t i = 0; i < m; ++i) {
        std::int64_t best = 0;
        double best_d = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double d = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double diff = rows[i * dim + j] - codebook[k * dim + j];
                d += diff * diff;
            }
            if (k == 0 || d < best_d) {
                best = std::int64_t(k);
                best_d = d;
            }
        }
        out[i] = best;
    }
}

}  // namespace lgvq::kernels::reference
