#pragma once

// Dense compute kernels behind the autograd ops.
//
// Every kernel exists twice: an OpenMP version in lgvq::kernels and a plain
// serial version in lgvq::kernels::reference. Work is split only across
// output elements, and each output element is accumulated in the same order
// in both versions, so the two agree bit-for-bit regardless of thread count.
// tests/unit/test_kernels.cpp holds them to that.
//
// Layouts are row-major. Images and feature maps are channels-last
// (N, H, W, C); convolution weights are (kh, kw, Cin, Cout).

#include <cstdint>
#include <span>

namespace lgvq::kernels {

struct ConvGeometry {
    int batch = 1;
    int in_h = 0;
    int in_w = 0;
    int in_c = 0;
    int out_c = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
    std::int64_t in_size() const { return std::int64_t(batch) * in_h * in_w * in_c; }
    std::int64_t out_size() const { return std::int64_t(batch) * out_h() * out_w() * out_c; }
    std::int64_t weight_size() const { return std::int64_t(kernel) * kernel * in_c * out_c; }
};

int num_threads();
void set_num_threads(int n);

// c[m,n] = a[m,k] * b[k,n]   (c += ... when accumulate)
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          int m, int k, int n, bool accumulate);
// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int k, int n);
// c[m,k] += a[m,n] * b[k,n]^T
void gemm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int n, int k);

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
// grad_in += dL/din
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
// grad_weight += dL/dw, grad_bias += dL/db
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// For each of the rows (dim wide) the index of the nearest codebook row in
// Euclidean distance; ties go to the lowest index.
void nearest_codes(std::span<const double> rows, std::span<const double> codebook, int dim,
                   std::span<std::int64_t> out);

namespace reference {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          int m, int k, int n, bool accumulate);
void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int k, int n);
void gemm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 int m, int n, int k);
void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias);
void nearest_codes(std::span<const double> rows, std::span<const double> codebook, int dim,
                   std::span<std::int64_t> out);

}  // namespace reference
}  // namespace lgvq::kernels
