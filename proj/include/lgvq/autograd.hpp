#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Tensor is a handle to a graph node. Ops build new nodes that remember
// their inputs and a backward closure; Tensor::backward() walks the graph in
// reverse topological order. Nodes whose inputs are all constants get no
// closure at all, so a branch built only from constants costs nothing in the
// backward pass.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lgvq/kernels.hpp"

namespace lgvq::ag {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    /// Leaf that accumulates gradients; parameters are made this way.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::int64_t numel() const { return std::int64_t(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> data() const { return node_->value; }
    std::span<double> mutable_data() { return node_->value; }
    /// Empty span when no gradient has reached this tensor.
    std::span<const double> grad() const { return node_->grad; }
    std::vector<double>& grad_buffer() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    double item() const;
    double at(std::int64_t i) const { return node_->value.at(std::size_t(i)); }

    /// Backpropagates d(this)/d(leaf) into every reachable leaf. `this` must
    /// hold a single element.
    void backward() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// While alive, ops on this thread record no backward closures.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active();

private:
    bool previous_;
};

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor silu(const Tensor& a);

// Reductions to a scalar (shape {}).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// mean((a - b)^2)
Tensor mse(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);

/// Forward value copied, no gradient flows back.
Tensor stop_gradient(const Tensor& a);
/// Forward value is `quantized`, gradient at the output goes unchanged to
/// `features`; `quantized` receives nothing.
Tensor straight_through(const Tensor& features, const Tensor& quantized);

// 2-D ops. Matrices are (rows, cols).
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[m,k] * w[k,n] + bias[n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Multi-head scaled dot-product attention. q[m,d], k[n,d], v[n,d] with d
/// divisible by heads; heads occupy contiguous column blocks.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> rows);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, std::int64_t begin, std::int64_t end);
/// Replaces rows[i] of `base` by rows i of `replacement`.
Tensor scatter_rows(const Tensor& base, std::span<const std::int64_t> rows, const Tensor& replacement);
/// out[i,j] = cos(a_i, b_j)
Tensor cosine_matrix(const Tensor& a, const Tensor& b);
/// out[i] = cos(a_i, b_i)
Tensor cosine_rows(const Tensor& a, const Tensor& b);

enum class Reduction { Mean, Sum };
/// Softmax cross-entropy of logits[m,V] against integer targets.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, Reduction reduction);

// Feature maps, channels-last (N, H, W, C).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);
Tensor upsample_nearest2x(const Tensor& x);

}  // namespace lgvq::ag
