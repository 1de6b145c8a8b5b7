#include "lgvq/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "lgvq/error.hpp"

namespace lgvq::ag {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ')';
    return os.str();
}

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make_node(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                 std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    const bool needs = !g_no_grad && std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
    if (needs) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
    if (a.shape().size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    if (ag::numel(shape) != std::int64_t(values.size())) {
        throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
    const auto n = ag::numel(shape);
    return constant(std::move(shape), std::vector<double>(std::size_t(n), 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

double Tensor::item() const {
    if (node_->value.size() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

void Tensor::backward() const {
    if (node_->value.size() != 1) throw ShapeError("backward: root must be a scalar");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node* child = n->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    return make_node(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
        for (int s = 0; s < 2; ++s) {
            Node& in = *self.inputs[s];
            if (!in.requires_grad) continue;
            auto& g = in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    return make_node(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        if (x.requires_grad) {
            auto& g = x.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (y.requires_grad) {
            auto& g = y.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    return make_node(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        if (x.requires_grad) {
            auto& g = x.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
        }
        if (y.requires_grad) {
            auto& g = y.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return make_node(a.shape(), std::move(out), {a.node_ptr()}, [s](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

Tensor square(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= v;
    return make_node(a.shape(), std::move(out), {a.node_ptr()}, [](Node& self) {
        Node& x = *self.inputs[0];
        auto& g = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 2.0 * x.value[i];
    });
}

Tensor silu(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v * sigmoid(v);
    return make_node(a.shape(), std::move(out), {a.node_ptr()}, [](Node& self) {
        Node& x = *self.inputs[0];
        auto& g = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = sigmoid(x.value[i]);
            g[i] += self.grad[i] * s * (1.0 + x.value[i] * (1.0 - s));
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_node({}, {s}, {a.node_ptr()}, [](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(a), 1.0 / double(a.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    const auto n = a.numel();
    if (n == 0) throw ShapeError("mse of empty tensors");
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return make_node({}, {s / double(n)}, {a.node_ptr(), b.node_ptr()}, [n](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        const double c = 2.0 * self.grad[0] / double(n);
        if (x.requires_grad) {
            auto& g = x.ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) g[i] += c * (x.value[i] - y.value[i]);
        }
        if (y.requires_grad) {
            auto& g = y.ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) g[i] -= c * (x.value[i] - y.value[i]);
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel()) {
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_node(std::move(shape), std::move(out), {a.node_ptr()}, [](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor stop_gradient(const Tensor& a) {
    return Tensor::constant(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

Tensor straight_through(const Tensor& features, const Tensor& quantized) {
    require_same_shape(features, quantized, "straight_through");
    std::vector<double> out(quantized.data().begin(), quantized.data().end());
    return make_node(features.shape(), std::move(out), {features.node_ptr()}, [](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = int(a.dim(0)), k = int(a.dim(1)), n = int(b.dim(1));
    if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(std::size_t(m) * n);
    kernels::gemm(a.data(), b.data(), out, m, k, n, false);
    return make_node({m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node& self) {
        Node& x = *self.inputs[0];
        Node& w = *self.inputs[1];
        if (x.requires_grad) kernels::gemm_nt_acc(self.grad, w.value, x.ensure_grad(), m, n, k);
        if (w.requires_grad) kernels::gemm_tn_acc(x.value, self.grad, w.ensure_grad(), m, k, n);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear");
    const int m = int(x.dim(0)), k = int(x.dim(1)), n = int(w.dim(1));
    if (w.dim(0) != k || bias.numel() != n) {
        throw ShapeError("linear: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()) + ", b " +
                         shape_str(bias.shape()));
    }
    std::vector<double> out(std::size_t(m) * n);
    for (int i = 0; i < m; ++i) std::copy(bias.data().begin(), bias.data().end(), out.begin() + std::int64_t(i) * n);
    kernels::gemm(x.data(), w.data(), out, m, k, n, true);
    return make_node({m, n}, std::move(out), {x.node_ptr(), w.node_ptr(), bias.node_ptr()},
                     [m, k, n](Node& self) {
                         Node& xin = *self.inputs[0];
                         Node& wt = *self.inputs[1];
                         Node& b = *self.inputs[2];
                         if (xin.requires_grad) kernels::gemm_nt_acc(self.grad, wt.value, xin.ensure_grad(), m, n, k);
                         if (wt.requires_grad) kernels::gemm_tn_acc(xin.value, self.grad, wt.ensure_grad(), m, k, n);
                         if (b.requires_grad) {
                             auto& gb = b.ensure_grad();
                             for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < n; ++j) gb[j] += self.grad[std::int64_t(i) * n + j];
                         }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(x, 2, "layer_norm");
    const std::int64_t m = x.dim(0), d = x.dim(1);
    if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm: affine size mismatch");
    std::vector<double> out(std::size_t(m * d));
    std::vector<double> xhat(std::size_t(m * d));
    std::vector<double> rstd(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * d;
        double mu = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mu += row[j];
        mu /= double(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= double(d);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (row[j] - mu) * rstd[i];
            out[i * d + j] = xhat[i * d + j] * gamma.data()[j] + beta.data()[j];
        }
    }
    return make_node(x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
                     [m, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                         Node& xin = *self.inputs[0];
                         Node& g = *self.inputs[1];
                         Node& b = *self.inputs[2];
                         const auto& go = self.grad;
                         if (g.requires_grad) {
                             auto& gg = g.ensure_grad();
                             for (std::int64_t i = 0; i < m; ++i)
                                 for (std::int64_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * xhat[i * d + j];
                         }
                         if (b.requires_grad) {
                             auto& gb = b.ensure_grad();
                             for (std::int64_t i = 0; i < m; ++i)
                                 for (std::int64_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
                         }
                         if (xin.requires_grad) {
                             auto& gx = xin.ensure_grad();
                             for (std::int64_t i = 0; i < m; ++i) {
                                 double mean_g = 0.0, mean_gx = 0.0;
                                 for (std::int64_t j = 0; j < d; ++j) {
                                     const double gh = go[i * d + j] * g.value[j];
                                     mean_g += gh;
                                     mean_gx += gh * xhat[i * d + j];
                                 }
                                 mean_g /= double(d);
                                 mean_gx /= double(d);
                                 for (std::int64_t j = 0; j < d; ++j) {
                                     const double gh = go[i * d + j] * g.value[j];
                                     gx[i * d + j] += rstd[i] * (gh - mean_g - xhat[i * d + j] * mean_gx);
                                 }
                             }
                         }
                     });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    require_rank(q, 2, "attention");
    require_rank(k, 2, "attention");
    require_rank(v, 2, "attention");
    const std::int64_t m = q.dim(0), n = k.dim(0), d = q.dim(1);
    if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != n || heads <= 0 || d % heads != 0) {
        throw ShapeError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()) + ", heads " + std::to_string(heads));
    }
    const std::int64_t dh = d / heads;
    const double sc = 1.0 / std::sqrt(double(dh));
    std::vector<double> probs(std::size_t(heads * m * n));
    std::vector<double> out(std::size_t(m * d), 0.0);
    const double* Q = q.data().data();
    const double* K = k.data().data();
    const double* V = v.data().data();
    for (std::int64_t h = 0; h < heads; ++h) {
        const std::int64_t c0 = h * dh;
        for (std::int64_t i = 0; i < m; ++i) {
            double* p = probs.data() + (h * m + i) * n;
            double mx = -INFINITY;
            for (std::int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::int64_t c = 0; c < dh; ++c) s += Q[i * d + c0 + c] * K[j * d + c0 + c];
                p[j] = s * sc;
                mx = std::max(mx, p[j]);
            }
            double z = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                p[j] = std::exp(p[j] - mx);
                z += p[j];
            }
            for (std::int64_t j = 0; j < n; ++j) p[j] /= z;
            for (std::int64_t j = 0; j < n; ++j)
                for (std::int64_t c = 0; c < dh; ++c) out[i * d + c0 + c] += p[j] * V[j * d + c0 + c];
        }
    }
    return make_node(
        {m, d}, std::move(out), {q.node_ptr(), k.node_ptr(), v.node_ptr()},
        [m, n, d, dh, heads, sc, probs = std::move(probs)](Node& self) {
            Node& qn = *self.inputs[0];
            Node& kn = *self.inputs[1];
            Node& vn = *self.inputs[2];
            const double* G = self.grad.data();
            std::vector<double> dp(static_cast<std::size_t>(n));
            for (std::int64_t h = 0; h < heads; ++h) {
                const std::int64_t c0 = h * dh;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* p = probs.data() + (h * m + i) * n;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::int64_t c = 0; c < dh; ++c) s += G[i * d + c0 + c] * vn.value[j * d + c0 + c];
                        dp[j] = s;
                        dot += s * p[j];
                    }
                    if (vn.requires_grad) {
                        auto& gv = vn.ensure_grad();
                        for (std::int64_t j = 0; j < n; ++j)
                            for (std::int64_t c = 0; c < dh; ++c) gv[j * d + c0 + c] += p[j] * G[i * d + c0 + c];
                    }
                    for (std::int64_t j = 0; j < n; ++j) {
                        const double ds = p[j] * (dp[j] - dot) * sc;
                        if (qn.requires_grad) {
                            auto& gq = qn.ensure_grad();
                            for (std::int64_t c = 0; c < dh; ++c) gq[i * d + c0 + c] += ds * kn.value[j * d + c0 + c];
                        }
                        if (kn.requires_grad) {
                            auto& gk = kn.ensure_grad();
                            for (std::int64_t c = 0; c < dh; ++c) gk[j * d + c0 + c] += ds * qn.value[i * d + c0 + c];
                        }
                    }
                }
            }
        });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> rows) {
    require_rank(table, 2, "gather_rows");
    const std::int64_t K = table.dim(0), d = table.dim(1);
    const std::int64_t m = std::int64_t(rows.size());
    std::vector<double> out(std::size_t(m * d));
    for (std::int64_t i = 0; i < m; ++i) {
        if (rows[i] < 0 || rows[i] >= K) throw ShapeError("gather_rows: row index out of range");
        std::copy_n(table.data().begin() + rows[i] * d, d, out.begin() + i * d);
    }
    std::vector<std::int64_t> idx(rows.begin(), rows.end());
    return make_node({m, d}, std::move(out), {table.node_ptr()}, [d, idx = std::move(idx)](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::int64_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "concat_rows");
    require_rank(b, 2, "concat_rows");
    if (a.dim(1) != b.dim(1)) throw ShapeError("concat_rows: column mismatch");
    std::vector<double> out(a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const std::size_t split = a.data().size();
    return make_node({a.dim(0) + b.dim(0), a.dim(1)}, std::move(out), {a.node_ptr(), b.node_ptr()},
                     [split](Node& self) {
                         Node& x = *self.inputs[0];
                         Node& y = *self.inputs[1];
                         if (x.requires_grad) {
                             auto& g = x.ensure_grad();
                             for (std::size_t i = 0; i < split; ++i) g[i] += self.grad[i];
                         }
                         if (y.requires_grad) {
                             auto& g = y.ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[split + i];
                         }
                     });
}

Tensor slice_rows(const Tensor& a, std::int64_t begin, std::int64_t end) {
    require_rank(a, 2, "slice_rows");
    if (begin < 0 || end > a.dim(0) || begin > end) throw ShapeError("slice_rows: bad range");
    const std::int64_t d = a.dim(1);
    std::vector<double> out(a.data().begin() + begin * d, a.data().begin() + end * d);
    return make_node({end - begin, d}, std::move(out), {a.node_ptr()}, [begin, d](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
    });
}

Tensor scatter_rows(const Tensor& base, std::span<const std::int64_t> rows, const Tensor& replacement) {
    require_rank(base, 2, "scatter_rows");
    require_rank(replacement, 2, "scatter_rows");
    const std::int64_t m = base.dim(0), d = base.dim(1);
    if (replacement.dim(1) != d || replacement.dim(0) != std::int64_t(rows.size())) {
        throw ShapeError("scatter_rows: replacement shape mismatch");
    }
    std::vector<double> out(base.data().begin(), base.data().end());
    std::vector<std::int64_t> source(std::size_t(m), -1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= m || source[rows[i]] != -1) {
            throw ShapeError("scatter_rows: rows must be distinct and in range");
        }
        source[rows[i]] = std::int64_t(i);
        std::copy_n(replacement.data().begin() + std::int64_t(i) * d, d, out.begin() + rows[i] * d);
    }
    return make_node(base.shape(), std::move(out), {base.node_ptr(), replacement.node_ptr()},
                     [d, source = std::move(source)](Node& self) {
                         Node& b = *self.inputs[0];
                         Node& r = *self.inputs[1];
                         for (std::size_t row = 0; row < source.size(); ++row) {
                             const std::int64_t src = source[row];
                             Node& target = src < 0 ? b : r;
                             if (!target.requires_grad) continue;
                             auto& g = target.ensure_grad();
                             const std::int64_t dst_row = src < 0 ? std::int64_t(row) : src;
                             for (std::int64_t j = 0; j < d; ++j) g[dst_row * d + j] += self.grad[row * d + j];
                         }
                     });
}

namespace {

std::vector<double> row_norms(std::span<const double> x, std::int64_t rows, std::int64_t d, const char* op) {
    std::vector<double> norms(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
        norms[i] = std::sqrt(s);
        if (!(norms[i] > 0.0)) throw ContractError(std::string(op) + ": zero-norm row");
    }
    return norms;
}

}  // namespace

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "cosine_matrix");
    require_rank(b, 2, "cosine_matrix");
    const std::int64_t m = a.dim(0), n = b.dim(0), d = a.dim(1);
    if (b.dim(1) != d) throw ShapeError("cosine_matrix: dimension mismatch");
    auto na = row_norms(a.data(), m, d, "cosine_matrix");
    auto nb = row_norms(b.data(), n, d, "cosine_matrix");
    std::vector<double> out(std::size_t(m * n));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::int64_t c = 0; c < d; ++c) s += a.data()[i * d + c] * b.data()[j * d + c];
            out[i * n + j] = s / (na[i] * nb[j]);
        }
    return make_node({m, n}, out, {a.node_ptr(), b.node_ptr()},
                     [m, n, d, na = std::move(na), nb = std::move(nb), cos = out](Node& self) {
                         Node& x = *self.inputs[0];
                         Node& y = *self.inputs[1];
                         for (std::int64_t i = 0; i < m; ++i)
                             for (std::int64_t j = 0; j < n; ++j) {
                                 const double g = self.grad[i * n + j];
                                 if (g == 0.0) continue;
                                 const double c = cos[i * n + j];
                                 if (x.requires_grad) {
                                     auto& gx = x.ensure_grad();
                                     for (std::int64_t k = 0; k < d; ++k)
                                         gx[i * d + k] += g * (y.value[j * d + k] / (na[i] * nb[j]) -
                                                               c * x.value[i * d + k] / (na[i] * na[i]));
                                 }
                                 if (y.requires_grad) {
                                     auto& gy = y.ensure_grad();
                                     for (std::int64_t k = 0; k < d; ++k)
                                         gy[j * d + k] += g * (x.value[i * d + k] / (na[i] * nb[j]) -
                                                               c * y.value[j * d + k] / (nb[j] * nb[j]));
                                 }
                             }
                     });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "cosine_rows");
    require_rank(a, 2, "cosine_rows");
    const std::int64_t m = a.dim(0), d = a.dim(1);
    auto na = row_norms(a.data(), m, d, "cosine_rows");
    auto nb = row_norms(b.data(), m, d, "cosine_rows");
    std::vector<double> out(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c) s += a.data()[i * d + c] * b.data()[i * d + c];
        out[i] = s / (na[i] * nb[i]);
    }
    return make_node({m}, out, {a.node_ptr(), b.node_ptr()},
                     [m, d, na = std::move(na), nb = std::move(nb), cos = out](Node& self) {
                         Node& x = *self.inputs[0];
                         Node& y = *self.inputs[1];
                         for (std::int64_t i = 0; i < m; ++i) {
                             const double g = self.grad[i];
                             if (g == 0.0) continue;
                             const double c = cos[i];
                             // x and y may be the same node; both terms land in one buffer then.
                             if (x.requires_grad) {
                                 auto& gx = x.ensure_grad();
                                 for (std::int64_t k = 0; k < d; ++k)
                                     gx[i * d + k] += g * (y.value[i * d + k] / (na[i] * nb[i]) -
                                                           c * x.value[i * d + k] / (na[i] * na[i]));
                             }
                             if (y.requires_grad) {
                                 auto& gy = y.ensure_grad();
                                 for (std::int64_t k = 0; k < d; ++k)
                                     gy[i * d + k] += g * (x.value[i * d + k] / (na[i] * nb[i]) -
                                                           c * y.value[i * d + k] / (nb[i] * nb[i]));
                             }
                         }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, Reduction reduction) {
    require_rank(logits, 2, "cross_entropy");
    const std::int64_t m = logits.dim(0), V = logits.dim(1);
    if (std::int64_t(targets.size()) != m) throw ShapeError("cross_entropy: target count mismatch");
    if (m == 0) return Tensor::constant({}, {0.0});
    std::vector<double> probs(std::size_t(m * V));
    double total = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
        if (targets[i] < 0 || targets[i] >= V) throw ShapeError("cross_entropy: target out of range");
        const double* row = logits.data().data() + i * V;
        const double mx = *std::max_element(row, row + V);
        double z = 0.0;
        for (std::int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (std::int64_t j = 0; j < V; ++j) probs[i * V + j] = std::exp(row[j] - lse);
        total += lse - row[targets[i]];
    }
    const double factor = reduction == Reduction::Mean ? 1.0 / double(m) : 1.0;
    std::vector<std::int64_t> t(targets.begin(), targets.end());
    return make_node({}, {total * factor}, {logits.node_ptr()},
                     [m, V, factor, probs = std::move(probs), t = std::move(t)](Node& self) {
                         auto& g = self.inputs[0]->ensure_grad();
                         const double go = self.grad[0] * factor;
                         for (std::int64_t i = 0; i < m; ++i)
                             for (std::int64_t j = 0; j < V; ++j)
                                 g[i * V + j] += go * (probs[i * V + j] - (j == t[i] ? 1.0 : 0.0));
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d");
    kernels::ConvGeometry g;
    g.batch = int(x.dim(0));
    g.in_h = int(x.dim(1));
    g.in_w = int(x.dim(2));
    g.in_c = int(x.dim(3));
    g.kernel = int(weight.dim(0));
    g.out_c = int(weight.dim(3));
    g.stride = stride;
    g.pad = pad;
    if (weight.dim(1) != g.kernel || weight.dim(2) != g.in_c || bias.numel() != g.out_c) {
        throw ShapeError("conv2d: input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()));
    }
    if (g.out_h() <= 0 || g.out_w() <= 0) throw ShapeError("conv2d: input smaller than kernel");
    std::vector<double> out(std::size_t(g.out_size()));
    kernels::conv2d_forward(g, x.data(), weight.data(), bias.data(), out);
    return make_node({g.batch, g.out_h(), g.out_w(), g.out_c}, std::move(out),
                     {x.node_ptr(), weight.node_ptr(), bias.node_ptr()}, [g](Node& self) {
                         Node& in = *self.inputs[0];
                         Node& w = *self.inputs[1];
                         Node& b = *self.inputs[2];
                         if (in.requires_grad) kernels::conv2d_backward_input(g, self.grad, w.value, in.ensure_grad());
                         if (w.requires_grad || b.requires_grad) {
                             // Both buffers are written by one kernel; a frozen side gets a scratch buffer.
                             std::vector<double> scratch_w, scratch_b;
                             auto& gw = w.requires_grad ? w.ensure_grad() : (scratch_w.assign(w.value.size(), 0.0), scratch_w);
                             auto& gb = b.requires_grad ? b.ensure_grad() : (scratch_b.assign(b.value.size(), 0.0), scratch_b);
                             kernels::conv2d_backward_weight(g, in.value, self.grad, gw, gb);
                         }
                     });
}

Tensor upsample_nearest2x(const Tensor& x) {
    require_rank(x, 4, "upsample_nearest2x");
    const std::int64_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    std::vector<double> out(std::size_t(N * H * W * C * 4));
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t y = 0; y < 2 * H; ++y)
            for (std::int64_t xo = 0; xo < 2 * W; ++xo)
                std::copy_n(x.data().begin() + ((n * H + y / 2) * W + xo / 2) * C, C,
                            out.begin() + ((n * 2 * H + y) * 2 * W + xo) * C);
    return make_node({N, 2 * H, 2 * W, C}, std::move(out), {x.node_ptr()}, [N, H, W, C](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t y = 0; y < 2 * H; ++y)
                for (std::int64_t xo = 0; xo < 2 * W; ++xo)
                    for (std::int64_t c = 0; c < C; ++c)
                        g[((n * H + y / 2) * W + xo / 2) * C + c] += self.grad[((n * 2 * H + y) * 2 * W + xo) * C + c];
    });
}

}  // namespace lgvq::ag
