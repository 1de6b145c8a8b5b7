#include <doctest.h>

#include <cmath>
#include <random>

#include "../common/gradcheck.hpp"
#include "lgvq/error.hpp"

using namespace lgvq;
using ag::Tensor;

namespace {

Tensor param(ag::Shape shape, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(std::size_t(ag::numel(shape)));
    for (auto& x : v) x = d(rng);
    return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor weights_like(const Tensor& t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(std::size_t(t.numel()));
    for (auto& x : v) x = d(rng);
    return Tensor::constant(t.shape(), std::move(v));
}

// Scalar probe: sum(out * fixed random weights) so every output element matters.
Tensor probe(const Tensor& out) { return ag::sum(ag::mul(out, weights_like(out, 777))); }

void expect_grads(const std::function<Tensor()>& f, std::vector<Tensor> params) {
    const auto r = testing::grad_check(f, std::move(params));
    INFO(r.worst_where);
    CHECK(r.checked > 0);
    CHECK(r.worst_rel < 1e-3);
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("elementwise ops") {
    auto a = param({3, 4}, 1), b = param({3, 4}, 2);
    expect_grads([&] { return probe(ag::add(a, b)); }, {a, b});
    expect_grads([&] { return probe(ag::sub(a, b)); }, {a, b});
    expect_grads([&] { return probe(ag::mul(a, b)); }, {a, b});
    expect_grads([&] { return probe(ag::scale(a, -2.5)); }, {a});
    expect_grads([&] { return probe(ag::square(a)); }, {a});
    expect_grads([&] { return probe(ag::silu(a)); }, {a});
}

TEST_CASE("reductions and mse") {
    auto a = param({2, 5}, 3), b = param({2, 5}, 4);
    expect_grads([&] { return ag::sum(ag::square(a)); }, {a});
    expect_grads([&] { return ag::mean(ag::square(a)); }, {a});
    expect_grads([&] { return ag::mse(a, b); }, {a, b});
    CHECK(ag::mse(Tensor::constant({2}, {1.0, 3.0}), Tensor::constant({2}, {0.0, 1.0})).item() ==
          doctest::Approx(2.5));
}

TEST_CASE("matmul, linear, layer_norm") {
    auto x = param({4, 3}, 5), w = param({3, 6}, 6), bias = param({6}, 7);
    expect_grads([&] { return probe(ag::matmul(x, w)); }, {x, w});
    expect_grads([&] { return probe(ag::linear(x, w, bias)); }, {x, w, bias});
    auto g = param({3}, 8), be = param({3}, 9);
    expect_grads([&] { return probe(ag::layer_norm(x, g, be)); }, {x, g, be});
}

TEST_CASE("attention") {
    auto q = param({3, 4}, 10), k = param({5, 4}, 11), v = param({5, 4}, 12);
    expect_grads([&] { return probe(ag::attention(q, k, v, 2)); }, {q, k, v});
    expect_grads([&] { return probe(ag::attention(q, k, v, 1)); }, {q, k, v});
}

TEST_CASE("attention with one key returns that value row") {
    auto q = Tensor::constant({2, 2}, {1, 2, 3, 4});
    auto k = Tensor::constant({1, 2}, {0.5, -1});
    auto v = Tensor::constant({1, 2}, {7, 8});
    const auto out = ag::attention(q, k, v, 1);
    for (int i = 0; i < 2; ++i) {
        CHECK(out.at(2 * i) == doctest::Approx(7));
        CHECK(out.at(2 * i + 1) == doctest::Approx(8));
    }
}

TEST_CASE("row ops") {
    auto t = param({5, 3}, 13), u = param({2, 3}, 14);
    const std::vector<std::int64_t> rows{4, 0, 4, 2};
    expect_grads([&] { return probe(ag::gather_rows(t, rows)); }, {t});
    expect_grads([&] { return probe(ag::concat_rows(t, u)); }, {t, u});
    expect_grads([&] { return probe(ag::slice_rows(t, 1, 4)); }, {t});
    const std::vector<std::int64_t> at{1, 3};
    expect_grads([&] { return probe(ag::scatter_rows(t, at, u)); }, {t, u});
    expect_grads([&] { return probe(ag::reshape(t, {3, 5})); }, {t});
}

TEST_CASE("scatter_rows replaces only the given rows") {
    auto base = Tensor::constant({3, 2}, {1, 2, 3, 4, 5, 6});
    auto rep = Tensor::constant({1, 2}, {9, 9});
    const std::vector<std::int64_t> at{1};
    const auto out = ag::scatter_rows(base, at, rep);
    const std::vector<double> expect{1, 2, 9, 9, 5, 6};
    CHECK(std::vector<double>(out.data().begin(), out.data().end()) == expect);
}

TEST_CASE("cosine ops") {
    auto a = param({3, 4}, 15), b = param({3, 4}, 16);
    expect_grads([&] { return probe(ag::cosine_matrix(a, b)); }, {a, b});
    expect_grads([&] { return probe(ag::cosine_rows(a, b)); }, {a, b});
    const auto c = ag::cosine_rows(Tensor::constant({1, 2}, {1, 1}), Tensor::constant({1, 2}, {1, 0}));
    CHECK(c.item() == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK_THROWS_AS(ag::cosine_rows(Tensor::constant({1, 2}, {0, 0}), Tensor::constant({1, 2}, {1, 0})),
                    ContractError);
}

TEST_CASE("cross entropy") {
    auto logits = param({4, 6}, 17);
    const std::vector<std::int64_t> t{0, 5, 2, 2};
    expect_grads([&] { return ag::cross_entropy(logits, t, ag::Reduction::Mean); }, {logits});
    expect_grads([&] { return ag::cross_entropy(logits, t, ag::Reduction::Sum); }, {logits});
    const auto uniform = Tensor::constant({2, 100}, std::vector<double>(200, 0.3));
    const std::vector<std::int64_t> u{3, 99};
    CHECK(ag::cross_entropy(uniform, u, ag::Reduction::Mean).item() == doctest::Approx(std::log(100.0)).epsilon(1e-12));
    CHECK(ag::cross_entropy(uniform, u, ag::Reduction::Sum).item() == doctest::Approx(2 * std::log(100.0)).epsilon(1e-12));
}

TEST_CASE("conv2d and upsample") {
    auto x = param({2, 4, 4, 3}, 18), w = param({3, 3, 3, 2}, 19, 0.5), b = param({2}, 20);
    expect_grads([&] { return probe(ag::conv2d(x, w, b, 1, 1)); }, {x, w, b});
    expect_grads([&] { return probe(ag::conv2d(x, w, b, 2, 1)); }, {x, w, b});
    auto w1 = param({1, 1, 3, 2}, 21);
    expect_grads([&] { return probe(ag::conv2d(x, w1, b, 1, 0)); }, {x, w1, b});
    expect_grads([&] { return probe(ag::upsample_nearest2x(x)); }, {x});
}

TEST_CASE("stop_gradient and straight_through routing") {
    auto f = param({2, 3}, 22), q = param({2, 3}, 23);
    ag::sum(ag::square(ag::stop_gradient(f))).backward();
    CHECK(f.grad().empty());

    auto st = ag::straight_through(f, q);
    CHECK(std::vector<double>(st.data().begin(), st.data().end()) ==
          std::vector<double>(q.data().begin(), q.data().end()));
    ag::sum(st).backward();
    REQUIRE(f.grad().size() == 6);
    for (double g : f.grad()) CHECK(g == 1.0);
    CHECK(q.grad().empty());
}

TEST_CASE("gradients accumulate across uses and reset on zero_grad") {
    auto a = param({2}, 24);
    ag::sum(ag::add(a, a)).backward();
    for (double g : a.grad()) CHECK(g == 2.0);
    a.zero_grad();
    CHECK(a.grad().empty());
}

TEST_CASE("NoGradGuard records no graph") {
    auto a = param({2}, 25);
    Tensor out;
    {
        ag::NoGradGuard guard;
        out = ag::sum(ag::square(a));
    }
    CHECK_FALSE(out.requires_grad());
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(Tensor::constant({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(ag::add(param({2}, 1), param({3}, 2)), ShapeError);
    CHECK_THROWS_AS(ag::matmul(param({2, 3}, 1), param({2, 3}, 2)), ShapeError);
}

}
