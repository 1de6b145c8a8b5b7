#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../common/gradcheck.hpp"
#include "lgvq/error.hpp"
#include "lgvq/vq.hpp"

using namespace lgvq;
using ag::Tensor;

namespace {

std::vector<double> normal_values(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

vq::AutoencoderConfig tiny_config() {
    vq::AutoencoderConfig c;
    c.downsample = 2;
    c.code_dim = 4;
    c.base_channels = 4;
    c.max_channels = 6;
    return c;
}

}  // namespace

TEST_SUITE("vq") {

TEST_CASE("channel widths double per level up to the cap") {
    vq::AutoencoderConfig c;
    CHECK(c.levels() == 3);
    CHECK(c.width_at(0) == 8);
    CHECK(c.width_at(1) == 16);
    CHECK(c.width_at(2) == 32);
    CHECK(c.width_at(3) == 32);
    c.downsample = 6;
    CHECK_THROWS_AS(c.levels(), ShapeError);
}

TEST_CASE("codebook init stays within the configured bound") {
    std::mt19937_64 rng(1);
    const auto cb = vq::Codebook::uniform(64, 16, rng);
    CHECK(cb.size() == 64);
    CHECK(cb.dim() == 16);
    for (double v : cb.entries.data()) CHECK(std::abs(v) <= 1.0 / 64);
    const auto wide = vq::Codebook::uniform(8, 4, rng, 0.5);
    for (double v : wide.entries.data()) CHECK(std::abs(v) <= 0.5);
    CHECK_THROWS_AS(vq::Codebook::uniform(1, 4, rng), ContractError);
}

TEST_CASE("encoder and decoder shapes") {
    std::mt19937_64 rng(2);
    const auto cfg = tiny_config();
    vq::Encoder enc(cfg, rng);
    vq::Decoder dec(cfg, rng);
    const auto x = Tensor::constant({2, 6, 4, 3}, normal_values(2 * 6 * 4 * 3, 3));
    const auto f = vq::encode_image(enc, x);
    CHECK(f.shape() == ag::Shape{2, 3, 2, 4});
    CHECK(vq::decode_codes(dec, f).shape() == ag::Shape{2, 6, 4, 3});
    CHECK_THROWS_AS(vq::encode_image(enc, Tensor::constant({1, 5, 4, 3}, std::vector<double>(60, 0.0))), ShapeError);

    const auto imgs = vq::decode_for_eval(dec, ag::scale(f, 100.0));
    REQUIRE(imgs.size() == 2);
    for (const auto& img : imgs) {
        CHECK(img.height == 6);
        for (double p : img.pixels) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
}

TEST_CASE("quantizer agrees with exhaustive search") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto book = normal_values(16 * 8, 100 + seed);
        const auto feats = normal_values(200 * 8, 200 + seed);
        vq::Codebook cb{Tensor::parameter({16, 8}, book)};
        const auto grid = vq::quantize(Tensor::constant({2, 10, 10, 8}, feats), cb);
        CHECK(grid.indices == testing::brute_force_nearest(feats, book, 8));
        // every embedding row is the selected codebook row
        for (std::size_t i = 0; i < grid.indices.size(); ++i) {
            for (int c = 0; c < 8; ++c) {
                CHECK(grid.embeddings.data()[i * 8 + std::size_t(c)] == book[std::size_t(grid.indices[i]) * 8 + std::size_t(c)]);
            }
        }
    }
}

TEST_CASE("quantizer ties go to the lowest index") {
    // entries 1 and 3 are duplicates; the feature sits on them
    vq::Codebook cb{Tensor::parameter({4, 2}, {5, 5, 1, 1, -5, -5, 1, 1})};
    const auto grid = vq::quantize(Tensor::constant({1, 1, 2, 2}, {1, 1, 0, 0}), cb);
    CHECK(grid.indices[0] == 1);
    // (0,0) is equidistant from entries 1 and 3 only
    CHECK(grid.indices[1] == 1);
}

TEST_CASE("quantizing a codebook entry returns that entry") {
    std::mt19937_64 rng(4);
    const auto cb = vq::Codebook::uniform(10, 3, rng);
    std::vector<double> feats(cb.entries.data().begin(), cb.entries.data().end());
    const auto grid = vq::quantize(Tensor::constant({1, 1, 10, 3}, feats), cb);
    for (int i = 0; i < 10; ++i) CHECK(grid.indices[std::size_t(i)] == i);
}

TEST_CASE("vq loss on a scalar toy case") {
    const auto x = Tensor::constant({1, 1, 1, 1}, {1.0});
    const auto rec = Tensor::constant({1, 1, 1, 1}, {0.5});
    const auto f = Tensor::parameter({1, 1, 1, 1}, {0.2});
    vq::CodeGrid codes;
    codes.batch = codes.height = codes.width = 1;
    codes.indices = {0};
    codes.embeddings = Tensor::constant({1, 1, 1, 1}, {0.4});
    const auto loss = vq::vq_loss(x, rec, f, codes, 0.25);
    CHECK(loss.reconstruction.item() == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(loss.codebook.item() == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(loss.commitment.item() == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(loss.total.item() == doctest::Approx(0.30).epsilon(1e-12));
}

TEST_CASE("vq loss raises on non-finite values") {
    const auto x = Tensor::constant({1, 1, 1, 1}, {1.0});
    const auto rec = Tensor::constant({1, 1, 1, 1}, {std::numeric_limits<double>::quiet_NaN()});
    vq::CodeGrid codes;
    codes.batch = codes.height = codes.width = 1;
    codes.indices = {0};
    codes.embeddings = Tensor::constant({1, 1, 1, 1}, {0.4});
    CHECK_THROWS_AS(vq::vq_loss(x, rec, Tensor::constant({1, 1, 1, 1}, {0.2}), codes, 0.25), DivergenceError);
}

TEST_CASE("stop-gradient routing of the vq terms") {
    std::mt19937_64 rng(5);
    const auto cfg = tiny_config();
    vq::Encoder enc(cfg, rng);
    vq::Decoder dec(cfg, rng);
    auto cb = vq::Codebook::uniform(6, 4, rng, 0.5);
    const auto x = Tensor::constant({1, 4, 4, 3}, normal_values(48, 6, 0.3));
    nn::NamedParams enc_params;
    enc.collect("enc", enc_params);

    auto build = [&] {
        const auto f = vq::encode_image(enc, x);
        const auto codes = vq::quantize(f, cb);
        const auto rec = vq::decode_codes(dec, vq::straight_through(f, codes));
        return vq::vq_loss(x, rec, f, codes, 0.25);
    };

    // codebook term: nothing reaches the encoder
    build().codebook.backward();
    for (auto& [name, p] : enc_params) {
        for (double g : p.grad()) CHECK(g == 0.0);
        p.zero_grad();
    }
    CHECK_FALSE(cb.entries.grad().empty());
    cb.entries.zero_grad();

    // commitment term: nothing reaches the codebook
    build().commitment.backward();
    for (double g : cb.entries.grad()) CHECK(g == 0.0);
    bool any = false;
    for (auto& [name, p] : enc_params) {
        for (double g : p.grad()) any = any || g != 0.0;
        p.zero_grad();
    }
    CHECK(any);

    // reconstruction term: the codebook gets nothing, the encoder does (straight-through)
    build().reconstruction.backward();
    for (double g : cb.entries.grad()) CHECK(g == 0.0);
    any = false;
    for (auto& [name, p] : enc_params) {
        for (double g : p.grad()) any = any || g != 0.0;
        p.zero_grad();
    }
    CHECK(any);
}

TEST_CASE("straight-through: gradient at the features equals gradient at the decoder input") {
    std::mt19937_64 rng(7);
    const auto cfg = tiny_config();
    vq::Decoder dec(cfg, rng);
    auto cb = vq::Codebook::uniform(5, 4, rng, 0.5);
    auto f = Tensor::parameter({1, 2, 2, 4}, normal_values(16, 8, 0.5));
    const auto x = Tensor::constant({1, 4, 4, 3}, normal_values(48, 9, 0.3));
    const auto codes = vq::quantize(f, cb);

    ag::mse(x, vq::decode_codes(dec, vq::straight_through(f, codes))).backward();
    const std::vector<double> g_features(f.grad().begin(), f.grad().end());

    // gradient at the decoder input, by finite differences around the code embeddings
    auto input = Tensor::parameter({1, 2, 2, 4}, std::vector<double>(codes.embeddings.data().begin(),
                                                                      codes.embeddings.data().end()));
    const auto r = testing::grad_check([&] { return ag::mse(x, vq::decode_codes(dec, input)); }, {input});
    CHECK(r.worst_rel < 1e-3);
    ag::mse(x, vq::decode_codes(dec, input)).backward();
    for (std::size_t i = 0; i < g_features.size(); ++i) CHECK(g_features[i] == input.grad()[i]);
}

}
