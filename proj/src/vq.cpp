#include "lgvq/vq.hpp"

#include <cmath>

#include "lgvq/error.hpp"
#include "lgvq/kernels.hpp"

namespace lgvq::vq {

int AutoencoderConfig::levels() const {
    if (downsample < 1 || (downsample & (downsample - 1)) != 0) {
        throw ShapeError("downsample factor must be a power of two, got " + std::to_string(downsample));
    }
    int l = 0;
    while ((1 << l) < downsample) ++l;
    return l;
}

int AutoencoderConfig::width_at(int level) const {
    long w = long(base_channels) << level;
    return int(std::min<long>(w, max_channels));
}

Codebook Codebook::uniform(int size, int dim, std::mt19937_64& rng, double bound) {
    if (size < 2) throw ContractError("codebook needs at least 2 entries");
    return Codebook{nn::uniform_parameter({size, dim}, bound > 0 ? bound : 1.0 / size, rng)};
}

Encoder::Encoder(const AutoencoderConfig& config, std::mt19937_64& rng) : config_(config) {
    const int L = config.levels();
    conv_in_ = nn::Conv2d(config.image_channels, config.width_at(0), 3, 1, 1, rng);
    for (int l = 0; l < L; ++l) down_.emplace_back(config.width_at(l), config.width_at(l + 1), 3, 2, 1, rng);
    conv_out_ = nn::Conv2d(config.width_at(L), config.code_dim, 1, 1, 0, rng);
}

Tensor Encoder::operator()(const Tensor& images) const {
    Tensor h = conv_in_(images);
    for (const auto& conv : down_) h = conv(ag::silu(h));
    return conv_out_(ag::silu(h));
}

void Encoder::collect(const std::string& prefix, nn::NamedParams& out) const {
    conv_in_.collect(prefix + ".conv_in", out);
    for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(prefix + ".down" + std::to_string(i), out);
    conv_out_.collect(prefix + ".conv_out", out);
}

Decoder::Decoder(const AutoencoderConfig& config, std::mt19937_64& rng) : config_(config) {
    const int L = config.levels();
    conv_in_ = nn::Conv2d(config.code_dim, config.width_at(L), 3, 1, 1, rng);
    for (int l = L; l > 0; --l) up_.emplace_back(config.width_at(l), config.width_at(l - 1), 3, 1, 1, rng);
    conv_out_ = nn::Conv2d(config.width_at(0), config.image_channels, 3, 1, 1, rng);
}

Tensor Decoder::operator()(const Tensor& codes) const {
    if (codes.shape().size() != 4 || codes.dim(3) != config_.code_dim) {
        throw ShapeError("decoder expects (N, h, w, " + std::to_string(config_.code_dim) + ") codes, got " +
                         ag::shape_str(codes.shape()));
    }
    Tensor h = conv_in_(codes);
    for (const auto& conv : up_) h = conv(ag::upsample_nearest2x(ag::silu(h)));
    return conv_out_(ag::silu(h));
}

void Decoder::collect(const std::string& prefix, nn::NamedParams& out) const {
    conv_in_.collect(prefix + ".conv_in", out);
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(prefix + ".up" + std::to_string(i), out);
    conv_out_.collect(prefix + ".conv_out", out);
}

Tensor encode_image(const Encoder& encoder, const Tensor& images) {
    const int f = encoder.config().downsample;
    if (images.shape().size() != 4 || images.dim(3) != encoder.config().image_channels) {
        throw ShapeError("encode_image expects (N, H, W, C) images, got " + ag::shape_str(images.shape()));
    }
    if (images.dim(1) % f != 0 || images.dim(2) % f != 0) {
        throw ShapeError("image size " + std::to_string(images.dim(1)) + "x" + std::to_string(images.dim(2)) +
                         " is not divisible by the down-sampling factor " + std::to_string(f));
    }
    return encoder(images);
}

Tensor encode_image(const Encoder& encoder, const Image& image) {
    return encode_image(encoder, images_to_batch(std::span<const Image>(&image, 1)));
}

CodeGrid quantize(const Tensor& features, const Codebook& codebook) {
    if (features.shape().size() != 4 || features.dim(3) != codebook.dim()) {
        throw ShapeError("quantize: features " + ag::shape_str(features.shape()) + " vs code dim " +
                         std::to_string(codebook.dim()));
    }
    CodeGrid grid;
    grid.batch = int(features.dim(0));
    grid.height = int(features.dim(1));
    grid.width = int(features.dim(2));
    grid.indices.resize(std::size_t(features.numel() / codebook.dim()));
    kernels::nearest_codes(features.data(), codebook.entries.data(), codebook.dim(), grid.indices);
    grid.embeddings = ag::reshape(ag::gather_rows(codebook.entries, grid.indices), features.shape());
    return grid;
}

Tensor straight_through(const Tensor& features, const CodeGrid& codes) {
    return ag::straight_through(features, codes.embeddings);
}

Tensor decode_codes(const Decoder& decoder, const Tensor& code_embeddings) { return decoder(code_embeddings); }

std::vector<Image> decode_for_eval(const Decoder& decoder, const Tensor& code_embeddings) {
    auto images = batch_to_images(decoder(ag::stop_gradient(code_embeddings)));
    for (auto& img : images) img = clamp01(std::move(img));
    return images;
}

VqLoss vq_loss(const Tensor& images, const Tensor& reconstruction, const Tensor& features,
               const CodeGrid& codes, double omega) {
    if (omega < 0.0) throw ContractError("commitment weight must be non-negative");
    VqLoss loss;
    loss.reconstruction = ag::mse(images, reconstruction);
    loss.codebook = ag::mse(ag::stop_gradient(features), codes.embeddings);
    loss.commitment = ag::scale(ag::mse(features, ag::stop_gradient(codes.embeddings)), omega);
    loss.total = ag::add(ag::add(loss.reconstruction, loss.codebook), loss.commitment);
    if (!std::isfinite(loss.total.item())) {
        throw DivergenceError("VQ loss is not finite (" + std::to_string(loss.total.item()) + ")");
    }
    return loss;
}

}  // namespace lgvq::vq
