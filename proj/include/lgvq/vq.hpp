#pragma once

// VQ-VAE backbone: convolutional encoder/decoder, codebook, nearest-neighbour
// quantizer, straight-through estimator and the three-term VQ loss.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lgvq/autograd.hpp"
#include "lgvq/image.hpp"
#include "lgvq/nn.hpp"

namespace lgvq::vq {

using ag::Tensor;

struct AutoencoderConfig {
    int downsample = 8;     // f, a power of two
    int code_dim = 16;      // d_z
    int base_channels = 8;  // width at full resolution, doubled per level
    int max_channels = 32;
    int image_channels = 3;

    int levels() const;
    int width_at(int level) const;
};

/// K trainable entries of dimension d_z, stored as a (K, d_z) parameter.
struct Codebook {
    Tensor entries;

    int size() const { return int(entries.dim(0)); }
    int dim() const { return int(entries.dim(1)); }

    /// Entries drawn uniformly from [-bound, bound]; bound 0 means 1/K.
    static Codebook uniform(int size, int dim, std::mt19937_64& rng, double bound = 0.0);
};

/// Quantized grid: per-position code indices plus the selected codebook rows.
/// `embeddings` is gathered from the codebook, so gradients arriving at it
/// land on the codebook entries.
struct CodeGrid {
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<std::int64_t> indices;  // batch * height * width, row-major
    Tensor embeddings;                  // (batch, height, width, d_z)

    std::int64_t positions_per_image() const { return std::int64_t(height) * width; }
    std::span<const std::int64_t> image_indices(int b) const {
        return std::span<const std::int64_t>(indices).subspan(std::size_t(b) * positions_per_image(),
                                                                std::size_t(positions_per_image()));
    }
};

class Encoder {
public:
    Encoder() = default;
    Encoder(const AutoencoderConfig& config, std::mt19937_64& rng);

    /// (N, H, W, C) images to (N, H/f, W/f, d_z) grid features.
    Tensor operator()(const Tensor& images) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;
    const AutoencoderConfig& config() const { return config_; }

private:
    AutoencoderConfig config_;
    nn::Conv2d conv_in_;
    std::vector<nn::Conv2d> down_;
    nn::Conv2d conv_out_;
};

class Decoder {
public:
    Decoder() = default;
    Decoder(const AutoencoderConfig& config, std::mt19937_64& rng);

    /// (N, h, w, d_z) code embeddings to raw (N, h*f, w*f, C) images.
    Tensor operator()(const Tensor& codes) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;

private:
    AutoencoderConfig config_;
    nn::Conv2d conv_in_;
    std::vector<nn::Conv2d> up_;
    nn::Conv2d conv_out_;
};

Tensor encode_image(const Encoder& encoder, const Tensor& images);
Tensor encode_image(const Encoder& encoder, const Image& image);

CodeGrid quantize(const Tensor& features, const Codebook& codebook);

/// Forward value equals codes.embeddings; the gradient goes to `features`.
Tensor straight_through(const Tensor& features, const CodeGrid& codes);

/// Raw decoder output. Use decode_for_eval() for clamped images.
Tensor decode_codes(const Decoder& decoder, const Tensor& code_embeddings);
std::vector<Image> decode_for_eval(const Decoder& decoder, const Tensor& code_embeddings);

struct VqLoss {
    Tensor total;
    Tensor reconstruction;
    Tensor codebook;
    Tensor commitment;  // already scaled by omega
};

/// mse(x, x_rec) + mse(sg[features], codes) + omega * mse(features, sg[codes]).
/// Throws DivergenceError when the result is not finite.
VqLoss vq_loss(const Tensor& images, const Tensor& reconstruction, const Tensor& features,
               const CodeGrid& codes, double omega);

}  // namespace lgvq::vq
