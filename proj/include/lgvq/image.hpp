#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lgvq/autograd.hpp"

namespace lgvq {

/// RGB image, channels-last, values nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, int c = 3) : height(h), width(w), channels(c), pixels(std::size_t(h) * w * c, 0.0) {}

    double& at(int y, int x, int c) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }
};

Image read_png(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and stored as 8-bit RGB.
void write_png(const std::filesystem::path& path, const Image& image);

/// Bilinear resize with half-pixel centres; identity when sizes match.
Image resize_bilinear(const Image& image, int height, int width);

Image clamp01(Image image);

/// Stacks equally sized images into an (N, H, W, C) constant tensor.
ag::Tensor images_to_batch(std::span<const Image> images);
std::vector<Image> batch_to_images(const ag::Tensor& batch);

}  // namespace lgvq
