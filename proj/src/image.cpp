#include "lgvq/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lgvq/error.hpp"

namespace lgvq {

Image read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw DataError("cannot read image " + path.string() + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot decode image " + path.string() + ": " + msg);
    }
    Image img(int(png.height), int(png.width), 3);
    for (std::size_t i = 0; i < buffer.size(); ++i) img.pixels[i] = buffer[i] / 255.0;
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 3) throw ShapeError("write_png: expected 3 channels");
    std::vector<std::uint8_t> buffer(image.pixels.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const double v = std::clamp(image.pixels[i], 0.0, 1.0);
        buffer[i] = std::uint8_t(std::lround(v * 255.0));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = std::uint32_t(image.width);
    png.height = std::uint32_t(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        throw DataError("cannot write image " + path.string() + ": " + png.message);
    }
}

Image resize_bilinear(const Image& image, int height, int width) {
    if (height <= 0 || width <= 0) throw ShapeError("resize: non-positive target size");
    if (image.height == height && image.width == width) return image;
    Image out(height, width, image.channels);
    const double sy = double(image.height) / height;
    const double sx = double(image.width) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < image.channels; ++c) {
                const double top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
                const double bot = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image clamp01(Image image) {
    for (auto& v : image.pixels) v = std::clamp(v, 0.0, 1.0);
    return image;
}

ag::Tensor images_to_batch(std::span<const Image> images) {
    if (images.empty()) throw ShapeError("images_to_batch: empty batch");
    const Image& first = images.front();
    std::vector<double> data;
    data.reserve(first.pixels.size() * images.size());
    for (const auto& img : images) {
        if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
            throw ShapeError("images_to_batch: images differ in size");
        }
        data.insert(data.end(), img.pixels.begin(), img.pixels.end());
    }
    return ag::Tensor::constant({std::int64_t(images.size()), first.height, first.width, first.channels},
                                std::move(data));
}

std::vector<Image> batch_to_images(const ag::Tensor& batch) {
    if (batch.shape().size() != 4) throw ShapeError("batch_to_images: expected (N, H, W, C)");
    const int n = int(batch.dim(0)), h = int(batch.dim(1)), w = int(batch.dim(2)), c = int(batch.dim(3));
    std::vector<Image> out;
    const std::size_t per = std::size_t(h) * w * c;
    for (int i = 0; i < n; ++i) {
        Image img(h, w, c);
        std::copy_n(batch.data().begin() + i * per, per, img.pixels.begin());
        out.push_back(std::move(img));
    }
    return out;
}

}  // namespace lgvq
