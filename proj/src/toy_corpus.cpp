#include "lgvq/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "lgvq/dataset.hpp"
#include "lgvq/error.hpp"
#include "lgvq/image.hpp"
#include "lgvq/rng.hpp"

namespace lgvq {
namespace {

struct Colour {
    const char* name;
    double rgb[3];
};

constexpr std::array<Colour, 4> kColours{{
    {"red", {0.9, 0.15, 0.1}},
    {"green", {0.15, 0.75, 0.2}},
    {"blue", {0.15, 0.25, 0.9}},
    {"yellow", {0.95, 0.85, 0.1}},
}};
constexpr std::array<const char*, 4> kShapes{"square", "circle", "triangle", "cross"};
constexpr std::array<const char*, 2> kSides{"left", "right"};

bool inside(int shape, double dx, double dy, double r) {
    switch (shape) {
        case 0: return std::abs(dx) <= r && std::abs(dy) <= r;
        case 1: return dx * dx + dy * dy <= r * r;
        case 2: return dy <= r && dy >= -r && std::abs(dx) <= (dy + r) / 2.0;
        default: return (std::abs(dx) <= r * 0.35 && std::abs(dy) <= r) || (std::abs(dy) <= r * 0.35 && std::abs(dx) <= r);
    }
}

}  // namespace

std::filesystem::path write_toy_corpus(const std::filesystem::path& dir, const ToyCorpusOptions& options) {
    if (options.count < 1 || options.image_size < 8) throw ContractError("write_toy_corpus: bad options");
    std::filesystem::create_directories(dir / "images");
    auto rng = make_rng(options.seed, Stream::Data, 0xc0ffee);
    std::uniform_real_distribution<double> noise(-0.04, 0.04);
    std::uniform_real_distribution<double> jitter(-0.06, 0.06);
    std::uniform_real_distribution<double> radius(0.16, 0.24);
    std::uniform_real_distribution<double> shade(0.35, 0.55);

    std::vector<ManifestRecord> records;
    const int s = options.image_size;
    for (int i = 0; i < options.count; ++i) {
        const int combo = i % 32;
        const auto& colour = kColours[std::size_t(combo % 4)];
        const int shape = (combo / 4) % 4;
        const int side = combo / 16;

        Image img(s, s);
        const double bg = shade(rng);
        const double cx = (side == 0 ? 0.28 : 0.72) + jitter(rng);
        const double cy = 0.5 + jitter(rng);
        const double r = radius(rng);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const double dx = (x + 0.5) / s - cx;
                const double dy = (y + 0.5) / s - cy;
                const bool hit = inside(shape, dx, dy, r);
                for (int c = 0; c < 3; ++c) {
                    const double base = hit ? colour.rgb[c] : bg;
                    img.at(y, x, c) = std::clamp(base + noise(rng), 0.0, 1.0);
                }
            }
        }
        const std::string name = "toy_" + std::to_string(i) + ".png";
        write_png(dir / "images" / name, img);

        const std::string c = colour.name;
        const std::string sh = kShapes[std::size_t(shape)];
        const std::string sd = kSides[std::size_t(side)];
        records.push_back({"images/" + name,
                           {"a " + c + " " + sh + " on the " + sd,
                            "the " + sd + " side shows a " + c + " " + sh,
                            "there is a " + sh + " in " + c + " at the " + sd + " of a grey background"}});
    }
    const auto manifest = dir / "manifest.jsonl";
    write_manifest(manifest, records);
    return manifest;
}

}  // namespace lgvq
