#pragma once

// Synthetic image-caption corpus: one coloured shape per image, captions
// naming colour, shape and side.

#include <cstdint>
#include <filesystem>

namespace lgvq {

struct ToyCorpusOptions {
    int count = 32;
    int image_size = 64;
    std::uint64_t seed = 7;
};

/// Writes images/ and manifest.jsonl under `dir`; returns the manifest path.
/// Caption 0 is unique per image for the first 32 images.
std::filesystem::path write_toy_corpus(const std::filesystem::path& dir, const ToyCorpusOptions& options = {});

}  // namespace lgvq
