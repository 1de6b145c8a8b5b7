#pragma once

// Small shared corpus and config for the training-level tests.

#include <filesystem>
#include <memory>
#include <string>

#include "lgvq/config.hpp"
#include "lgvq/dataset.hpp"
#include "lgvq/toy_corpus.hpp"
#include "lgvq/trainer.hpp"

namespace lgvq::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto d = std::filesystem::temp_directory_path() / ("lgvq_test_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

/// Eight 16x16 toy images, written once per process.
inline const std::filesystem::path& tiny_manifest() {
    static const std::filesystem::path path = write_toy_corpus(scratch_dir("tiny_corpus"), {8, 16, 5});
    return path;
}

inline std::shared_ptr<const Dataset> tiny_dataset() {
    static const auto data = std::make_shared<const Dataset>(Dataset::load(tiny_manifest(), 16));
    return data;
}

inline TrainConfig tiny_config(const Overrides& extra = {}) {
    Overrides ov = {{"manifest", tiny_manifest().string()},
                    {"image_size", "16"},
                    {"downsample", "8"},
                    {"codebook_size", "8"},
                    {"code_dim", "4"},
                    {"text_dim", "8"},
                    {"text_len", "10"},
                    {"batch_size", "4"},
                    {"steps", "3"},
                    {"lr", "0.001"}};
    ov.insert(ov.end(), extra.begin(), extra.end());
    return parse_config("", ov);
}

inline std::unique_ptr<Trainer> tiny_trainer(const TrainConfig& config) {
    auto data = tiny_dataset();
    return std::make_unique<Trainer>(config, data, resolve_vocabulary(config, *data));
}

}  // namespace lgvq::testing
