#pragma once

// Binary checkpoints: magic line, JSON header, raw little-endian doubles,
// FNV-1a trailer. Loading validates the whole file before anything is
// restored.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "lgvq/trainer.hpp"

namespace lgvq::checkpoint {

inline constexpr const char* kMagic = "lgvq-ckpt-v1";

/// Writes through a temporary file and renames it into place.
void save(const std::filesystem::path& path, const Trainer& trainer);

/// Rebuilds a trainer (model, optimizer, step counter) from a checkpoint.
/// `data` must be the dataset to continue on. A replacement config may
/// change anything that keeps parameter shapes and the text encoder intact.
std::unique_ptr<Trainer> restore(const std::filesystem::path& path, std::shared_ptr<const Dataset> data,
                                 const TrainConfig* config = nullptr);

struct LoadedModel {
    TrainConfig config;
    std::int64_t step = 0;
    std::unique_ptr<LgvqModel> model;
};

/// Model weights only, for evaluation and inspection.
LoadedModel load_model(const std::filesystem::path& path, const TrainConfig* config = nullptr);

/// The config stored in a checkpoint.
TrainConfig read_config(const std::filesystem::path& path);

}  // namespace lgvq::checkpoint
