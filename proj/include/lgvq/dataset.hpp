#pragma once

// Image-caption manifest ingestion and the seeded per-epoch schedule.
//
// Manifest format: one JSON object per line,
//   {"image": "relative/or/absolute.png", "captions": ["...", "..."]}
// Relative image paths resolve against the manifest's directory.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lgvq/image.hpp"

namespace lgvq {

struct ManifestRecord {
    std::filesystem::path image_path;
    std::vector<std::string> captions;
};

/// Parses the manifest without touching the images.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

struct Batch {
    std::vector<std::size_t> records;
    std::vector<std::string> captions;  // one per record
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<ManifestRecord> records, std::vector<Image> images);

    /// Loads the manifest and every image, resized to image_size x image_size.
    static Dataset load(const std::filesystem::path& manifest, int image_size);

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const ManifestRecord& record(std::size_t i) const { return records_.at(i); }
    const Image& image(std::size_t i) const { return images_.at(i); }
    const std::vector<ManifestRecord>& records() const { return records_; }
    std::vector<std::string> all_captions() const;

    /// Batch for a 0-based global step. Each epoch shuffles record order and
    /// picks one caption per record from a generator keyed on (seed, epoch),
    /// so any step can be reconstructed without replaying earlier ones.
    Batch batch_for_step(std::int64_t step, int batch_size, std::uint64_t seed) const;

private:
    std::vector<ManifestRecord> records_;
    std::vector<Image> images_;
};

}  // namespace lgvq
