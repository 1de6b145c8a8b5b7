#include "lgvq/dataset.hpp"

#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lgvq/error.hpp"
#include "lgvq/rng.hpp"

namespace lgvq {

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    std::vector<ManifestRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + "malformed record: " + e.what());
        }
        if (!j.is_object() || !j.contains("image") || !j["image"].is_string() || !j.contains("captions") ||
            !j["captions"].is_array()) {
            throw DataError(where + "record needs a string 'image' and a list 'captions'");
        }
        ManifestRecord rec;
        std::filesystem::path img = j["image"].get<std::string>();
        rec.image_path = img.is_absolute() ? img : base / img;
        for (const auto& c : j["captions"]) {
            if (!c.is_string()) throw DataError(where + "captions must be strings");
            rec.captions.push_back(c.get<std::string>());
        }
        if (rec.captions.empty()) throw DataError(where + "record has no captions");
        records.push_back(std::move(rec));
    }
    return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path.string());
    for (const auto& r : records) {
        nlohmann::json j;
        j["image"] = r.image_path.string();
        j["captions"] = r.captions;
        out << j.dump() << '\n';
    }
}

Dataset::Dataset(std::vector<ManifestRecord> records, std::vector<Image> images)
    : records_(std::move(records)), images_(std::move(images)) {
    if (records_.size() != images_.size()) throw DataError("dataset: record and image counts differ");
}

Dataset Dataset::load(const std::filesystem::path& manifest, int image_size) {
    auto records = read_manifest(manifest);
    if (records.empty()) throw DataError("manifest " + manifest.string() + " has no records");
    std::vector<Image> images;
    images.reserve(records.size());
    for (const auto& r : records) {
        if (!std::filesystem::exists(r.image_path)) throw DataError("missing image file " + r.image_path.string());
        images.push_back(resize_bilinear(read_png(r.image_path), image_size, image_size));
    }
    return Dataset(std::move(records), std::move(images));
}

std::vector<std::string> Dataset::all_captions() const {
    std::vector<std::string> out;
    for (const auto& r : records_) out.insert(out.end(), r.captions.begin(), r.captions.end());
    return out;
}

Batch Dataset::batch_for_step(std::int64_t step, int batch_size, std::uint64_t seed) const {
    if (records_.empty()) throw DataError("dataset is empty");
    const std::int64_t n = std::int64_t(records_.size());
    const std::int64_t per_epoch = (n + batch_size - 1) / batch_size;
    const std::int64_t epoch = step / per_epoch;
    const std::int64_t slot = step % per_epoch;

    auto rng = make_rng(seed, Stream::Data, std::uint64_t(epoch));
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (std::int64_t i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<std::int64_t> pick(0, i);
        std::swap(order[std::size_t(i)], order[std::size_t(pick(rng))]);
    }
    std::vector<std::size_t> caption_choice(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(0, records_[std::size_t(i)].captions.size() - 1);
        caption_choice[std::size_t(i)] = pick(rng);
    }

    Batch batch;
    const std::int64_t begin = slot * batch_size;
    const std::int64_t end = std::min(n, begin + batch_size);
    for (std::int64_t i = begin; i < end; ++i) {
        const auto r = order[std::size_t(i)];
        batch.records.push_back(r);
        batch.captions.push_back(records_[r].captions[caption_choice[r]]);
    }
    return batch;
}

}  // namespace lgvq
