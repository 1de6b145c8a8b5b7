#include "lgvq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "lgvq/error.hpp"

namespace lgvq::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= std::uint8_t(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t offset) {
    std::uint64_t v;
    std::memcpy(&v, in.data() + offset, 8);
    return v;
}

void put_doubles(std::string& out, std::span<const double> values) {
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

struct Contents {
    nlohmann::json header;
    std::map<std::string, std::vector<double>> arrays;
};

Contents read_contents(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto newline = bytes.find('\n');
    if (newline == std::string::npos || newline > 64) {
        throw CheckpointError(path.string() + ": not an lgvq checkpoint");
    }
    const std::string magic = bytes.substr(0, newline);
    if (magic != kMagic) {
        if (magic.rfind("lgvq-ckpt-", 0) == 0) {
            throw CheckpointError(path.string() + ": unsupported checkpoint version '" + magic.substr(10) +
                                  "' (expected '" + std::string(kMagic).substr(10) + "')");
        }
        throw CheckpointError(path.string() + ": not an lgvq checkpoint");
    }
    if (bytes.size() < newline + 1 + 8 + 8) throw CheckpointError(path.string() + ": truncated checkpoint");
    const std::size_t body_end = bytes.size() - 8;
    if (fnv1a(bytes.data(), body_end) != get_u64(bytes, body_end)) {
        throw CheckpointError(path.string() + ": checksum mismatch (file is corrupt)");
    }

    std::size_t pos = newline + 1;
    const std::uint64_t header_len = get_u64(bytes, pos);
    pos += 8;
    if (header_len > body_end - pos) throw CheckpointError(path.string() + ": truncated header");
    Contents c;
    try {
        c.header = nlohmann::json::parse(bytes.substr(pos, std::size_t(header_len)));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": bad header: " + e.what());
    }
    pos += std::size_t(header_len);
    try {
        for (const auto& entry : c.header.at("arrays")) {
            const std::string name = entry.at("name").get<std::string>();
            const std::uint64_t count = entry.at("count").get<std::uint64_t>();
            if (count > (body_end - pos) / sizeof(double)) throw CheckpointError(path.string() + ": truncated array " + name);
            std::vector<double> values(count);
            std::memcpy(values.data(), bytes.data() + pos, count * sizeof(double));
            pos += count * sizeof(double);
            c.arrays.emplace(name, std::move(values));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": bad header: " + e.what());
    }
    if (pos != body_end) throw CheckpointError(path.string() + ": trailing bytes after arrays");
    return c;
}

TrainConfig header_config(const Contents& c) {
    try {
        return parse_config(c.header.at("config").get<std::string>());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
    }
}

text::Vocabulary header_vocab(const Contents& c) {
    return text::Vocabulary::from_tokens(c.header.at("vocab").get<std::vector<std::string>>());
}

const std::vector<double>& array(const Contents& c, const std::string& name, std::int64_t expected) {
    const auto it = c.arrays.find(name);
    if (it == c.arrays.end()) throw CheckpointError("checkpoint lacks array " + name);
    if (std::int64_t(it->second.size()) != expected) {
        throw CheckpointError("checkpoint array " + name + " has " + std::to_string(it->second.size()) +
                              " values, model expects " + std::to_string(expected));
    }
    return it->second;
}

void check_text_encoder(const Contents& c, const LgvqModel& model) {
    const auto stored = c.header.at("text_encoder_fingerprint").get<std::uint64_t>();
    if (stored != model.text_encoder->fingerprint()) {
        throw CheckpointError("text encoder fingerprint differs from the one used for training");
    }
}

// Checks every parameter array before any is copied.
void restore_params(const Contents& c, const nn::NamedParams& params) {
    std::vector<const std::vector<double>*> sources;
    for (const auto& [name, p] : params) sources.push_back(&array(c, "param/" + name, p.numel()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto t = params[i].second;
        std::copy(sources[i]->begin(), sources[i]->end(), t.mutable_data().begin());
    }
}

}  // namespace

void save(const std::filesystem::path& path, const Trainer& trainer) {
    const auto& params = trainer.optimizer().params();
    const auto& m = trainer.optimizer().first_moments();
    const auto& v = trainer.optimizer().second_moments();

    nlohmann::ordered_json header;
    header["config"] = to_text(trainer.config());
    header["vocab"] = trainer.model().vocab().tokens();
    header["step"] = trainer.steps_done();
    header["rng"] = {{"seed", trainer.config().seed}, {"step", trainer.steps_done()}};
    header["adam_step"] = trainer.optimizer().steps_taken();
    header["text_encoder_fingerprint"] = trainer.model().text_encoder->fingerprint();
    auto arrays = nlohmann::ordered_json::array();
    for (const auto& [name, p] : params) arrays.push_back({{"name", "param/" + name}, {"count", p.numel()}});
    for (const auto& [name, p] : params) arrays.push_back({{"name", "adam_m/" + name}, {"count", p.numel()}});
    for (const auto& [name, p] : params) arrays.push_back({{"name", "adam_v/" + name}, {"count", p.numel()}});
    header["arrays"] = arrays;

    std::string out = std::string(kMagic) + "\n";
    const std::string header_text = header.dump();
    put_u64(out, header_text.size());
    out += header_text;
    for (const auto& [name, p] : params) put_doubles(out, p.data());
    for (const auto& row : m) put_doubles(out, row);
    for (const auto& row : v) put_doubles(out, row);
    put_u64(out, fnv1a(out.data(), out.size()));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
        f.write(out.data(), std::streamsize(out.size()));
        if (!f) throw CheckpointError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::unique_ptr<Trainer> restore(const std::filesystem::path& path, std::shared_ptr<const Dataset> data,
                                 const TrainConfig* replacement) {
    const Contents c = read_contents(path);
    const TrainConfig config = replacement ? *replacement : header_config(c);
    auto trainer = std::make_unique<Trainer>(config, std::move(data), header_vocab(c));
    check_text_encoder(c, trainer->model());

    const auto& params = trainer->optimizer().params();
    std::vector<std::vector<double>> m, v;
    for (const auto& [name, p] : params) m.push_back(array(c, "adam_m/" + name, p.numel()));
    for (const auto& [name, p] : params) v.push_back(array(c, "adam_v/" + name, p.numel()));
    restore_params(c, params);
    trainer->optimizer().set_state(c.header.at("adam_step").get<std::int64_t>(), std::move(m), std::move(v));
    trainer->set_steps_done(c.header.at("step").get<std::int64_t>());
    return trainer;
}

LoadedModel load_model(const std::filesystem::path& path, const TrainConfig* replacement) {
    const Contents c = read_contents(path);
    LoadedModel out;
    out.config = replacement ? *replacement : header_config(c);
    out.step = c.header.at("step").get<std::int64_t>();
    out.model = std::make_unique<LgvqModel>(out.config, header_vocab(c));
    check_text_encoder(c, *out.model);
    restore_params(c, out.model->parameters());
    return out;
}

TrainConfig read_config(const std::filesystem::path& path) { return header_config(read_contents(path)); }

}  // namespace lgvq::checkpoint
