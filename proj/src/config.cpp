#include "lgvq/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lgvq/error.hpp"

namespace lgvq {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

bool parse_value(const std::string& s, int& out) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}
bool parse_value(const std::string& s, std::uint64_t& out) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}
bool parse_value(const std::string& s, double& out) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}
bool parse_value(const std::string& s, bool& out) {
    if (s == "true" || s == "1" || s == "on") return out = true, true;
    if (s == "false" || s == "0" || s == "off") return out = false, true;
    return false;
}
bool parse_value(const std::string& s, std::string& out) {
    out = s;
    return true;
}

struct Key {
    std::string name;
    std::function<std::string(const TrainConfig&)> get;
    std::function<bool(TrainConfig&, const std::string&)> set;
};

template <typename T>
Key key(std::string name, T TrainConfig::*member) {
    return Key{std::move(name), [member](const TrainConfig& c) { return format_value(c.*member); },
               [member](TrainConfig& c, const std::string& v) { return parse_value(v, c.*member); }};
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        key("manifest", &TrainConfig::manifest),
        key("image_size", &TrainConfig::image_size),
        key("vocab", &TrainConfig::vocab),
        key("stopwords", &TrainConfig::stopwords),
        key("downsample", &TrainConfig::downsample),
        key("codebook_size", &TrainConfig::codebook_size),
        key("codebook_init_bound", &TrainConfig::codebook_init_bound),
        key("code_dim", &TrainConfig::code_dim),
        key("base_channels", &TrainConfig::base_channels),
        key("max_channels", &TrainConfig::max_channels),
        key("text_encoder", &TrainConfig::text_encoder),
        key("text_dim", &TrainConfig::text_dim),
        key("text_len", &TrainConfig::text_len),
        key("transformer_layers", &TrainConfig::transformer_layers),
        key("transformer_heads", &TrainConfig::transformer_heads),
        key("adapter_heads", &TrainConfig::adapter_heads),
        key("decoder_layers", &TrainConfig::decoder_layers),
        key("decoder_heads", &TrainConfig::decoder_heads),
        key("mlp_ratio", &TrainConfig::mlp_ratio),
        key("batch_size", &TrainConfig::batch_size),
        key("steps", &TrainConfig::steps),
        key("seed", &TrainConfig::seed),
        key("lr", &TrainConfig::lr),
        key("adam_beta1", &TrainConfig::adam_beta1),
        key("adam_beta2", &TrainConfig::adam_beta2),
        key("adam_eps", &TrainConfig::adam_eps),
        key("omega", &TrainConfig::omega),
        key("alpha", &TrainConfig::alpha),
        key("beta", &TrainConfig::beta),
        key("gamma", &TrainConfig::gamma),
        key("use_gsa", &TrainConfig::use_gsa),
        key("use_mtp", &TrainConfig::use_mtp),
        key("use_ras", &TrainConfig::use_ras),
        key("compute_zero_weight_losses", &TrainConfig::compute_zero_weight_losses),
        key("gsa_variant", &TrainConfig::gsa_variant),
        key("gsa_temperature", &TrainConfig::gsa_temperature),
        key("mask_mean", &TrainConfig::mask_mean),
        key("mask_std", &TrainConfig::mask_std),
        key("mask_min", &TrainConfig::mask_min),
        key("mask_max", &TrainConfig::mask_max),
        key("pair_cap", &TrainConfig::pair_cap),
        key("checkpoint_every", &TrainConfig::checkpoint_every),
        key("eval_masked_words", &TrainConfig::eval_masked_words),
        key("eval_seed", &TrainConfig::eval_seed),
        key("threads", &TrainConfig::threads),
    };
    return table;
}

const Key* find_key(const std::string& name) {
    for (const auto& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

void apply(TrainConfig& config, const std::string& name, const std::string& value, const std::string& where,
           std::vector<std::string>& errors) {
    const Key* k = find_key(name);
    if (!k) {
        errors.push_back(where + "unknown key '" + name + "'");
    } else if (!k->set(config, value)) {
        errors.push_back(where + "invalid value '" + value + "' for key '" + name + "'");
    }
}

}  // namespace

std::pair<std::string, std::string> parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + text + "' is not KEY=VALUE");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

std::vector<std::string> validate(const TrainConfig& c) {
    std::vector<std::string> e;
    auto positive = [&](const char* name, double v) {
        if (!(v > 0)) e.push_back(std::string(name) + " must be positive");
    };
    auto non_negative = [&](const char* name, double v) {
        if (!(v >= 0)) e.push_back(std::string(name) + " must be non-negative");
    };
    positive("image_size", c.image_size);
    positive("downsample", c.downsample);
    if (c.downsample > 0 && (c.downsample & (c.downsample - 1)) != 0) e.push_back("downsample must be a power of two");
    if (c.downsample > 0 && c.image_size % c.downsample != 0) e.push_back("image_size must be divisible by downsample");
    if (c.codebook_size < 2) e.push_back("codebook_size must be at least 2");
    non_negative("codebook_init_bound", c.codebook_init_bound);
    positive("code_dim", c.code_dim);
    positive("base_channels", c.base_channels);
    positive("max_channels", c.max_channels);
    if (c.text_encoder != "toy") e.push_back("text_encoder must be 'toy' (no pre-trained encoder is bundled)");
    positive("text_dim", c.text_dim);
    if (c.text_len < 3) e.push_back("text_len must be at least 3");
    non_negative("transformer_layers", c.transformer_layers);
    positive("transformer_heads", c.transformer_heads);
    if (c.transformer_heads > 0 && c.code_dim % c.transformer_heads != 0) e.push_back("code_dim must be divisible by transformer_heads");
    positive("adapter_heads", c.adapter_heads);
    if (c.adapter_heads > 0 && c.text_dim % c.adapter_heads != 0) e.push_back("text_dim must be divisible by adapter_heads");
    positive("decoder_layers", c.decoder_layers);
    positive("decoder_heads", c.decoder_heads);
    if (c.decoder_heads > 0 && c.text_dim % c.decoder_heads != 0) e.push_back("text_dim must be divisible by decoder_heads");
    positive("mlp_ratio", c.mlp_ratio);
    positive("batch_size", c.batch_size);
    non_negative("steps", c.steps);
    positive("lr", c.lr);
    if (!(c.adam_beta1 >= 0 && c.adam_beta1 < 1)) e.push_back("adam_beta1 must be in [0, 1)");
    if (!(c.adam_beta2 >= 0 && c.adam_beta2 < 1)) e.push_back("adam_beta2 must be in [0, 1)");
    positive("adam_eps", c.adam_eps);
    non_negative("omega", c.omega);
    non_negative("alpha", c.alpha);
    non_negative("beta", c.beta);
    non_negative("gamma", c.gamma);
    if (c.gsa_variant != "verbatim" && c.gsa_variant != "symmetric") e.push_back("gsa_variant must be verbatim or symmetric");
    positive("gsa_temperature", c.gsa_temperature);
    positive("mask_std", c.mask_std);
    if (!(0.0 <= c.mask_min && c.mask_min <= c.mask_max && c.mask_max <= 1.0)) {
        e.push_back("mask bounds must satisfy 0 <= mask_min <= mask_max <= 1");
    }
    non_negative("pair_cap", c.pair_cap);
    non_negative("checkpoint_every", c.checkpoint_every);
    positive("eval_masked_words", c.eval_masked_words);
    non_negative("threads", c.threads);
    return e;
}

TrainConfig parse_config(const std::string& text, const Overrides& overrides) {
    TrainConfig config;
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) {
            errors.push_back(where + "expected KEY = VALUE");
            continue;
        }
        apply(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where, errors);
    }
    for (const auto& [k, v] : overrides) apply(config, k, v, "--set: ", errors);
    if (errors.empty()) errors = validate(config);
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& err : errors) msg += "\n  " + err;
        throw ConfigError(msg);
    }
    return config;
}

TrainConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string to_text(const TrainConfig& config) {
    std::string out = "# lgvq resolved configuration\n";
    for (const auto& k : keys()) out += k.name + " = " + k.get(config) + "\n";
    return out;
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << to_text(config);
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
    for (const auto& k : keys())
        if (k.get(a) != k.get(b)) return false;
    return true;
}

}  // namespace lgvq
