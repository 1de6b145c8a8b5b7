#pragma once

// Training configuration: a plain-text `key = value` file, `#` comments.
// Unknown keys are rejected; every problem is reported at once.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lgvq {

struct TrainConfig {
    // Data
    std::string manifest;
    int image_size = 64;
    std::string vocab;      // empty: built from the manifest captions
    std::string stopwords;  // empty: built-in list

    // Autoencoder
    int downsample = 8;
    int codebook_size = 64;
    double codebook_init_bound = 0.0;  // entries ~ U(-b, b); 0 means 1/codebook_size
    int code_dim = 16;
    int base_channels = 8;
    int max_channels = 32;

    // Text side
    std::string text_encoder = "toy";
    int text_dim = 64;
    int text_len = 16;

    // Alignment modules
    int transformer_layers = 2;
    int transformer_heads = 4;
    int adapter_heads = 4;
    int decoder_layers = 1;
    int decoder_heads = 4;
    int mlp_ratio = 2;

    // Optimisation
    int batch_size = 8;
    int steps = 200;
    std::uint64_t seed = 0;
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.9;
    double adam_eps = 1e-8;

    // Loss weights and ablation switches
    double omega = 0.25;
    double alpha = 0.1;
    double beta = 0.1;
    double gamma = 0.1;
    bool use_gsa = true;
    bool use_mtp = true;
    bool use_ras = true;
    /// Run a loss whose weight is 0 anyway (forward and backward, scaled by 0).
    bool compute_zero_weight_losses = false;
    std::string gsa_variant = "verbatim";  // verbatim | symmetric
    double gsa_temperature = 1.0;          // symmetric variant only

    double mask_mean = 0.55;
    double mask_std = 0.25;
    double mask_min = 0.5;
    double mask_max = 1.0;
    int pair_cap = 32;

    // Bookkeeping
    int checkpoint_every = 0;  // 0: final checkpoint only
    int eval_masked_words = 1;
    std::uint64_t eval_seed = 1234;
    int threads = 0;  // 0: OpenMP default

    int grid_size() const { return image_size / downsample; }

    bool gsa_active() const { return use_gsa && (alpha > 0.0 || compute_zero_weight_losses); }
    bool mtp_active() const { return use_mtp && (beta > 0.0 || compute_zero_weight_losses); }
    bool ras_active() const { return use_ras && (gamma > 0.0 || compute_zero_weight_losses); }
    bool alignment_active() const { return gsa_active() || mtp_active() || ras_active(); }
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses "key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

TrainConfig parse_config(const std::string& text, const Overrides& overrides = {});
TrainConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// Every key with its resolved value; parse_config(to_text(c)) == c.
std::string to_text(const TrainConfig& config);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

std::vector<std::string> config_keys();
/// Problems with an otherwise well-formed config; empty when valid.
std::vector<std::string> validate(const TrainConfig& config);

bool operator==(const TrainConfig& a, const TrainConfig& b);

}  // namespace lgvq
