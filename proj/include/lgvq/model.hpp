#pragma once

#include <memory>

#include "lgvq/config.hpp"
#include "lgvq/nn.hpp"
#include "lgvq/relationship.hpp"
#include "lgvq/semantic.hpp"
#include "lgvq/text.hpp"
#include "lgvq/vq.hpp"

namespace lgvq {

vq::AutoencoderConfig autoencoder_config(const TrainConfig& config);
semantic::AlignmentConfig alignment_config(const TrainConfig& config, std::int64_t vocab_size);
semantic::MaskDistribution mask_distribution(const TrainConfig& config);

/// Everything trainable plus the frozen text side. Parameters are created
/// from the config's seed in a fixed order, alignment modules included even
/// when their losses are switched off.
class LgvqModel {
public:
    LgvqModel(const TrainConfig& config, text::Vocabulary vocab);

    const TrainConfig& config() const { return config_; }

    /// encoder.*, decoder.*, codebook, alignment.transformer.*, alignment.predictor.*
    nn::NamedParams parameters() const;

    vq::Encoder encoder;
    vq::Decoder decoder;
    vq::Codebook codebook;
    semantic::CodeTransformer transformer;
    semantic::MaskedTextPredictor predictor;
    std::shared_ptr<const text::TextEncoder> text_encoder;
    relationship::StopWords stopwords;

    const text::Vocabulary& vocab() const { return text_encoder->vocab(); }

private:
    TrainConfig config_;
};

}  // namespace lgvq
