#pragma once

// Combined objective, optimiser and the training loop.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lgvq/config.hpp"
#include "lgvq/dataset.hpp"
#include "lgvq/model.hpp"

namespace lgvq {

struct LossWeights {
    double omega = 0.25;
    double alpha = 0.1;
    double beta = 0.1;
    double gamma = 0.1;

    static LossWeights from(const TrainConfig& config) {
        return {config.omega, config.alpha, config.beta, config.gamma};
    }
};

struct LossParts {
    double vq = 0.0;
    double gsa = 0.0;
    double mtp = 0.0;
    double ras = 0.0;
};

struct LossBundle {
    double vq = 0.0;
    double gsa = 0.0;
    double mtp = 0.0;
    double ras = 0.0;
    double total = 0.0;
};

/// vq + alpha*gsa + beta*mtp + gamma*ras. Throws DivergenceError when any
/// part is not finite.
LossBundle total_loss(const LossParts& parts, const LossWeights& weights);

struct StepMetrics {
    std::int64_t step = 0;  // 1-based
    LossBundle losses;
    std::int64_t codebook_usage_batch = 0;

    std::string to_json_line() const;
    static StepMetrics from_json_line(const std::string& line);
};

/// Adaptive-moment optimiser. A parameter without a gradient is updated as
/// if its gradient were exactly zero.
class Adam {
public:
    struct Options {
        double lr = 2e-4;
        double beta1 = 0.5;
        double beta2 = 0.9;
        double eps = 1e-8;
    };

    Adam(nn::NamedParams params, Options options);

    void step();
    void zero_grad();

    const nn::NamedParams& params() const { return params_; }
    std::int64_t steps_taken() const { return t_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    void set_state(std::int64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

private:
    nn::NamedParams params_;
    Options options_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

Adam::Options adam_options(const TrainConfig& config);

/// Every tensor of one forward pass. Inactive losses stay undefined and
/// read as 0 in `parts`.
struct ForwardPass {
    ag::Tensor total;
    vq::VqLoss vq;
    ag::Tensor gsa;
    ag::Tensor mtp;
    ag::Tensor ras;
    LossParts parts;
    vq::CodeGrid codes;
    ag::Tensor reconstruction;
};

/// `step` is the 0-based global step; it keys the mask and pair generators.
ForwardPass forward_losses(const LgvqModel& model, const Dataset& data, const Batch& batch,
                           const TrainConfig& config, std::int64_t step);

/// One optimiser update; the text encoder is never touched.
StepMetrics train_step(LgvqModel& model, Adam& optimizer, const Dataset& data, const Batch& batch,
                       const TrainConfig& config, std::int64_t step);

class Trainer {
public:
    Trainer(const TrainConfig& config, std::shared_ptr<const Dataset> data, text::Vocabulary vocab);

    /// Runs the next step.
    StepMetrics step();
    std::int64_t steps_done() const { return steps_done_; }

    LgvqModel& model() { return *model_; }
    const LgvqModel& model() const { return *model_; }
    Adam& optimizer() { return optimizer_; }
    const Adam& optimizer() const { return optimizer_; }
    const TrainConfig& config() const { return config_; }
    const Dataset& data() const { return *data_; }

    void set_steps_done(std::int64_t steps) { steps_done_ = steps; }

private:
    TrainConfig config_;
    std::shared_ptr<const Dataset> data_;
    std::unique_ptr<LgvqModel> model_;
    Adam optimizer_;
    std::int64_t steps_done_ = 0;
};

/// Vocabulary for a run: the `vocab` file when configured, otherwise built
/// from every caption of the dataset.
text::Vocabulary resolve_vocabulary(const TrainConfig& config, const Dataset& data);

}  // namespace lgvq
