#pragma once

// Command-line front end: train, eval, diagnose, dump-codebook.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lgvq/trainer.hpp"

namespace lgvq::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kDataError = 3,
    kDivergence = 4,
};

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Runs `trainer` up to config().steps, appending to out_dir/metrics.jsonl
/// and writing checkpoints. On divergence saves out_dir/last_good.ckpt and
/// rethrows.
void train_loop(Trainer& trainer, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace lgvq::cli
