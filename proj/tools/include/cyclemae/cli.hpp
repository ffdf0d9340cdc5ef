#pragma once

#include "cyclemae/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cyclemae::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the process
/// exit status; diagnostics go to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes the synthetic corpus described by cfg.data (clips, metadata,
/// masks, manifest). Returns the manifest path.
std::filesystem::path generate_data(const config::RunConfig& cfg);

/// Encodes `clip` with the checkpointed model (unmasked when mask_ratio is 0,
/// else under a uniform-frame mask drawn from `mask_seed`), projects every
/// temporal group and writes the self-similarity matrix as CSV: a header
/// line "# N_T=<n>" followed by n rows of n comma-separated values.
Mat export_similarity(const std::filesystem::path& checkpoint, const std::filesystem::path& clip,
                      const std::filesystem::path& out, double mask_ratio = 0.0,
                      std::uint64_t mask_seed = 0);

/// Reads a matrix written by export_similarity.
Mat read_similarity_csv(const std::filesystem::path& path);

struct AblationCell {
    std::array<int, 3> patch{};  // h, w, t
    double mask_ratio = 0.0;
    double mdice = 0.0;
};

struct AblationTable {
    std::vector<AblationCell> patch_sweep;  // at the reference ratio
    std::vector<AblationCell> ratio_sweep;  // at the reference patch
};

/// Pretrains one model per grid cell on the train split, fits a frozen-encoder
/// segmentation head and reports test-split mean Dice. Progress lines go to `log`.
AblationTable run_ablation(const config::RunConfig& cfg, std::ostream& log);

/// Two blocks, "Patch Size | mDice [%]" and "Ratio | mDice [%]".
std::string format_ablation(const AblationTable& table);

}  // namespace cyclemae::cli
