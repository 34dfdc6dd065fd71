#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hope/model.hpp"

namespace hope {

struct ValidationMetrics {
    double seen = 0.0;
    double unseen = 0.0;
    double hm = 0.0;
    double auc = 0.0;
};

struct EpochMetrics {
    int epoch = 0;  // 1-based, global across stages
    int stage = 0;
    double total = 0.0;
    double spm = 0.0;
    double st_obj = 0.0;
    double dfm = 0.0;
    double retrieval = 0.0;
    double info_nce = 0.0;
    std::optional<ValidationMetrics> validation;
};

struct TrainResult {
    ModelState model;
    std::vector<EpochMetrics> log;
};

// Three-stage schedule: (1) prompt with the alignment loss, (2) memory with
// the retrieval terms, (3) everything with the full weighted loss.
// Deterministic under config.seed.
TrainResult train(const TrainConfig& config, const CompositionDataset& ds);

// Columns: epoch, stage, loss components, then closed-world validation
// numbers (empty when validation was skipped that epoch).
void write_metrics_csv(const std::vector<EpochMetrics>& log, const std::string& path);

// Config serialization (JSON object, stable key order via canonical dump).
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);
// Merge JSON fields present in `text` over `base` (CLI config-file support).
TrainConfig train_config_merge(const TrainConfig& base, const std::string& text);
std::uint64_t train_config_hash(const TrainConfig& config);

// Checkpoint file: magic "HOPECKPT", u32 version, u64 config hash, a JSON
// header (config, vocabulary, memory row classes, seed), then named f64
// parameter blocks. Writes are atomic (temp file + rename). Round-trips
// restore bit-identical forward outputs.
void save_checkpoint(const ModelState& model, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace hope
