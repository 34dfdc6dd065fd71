#include <cstdint>
#include <string>

#include "hope/errors.hpp"
#include "hope/training.hpp"
#include "json.hpp"

namespace hope {

namespace {

using nlohmann::json;

const char* composer_mode_name(ComposerMode m) {
    return m == ComposerMode::softmoe ? "softmoe" : "feedforward";
}

ComposerMode composer_mode_from(const std::string& s) {
    if (s == "softmoe") return ComposerMode::softmoe;
    if (s == "feedforward") return ComposerMode::feedforward;
    throw ConfigError("config: unknown composer_mode '" + s + "'");
}

const char* target_mode_name(TargetMode m) {
    return m == TargetMode::spread ? "spread" : "single";
}

TargetMode target_mode_from(const std::string& s) {
    if (s == "spread") return TargetMode::spread;
    if (s == "single") return TargetMode::single;
    throw ConfigError("config: unknown target_mode '" + s + "'");
}

json config_json(const TrainConfig& c) {
    json j;
    j["epochs_stage1"] = c.epochs_stage1;
    j["epochs_stage2"] = c.epochs_stage2;
    j["epochs_stage3"] = c.epochs_stage3;
    j["alpha"] = c.weights.alpha;
    j["beta"] = c.weights.beta;
    j["gamma"] = c.weights.gamma;
    j["tau"] = c.weights.tau;
    j["lr"] = c.lr;
    j["lr_memory_mult"] = c.lr_memory_mult;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["batch_size"] = c.batch_size;
    j["slots"] = c.slots;
    j["n_experts"] = c.n_experts;
    j["n_blocks"] = c.n_blocks;
    j["hidden_mult"] = c.hidden_mult;
    j["k_shots"] = c.k_shots;
    j["seed"] = c.seed;
    j["precision"] = c.precision == Precision::f64 ? "f64" : "f32";
    j["composer_mode"] = composer_mode_name(c.composer_mode);
    j["target_mode"] = target_mode_name(c.target_mode);
    j["use_memory"] = c.use_memory;
    j["use_info_nce"] = c.use_info_nce;
    j["use_retrieval_loss"] = c.use_retrieval_loss;
    j["validate_every"] = c.validate_every;
    j["w_init_scale"] = c.w_init_scale;
    j["composer_residual_scale"] = c.composer_residual_scale;
    j["prompt_init_scale"] = c.prompt_init_scale;
    return j;
}

void apply_json(TrainConfig& c, const json& j) {
    c.epochs_stage1 = j.value("epochs_stage1", c.epochs_stage1);
    c.epochs_stage2 = j.value("epochs_stage2", c.epochs_stage2);
    c.epochs_stage3 = j.value("epochs_stage3", c.epochs_stage3);
    c.weights.alpha = j.value("alpha", c.weights.alpha);
    c.weights.beta = j.value("beta", c.weights.beta);
    c.weights.gamma = j.value("gamma", c.weights.gamma);
    c.weights.tau = j.value("tau", c.weights.tau);
    c.lr = j.value("lr", c.lr);
    c.lr_memory_mult = j.value("lr_memory_mult", c.lr_memory_mult);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.slots = j.value("slots", c.slots);
    c.n_experts = j.value("n_experts", c.n_experts);
    c.n_blocks = j.value("n_blocks", c.n_blocks);
    c.hidden_mult = j.value("hidden_mult", c.hidden_mult);
    c.k_shots = j.value("k_shots", c.k_shots);
    c.seed = j.value("seed", c.seed);
    if (j.contains("precision")) {
        const std::string p = j["precision"].get<std::string>();
        if (p == "f64") {
            c.precision = Precision::f64;
        } else if (p == "f32") {
            c.precision = Precision::f32;
        } else {
            throw ConfigError("config: unknown precision '" + p + "'");
        }
    }
    if (j.contains("composer_mode")) c.composer_mode = composer_mode_from(j["composer_mode"].get<std::string>());
    if (j.contains("target_mode")) c.target_mode = target_mode_from(j["target_mode"].get<std::string>());
    c.use_memory = j.value("use_memory", c.use_memory);
    c.use_info_nce = j.value("use_info_nce", c.use_info_nce);
    c.use_retrieval_loss = j.value("use_retrieval_loss", c.use_retrieval_loss);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.w_init_scale = j.value("w_init_scale", c.w_init_scale);
    c.composer_residual_scale = j.value("composer_residual_scale", c.composer_residual_scale);
    c.prompt_init_scale = j.value("prompt_init_scale", c.prompt_init_scale);
}

}  // namespace

std::string train_config_to_json(const TrainConfig& config) {
    return config_json(config).dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    return train_config_merge(TrainConfig{}, text);
}

TrainConfig train_config_merge(const TrainConfig& base, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: invalid JSON: ") + e.what());
    }
    TrainConfig c = base;
    try {
        apply_json(c, j);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    return c;
}

std::uint64_t train_config_hash(const TrainConfig& config) {
    const std::string text = config_json(config).dump();  // canonical: sorted keys
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hope
