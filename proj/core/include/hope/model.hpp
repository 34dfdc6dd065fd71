#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hope/dataset.hpp"
#include "hope/hopfield.hpp"
#include "hope/losses.hpp"
#include "hope/softmoe.hpp"
#include "hope/tape.hpp"

namespace hope {

struct TrainConfig {
    // Stage schedule (warm-up prompt, warm-up memory, joint). The paper-default
    // total is 10 epochs.
    int epochs_stage1 = 2;
    int epochs_stage2 = 2;
    int epochs_stage3 = 6;

    LossWeights weights;  // alpha 0.9, beta 0.8, gamma 0.3; tau 0.5
    double lr = 2e-3;
    double lr_memory_mult = 1.0;  // lr multiplier for the Hopfield groups
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    int batch_size = 64;  // 0 = full batch
    int slots = 8;        // l
    int n_experts = 8;
    int n_blocks = 4;     // second half carries the two Soft-MoE layers
    int hidden_mult = 2;  // feed-forward hidden width = hidden_mult * D
    int k_shots = 10;
    std::uint64_t seed = 0;
    Precision precision = Precision::f64;
    ComposerMode composer_mode = ComposerMode::softmoe;
    TargetMode target_mode = TargetMode::spread;

    bool use_memory = true;          // false: composer sees [f_v] only
    bool use_info_nce = true;        // false: InfoNCE term pinned to zero
    bool use_retrieval_loss = true;  // false: retrieval term pinned to zero
    int validate_every = 1;          // epochs between validation passes; 0 = final only
    double w_init_scale = 3.0;
    double prompt_init_scale = 0.02;
    double composer_residual_scale = 0.05;

    void validate() const;  // throws ConfigError
};

// Every trainable and frozen tensor of the pipeline.
struct ModelState {
    TrainConfig config;
    VocabSpec vocab;
    SoftPrompt prompt;
    LabelEmbeddings labels;
    TextEncoderStub encoder;
    HopfieldMemory memory;
    ComposerStack composer;
    Matrix logit_scale;  // 1 x 1, initialized to 1/0.07

    int dim() const { return vocab.dimension; }
};

ModelState init_model(const CompositionDataset& ds, const TrainConfig& config);

// Parameter groups used by the stage schedule.
enum class ParamGroup : std::uint8_t { prompt, hopfield_projection, hopfield_memory, composer, logit_scale };

struct TrainableGroups {
    bool prompt = false;
    bool hopfield_projection = false;
    bool hopfield_memory = false;
    bool composer = false;
    bool logit_scale = false;

    bool enabled(ParamGroup g) const;
    static TrainableGroups all();
    static TrainableGroups none();
};

// Visits every trainable parameter with a stable name. Checkpointing, Adam
// state allocation, and gradient application all walk this.
void visit_params(ModelState& model, const std::function<void(const std::string&, Matrix&, ParamGroup)>& fn);

// Tape handles for one forward/backward pass.
struct BoundModel {
    const ModelState* model = nullptr;
    Tape::NodeId theta = -1;
    HopfieldNodes hopfield;
    ComposerNodes composer;
    Tape::NodeId logit_scale = -1;
};

BoundModel bind_model(Tape& t, const ModelState& model, const TrainableGroups& groups);

// After a backward pass, writes each bound parameter's gradient through the
// same naming scheme as visit_params.
void collect_gradients(const Tape& t, const BoundModel& bound,
                       const std::function<void(const std::string&, const Matrix&, ParamGroup)>& fn);

// Hopfield retrieval plus composer readout for one sample embedding. When
// the config disables the memory path the token sequence is just [f_v].
struct SampleForward {
    Retrieval retrieval;
    ComposerTrace trace;
    Tape::NodeId features = -1;  // F_v
    bool has_retrieval = false;
};

SampleForward forward_sample(Tape& t, const BoundModel& bound, const Matrix& f_v);

// Retrieval only (probe path).
Retrieval retrieve_for_sample(Tape& t, const BoundModel& bound, const Matrix& f_v);

struct Batch {
    Matrix embeddings;  // B x D
    std::vector<Composition> labels;
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<int>& indices);

struct BuiltLosses {
    LossParts parts;
    Tape::NodeId total = -1;
};

// Assembles the stage loss over a batch. Stage 1 trains the prompt with the
// alignment loss only; stage 2 trains the memory with the retrieval and
// contrastive terms; stage 3 uses the full weighted sum. Disabled terms are
// pinned to constant zero.
BuiltLosses build_losses(Tape& t, const BoundModel& bound, const Batch& batch, int stage);

}  // namespace hope
