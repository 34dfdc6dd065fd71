#pragma once

#include <cstdint>
#include <vector>

#include "hope/matrix.hpp"
#include "hope/rng.hpp"
#include "hope/tape.hpp"

namespace hope {

// Two-layer feed-forward map D -> hidden -> D. The linear activation exists
// so tests can assemble exact identity experts.
struct FeedForward {
    Matrix w1;  // D x hidden
    Matrix b1;  // 1 x hidden
    Matrix w2;  // hidden x D
    Matrix b2;  // 1 x D
    enum class Activation : std::uint8_t { gelu, linear };
    Activation activation = Activation::gelu;

    static FeedForward seeded(int dim, int hidden, Rng& rng, double residual_scale = 0.05);
    static FeedForward identity(int dim);
};

// Differentiable slot routing: shared logits X.Phi feed a per-slot softmax
// over tokens (dispatch) and a per-token softmax over slots (combine). One
// slot per expert.
struct SoftMoeLayer {
    Matrix phi;  // D x n_slots
    std::vector<FeedForward> experts;

    int n_slots() const { return phi.cols(); }
    static SoftMoeLayer seeded(int dim, int n_experts, int hidden, Rng& rng, double residual_scale = 0.05);
};

enum class ComposerMode : std::uint8_t { softmoe, feedforward };

// Pre-norm transformer block, single attention head, no positional
// encodings. The feed-forward half is either a plain FeedForward or a
// SoftMoeLayer (in the default two-block stack only the second half uses
// the Soft-MoE).
struct TransformerBlock {
    Matrix wq, wk, wv, wo;  // D x D
    Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x D
    bool use_moe = false;
    FeedForward ffn;
    SoftMoeLayer moe;
};

struct ComposerStack {
    std::vector<TransformerBlock> blocks;
    int dim = 0;

    static ComposerStack seeded(int dim, int n_blocks, int n_experts, int hidden, ComposerMode mode, Rng& rng,
                                double residual_scale = 0.05);
};

// Value-level routing weights (shapes: tokens x slots).
Matrix dispatch_weights(const Matrix& tokens, const Matrix& phi);
Matrix combine_weights(const Matrix& tokens, const Matrix& phi);

// Tape-recorded bindings.
struct FeedForwardNodes {
    Tape::NodeId w1 = -1, b1 = -1, w2 = -1, b2 = -1;
    FeedForward::Activation activation = FeedForward::Activation::gelu;
};
struct SoftMoeNodes {
    Tape::NodeId phi = -1;
    std::vector<FeedForwardNodes> experts;
};
struct BlockNodes {
    Tape::NodeId wq = -1, wk = -1, wv = -1, wo = -1;
    Tape::NodeId ln1_gain = -1, ln1_bias = -1, ln2_gain = -1, ln2_bias = -1;
    bool use_moe = false;
    FeedForwardNodes ffn;
    SoftMoeNodes moe;
};
struct ComposerNodes {
    std::vector<BlockNodes> blocks;
    int dim = 0;
};

FeedForwardNodes bind_feedforward(Tape& t, const FeedForward& ffn, bool trainable);
SoftMoeNodes bind_softmoe(Tape& t, const SoftMoeLayer& layer, bool trainable);
ComposerNodes bind_composer(Tape& t, const ComposerStack& stack, bool trainable);

Tape::NodeId feedforward_rows(Tape& t, const FeedForwardNodes& ffn, Tape::NodeId x);

// slots_in = dispatch^T tokens, one expert per slot, output recombined by
// the per-token combine softmax. No residual here; the block adds it.
Tape::NodeId moe_layer_forward(Tape& t, const SoftMoeNodes& layer, Tape::NodeId tokens);

// Forward through the stack; returns the normalized readout of token row 0
// plus the combine-weight nodes of every Soft-MoE layer for allocation
// analysis.
struct ComposerTrace {
    Tape::NodeId features = -1;  // F_v: 1 x D, L2-normalized
    std::vector<Tape::NodeId> combine_weights;  // per MoE layer: tokens x slots
};

ComposerTrace composer_forward(Tape& t, const ComposerNodes& stack, Tape::NodeId tokens);

}  // namespace hope
