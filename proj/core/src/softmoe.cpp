#include "hope/softmoe.hpp"

#include <cmath>

#include "hope/errors.hpp"

namespace hope {

FeedForward FeedForward::seeded(int dim, int hidden, Rng& rng, double residual_scale) {
    // Residual-writing layer starts near zero so a fresh block is close to
    // the identity map and opens up only where the loss wants it.
    FeedForward f;
    f.w1 = Matrix::gaussian(dim, hidden, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
    f.b1 = Matrix(1, hidden);
    f.w2 = Matrix::gaussian(hidden, dim, rng, residual_scale / std::sqrt(static_cast<double>(hidden)));
    f.b2 = Matrix(1, dim);
    return f;
}

FeedForward FeedForward::identity(int dim) {
    FeedForward f;
    f.activation = Activation::linear;
    f.w1 = Matrix::identity(dim);
    f.b1 = Matrix(1, dim);
    f.w2 = Matrix::identity(dim);
    f.b2 = Matrix(1, dim);
    return f;
}

SoftMoeLayer SoftMoeLayer::seeded(int dim, int n_experts, int hidden, Rng& rng, double residual_scale) {
    if (n_experts < 1) throw ConfigError("softmoe: need at least one expert");
    SoftMoeLayer layer;
    layer.phi = Matrix::gaussian(dim, n_experts, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
    layer.experts.reserve(static_cast<std::size_t>(n_experts));
    for (int e = 0; e < n_experts; ++e) layer.experts.push_back(FeedForward::seeded(dim, hidden, rng, residual_scale));
    return layer;
}

ComposerStack ComposerStack::seeded(int dim, int n_blocks, int n_experts, int hidden, ComposerMode mode, Rng& rng,
                                    double residual_scale) {
    if (n_blocks < 1) throw ConfigError("composer: need at least one block");
    ComposerStack stack;
    stack.dim = dim;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int b = 0; b < n_blocks; ++b) {
        TransformerBlock block;
        block.wq = Matrix::gaussian(dim, dim, rng, attn_scale);
        block.wk = Matrix::gaussian(dim, dim, rng, attn_scale);
        block.wv = Matrix::gaussian(dim, dim, rng, attn_scale);
        block.wo = Matrix::gaussian(dim, dim, rng, residual_scale * attn_scale);
        block.ln1_gain = Matrix::filled(1, dim, 1.0);
        block.ln1_bias = Matrix(1, dim);
        block.ln2_gain = Matrix::filled(1, dim, 1.0);
        block.ln2_bias = Matrix(1, dim);
        // "Second half" of the feed-forward layers carries the Soft-MoE.
        block.use_moe = mode == ComposerMode::softmoe && b >= n_blocks / 2;
        if (block.use_moe) {
            block.moe = SoftMoeLayer::seeded(dim, n_experts, hidden, rng, residual_scale);
        } else {
            block.ffn = FeedForward::seeded(dim, hidden, rng, residual_scale);
        }
        stack.blocks.push_back(std::move(block));
    }
    return stack;
}

Matrix dispatch_weights(const Matrix& tokens, const Matrix& phi) {
    return transposed(softmax_rows(transposed(matmul(tokens, phi))));
}

Matrix combine_weights(const Matrix& tokens, const Matrix& phi) {
    return softmax_rows(matmul(tokens, phi));
}

FeedForwardNodes bind_feedforward(Tape& t, const FeedForward& ffn, bool trainable) {
    FeedForwardNodes n;
    n.w1 = t.leaf(ffn.w1, trainable);
    n.b1 = t.leaf(ffn.b1, trainable);
    n.w2 = t.leaf(ffn.w2, trainable);
    n.b2 = t.leaf(ffn.b2, trainable);
    n.activation = ffn.activation;
    return n;
}

SoftMoeNodes bind_softmoe(Tape& t, const SoftMoeLayer& layer, bool trainable) {
    SoftMoeNodes n;
    n.phi = t.leaf(layer.phi, trainable);
    n.experts.reserve(layer.experts.size());
    for (const FeedForward& e : layer.experts) n.experts.push_back(bind_feedforward(t, e, trainable));
    return n;
}

ComposerNodes bind_composer(Tape& t, const ComposerStack& stack, bool trainable) {
    ComposerNodes n;
    n.dim = stack.dim;
    n.blocks.reserve(stack.blocks.size());
    for (const TransformerBlock& b : stack.blocks) {
        BlockNodes bn;
        bn.wq = t.leaf(b.wq, trainable);
        bn.wk = t.leaf(b.wk, trainable);
        bn.wv = t.leaf(b.wv, trainable);
        bn.wo = t.leaf(b.wo, trainable);
        bn.ln1_gain = t.leaf(b.ln1_gain, trainable);
        bn.ln1_bias = t.leaf(b.ln1_bias, trainable);
        bn.ln2_gain = t.leaf(b.ln2_gain, trainable);
        bn.ln2_bias = t.leaf(b.ln2_bias, trainable);
        bn.use_moe = b.use_moe;
        if (b.use_moe) {
            bn.moe = bind_softmoe(t, b.moe, trainable);
        } else {
            bn.ffn = bind_feedforward(t, b.ffn, trainable);
        }
        n.blocks.push_back(std::move(bn));
    }
    return n;
}

Tape::NodeId feedforward_rows(Tape& t, const FeedForwardNodes& ffn, Tape::NodeId x) {
    const int rows = t.value(x).rows();
    Tape::NodeId h = t.add(t.matmul(x, ffn.w1), broadcast_rows(t, ffn.b1, rows));
    if (ffn.activation == FeedForward::Activation::gelu) h = t.gelu(h);
    return t.add(t.matmul(h, ffn.w2), broadcast_rows(t, ffn.b2, rows));
}

Tape::NodeId moe_layer_forward(Tape& t, const SoftMoeNodes& layer, Tape::NodeId tokens) {
    const Tape::NodeId logits = t.matmul(tokens, layer.phi);  // tokens x slots
    const Tape::NodeId dispatch = t.transpose(t.softmax_rows(t.transpose(logits)));
    const Tape::NodeId combine = t.softmax_rows(logits);
    const Tape::NodeId slots_in = t.matmul(t.transpose(dispatch), tokens);  // slots x D

    Tape::NodeId slots_out = -1;
    for (std::size_t e = 0; e < layer.experts.size(); ++e) {
        const Tape::NodeId slot = t.slice_rows(slots_in, static_cast<int>(e), 1);
        const Tape::NodeId out = feedforward_rows(t, layer.experts[e], slot);
        slots_out = e == 0 ? out : t.concat_rows(slots_out, out);
    }
    return t.matmul(combine, slots_out);
}

ComposerTrace composer_forward(Tape& t, const ComposerNodes& stack, Tape::NodeId tokens) {
    ComposerTrace trace;
    Tape::NodeId x = tokens;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(stack.dim));
    for (const BlockNodes& b : stack.blocks) {
        const Tape::NodeId a_in = layer_norm_rows(t, x, b.ln1_gain, b.ln1_bias);
        const Tape::NodeId q = t.matmul(a_in, b.wq);
        const Tape::NodeId k = t.matmul(a_in, b.wk);
        const Tape::NodeId v = t.matmul(a_in, b.wv);
        const Tape::NodeId att = t.softmax_rows(t.scale(t.matmul(q, t.transpose(k)), attn_scale));
        x = t.add(x, t.matmul(t.matmul(att, v), b.wo));

        const Tape::NodeId f_in = layer_norm_rows(t, x, b.ln2_gain, b.ln2_bias);
        if (b.use_moe) {
            trace.combine_weights.push_back(t.softmax_rows(t.matmul(f_in, b.moe.phi)));
            x = t.add(x, moe_layer_forward(t, b.moe, f_in));
        } else {
            x = t.add(x, feedforward_rows(t, b.ffn, f_in));
        }
    }
    trace.features = l2_normalize_rows(t, t.slice_rows(x, 0, 1));
    return trace;
}

}  // namespace hope
