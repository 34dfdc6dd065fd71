#include "hope/model.hpp"

#include <cmath>
#include <string>

#include "hope/errors.hpp"

namespace hope {

void TrainConfig::validate() const {
    if (epochs_stage1 < 0 || epochs_stage2 < 0 || epochs_stage3 < 0) {
        throw ConfigError("config: stage epochs must be >= 0");
    }
    if (epochs_stage1 + epochs_stage2 + epochs_stage3 < 1) {
        throw ConfigError("config: at least one training epoch required");
    }
    weights.validate();
    if (lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (lr_memory_mult <= 0.0) throw ConfigError("config: lr_memory_mult must be positive");
    if (batch_size < 0) throw ConfigError("config: batch_size must be >= 0");
    if (slots < 2 || slots % 2 != 0) throw ConfigError("config: slots must be even and >= 2");
    if (n_experts < 1) throw ConfigError("config: n_experts must be >= 1");
    if (n_blocks < 1) throw ConfigError("config: n_blocks must be >= 1");
    if (hidden_mult < 1) throw ConfigError("config: hidden_mult must be >= 1");
    if (k_shots < 1) throw ConfigError("config: k_shots must be >= 1");
    if (validate_every < 0) throw ConfigError("config: validate_every must be >= 0");
    if (w_init_scale <= 0.0) throw ConfigError("config: w_init_scale must be positive");
    if (composer_residual_scale < 0.0) throw ConfigError("config: composer_residual_scale must be >= 0");
}

ModelState init_model(const CompositionDataset& ds, const TrainConfig& config) {
    config.validate();
    ds.validate();
    if (ds.vocab.seen_pairs.empty()) throw ConfigError("init_model: no seen compositions");

    ModelState m;
    m.config = config;
    m.vocab = ds.vocab;
    Rng base(config.seed);
    Rng prompt_rng = base.fork(31);
    Rng composer_rng = base.fork(32);
    m.prompt = SoftPrompt::seeded(ds.vocab.dimension, prompt_rng, config.prompt_init_scale);
    m.labels = make_label_embeddings(ds, config.seed);
    m.encoder = TextEncoderStub(ds.vocab.dimension, ds.encoder_seed());
    m.memory = init_memory(ds, config.k_shots, config.slots, m.encoder, m.labels, config.seed, config.w_init_scale);
    m.composer = ComposerStack::seeded(ds.vocab.dimension, config.n_blocks, config.n_experts,
                                       config.hidden_mult * ds.vocab.dimension, config.composer_mode, composer_rng,
                                       config.composer_residual_scale);
    m.logit_scale = Matrix(1, 1, {1.0 / 0.07});
    return m;
}

bool TrainableGroups::enabled(ParamGroup g) const {
    switch (g) {
        case ParamGroup::prompt: return prompt;
        case ParamGroup::hopfield_projection: return hopfield_projection;
        case ParamGroup::hopfield_memory: return hopfield_memory;
        case ParamGroup::composer: return composer;
        case ParamGroup::logit_scale: return logit_scale;
    }
    return false;
}

TrainableGroups TrainableGroups::all() {
    return TrainableGroups{true, true, true, true, true};
}

TrainableGroups TrainableGroups::none() {
    return TrainableGroups{};
}

namespace {

void visit_feedforward(const std::string& prefix, FeedForward& ffn,
                       const std::function<void(const std::string&, Matrix&, ParamGroup)>& fn) {
    fn(prefix + ".w1", ffn.w1, ParamGroup::composer);
    fn(prefix + ".b1", ffn.b1, ParamGroup::composer);
    fn(prefix + ".w2", ffn.w2, ParamGroup::composer);
    fn(prefix + ".b2", ffn.b2, ParamGroup::composer);
}

}  // namespace

void visit_params(ModelState& model, const std::function<void(const std::string&, Matrix&, ParamGroup)>& fn) {
    fn("prompt.theta", model.prompt.theta, ParamGroup::prompt);
    fn("hopfield.projection", model.memory.projection, ParamGroup::hopfield_projection);
    fn("hopfield.visual_attr", model.memory.visual_attr, ParamGroup::hopfield_memory);
    fn("hopfield.visual_obj", model.memory.visual_obj, ParamGroup::hopfield_memory);
    for (std::size_t b = 0; b < model.composer.blocks.size(); ++b) {
        TransformerBlock& block = model.composer.blocks[b];
        const std::string prefix = "composer.block" + std::to_string(b);
        fn(prefix + ".wq", block.wq, ParamGroup::composer);
        fn(prefix + ".wk", block.wk, ParamGroup::composer);
        fn(prefix + ".wv", block.wv, ParamGroup::composer);
        fn(prefix + ".wo", block.wo, ParamGroup::composer);
        fn(prefix + ".ln1_gain", block.ln1_gain, ParamGroup::composer);
        fn(prefix + ".ln1_bias", block.ln1_bias, ParamGroup::composer);
        fn(prefix + ".ln2_gain", block.ln2_gain, ParamGroup::composer);
        fn(prefix + ".ln2_bias", block.ln2_bias, ParamGroup::composer);
        if (block.use_moe) {
            fn(prefix + ".moe.phi", block.moe.phi, ParamGroup::composer);
            for (std::size_t e = 0; e < block.moe.experts.size(); ++e) {
                visit_feedforward(prefix + ".moe.expert" + std::to_string(e), block.moe.experts[e], fn);
            }
        } else {
            visit_feedforward(prefix + ".ffn", block.ffn, fn);
        }
    }
    fn("logit_scale", model.logit_scale, ParamGroup::logit_scale);
}

BoundModel bind_model(Tape& t, const ModelState& model, const TrainableGroups& groups) {
    BoundModel b;
    b.model = &model;
    b.theta = t.leaf(model.prompt.theta, groups.prompt);
    b.hopfield = bind_hopfield(t, model.memory, groups.hopfield_projection, groups.hopfield_memory);
    b.composer = bind_composer(t, model.composer, groups.composer);
    b.logit_scale = t.leaf(model.logit_scale, groups.logit_scale);
    return b;
}

void collect_gradients(const Tape& t, const BoundModel& bound,
                       const std::function<void(const std::string&, const Matrix&, ParamGroup)>& fn) {
    fn("prompt.theta", t.gradient(bound.theta), ParamGroup::prompt);
    fn("hopfield.projection", t.gradient(bound.hopfield.projection), ParamGroup::hopfield_projection);
    fn("hopfield.visual_attr", t.gradient(bound.hopfield.visual_attr), ParamGroup::hopfield_memory);
    fn("hopfield.visual_obj", t.gradient(bound.hopfield.visual_obj), ParamGroup::hopfield_memory);
    for (std::size_t b = 0; b < bound.composer.blocks.size(); ++b) {
        const BlockNodes& block = bound.composer.blocks[b];
        const std::string prefix = "composer.block" + std::to_string(b);
        fn(prefix + ".wq", t.gradient(block.wq), ParamGroup::composer);
        fn(prefix + ".wk", t.gradient(block.wk), ParamGroup::composer);
        fn(prefix + ".wv", t.gradient(block.wv), ParamGroup::composer);
        fn(prefix + ".wo", t.gradient(block.wo), ParamGroup::composer);
        fn(prefix + ".ln1_gain", t.gradient(block.ln1_gain), ParamGroup::composer);
        fn(prefix + ".ln1_bias", t.gradient(block.ln1_bias), ParamGroup::composer);
        fn(prefix + ".ln2_gain", t.gradient(block.ln2_gain), ParamGroup::composer);
        fn(prefix + ".ln2_bias", t.gradient(block.ln2_bias), ParamGroup::composer);
        auto ffn_grads = [&](const std::string& p, const FeedForwardNodes& nodes) {
            fn(p + ".w1", t.gradient(nodes.w1), ParamGroup::composer);
            fn(p + ".b1", t.gradient(nodes.b1), ParamGroup::composer);
            fn(p + ".w2", t.gradient(nodes.w2), ParamGroup::composer);
            fn(p + ".b2", t.gradient(nodes.b2), ParamGroup::composer);
        };
        if (block.use_moe) {
            fn(prefix + ".moe.phi", t.gradient(block.moe.phi), ParamGroup::composer);
            for (std::size_t e = 0; e < block.moe.experts.size(); ++e) {
                ffn_grads(prefix + ".moe.expert" + std::to_string(e), block.moe.experts[e]);
            }
        } else {
            ffn_grads(prefix + ".ffn", block.ffn);
        }
    }
    fn("logit_scale", t.gradient(bound.logit_scale), ParamGroup::logit_scale);
}

SampleForward forward_sample(Tape& t, const BoundModel& bound, const Matrix& f_v) {
    const ModelState& model = *bound.model;
    SampleForward out;
    const Tape::NodeId image = t.constant(f_v);
    if (!model.config.use_memory) {
        // Memory-ablated pipeline: without retrieval there is no valid
        // composer token sequence, so the fused feature degenerates to the
        // image embedding itself (the plain prompt-alignment baseline).
        out.features = l2_normalize_rows(t, image);
        return out;
    }
    const Tape::NodeId queries = project_query(t, bound.hopfield, image, model.memory);
    out.retrieval = retrieve(t, bound.hopfield, queries, model.memory);
    out.has_retrieval = true;
    const Tape::NodeId tokens =
        t.concat_rows(t.concat_rows(image, out.retrieval.patterns), out.retrieval.text_tokens);
    out.trace = composer_forward(t, bound.composer, tokens);
    out.features = out.trace.features;
    return out;
}

Retrieval retrieve_for_sample(Tape& t, const BoundModel& bound, const Matrix& f_v) {
    const Tape::NodeId image = t.constant(f_v);
    const Tape::NodeId queries = project_query(t, bound.hopfield, image, bound.model->memory);
    return retrieve(t, bound.hopfield, queries, bound.model->memory);
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<int>& indices) {
    if (indices.empty()) throw ContractError("make_batch: empty batch");
    const int dim = samples.front().embedding.cols();
    Batch b;
    b.embeddings = Matrix(static_cast<int>(indices.size()), dim);
    b.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Sample& s = samples[static_cast<std::size_t>(indices[i])];
        for (int j = 0; j < dim; ++j) b.embeddings(static_cast<int>(i), j) = s.embedding(0, j);
        b.labels.push_back(s.label);
    }
    return b;
}

BuiltLosses build_losses(Tape& t, const BoundModel& bound, const Batch& batch, int stage) {
    const ModelState& model = *bound.model;
    const TrainConfig& cfg = model.config;
    const int batch_size = batch.embeddings.rows();
    BuiltLosses out;

    const Tape::NodeId zero = t.scalar(0.0);
    out.parts.st_obj = zero;
    out.parts.dfm = zero;
    out.parts.spm = zero;
    out.parts.retrieval = zero;
    out.parts.info_nce = zero;

    TextFeatures text;
    if (stage == 1 || stage == 3) {
        text = build_text_features(t, bound.theta, model.labels, model.encoder, model.vocab.seen_pairs);
        const Tape::NodeId images = t.constant(batch.embeddings);
        out.parts.spm = class_alignment_loss(t, images, text, bound.logit_scale, batch.labels);
    }

    const bool want_retrieval = cfg.use_memory && (stage == 2 || stage == 3);
    const bool want_composer = stage == 3;

    Tape::NodeId fused = -1;  // B x D stacked composer readouts
    if (want_retrieval || want_composer) {
        Tape::NodeId acc_r = -1;
        Tape::NodeId acc_nce = -1;
        for (int i = 0; i < batch_size; ++i) {
            Matrix f_v(1, batch.embeddings.cols());
            for (int j = 0; j < f_v.cols(); ++j) f_v(0, j) = batch.embeddings(i, j);
            const Composition label = batch.labels[static_cast<std::size_t>(i)];

            if (want_composer) {
                const SampleForward fwd = forward_sample(t, bound, f_v);
                fused = i == 0 ? fwd.features : t.concat_rows(fused, fwd.features);
                if (fwd.has_retrieval && want_retrieval) {
                    if (cfg.use_retrieval_loss) {
                        const Tape::NodeId r = retrieval_loss(t, fwd.retrieval, label, model.memory, cfg.target_mode);
                        acc_r = acc_r < 0 ? r : t.add(acc_r, r);
                    }
                    if (cfg.use_info_nce) {
                        const Tape::NodeId n =
                            info_nce_loss(t, t.constant(f_v), fwd.retrieval, label, model.memory, cfg.weights.tau);
                        acc_nce = acc_nce < 0 ? n : t.add(acc_nce, n);
                    }
                }
            } else {
                const Retrieval r = retrieve_for_sample(t, bound, f_v);
                if (cfg.use_retrieval_loss) {
                    const Tape::NodeId lr = retrieval_loss(t, r, label, model.memory, cfg.target_mode);
                    acc_r = acc_r < 0 ? lr : t.add(acc_r, lr);
                }
                if (cfg.use_info_nce) {
                    const Tape::NodeId n = info_nce_loss(t, t.constant(f_v), r, label, model.memory, cfg.weights.tau);
                    acc_nce = acc_nce < 0 ? n : t.add(acc_nce, n);
                }
            }
        }
        if (acc_r >= 0) out.parts.retrieval = t.scale(acc_r, 1.0 / batch_size);
        if (acc_nce >= 0) out.parts.info_nce = t.scale(acc_nce, 1.0 / batch_size);
    }

    if (want_composer) {
        out.parts.st_obj = class_alignment_loss(t, fused, text, bound.logit_scale, batch.labels);
        out.parts.dfm = decomposed_loss(t, fused, text, bound.logit_scale, batch.labels);
    }

    switch (stage) {
        case 1:
            out.total = out.parts.spm;
            break;
        case 2:
            out.total = t.scale(t.add(out.parts.retrieval, out.parts.info_nce), cfg.weights.gamma);
            break;
        case 3:
            out.total = total_loss(t, out.parts, cfg.weights);
            break;
        default:
            throw ContractError("build_losses: stage must be 1, 2 or 3");
    }
    return out;
}

}  // namespace hope
