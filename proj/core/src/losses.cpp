#include "hope/losses.hpp"

#include <cmath>
#include <string>

#include "hope/errors.hpp"

namespace hope {

SoftPrompt SoftPrompt::seeded(int dim, Rng& rng, double init_scale) {
    return SoftPrompt{Matrix::gaussian(3, dim, rng, init_scale)};
}

void LossWeights::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0)) {
        throw ConfigError("loss weights: alpha and beta must lie in (0, 1)");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw ConfigError("loss weights: gamma must lie in [0, 1)");
    }
    if (!(tau > 0.0)) throw ConfigError("loss weights: tau must be positive");
}

int TextFeatures::index_of(Composition c) const {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i] == c) return static_cast<int>(i);
    }
    throw ContractError("text features: composition (" + std::to_string(c.attr) + ", " + std::to_string(c.obj) +
                        ") not in the feature set");
}

namespace {

// normalize((ones . theta_sum + label_rows) / count . W^T) for a stack of
// label rows; exactly the stub encoder applied to [theta ; labels...].
Tape::NodeId pooled_features(Tape& t, Tape::NodeId theta_sum, const Matrix& label_rows, int token_count,
                             const TextEncoderStub& encoder) {
    const int n = label_rows.rows();
    const Tape::NodeId spread = broadcast_rows(t, theta_sum, n);
    const Tape::NodeId pooled = t.scale(t.add(spread, t.constant(label_rows)), 1.0 / token_count);
    const Tape::NodeId mapped = t.matmul(pooled, t.constant(transposed(encoder.projection())));
    return l2_normalize_rows(t, mapped);
}

}  // namespace

TextFeatures build_text_features(Tape& t, Tape::NodeId theta, const LabelEmbeddings& labels,
                                 const TextEncoderStub& encoder, const std::vector<Composition>& pairs) {
    const int dim = t.value(theta).cols();
    if (t.value(theta).rows() != 3) throw ContractError("soft prompt must have exactly 3 context rows");

    // Sum of the three context rows, kept on the tape so theta trains.
    const Tape::NodeId theta_sum = t.matmul(t.constant(Matrix::filled(1, 3, 1.0)), theta);

    Matrix pair_rows(static_cast<int>(pairs.size()), dim);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        for (int j = 0; j < dim; ++j) {
            pair_rows(static_cast<int>(p), j) =
                labels.attributes(pairs[p].attr, j) + labels.objects(pairs[p].obj, j);
        }
    }

    TextFeatures out;
    out.pairs = pairs;
    out.compositions = pooled_features(t, theta_sum, pair_rows, 5, encoder);
    out.attrs = pooled_features(t, theta_sum, labels.attributes, 4, encoder);
    out.objs = pooled_features(t, theta_sum, labels.objects, 4, encoder);
    return out;
}

namespace {

Tape::NodeId scaled_logits(Tape& t, Tape::NodeId features, Tape::NodeId text_rows, Tape::NodeId logit_scale) {
    const Tape::NodeId sims = t.matmul(features, t.transpose(text_rows));
    const Matrix& shape = t.value(sims);
    return t.mul(sims, broadcast_scalar(t, logit_scale, shape.rows(), shape.cols()));
}

}  // namespace

Tape::NodeId class_alignment_loss(Tape& t, Tape::NodeId image_features, const TextFeatures& text,
                                  Tape::NodeId logit_scale, const std::vector<Composition>& labels) {
    if (static_cast<int>(labels.size()) != t.value(image_features).rows()) {
        throw ContractError("class_alignment_loss: one label per feature row required");
    }
    std::vector<int> indices;
    indices.reserve(labels.size());
    for (Composition c : labels) indices.push_back(text.index_of(c));
    const Tape::NodeId logits = scaled_logits(t, image_features, text.compositions, logit_scale);
    return cross_entropy_mean(t, logits, indices);
}

Tape::NodeId decomposed_loss(Tape& t, Tape::NodeId image_features, const TextFeatures& text,
                             Tape::NodeId logit_scale, const std::vector<Composition>& labels) {
    if (static_cast<int>(labels.size()) != t.value(image_features).rows()) {
        throw ContractError("decomposed_loss: one label per feature row required");
    }
    std::vector<int> attr_ids, obj_ids;
    attr_ids.reserve(labels.size());
    obj_ids.reserve(labels.size());
    for (Composition c : labels) {
        attr_ids.push_back(c.attr);
        obj_ids.push_back(c.obj);
    }
    const Tape::NodeId attr_logits = scaled_logits(t, image_features, text.attrs, logit_scale);
    const Tape::NodeId obj_logits = scaled_logits(t, image_features, text.objs, logit_scale);
    return t.add(cross_entropy_mean(t, attr_logits, attr_ids), cross_entropy_mean(t, obj_logits, obj_ids));
}

Tape::NodeId total_loss(Tape& t, const LossParts& parts, const LossWeights& weights) {
    weights.validate();
    const auto check = [&t](Tape::NodeId id, const char* name) {
        if (!std::isfinite(t.value(id)(0, 0))) {
            throw TrainingError(std::string("total_loss: non-finite component ") + name);
        }
    };
    check(parts.st_obj, "st_obj");
    check(parts.dfm, "dfm");
    check(parts.spm, "spm");
    check(parts.retrieval, "retrieval");
    check(parts.info_nce, "info_nce");

    Tape::NodeId total = t.add(parts.st_obj, t.scale(parts.dfm, weights.alpha));
    total = t.add(total, t.scale(parts.spm, weights.beta));
    total = t.add(total, t.scale(t.add(parts.retrieval, parts.info_nce), weights.gamma));
    return total;
}

}  // namespace hope
