#pragma once

#include <vector>

#include "hope/dataset.hpp"
#include "hope/hopfield.hpp"
#include "hope/matrix.hpp"
#include "hope/tape.hpp"

namespace hope {

// Trainable prompt context: three rows prepended to label embeddings before
// the frozen text encoder.
struct SoftPrompt {
    Matrix theta;  // 3 x D

    static SoftPrompt seeded(int dim, Rng& rng, double init_scale = 0.02);
};

struct LossWeights {
    double alpha = 0.9;
    double beta = 0.8;
    double gamma = 0.3;
    double tau = 0.5;

    void validate() const;  // throws ConfigError
};

// Prompted text features: one row per requested composition, one per
// attribute, one per object. All rows L2-normalized by the encoder.
struct TextFeatures {
    Tape::NodeId compositions = -1;  // |pairs| x D
    Tape::NodeId attrs = -1;         // |A| x D
    Tape::NodeId objs = -1;          // |O| x D
    std::vector<Composition> pairs;

    int index_of(Composition c) const;  // throws ContractError if absent
};

// f_t(a,o) = encode([theta; emb(a); emb(o)]), f_ts(a) = encode([theta; emb(a)]),
// f_to(o) = encode([theta; emb(o)]). The mean-pool + frozen-map encoder is
// linear before normalization, so all rows are built with batched matrix ops.
TextFeatures build_text_features(Tape& t, Tape::NodeId theta, const LabelEmbeddings& labels,
                                 const TextEncoderStub& encoder, const std::vector<Composition>& pairs);

// Mean cross-entropy of image features against composition text features
// over the rows of `pairs` (soft-prompt loss; also the fused-feature loss
// when given composer outputs). logit_scale is a trainable 1 x 1 node.
Tape::NodeId class_alignment_loss(Tape& t, Tape::NodeId image_features, const TextFeatures& text,
                                  Tape::NodeId logit_scale, const std::vector<Composition>& labels);

// Decomposed loss: mean attribute NLL against f_ts plus mean object NLL
// against f_to.
Tape::NodeId decomposed_loss(Tape& t, Tape::NodeId image_features, const TextFeatures& text,
                             Tape::NodeId logit_scale, const std::vector<Composition>& labels);

struct LossParts {
    Tape::NodeId st_obj = -1;
    Tape::NodeId dfm = -1;
    Tape::NodeId spm = -1;
    Tape::NodeId retrieval = -1;
    Tape::NodeId info_nce = -1;
};

// L = L_st+obj + alpha L_dfm + beta L_spm + gamma (L_r + L_InfoNCE).
// Throws TrainingError naming the first non-finite part.
Tape::NodeId total_loss(Tape& t, const LossParts& parts, const LossWeights& weights);

}  // namespace hope
