#pragma once

#include <cstdint>
#include <vector>

#include "hope/dataset.hpp"
#include "hope/matrix.hpp"
#include "hope/tape.hpp"

namespace hope {

// Frozen embedding rows for label words plus the prompt template tokens
// used to build the text memories. When the dataset carries its synthetic
// primitive latents they become the label embeddings (the shared
// image/text-space assumption a CLIP-like encoder pair provides); otherwise
// rows are seeded at random.
struct LabelEmbeddings {
    Matrix attributes;  // |A| x D
    Matrix objects;     // |O| x D
    Matrix template_tokens;  // 4 x D: three leading prompt words + "object"
};

LabelEmbeddings make_label_embeddings(const CompositionDataset& ds, std::uint64_t seed);
// Seeded-random fallback when no synthetic latents exist.
LabelEmbeddings make_label_embeddings(const VocabSpec& vocab, std::uint64_t seed);

// How the retrieval-loss target spreads over seen compositions: uniformly
// over every composition containing the true primitive, or concentrated on
// the sample's exact composition row.
enum class TargetMode : std::uint8_t { spread, single };

// The associative memory: two trainable visual memories sized by the seen
// compositions, two frozen text memories sized by the primitive vocabularies,
// and the trainable query projection that fans one image embedding into
// `slots` query vectors (attribute slots first, then object slots).
struct HopfieldMemory {
    Matrix visual_attr;  // M_v^a: |C_tr| x D, trainable
    Matrix visual_obj;   // M_v^o: |C_tr| x D, trainable
    Matrix text_attr;    // M_t^a: |A| x D, frozen
    Matrix text_obj;     // M_t^o: |O| x D, frozen
    Matrix projection;   // W: (slots*D) x D, trainable
    std::vector<Composition> row_class;  // memory row -> seen composition
    int slots = 8;       // l, even

    int dim() const { return visual_attr.cols(); }
    int rows() const { return visual_attr.rows(); }
    void validate() const;
};

// Visual rows are means of min(k_shots, available) seeded sample draws per
// seen composition; text rows come from the frozen encoder over
// "A photo of [attribute] object" / "A photo of [object]" style templates;
// the projection starts as small seeded noise.
HopfieldMemory init_memory(const CompositionDataset& ds, int k_shots, int slots, const TextEncoderStub& encoder,
                           const LabelEmbeddings& labels, std::uint64_t seed, double w_init_scale = 0.5);

struct HopfieldNodes {
    Tape::NodeId visual_attr = -1;
    Tape::NodeId visual_obj = -1;
    Tape::NodeId projection = -1;
};

HopfieldNodes bind_hopfield(Tape& t, const HopfieldMemory& mem, bool train_projection, bool train_memory);

// Z = reshape(W f_v) into `slots` rows of dimension D.
Tape::NodeId project_query(Tape& t, const HopfieldNodes& nodes, Tape::NodeId f_v, const HopfieldMemory& mem);

// One softmax update against each visual memory half plus the hard-selected
// linguistic prototypes of the winning rows.
struct Retrieval {
    Tape::NodeId scores_attr = -1;  // (l/2) x |C_tr|
    Tape::NodeId scores_obj = -1;   // (l/2) x |C_tr|
    Tape::NodeId patterns = -1;     // V: l x D
    Tape::NodeId text_tokens = -1;  // T: l x D, constant (hard argmax selection)
    std::vector<int> winner_rows;   // per slot, argmax memory row
};

Retrieval retrieve(Tape& t, const HopfieldNodes& nodes, Tape::NodeId queries, const HopfieldMemory& mem);

// Full l x |C_tr| score matrix (attribute slots stacked over object slots).
Matrix retrieval_scores(const Tape& t, const Retrieval& r);

// Negative log-likelihood that the averaged attribute-slot mass lands on
// compositions with the true attribute, plus the same for objects.
Tape::NodeId retrieval_loss(Tape& t, const Retrieval& r, Composition label, const HopfieldMemory& mem,
                            TargetMode mode = TargetMode::spread);

// Temperature-scaled contrastive loss pulling f_v toward retrieved patterns
// whose winning row shares the sample's primitive. Returns a constant zero
// node when no slot qualifies.
Tape::NodeId info_nce_loss(Tape& t, Tape::NodeId f_v, const Retrieval& r, Composition label,
                           const HopfieldMemory& mem, double tau);

}  // namespace hope
