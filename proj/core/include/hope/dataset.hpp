#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "hope/matrix.hpp"
#include "hope/tape.hpp"

namespace hope {

// An attribute-object pair.
struct Composition {
    int attr = -1;
    int obj = -1;
    auto operator<=>(const Composition&) const = default;
};

struct VocabSpec {
    std::vector<std::string> attributes;
    std::vector<std::string> objects;
    std::vector<Composition> seen_pairs;
    std::vector<Composition> unseen_closed;  // proper subset of the unseen pairs
    int dimension = 0;

    int num_attributes() const { return static_cast<int>(attributes.size()); }
    int num_objects() const { return static_cast<int>(objects.size()); }
    int num_compositions() const { return num_attributes() * num_objects(); }
    bool is_seen(Composition c) const;
    bool is_unseen_closed(Composition c) const;

    // Throws ConfigError on any violated invariant; names the offending pair
    // when seen and unseen sets overlap.
    void validate() const;
};

struct Sample {
    Matrix embedding;  // 1 x D
    Composition label;
};

// Partition of primitive ids into similarity groups (synthetic stand-in for
// wordnet-style synonyms). Singleton groups mean "no synonyms".
struct SynonymGroups {
    std::vector<std::vector<int>> attributes;
    std::vector<std::vector<int>> objects;
    bool empty() const { return attributes.empty() && objects.empty(); }
    const std::vector<int>& attribute_group(int attr_id) const;
    const std::vector<int>& object_group(int obj_id) const;
};

struct CompositionDataset {
    VocabSpec vocab;
    std::vector<Sample> train;  // labels drawn from seen pairs only
    std::vector<Sample> test;   // labels from seen pairs and unseen_closed
    SynonymGroups synonyms;
    std::uint64_t seed = 0;
    // Unit primitive latents of the synthetic world (empty for external
    // datasets). The model side reuses them as frozen label embeddings, the
    // CLIP-style shared-space assumption.
    Matrix attr_latents;  // |A| x D or empty
    Matrix obj_latents;   // |O| x D or empty

    bool has_latents() const { return attr_latents.size() > 0 && obj_latents.size() > 0; }
    // Seed for the frozen text-encoder stand-in bound to this data world.
    std::uint64_t encoder_seed() const { return seed ^ 0x7e37a11ce5ULL; }

    void validate() const;  // throws ConfigError
};

struct GeneratorSpec {
    int num_attributes = 8;
    int num_objects = 10;
    int dimension = 32;
    int samples_per_composition = 20;
    double seen_fraction = 0.6;
    double noise_sigma = 0.1;
    double attr_scale = 1.0;  // weight of the attribute latent block
    double obj_scale = 1.0;   // weight of the object latent block
    double signal_gain = 1.0;  // scales the mixed signal against the noise
    double train_fraction = 0.8;
    // Fraction of unseen pairs admitted to the closed world; the rest exist
    // only as open-world distractors.
    double closed_world_fraction = 0.75;
    std::uint64_t seed = 0;
};

// Synthetic compositional embeddings. Each sample is
//   normalize(W_mix . [s_a u_a ; s_o u_o ; u_a (.) (R u_o)] + sigma noise)
// under a fixed seeded mixing map, so attribute and object are recoverable
// but entangled. Primitive latents are drawn in small cosine clusters, which
// is what the synonym groups are cut from. Every primitive is covered by at
// least one seen pair. Deterministic under the seed; embeddings are rounded
// through f32 so that save/load round-trips exactly.
CompositionDataset generate(const GeneratorSpec& spec);

// Frozen stand-in for a text encoder: mean-pool the token rows, apply a
// seeded random linear map, L2-normalize.
class TextEncoderStub {
public:
    TextEncoderStub() = default;
    TextEncoderStub(int dimension, std::uint64_t seed);
    explicit TextEncoderStub(Matrix projection) : projection_(std::move(projection)) {}

    // tokens: K x D, one row per token, K >= 1. Throws ContractError on an
    // empty sequence.
    Matrix encode(const Matrix& tokens) const;
    // Same computation recorded on a tape (token rows may be trainable).
    Tape::NodeId encode(Tape& t, Tape::NodeId tokens) const;

    int dimension() const { return projection_.rows(); }
    const Matrix& projection() const { return projection_; }

private:
    Matrix projection_;  // D x D
};

// On-disk layout: <dir>/manifest.json plus binary embedding files
// (magic "HOPEEMB1", u32 record count, u32 D, then per record u16 attr id,
// u16 obj id, D little-endian f32 values).
void save_dataset(const CompositionDataset& ds, const std::string& dir);
// Throws FormatError naming the offending file/record on any corruption.
CompositionDataset load_dataset(const std::string& dir);

}  // namespace hope
