#include "hope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "hope/errors.hpp"

namespace hope {

namespace {

std::string pair_str(Composition c) {
    return "(" + std::to_string(c.attr) + ", " + std::to_string(c.obj) + ")";
}

// Unit latents in small cosine clusters (cluster size <= 3). Intra-cluster
// cosine lands around 0.85-0.95, which the synonym threshold of 0.8 cuts at.
std::vector<Matrix> clustered_latents(int count, int dim, Rng& rng) {
    std::vector<Matrix> latents;
    latents.reserve(static_cast<std::size_t>(count));
    Matrix proto;
    const double jitter = 0.35 / std::sqrt(static_cast<double>(dim));
    for (int i = 0; i < count; ++i) {
        if (i % 3 == 0) proto = l2_normalize_rows(Matrix::gaussian(1, dim, rng));
        latents.push_back(l2_normalize_rows(add(proto, Matrix::gaussian(1, dim, rng, jitter))));
    }
    return latents;
}

int uf_find(std::vector<int>& parent, int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

std::vector<std::vector<int>> group_by_cosine(const std::vector<Matrix>& latents, double threshold) {
    const int n = static_cast<int>(latents.size());
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](int x) { return uf_find(parent, x); };
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (dot(latents[static_cast<std::size_t>(i)], latents[static_cast<std::size_t>(j)]) >= threshold) {
                parent[static_cast<std::size_t>(find(i))] = find(j);
            }
        }
    }
    std::vector<std::vector<int>> groups;
    std::vector<int> root_to_group(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        const int r = find(i);
        if (root_to_group[static_cast<std::size_t>(r)] < 0) {
            root_to_group[static_cast<std::size_t>(r)] = static_cast<int>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(root_to_group[static_cast<std::size_t>(r)])].push_back(i);
    }
    return groups;
}

}  // namespace

bool VocabSpec::is_seen(Composition c) const {
    return std::find(seen_pairs.begin(), seen_pairs.end(), c) != seen_pairs.end();
}

bool VocabSpec::is_unseen_closed(Composition c) const {
    return std::find(unseen_closed.begin(), unseen_closed.end(), c) != unseen_closed.end();
}

void VocabSpec::validate() const {
    if (num_attributes() < 2) throw ConfigError("vocab: need at least 2 attributes");
    if (num_objects() < 2) throw ConfigError("vocab: need at least 2 objects");
    if (dimension < 1) throw ConfigError("vocab: dimension must be positive");
    auto in_range = [this](Composition c) {
        return c.attr >= 0 && c.attr < num_attributes() && c.obj >= 0 && c.obj < num_objects();
    };
    for (Composition c : seen_pairs) {
        if (!in_range(c)) throw ConfigError("vocab: seen pair " + pair_str(c) + " out of range");
    }
    for (Composition c : unseen_closed) {
        if (!in_range(c)) throw ConfigError("vocab: unseen pair " + pair_str(c) + " out of range");
        if (is_seen(c)) throw ConfigError("vocab: pair " + pair_str(c) + " is in both seen_pairs and unseen_closed");
    }
    std::set<Composition> dedup(seen_pairs.begin(), seen_pairs.end());
    if (dedup.size() != seen_pairs.size()) throw ConfigError("vocab: duplicate seen pair");
}

const std::vector<int>& SynonymGroups::attribute_group(int attr_id) const {
    for (const auto& g : attributes) {
        if (std::find(g.begin(), g.end(), attr_id) != g.end()) return g;
    }
    throw ConfigError("synonyms: attribute id " + std::to_string(attr_id) + " not in any group");
}

const std::vector<int>& SynonymGroups::object_group(int obj_id) const {
    for (const auto& g : objects) {
        if (std::find(g.begin(), g.end(), obj_id) != g.end()) return g;
    }
    throw ConfigError("synonyms: object id " + std::to_string(obj_id) + " not in any group");
}

void CompositionDataset::validate() const {
    vocab.validate();
    for (const Sample& s : train) {
        if (!vocab.is_seen(s.label)) {
            throw ConfigError("dataset: train sample labeled with non-seen pair " + pair_str(s.label));
        }
        if (s.embedding.rows() != 1 || s.embedding.cols() != vocab.dimension) {
            throw ConfigError("dataset: train embedding has wrong shape");
        }
        if (!s.embedding.is_finite()) throw ConfigError("dataset: non-finite train embedding");
    }
    bool has_seen_test = false;
    bool has_unseen_test = false;
    for (const Sample& s : test) {
        const bool seen = vocab.is_seen(s.label);
        if (!seen && !vocab.is_unseen_closed(s.label)) {
            throw ConfigError("dataset: test sample labeled with pair " + pair_str(s.label) +
                              " outside seen_pairs and unseen_closed");
        }
        if (s.embedding.rows() != 1 || s.embedding.cols() != vocab.dimension) {
            throw ConfigError("dataset: test embedding has wrong shape");
        }
        if (!s.embedding.is_finite()) throw ConfigError("dataset: non-finite test embedding");
        has_seen_test = has_seen_test || seen;
        has_unseen_test = has_unseen_test || !seen;
    }
    if (!has_seen_test) throw ConfigError("dataset: test split has no seen-labeled sample");
    if (!has_unseen_test) throw ConfigError("dataset: test split has no unseen-labeled sample");
}

CompositionDataset generate(const GeneratorSpec& spec) {
    if (spec.num_attributes < 2 || spec.num_objects < 2) throw ConfigError("generate: need |A| >= 2 and |O| >= 2");
    if (spec.dimension < 4) throw ConfigError("generate: dimension must be >= 4");
    if (spec.samples_per_composition < 2) {
        throw ConfigError("generate: samples_per_composition must be >= 2 so seen pairs reach the test split");
    }
    if (!(spec.seen_fraction > 0.0 && spec.seen_fraction < 1.0)) throw ConfigError("generate: seen_fraction must be in (0, 1)");
    if (spec.noise_sigma < 0.0) throw ConfigError("generate: noise_sigma must be >= 0");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) throw ConfigError("generate: train_fraction must be in (0, 1)");
    if (!(spec.closed_world_fraction > 0.0 && spec.closed_world_fraction <= 1.0)) {
        throw ConfigError("generate: closed_world_fraction must be in (0, 1]");
    }
    if (spec.signal_gain <= 0.0) throw ConfigError("generate: signal_gain must be positive");

    const int na = spec.num_attributes;
    const int no = spec.num_objects;
    const int dim = spec.dimension;
    const int total_pairs = na * no;
    const int n_seen = static_cast<int>(std::floor(spec.seen_fraction * total_pairs));
    const int n_unseen = total_pairs - n_seen;
    if (n_seen < 2 || n_unseen < 2) {
        throw ConfigError("generate: seen_fraction " + std::to_string(spec.seen_fraction) + " yields " +
                          std::to_string(n_seen) + " seen / " + std::to_string(n_unseen) + " unseen pairs; need >= 2 of each");
    }
    if (n_seen < std::max(na, no)) {
        throw ConfigError("generate: " + std::to_string(n_seen) +
                          " seen pairs cannot cover every attribute and object");
    }

    Rng base(spec.seed);
    Rng rng_latents = base.fork(1);
    Rng rng_mix = base.fork(2);
    Rng rng_split = base.fork(3);
    Rng rng_noise = base.fork(4);

    const std::vector<Matrix> attr_latents = clustered_latents(na, dim, rng_latents);
    const std::vector<Matrix> obj_latents = clustered_latents(no, dim, rng_latents);

    // Mixing map over [u_a ; u_o ; u_a (.) (R u_o)]. The primitive blocks run
    // through the same frozen projection the text encoder stub applies to the
    // label latents, which is what gives the data world its CLIP-like shared
    // image/text space: f_v of class (a, o) starts aligned with the prompted
    // text feature of (a, o). The third block entangles the primitives
    // through an unrelated map.
    const Matrix text_proj = TextEncoderStub(dim, spec.seed ^ 0x7e37a11ce5ULL).projection();
    const Matrix entangle = Matrix::gaussian(dim, dim, rng_mix, 1.0 / std::sqrt(static_cast<double>(dim)));
    const Matrix rot = Matrix::gaussian(dim, dim, rng_mix, 1.0);
    const double block_gain = spec.signal_gain * std::sqrt(3.0);
    Matrix mix(dim, 3 * dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            mix(i, j) = block_gain * text_proj(i, j);
            mix(i, dim + j) = block_gain * text_proj(i, j);
            mix(i, 2 * dim + j) = block_gain * entangle(i, j);
        }
    }

    // Seen split: cover every primitive first, then fill uniformly.
    std::vector<int> attr_order(static_cast<std::size_t>(na));
    std::vector<int> obj_order(static_cast<std::size_t>(no));
    std::iota(attr_order.begin(), attr_order.end(), 0);
    std::iota(obj_order.begin(), obj_order.end(), 0);
    rng_split.shuffle(attr_order);
    rng_split.shuffle(obj_order);

    std::set<Composition> seen_set;
    for (int i = 0; i < std::max(na, no); ++i) {
        seen_set.insert({attr_order[static_cast<std::size_t>(i % na)], obj_order[static_cast<std::size_t>(i % no)]});
    }
    std::vector<Composition> rest;
    for (int a = 0; a < na; ++a) {
        for (int o = 0; o < no; ++o) {
            if (!seen_set.count({a, o})) rest.push_back({a, o});
        }
    }
    rng_split.shuffle(rest);
    for (const Composition& c : rest) {
        if (static_cast<int>(seen_set.size()) >= n_seen) break;
        seen_set.insert(c);
    }

    std::vector<Composition> unseen_all;
    for (int a = 0; a < na; ++a) {
        for (int o = 0; o < no; ++o) {
            if (!seen_set.count({a, o})) unseen_all.push_back({a, o});
        }
    }
    rng_split.shuffle(unseen_all);
    const int n_closed = std::max(1, static_cast<int>(std::llround(spec.closed_world_fraction * n_unseen)));
    std::vector<Composition> unseen_closed(unseen_all.begin(), unseen_all.begin() + std::min<std::size_t>(unseen_all.size(), static_cast<std::size_t>(n_closed)));
    std::sort(unseen_closed.begin(), unseen_closed.end());

    CompositionDataset ds;
    ds.seed = spec.seed;
    ds.vocab.dimension = dim;
    for (int a = 0; a < na; ++a) ds.vocab.attributes.push_back("attr_" + std::to_string(a));
    for (int o = 0; o < no; ++o) ds.vocab.objects.push_back("obj_" + std::to_string(o));
    ds.vocab.seen_pairs.assign(seen_set.begin(), seen_set.end());
    ds.vocab.unseen_closed = std::move(unseen_closed);

    auto make_embedding = [&](Composition c) {
        const Matrix& ua = attr_latents[static_cast<std::size_t>(c.attr)];
        const Matrix& uo = obj_latents[static_cast<std::size_t>(c.obj)];
        const Matrix mixed_obj = matmul(uo, transposed(rot));  // 1 x D
        Matrix combo(1, 3 * dim);
        for (int j = 0; j < dim; ++j) {
            combo(0, j) = spec.attr_scale * ua(0, j);
            combo(0, dim + j) = spec.obj_scale * uo(0, j);
            combo(0, 2 * dim + j) = ua(0, j) * mixed_obj(0, j);
        }
        Matrix e = matmul(combo, transposed(mix));  // 1 x D
        if (spec.noise_sigma > 0.0) e = add(e, Matrix::gaussian(1, dim, rng_noise, spec.noise_sigma));
        e = l2_normalize_rows(e);
        e.round_to_f32();
        return e;
    };

    const int per = spec.samples_per_composition;
    const int per_train = std::clamp(static_cast<int>(std::llround(spec.train_fraction * per)), 1, per - 1);
    for (const Composition& c : ds.vocab.seen_pairs) {
        for (int k = 0; k < per; ++k) {
            Sample s{make_embedding(c), c};
            if (k < per_train) {
                ds.train.push_back(std::move(s));
            } else {
                ds.test.push_back(std::move(s));
            }
        }
    }
    for (const Composition& c : ds.vocab.unseen_closed) {
        for (int k = 0; k < per; ++k) ds.test.push_back({make_embedding(c), c});
    }

    ds.synonyms.attributes = group_by_cosine(attr_latents, 0.8);
    ds.synonyms.objects = group_by_cosine(obj_latents, 0.8);

    ds.attr_latents = Matrix(na, dim);
    ds.obj_latents = Matrix(no, dim);
    for (int a = 0; a < na; ++a) {
        for (int j = 0; j < dim; ++j) ds.attr_latents(a, j) = attr_latents[static_cast<std::size_t>(a)](0, j);
    }
    for (int o = 0; o < no; ++o) {
        for (int j = 0; j < dim; ++j) ds.obj_latents(o, j) = obj_latents[static_cast<std::size_t>(o)](0, j);
    }
    ds.attr_latents.round_to_f32();
    ds.obj_latents.round_to_f32();

    ds.validate();
    return ds;
}

TextEncoderStub::TextEncoderStub(int dimension, std::uint64_t seed) {
    Rng rng(seed);
    projection_ = Matrix::gaussian(dimension, dimension, rng, 1.0 / std::sqrt(static_cast<double>(dimension)));
}

Matrix TextEncoderStub::encode(const Matrix& tokens) const {
    if (tokens.rows() < 1) throw ContractError("text_encode_stub: empty token sequence");
    if (tokens.cols() != projection_.cols()) throw DimensionError("text_encode_stub: token dimension mismatch");
    const Matrix pooled = scaled(matmul(Matrix::filled(1, tokens.rows(), 1.0), tokens), 1.0 / tokens.rows());
    return l2_normalize_rows(matmul(pooled, transposed(projection_)));
}

Tape::NodeId TextEncoderStub::encode(Tape& t, Tape::NodeId tokens) const {
    const Matrix& v = t.value(tokens);
    if (v.rows() < 1) throw ContractError("text_encode_stub: empty token sequence");
    if (v.cols() != projection_.cols()) throw DimensionError("text_encode_stub: token dimension mismatch");
    const Tape::NodeId pooled = mean_of_rows(t, tokens);
    const Tape::NodeId mapped = t.matmul(pooled, t.constant(transposed(projection_)));
    return l2_normalize_rows(t, mapped);
}

}  // namespace hope
