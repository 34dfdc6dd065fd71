#include "hope/hopfield.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "hope/errors.hpp"

namespace hope {

LabelEmbeddings make_label_embeddings(const CompositionDataset& ds, std::uint64_t seed) {
    Rng base(seed);
    Rng attr_rng = base.fork(11);
    Rng obj_rng = base.fork(12);
    Rng tpl_rng = base.fork(13);
    LabelEmbeddings out;
    if (ds.has_latents()) {
        out.attributes = ds.attr_latents;
        out.objects = ds.obj_latents;
    } else {
        out.attributes = l2_normalize_rows(Matrix::gaussian(ds.vocab.num_attributes(), ds.vocab.dimension, attr_rng));
        out.objects = l2_normalize_rows(Matrix::gaussian(ds.vocab.num_objects(), ds.vocab.dimension, obj_rng));
    }
    // Kept small so the label embedding, not the shared template, dominates
    // the pooled prompt.
    out.template_tokens = scaled(l2_normalize_rows(Matrix::gaussian(4, ds.vocab.dimension, tpl_rng)), 0.1);
    return out;
}

LabelEmbeddings make_label_embeddings(const VocabSpec& vocab, std::uint64_t seed) {
    CompositionDataset stub;
    stub.vocab = vocab;
    return make_label_embeddings(stub, seed);
}

void HopfieldMemory::validate() const {
    if (slots < 2 || slots % 2 != 0) throw ConfigError("hopfield: slot count must be even and >= 2");
    if (!visual_attr.same_shape(visual_obj)) throw ConfigError("hopfield: visual memories must share shape");
    if (static_cast<int>(row_class.size()) != rows()) throw ConfigError("hopfield: row_class size mismatch");
    if (projection.rows() != slots * dim() || projection.cols() != dim()) {
        throw ConfigError("hopfield: projection must be (slots*D) x D");
    }
    if (!visual_attr.is_finite() || !visual_obj.is_finite() || !text_attr.is_finite() || !text_obj.is_finite() ||
        !projection.is_finite()) {
        throw ConfigError("hopfield: non-finite memory");
    }
}

HopfieldMemory init_memory(const CompositionDataset& ds, int k_shots, int slots, const TextEncoderStub& encoder,
                           const LabelEmbeddings& labels, std::uint64_t seed, double w_init_scale) {
    if (k_shots < 1) throw ConfigError("init_memory: k_shots must be >= 1");
    if (slots < 2 || slots % 2 != 0) throw ConfigError("init_memory: slot count must be even and >= 2");
    const int dim = ds.vocab.dimension;
    const int n_rows = static_cast<int>(ds.vocab.seen_pairs.size());

    std::map<Composition, std::vector<int>> by_class;
    for (std::size_t i = 0; i < ds.train.size(); ++i) by_class[ds.train[i].label].push_back(static_cast<int>(i));

    HopfieldMemory mem;
    mem.slots = slots;
    mem.row_class = ds.vocab.seen_pairs;
    mem.visual_attr = Matrix(n_rows, dim);
    mem.visual_obj = Matrix(n_rows, dim);

    Rng base(seed);
    Rng pick_rng = base.fork(21);
    auto mean_of_shots = [&](const std::vector<int>& indices) {
        std::vector<int> order = indices;
        pick_rng.shuffle(order);
        const int take = std::min<int>(k_shots, static_cast<int>(order.size()));
        Matrix acc(1, dim);
        for (int k = 0; k < take; ++k) acc = add(acc, ds.train[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].embedding);
        return scaled(acc, 1.0 / take);
    };

    for (int r = 0; r < n_rows; ++r) {
        const Composition c = mem.row_class[static_cast<std::size_t>(r)];
        auto it = by_class.find(c);
        if (it == by_class.end() || it->second.empty()) {
            throw ConfigError("init_memory: seen composition (" + std::to_string(c.attr) + ", " +
                              std::to_string(c.obj) + ") has no train samples");
        }
        const Matrix ma = mean_of_shots(it->second);
        const Matrix mo = mean_of_shots(it->second);
        for (int j = 0; j < dim; ++j) {
            mem.visual_attr(r, j) = ma(0, j);
            mem.visual_obj(r, j) = mo(0, j);
        }
    }

    // Text prototypes from the frozen encoder. Attribute prompt keeps the
    // trailing generic "object" token, the object prompt does not.
    mem.text_attr = Matrix(ds.vocab.num_attributes(), dim);
    for (int a = 0; a < ds.vocab.num_attributes(); ++a) {
        Matrix tokens = concat_rows(slice_rows(labels.template_tokens, 0, 3), labels.attributes.row(a));
        tokens = concat_rows(tokens, labels.template_tokens.row(3));
        const Matrix e = encoder.encode(tokens);
        for (int j = 0; j < dim; ++j) mem.text_attr(a, j) = e(0, j);
    }
    mem.text_obj = Matrix(ds.vocab.num_objects(), dim);
    for (int o = 0; o < ds.vocab.num_objects(); ++o) {
        const Matrix tokens = concat_rows(slice_rows(labels.template_tokens, 0, 3), labels.objects.row(o));
        const Matrix e = encoder.encode(tokens);
        for (int j = 0; j < dim; ++j) mem.text_obj(o, j) = e(0, j);
    }

    Rng w_rng = base.fork(22);
    mem.projection = Matrix::gaussian(slots * dim, dim, w_rng, w_init_scale / std::sqrt(static_cast<double>(dim)));
    mem.validate();
    return mem;
}

HopfieldNodes bind_hopfield(Tape& t, const HopfieldMemory& mem, bool train_projection, bool train_memory) {
    HopfieldNodes nodes;
    nodes.visual_attr = t.leaf(mem.visual_attr, train_memory);
    nodes.visual_obj = t.leaf(mem.visual_obj, train_memory);
    nodes.projection = t.leaf(mem.projection, train_projection);
    return nodes;
}

Tape::NodeId project_query(Tape& t, const HopfieldNodes& nodes, Tape::NodeId f_v, const HopfieldMemory& mem) {
    // W f_v^T is (slots*D) x 1; its row-major data reshapes to slots x D.
    const Tape::NodeId column = t.matmul(nodes.projection, t.transpose(f_v));
    return t.reshape(column, mem.slots, mem.dim());
}

Retrieval retrieve(Tape& t, const HopfieldNodes& nodes, Tape::NodeId queries, const HopfieldMemory& mem) {
    const int half = mem.slots / 2;
    if (t.value(queries).rows() != mem.slots) throw ContractError("retrieve: query row count != slots");

    Retrieval r;
    const Tape::NodeId q_attr = t.slice_rows(queries, 0, half);
    const Tape::NodeId q_obj = t.slice_rows(queries, half, half);
    r.scores_attr = t.softmax_rows(t.matmul(q_attr, t.transpose(nodes.visual_attr)));
    r.scores_obj = t.softmax_rows(t.matmul(q_obj, t.transpose(nodes.visual_obj)));
    const Tape::NodeId v_attr = t.matmul(r.scores_attr, nodes.visual_attr);
    const Tape::NodeId v_obj = t.matmul(r.scores_obj, nodes.visual_obj);
    r.patterns = t.concat_rows(v_attr, v_obj);

    // Hard winner rows (not gradient-carrying): linguistic prototypes are
    // looked up from the frozen text memories by argmax score.
    const Matrix& sa = t.value(r.scores_attr);
    const Matrix& so = t.value(r.scores_obj);
    Matrix text(mem.slots, mem.dim());
    r.winner_rows.resize(static_cast<std::size_t>(mem.slots));
    for (int i = 0; i < half; ++i) {
        int best = 0;
        for (int c = 1; c < sa.cols(); ++c) {
            if (sa(i, c) > sa(i, best)) best = c;
        }
        r.winner_rows[static_cast<std::size_t>(i)] = best;
        const int attr = mem.row_class[static_cast<std::size_t>(best)].attr;
        for (int j = 0; j < mem.dim(); ++j) text(i, j) = mem.text_attr(attr, j);
    }
    for (int i = 0; i < half; ++i) {
        int best = 0;
        for (int c = 1; c < so.cols(); ++c) {
            if (so(i, c) > so(i, best)) best = c;
        }
        r.winner_rows[static_cast<std::size_t>(half + i)] = best;
        const int obj = mem.row_class[static_cast<std::size_t>(best)].obj;
        for (int j = 0; j < mem.dim(); ++j) text(half + i, j) = mem.text_obj(obj, j);
    }
    r.text_tokens = t.constant(std::move(text));
    return r;
}

Matrix retrieval_scores(const Tape& t, const Retrieval& r) {
    return concat_rows(t.value(r.scores_attr), t.value(r.scores_obj));
}

namespace {

// Normalized multi-hot target over memory rows matching the true primitive.
Matrix primitive_target(const HopfieldMemory& mem, Composition label, bool attribute, TargetMode mode) {
    Matrix target(1, mem.rows());
    if (mode == TargetMode::single) {
        for (int r = 0; r < mem.rows(); ++r) {
            if (mem.row_class[static_cast<std::size_t>(r)] == label) target(0, r) = 1.0;
        }
    } else {
        for (int r = 0; r < mem.rows(); ++r) {
            const Composition c = mem.row_class[static_cast<std::size_t>(r)];
            if ((attribute && c.attr == label.attr) || (!attribute && c.obj == label.obj)) target(0, r) = 1.0;
        }
    }
    const double total = sum_all(target);
    if (total <= 0.0) {
        throw ContractError("retrieval_loss: label (" + std::to_string(label.attr) + ", " +
                            std::to_string(label.obj) + ") matches no seen composition");
    }
    return scaled(target, 1.0 / total);
}

}  // namespace

Tape::NodeId retrieval_loss(Tape& t, const Retrieval& r, Composition label, const HopfieldMemory& mem,
                            TargetMode mode) {
    const int half = mem.slots / 2;
    const double inv_half = 2.0 / static_cast<double>(mem.slots);
    const Tape::NodeId ones = t.constant(Matrix::filled(1, half, 1.0));
    // Averaged slot mass per memory row; the epsilon keeps log finite when a
    // saturated softmax underflows a column to exact zero.
    // Masses are clamped at 1 (softmax row sums can overshoot by an ulp) and
    // shifted by the same epsilon as the offset below, which keeps the loss
    // exactly nonnegative and exactly zero at perfect retrieval.
    constexpr double kEps = 1e-12;
    const Tape::NodeId mass_attr =
        t.log(t.clamp_max(t.scale(t.matmul(ones, r.scores_attr), inv_half), 1.0), kEps);
    const Tape::NodeId mass_obj =
        t.log(t.clamp_max(t.scale(t.matmul(ones, r.scores_obj), inv_half), 1.0), kEps);
    const Matrix target_attr = primitive_target(mem, label, true, mode);
    const Matrix target_obj = primitive_target(mem, label, false, mode);
    const Tape::NodeId term_attr = t.sum_all(t.mul(t.constant(target_attr), mass_attr));
    const Tape::NodeId term_obj = t.sum_all(t.mul(t.constant(target_obj), mass_obj));
    const double offset = 2.0 * std::log(1.0 + kEps);
    return t.add(t.scale(t.add(term_attr, term_obj), -1.0), t.scalar(offset));
}

Tape::NodeId info_nce_loss(Tape& t, Tape::NodeId f_v, const Retrieval& r, Composition label,
                           const HopfieldMemory& mem, double tau) {
    if (tau <= 0.0) throw ConfigError("info_nce_loss: tau must be positive");
    const int half = mem.slots / 2;

    Matrix positives(1, mem.slots);
    int n_pos = 0;
    for (int i = 0; i < mem.slots; ++i) {
        const Composition winner = mem.row_class[static_cast<std::size_t>(r.winner_rows[static_cast<std::size_t>(i)])];
        const bool match = i < half ? winner.attr == label.attr : winner.obj == label.obj;
        if (match) {
            positives(0, i) = 1.0;
            ++n_pos;
        }
    }
    if (n_pos == 0) return t.scalar(0.0);

    const Tape::NodeId sims = t.scale(t.matmul(f_v, t.transpose(r.patterns)), 1.0 / tau);  // 1 x l
    const Tape::NodeId lse = t.logsumexp_rows(sims);                                       // 1 x 1
    const Tape::NodeId pos_sum = t.sum_all(t.mul(sims, t.constant(std::move(positives))));
    return t.add(t.scale(lse, static_cast<double>(n_pos)), t.scale(pos_sum, -1.0));
}

}  // namespace hope
