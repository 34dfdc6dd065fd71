#include <cmath>
#include <vector>

#include "doctest.h"
#include "hope/dataset.hpp"
#include "hope/errors.hpp"
#include "hope/grad_check.hpp"
#include "hope/hopfield.hpp"

using namespace hope;

namespace {

// Orthonormal rows via Gram-Schmidt on seeded gaussians.
Matrix orthonormal_rows(int n, int dim, Rng& rng) {
    Matrix m = Matrix::gaussian(n, dim, rng);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < i; ++k) {
            double proj = 0.0;
            for (int j = 0; j < dim; ++j) proj += m(i, j) * m(k, j);
            for (int j = 0; j < dim; ++j) m(i, j) -= proj * m(k, j);
        }
        double norm = 0.0;
        for (int j = 0; j < dim; ++j) norm += m(i, j) * m(i, j);
        norm = std::sqrt(norm);
        for (int j = 0; j < dim; ++j) m(i, j) /= norm;
    }
    return m;
}

// Hand-built memory over explicit visual rows; text memories are unit rows.
HopfieldMemory toy_memory(Matrix visual_attr, Matrix visual_obj, std::vector<Composition> row_class, int slots) {
    HopfieldMemory mem;
    const int dim = visual_attr.cols();
    int max_attr = 0, max_obj = 0;
    for (Composition c : row_class) {
        max_attr = std::max(max_attr, c.attr);
        max_obj = std::max(max_obj, c.obj);
    }
    Rng rng(99);
    mem.visual_attr = std::move(visual_attr);
    mem.visual_obj = std::move(visual_obj);
    mem.text_attr = l2_normalize_rows(Matrix::gaussian(max_attr + 1, dim, rng));
    mem.text_obj = l2_normalize_rows(Matrix::gaussian(max_obj + 1, dim, rng));
    mem.projection = Matrix(slots * dim, dim);
    mem.row_class = std::move(row_class);
    mem.slots = slots;
    return mem;
}

GeneratorSpec probe_spec(double sigma) {
    GeneratorSpec spec;
    spec.num_attributes = 3;
    spec.num_objects = 4;
    spec.dimension = 16;
    spec.samples_per_composition = 14;
    spec.seen_fraction = 0.5;
    spec.noise_sigma = sigma;
    spec.seed = 5;
    return spec;
}

}  // namespace

TEST_CASE("init_memory: row counts match seen compositions") {
    CompositionDataset ds = generate(probe_spec(0.1));
    LabelEmbeddings labels = make_label_embeddings(ds.vocab, 1);
    TextEncoderStub enc(16, 2);
    HopfieldMemory mem = init_memory(ds, 5, 4, enc, labels, 3);
    CHECK(mem.visual_attr.rows() == 6);
    CHECK(mem.visual_obj.rows() == 6);
    CHECK(mem.text_attr.rows() == 3);
    CHECK(mem.text_obj.rows() == 4);
    CHECK(mem.projection.rows() == 4 * 16);
}

TEST_CASE("init_memory: one shot on noiseless data copies the class embedding") {
    CompositionDataset ds = generate(probe_spec(0.0));
    LabelEmbeddings labels = make_label_embeddings(ds.vocab, 1);
    TextEncoderStub enc(16, 2);
    HopfieldMemory mem = init_memory(ds, 1, 4, enc, labels, 3);
    for (int r = 0; r < mem.rows(); ++r) {
        const Composition c = mem.row_class[static_cast<std::size_t>(r)];
        const Sample* sample = nullptr;
        for (const Sample& s : ds.train) {
            if (s.label == c) {
                sample = &s;
                break;
            }
        }
        REQUIRE(sample != nullptr);
        for (int j = 0; j < 16; ++j) CHECK(mem.visual_attr(r, j) == doctest::Approx(sample->embedding(0, j)).epsilon(1e-12));
    }
}

TEST_CASE("init_memory: more shots lie closer to the clean prototype") {
    GeneratorSpec clean = probe_spec(0.0);
    GeneratorSpec noisy = probe_spec(0.35);
    CompositionDataset ds_clean = generate(clean);
    CompositionDataset ds_noisy = generate(noisy);
    REQUIRE(ds_clean.vocab.seen_pairs == ds_noisy.vocab.seen_pairs);

    LabelEmbeddings labels = make_label_embeddings(ds_noisy.vocab, 1);
    TextEncoderStub enc(16, 2);
    HopfieldMemory one = init_memory(ds_noisy, 1, 4, enc, labels, 3);
    HopfieldMemory ten = init_memory(ds_noisy, 10, 4, enc, labels, 3);

    auto mean_dist = [&](const HopfieldMemory& mem) {
        double total = 0.0;
        for (int r = 0; r < mem.rows(); ++r) {
            const Composition c = mem.row_class[static_cast<std::size_t>(r)];
            for (const Sample& s : ds_clean.train) {
                if (s.label == c) {
                    Matrix diff = sub(mem.visual_attr.row(r), s.embedding);
                    total += l2_norm(diff);
                    break;
                }
            }
        }
        return total / mem.rows();
    };
    CHECK(mean_dist(ten) < mean_dist(one));
}

TEST_CASE("init_memory: composition without samples is named in the error") {
    CompositionDataset ds = generate(probe_spec(0.1));
    const Composition victim = ds.vocab.seen_pairs.front();
    std::vector<Sample> kept;
    for (Sample& s : ds.train) {
        if (!(s.label == victim)) kept.push_back(std::move(s));
    }
    ds.train = std::move(kept);
    LabelEmbeddings labels = make_label_embeddings(ds.vocab, 1);
    TextEncoderStub enc(16, 2);
    CHECK_THROWS_WITH_AS(init_memory(ds, 1, 4, enc, labels, 3),
                         doctest::Contains(std::to_string(victim.attr).c_str()), ConfigError);
}

TEST_CASE("project_query matches a naive matvec oracle") {
    CompositionDataset ds = generate(probe_spec(0.1));
    LabelEmbeddings labels = make_label_embeddings(ds.vocab, 1);
    TextEncoderStub enc(16, 2);
    HopfieldMemory mem = init_memory(ds, 3, 4, enc, labels, 3);

    Rng rng(7);
    Matrix f_v = l2_normalize_rows(Matrix::gaussian(1, 16, rng));
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    const Matrix& z = t.value(project_query(t, nodes, t.constant(f_v), mem));
    REQUIRE(z.rows() == 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 16; ++j) {
            double expect = 0.0;
            for (int k = 0; k < 16; ++k) expect += mem.projection(i * 16 + j, k) * f_v(0, k);
            CHECK(z(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("project_query: zero projection gives zero queries") {
    Matrix rows = Matrix::identity(2);
    HopfieldMemory mem = toy_memory(rows, rows, {{0, 0}, {1, 1}}, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    const Matrix& z = t.value(project_query(t, nodes, t.constant(Matrix(1, 2, {0.3, -0.2})), mem));
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == 0.0);
}

TEST_CASE("retrieve: single-row memory returns that row with probability one") {
    Matrix row(1, 3, {0.2, -0.4, 0.9});
    HopfieldMemory mem = toy_memory(row, row, {{0, 0}}, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Rng rng(4);
    Retrieval r = retrieve(t, nodes, t.constant(Matrix::gaussian(2, 3, rng)), mem);
    CHECK(t.value(r.scores_attr)(0, 0) == doctest::Approx(1.0));
    const Matrix& v = t.value(r.patterns);
    for (int j = 0; j < 3; ++j) {
        CHECK(v(0, j) == doctest::Approx(row(0, j)));
        CHECK(v(1, j) == doctest::Approx(row(0, j)));
    }
}

TEST_CASE("retrieve: identity memory example") {
    Matrix mrows = Matrix::identity(2);
    HopfieldMemory mem = toy_memory(mrows, mrows, {{0, 0}, {1, 1}}, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix queries(2, 2, {1.0, 0.0, 1.0, 0.0});
    Retrieval r = retrieve(t, nodes, t.constant(queries), mem);
    const Matrix& s = t.value(r.scores_attr);
    CHECK(s(0, 0) == doctest::Approx(0.73105857863).epsilon(1e-9));
    CHECK(s(0, 1) == doctest::Approx(0.26894142137).epsilon(1e-9));
    const Matrix& v = t.value(r.patterns);
    CHECK(v(0, 0) == doctest::Approx(0.73105857863).epsilon(1e-9));
    CHECK(v(0, 1) == doctest::Approx(0.26894142137).epsilon(1e-9));
}

TEST_CASE("retrieve: saturated query recovers a memory row") {
    Rng rng(31);
    Matrix rows = orthonormal_rows(4, 8, rng);
    std::vector<Composition> rc{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    HopfieldMemory mem = toy_memory(rows, rows, rc, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix queries(2, 8);
    for (int j = 0; j < 8; ++j) {
        queries(0, j) = 50.0 * rows(2, j);
        queries(1, j) = 50.0 * rows(1, j);
    }
    Retrieval r = retrieve(t, nodes, t.constant(queries), mem);
    const Matrix& v = t.value(r.patterns);
    double cos = 0.0;
    for (int j = 0; j < 8; ++j) cos += v(0, j) * rows(2, j);
    cos /= l2_norm(slice_rows(v, 0, 1));
    CHECK(cos > 0.99);
    CHECK(r.winner_rows[0] == 2);
    CHECK(r.winner_rows[1] == 1);
}

TEST_CASE("retrieve: score rows sum to one and patterns stay in the hull") {
    Rng rng(32);
    Matrix ma = Matrix::gaussian(5, 6, rng);
    Matrix mo = Matrix::gaussian(5, 6, rng);
    std::vector<Composition> rc{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}};
    HopfieldMemory mem = toy_memory(ma, mo, rc, 4);
    double max_row_norm = 0.0;
    for (int r = 0; r < 5; ++r) {
        max_row_norm = std::max(max_row_norm, l2_norm(mem.visual_attr.row(r)));
        max_row_norm = std::max(max_row_norm, l2_norm(mem.visual_obj.row(r)));
    }
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    for (int trial = 0; trial < 20; ++trial) {
        Retrieval r = retrieve(t, nodes, t.constant(Matrix::gaussian(4, 6, rng, 3.0)), mem);
        const Matrix s = retrieval_scores(t, r);
        for (int i = 0; i < s.rows(); ++i) {
            double sum = 0.0;
            for (int c = 0; c < s.cols(); ++c) sum += s(i, c);
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
        const Matrix& v = t.value(r.patterns);
        for (int i = 0; i < v.rows(); ++i) CHECK(l2_norm(v.row(i)) <= max_row_norm + 1e-9);
    }
}

TEST_CASE("retrieve: one-step fidelity over 1000 noisy seeded trials") {
    Rng rng(77);
    Matrix rows = orthonormal_rows(8, 32, rng);
    std::vector<Composition> rc;
    for (int i = 0; i < 8; ++i) rc.push_back({i, i});
    HopfieldMemory mem = toy_memory(rows, rows, rc, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);

    int correct = 0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        const int target = trial % 8;
        Matrix q(2, 32);
        for (int j = 0; j < 32; ++j) {
            const double noisy = rows(target, j) + 0.05 * rng.gauss();
            q(0, j) = 20.0 * noisy;
            q(1, j) = q(0, j);
        }
        Retrieval r = retrieve(t, nodes, t.constant(q), mem);
        if (r.winner_rows[0] == target) ++correct;
        t.clear();
        nodes = bind_hopfield(t, mem, false, false);
    }
    CHECK(static_cast<double>(correct) / trials >= 0.99);
}

TEST_CASE("retrieval_loss: saturated correct retrieval gives zero loss") {
    Rng rng(41);
    Matrix rows = orthonormal_rows(4, 8, rng);
    std::vector<Composition> rc{{0, 0}, {1, 1}, {1, 2}, {2, 1}};
    HopfieldMemory mem = toy_memory(rows, rows, rc, 4);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix q(4, 8);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 8; ++j) q(i, j) = 60.0 * rows(0, j);
    }
    Retrieval r = retrieve(t, nodes, t.constant(q), mem);
    const double loss = t.value(retrieval_loss(t, r, {0, 0}, mem))(0, 0);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-6);
}

TEST_CASE("retrieval_loss: uniform scores over four rows cost 2 log 4") {
    Matrix rows = Matrix::identity(4);
    std::vector<Composition> rc{{0, 0}, {1, 1}, {1, 2}, {2, 1}};
    HopfieldMemory mem = toy_memory(rows, rows, rc, 4);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Retrieval r = retrieve(t, nodes, t.constant(Matrix(4, 4)), mem);  // zero queries -> uniform
    const double loss = t.value(retrieval_loss(t, r, {0, 0}, mem))(0, 0);
    CHECK(loss == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("retrieval_loss: nonnegative on random instances") {
    Rng rng(42);
    Matrix ma = Matrix::gaussian(5, 6, rng);
    Matrix mo = Matrix::gaussian(5, 6, rng);
    std::vector<Composition> rc{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}};
    HopfieldMemory mem = toy_memory(ma, mo, rc, 4);
    for (int trial = 0; trial < 25; ++trial) {
        Tape t;
        HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
        Retrieval r = retrieve(t, nodes, t.constant(Matrix::gaussian(4, 6, rng, 2.0)), mem);
        const Composition label = rc[static_cast<std::size_t>(rng.below(rc.size()))];
        CHECK(t.value(retrieval_loss(t, r, label, mem))(0, 0) >= 0.0);
    }
}

TEST_CASE("retrieval_loss: invariant to slot permutation within a half") {
    Rng rng(43);
    Matrix ma = Matrix::gaussian(4, 6, rng);
    Matrix mo = Matrix::gaussian(4, 6, rng);
    std::vector<Composition> rc{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    HopfieldMemory mem = toy_memory(ma, mo, rc, 4);
    Matrix q = Matrix::gaussian(4, 6, rng);
    Matrix q_swapped = q;
    for (int j = 0; j < 6; ++j) {
        std::swap(q_swapped(0, j), q_swapped(1, j));  // swap the two attribute slots
        std::swap(q_swapped(2, j), q_swapped(3, j));  // swap the two object slots
    }
    auto loss_of = [&](const Matrix& queries) {
        Tape t;
        HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
        Retrieval r = retrieve(t, nodes, t.constant(queries), mem);
        return t.value(retrieval_loss(t, r, {0, 1}, mem))(0, 0);
    };
    CHECK(loss_of(q) == doctest::Approx(loss_of(q_swapped)).epsilon(1e-12));
}

TEST_CASE("retrieval_loss: unseen label is a contract error") {
    Matrix rows = Matrix::identity(4);
    std::vector<Composition> rc{{0, 0}, {1, 1}, {1, 2}, {2, 1}};
    HopfieldMemory mem = toy_memory(rows, rows, rc, 4);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Retrieval r = retrieve(t, nodes, t.constant(Matrix(4, 4)), mem);
    CHECK_THROWS_AS(retrieval_loss(t, r, {3, 3}, mem), ContractError);
}

TEST_CASE("info_nce_loss: uniform similarities with one positive cost log 4") {
    Matrix rows = Matrix::identity(4);
    std::vector<Composition> rc{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    HopfieldMemory mem = toy_memory(rows, rows, rc, 4);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix q(4, 4);
    const int winners[4] = {0, 1, 1, 2};
    for (int i = 0; i < 4; ++i) q(i, winners[i]) = 50.0;
    Retrieval r = retrieve(t, nodes, t.constant(q), mem);
    // label (0, 3): only attribute slot 0 (winner row 0, attr 0) is positive.
    Matrix f_v = Matrix::filled(1, 4, 1.0);  // equal dot with every convex combination
    const double loss = t.value(info_nce_loss(t, t.constant(f_v), r, {0, 3}, mem, 1.0))(0, 0);
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("info_nce_loss: two slots with sims [2, 0] and positive first") {
    Matrix ma = Matrix::identity(2);
    Matrix mo(2, 2, {0.0, 1.0, 1.0, 0.0});
    HopfieldMemory mem = toy_memory(ma, mo, {{0, 0}, {1, 1}}, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix q(2, 2, {50.0, 0.0, 0.0, 50.0});  // attr slot -> row 0; obj slot -> row 0 of M_v^o
    Retrieval r = retrieve(t, nodes, t.constant(q), mem);
    REQUIRE(r.winner_rows[0] == 0);
    REQUIRE(r.winner_rows[1] == 0);
    // label (0, 1): attr slot positive, obj slot winner has obj 0 != 1.
    Matrix f_v(1, 2, {2.0, 0.0});
    const double loss = t.value(info_nce_loss(t, t.constant(f_v), r, {0, 1}, mem, 1.0))(0, 0);
    CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-6));
}

TEST_CASE("info_nce_loss: saturated positive drives the loss to zero") {
    Matrix ma = Matrix::identity(2);
    Matrix mo(2, 2, {0.0, 1.0, 1.0, 0.0});
    HopfieldMemory mem = toy_memory(ma, mo, {{0, 0}, {1, 1}}, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix q(2, 2, {50.0, 0.0, 0.0, 50.0});
    Retrieval r = retrieve(t, nodes, t.constant(q), mem);
    Matrix f_v(1, 2, {1000.0, 0.0});
    const double loss = t.value(info_nce_loss(t, t.constant(f_v), r, {0, 1}, mem, 1.0))(0, 0);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-12);
}

TEST_CASE("info_nce_loss: empty positive set returns zero") {
    Matrix rows = Matrix::identity(4);
    std::vector<Composition> rc{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    HopfieldMemory mem = toy_memory(rows, rows, rc, 4);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Matrix q(4, 4);
    q(0, 0) = q(1, 1) = q(2, 2) = q(3, 3) = 50.0;
    Retrieval r = retrieve(t, nodes, t.constant(q), mem);
    // label (1, 0): attribute slots won rows with attrs {0, 1}... slot 1 matches.
    // Use attr 3 vs winners {0,1} and obj 0 vs winners {2,3} of the object half.
    const double loss = t.value(info_nce_loss(t, t.constant(Matrix(1, 4)), r, {3, 0}, mem, 1.0))(0, 0);
    CHECK(loss == 0.0);
}

TEST_CASE("info_nce_loss: non-positive temperature is a config error") {
    Matrix rows = Matrix::identity(2);
    HopfieldMemory mem = toy_memory(rows, rows, {{0, 0}, {1, 1}}, 2);
    Tape t;
    HopfieldNodes nodes = bind_hopfield(t, mem, false, false);
    Retrieval r = retrieve(t, nodes, t.constant(Matrix(2, 2)), mem);
    CHECK_THROWS_AS(info_nce_loss(t, t.constant(Matrix(1, 2)), r, {0, 0}, mem, 0.0), ConfigError);
}

TEST_CASE("hopfield losses pass finite-difference checks") {
    Rng rng(55);
    const int dim = 6;
    const int slots = 4;
    Matrix ma = Matrix::gaussian(5, dim, rng);
    Matrix mo = Matrix::gaussian(5, dim, rng);
    Matrix w = Matrix::gaussian(slots * dim, dim, rng, 0.6);
    std::vector<Composition> rc{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}};
    Matrix f_v = l2_normalize_rows(Matrix::gaussian(1, dim, rng));
    const Composition label{0, 1};

    HopfieldMemory proto = toy_memory(ma, mo, rc, slots);
    auto build = [&](Tape& t, const std::vector<Tape::NodeId>& ids) {
        HopfieldNodes nodes;
        nodes.projection = ids[0];
        nodes.visual_attr = ids[1];
        nodes.visual_obj = ids[2];
        HopfieldMemory mem = proto;  // row_class + slot metadata
        const Tape::NodeId fv = t.constant(f_v);
        const Tape::NodeId z = t.reshape(t.matmul(ids[0], t.transpose(fv)), slots, dim);
        Retrieval r = retrieve(t, nodes, z, mem);
        const Tape::NodeId lr = retrieval_loss(t, r, label, mem);
        const Tape::NodeId nce = info_nce_loss(t, fv, r, label, mem, 0.5);
        return t.add(lr, nce);
    };
    std::vector<NamedParam> params{{"w", w}, {"mva", ma}, {"mvo", mo}};
    GradCheckReport report = grad_check(build, params, 1e-5, 1e-4);
    CHECK(report.pass);
    CHECK(report.worst() < 1e-4);
}
