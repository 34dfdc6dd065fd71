#include "hope/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>

#include "hope/errors.hpp"
#include "hope/training.hpp"
#include "json.hpp"

namespace hope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix sample_features(const ModelState& model, const Matrix& f_v) {
    Tape t(Precision::f64);
    const BoundModel bound = bind_model(t, model, TrainableGroups::none());
    const SampleForward fwd = forward_sample(t, bound, f_v);
    return t.value(fwd.features);
}

struct ScoringContext {
    FeasibleSet feasible;
    Matrix text;  // |feasible| x D
};

ScoringContext make_scoring_context(const ModelState& model, const FeasibleSet& feasible) {
    Tape t(Precision::f64);
    const TextFeatures f =
        build_text_features(t, t.constant(model.prompt.theta), model.labels, model.encoder, feasible.compositions);
    return ScoringContext{feasible, t.value(f.compositions)};
}

std::vector<double> score_with_context(const ModelState& model, const ScoringContext& ctx, const Matrix& f_v) {
    const Matrix features = sample_features(model, f_v);
    const Matrix sims = matmul(features, transposed(ctx.text));
    return sims.values();
}

}  // namespace

FeasibleSet FeasibleSet::closed_world(const VocabSpec& vocab) {
    FeasibleSet f;
    f.world = World::closed;
    for (Composition c : vocab.seen_pairs) {
        f.compositions.push_back(c);
        f.seen_flags.push_back(true);
    }
    for (Composition c : vocab.unseen_closed) {
        f.compositions.push_back(c);
        f.seen_flags.push_back(false);
    }
    return f;
}

FeasibleSet FeasibleSet::open_world(const VocabSpec& vocab) {
    FeasibleSet f;
    f.world = World::open;
    for (int a = 0; a < vocab.num_attributes(); ++a) {
        for (int o = 0; o < vocab.num_objects(); ++o) {
            const Composition c{a, o};
            f.compositions.push_back(c);
            f.seen_flags.push_back(vocab.is_seen(c));
        }
    }
    return f;
}

int FeasibleSet::index_of(Composition c) const {
    for (std::size_t i = 0; i < compositions.size(); ++i) {
        if (compositions[i] == c) return static_cast<int>(i);
    }
    return -1;
}

std::vector<double> score_compositions(const ModelState& model, const Matrix& f_v, const FeasibleSet& feasible) {
    return score_with_context(model, make_scoring_context(model, feasible), f_v);
}

EvalReport bias_sweep(const std::vector<std::vector<double>>& scores, const std::vector<Composition>& labels,
                      const FeasibleSet& feasible) {
    if (scores.size() != labels.size()) throw ContractError("bias_sweep: one label per score vector required");
    const std::size_t n_comps = feasible.compositions.size();

    struct Reduced {
        int best_seen = -1;
        int best_unseen = -1;
        double seen_score = -kInf;
        double unseen_score = -kInf;
        int label_idx = -1;
        bool label_seen = false;
    };
    std::vector<Reduced> samples;
    samples.reserve(scores.size());
    int n_seen_labeled = 0, n_unseen_labeled = 0;
    for (std::size_t s = 0; s < scores.size(); ++s) {
        if (scores[s].size() != n_comps) throw ContractError("bias_sweep: score vector length mismatch");
        Reduced r;
        r.label_idx = feasible.index_of(labels[s]);
        if (r.label_idx < 0) {
            throw ContractError("bias_sweep: label (" + std::to_string(labels[s].attr) + ", " +
                                std::to_string(labels[s].obj) + ") is not feasible");
        }
        r.label_seen = feasible.seen_flags[static_cast<std::size_t>(r.label_idx)];
        for (std::size_t c = 0; c < n_comps; ++c) {
            const double v = scores[s][c];
            if (feasible.seen_flags[c]) {
                if (v > r.seen_score) {
                    r.seen_score = v;
                    r.best_seen = static_cast<int>(c);
                }
            } else if (v > r.unseen_score) {
                r.unseen_score = v;
                r.best_unseen = static_cast<int>(c);
            }
        }
        (r.label_seen ? n_seen_labeled : n_unseen_labeled)++;
        samples.push_back(r);
    }

    EvalReport report;
    report.world = feasible.world;
    report.no_unseen_warning = n_unseen_labeled == 0;

    // Accuracy pair at one bias. A sample predicts its best seen composition
    // when seen_score - unseen_score > b, its best unseen one otherwise.
    auto point_at = [&](double b) {
        int seen_correct = 0, unseen_correct = 0;
        for (const Reduced& r : samples) {
            const double gap = r.best_unseen < 0 ? kInf : r.seen_score - r.unseen_score;
            const bool predict_seen = gap > b;
            const int predicted = predict_seen ? r.best_seen : r.best_unseen;
            if (predicted == r.label_idx) {
                (r.label_seen ? seen_correct : unseen_correct)++;
            }
        }
        EvalCurvePoint p;
        p.bias = b;
        p.seen_acc = n_seen_labeled > 0 ? static_cast<double>(seen_correct) / n_seen_labeled : 0.0;
        p.unseen_acc = n_unseen_labeled > 0 ? static_cast<double>(unseen_correct) / n_unseen_labeled : 0.0;
        return p;
    };

    std::set<double> candidates;
    for (const Reduced& r : samples) {
        if (r.best_unseen >= 0) candidates.insert(r.seen_score - r.unseen_score);
    }

    report.curve.push_back(point_at(-kInf));
    for (double b : candidates) report.curve.push_back(point_at(b));
    report.curve.push_back(point_at(kInf));

    report.best_seen = report.curve.front().seen_acc;
    report.best_unseen = report.curve.back().unseen_acc;
    for (const EvalCurvePoint& p : report.curve) {
        if (p.seen_acc + p.unseen_acc > 0.0) {
            report.hm = std::max(report.hm, 2.0 * p.seen_acc * p.unseen_acc / (p.seen_acc + p.unseen_acc));
        }
    }

    // Trapezoid over the deduplicated (seen, unseen) points, sorted by seen
    // accuracy, keeping the best unseen accuracy per seen value.
    std::vector<std::pair<double, double>> pts;
    for (const EvalCurvePoint& p : report.curve) pts.emplace_back(p.seen_acc, p.unseen_acc);
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.first < b.first || (a.first == b.first && a.second > b.second);
    });
    std::vector<std::pair<double, double>> hull;
    for (const auto& p : pts) {
        if (!hull.empty() && hull.back().first == p.first) continue;
        hull.push_back(p);
    }
    for (std::size_t k = 1; k < hull.size(); ++k) {
        report.auc += (hull[k].first - hull[k - 1].first) * (hull[k].second + hull[k - 1].second) / 2.0;
    }
    return report;
}

EvalReport evaluate(const ModelState& model, const CompositionDataset& ds, World world) {
    const FeasibleSet feasible =
        world == World::closed ? FeasibleSet::closed_world(ds.vocab) : FeasibleSet::open_world(ds.vocab);
    const ScoringContext ctx = make_scoring_context(model, feasible);
    std::vector<std::vector<double>> scores;
    std::vector<Composition> labels;
    scores.reserve(ds.test.size());
    labels.reserve(ds.test.size());
    for (const Sample& s : ds.test) {
        scores.push_back(score_with_context(model, ctx, s.embedding));
        labels.push_back(s.label);
    }
    return bias_sweep(scores, labels, feasible);
}

RetrievalProbeReport retrieval_probe(const ModelState& model, const CompositionDataset& ds, bool use_synonyms) {
    if (use_synonyms && ds.synonyms.empty()) {
        throw ConfigError("retrieval_probe: synonyms requested but the dataset has no synonym groups");
    }
    RetrievalProbeReport report;
    report.with_synonyms = use_synonyms;
    const int half = model.memory.slots / 2;

    int seen_hit = 0, unseen_hit = 0, unseen_syn_hit = 0;
    Tape t(Precision::f64);
    for (const Sample& s : ds.test) {
        t.clear();
        const BoundModel bound = bind_model(t, model, TrainableGroups::none());
        const Retrieval r = retrieve_for_sample(t, bound, s.embedding);

        bool attr_hit = false, obj_hit = false, attr_syn = false, obj_syn = false;
        for (int i = 0; i < model.memory.slots; ++i) {
            const Composition winner =
                model.memory.row_class[static_cast<std::size_t>(r.winner_rows[static_cast<std::size_t>(i)])];
            if (i < half) {
                attr_hit = attr_hit || winner.attr == s.label.attr;
                if (use_synonyms) {
                    const auto& group = ds.synonyms.attribute_group(s.label.attr);
                    attr_syn = attr_syn || std::find(group.begin(), group.end(), winner.attr) != group.end();
                }
            } else {
                obj_hit = obj_hit || winner.obj == s.label.obj;
                if (use_synonyms) {
                    const auto& group = ds.synonyms.object_group(s.label.obj);
                    obj_syn = obj_syn || std::find(group.begin(), group.end(), winner.obj) != group.end();
                }
            }
        }
        const bool hit = attr_hit && obj_hit;
        const bool syn_hit = use_synonyms ? (attr_syn && obj_syn) : hit;
        if (ds.vocab.is_seen(s.label)) {
            ++report.seen_count;
            if (hit) ++seen_hit;
        } else {
            ++report.unseen_count;
            if (hit) ++unseen_hit;
            if (syn_hit) ++unseen_syn_hit;
        }
    }
    if (report.seen_count > 0) report.seen_rate = static_cast<double>(seen_hit) / report.seen_count;
    if (report.unseen_count > 0) {
        report.unseen_rate = static_cast<double>(unseen_hit) / report.unseen_count;
        report.unseen_synonym_rate = static_cast<double>(unseen_syn_hit) / report.unseen_count;
    }
    return report;
}

ExpertAllocationReport expert_allocation_report(const ModelState& model, const CompositionDataset& ds) {
    if (!model.config.use_memory) {
        throw ConfigError("expert_allocation_report: memory-ablated models never run the composer");
    }
    int n_experts = 0;
    for (const TransformerBlock& b : model.composer.blocks) {
        if (b.use_moe) n_experts = std::max(n_experts, b.moe.n_slots());
    }
    if (n_experts == 0) throw ConfigError("expert_allocation_report: composer has no Soft-MoE layer");

    ExpertAllocationReport report;
    report.n_experts = n_experts;
    report.attr_counts = Matrix(n_experts, model.vocab.num_attributes());
    report.obj_counts = Matrix(n_experts, model.vocab.num_objects());
    report.expert_totals.assign(static_cast<std::size_t>(n_experts), 0.0);

    Tape t(Precision::f64);
    for (const Sample& s : ds.test) {
        t.clear();
        const BoundModel bound = bind_model(t, model, TrainableGroups::none());
        const SampleForward fwd = forward_sample(t, bound, s.embedding);
        for (Tape::NodeId cw : fwd.trace.combine_weights) {
            const Matrix& c = t.value(cw);
            for (int token = 0; token < c.rows(); ++token) {
                int best = 0;
                for (int e = 1; e < c.cols(); ++e) {
                    if (c(token, e) > c(token, best)) best = e;
                }
                report.attr_counts(best, s.label.attr) += 1.0;
                report.obj_counts(best, s.label.obj) += 1.0;
                report.expert_totals[static_cast<std::size_t>(best)] += 1.0;
            }
        }
    }

    double total = 0.0;
    for (double v : report.expert_totals) total += v;
    if (total > 0.0) {
        for (double v : report.expert_totals) {
            if (v > 0.0) {
                const double p = v / total;
                report.allocation_entropy -= p * std::log(p);
            }
        }
    }
    return report;
}

std::vector<AblationRow> ablation_suite(const AblationConfig& config, const CompositionDataset& ds) {
    std::vector<AblationRow> rows;
    auto run_variant = [&](const std::string& suite, const std::string& variant, TrainConfig cfg, std::uint64_t seed,
                           bool with_probe) {
        cfg.seed = seed;
        cfg.validate_every = 0;
        const TrainResult result = train(cfg, ds);
        const EvalReport report = evaluate(result.model, ds, World::closed);
        AblationRow row;
        row.suite = suite;
        row.variant = variant;
        row.seed = seed;
        row.seen = report.best_seen;
        row.unseen = report.best_unseen;
        row.hm = report.hm;
        row.auc = report.auc;
        if (with_probe) {
            const bool synonyms = !ds.synonyms.empty();
            const RetrievalProbeReport probe = retrieval_probe(result.model, ds, synonyms);
            row.probe_seen = probe.seen_rate;
            row.probe_unseen = probe.unseen_rate;
            row.probe_synonyms = probe.unseen_synonym_rate;
        }
        rows.push_back(std::move(row));
    };

    for (const std::string& suite : config.suites) {
        for (int i = 0; i < config.n_seeds; ++i) {
            const std::uint64_t seed = config.base.seed + static_cast<std::uint64_t>(i);
            if (suite == "kshots") {
                TrainConfig one = config.base;
                one.k_shots = 1;
                run_variant(suite, "k1", one, seed, false);
                TrainConfig ten = config.base;
                ten.k_shots = 10;
                run_variant(suite, "k10", ten, seed, false);
            } else if (suite == "infonce") {
                TrainConfig off = config.base;
                off.use_info_nce = false;
                run_variant(suite, "off", off, seed, false);
                TrainConfig on = config.base;
                on.use_info_nce = true;
                run_variant(suite, "on", on, seed, false);
            } else if (suite == "retrieval") {
                TrainConfig off = config.base;
                off.use_retrieval_loss = false;
                run_variant(suite, "off", off, seed, true);
                TrainConfig on = config.base;
                on.use_retrieval_loss = true;
                run_variant(suite, "on", on, seed, true);
            } else if (suite == "composer") {
                TrainConfig ffn = config.base;
                ffn.composer_mode = ComposerMode::feedforward;
                run_variant(suite, "feedforward", ffn, seed, false);
                TrainConfig moe = config.base;
                moe.composer_mode = ComposerMode::softmoe;
                run_variant(suite, "softmoe", moe, seed, false);
            } else {
                throw ConfigError("ablation_suite: unknown suite '" + suite + "'");
            }
        }
    }
    return rows;
}

namespace {

const char* world_name(World w) {
    return w == World::closed ? "closed" : "open";
}

std::FILE* open_for_write(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw FormatError("cannot open " + path + " for writing");
    return f;
}

}  // namespace

void write_eval_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["world"] = world_name(report.world);
    j["best_seen"] = report.best_seen;
    j["best_unseen"] = report.best_unseen;
    j["hm"] = report.hm;
    j["auc"] = report.auc;
    j["no_unseen_warning"] = report.no_unseen_warning;
    nlohmann::json curve = nlohmann::json::array();
    for (const EvalCurvePoint& p : report.curve) {
        curve.push_back({{"bias", std::isfinite(p.bias) ? nlohmann::json(p.bias)
                                                        : nlohmann::json(p.bias > 0 ? "+inf" : "-inf")},
                         {"seen_acc", p.seen_acc},
                         {"unseen_acc", p.unseen_acc}});
    }
    j["curve"] = curve;
    std::FILE* f = open_for_write(path);
    const std::string text = j.dump(2);
    std::fwrite(text.data(), 1, text.size(), f);
    std::fputc('\n', f);
    std::fclose(f);
}

void write_eval_report_csv(const EvalReport& report, const std::string& path) {
    std::FILE* f = open_for_write(path);
    std::fprintf(f, "bias,seen_acc,unseen_acc\n");
    for (const EvalCurvePoint& p : report.curve) {
        std::fprintf(f, "%.17g,%.17g,%.17g\n", p.bias, p.seen_acc, p.unseen_acc);
    }
    std::fclose(f);
}

void write_probe_report_csv(const RetrievalProbeReport& report, const std::string& path) {
    std::FILE* f = open_for_write(path);
    std::fprintf(f, "seen_rate,unseen_rate,unseen_synonym_rate,seen_count,unseen_count,with_synonyms\n");
    std::fprintf(f, "%.17g,%.17g,%.17g,%d,%d,%d\n", report.seen_rate, report.unseen_rate,
                 report.unseen_synonym_rate, report.seen_count, report.unseen_count,
                 report.with_synonyms ? 1 : 0);
    std::fclose(f);
}

void write_expert_report_csv(const ExpertAllocationReport& report, const std::string& path) {
    std::FILE* f = open_for_write(path);
    std::fprintf(f, "expert,kind,label,count\n");
    for (int e = 0; e < report.n_experts; ++e) {
        for (int a = 0; a < report.attr_counts.cols(); ++a) {
            std::fprintf(f, "%d,attr,%d,%.17g\n", e, a, report.attr_counts(e, a));
        }
        for (int o = 0; o < report.obj_counts.cols(); ++o) {
            std::fprintf(f, "%d,obj,%d,%.17g\n", e, o, report.obj_counts(e, o));
        }
    }
    std::fprintf(f, "# allocation_entropy,%.17g\n", report.allocation_entropy);
    std::fclose(f);
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::FILE* f = open_for_write(path);
    std::fprintf(f, "suite,variant,seed,seen,unseen,hm,auc,probe_seen,probe_unseen,probe_synonyms\n");
    for (const AblationRow& r : rows) {
        std::fprintf(f, "%s,%s,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.suite.c_str(),
                     r.variant.c_str(), static_cast<unsigned long long>(r.seed), r.seen, r.unseen, r.hm, r.auc,
                     r.probe_seen, r.probe_unseen, r.probe_synonyms);
    }
    std::fclose(f);
}

}  // namespace hope
