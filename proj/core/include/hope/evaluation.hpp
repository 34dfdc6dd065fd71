#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hope/model.hpp"

namespace hope {

enum class World : std::uint8_t { closed, open };

// The candidate compositions a prediction may land on: closed world is the
// seen pairs plus the admitted unseen pairs, open world is all of A x O.
struct FeasibleSet {
    World world = World::closed;
    std::vector<Composition> compositions;
    std::vector<bool> seen_flags;  // parallel to compositions

    static FeasibleSet closed_world(const VocabSpec& vocab);
    static FeasibleSet open_world(const VocabSpec& vocab);
    int index_of(Composition c) const;  // -1 when absent
};

struct EvalCurvePoint {
    double bias = 0.0;  // +-inf sentinels included
    double seen_acc = 0.0;
    double unseen_acc = 0.0;
};

struct EvalReport {
    World world = World::closed;
    std::vector<EvalCurvePoint> curve;
    double best_seen = 0.0;    // seen accuracy at bias -> -inf
    double best_unseen = 0.0;  // unseen accuracy at bias -> +inf
    double hm = 0.0;           // max over the curve of 2su/(s+u)
    double auc = 0.0;          // trapezoid over the deduplicated (s, u) points
    bool no_unseen_warning = false;
};

// Scores for one image embedding over every feasible composition, using text
// features built from the trained prompt (zero-shot for unseen pairs).
std::vector<double> score_compositions(const ModelState& model, const Matrix& f_v, const FeasibleSet& feasible);

// Exact step-curve sweep: candidate biases are the per-sample gaps between
// the best seen and best unseen scores, plus -inf/+inf sentinels. Unseen
// wins score ties.
EvalReport bias_sweep(const std::vector<std::vector<double>>& scores, const std::vector<Composition>& labels,
                      const FeasibleSet& feasible);

// Full protocol over the dataset's test split.
EvalReport evaluate(const ModelState& model, const CompositionDataset& ds, World world);

struct RetrievalProbeReport {
    double seen_rate = 0.0;
    double unseen_rate = 0.0;
    double unseen_synonym_rate = 0.0;  // only when synonyms were requested
    int seen_count = 0;
    int unseen_count = 0;
    bool with_synonyms = false;
};

// Fraction of test items where some attribute slot and some object slot
// retrieve rows carrying the true primitives. With synonyms, any primitive
// in the true one's group is accepted.
RetrievalProbeReport retrieval_probe(const ModelState& model, const CompositionDataset& ds, bool use_synonyms);

struct ExpertAllocationReport {
    Matrix attr_counts;  // n_experts x |A|
    Matrix obj_counts;   // n_experts x |O|
    std::vector<double> expert_totals;
    double allocation_entropy = 0.0;  // entropy of the expert usage distribution
    int n_experts = 0;
};

ExpertAllocationReport expert_allocation_report(const ModelState& model, const CompositionDataset& ds);

struct AblationRow {
    std::string suite;
    std::string variant;
    std::uint64_t seed = 0;
    double seen = 0.0;
    double unseen = 0.0;
    double hm = 0.0;
    double auc = 0.0;
    double probe_seen = 0.0;
    double probe_unseen = 0.0;
    double probe_synonyms = 0.0;
};

struct AblationConfig {
    TrainConfig base;
    int n_seeds = 3;
    std::vector<std::string> suites{"kshots", "infonce", "retrieval", "composer"};
};

// Trains paired variants with shared seeds and reports closed-world metrics
// (plus retrieval-probe rates for the retrieval suite).
std::vector<AblationRow> ablation_suite(const AblationConfig& config, const CompositionDataset& ds);

// Report writers.
void write_eval_report_json(const EvalReport& report, const std::string& path);
void write_eval_report_csv(const EvalReport& report, const std::string& path);
void write_probe_report_csv(const RetrievalProbeReport& report, const std::string& path);
void write_expert_report_csv(const ExpertAllocationReport& report, const std::string& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace hope
