#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hope/diagnostics.hpp"
#include "hope/errors.hpp"
#include "hope/evaluation.hpp"
#include "hope/training.hpp"

namespace fs = std::filesystem;
using namespace hope;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Registers every train-config flag against `cfg`. Defaults shown by --help
// come from the (possibly config-file seeded) cfg itself, so flags always win
// over the config file.
void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
    cmd->add_option("--epochs-stage1", cfg.epochs_stage1, "Prompt warm-up epochs")->capture_default_str();
    cmd->add_option("--epochs-stage2", cfg.epochs_stage2, "Memory warm-up epochs")->capture_default_str();
    cmd->add_option("--epochs-stage3", cfg.epochs_stage3, "Joint training epochs")->capture_default_str();
    cmd->add_option("--alpha", cfg.weights.alpha, "Weight of the decomposed loss")->capture_default_str();
    cmd->add_option("--beta", cfg.weights.beta, "Weight of the prompt loss")->capture_default_str();
    cmd->add_option("--gamma", cfg.weights.gamma, "Weight of the retrieval losses")->capture_default_str();
    cmd->add_option("--tau", cfg.weights.tau, "Contrastive temperature")->capture_default_str();
    cmd->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--lr-memory-mult", cfg.lr_memory_mult, "Memory lr multiplier during stage 2")->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "Batch size (0 = full batch)")->capture_default_str();
    cmd->add_option("--slots", cfg.slots, "Retrieval slot count l")->capture_default_str();
    cmd->add_option("--experts", cfg.n_experts, "Experts per Soft-MoE layer")->capture_default_str();
    cmd->add_option("--blocks", cfg.n_blocks, "Composer transformer blocks")->capture_default_str();
    cmd->add_option("--hidden-mult", cfg.hidden_mult, "Feed-forward hidden width multiplier")->capture_default_str();
    cmd->add_option("--k-shots", cfg.k_shots, "Samples averaged into each memory row")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Training seed")->capture_default_str();
    cmd->add_option("--validate-every", cfg.validate_every, "Epochs between validations (0 = final only)")
        ->capture_default_str();
    cmd->add_option("--w-init-scale", cfg.w_init_scale, "Query projection init scale")->capture_default_str();
    cmd->add_flag("--f32", [&cfg](std::int64_t) { cfg.precision = Precision::f32; },
                  "Run forward passes at single precision");
    cmd->add_flag("--feedforward-composer", [&cfg](std::int64_t) { cfg.composer_mode = ComposerMode::feedforward; },
                  "Replace Soft-MoE layers with plain feed-forward blocks");
    cmd->add_flag("--single-target", [&cfg](std::int64_t) { cfg.target_mode = TargetMode::single; },
                  "Retrieval-loss target on the exact composition row");
    cmd->add_flag("--no-memory", [&cfg](std::int64_t) { cfg.use_memory = false; },
                  "Ablate the Hopfield memory (prompt-alignment baseline)");
    cmd->add_flag("--no-info-nce", [&cfg](std::int64_t) { cfg.use_info_nce = false; }, "Disable the contrastive loss");
    cmd->add_flag("--no-retrieval-loss", [&cfg](std::int64_t) { cfg.use_retrieval_loss = false; },
                  "Disable the retrieval loss");
}

int cmd_gen_data(const GeneratorSpec& spec, const std::string& out) {
    CompositionDataset ds = generate(spec);
    save_dataset(ds, out);
    std::printf("wrote %s: %d attributes, %d objects, %zu seen pairs, %zu train, %zu test (seed %llu)\n",
                out.c_str(), ds.vocab.num_attributes(), ds.vocab.num_objects(), ds.vocab.seen_pairs.size(),
                ds.train.size(), ds.test.size(), static_cast<unsigned long long>(ds.seed));
    return 0;
}

int cmd_train(const TrainConfig& cfg, const std::string& data, const std::string& out) {
    CompositionDataset ds = load_dataset(data);
    TrainResult result = train(cfg, ds);
    fs::create_directories(out);
    const std::string ckpt = (fs::path(out) / "model.ckpt").string();
    const std::string csv = (fs::path(out) / "metrics.csv").string();
    save_checkpoint(result.model, ckpt);
    write_metrics_csv(result.log, csv);
    const EpochMetrics& last = result.log.back();
    std::printf("trained %d epochs (seed %llu): ", last.epoch, static_cast<unsigned long long>(cfg.seed));
    if (last.validation) {
        std::printf("S %.4f U %.4f HM %.4f AUC %.4f\n", last.validation->seen, last.validation->unseen,
                    last.validation->hm, last.validation->auc);
    } else {
        std::printf("final loss %.6f\n", last.total);
    }
    std::printf("wrote %s and %s\n", ckpt.c_str(), csv.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& world, const std::string& out,
             const std::string& config_path) {
    ModelState model = load_checkpoint(ckpt);
    if (!config_path.empty()) {
        const TrainConfig requested = train_config_merge(model.config, read_file(config_path));
        if (train_config_hash(requested) != train_config_hash(model.config)) {
            std::fprintf(stderr, "warning: requested configuration differs from the checkpoint; using checkpoint settings\n");
        }
    }
    CompositionDataset ds = load_dataset(data);
    const World w = world == "open" ? World::open : World::closed;
    EvalReport report = evaluate(model, ds, w);
    if (report.no_unseen_warning) {
        std::fprintf(stderr, "warning: test split has no unseen-labeled items; U/HM/AUC reported as zero\n");
    }
    write_eval_report_json(report, out + ".json");
    write_eval_report_csv(report, out + ".csv");
    std::printf("%s world: S %.4f U %.4f HM %.4f AUC %.4f\n", world.c_str(), report.best_seen, report.best_unseen,
                report.hm, report.auc);
    std::printf("wrote %s.json and %s.csv\n", out.c_str(), out.c_str());
    return 0;
}

int cmd_grad_check(std::uint64_t seed, double step, double tol) {
    GeneratorSpec gs;
    gs.num_attributes = 4;
    gs.num_objects = 5;
    gs.dimension = 16;
    gs.samples_per_composition = 4;
    gs.seen_fraction = 0.6;
    gs.noise_sigma = 0.1;
    gs.seed = seed;
    CompositionDataset ds = generate(gs);

    TrainConfig cfg;
    cfg.seed = seed;
    cfg.slots = 4;
    cfg.n_experts = 2;
    cfg.n_blocks = 2;
    cfg.hidden_mult = 1;
    ModelState model = init_model(ds, cfg);
    const Batch batch = make_batch(ds.train, {0, 1});

    bool all_pass = true;
    std::printf("%-12s %-14s %-10s\n", "loss", "max rel err", "status");
    for (LossKind kind : {LossKind::spm, LossKind::retrieval, LossKind::info_nce, LossKind::st_obj, LossKind::dfm,
                          LossKind::total}) {
        GradCheckReport report = model_grad_check(model, batch, kind, step, tol);
        std::printf("%-12s %-14.3e %-10s\n", loss_kind_name(kind), report.worst(), report.pass ? "pass" : "FAIL");
        if (!report.pass) {
            for (const GradCheckEntry& e : report.entries) {
                if (!e.pass) std::printf("    %-28s %.3e\n", e.param.c_str(), e.max_rel_err);
            }
        }
        all_pass = all_pass && report.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "error: gradient check failed (tol %.1e)\n", tol);
        return 1;
    }
    std::printf("all gradients within %.1e of central differences (step %.1e)\n", tol, step);
    return 0;
}

int cmd_probe(const std::string& ckpt, const std::string& data, bool synonyms, const std::string& out) {
    ModelState model = load_checkpoint(ckpt);
    CompositionDataset ds = load_dataset(data);
    RetrievalProbeReport report = retrieval_probe(model, ds, synonyms);
    write_probe_report_csv(report, out);
    std::printf("retrieval probe: seen %.4f unseen %.4f", report.seen_rate, report.unseen_rate);
    if (synonyms) std::printf(" unseen+synonyms %.4f", report.unseen_synonym_rate);
    std::printf("\nwrote %s\n", out.c_str());
    return 0;
}

int cmd_report_experts(const std::string& ckpt, const std::string& data, const std::string& out) {
    ModelState model = load_checkpoint(ckpt);
    CompositionDataset ds = load_dataset(data);
    ExpertAllocationReport report = expert_allocation_report(model, ds);
    write_expert_report_csv(report, out);
    std::printf("expert allocation over %d experts, entropy %.4f\n", report.n_experts, report.allocation_entropy);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_ablate(const TrainConfig& base, const std::string& data, const std::string& out, int n_seeds,
               const std::vector<std::string>& suites) {
    CompositionDataset ds = load_dataset(data);
    AblationConfig ac;
    ac.base = base;
    ac.n_seeds = n_seeds;
    if (!suites.empty()) ac.suites = suites;
    std::vector<AblationRow> rows = ablation_suite(ac, ds);
    write_ablation_csv(rows, out);
    std::printf("ran %zu variants; wrote %s\n", rows.size(), out.c_str());
    return 0;
}

int cmd_export(const std::string& ckpt, const std::string& data, const std::string& out) {
    ModelState model = load_checkpoint(ckpt);
    CompositionDataset ds = load_dataset(data);
    std::FILE* f = std::fopen(out.c_str(), "w");
    if (f == nullptr) throw FormatError("cannot open " + out + " for writing");
    std::fprintf(f, "kind,attr,obj");
    for (int j = 0; j < model.dim(); ++j) std::fprintf(f, ",d%d", j);
    std::fprintf(f, "\n");
    auto dump_rows = [&f](const char* kind, const Matrix& m, const std::vector<Composition>& labels) {
        for (int r = 0; r < m.rows(); ++r) {
            std::fprintf(f, "%s,%d,%d", kind, labels[static_cast<std::size_t>(r)].attr,
                         labels[static_cast<std::size_t>(r)].obj);
            for (int j = 0; j < m.cols(); ++j) std::fprintf(f, ",%.9g", m(r, j));
            std::fprintf(f, "\n");
        }
    };
    dump_rows("memory_attr", model.memory.visual_attr, model.memory.row_class);
    dump_rows("memory_obj", model.memory.visual_obj, model.memory.row_class);
    auto dump_samples = [&f](const char* kind, const std::vector<Sample>& samples) {
        for (const Sample& s : samples) {
            std::fprintf(f, "%s,%d,%d", kind, s.label.attr, s.label.obj);
            for (int j = 0; j < s.embedding.cols(); ++j) std::fprintf(f, ",%.9g", s.embedding(0, j));
            std::fprintf(f, "\n");
        }
    };
    dump_samples("train", ds.train);
    dump_samples("test", ds.test);
    std::fclose(f);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HOPE compositional zero-shot learning pipeline"};
    app.require_subcommand(1);

    // gen-data
    GeneratorSpec gen_spec;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic composition dataset");
    gen->add_option("--attrs", gen_spec.num_attributes, "Number of attributes")->capture_default_str();
    gen->add_option("--objects", gen_spec.num_objects, "Number of objects")->capture_default_str();
    gen->add_option("--dim", gen_spec.dimension, "Embedding dimension")->capture_default_str();
    gen->add_option("--samples", gen_spec.samples_per_composition, "Samples per composition")->capture_default_str();
    gen->add_option("--seen", gen_spec.seen_fraction, "Fraction of pairs marked seen")->capture_default_str();
    gen->add_option("--sigma", gen_spec.noise_sigma, "Per-sample noise scale")->capture_default_str();
    gen->add_option("--attr-scale", gen_spec.attr_scale, "Attribute latent block weight")->capture_default_str();
    gen->add_option("--obj-scale", gen_spec.obj_scale, "Object latent block weight")->capture_default_str();
    gen->add_option("--signal-gain", gen_spec.signal_gain, "Mixed signal gain against the noise")->capture_default_str();
    gen->add_option("--train-frac", gen_spec.train_fraction, "Per-seen-pair train split fraction")->capture_default_str();
    gen->add_option("--closed-frac", gen_spec.closed_world_fraction, "Unseen pairs admitted to the closed world")
        ->capture_default_str();
    gen->add_option("--seed", gen_spec.seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->required();

    // train
    TrainConfig train_cfg;
    std::string train_data, train_out, train_config_path;
    CLI::App* tr = app.add_subcommand("train", "Train the pipeline on a dataset");
    tr->add_option("--data", train_data, "Dataset directory")->required();
    tr->add_option("--out", train_out, "Output directory for checkpoint + metrics")->required();
    tr->add_option("--config", train_config_path, "JSON config file (flags override it)");
    add_train_flags(tr, train_cfg);

    // eval
    std::string eval_ckpt, eval_data, eval_world = "closed", eval_out = "eval", eval_config_path;
    CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint under the CZSL protocol");
    ev->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    ev->add_option("--data", eval_data, "Dataset directory")->required();
    ev->add_option("--world", eval_world, "closed or open")->check(CLI::IsMember({"closed", "open"}))
        ->capture_default_str();
    ev->add_option("--out", eval_out, "Output path prefix (.json/.csv appended)")->capture_default_str();
    ev->add_option("--config", eval_config_path, "Config to cross-check against the checkpoint");

    // grad-check
    std::uint64_t gc_seed = 1;
    double gc_step = 1e-5, gc_tol = 1e-4;
    CLI::App* gc = app.add_subcommand("grad-check", "Verify tape gradients against finite differences");
    gc->add_option("--seed", gc_seed, "Toy instance seed")->capture_default_str();
    gc->add_option("--step", gc_step, "Central difference step")->capture_default_str();
    gc->add_option("--tol", gc_tol, "Relative error tolerance")->capture_default_str();

    // probe-retrieval
    std::string pr_ckpt, pr_data, pr_out = "probe.csv";
    bool pr_syn = false;
    CLI::App* pr = app.add_subcommand("probe-retrieval", "Measure memory retrieval accuracy");
    pr->add_option("--ckpt", pr_ckpt, "Checkpoint file")->required();
    pr->add_option("--data", pr_data, "Dataset directory")->required();
    pr->add_flag("--synonyms", pr_syn, "Accept synonym-group matches");
    pr->add_option("--out", pr_out, "Output CSV")->capture_default_str();

    // report-experts
    std::string re_ckpt, re_data, re_out = "experts.csv";
    CLI::App* re = app.add_subcommand("report-experts", "Expert allocation histograms");
    re->add_option("--ckpt", re_ckpt, "Checkpoint file")->required();
    re->add_option("--data", re_data, "Dataset directory")->required();
    re->add_option("--out", re_out, "Output CSV")->capture_default_str();

    // ablate
    TrainConfig ab_cfg;
    std::string ab_data, ab_out = "ablation.csv";
    int ab_seeds = 3;
    std::vector<std::string> ab_suites;
    CLI::App* ab = app.add_subcommand("ablate", "Train paired variants and compare metrics");
    ab->add_option("--data", ab_data, "Dataset directory")->required();
    ab->add_option("--out", ab_out, "Output CSV")->capture_default_str();
    ab->add_option("--seeds", ab_seeds, "Paired seeds per variant")->capture_default_str();
    ab->add_option("--suites", ab_suites, "Subset of kshots,infonce,retrieval,composer")->delimiter(',');
    add_train_flags(ab, ab_cfg);

    // export-embeddings
    std::string ex_ckpt, ex_data, ex_out = "embeddings.csv";
    CLI::App* ex = app.add_subcommand("export-embeddings", "Dump memory rows and sample embeddings as CSV");
    ex->add_option("--ckpt", ex_ckpt, "Checkpoint file")->required();
    ex->add_option("--data", ex_data, "Dataset directory")->required();
    ex->add_option("--out", ex_out, "Output CSV")->capture_default_str();

    // Config file must seed the defaults before flags are parsed, so scan for
    // --config first.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config" && std::string(argv[1]) == "train") {
            try {
                train_cfg = train_config_merge(train_cfg, read_file(argv[i + 1]));
            } catch (const std::exception& e) {
                std::fprintf(stderr, "error: %s\n", e.what());
                return 1;
            }
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out);
        if (tr->parsed()) return cmd_train(train_cfg, train_data, train_out);
        if (ev->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_world, eval_out, eval_config_path);
        if (gc->parsed()) return cmd_grad_check(gc_seed, gc_step, gc_tol);
        if (pr->parsed()) return cmd_probe(pr_ckpt, pr_data, pr_syn, pr_out);
        if (re->parsed()) return cmd_report_experts(re_ckpt, re_data, re_out);
        if (ab->parsed()) return cmd_ablate(ab_cfg, ab_data, ab_out, ab_seeds, ab_suites);
        if (ex->parsed()) return cmd_export(ex_ckpt, ex_data, ex_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
