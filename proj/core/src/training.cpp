#include "hope/training.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>

#include "hope/adam.hpp"
#include "hope/errors.hpp"
#include "hope/evaluation.hpp"

namespace hope {

namespace {

TrainableGroups stage_groups(int stage, const TrainConfig& cfg) {
    TrainableGroups g;
    switch (stage) {
        case 1:
            g.prompt = true;
            g.logit_scale = true;
            break;
        case 2:
            g.hopfield_projection = cfg.use_memory;
            g.hopfield_memory = cfg.use_memory;
            break;
        case 3:
            g.prompt = true;
            g.logit_scale = true;
            g.composer = true;
            g.hopfield_projection = cfg.use_memory;
            g.hopfield_memory = cfg.use_memory;
            break;
        default:
            throw ContractError("stage_groups: stage out of range");
    }
    return g;
}

struct Optimizer {
    std::map<std::string, AdamState> states;
    AdamConfig adam;
    double memory_mult = 1.0;
    int stage = 1;

    void apply(ModelState& model, const std::map<std::string, Matrix>& grads, const TrainableGroups& groups) {
        visit_params(model, [&](const std::string& name, Matrix& value, ParamGroup group) {
            if (!groups.enabled(group)) return;
            auto it = grads.find(name);
            if (it == grads.end()) return;
            auto state = states.find(name);
            if (state == states.end()) {
                state = states.emplace(name, AdamState(value.rows(), value.cols(), adam)).first;
            }
            // The memory boost applies during its dedicated warm-up stage only.
            const bool hopfield = group == ParamGroup::hopfield_projection || group == ParamGroup::hopfield_memory;
            state->second.set_lr(hopfield && stage == 2 ? adam.lr * memory_mult : adam.lr);
            state->second.step(value, it->second);
        });
    }
};

}  // namespace

TrainResult train(const TrainConfig& config, const CompositionDataset& ds) {
    config.validate();
    ds.validate();

    TrainResult result;
    result.model = init_model(ds, config);
    ModelState& model = result.model;

    Optimizer opt;
    opt.adam = AdamConfig{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};
    opt.memory_mult = config.lr_memory_mult;

    Rng shuffle_rng = Rng(config.seed).fork(41);
    std::vector<int> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    const int batch_size =
        config.batch_size == 0 ? static_cast<int>(ds.train.size()) : std::min<int>(config.batch_size, static_cast<int>(ds.train.size()));

    const int total_epochs = config.epochs_stage1 + config.epochs_stage2 + config.epochs_stage3;
    int global_epoch = 0;
    const int stage_epochs[3] = {config.epochs_stage1, config.epochs_stage2, config.epochs_stage3};
    for (int stage = 1; stage <= 3; ++stage) {
        const TrainableGroups groups = stage_groups(stage, config);
        opt.stage = stage;
        for (int e = 0; e < stage_epochs[stage - 1]; ++e) {
            ++global_epoch;
            shuffle_rng.shuffle(order);

            EpochMetrics metrics;
            metrics.epoch = global_epoch;
            metrics.stage = stage;
            int steps = 0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
                const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
                const std::vector<int> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
                const Batch batch = make_batch(ds.train, indices);

                Tape tape(config.precision);
                const BoundModel bound = bind_model(tape, model, groups);
                BuiltLosses built;
                try {
                    built = build_losses(tape, bound, batch, stage);
                    if (!std::isfinite(tape.value(built.total)(0, 0))) {
                        throw TrainingError("non-finite stage loss");
                    }
                } catch (const TrainingError& err) {
                    throw TrainingError("stage " + std::to_string(stage) + " epoch " + std::to_string(global_epoch) +
                                        " step " + std::to_string(steps) + ": " + err.what());
                }
                tape.backward(built.total);
                std::map<std::string, Matrix> grads;
                collect_gradients(tape, bound, [&grads](const std::string& name, const Matrix& g, ParamGroup) {
                    grads.emplace(name, g);
                });
                opt.apply(model, grads, groups);

                metrics.total += tape.value(built.total)(0, 0);
                metrics.spm += tape.value(built.parts.spm)(0, 0);
                metrics.st_obj += tape.value(built.parts.st_obj)(0, 0);
                metrics.dfm += tape.value(built.parts.dfm)(0, 0);
                metrics.retrieval += tape.value(built.parts.retrieval)(0, 0);
                metrics.info_nce += tape.value(built.parts.info_nce)(0, 0);
                ++steps;
            }
            if (steps > 0) {
                metrics.total /= steps;
                metrics.spm /= steps;
                metrics.st_obj /= steps;
                metrics.dfm /= steps;
                metrics.retrieval /= steps;
                metrics.info_nce /= steps;
            }

            const bool last_epoch = global_epoch == total_epochs;
            const bool validate =
                (config.validate_every > 0 && global_epoch % config.validate_every == 0) || last_epoch;
            if (validate) {
                const EvalReport report = evaluate(model, ds, World::closed);
                metrics.validation = ValidationMetrics{report.best_seen, report.best_unseen, report.hm, report.auc};
            }
            result.log.push_back(std::move(metrics));
        }
    }
    return result;
}

void write_metrics_csv(const std::vector<EpochMetrics>& log, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw FormatError("cannot open " + path + " for writing");
    std::fprintf(f, "epoch,stage,total,spm,st_obj,dfm,retrieval,info_nce,val_seen,val_unseen,val_hm,val_auc\n");
    for (const EpochMetrics& m : log) {
        std::fprintf(f, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.epoch, m.stage, m.total, m.spm, m.st_obj,
                     m.dfm, m.retrieval, m.info_nce);
        if (m.validation.has_value()) {
            std::fprintf(f, ",%.17g,%.17g,%.17g,%.17g\n", m.validation->seen, m.validation->unseen, m.validation->hm,
                         m.validation->auc);
        } else {
            std::fprintf(f, ",,,,\n");
        }
    }
    std::fclose(f);
}

}  // namespace hope
