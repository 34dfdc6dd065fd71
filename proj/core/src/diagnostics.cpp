#include "hope/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hope {

const char* loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::spm: return "L_spm";
        case LossKind::retrieval: return "L_r";
        case LossKind::info_nce: return "L_InfoNCE";
        case LossKind::st_obj: return "L_st+obj";
        case LossKind::dfm: return "L_dfm";
        case LossKind::total: return "L_total";
    }
    return "?";
}

namespace {

Tape::NodeId pick(const BuiltLosses& built, LossKind kind) {
    switch (kind) {
        case LossKind::spm: return built.parts.spm;
        case LossKind::retrieval: return built.parts.retrieval;
        case LossKind::info_nce: return built.parts.info_nce;
        case LossKind::st_obj: return built.parts.st_obj;
        case LossKind::dfm: return built.parts.dfm;
        case LossKind::total: return built.total;
    }
    return built.total;
}

double eval_loss(ModelState& model, const Batch& batch, LossKind kind) {
    Tape t(Precision::f64);
    const BoundModel bound = bind_model(t, model, TrainableGroups::none());
    const BuiltLosses built = build_losses(t, bound, batch, 3);
    return t.value(pick(built, kind))(0, 0);
}

}  // namespace

GradCheckReport model_grad_check(const ModelState& model, const Batch& batch, LossKind kind, double step, double tol) {
    ModelState work = model;
    work.config.precision = Precision::f64;

    // Analytic gradients from one tape pass.
    std::map<std::string, Matrix> analytic;
    {
        Tape t(Precision::f64);
        const BoundModel bound = bind_model(t, work, TrainableGroups::all());
        const BuiltLosses built = build_losses(t, bound, batch, 3);
        t.backward(pick(built, kind));
        collect_gradients(t, bound, [&analytic](const std::string& name, const Matrix& g, ParamGroup) {
            analytic[name] = g;
        });
    }

    GradCheckReport report;
    report.tol = tol;
    report.step = step;
    visit_params(work, [&](const std::string& name, Matrix& value, ParamGroup) {
        GradCheckEntry entry;
        entry.param = name;
        const Matrix& grad = analytic.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value.data()[i];
            value.data()[i] = saved + step;
            const double up = eval_loss(work, batch, kind);
            value.data()[i] = saved - step;
            const double down = eval_loss(work, batch, kind);
            value.data()[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double ad = grad.data()[i];
            const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-3});
            entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(fd - ad) / denom);
        }
        entry.pass = entry.max_rel_err < tol;
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    });
    return report;
}

}  // namespace hope
