#include "hope/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace hope {

namespace {

double eval_loss(const LossBuilder& build, const std::vector<NamedParam>& params) {
    Tape t(Precision::f64);
    std::vector<Tape::NodeId> ids;
    ids.reserve(params.size());
    for (const NamedParam& p : params) ids.push_back(t.constant(p.value));
    return t.value(build(t, ids))(0, 0);
}

}  // namespace

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const GradCheckEntry& e : entries) w = std::max(w, e.max_rel_err);
    return w;
}

GradCheckReport grad_check(const LossBuilder& build, const std::vector<NamedParam>& params, double step, double tol) {
    GradCheckReport report;
    report.tol = tol;
    report.step = step;

    // Analytic gradients from one tape pass.
    Tape t(Precision::f64);
    std::vector<Tape::NodeId> ids;
    ids.reserve(params.size());
    for (const NamedParam& p : params) ids.push_back(t.leaf(p.value, true));
    const Tape::NodeId loss = build(t, ids);
    t.backward(loss);
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Tape::NodeId id : ids) analytic.push_back(t.gradient(id));

    std::vector<NamedParam> work = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        GradCheckEntry entry;
        entry.param = params[p].name;
        Matrix& target = work[p].value;
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double saved = target.data()[i];
            target.data()[i] = saved + step;
            const double up = eval_loss(build, work);
            target.data()[i] = saved - step;
            const double down = eval_loss(build, work);
            target.data()[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double ad = analytic[p].data()[i];
            const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-3});
            entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(fd - ad) / denom);
        }
        entry.pass = entry.max_rel_err < tol;
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace hope
