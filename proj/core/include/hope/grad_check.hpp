#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hope/matrix.hpp"
#include "hope/tape.hpp"

namespace hope {

// A named parameter block handed to a loss builder.
struct NamedParam {
    std::string name;
    Matrix value;
};

// Builds a scalar loss node from parameter leaves. The builder must be
// deterministic: grad_check calls it repeatedly with perturbed values.
using LossBuilder = std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    double step = 0.0;
    bool pass = true;
    double worst() const;
};

// Compares tape gradients against central finite differences
// (f(x+h) - f(x-h)) / 2h for every entry of every parameter. Relative error
// uses an absolute floor of 1e-3 in the denominator so finite-difference
// noise on near-zero gradients does not read as failure. Always runs at
// 64-bit precision.
GradCheckReport grad_check(const LossBuilder& build, const std::vector<NamedParam>& params, double step = 1e-5,
                           double tol = 1e-4);

}  // namespace hope
