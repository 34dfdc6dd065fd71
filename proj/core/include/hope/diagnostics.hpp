#pragma once

#include <cstdint>

#include "hope/grad_check.hpp"
#include "hope/model.hpp"

namespace hope {

enum class LossKind : std::uint8_t { spm, retrieval, info_nce, st_obj, dfm, total };

const char* loss_kind_name(LossKind kind);

// Finite-difference verification of one pipeline loss against the tape
// gradients of every trainable parameter. Runs the model at 64-bit
// precision regardless of its configured training precision.
GradCheckReport model_grad_check(const ModelState& model, const Batch& batch, LossKind kind, double step = 1e-5,
                                 double tol = 1e-4);

}  // namespace hope
