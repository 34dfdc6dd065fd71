#include "hope/adam.hpp"

#include <cmath>
#include <string>

#include "hope/errors.hpp"

namespace hope {

AdamState::AdamState(int rows, int cols, AdamConfig config) : config_(config), m_(rows, cols), v_(rows, cols) {}

void AdamState::step(Matrix& params, const Matrix& grads) {
    if (!params.same_shape(m_) || !grads.same_shape(m_)) {
        throw DimensionError("adam_step: parameter/gradient shape does not match state (" +
                             std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()) + ")");
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads.data()[i];
        m_.data()[i] = config_.beta1 * m_.data()[i] + (1.0 - config_.beta1) * g;
        v_.data()[i] = config_.beta2 * v_.data()[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m_.data()[i] / bc1;
        const double vhat = v_.data()[i] / bc2;
        params.data()[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
}

void AdamState::restore(Matrix m, Matrix v, std::uint64_t steps) {
    if (!m.same_shape(m_) || !v.same_shape(m_)) {
        throw DimensionError("adam restore: moment shape mismatch");
    }
    m_ = std::move(m);
    v_ = std::move(v);
    step_count_ = steps;
}

}  // namespace hope
