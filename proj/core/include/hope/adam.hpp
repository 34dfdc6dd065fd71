#pragma once

#include <cstdint>

#include "hope/matrix.hpp"

namespace hope {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter Adam state (Kingma & Ba update with bias correction).
class AdamState {
public:
    AdamState() = default;
    AdamState(int rows, int cols, AdamConfig config = {});

    // In-place update of params from grads. Shapes must match the state.
    void step(Matrix& params, const Matrix& grads);

    std::uint64_t steps() const { return step_count_; }
    const AdamConfig& config() const { return config_; }
    void set_lr(double lr) { config_.lr = lr; }
    const Matrix& first_moment() const { return m_; }
    const Matrix& second_moment() const { return v_; }

    // Checkpoint restore.
    void restore(Matrix m, Matrix v, std::uint64_t steps);

private:
    AdamConfig config_;
    Matrix m_;
    Matrix v_;
    std::uint64_t step_count_ = 0;
};

}  // namespace hope
