#pragma once

#include "lwp/matrix.hpp"

#include <span>
#include <vector>

namespace lwp::train {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Moments are allocated on the first step and must keep their shapes.
class Adam {
public:
    explicit Adam(AdamOptions opts = {});

    void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

    std::size_t steps() const { return t_; }
    const AdamOptions& options() const { return opts_; }
    const std::vector<Matrix>& first_moments() const { return m_; }
    const std::vector<Matrix>& second_moments() const { return v_; }

private:
    AdamOptions opts_;
    std::size_t t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace lwp::train
