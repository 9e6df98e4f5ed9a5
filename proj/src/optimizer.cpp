#include "lwp/optimizer.hpp"

#include "lwp/errors.hpp"

#include <cmath>

namespace lwp::train {

Adam::Adam(AdamOptions opts) : opts_(opts) {
    if (!(opts_.lr > 0.0)) throw ValueError("Adam: lr must be positive");
    if (!(opts_.beta1 >= 0.0 && opts_.beta1 < 1.0) || !(opts_.beta2 >= 0.0 && opts_.beta2 < 1.0)) {
        throw ValueError("Adam: betas must lie in [0, 1)");
    }
    if (!(opts_.epsilon > 0.0)) throw ValueError("Adam: epsilon must be positive");
}

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient counts differ");
    if (m_.empty()) {
        for (const Matrix* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: parameter count changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(grads[i]) || !m_[i].same_shape(grads[i])) {
            throw ShapeError("Adam: shape mismatch at parameter " + std::to_string(i));
        }
        auto p = params[i]->data();
        auto g = grads[i].data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g[k];
            v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g[k] * g[k];
            p[k] -= opts_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opts_.epsilon);
        }
    }
}

}  // namespace lwp::train
