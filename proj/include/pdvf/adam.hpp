#pragma once

#include "pdvf/tensor.hpp"

namespace pdvf {

// Adam with bias correction. Moment buffers are keyed by tensor index, so one
// optimizer instance must stay with one ParamSet.
template <typename S>
class Adam {
public:
    explicit Adam(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    S lr() const { return lr_; }
    void set_lr(S lr) { lr_ = lr; }
    int64_t step_count() const { return step_; }

    // Applies one update from the gradients stored in params, then zeroes
    // them and increments the step counter.
    void step(ParamSet<S>& params) {
        if (m_.empty()) {
            for (const auto& t : params.tensors()) {
                m_.push_back(Mat<S>::Zero(t.value.rows(), t.value.cols()));
                v_.push_back(Mat<S>::Zero(t.value.rows(), t.value.cols()));
            }
        }
        require(m_.size() == params.size(), "Adam: parameter count changed");
        for (auto& t : params.tensors())
            require(t.grad.allFinite(), "Adam: non-finite gradient in tensor '",
                    t.name, "'");
        ++step_;
        S bc1 = S(1) - std::pow(beta1_, S(step_));
        S bc2 = S(1) - std::pow(beta2_, S(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& t = params.tensors()[i];
            m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * t.grad;
            v_[i] = beta2_ * v_[i] +
                    (S(1) - beta2_) * t.grad.cwiseProduct(t.grad);
            t.value.array() -= lr_ * (m_[i].array() / bc1) /
                               ((v_[i].array() / bc2).sqrt() + eps_);
            t.grad.setZero();
        }
    }

private:
    S lr_, beta1_, beta2_, eps_;
    int64_t step_ = 0;
    std::vector<Mat<S>> m_, v_;
};

// Global l2 gradient-norm clipping; returns the pre-clip norm.
template <typename S>
S clip_grad_norm(ParamSet<S>& params, S max_norm) {
    S sq = 0;
    for (const auto& t : params.tensors()) sq += t.grad.squaredNorm();
    S norm = std::sqrt(sq);
    if (max_norm > S(0) && norm > max_norm) {
        S scale = max_norm / (norm + S(1e-8));
        for (auto& t : params.tensors()) t.grad *= scale;
    }
    return norm;
}

}  // namespace pdvf
