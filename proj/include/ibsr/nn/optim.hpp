#pragma once

#include <cmath>
#include <vector>

#include "ibsr/nn/layers.hpp"

namespace ibsr::nn {

/// Adaptive-moment optimizer. State tensors are exposed for checkpointing so
/// an interrupted run resumes bit-exactly.
template <typename S>
class Adam {
public:
    Adam(std::vector<Param<S>*> params, S lr, S beta1, S beta2, S eps = S(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(Tensor<S>::zeros(p->value.dims()));
            v_.push_back(Tensor<S>::zeros(p->value.dims()));
        }
    }

    void set_lr(S lr) { lr_ = lr; }

    void step() {
        ++t_;
        const S bc1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
        const S bc2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto g = params_[i]->grad.carray();
            m_[i].array() = beta1_ * m_[i].carray() + (S(1) - beta1_) * g;
            v_[i].array() = beta2_ * v_[i].carray() + (S(1) - beta2_) * g.square();
            params_[i]->value.array() -=
                lr_ * (m_[i].carray() / bc1) / ((v_[i].carray() / bc2).sqrt() + eps_);
        }
    }

    long step_count() const { return t_; }
    void set_step_count(long t) { t_ = t; }
    std::vector<Tensor<S>>& moment1() { return m_; }
    std::vector<Tensor<S>>& moment2() { return v_; }
    const std::vector<Param<S>*>& params() const { return params_; }

private:
    std::vector<Param<S>*> params_;
    std::vector<Tensor<S>> m_;
    std::vector<Tensor<S>> v_;
    S lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

/// SGD with classical momentum and decoupled-from-nothing weight decay folded
/// into the gradient (g <- g + wd * theta), matching the usual conv-net recipe.
template <typename S>
class Sgd {
public:
    Sgd(std::vector<Param<S>*> params, S lr, S momentum, S weight_decay)
        : params_(std::move(params)), lr_(lr), momentum_(momentum), wd_(weight_decay) {
        for (auto* p : params_) buf_.push_back(Tensor<S>::zeros(p->value.dims()));
    }

    void set_lr(S lr) { lr_ = lr; }
    S lr() const { return lr_; }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto g = params_[i]->grad.carray();
            buf_[i].array() = momentum_ * buf_[i].carray() + g + wd_ * params_[i]->value.carray();
            params_[i]->value.array() -= lr_ * buf_[i].carray();
        }
    }

    std::vector<Tensor<S>>& momentum_buffers() { return buf_; }
    const std::vector<Param<S>*>& params() const { return params_; }

private:
    std::vector<Param<S>*> params_;
    std::vector<Tensor<S>> buf_;
    S lr_, momentum_, wd_;
};

/// Learning-rate schedule: constant for `hold` epochs, then linear to zero
/// over the remaining `total - hold` epochs. Epochs are 0-based.
inline double lr_at_epoch(double base_lr, int epoch, int total_epochs, int hold_epochs) {
    if (epoch < hold_epochs) return base_lr;
    const int decay_span = total_epochs - hold_epochs;
    if (decay_span <= 0) return base_lr;
    const int into = epoch - hold_epochs;
    const double f = 1.0 - static_cast<double>(into) / static_cast<double>(decay_span);
    return base_lr * (f < 0.0 ? 0.0 : f);
}

} // namespace ibsr::nn
