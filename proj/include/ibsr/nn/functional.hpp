#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "ibsr/core/error.hpp"

namespace ibsr::nn {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// Log-guard shared by every log()-of-probability in the code base.
template <typename S>
constexpr S kLogEps = S(1e-7);

template <typename S>
S safe_log(S p) {
    return std::log(p < kLogEps<S> ? kLogEps<S> : p);
}

/// L2 normalization f(x) = x / ||x||. A zero vector has no direction; callers
/// are expected to treat that as a hard error.
template <typename S>
Vec<S> l2_normalize(const Vec<S>& x) {
    const S n = x.norm();
    if (!(n > S(0))) raise(ErrorKind::Numeric, "l2_normalize: zero or non-finite vector");
    return x / n;
}

/// d(f(x))/dx applied to an upstream gradient g: (g - f (f.g)) / ||x||.
template <typename S>
Vec<S> l2_normalize_backward(const Vec<S>& x, const Vec<S>& g) {
    const S n = x.norm();
    if (!(n > S(0))) raise(ErrorKind::Numeric, "l2_normalize_backward: zero vector");
    const Vec<S> f = x / n;
    return (g - f * f.dot(g)) / n;
}

template <typename S>
Vec<S> softmax(const Vec<S>& logits) {
    const S m = logits.maxCoeff();
    Vec<S> e = (logits.array() - m).exp();
    return e / e.sum();
}

/// log softmax, numerically stable.
template <typename S>
Vec<S> log_softmax(const Vec<S>& logits) {
    const S m = logits.maxCoeff();
    const S lse = std::log((logits.array() - m).exp().sum()) + m;
    return logits.array() - lse;
}

/// Cross-entropy -log p[label]; optionally yields dlogits = softmax - onehot.
template <typename S>
S cross_entropy(const Vec<S>& logits, int label, Vec<S>* dlogits = nullptr) {
    if (label < 0 || label >= logits.size()) raise(ErrorKind::Validation, "cross_entropy: label out of range");
    const Vec<S> ls = log_softmax(logits);
    if (dlogits) {
        *dlogits = ls.array().exp();
        (*dlogits)[label] -= S(1);
    }
    return -ls[label];
}

/// Cross-entropy against a probability vector target (soft labels).
template <typename S>
S cross_entropy_soft(const Vec<S>& logits, const Vec<S>& target, Vec<S>* dlogits = nullptr) {
    const Vec<S> ls = log_softmax(logits);
    if (dlogits) *dlogits = ls.array().exp() - target.array();
    return -(target.array() * ls.array()).sum();
}

/// Softmax Jacobian-vector product: given y = softmax(x) and upstream dy,
/// returns dx = y .* (dy - y.dy).
template <typename S>
Vec<S> softmax_backward(const Vec<S>& y, const Vec<S>& dy) {
    const S dot = y.dot(dy);
    return (y.array() * (dy.array() - dot)).matrix();
}

} // namespace ibsr::nn
