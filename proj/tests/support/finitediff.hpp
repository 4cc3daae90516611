#pragma once

// Central finite-difference gradient oracle. Kept in test code on purpose:
// it must stay independent of the backward passes it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "ibsr/core/tensor.hpp"
#include "ibsr/nn/layers.hpp"

namespace ibsr::testing {

/// Relative error between two gradient vectors, measured on whole-vector
/// norms: ||fd - an|| / max(||fd||, ||an||, eps).
inline double grad_rel_error(const std::vector<double>& fd, const std::vector<double>& an) {
    double diff = 0, nfd = 0, nan = 0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        diff += (fd[i] - an[i]) * (fd[i] - an[i]);
        nfd += fd[i] * fd[i];
        nan += an[i] * an[i];
    }
    // The floor treats all-zero-vs-FD-noise comparisons as a match.
    const double denom = std::max(std::sqrt(std::max(nfd, nan)), 1e-8);
    return std::sqrt(diff) / denom;
}

/// Central differences over a flat tensor; `eval` recomputes the loss from
/// current tensor contents.
inline std::vector<double> fd_gradient(Tensor<double>& x, const std::function<double()>& eval,
                                       double h = 1e-5) {
    std::vector<double> g(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = eval();
        x[i] = keep - h;
        const double down = eval();
        x[i] = keep;
        g[static_cast<std::size_t>(i)] = (up - down) / (2 * h);
    }
    return g;
}

/// Checks an analytic gradient stored in a tensor against central differences.
inline double fd_check_tensor(Tensor<double>& x, const Tensor<double>& analytic,
                              const std::function<double()>& eval, double h = 1e-5) {
    const std::vector<double> fd = fd_gradient(x, eval, h);
    std::vector<double> an(static_cast<std::size_t>(analytic.size()));
    for (Eigen::Index i = 0; i < analytic.size(); ++i) an[static_cast<std::size_t>(i)] = analytic[i];
    return grad_rel_error(fd, an);
}

/// Checks parameter gradients of a module stack: caller must have already
/// accumulated analytic grads (param.grad); eval recomputes the scalar loss.
inline double fd_check_params(const std::vector<nn::Param<double>*>& params,
                              const std::function<double()>& eval, double h = 1e-5) {
    std::vector<double> fd, an;
    for (auto* p : params) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = eval();
            p->value[i] = keep - h;
            const double down = eval();
            p->value[i] = keep;
            fd.push_back((up - down) / (2 * h));
            an.push_back(p->grad[i]);
        }
    }
    return grad_rel_error(fd, an);
}

/// Same check over an evenly strided subsample of coordinates (still touching
/// every parameter tensor) for networks too large to probe exhaustively.
inline double fd_check_params_sampled(const std::vector<nn::Param<double>*>& params,
                                      const std::function<double()>& eval, int max_coords,
                                      double h = 1e-5) {
    Eigen::Index total = 0;
    for (auto* p : params) total += p->value.size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, total / max_coords);
    std::vector<double> fd, an;
    Eigen::Index cursor = 0;
    for (auto* p : params) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i, ++cursor) {
            if (cursor % stride != 0) continue;
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = eval();
            p->value[i] = keep - h;
            const double down = eval();
            p->value[i] = keep;
            fd.push_back((up - down) / (2 * h));
            an.push_back(p->grad[i]);
        }
    }
    return grad_rel_error(fd, an);
}

} // namespace ibsr::testing
