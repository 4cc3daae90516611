#pragma once

#include <Eigen/Core>

#include <array>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ibsr/core/rng.hpp"

namespace ibsr {

/// Dense tensor of rank <= 4, row-major, Eigen-backed. Images are stored CHW.
/// Elementwise math goes through array()/carray(); matrix products through
/// the Map helpers below.
template <typename Scalar>
class Tensor {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Tensor() = default;

    explicit Tensor(std::vector<int> dims) { reshape_storage(dims); }

    Tensor(std::initializer_list<int> dims) { reshape_storage(std::vector<int>(dims)); }

    static Tensor zeros(std::vector<int> dims) {
        Tensor t(std::move(dims));
        t.v_.setZero();
        return t;
    }

    static Tensor constant(std::vector<int> dims, Scalar value) {
        Tensor t(std::move(dims));
        t.v_.setConstant(value);
        return t;
    }

    static Tensor uniform(std::vector<int> dims, Rng& rng, Scalar lo, Scalar hi) {
        Tensor t(std::move(dims));
        for (Eigen::Index i = 0; i < t.v_.size(); ++i)
            t.v_[i] = static_cast<Scalar>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        return t;
    }

    static Tensor normal(std::vector<int> dims, Rng& rng, Scalar stddev = Scalar(1)) {
        Tensor t(std::move(dims));
        for (Eigen::Index i = 0; i < t.v_.size(); ++i)
            t.v_[i] = static_cast<Scalar>(rng.normal() * static_cast<double>(stddev));
        return t;
    }

    int rank() const { return rank_; }
    int dim(int i) const { return dim_[static_cast<std::size_t>(i)]; }
    Eigen::Index size() const { return v_.size(); }
    bool empty() const { return v_.size() == 0; }

    std::vector<int> dims() const {
        return std::vector<int>(dim_.begin(), dim_.begin() + rank_);
    }

    bool same_dims(const Tensor& o) const { return rank_ == o.rank_ && dim_ == o.dim_; }

    Scalar* data() { return v_.data(); }
    const Scalar* data() const { return v_.data(); }

    Scalar& operator[](Eigen::Index i) { return v_[i]; }
    Scalar operator[](Eigen::Index i) const { return v_[i]; }

    // CHW access for rank-3 tensors.
    Scalar& operator()(int c, int h, int w) {
        assert(rank_ == 3);
        return v_[(static_cast<Eigen::Index>(c) * dim_[1] + h) * dim_[2] + w];
    }
    Scalar operator()(int c, int h, int w) const {
        assert(rank_ == 3);
        return v_[(static_cast<Eigen::Index>(c) * dim_[1] + h) * dim_[2] + w];
    }

    Scalar& operator()(int i, int j) {
        assert(rank_ == 2);
        return v_[static_cast<Eigen::Index>(i) * dim_[1] + j];
    }
    Scalar operator()(int i, int j) const {
        assert(rank_ == 2);
        return v_[static_cast<Eigen::Index>(i) * dim_[1] + j];
    }

    Eigen::Map<Storage> array() { return Eigen::Map<Storage>(v_.data(), v_.size()); }
    Eigen::Map<const Storage> carray() const { return Eigen::Map<const Storage>(v_.data(), v_.size()); }

    /// Row-major matrix view of the flat storage.
    auto matrix(Eigen::Index rows, Eigen::Index cols) {
        assert(rows * cols == v_.size());
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v_.data(), rows, cols);
    }
    auto cmatrix(Eigen::Index rows, Eigen::Index cols) const {
        assert(rows * cols == v_.size());
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v_.data(), rows, cols);
    }

    auto vector() {
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(v_.data(), v_.size());
    }
    auto cvector() const {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(v_.data(), v_.size());
    }

    void set_zero() { v_.setZero(); }
    void fill(Scalar x) { v_.setConstant(x); }

    /// Reinterpret the flat storage with new dims (size must match).
    Tensor reshaped(std::vector<int> dims) const {
        Tensor t = *this;
        Eigen::Index n = 1;
        for (int d : dims) n *= d;
        if (n != v_.size()) throw std::runtime_error("tensor reshape: size mismatch");
        t.rank_ = static_cast<int>(dims.size());
        t.dim_ = {1, 1, 1, 1};
        for (std::size_t i = 0; i < dims.size(); ++i) t.dim_[i] = dims[i];
        return t;
    }

    bool all_finite() const { return v_.isFinite().all(); }

    template <typename T2>
    Tensor<T2> cast() const {
        Tensor<T2> out(dims());
        for (Eigen::Index i = 0; i < v_.size(); ++i) out[i] = static_cast<T2>(v_[i]);
        return out;
    }

private:
    void reshape_storage(const std::vector<int>& dims) {
        if (dims.empty() || dims.size() > 4) throw std::runtime_error("tensor rank must be 1..4");
        rank_ = static_cast<int>(dims.size());
        dim_ = {1, 1, 1, 1};
        Eigen::Index n = 1;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (dims[i] <= 0) throw std::runtime_error("tensor dims must be positive");
            dim_[i] = dims[i];
            n *= dims[i];
        }
        v_.resize(n);
    }

    std::array<int, 4> dim_{1, 1, 1, 1};
    int rank_ = 0;
    Storage v_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Channel concatenation of rank-3 CHW tensors with equal spatial size.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    assert(a.rank() == 3 && b.rank() == 3);
    assert(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2));
    Tensor<S> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

/// Splits a gradient produced against concat_channels(a, b) back into parts.
template <typename S>
void split_channels(const Tensor<S>& g, Tensor<S>& ga, Tensor<S>& gb) {
    std::copy(g.data(), g.data() + ga.size(), ga.data());
    std::copy(g.data() + ga.size(), g.data() + g.size(), gb.data());
}

} // namespace ibsr
