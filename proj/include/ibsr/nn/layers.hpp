#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ibsr/core/error.hpp"
#include "ibsr/core/rng.hpp"
#include "ibsr/core/tensor.hpp"

namespace ibsr::nn {

/// One learnable tensor with its gradient accumulator.
template <typename S>
struct Param {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;

    Param(std::string n, Tensor<S> v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor<S>::zeros(value.dims());
    }
};

/// Base class for differentiable layers.
///
/// Discipline: forward(x, cache=true) stores whatever backward needs; backward
/// must then be called before the next cached forward on the same module.
/// Passes that only need values (generation, indexing, evaluation) use
/// cache=false and keep no state. Parameter gradients accumulate across
/// backward calls until zero_grad().
template <typename S>
class Module {
public:
    virtual ~Module() = default;
    virtual Tensor<S> forward(const Tensor<S>& x, bool cache) = 0;
    virtual Tensor<S> backward(const Tensor<S>& dy) = 0;
    virtual void collect(std::vector<Param<S>*>& out) {}
};

template <typename S>
void zero_grads(std::vector<Param<S>*>& params) {
    for (auto* p : params) p->grad.set_zero();
}

namespace detail {

template <typename S>
Tensor<S> he_normal(std::vector<int> dims, int fan_in, Rng& rng) {
    return Tensor<S>::normal(std::move(dims), rng, static_cast<S>(std::sqrt(2.0 / fan_in)));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

template <typename S>
class Conv2d : public Module<S> {
public:
    Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad, Rng& rng)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad),
          w_(name + ".w", detail::he_normal<S>({out_c, in_c, k, k}, in_c * k * k, rng)),
          b_(name + ".b", Tensor<S>::zeros({out_c})) {}

    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        check_input(x);
        const int oh = out_size(x.dim(1)), ow = out_size(x.dim(2));
        if (oh <= 0 || ow <= 0) raise(ErrorKind::Validation, "conv output would be empty");
        Tensor<S> y({out_c_, oh, ow});
        Mat cols = im2col(x, oh, ow);
        y.matrix(out_c_, static_cast<Eigen::Index>(oh) * ow).noalias() =
            w_.value.cmatrix(out_c_, kk()) * cols;
        auto ymat = y.matrix(out_c_, static_cast<Eigen::Index>(oh) * ow);
        ymat.colwise() += b_.value.cvector();
        if (cache) x_ = x;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const int oh = dy.dim(1), ow = dy.dim(2);
        const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
        Mat cols = im2col(x_, oh, ow); // recomputed; cheaper than caching K x P
        auto dymat = dy.cmatrix(out_c_, p);
        w_.grad.matrix(out_c_, kk()).noalias() += dymat * cols.transpose();
        b_.grad.vector().noalias() += dymat.rowwise().sum();
        Mat dcols(kk(), p);
        dcols.noalias() = w_.value.cmatrix(out_c_, kk()).transpose() * dymat;
        return col2im(dcols, oh, ow);
    }

    void collect(std::vector<Param<S>*>& out) override {
        out.push_back(&w_);
        out.push_back(&b_);
    }

    int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

private:
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

    Eigen::Index kk() const { return static_cast<Eigen::Index>(in_c_) * k_ * k_; }

    void check_input(const Tensor<S>& x) const {
        if (x.rank() != 3 || x.dim(0) != in_c_)
            raise(ErrorKind::Validation, "conv input channel mismatch");
    }

    Mat im2col(const Tensor<S>& x, int oh, int ow) const {
        const int h = x.dim(1), w = x.dim(2);
        Mat cols(kk(), static_cast<Eigen::Index>(oh) * ow);
        cols.setZero();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                S* col = cols.col(static_cast<Eigen::Index>(oy) * ow + ox).data();
                Eigen::Index r = 0;
                for (int c = 0; c < in_c_; ++c) {
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h) {
                            r += k_;
                            continue;
                        }
                        for (int kx = 0; kx < k_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < w) col[r] = x(c, iy, ix);
                        }
                    }
                }
            }
        }
        return cols;
    }

    Tensor<S> col2im(const Mat& dcols, int oh, int ow) const {
        Tensor<S> dx = Tensor<S>::zeros(x_.dims());
        const int h = dx.dim(1), w = dx.dim(2);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const S* col = dcols.col(static_cast<Eigen::Index>(oy) * ow + ox).data();
                Eigen::Index r = 0;
                for (int c = 0; c < in_c_; ++c) {
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < k_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < w) dx(c, iy, ix) += col[r];
                        }
                    }
                }
            }
        }
        return dx;
    }

    int in_c_, out_c_, k_, stride_, pad_;
    Param<S> w_, b_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------
// Group normalization (per-sample; covers instance/layer norm as extremes)
// ---------------------------------------------------------------------------

template <typename S>
class GroupNorm : public Module<S> {
public:
    GroupNorm(std::string name, int channels, int groups)
        : c_(channels), g_(groups),
          gamma_(name + ".g", Tensor<S>::constant({channels}, S(1))),
          beta_(name + ".b", Tensor<S>::zeros({channels})) {
        if (channels % groups != 0) raise(ErrorKind::Validation, "groupnorm: channels % groups != 0");
    }

    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        if (x.rank() != 3 || x.dim(0) != c_) raise(ErrorKind::Validation, "groupnorm channel mismatch");
        const int h = x.dim(1), w = x.dim(2);
        const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
        const int cg = c_ / g_;
        const Eigen::Index n = cg * hw;
        Tensor<S> xhat(x.dims());
        std::vector<S> invstd(static_cast<std::size_t>(g_));
        for (int gi = 0; gi < g_; ++gi) {
            Eigen::Map<const typename Tensor<S>::Storage> seg(x.data() + gi * n, n);
            const S mean = seg.mean();
            const S var = (seg - mean).square().mean();
            const S is = S(1) / std::sqrt(var + eps_);
            invstd[static_cast<std::size_t>(gi)] = is;
            Eigen::Map<typename Tensor<S>::Storage>(xhat.data() + gi * n, n) = (seg - mean) * is;
        }
        Tensor<S> y(x.dims());
        for (int c = 0; c < c_; ++c)
            Eigen::Map<typename Tensor<S>::Storage>(y.data() + c * hw, hw) =
                Eigen::Map<const typename Tensor<S>::Storage>(xhat.data() + c * hw, hw) * gamma_.value[c] +
                beta_.value[c];
        if (cache) {
            xhat_ = xhat;
            invstd_ = std::move(invstd);
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const int h = dy.dim(1), w = dy.dim(2);
        const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
        const int cg = c_ / g_;
        const Eigen::Index n = cg * hw;
        Tensor<S> dxhat(dy.dims());
        for (int c = 0; c < c_; ++c) {
            Eigen::Map<const typename Tensor<S>::Storage> dyc(dy.data() + c * hw, hw);
            Eigen::Map<const typename Tensor<S>::Storage> xhc(xhat_.data() + c * hw, hw);
            gamma_.grad[c] += (dyc * xhc).sum();
            beta_.grad[c] += dyc.sum();
            Eigen::Map<typename Tensor<S>::Storage>(dxhat.data() + c * hw, hw) = dyc * gamma_.value[c];
        }
        Tensor<S> dx(dy.dims());
        for (int gi = 0; gi < g_; ++gi) {
            Eigen::Map<const typename Tensor<S>::Storage> dxh(dxhat.data() + gi * n, n);
            Eigen::Map<const typename Tensor<S>::Storage> xh(xhat_.data() + gi * n, n);
            const S m1 = dxh.mean();
            const S m2 = (dxh * xh).mean();
            Eigen::Map<typename Tensor<S>::Storage>(dx.data() + gi * n, n) =
                (dxh - m1 - xh * m2) * invstd_[static_cast<std::size_t>(gi)];
        }
        return dx;
    }

    void collect(std::vector<Param<S>*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

private:
    static constexpr S eps_ = S(1e-5);
    int c_, g_;
    Param<S> gamma_, beta_;
    Tensor<S> xhat_;
    std::vector<S> invstd_;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename S>
class ReLU : public Module<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        Tensor<S> y(x.dims());
        y.array() = x.carray().max(S(0));
        if (cache) x_ = x;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx(dy.dims());
        dx.array() = dy.carray() * (x_.carray() > S(0)).template cast<S>();
        return dx;
    }

private:
    Tensor<S> x_;
};

template <typename S>
class LeakyReLU : public Module<S> {
public:
    explicit LeakyReLU(S slope = S(0.2)) : slope_(slope) {}
    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        Tensor<S> y(x.dims());
        y.array() = x.carray().max(x.carray() * slope_);
        if (cache) x_ = x;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx(dy.dims());
        dx.array() = dy.carray() *
                     ((x_.carray() > S(0)).template cast<S>() * (S(1) - slope_) + slope_);
        return dx;
    }

private:
    S slope_;
    Tensor<S> x_;
};

template <typename S>
class Sigmoid : public Module<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        Tensor<S> y(x.dims());
        // Stable in both tails.
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const S v = x[i];
            y[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                             : std::exp(v) / (S(1) + std::exp(v));
        }
        if (cache) y_ = y;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx(dy.dims());
        dx.array() = dy.carray() * y_.carray() * (S(1) - y_.carray());
        return dx;
    }

private:
    Tensor<S> y_;
};

template <typename S>
class Tanh : public Module<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        Tensor<S> y(x.dims());
        y.array() = x.carray().tanh();
        if (cache) y_ = y;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx(dy.dims());
        dx.array() = dy.carray() * (S(1) - y_.carray().square());
        return dx;
    }

private:
    Tensor<S> y_;
};

// ---------------------------------------------------------------------------
// Resampling and pooling
// ---------------------------------------------------------------------------

template <typename S>
class UpsampleNearest2 : public Module<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
        Tensor<S> y({c, h * 2, w * 2});
        for (int ci = 0; ci < c; ++ci)
            for (int yy = 0; yy < h * 2; ++yy)
                for (int xx = 0; xx < w * 2; ++xx) y(ci, yy, xx) = x(ci, yy / 2, xx / 2);
        (void)cache;
        dims_ = x.dims();
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx = Tensor<S>::zeros(dims_);
        const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
        for (int ci = 0; ci < c; ++ci)
            for (int yy = 0; yy < h * 2; ++yy)
                for (int xx = 0; xx < w * 2; ++xx) dx(ci, yy / 2, xx / 2) += dy(ci, yy, xx);
        return dx;
    }

private:
    std::vector<int> dims_;
};

template <typename S>
class GlobalAvgPool : public Module<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        const int c = x.dim(0);
        const Eigen::Index hw = static_cast<Eigen::Index>(x.dim(1)) * x.dim(2);
        Tensor<S> y({c});
        for (int ci = 0; ci < c; ++ci)
            y[ci] = Eigen::Map<const typename Tensor<S>::Storage>(x.data() + ci * hw, hw).mean();
        (void)cache;
        dims_ = x.dims();
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx(dims_);
        const int c = dx.dim(0);
        const Eigen::Index hw = static_cast<Eigen::Index>(dx.dim(1)) * dx.dim(2);
        for (int ci = 0; ci < c; ++ci)
            Eigen::Map<typename Tensor<S>::Storage>(dx.data() + ci * hw, hw).setConstant(dy[ci] / static_cast<S>(hw));
        return dx;
    }

private:
    std::vector<int> dims_;
};

/// 2x average downsampling as a free pair (used on discriminator inputs).
template <typename S>
Tensor<S> downsample2_avg(const Tensor<S>& x) {
    const int c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor<S> y({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                y(ci, yy, xx) = (x(ci, 2 * yy, 2 * xx) + x(ci, 2 * yy, 2 * xx + 1) +
                                 x(ci, 2 * yy + 1, 2 * xx) + x(ci, 2 * yy + 1, 2 * xx + 1)) / S(4);
    return y;
}

template <typename S>
void downsample2_avg_backward(const Tensor<S>& dy, Tensor<S>& dx_accum) {
    const int c = dy.dim(0), h = dy.dim(1), w = dy.dim(2);
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const S g = dy(ci, yy, xx) / S(4);
                dx_accum(ci, 2 * yy, 2 * xx) += g;
                dx_accum(ci, 2 * yy, 2 * xx + 1) += g;
                dx_accum(ci, 2 * yy + 1, 2 * xx) += g;
                dx_accum(ci, 2 * yy + 1, 2 * xx + 1) += g;
            }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

template <typename S>
class Linear : public Module<S> {
public:
    Linear(std::string name, int in, int out, Rng& rng)
        : in_(in), out_(out),
          w_(name + ".w", Tensor<S>::normal({out, in}, rng, static_cast<S>(std::sqrt(1.0 / in)))),
          b_(name + ".b", Tensor<S>::zeros({out})) {}

    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        if (x.size() != in_) raise(ErrorKind::Validation, "linear input size mismatch");
        Tensor<S> y({out_});
        y.vector().noalias() = w_.value.cmatrix(out_, in_) * x.cvector() + b_.value.cvector();
        if (cache) x_ = x;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        w_.grad.matrix(out_, in_).noalias() += dy.cvector() * x_.cvector().transpose();
        b_.grad.vector().noalias() += dy.cvector();
        Tensor<S> dx(x_.dims());
        dx.vector().noalias() = w_.value.cmatrix(out_, in_).transpose() * dy.cvector();
        return dx;
    }

    void collect(std::vector<Param<S>*>& out) override {
        out.push_back(&w_);
        out.push_back(&b_);
    }

private:
    int in_, out_;
    Param<S> w_, b_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------

template <typename S>
class Sequential : public Module<S> {
public:
    Sequential() = default;

    template <typename M, typename... Args>
    M& emplace(Args&&... args) {
        auto m = std::make_unique<M>(std::forward<Args>(args)...);
        M& ref = *m;
        mods_.push_back(std::move(m));
        return ref;
    }

    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        Tensor<S> h = x;
        for (auto& m : mods_) h = m->forward(h, cache);
        return h;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> g = dy;
        for (auto it = mods_.rbegin(); it != mods_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    void collect(std::vector<Param<S>*>& out) override {
        for (auto& m : mods_) m->collect(out);
    }

private:
    std::vector<std::unique_ptr<Module<S>>> mods_;
};

} // namespace ibsr::nn
