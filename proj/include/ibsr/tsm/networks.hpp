#pragma once

#include <array>
#include <string>
#include <vector>

#include "ibsr/nn/blocks.hpp"
#include "ibsr/nn/functional.hpp"
#include "ibsr/nn/layers.hpp"

namespace ibsr::tsm {

/// Architecture knobs for the texture synthesis stack. Defaults follow the
/// full-scale recipe; tests shrink image_size and widths.
struct TsmConfig {
    int image_size = 256;
    int z_dim = 8;
    int num_categories = 3;
    int gen_width = 32;
    int enc_width = 24;
    int disc_width = 24;
    int est_width = 16;
};

/// Texture encoder E: stem conv, five residual blocks, global pooling and a
/// linear head emitting (mu, logvar). logvar is clamped to [-10, 10].
template <typename S>
class TextureEncoder {
public:
    TextureEncoder(const TsmConfig& cfg, Rng& rng) : z_(cfg.z_dim) {
        const int w = cfg.enc_width;
        trunk_.template emplace<nn::Conv2d<S>>("E.stem", 3, w, 3, 2, 1, rng);
        trunk_.template emplace<nn::GroupNorm<S>>("E.stemn", w, nn::ResidualBlock<S>::norm_groups(w));
        trunk_.template emplace<nn::ReLU<S>>();
        trunk_.template emplace<nn::ResidualBlock<S>>("E.r0", w, w, 2, rng);
        trunk_.template emplace<nn::ResidualBlock<S>>("E.r1", w, w, 1, rng);
        trunk_.template emplace<nn::ResidualBlock<S>>("E.r2", w, 2 * w, 2, rng);
        trunk_.template emplace<nn::ResidualBlock<S>>("E.r3", 2 * w, 2 * w, 1, rng);
        trunk_.template emplace<nn::ResidualBlock<S>>("E.r4", 2 * w, 2 * w, 1, rng);
        trunk_.template emplace<nn::GlobalAvgPool<S>>();
        head_ = std::make_unique<nn::Linear<S>>("E.head", 2 * w, 2 * cfg.z_dim, rng);
    }

    struct Output {
        Tensor<S> mu;     // {z}
        Tensor<S> logvar; // {z}, clamped
    };

    Output forward(const Tensor<S>& image, bool cache) {
        Tensor<S> h = head_->forward(trunk_.forward(image, cache), cache);
        Output out;
        out.mu = Tensor<S>({z_});
        out.logvar = Tensor<S>({z_});
        if (cache) clamp_pass_.assign(static_cast<std::size_t>(z_), S(1));
        for (int i = 0; i < z_; ++i) {
            out.mu[i] = h[i];
            S lv = h[z_ + i];
            if (lv < S(-10)) {
                lv = S(-10);
                if (cache) clamp_pass_[static_cast<std::size_t>(i)] = S(0);
            } else if (lv > S(10)) {
                lv = S(10);
                if (cache) clamp_pass_[static_cast<std::size_t>(i)] = S(0);
            }
            out.logvar[i] = lv;
        }
        if (!out.mu.all_finite() || !out.logvar.all_finite())
            raise(ErrorKind::Numeric, "texture encoder produced non-finite output");
        return out;
    }

    void backward(const Tensor<S>& dmu, const Tensor<S>& dlogvar) {
        Tensor<S> dh({2 * z_});
        for (int i = 0; i < z_; ++i) {
            dh[i] = dmu[i];
            dh[z_ + i] = dlogvar[i] * clamp_pass_[static_cast<std::size_t>(i)];
        }
        trunk_.backward(head_->backward(dh));
    }

    void collect(std::vector<nn::Param<S>*>& out) {
        trunk_.collect(out);
        head_->collect(out);
    }

private:
    int z_;
    nn::Sequential<S> trunk_;
    std::unique_ptr<nn::Linear<S>> head_;
    std::vector<S> clamp_pass_;
};

/// Reparameterized sample z = mu + exp(0.5 logvar) .* eps, eps ~ N(0, I).
template <typename S>
Tensor<S> sample_latent(const Tensor<S>& mu, const Tensor<S>& logvar, Rng& rng, Tensor<S>* eps_out = nullptr) {
    if (!mu.same_dims(logvar)) raise(ErrorKind::Validation, "sample_latent: shape mismatch");
    Tensor<S> z(mu.dims());
    Tensor<S> eps(mu.dims());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        eps[i] = static_cast<S>(rng.normal());
        z[i] = mu[i] + std::exp(S(0.5) * logvar[i]) * eps[i];
    }
    if (eps_out) *eps_out = eps;
    return z;
}

/// Gradients of a sampled z back to (mu, logvar).
template <typename S>
void sample_latent_backward(const Tensor<S>& dz, const Tensor<S>& logvar, const Tensor<S>& eps,
                            Tensor<S>& dmu, Tensor<S>& dlogvar) {
    for (Eigen::Index i = 0; i < dz.size(); ++i) {
        dmu[i] += dz[i];
        dlogvar[i] += dz[i] * eps[i] * S(0.5) * std::exp(S(0.5) * logvar[i]);
    }
}

/// U-Net texture generator G(S, z, c). The codes are broadcast as constant
/// channels into every decoder level. Output is sigmoid-bounded and matches
/// the input spatial size.
template <typename S>
class TextureGenerator {
public:
    TextureGenerator(const TsmConfig& cfg, Rng& rng) : z_(cfg.z_dim), c_(cfg.num_categories) {
        const int w = cfg.gen_width;
        const int code = z_ + c_;
        e0_ = make_block("G.e0", 3, w, 1, rng);
        e1_ = make_block("G.e1", w, 2 * w, 2, rng);
        e2_ = make_block("G.e2", 2 * w, 4 * w, 2, rng);
        bott_ = make_block("G.bt", 4 * w, 4 * w, 2, rng);
        d2_ = make_block("G.d2", 4 * w + 4 * w + code, 2 * w, 1, rng);
        d1_ = make_block("G.d1", 2 * w + 2 * w + code, w, 1, rng);
        d0_ = make_block("G.d0", w + w + code, w, 1, rng);
        out_conv_ = std::make_unique<nn::Conv2d<S>>("G.out", w, 3, 3, 1, 1, rng);
    }

    Tensor<S> forward(const Tensor<S>& normal_map, const Tensor<S>& z, const Tensor<S>& c, bool cache) {
        if (z.size() != z_) raise(ErrorKind::Validation, "generator: z length mismatch");
        if (c.size() != c_) raise(ErrorKind::Validation, "generator: c length mismatch");
        if (normal_map.rank() != 3 || normal_map.dim(0) != 3)
            raise(ErrorKind::Validation, "generator: normal map must be (3,H,W)");
        if (normal_map.dim(1) % 8 != 0 || normal_map.dim(2) % 8 != 0)
            raise(ErrorKind::Validation, "generator: spatial size must be a multiple of 8");

        Tensor<S> x0 = e0_->forward(normal_map, cache);
        Tensor<S> x1 = e1_->forward(x0, cache);
        Tensor<S> x2 = e2_->forward(x1, cache);
        Tensor<S> b = bott_->forward(x2, cache);

        Tensor<S> u2 = up2_.forward(b, cache);
        Tensor<S> in2 = concat_code(concat_channels(u2, x2), z, c);
        Tensor<S> y2 = d2_->forward(in2, cache);

        Tensor<S> u1 = up1_.forward(y2, cache);
        Tensor<S> in1 = concat_code(concat_channels(u1, x1), z, c);
        Tensor<S> y1 = d1_->forward(in1, cache);

        Tensor<S> u0 = up0_.forward(y1, cache);
        Tensor<S> in0 = concat_code(concat_channels(u0, x0), z, c);
        Tensor<S> y0 = d0_->forward(in0, cache);

        Tensor<S> img = sig_.forward(out_conv_->forward(y0, cache), cache);
        if (cache) {
            shape_u2_ = u2.dims();
            shape_x2_ = x2.dims();
            shape_u1_ = u1.dims();
            shape_x1_ = x1.dims();
            shape_u0_ = u0.dims();
            shape_x0_ = x0.dims();
        }
        return img;
    }

    struct CodeGrads {
        Tensor<S> dz;
        Tensor<S> dc;
    };

    /// Backpropagates an image gradient; parameter grads accumulate inside,
    /// code gradients are returned (the encoder needs dz).
    CodeGrads backward(const Tensor<S>& dimg) {
        CodeGrads grads{Tensor<S>::zeros({z_}), Tensor<S>::zeros({c_})};
        Tensor<S> dy0 = out_conv_->backward(sig_.backward(dimg));

        Tensor<S> din0 = d0_->backward(dy0);
        Tensor<S> du0(shape_u0_), dx0_skip(shape_x0_);
        split_code(din0, du0, dx0_skip, grads);
        Tensor<S> dy1 = up0_.backward(du0);

        Tensor<S> din1 = d1_->backward(dy1);
        Tensor<S> du1(shape_u1_), dx1_skip(shape_x1_);
        split_code(din1, du1, dx1_skip, grads);
        Tensor<S> dy2 = up1_.backward(du1);

        Tensor<S> din2 = d2_->backward(dy2);
        Tensor<S> du2(shape_u2_), dx2_skip(shape_x2_);
        split_code(din2, du2, dx2_skip, grads);
        Tensor<S> db = up2_.backward(du2);

        Tensor<S> dx2 = bott_->backward(db);
        dx2.array() += dx2_skip.carray();
        Tensor<S> dx1 = e2_->backward(dx2);
        dx1.array() += dx1_skip.carray();
        Tensor<S> dx0 = e1_->backward(dx1);
        dx0.array() += dx0_skip.carray();
        e0_->backward(dx0);
        return grads;
    }

    void collect(std::vector<nn::Param<S>*>& out) {
        e0_->collect(out);
        e1_->collect(out);
        e2_->collect(out);
        bott_->collect(out);
        d2_->collect(out);
        d1_->collect(out);
        d0_->collect(out);
        out_conv_->collect(out);
    }

    int z_dim() const { return z_; }
    int code_dim() const { return c_; }

private:
    std::unique_ptr<nn::Sequential<S>> make_block(const std::string& name, int in_c, int out_c,
                                                  int stride, Rng& rng) {
        auto block = std::make_unique<nn::Sequential<S>>();
        block->template emplace<nn::Conv2d<S>>(name + ".c", in_c, out_c, 3, stride, 1, rng);
        block->template emplace<nn::GroupNorm<S>>(name + ".n", out_c, nn::ResidualBlock<S>::norm_groups(out_c));
        block->template emplace<nn::LeakyReLU<S>>(S(0.2));
        return block;
    }

    Tensor<S> concat_code(const Tensor<S>& x, const Tensor<S>& z, const Tensor<S>& c) const {
        const int h = x.dim(1), w = x.dim(2);
        Tensor<S> out({x.dim(0) + z_ + c_, h, w});
        std::copy(x.data(), x.data() + x.size(), out.data());
        S* p = out.data() + x.size();
        for (int i = 0; i < z_; ++i, p += static_cast<std::size_t>(h) * w)
            std::fill(p, p + static_cast<std::size_t>(h) * w, z[i]);
        for (int i = 0; i < c_; ++i, p += static_cast<std::size_t>(h) * w)
            std::fill(p, p + static_cast<std::size_t>(h) * w, c[i]);
        return out;
    }

    /// Splits the gradient of a [features | skip | z | c] concat; code channel
    /// gradients reduce over spatial positions.
    void split_code(const Tensor<S>& din, Tensor<S>& dfeat, Tensor<S>& dskip, CodeGrads& grads) const {
        const int h = din.dim(1), w = din.dim(2);
        const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
        std::copy(din.data(), din.data() + dfeat.size(), dfeat.data());
        std::copy(din.data() + dfeat.size(), din.data() + dfeat.size() + dskip.size(), dskip.data());
        const S* p = din.data() + dfeat.size() + dskip.size();
        for (int i = 0; i < z_; ++i, p += hw)
            grads.dz[i] += Eigen::Map<const typename Tensor<S>::Storage>(p, hw).sum();
        for (int i = 0; i < c_; ++i, p += hw)
            grads.dc[i] += Eigen::Map<const typename Tensor<S>::Storage>(p, hw).sum();
    }

    int z_, c_;
    std::unique_ptr<nn::Sequential<S>> e0_, e1_, e2_, bott_, d2_, d1_, d0_;
    std::unique_ptr<nn::Conv2d<S>> out_conv_;
    nn::UpsampleNearest2<S> up2_, up1_, up0_;
    nn::Sigmoid<S> sig_;
    std::vector<int> shape_u2_, shape_x2_, shape_u1_, shape_x1_, shape_u0_, shape_x0_;
};

/// Two-scale patch discriminator. Each scale owns a conv trunk shared by a
/// real/fake patch head (sigmoid map) and a category head; the second scale
/// sees the 2x average-downsampled image.
template <typename S>
class PatchDiscriminator {
public:
    PatchDiscriminator(const TsmConfig& cfg, Rng& rng) {
        for (int s = 0; s < 2; ++s) {
            const std::string base = "D" + std::to_string(s);
            const int w = cfg.disc_width;
            auto& sc = scales_[s];
            sc.trunk = std::make_unique<nn::Sequential<S>>();
            sc.trunk->template emplace<nn::Conv2d<S>>(base + ".t0", 3, w, 3, 2, 1, rng);
            sc.trunk->template emplace<nn::LeakyReLU<S>>(S(0.2));
            sc.trunk->template emplace<nn::Conv2d<S>>(base + ".t1", w, 2 * w, 3, 2, 1, rng);
            sc.trunk->template emplace<nn::GroupNorm<S>>(base + ".t1n", 2 * w, nn::ResidualBlock<S>::norm_groups(2 * w));
            sc.trunk->template emplace<nn::LeakyReLU<S>>(S(0.2));
            sc.trunk->template emplace<nn::Conv2d<S>>(base + ".t2", 2 * w, 2 * w, 3, 1, 1, rng);
            sc.trunk->template emplace<nn::GroupNorm<S>>(base + ".t2n", 2 * w, nn::ResidualBlock<S>::norm_groups(2 * w));
            sc.trunk->template emplace<nn::LeakyReLU<S>>(S(0.2));
            sc.rf = std::make_unique<nn::Sequential<S>>();
            sc.rf->template emplace<nn::Conv2d<S>>(base + ".rf", 2 * w, 1, 3, 1, 1, rng);
            sc.rf->template emplace<nn::Sigmoid<S>>();
            sc.cls = std::make_unique<nn::Sequential<S>>();
            sc.cls->template emplace<nn::Conv2d<S>>(base + ".c0", 2 * w, 2 * w, 3, 1, 1, rng);
            sc.cls->template emplace<nn::LeakyReLU<S>>(S(0.2));
            sc.cls->template emplace<nn::GlobalAvgPool<S>>();
            sc.cls->template emplace<nn::Linear<S>>(base + ".ch", 2 * w, cfg.num_categories, rng);
        }
    }

    static constexpr int kScales = 2;

    struct Output {
        std::array<Tensor<S>, kScales> probs;      // patch probability maps in (0,1)
        std::array<Tensor<S>, kScales> cls_logits; // category logits
    };

    Output forward(const Tensor<S>& image, bool cache) {
        Output out;
        Tensor<S> scaled = image;
        for (int s = 0; s < kScales; ++s) {
            if (s > 0) scaled = nn::downsample2_avg(scaled);
            Tensor<S> feat = scales_[s].trunk->forward(scaled, cache);
            out.probs[s] = scales_[s].rf->forward(feat, cache);
            out.cls_logits[s] = scales_[s].cls->forward(feat, cache);
        }
        if (cache) image_dims_ = image.dims();
        return out;
    }

    /// Backward both scales; returns the gradient w.r.t. the full-resolution
    /// input image (needed for generator updates).
    Tensor<S> backward(const std::array<Tensor<S>, kScales>& dprobs,
                       const std::array<Tensor<S>, kScales>& dcls) {
        Tensor<S> dimg = Tensor<S>::zeros(image_dims_);
        for (int s = 0; s < kScales; ++s) {
            Tensor<S> dfeat = scales_[s].rf->backward(dprobs[s]);
            Tensor<S> dfeat_cls = scales_[s].cls->backward(dcls[s]);
            dfeat.array() += dfeat_cls.carray();
            Tensor<S> dscaled = scales_[s].trunk->backward(dfeat);
            if (s == 0)
                dimg.array() += dscaled.carray();
            else
                nn::downsample2_avg_backward(dscaled, dimg);
        }
        return dimg;
    }

    void collect(std::vector<nn::Param<S>*>& out) {
        for (auto& sc : scales_) {
            sc.trunk->collect(out);
            sc.rf->collect(out);
            sc.cls->collect(out);
        }
    }

private:
    struct Scale {
        std::unique_ptr<nn::Sequential<S>> trunk, rf, cls;
    };
    std::array<Scale, kScales> scales_;
    std::vector<int> image_dims_;
};

/// Frozen shape classifier estimating the semantic code c from a normal map.
template <typename S>
class ShapeCodeEstimator {
public:
    ShapeCodeEstimator(const TsmConfig& cfg, Rng& rng) : categories_(cfg.num_categories) {
        const int w = cfg.est_width;
        net_.template emplace<nn::Conv2d<S>>("C.c0", 3, w, 3, 2, 1, rng);
        net_.template emplace<nn::GroupNorm<S>>("C.n0", w, nn::ResidualBlock<S>::norm_groups(w));
        net_.template emplace<nn::ReLU<S>>();
        net_.template emplace<nn::Conv2d<S>>("C.c1", w, 2 * w, 3, 2, 1, rng);
        net_.template emplace<nn::GroupNorm<S>>("C.n1", 2 * w, nn::ResidualBlock<S>::norm_groups(2 * w));
        net_.template emplace<nn::ReLU<S>>();
        net_.template emplace<nn::Conv2d<S>>("C.c2", 2 * w, 2 * w, 3, 2, 1, rng);
        net_.template emplace<nn::ReLU<S>>();
        net_.template emplace<nn::GlobalAvgPool<S>>();
        net_.template emplace<nn::Linear<S>>("C.head", 2 * w, cfg.num_categories, rng);
    }

    Tensor<S> logits(const Tensor<S>& normal_map, bool cache = false) {
        return net_.forward(normal_map, cache);
    }

    /// Category distribution c (softmax over logits).
    Tensor<S> code(const Tensor<S>& normal_map) {
        Tensor<S> lg = logits(normal_map, false);
        Tensor<S> c(lg.dims());
        c.vector() = nn::softmax<S>(lg.cvector());
        return c;
    }

    void backward_logits(const Tensor<S>& dlogits) { net_.backward(dlogits); }

    void collect(std::vector<nn::Param<S>*>& out) { net_.collect(out); }

    int categories() const { return categories_; }

private:
    int categories_;
    nn::Sequential<S> net_;
};

} // namespace ibsr::tsm
