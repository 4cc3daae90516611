#pragma once

#include <memory>
#include <vector>

#include "ibsr/nn/blocks.hpp"
#include "ibsr/nn/functional.hpp"
#include "ibsr/nn/layers.hpp"

namespace ibsr::amvml {

struct AmvmlConfig {
    int image_size = 224; // every tower input is resized to this
    int width = 32;       // trunk width multiplier
    int embed_dim = 256;  // d
    int num_views = 12;   // V
};

/// Query/view tower: a residual trunk split around a saliency gate.
///
///   F4  = Enc1(X)                      (2w channels at 1/4 resolution)
///   F8, F16, F32 = Enc2(F4)            (4w, 8w, 8w)
///   M   = Dec(F4, F8, F16, F32)        (saliency probabilities at 1/4)
///   G32 = Enc3(F4 .* M)                (Enc3 mirrors Enc2's layer shapes)
///   embedding = GAP(Conv(G32))         (d)
///   viewpoint logits = Linear(GAP(F32)) (V), attention = softmax
template <typename S>
class Tower {
public:
    Tower(const AmvmlConfig& cfg, Rng& rng) : cfg_(cfg) {
        const int w = cfg.width;
        if (cfg.image_size % 32 != 0) raise(ErrorKind::Validation, "tower image size must be a multiple of 32");

        enc1_ = std::make_unique<nn::Sequential<S>>();
        enc1_->template emplace<nn::Conv2d<S>>("enc1.stem", 3, w, 3, 2, 1, rng);
        enc1_->template emplace<nn::GroupNorm<S>>("enc1.stemn", w, nn::ResidualBlock<S>::norm_groups(w));
        enc1_->template emplace<nn::ReLU<S>>();
        enc1_->template emplace<nn::ResidualBlock<S>>("enc1.b0", w, 2 * w, 2, rng);

        enc2_b8_ = std::make_unique<nn::ResidualBlock<S>>("enc2.b8", 2 * w, 4 * w, 2, rng);
        enc2_b16_ = std::make_unique<nn::ResidualBlock<S>>("enc2.b16", 4 * w, 8 * w, 2, rng);
        enc2_b32_ = std::make_unique<nn::ResidualBlock<S>>("enc2.b32", 8 * w, 8 * w, 2, rng);

        enc3_b8_ = std::make_unique<nn::ResidualBlock<S>>("enc3.b8", 2 * w, 4 * w, 2, rng);
        enc3_b16_ = std::make_unique<nn::ResidualBlock<S>>("enc3.b16", 4 * w, 8 * w, 2, rng);
        enc3_b32_ = std::make_unique<nn::ResidualBlock<S>>("enc3.b32", 8 * w, 8 * w, 2, rng);

        const int m = 2 * w;
        lat4_ = std::make_unique<nn::Conv2d<S>>("dec.l4", 2 * w, m, 1, 1, 0, rng);
        lat8_ = std::make_unique<nn::Conv2d<S>>("dec.l8", 4 * w, m, 1, 1, 0, rng);
        lat16_ = std::make_unique<nn::Conv2d<S>>("dec.l16", 8 * w, m, 1, 1, 0, rng);
        lat32_ = std::make_unique<nn::Conv2d<S>>("dec.l32", 8 * w, m, 1, 1, 0, rng);
        fuse_ = std::make_unique<nn::Sequential<S>>();
        fuse_->template emplace<nn::Conv2d<S>>("dec.f0", m, m, 3, 1, 1, rng);
        fuse_->template emplace<nn::GroupNorm<S>>("dec.f0n", m, nn::ResidualBlock<S>::norm_groups(m));
        fuse_->template emplace<nn::ReLU<S>>();
        fuse_->template emplace<nn::Conv2d<S>>("dec.out", m, 1, 3, 1, 1, rng);
        fuse_->template emplace<nn::Sigmoid<S>>();

        embed_conv_ = std::make_unique<nn::Conv2d<S>>("emb.conv", 8 * w, cfg.embed_dim, 3, 1, 1, rng);
        view_head_ = std::make_unique<nn::Linear<S>>("view.head", 8 * w, cfg.num_views, rng);
    }

    struct Output {
        Tensor<S> embedding; // {d}, raw (not normalized)
        Tensor<S> saliency;  // {1, H/4, W/4} probabilities
        Tensor<S> vlogits;   // {V}
        Tensor<S> attention; // {V}, softmax of vlogits
        // Filled only in diagnostic mode (saliency_override given).
        Tensor<S> f4;
        Tensor<S> gated;
    };

    /// saliency_override (diagnostic hook): replaces the predicted map in the
    /// gate, e.g. to inspect the gating path with a forced all-ones map.
    Output forward(const Tensor<S>& image, bool cache, const Tensor<S>* saliency_override = nullptr) {
        if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg_.image_size ||
            image.dim(2) != cfg_.image_size)
            raise(ErrorKind::Validation, "tower input must be (3," + std::to_string(cfg_.image_size) +
                                             "," + std::to_string(cfg_.image_size) + ")");

        Tensor<S> f4 = enc1_->forward(image, cache);
        Tensor<S> f8 = enc2_b8_->forward(f4, cache);
        Tensor<S> f16 = enc2_b16_->forward(f8, cache);
        Tensor<S> f32 = enc2_b32_->forward(f16, cache);

        // Saliency decoder: laterals upsampled to the 1/4 grid and summed.
        Tensor<S> l4 = lat4_->forward(f4, cache);
        Tensor<S> l8 = up8_[0].forward(lat8_->forward(f8, cache), cache);
        Tensor<S> l16 = up16_[0].forward(up16_[1].forward(lat16_->forward(f16, cache), cache), cache);
        Tensor<S> l32 = up32_[0].forward(
            up32_[1].forward(up32_[2].forward(lat32_->forward(f32, cache), cache), cache), cache);
        Tensor<S> fused(l4.dims());
        fused.array() = l4.carray() + l8.carray() + l16.carray() + l32.carray();
        Tensor<S> saliency = fuse_->forward(fused, cache);
        if (saliency_override) {
            if (!saliency_override->same_dims(saliency))
                raise(ErrorKind::Validation, "saliency override shape mismatch");
            saliency = *saliency_override;
        }

        // Gate: every F4 channel multiplied by the saliency map.
        Tensor<S> gated(f4.dims());
        const Eigen::Index hw = static_cast<Eigen::Index>(f4.dim(1)) * f4.dim(2);
        for (int c = 0; c < f4.dim(0); ++c)
            Eigen::Map<typename Tensor<S>::Storage>(gated.data() + c * hw, hw) =
                Eigen::Map<const typename Tensor<S>::Storage>(f4.data() + c * hw, hw) *
                saliency.carray();

        Tensor<S> g8 = enc3_b8_->forward(gated, cache);
        Tensor<S> g16 = enc3_b16_->forward(g8, cache);
        Tensor<S> g32 = enc3_b32_->forward(g16, cache);

        Tensor<S> emb = embed_gap_.forward(embed_conv_->forward(g32, cache), cache);
        Tensor<S> pooled = view_gap_.forward(f32, cache);
        Tensor<S> vlogits = view_head_->forward(pooled, cache);

        Output out;
        out.embedding = emb;
        out.saliency = saliency;
        out.vlogits = vlogits;
        out.attention = Tensor<S>(vlogits.dims());
        out.attention.vector() = nn::softmax<S>(vlogits.cvector());
        if (saliency_override) {
            out.f4 = f4;
            out.gated = gated;
        }

        if (cache) {
            f4_ = f4;
            saliency_ = saliency;
        }
        return out;
    }

    /// Backward through all branches. d_saliency is the gradient arriving at
    /// the saliency PROBABILITY map from losses (the gate path is added
    /// internally); d_vlogits is the total logits gradient (cross-entropy plus
    /// anything routed through the softmax attention).
    void backward(const Tensor<S>& d_embedding, const Tensor<S>& d_vlogits, const Tensor<S>* d_saliency) {
        // Embedding branch -> Enc3 -> gate.
        Tensor<S> dg32 = embed_conv_->backward(embed_gap_.backward(d_embedding));
        Tensor<S> dgated = enc3_b8_->backward(enc3_b16_->backward(enc3_b32_->backward(dg32)));

        const Eigen::Index hw = static_cast<Eigen::Index>(f4_.dim(1)) * f4_.dim(2);
        Tensor<S> df4 = Tensor<S>::zeros(f4_.dims());
        Tensor<S> dsal = d_saliency ? *d_saliency : Tensor<S>::zeros(saliency_.dims());
        for (int c = 0; c < f4_.dim(0); ++c) {
            Eigen::Map<typename Tensor<S>::Storage>(df4.data() + c * hw, hw) +=
                Eigen::Map<const typename Tensor<S>::Storage>(dgated.data() + c * hw, hw) *
                saliency_.carray();
            dsal.array() += Eigen::Map<const typename Tensor<S>::Storage>(dgated.data() + c * hw, hw) *
                            Eigen::Map<const typename Tensor<S>::Storage>(f4_.data() + c * hw, hw);
        }

        // Saliency decoder branch.
        Tensor<S> dfused = fuse_->backward(dsal);
        df4.array() += lat4_->backward(dfused).carray();
        Tensor<S> df8 = lat8_->backward(up8_[0].backward(dfused));
        Tensor<S> df16 = lat16_->backward(up16_[1].backward(up16_[0].backward(dfused)));
        Tensor<S> df32 = lat32_->backward(up32_[2].backward(up32_[1].backward(up32_[0].backward(dfused))));

        // Viewpoint branch.
        df32.array() += view_gap_.backward(view_head_->backward(d_vlogits)).carray();

        // Enc2 chain with taps, then Enc1.
        Tensor<S> dt16 = enc2_b32_->backward(df32);
        dt16.array() += df16.carray();
        Tensor<S> dt8 = enc2_b16_->backward(dt16);
        dt8.array() += df8.carray();
        df4.array() += enc2_b8_->backward(dt8).carray();
        enc1_->backward(df4);
    }

    void collect(std::vector<nn::Param<S>*>& out) {
        enc1_->collect(out);
        enc2_b8_->collect(out);
        enc2_b16_->collect(out);
        enc2_b32_->collect(out);
        enc3_b8_->collect(out);
        enc3_b16_->collect(out);
        enc3_b32_->collect(out);
        lat4_->collect(out);
        lat8_->collect(out);
        lat16_->collect(out);
        lat32_->collect(out);
        fuse_->collect(out);
        embed_conv_->collect(out);
        view_head_->collect(out);
    }

    const AmvmlConfig& config() const { return cfg_; }

private:
    AmvmlConfig cfg_;
    std::unique_ptr<nn::Sequential<S>> enc1_;
    std::unique_ptr<nn::ResidualBlock<S>> enc2_b8_, enc2_b16_, enc2_b32_;
    std::unique_ptr<nn::ResidualBlock<S>> enc3_b8_, enc3_b16_, enc3_b32_;
    std::unique_ptr<nn::Conv2d<S>> lat4_, lat8_, lat16_, lat32_;
    std::unique_ptr<nn::Sequential<S>> fuse_;
    std::unique_ptr<nn::Conv2d<S>> embed_conv_;
    nn::GlobalAvgPool<S> embed_gap_, view_gap_;
    std::unique_ptr<nn::Linear<S>> view_head_;
    nn::UpsampleNearest2<S> up8_[1], up16_[2], up32_[3];
    Tensor<S> f4_, saliency_;
};

/// Instance classifier over training shape instances: logits = (W f(e)) / tau.
template <typename S>
class InstanceHead {
public:
    InstanceHead(int num_instances, int dim, S tau, Rng& rng)
        : tau_(tau), w_("inst.w", Tensor<S>::normal({num_instances, dim}, rng,
                                                    static_cast<S>(std::sqrt(1.0 / dim)))) {}

    int instances() const { return w_.value.dim(0); }
    S tau() const { return tau_; }
    nn::Param<S>& weights() { return w_; }

    void collect(std::vector<nn::Param<S>*>& out) { out.push_back(&w_); }

private:
    S tau_;
    nn::Param<S> w_;
};

} // namespace ibsr::amvml
