#pragma once

#include "ibsr/nn/layers.hpp"

namespace ibsr::nn {

/// Basic residual block: conv3-gn-relu-conv3-gn plus a (possibly projected)
/// skip, relu after the sum.
template <typename S>
class ResidualBlock : public Module<S> {
public:
    ResidualBlock(std::string name, int in_c, int out_c, int stride, Rng& rng)
        : conv1_(name + ".c1", in_c, out_c, 3, stride, 1, rng),
          gn1_(name + ".n1", out_c, norm_groups(out_c)),
          conv2_(name + ".c2", out_c, out_c, 3, 1, 1, rng),
          gn2_(name + ".n2", out_c, norm_groups(out_c)),
          project_(in_c != out_c || stride != 1) {
        if (project_) {
            proj_conv_ = std::make_unique<Conv2d<S>>(name + ".sc", in_c, out_c, 1, stride, 0, rng);
            proj_gn_ = std::make_unique<GroupNorm<S>>(name + ".sn", out_c, norm_groups(out_c));
        }
    }

    static int norm_groups(int channels) { return channels % 8 == 0 ? 8 : (channels % 4 == 0 ? 4 : 1); }

    Tensor<S> forward(const Tensor<S>& x, bool cache) override {
        Tensor<S> main = gn2_.forward(conv2_.forward(relu1_.forward(gn1_.forward(conv1_.forward(x, cache), cache), cache), cache), cache);
        Tensor<S> skip = project_ ? proj_gn_->forward(proj_conv_->forward(x, cache), cache) : x;
        Tensor<S> sum(main.dims());
        sum.array() = main.carray() + skip.carray();
        return relu_out_.forward(sum, cache);
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dsum = relu_out_.backward(dy);
        Tensor<S> dmain = conv1_.backward(gn1_.backward(relu1_.backward(conv2_.backward(gn2_.backward(dsum)))));
        if (project_) {
            Tensor<S> dskip = proj_conv_->backward(proj_gn_->backward(dsum));
            dmain.array() += dskip.carray();
        } else {
            dmain.array() += dsum.carray();
        }
        return dmain;
    }

    void collect(std::vector<Param<S>*>& out) override {
        conv1_.collect(out);
        gn1_.collect(out);
        conv2_.collect(out);
        gn2_.collect(out);
        if (project_) {
            proj_conv_->collect(out);
            proj_gn_->collect(out);
        }
    }

private:
    Conv2d<S> conv1_;
    GroupNorm<S> gn1_;
    ReLU<S> relu1_;
    Conv2d<S> conv2_;
    GroupNorm<S> gn2_;
    ReLU<S> relu_out_;
    bool project_;
    std::unique_ptr<Conv2d<S>> proj_conv_;
    std::unique_ptr<GroupNorm<S>> proj_gn_;
};

} // namespace ibsr::nn
