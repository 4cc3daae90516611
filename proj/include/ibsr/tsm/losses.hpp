#pragma once

#include "ibsr/nn/functional.hpp"
#include "ibsr/tsm/networks.hpp"

namespace ibsr::tsm {

namespace detail {

/// Mean over patches of log(p) or log(1-p), with the shared 1e-7 log guard.
/// When dprob is given, accumulates weight * d(value)/dp into it.
template <typename S>
S patch_log_mean(const Tensor<S>& probs, bool one_minus, Tensor<S>* dprob = nullptr, S weight = S(1)) {
    const S n = static_cast<S>(probs.size());
    S value = S(0);
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const S p = one_minus ? S(1) - probs[i] : probs[i];
        value += nn::safe_log(p) / n;
        if (dprob && p >= nn::kLogEps<S>)
            (*dprob)[i] += weight * (one_minus ? S(-1) : S(1)) / (p * n);
    }
    return value;
}

} // namespace detail

/// Adversarial objective (discriminator view): E[log D(T)] plus the two
/// half-weighted fake terms, averaged over the discriminator's scales.
template <typename S>
S adv_loss(PatchDiscriminator<S>& d, const Tensor<S>& real, const Tensor<S>& fake_z,
           const Tensor<S>& fake_zprime) {
    const S per_scale = S(1) / S(PatchDiscriminator<S>::kScales);
    S value = S(0);
    auto real_out = d.forward(real, false);
    auto fz_out = d.forward(fake_z, false);
    auto fzp_out = d.forward(fake_zprime, false);
    for (int s = 0; s < PatchDiscriminator<S>::kScales; ++s) {
        value += per_scale * detail::patch_log_mean(real_out.probs[s], false);
        value += per_scale * S(0.5) * detail::patch_log_mean(fz_out.probs[s], true);
        value += per_scale * S(0.5) * detail::patch_log_mean(fzp_out.probs[s], true);
    }
    return value;
}

/// adv_loss with d(value)/d(D parameters) accumulated into D's grads.
template <typename S>
S adv_loss_grad(PatchDiscriminator<S>& d, const Tensor<S>& real, const Tensor<S>& fake_z,
                const Tensor<S>& fake_zprime) {
    const S per_scale = S(1) / S(PatchDiscriminator<S>::kScales);
    S value = S(0);
    struct Item {
        const Tensor<S>* img;
        bool one_minus;
        S weight;
    };
    const Item items[3] = {{&real, false, S(1)}, {&fake_z, true, S(0.5)}, {&fake_zprime, true, S(0.5)}};
    for (const auto& item : items) {
        auto out = d.forward(*item.img, true);
        std::array<Tensor<S>, PatchDiscriminator<S>::kScales> dprobs, dcls;
        for (int s = 0; s < PatchDiscriminator<S>::kScales; ++s) {
            dprobs[s] = Tensor<S>::zeros(out.probs[s].dims());
            dcls[s] = Tensor<S>::zeros(out.cls_logits[s].dims());
            value += per_scale * item.weight *
                     detail::patch_log_mean(out.probs[s], item.one_minus, &dprobs[s], per_scale * item.weight);
        }
        d.backward(dprobs, dcls);
    }
    return value;
}

/// l1 reconstruction: mean|G(S,z,c) - T| + mean|G(S,z',c) - T|.
template <typename S>
S rec_loss(const Tensor<S>& out_z, const Tensor<S>& out_zprime, const Tensor<S>& target,
           Tensor<S>* dout_z = nullptr, Tensor<S>* dout_zprime = nullptr) {
    if (!out_z.same_dims(target) || !out_zprime.same_dims(target))
        raise(ErrorKind::Validation, "rec_loss: size mismatch");
    const S n = static_cast<S>(target.size());
    S value = S(0);
    auto term = [&](const Tensor<S>& out, Tensor<S>* grad) {
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            const S diff = out[i] - target[i];
            value += std::fabs(diff) / n;
            if (grad) (*grad)[i] += (diff > S(0) ? S(1) : (diff < S(0) ? S(-1) : S(0))) / n;
        }
    };
    term(out_z, dout_z);
    term(out_zprime, dout_zprime);
    return value;
}

/// KL(N(mu, diag e^logvar) || N(0, I)) in closed form, summed over the two
/// encodings of the dual-pose scheme.
template <typename S>
S kl_loss(const Tensor<S>& mu_t, const Tensor<S>& logvar_t, const Tensor<S>& mu_tp,
          const Tensor<S>& logvar_tp, Tensor<S>* dmu_t = nullptr, Tensor<S>* dlogvar_t = nullptr,
          Tensor<S>* dmu_tp = nullptr, Tensor<S>* dlogvar_tp = nullptr) {
    S value = S(0);
    auto term = [&](const Tensor<S>& mu, const Tensor<S>& lv, Tensor<S>* dmu, Tensor<S>* dlv) {
        for (Eigen::Index i = 0; i < mu.size(); ++i) {
            const S var = std::exp(lv[i]);
            value += S(0.5) * (mu[i] * mu[i] + var - S(1) - lv[i]);
            if (dmu) (*dmu)[i] += mu[i];
            if (dlv) (*dlv)[i] += S(0.5) * (var - S(1));
        }
    };
    term(mu_t, logvar_t, dmu_t, dlogvar_t);
    term(mu_tp, logvar_tp, dmu_tp, dlogvar_tp);
    return value;
}

/// Category supervision (Eq.-5 weighting): CE on the real image plus
/// half-weighted CE on both fakes, averaged over discriminator scales.
template <typename S>
S cls_loss(PatchDiscriminator<S>& d, const Tensor<S>& real, const Tensor<S>& fake_z,
           const Tensor<S>& fake_zprime, int label) {
    const S per_scale = S(1) / S(PatchDiscriminator<S>::kScales);
    S value = S(0);
    auto add = [&](const Tensor<S>& img, S weight) {
        auto out = d.forward(img, false);
        for (int s = 0; s < PatchDiscriminator<S>::kScales; ++s)
            value += per_scale * weight * nn::cross_entropy<S>(out.cls_logits[s].cvector(), label);
    };
    add(real, S(1));
    add(fake_z, S(0.5));
    add(fake_zprime, S(0.5));
    return value;
}

template <typename S>
S cls_loss_grad(PatchDiscriminator<S>& d, const Tensor<S>& real, const Tensor<S>& fake_z,
                const Tensor<S>& fake_zprime, int label) {
    const S per_scale = S(1) / S(PatchDiscriminator<S>::kScales);
    S value = S(0);
    struct Item {
        const Tensor<S>* img;
        S weight;
    };
    const Item items[3] = {{&real, S(1)}, {&fake_z, S(0.5)}, {&fake_zprime, S(0.5)}};
    for (const auto& item : items) {
        auto out = d.forward(*item.img, true);
        std::array<Tensor<S>, PatchDiscriminator<S>::kScales> dprobs, dcls;
        for (int s = 0; s < PatchDiscriminator<S>::kScales; ++s) {
            dprobs[s] = Tensor<S>::zeros(out.probs[s].dims());
            dcls[s] = Tensor<S>(out.cls_logits[s].dims());
            nn::Vec<S> dlogits;
            value += per_scale * item.weight *
                     nn::cross_entropy<S>(out.cls_logits[s].cvector(), label, &dlogits);
            dcls[s].vector() = dlogits * (per_scale * item.weight);
        }
        d.backward(dprobs, dcls);
    }
    return value;
}

struct TsmLambdas {
    double rec = 10.0;
    double kl = 0.01;
    double cls = 1.0;
};

/// Full texture-synthesis objective: L_adv + 10 L_rec + 0.01 L_KL + 1 L_cls.
template <typename S>
S tsm_objective(S adv, S rec, S kl, S cls, const TsmLambdas& lambdas = {}) {
    return adv + static_cast<S>(lambdas.rec) * rec + static_cast<S>(lambdas.kl) * kl +
           static_cast<S>(lambdas.cls) * cls;
}

} // namespace ibsr::tsm
