#pragma once

#include "ibsr/amvml/networks.hpp"
#include "ibsr/nn/functional.hpp"

namespace ibsr::amvml {

/// Per-pixel binary cross-entropy between a saliency probability map and the
/// (already downsampled) ground-truth mask. Optionally yields d/d(map).
template <typename S>
S saliency_loss(const Tensor<S>& pred, const std::vector<S>& mask, Tensor<S>* dpred = nullptr) {
    if (static_cast<std::size_t>(pred.size()) != mask.size())
        raise(ErrorKind::Validation, "saliency_loss: size mismatch");
    const S n = static_cast<S>(pred.size());
    S value = S(0);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const S m = mask[static_cast<std::size_t>(i)];
        const S p = pred[i];
        value -= (m * nn::safe_log(p) + (S(1) - m) * nn::safe_log(S(1) - p)) / n;
        if (dpred) {
            S g = S(0);
            if (p >= nn::kLogEps<S>) g -= m / p;
            if (S(1) - p >= nn::kLogEps<S>) g += (S(1) - m) / (S(1) - p);
            (*dpred)[i] += g / n;
        }
    }
    return value;
}

/// Viewpoint-guided aggregation: sum_v w_v * embedding_v (Eq.-9 style).
template <typename S>
nn::Vec<S> aggregate_views(const nn::Mat<S>& view_embeddings, const nn::Vec<S>& attention) {
    if (view_embeddings.rows() != attention.size())
        raise(ErrorKind::Validation, "aggregate_views: V mismatch");
    return view_embeddings.transpose() * attention;
}

/// Gradients of aggregate_views: per-view row gradients and attention grads.
template <typename S>
void aggregate_views_backward(const nn::Mat<S>& view_embeddings, const nn::Vec<S>& attention,
                              const nn::Vec<S>& dout, nn::Mat<S>& dviews, nn::Vec<S>& dattention) {
    dviews.noalias() += attention * dout.transpose();       // V x d
    dattention.noalias() += view_embeddings * dout;         // V
}

/// Squared-distance triplet loss on L2-normalized embeddings:
/// max(||f(a)-f(p)||^2 - ||f(a)-f(n)||^2 + margin, 0).
template <typename S>
S triplet_loss_vg(const nn::Vec<S>& anchor, const nn::Vec<S>& positive, const nn::Vec<S>& negative,
                  S margin = S(0.1), nn::Vec<S>* danchor = nullptr, nn::Vec<S>* dpositive = nullptr,
                  nn::Vec<S>* dnegative = nullptr) {
    const nn::Vec<S> fa = nn::l2_normalize<S>(anchor);
    const nn::Vec<S> fp = nn::l2_normalize<S>(positive);
    const nn::Vec<S> fn = nn::l2_normalize<S>(negative);
    const S d_ap = (fa - fp).squaredNorm();
    const S d_an = (fa - fn).squaredNorm();
    const S hinge = d_ap - d_an + margin;
    if (hinge <= S(0)) return S(0);
    if (danchor) {
        // d(hinge)/dfa = 2(fn - fp); through the normalization afterwards.
        *danchor += nn::l2_normalize_backward<S>(anchor, nn::Vec<S>(S(2) * (fn - fp)));
        *dpositive += nn::l2_normalize_backward<S>(positive, nn::Vec<S>(S(-2) * (fa - fp)));
        *dnegative += nn::l2_normalize_backward<S>(negative, nn::Vec<S>(S(2) * (fa - fn)));
    }
    return hinge;
}

/// Azimuth-bin cross-entropy.
template <typename S>
S viewpoint_loss(const nn::Vec<S>& logits, int azimuth_bin, nn::Vec<S>* dlogits = nullptr) {
    return nn::cross_entropy<S>(logits, azimuth_bin, dlogits);
}

/// Instance-discrimination cross-entropy on temperature-scaled cosine logits:
/// logit_k = <f(w_k), f(e)> / tau with both the embedding and the classifier
/// rows L2-normalized. Row normalization keeps the head from shrinking the
/// loss by growing weight norms; separation has to happen in angles, which is
/// what retrieval measures.
template <typename S>
S instance_loss(const nn::Vec<S>& embedding, int label, InstanceHead<S>& head,
                nn::Vec<S>* dembedding = nullptr, S weight = S(1)) {
    const nn::Vec<S> f = nn::l2_normalize<S>(embedding);
    const auto w = head.weights().value.cmatrix(head.instances(), f.size());
    const int n = head.instances();
    nn::Mat<S> wn(n, f.size());
    for (int k = 0; k < n; ++k) wn.row(k) = nn::l2_normalize<S>(nn::Vec<S>(w.row(k))).transpose();
    nn::Vec<S> logits = (wn * f) / head.tau();
    nn::Vec<S> dlogits;
    const S value = nn::cross_entropy<S>(logits, label, dembedding ? &dlogits : nullptr);
    if (dembedding) {
        dlogits *= weight / head.tau();
        auto wgrad = head.weights().grad.matrix(head.instances(), f.size());
        for (int k = 0; k < n; ++k)
            wgrad.row(k) +=
                nn::l2_normalize_backward<S>(nn::Vec<S>(w.row(k)), nn::Vec<S>(dlogits[k] * f)).transpose();
        const nn::Vec<S> df = wn.transpose() * dlogits;
        *dembedding += nn::l2_normalize_backward<S>(embedding, df);
    }
    return value;
}

struct AmvmlLambdas {
    double view = 0.5; // lambda_1
    double sa = 1.0;   // lambda_2
    double vg = 3.0;   // lambda_3
};

/// Full metric-learning objective: L_inst + 0.5 L_view + 1.0 L_SA + 3.0 L_VG.
template <typename S>
S amvml_objective(S inst, S view, S sa, S vg, const AmvmlLambdas& lambdas = {}) {
    return inst + static_cast<S>(lambdas.view) * view + static_cast<S>(lambdas.sa) * sa +
           static_cast<S>(lambdas.vg) * vg;
}

} // namespace ibsr::amvml
