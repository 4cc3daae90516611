#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <optional>

#include "ibsr/amvml/losses.hpp"
#include "ibsr/amvml/networks.hpp"
#include "ibsr/core/image.hpp"
#include "ibsr/nn/optim.hpp"
#include "ibsr/retrieval/index.hpp"
#include "ibsr/triplets/triplets.hpp"

namespace ibsr::amvml {

struct AmvmlTrainConfig {
    double lr = 0.002;
    double momentum = 0.9;
    double weight_decay = 4e-4;
    int batch_size = 24;
    int warmup_epochs = 20;
    int finetune_epochs = 60;
    int warmup_hold = 10;   // epochs at constant lr before the linear decay
    int finetune_hold = 20;
    double margin = 0.1;
    double tau = 0.07;
    AmvmlLambdas lambdas;
    triplets::TripletMode mode = triplets::TripletMode::HardTexture;
};

struct AmvmlStepLog {
    int stage = 1; // 1 = warm-up (instance only), 2 = full objective
    int epoch = 0;
    long step = 0;
    double lr = 0;
    double inst = 0, view = 0, sa = 0, vg = 0;
    double objective = 0;
};

/// Two-stage metric-learning driver. Stage 1 optimizes the instance loss on
/// query embeddings and textureless view aggregates; stage 2 adds saliency,
/// viewpoint and the viewpoint-guided triplet term with online triplets.
class AmvmlTrainer {
public:
    AmvmlTrainer(const data::Dataset& dataset, const triplets::FrozenTsm& tsm,
                 const AmvmlConfig& net_cfg, const AmvmlTrainConfig& train_cfg, std::uint64_t seed)
        : dataset_(dataset), tsm_(tsm), net_cfg_(net_cfg), train_cfg_(train_cfg), seed_(seed) {
        if (train_cfg.mode == triplets::TripletMode::HardTexture &&
            (!tsm.encoder || !tsm.generator || !tsm.estimator))
            raise(ErrorKind::Validation, "hard-texture mode requires a trained TSM");

        Rng init = Rng(seed).fork({hash_tag("amvml-init")});
        tower_ = std::make_unique<Tower<float>>(net_cfg, init);
        head_ = std::make_unique<InstanceHead<float>>(static_cast<int>(dataset.pool.size()),
                                                      net_cfg.embed_dim,
                                                      static_cast<float>(train_cfg.tau), init);
        tower_->collect(params_);
        head_->collect(params_);
        opt_ = std::make_unique<nn::Sgd<float>>(params_, static_cast<float>(train_cfg.lr),
                                                static_cast<float>(train_cfg.momentum),
                                                static_cast<float>(train_cfg.weight_decay));

        // Textureless views enter the tower with black backgrounds so all
        // three input families (queries, synthesized views, normal renders)
        // share the same background convention.
        const int n = net_cfg.image_size;
        resized_normals_.resize(dataset.pool.size());
        for (std::size_t i = 0; i < dataset.pool.size(); ++i)
            for (const auto& v : dataset.pool[i].normal_views)
                resized_normals_[i].push_back(resize_bilinear(normal_view_black_background(v), n, n));
        train_indices_ = dataset.split_or_all("train");
        resized_queries_.resize(dataset.queries.size());
        masks4_.resize(dataset.queries.size());
    }

    using StepCallback = std::function<void(const AmvmlStepLog&)>;

    /// Runs both stages to completion.
    void train(const StepCallback& on_step = {}) {
        long global = 0;
        for (int stage : {1, 2}) {
            const int epochs = stage == 1 ? train_cfg_.warmup_epochs : train_cfg_.finetune_epochs;
            const int hold = stage == 1 ? train_cfg_.warmup_hold : train_cfg_.finetune_hold;
            for (int epoch = 0; epoch < epochs; ++epoch) {
                const double lr = nn::lr_at_epoch(train_cfg_.lr, epoch, epochs, hold);
                opt_->set_lr(static_cast<float>(lr));
                const auto order = epoch_order(stage, epoch);
                const int steps =
                    static_cast<int>((order.size() + train_cfg_.batch_size - 1) / train_cfg_.batch_size);
                for (int s = 0; s < steps; ++s, ++global) {
                    AmvmlStepLog log = run_step(stage, order, s, global);
                    log.epoch = epoch;
                    log.lr = lr;
                    if (on_step) on_step(log);
                }
            }
        }
    }

    /// One optimizer step over a slice of the epoch ordering.
    AmvmlStepLog run_step(int stage, const std::vector<int>& order, int step_in_epoch, long global_step) {
        AmvmlStepLog log;
        log.stage = stage;
        log.step = global_step;
        const std::size_t begin = static_cast<std::size_t>(step_in_epoch) * train_cfg_.batch_size;
        const std::size_t end = std::min(order.size(), begin + train_cfg_.batch_size);
        const float inv_b = 1.0f / static_cast<float>(end - begin);
        nn::zero_grads(params_);
        for (std::size_t k = begin; k < end; ++k)
            accumulate_anchor(stage, order[k], global_step, static_cast<long>(k - begin), inv_b, log);
        opt_->step();
        log.objective = stage == 1 ? log.inst
                                   : amvml_objective(log.inst, log.view, log.sa, log.vg,
                                                     train_cfg_.lambdas);
        if (!std::isfinite(log.objective))
            raise(ErrorKind::Numeric, "non-finite AMV-ML loss at step " + std::to_string(global_step));
        return log;
    }

    Tower<float>& tower() { return *tower_; }
    InstanceHead<float>& instance_head() { return *head_; }
    std::vector<nn::Param<float>*>& params() { return params_; }
    nn::Sgd<float>& optimizer() { return *opt_; }
    const AmvmlTrainConfig& train_config() const { return train_cfg_; }
    const AmvmlConfig& net_config() const { return net_cfg_; }

    /// Query descriptor for retrieval: unit embedding + attention.
    retrieval::QueryDescriptor describe(const TensorF& image) {
        const int n = net_cfg_.image_size;
        auto out = tower_->forward(resize_bilinear(image, n, n), false);
        retrieval::QueryDescriptor d;
        d.embedding = out.embedding.cvector();
        const float norm = d.embedding.norm();
        if (!(norm > 0)) raise(ErrorKind::Numeric, "query embedding has zero norm");
        d.embedding /= norm;
        d.attention = out.attention.cvector();
        return d;
    }

    /// Textureless multi-view embeddings for one shape (V x d, unit rows).
    Eigen::MatrixXf shape_view_embeddings(int pool_index) {
        const auto& views = resized_normals_[static_cast<std::size_t>(pool_index)];
        Eigen::MatrixXf m(static_cast<int>(views.size()), net_cfg_.embed_dim);
        for (std::size_t v = 0; v < views.size(); ++v) {
            auto out = tower_->forward(views[v], false);
            Eigen::VectorXf e = out.embedding.cvector();
            const float norm = e.norm();
            if (!(norm > 0)) raise(ErrorKind::Numeric, "view embedding has zero norm");
            m.row(static_cast<int>(v)) = (e / norm).transpose();
        }
        return m;
    }

    retrieval::EmbeddingIndex build_index() {
        retrieval::EmbeddingIndex index(net_cfg_.embed_dim, dataset_.num_views);
        for (std::size_t i = 0; i < dataset_.pool.size(); ++i)
            index.add(dataset_.pool[i].shape_id, shape_view_embeddings(static_cast<int>(i)));
        return index;
    }

private:
    struct ViewPass {
        TensorF image;      // tower-sized input
        Eigen::VectorXf emb;
        TensorF vlogits;
        Eigen::VectorXf vlogits_grad; // set when viewpoint supervision applies
        int bin = 0;
    };

    /// Forward a set of views (no cache), collecting embeddings and logits.
    std::vector<ViewPass> forward_view_set(const std::vector<TensorF>& views, bool needs_resize) {
        const int n = net_cfg_.image_size;
        std::vector<ViewPass> passes(views.size());
        for (std::size_t v = 0; v < views.size(); ++v) {
            passes[v].image = needs_resize ? resize_bilinear(views[v], n, n) : views[v];
            auto out = tower_->forward(passes[v].image, false);
            passes[v].emb = out.embedding.cvector();
            passes[v].vlogits = out.vlogits;
            passes[v].bin = static_cast<int>(v);
        }
        return passes;
    }

    static Eigen::MatrixXf stack(const std::vector<ViewPass>& passes) {
        Eigen::MatrixXf m(static_cast<int>(passes.size()), passes.empty() ? 0 : passes[0].emb.size());
        for (std::size_t v = 0; v < passes.size(); ++v) m.row(static_cast<int>(v)) = passes[v].emb.transpose();
        return m;
    }

    const TensorF& resized_query(int qi) {
        auto& slot = resized_queries_[static_cast<std::size_t>(qi)];
        if (slot.empty()) {
            const int n = net_cfg_.image_size;
            slot = resize_bilinear(dataset_.queries[static_cast<std::size_t>(qi)].image, n, n);
        }
        return slot;
    }

    const std::vector<float>& mask4(int qi) {
        auto& slot = masks4_[static_cast<std::size_t>(qi)];
        if (slot.empty()) {
            const auto& q = dataset_.queries[static_cast<std::size_t>(qi)];
            const int g = net_cfg_.image_size / 4;
            slot = downsample_mask_nearest(q.mask, q.image.dim(1), q.image.dim(2), g, g);
        }
        return slot;
    }

    std::vector<int> epoch_order(int stage, int epoch) {
        std::vector<int> order = train_indices_;
        Rng rng = Rng(seed_).fork({hash_tag("epoch"), static_cast<std::uint64_t>(stage),
                                   static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        return order;
    }

    void accumulate_anchor(int stage, int qi, long global_step, long item, float inv_b,
                           AmvmlStepLog& log) {
        const auto& q = dataset_.queries[static_cast<std::size_t>(qi)];
        const int label_i = dataset_.shape_index.at(q.shape_id);
        const TensorF& img = resized_query(qi);
        const float lam_view = static_cast<float>(train_cfg_.lambdas.view);
        const float lam_sa = static_cast<float>(train_cfg_.lambdas.sa);
        const float lam_vg = static_cast<float>(train_cfg_.lambdas.vg);

        auto out_q = tower_->forward(img, false);
        const Eigen::VectorXf w = out_q.attention.cvector();
        const Eigen::VectorXf emb_q = out_q.embedding.cvector();

        Eigen::VectorXf d_emb_q = Eigen::VectorXf::Zero(emb_q.size());
        Eigen::VectorXf d_w = Eigen::VectorXf::Zero(w.size());
        Eigen::VectorXf d_vlogits_q = Eigen::VectorXf::Zero(w.size());
        TensorF d_sal = TensorF::zeros(out_q.saliency.dims());

        struct SetGrads {
            std::vector<ViewPass> passes;
            Eigen::MatrixXf embs; // V x d
            Eigen::MatrixXf demb; // V x d
            Eigen::VectorXf agg;
            Eigen::VectorXf dagg;
        };
        auto make_set = [&](std::vector<ViewPass>&& passes) {
            SetGrads sg;
            sg.passes = std::move(passes);
            sg.embs = stack(sg.passes);
            sg.demb = Eigen::MatrixXf::Zero(sg.embs.rows(), sg.embs.cols());
            sg.agg = aggregate_views<float>(sg.embs, w);
            sg.dagg = Eigen::VectorXf::Zero(sg.agg.size());
            return sg;
        };

        std::optional<SetGrads> pos, neg, tless;
        int label_j = -1;

        if (stage == 1) {
            tless = make_set(forward_view_set(resized_normals_[static_cast<std::size_t>(label_i)], false));
        } else {
            Rng trip_rng = Rng(seed_).fork({hash_tag("triplet"), static_cast<std::uint64_t>(global_step),
                                            static_cast<std::uint64_t>(item)});
            triplets::Triplet trip =
                train_cfg_.mode == triplets::TripletMode::HardTexture
                    ? triplets::make_hard_triplet(q, dataset_, tsm_, trip_rng)
                    : triplets::make_adaptation_triplet(q, dataset_, trip_rng);
            label_j = trip.negative_index;
            if (train_cfg_.mode == triplets::TripletMode::HardTexture) {
                pos = make_set(forward_view_set(trip.positive_views, true));
                neg = make_set(forward_view_set(trip.negative_views, true));
                tless = make_set(forward_view_set(resized_normals_[static_cast<std::size_t>(label_i)], false));
            } else {
                // Textureless triplets: the stored tower-ready views are the
                // triplet's raw normal maps under the input convention.
                pos = make_set(forward_view_set(resized_normals_[static_cast<std::size_t>(label_i)], false));
                neg = make_set(forward_view_set(resized_normals_[static_cast<std::size_t>(label_j)], false));
            }
        }

        // ---- instance loss -------------------------------------------------
        // The query embedding and every individual view embedding are
        // classified against the shape-instance label; per-view supervision
        // matches what retrieval compares at evaluation time.
        double inst_value = 0;
        {
            auto add_query = [&](float weight) {
                inst_value +=
                    weight * instance_loss<float>(emb_q, label_i, *head_, &d_emb_q, weight * inv_b);
            };
            auto add_set = [&](SetGrads& set, int label, float weight) {
                const float per_view = weight / static_cast<float>(set.passes.size());
                for (std::size_t v = 0; v < set.passes.size(); ++v) {
                    Eigen::VectorXf de = Eigen::VectorXf::Zero(set.embs.cols());
                    inst_value += per_view * instance_loss<float>(set.passes[v].emb, label, *head_,
                                                                  &de, per_view * inv_b);
                    set.demb.row(static_cast<int>(v)) += de.transpose();
                }
            };
            // Weighting keeps the textureless (evaluation-domain) views at the
            // same total mass in both modes; the synthesized sets split the
            // remainder in hard-texture mode.
            if (stage == 1) {
                add_query(0.5f);
                add_set(*tless, label_i, 0.5f);
            } else if (train_cfg_.mode == triplets::TripletMode::HardTexture) {
                add_query(0.25f);
                add_set(*tless, label_i, 0.5f);
                add_set(*pos, label_i, 0.125f);
                add_set(*neg, label_j, 0.125f);
            } else {
                add_query(0.25f);
                add_set(*pos, label_i, 0.5f); // doubles as the textureless set
                add_set(*neg, label_j, 0.25f);
            }
        }
        log.inst += inst_value * inv_b;

        if (stage == 2) {
            // ---- saliency --------------------------------------------------
            TensorF d_sal_raw = TensorF::zeros(d_sal.dims());
            const double sa_value = saliency_loss<float>(out_q.saliency, mask4(qi), &d_sal_raw);
            d_sal.array() += d_sal_raw.carray() * (lam_sa * inv_b);
            log.sa += sa_value * inv_b;

            // ---- viewpoint: query plus every multi-view pass ---------------
            double view_value = 0;
            {
                Eigen::VectorXf dlog;
                view_value += 0.5 * viewpoint_loss<float>(out_q.vlogits.cvector(), q.azimuth_bin, &dlog);
                d_vlogits_q += dlog * (0.5f * lam_view * inv_b);
                std::vector<SetGrads*> sets = {&*pos, &*neg};
                if (tless) sets.push_back(&*tless);
                const float per_pass =
                    1.0f / static_cast<float>(sets.size() * dataset_.num_views);
                for (auto* set : sets)
                    for (auto& pass : set->passes) {
                        Eigen::VectorXf dv;
                        view_value += 0.5 * per_pass *
                                      viewpoint_loss<float>(pass.vlogits.cvector(), pass.bin, &dv);
                        pass.vlogits_grad = dv * (0.5f * per_pass * lam_view * inv_b);
                    }
            }
            log.view += view_value * inv_b;

            // ---- viewpoint-guided triplet ----------------------------------
            {
                Eigen::VectorXf da = Eigen::VectorXf::Zero(emb_q.size());
                Eigen::VectorXf dp = Eigen::VectorXf::Zero(emb_q.size());
                Eigen::VectorXf dn = Eigen::VectorXf::Zero(emb_q.size());
                const double vg_value =
                    triplet_loss_vg<float>(emb_q, pos->agg, neg->agg,
                                           static_cast<float>(train_cfg_.margin), &da, &dp, &dn);
                d_emb_q += da * (lam_vg * inv_b);
                pos->dagg += dp * (lam_vg * inv_b);
                neg->dagg += dn * (lam_vg * inv_b);
                log.vg += vg_value * inv_b;
            }
        }

        // ---- aggregate backward: spread dagg over rows and attention -------
        for (auto* set : {pos ? &*pos : nullptr, neg ? &*neg : nullptr, tless ? &*tless : nullptr})
            if (set && set->dagg.size() > 0)
                aggregate_views_backward<float>(set->embs, w, set->dagg, set->demb, d_w);

        // ---- attention gradient routes through the softmax -----------------
        d_vlogits_q += nn::softmax_backward<float>(w, d_w);

        // ---- tower backward passes (recompute with cache) -------------------
        TensorF demb_t({static_cast<int>(emb_q.size())});
        demb_t.vector() = d_emb_q;
        TensorF dvl_t({static_cast<int>(w.size())});
        dvl_t.vector() = d_vlogits_q;
        tower_->forward(img, true);
        tower_->backward(demb_t, dvl_t, stage == 2 ? &d_sal : nullptr);

        for (auto* set : {pos ? &*pos : nullptr, neg ? &*neg : nullptr, tless ? &*tless : nullptr}) {
            if (!set) continue;
            for (std::size_t v = 0; v < set->passes.size(); ++v) {
                auto& pass = set->passes[v];
                const bool has_vlog = pass.vlogits_grad.size() > 0;
                Eigen::VectorXf drow = set->demb.row(static_cast<int>(v)).transpose();
                if (drow.isZero(0) && !has_vlog) continue;
                tower_->forward(pass.image, true);
                TensorF de({static_cast<int>(drow.size())});
                de.vector() = drow;
                TensorF dv({static_cast<int>(w.size())});
                if (has_vlog)
                    dv.vector() = pass.vlogits_grad;
                else
                    dv.set_zero();
                tower_->backward(de, dv, nullptr);
            }
        }
    }

    const data::Dataset& dataset_;
    triplets::FrozenTsm tsm_;
    AmvmlConfig net_cfg_;
    AmvmlTrainConfig train_cfg_;
    std::uint64_t seed_;
    std::unique_ptr<Tower<float>> tower_;
    std::unique_ptr<InstanceHead<float>> head_;
    std::vector<nn::Param<float>*> params_;
    std::unique_ptr<nn::Sgd<float>> opt_;
    std::vector<std::vector<TensorF>> resized_normals_;
    std::vector<TensorF> resized_queries_;
    std::vector<std::vector<float>> masks4_;
    std::vector<int> train_indices_;
};

} // namespace ibsr::amvml
