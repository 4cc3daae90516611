#pragma once

#include <functional>
#include <memory>

#include "ibsr/data/toyshapes.hpp"
#include "ibsr/nn/optim.hpp"
#include "ibsr/tsm/losses.hpp"
#include "ibsr/tsm/networks.hpp"

namespace ibsr::tsm {

struct TsmTrainConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 16;
    int steps = 200;
    bool one_hot_codes = false; // feed ground-truth one-hot c instead of the estimator's softmax
    TsmLambdas lambdas;
    int estimator_steps = 240;
    double estimator_lr = 1e-3;
};

struct TsmStepLog {
    long step = 0;
    double adv = 0, rec = 0, kl = 0, cls = 0;
};

/// Draws (S, T, T', C) tuples from a toy pool. View renders are cached per
/// (shape, view); textures are applied on demand. View 0 is excluded from
/// training draws and serves as the held-out reconstruction target.
class TsmSampler {
public:
    TsmSampler(const data::Dataset& dataset, int num_textures)
        : dataset_(dataset), num_textures_(num_textures) {
        cache_.resize(dataset.pool.size());
    }

    struct Tuple {
        TensorF normal_map;  // S at pose v
        TensorF textured;    // T at pose v
        TensorF textured_alt; // T' same texture, pose v' != v
        int category = 0;
        int shape_index = 0;
    };

    Tuple draw(Rng& rng) const {
        const int shape = static_cast<int>(rng.uniform_index(dataset_.pool.size()));
        const int tex = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_textures_)));
        const int v_count = dataset_.num_views;
        const int v = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(v_count - 1)));
        int vp = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(v_count - 1)));
        if (vp >= v) ++vp; // uniform over views excluding v
        return assemble(shape, tex, v, vp);
    }

    Tuple holdout(int shape, int tex) const {
        return assemble(shape, tex, 0, dataset_.num_views / 2);
    }

    Tuple assemble(int shape, int tex, int v, int vp) const {
        const auto& rec = dataset_.pool[static_cast<std::size_t>(shape)];
        Tuple t;
        t.shape_index = shape;
        t.category = rec.category;
        t.normal_map = rec.normal_views[static_cast<std::size_t>(v)];
        const std::uint64_t tex_seed = Rng(0x5eedbeefULL).fork({static_cast<std::uint64_t>(shape)}).state();
        t.textured = data::shade_view(view_render(shape, v), tex, tex_seed);
        t.textured_alt = data::shade_view(view_render(shape, vp), tex, tex_seed);
        return t;
    }

    int num_textures() const { return num_textures_; }

private:
    const data::ViewRender& view_render(int shape, int view) const {
        auto& per_shape = cache_[static_cast<std::size_t>(shape)];
        if (per_shape.empty()) {
            const auto& rec = dataset_.pool[static_cast<std::size_t>(shape)];
            if (rec.primitives.empty())
                raise(ErrorKind::Validation, "TSM sampler needs primitive geometry for " + rec.shape_id);
            const int size = rec.normal_views[0].dim(1);
            per_shape.reserve(rec.view_azimuths.size());
            for (float az : rec.view_azimuths)
                per_shape.push_back(
                    data::render_view(rec.primitives, {az, data::kPoolElevationDeg, 1.0f}, size));
        }
        return per_shape[static_cast<std::size_t>(view)];
    }

    const data::Dataset& dataset_;
    int num_textures_;
    mutable std::vector<std::vector<data::ViewRender>> cache_;
};

/// Trains the frozen category estimator on (normal view -> category) pairs.
inline void train_shape_estimator(ShapeCodeEstimator<float>& est, const data::Dataset& dataset,
                                  const TsmTrainConfig& cfg, Rng base_rng) {
    std::vector<nn::Param<float>*> params;
    est.collect(params);
    nn::Adam<float> opt(params, static_cast<float>(cfg.estimator_lr), 0.9f, 0.999f);
    constexpr int kBatch = 8;
    for (int step = 0; step < cfg.estimator_steps; ++step) {
        nn::zero_grads(params);
        Rng rng = base_rng.fork({hash_tag("estimator"), static_cast<std::uint64_t>(step)});
        for (int b = 0; b < kBatch; ++b) {
            const auto& rec = dataset.pool[rng.uniform_index(dataset.pool.size())];
            const int v = static_cast<int>(rng.uniform_index(rec.normal_views.size()));
            TensorF logits = est.logits(rec.normal_views[static_cast<std::size_t>(v)], true);
            nn::Vec<float> dlogits;
            nn::cross_entropy<float>(logits.cvector(), rec.category, &dlogits);
            TensorF dl(logits.dims());
            dl.vector() = dlogits / static_cast<float>(kBatch);
            est.backward_logits(dl);
        }
        opt.step();
    }
}

/// Texture synthesis stack plus its two optimizers, stepped in the usual
/// alternating pattern: the discriminator maximizes the adversarial value and
/// classifies real images; the encoder/generator minimize the non-saturating
/// adversarial term plus reconstruction, KL and category terms.
class TsmTrainer {
public:
    TsmTrainer(const data::Dataset& dataset, int num_textures, const TsmConfig& net_cfg,
               const TsmTrainConfig& train_cfg, std::uint64_t seed)
        : net_cfg_(net_cfg), train_cfg_(train_cfg), seed_(seed), sampler_(dataset, num_textures) {
        // Networks draw from a dedicated init stream so initialization is
        // independent of data order.
        Rng init = Rng(seed_).fork({hash_tag("tsm-init")});
        encoder_ = std::make_unique<TextureEncoder<float>>(net_cfg_, init);
        generator_ = std::make_unique<TextureGenerator<float>>(net_cfg_, init);
        discriminator_ = std::make_unique<PatchDiscriminator<float>>(net_cfg_, init);
        estimator_ = std::make_unique<ShapeCodeEstimator<float>>(net_cfg_, init);

        train_shape_estimator(*estimator_, dataset, train_cfg_, Rng(seed_));

        encoder_->collect(ge_params_);
        generator_->collect(ge_params_);
        discriminator_->collect(d_params_);
        opt_ge_ = std::make_unique<nn::Adam<float>>(ge_params_, static_cast<float>(train_cfg_.lr),
                                                    static_cast<float>(train_cfg_.beta1),
                                                    static_cast<float>(train_cfg_.beta2));
        opt_d_ = std::make_unique<nn::Adam<float>>(d_params_, static_cast<float>(train_cfg_.lr),
                                                   static_cast<float>(train_cfg_.beta1),
                                                   static_cast<float>(train_cfg_.beta2));
    }

    TsmStepLog step(long step_index) {
        const int batch = train_cfg_.batch_size;
        const float inv_b = 1.0f / static_cast<float>(batch);
        constexpr int kScales = PatchDiscriminator<float>::kScales;
        const float per_scale = 1.0f / static_cast<float>(kScales);
        const float lam_cls = static_cast<float>(train_cfg_.lambdas.cls);
        const float lam_rec = static_cast<float>(train_cfg_.lambdas.rec);
        const float lam_kl = static_cast<float>(train_cfg_.lambdas.kl);

        struct Item {
            TsmSampler::Tuple data;
            TextureEncoder<float>::Output enc_t, enc_tp;
            TensorF z, zp, eps, epsp, code;
            TensorF fake_z, fake_zp;
        };
        std::vector<Item> items(static_cast<std::size_t>(batch));

        for (int b = 0; b < batch; ++b) {
            Rng rng = Rng(seed_).fork({hash_tag("tsm-data"), static_cast<std::uint64_t>(step_index),
                                       static_cast<std::uint64_t>(b)});
            Item& it = items[static_cast<std::size_t>(b)];
            it.data = sampler_.draw(rng);
            it.enc_t = encoder_->forward(it.data.textured, false);
            it.enc_tp = encoder_->forward(it.data.textured_alt, false);
            it.z = sample_latent(it.enc_t.mu, it.enc_t.logvar, rng, &it.eps);
            it.zp = sample_latent(it.enc_tp.mu, it.enc_tp.logvar, rng, &it.epsp);
            it.code = category_code(it.data);
            it.fake_z = generator_->forward(it.data.normal_map, it.z, it.code, false);
            it.fake_zp = generator_->forward(it.data.normal_map, it.zp, it.code, false);
        }

        TsmStepLog log;
        log.step = step_index;

        // Discriminator update: minimize -(adv value) + lambda_cls * CE(real).
        nn::zero_grads(d_params_);
        for (auto& it : items) {
            struct Pass {
                const TensorF* img;
                bool one_minus;
                float weight;
                bool is_real;
            };
            const Pass passes[3] = {{&it.data.textured, false, 1.0f, true},
                                    {&it.fake_z, true, 0.5f, false},
                                    {&it.fake_zp, true, 0.5f, false}};
            for (const auto& pass : passes) {
                auto out = discriminator_->forward(*pass.img, true);
                std::array<TensorF, kScales> dprobs, dcls;
                for (int s = 0; s < kScales; ++s) {
                    dprobs[s] = TensorF::zeros(out.probs[s].dims());
                    dcls[s] = TensorF::zeros(out.cls_logits[s].dims());
                    // d(-adv)/dprob, batch-averaged.
                    log.adv += per_scale * pass.weight * inv_b *
                               detail::patch_log_mean(out.probs[s], pass.one_minus, &dprobs[s],
                                                      -per_scale * pass.weight * inv_b);
                    if (pass.is_real) {
                        nn::Vec<float> dlogits;
                        const float ce =
                            nn::cross_entropy<float>(out.cls_logits[s].cvector(), it.data.category, &dlogits);
                        log.cls += per_scale * ce * inv_b;
                        dcls[s].vector() = dlogits * (per_scale * lam_cls * inv_b);
                    }
                }
                discriminator_->backward(dprobs, dcls);
            }
        }
        opt_d_->step();

        // Encoder/generator update against the freshly stepped discriminator.
        nn::zero_grads(ge_params_);
        for (auto& it : items) {
            TensorF dmu_t = TensorF::zeros(it.z.dims()), dlv_t = TensorF::zeros(it.z.dims());
            TensorF dmu_tp = TensorF::zeros(it.z.dims()), dlv_tp = TensorF::zeros(it.z.dims());

            struct Path {
                const TensorF* z;
                const TensorF* eps;
                TextureEncoder<float>::Output* enc;
                const TensorF* enc_input;
                TensorF* dmu;
                TensorF* dlv;
            };
            Path paths[2] = {{&it.z, &it.eps, &it.enc_t, &it.data.textured, &dmu_t, &dlv_t},
                             {&it.zp, &it.epsp, &it.enc_tp, &it.data.textured_alt, &dmu_tp, &dlv_tp}};

            for (auto& path : paths) {
                TensorF img = generator_->forward(it.data.normal_map, *path.z, it.code, true);
                auto out = discriminator_->forward(img, true);
                std::array<TensorF, kScales> dprobs, dcls;
                for (int s = 0; s < kScales; ++s) {
                    dprobs[s] = TensorF::zeros(out.probs[s].dims());
                    dcls[s] = TensorF(out.cls_logits[s].dims());
                    // Non-saturating generator view: minimize -0.5 log D(fake).
                    detail::patch_log_mean(out.probs[s], false, &dprobs[s],
                                           -0.5f * per_scale * inv_b);
                    nn::Vec<float> dlogits;
                    const float ce =
                        nn::cross_entropy<float>(out.cls_logits[s].cvector(), it.data.category, &dlogits);
                    log.cls += 0.5f * per_scale * ce * inv_b;
                    dcls[s].vector() = dlogits * (0.5f * per_scale * lam_cls * inv_b);
                }
                TensorF dimg = discriminator_->backward(dprobs, dcls);

                // Reconstruction toward T for both latent routes.
                const float n = static_cast<float>(img.size());
                double rec_term = 0;
                for (Eigen::Index i = 0; i < img.size(); ++i) {
                    const float diff = img[i] - it.data.textured[i];
                    rec_term += std::fabs(diff) / n;
                    dimg[i] += lam_rec * inv_b * (diff > 0 ? 1.0f : (diff < 0 ? -1.0f : 0.0f)) / n;
                }
                log.rec += rec_term * inv_b;

                auto code_grads = generator_->backward(dimg);
                TensorF dz(code_grads.dz.dims());
                dz.array() = code_grads.dz.carray();
                sample_latent_backward(dz, path.enc->logvar, *path.eps, *path.dmu, *path.dlv);
            }

            // KL terms and the two encoder backward passes.
            for (auto& path : paths) {
                for (Eigen::Index i = 0; i < path.enc->mu.size(); ++i) {
                    const float mu = path.enc->mu[i], lv = path.enc->logvar[i];
                    const float var = std::exp(lv);
                    log.kl += 0.5 * (mu * mu + var - 1.0f - lv) * inv_b;
                    (*path.dmu)[i] += lam_kl * inv_b * mu;
                    (*path.dlv)[i] += lam_kl * inv_b * 0.5f * (var - 1.0f);
                }
                encoder_->forward(*path.enc_input, true);
                encoder_->backward(*path.dmu, *path.dlv);
            }
        }
        opt_ge_->step();

        if (!std::isfinite(log.adv) || !std::isfinite(log.rec) || !std::isfinite(log.kl) ||
            !std::isfinite(log.cls))
            raise(ErrorKind::Numeric,
                  "non-finite TSM loss at step " + std::to_string(step_index) + ": adv=" +
                      std::to_string(log.adv) + " rec=" + std::to_string(log.rec) + " kl=" +
                      std::to_string(log.kl) + " cls=" + std::to_string(log.cls));
        return log;
    }

    /// Held-out reconstruction: view 0 (never a reconstruction target during
    /// training) reconstructed from posterior means, averaged over the pool
    /// and textures.
    double holdout_rec(const data::Dataset& dataset, int num_textures) {
        double acc = 0;
        int count = 0;
        for (int shape = 0; shape < static_cast<int>(dataset.pool.size()); ++shape) {
            for (int tex = 0; tex < num_textures; ++tex) {
                auto t = sampler_.holdout(shape, tex);
                auto enc_t = encoder_->forward(t.textured, false);
                auto enc_tp = encoder_->forward(t.textured_alt, false);
                TensorF code = category_code(t);
                TensorF out_z = generator_->forward(t.normal_map, enc_t.mu, code, false);
                TensorF out_zp = generator_->forward(t.normal_map, enc_tp.mu, code, false);
                acc += rec_loss<float>(out_z, out_zp, t.textured);
                ++count;
            }
        }
        return acc / count;
    }

    TextureEncoder<float>& encoder() { return *encoder_; }
    TextureGenerator<float>& generator() { return *generator_; }
    PatchDiscriminator<float>& discriminator() { return *discriminator_; }
    ShapeCodeEstimator<float>& estimator() { return *estimator_; }
    nn::Adam<float>& opt_ge() { return *opt_ge_; }
    nn::Adam<float>& opt_d() { return *opt_d_; }
    std::vector<nn::Param<float>*>& ge_params() { return ge_params_; }
    std::vector<nn::Param<float>*>& d_params() { return d_params_; }
    const TsmConfig& net_config() const { return net_cfg_; }

private:
    TensorF category_code(const TsmSampler::Tuple& t) {
        if (train_cfg_.one_hot_codes) {
            TensorF c = TensorF::zeros({net_cfg_.num_categories});
            c[t.category] = 1.0f;
            return c;
        }
        return estimator_->code(t.normal_map);
    }

    TsmConfig net_cfg_;
    TsmTrainConfig train_cfg_;
    std::uint64_t seed_;
    TsmSampler sampler_;
    std::unique_ptr<TextureEncoder<float>> encoder_;
    std::unique_ptr<TextureGenerator<float>> generator_;
    std::unique_ptr<PatchDiscriminator<float>> discriminator_;
    std::unique_ptr<ShapeCodeEstimator<float>> estimator_;
    std::vector<nn::Param<float>*> ge_params_, d_params_;
    std::unique_ptr<nn::Adam<float>> opt_ge_, opt_d_;
};

} // namespace ibsr::tsm
