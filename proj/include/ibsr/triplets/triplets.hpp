#pragma once

#include <string>
#include <vector>

#include "ibsr/core/image.hpp"
#include "ibsr/data/types.hpp"
#include "ibsr/tsm/networks.hpp"

namespace ibsr::triplets {

enum class TripletMode { HardTexture, Adaptation };

inline const char* mode_name(TripletMode m) {
    return m == TripletMode::HardTexture ? "hard-texture" : "adaptation";
}

inline TripletMode mode_from_name(const std::string& s) {
    if (s == "hard-texture") return TripletMode::HardTexture;
    if (s == "adaptation") return TripletMode::Adaptation;
    raise(ErrorKind::Validation, "unknown triplet mode: " + s);
}

struct Triplet {
    TensorF anchor;
    std::vector<TensorF> positive_views;
    std::vector<TensorF> negative_views;
    std::string positive_shape_id;
    std::string negative_shape_id;
    int positive_index = -1; // pool positions, for instance labels
    int negative_index = -1;
    TripletMode mode = TripletMode::HardTexture;
};

/// Frozen texture-synthesis stack used for online triplet generation. The
/// pointers are non-owning; parameters must not change while triplets are
/// being produced.
struct FrozenTsm {
    tsm::TextureEncoder<float>* encoder = nullptr;
    tsm::TextureGenerator<float>* generator = nullptr;
    tsm::ShapeCodeEstimator<float>* estimator = nullptr;
};

namespace detail {

inline int draw_negative(const data::Dataset& pool, int positive, Rng& rng) {
    if (pool.pool.size() < 2)
        raise(ErrorKind::Validation, "triplet generation needs a pool of at least 2 shapes");
    int j = static_cast<int>(rng.uniform_index(pool.pool.size() - 1));
    if (j >= positive) ++j;
    return j;
}

} // namespace detail

/// Hard triplet: positive views are the anchor's shape re-textured with a
/// random latent code (one z shared across views); negative views are a random
/// other shape carrying the anchor's texture code, taken as the posterior mean
/// of the encoder on the mask-cropped anchor.
inline Triplet make_hard_triplet(const data::QueryRecord& anchor, const data::Dataset& pool,
                                 const FrozenTsm& tsm, Rng& rng) {
    const int i = pool.shape_index.count(anchor.shape_id) ? pool.shape_index.at(anchor.shape_id) : -1;
    if (i < 0) raise(ErrorKind::Referential, "anchor shape not in pool: " + anchor.shape_id);
    const int j = detail::draw_negative(pool, i, rng);

    TensorF z = TensorF::normal({tsm.generator->z_dim()}, rng);

    const TensorF masked = apply_mask(anchor.image, anchor.mask);
    const auto enc = tsm.encoder->forward(masked, false);

    Triplet t;
    t.mode = TripletMode::HardTexture;
    t.anchor = anchor.image;
    t.positive_index = i;
    t.negative_index = j;
    t.positive_shape_id = pool.pool[static_cast<std::size_t>(i)].shape_id;
    t.negative_shape_id = pool.pool[static_cast<std::size_t>(j)].shape_id;

    const auto& pos_shape = pool.pool[static_cast<std::size_t>(i)];
    const auto& neg_shape = pool.pool[static_cast<std::size_t>(j)];
    t.positive_views.reserve(pos_shape.normal_views.size());
    t.negative_views.reserve(neg_shape.normal_views.size());
    for (const auto& s : pos_shape.normal_views) {
        const TensorF c = tsm.estimator->code(s);
        t.positive_views.push_back(tsm.generator->forward(s, z, c, false));
    }
    for (const auto& s : neg_shape.normal_views) {
        const TensorF c = tsm.estimator->code(s);
        t.negative_views.push_back(tsm.generator->forward(s, enc.mu, c, false));
    }
    return t;
}

/// Baseline triplet: positive and negative view sets are the raw textureless
/// normal renderings.
inline Triplet make_adaptation_triplet(const data::QueryRecord& anchor, const data::Dataset& pool,
                                       Rng& rng) {
    const int i = pool.shape_index.count(anchor.shape_id) ? pool.shape_index.at(anchor.shape_id) : -1;
    if (i < 0) raise(ErrorKind::Referential, "anchor shape not in pool: " + anchor.shape_id);
    const int j = detail::draw_negative(pool, i, rng);

    Triplet t;
    t.mode = TripletMode::Adaptation;
    t.anchor = anchor.image;
    t.positive_index = i;
    t.negative_index = j;
    t.positive_shape_id = pool.pool[static_cast<std::size_t>(i)].shape_id;
    t.negative_shape_id = pool.pool[static_cast<std::size_t>(j)].shape_id;
    t.positive_views = pool.pool[static_cast<std::size_t>(i)].normal_views;
    t.negative_views = pool.pool[static_cast<std::size_t>(j)].normal_views;
    return t;
}

} // namespace ibsr::triplets
