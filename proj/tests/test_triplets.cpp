#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ibsr/data/toyshapes.hpp"
#include "ibsr/triplets/triplets.hpp"

using namespace ibsr;
using namespace ibsr::triplets;

namespace {

struct Fixture {
    data::Dataset ds;
    tsm::TsmConfig cfg;
    std::unique_ptr<tsm::TextureEncoder<float>> enc;
    std::unique_ptr<tsm::TextureGenerator<float>> gen;
    std::unique_ptr<tsm::ShapeCodeEstimator<float>> est;

    Fixture() {
        data::ToyShapeSpec spec;
        spec.num_shapes = 4;
        spec.num_textures = 3;
        spec.image_size = 32;
        spec.seed = 21;
        ds = data::make_toy_dataset(spec, 6);
        cfg.image_size = 32;
        cfg.num_categories = 3;
        cfg.gen_width = 4;
        cfg.enc_width = 4;
        cfg.disc_width = 4;
        cfg.est_width = 4;
        Rng rng(55);
        enc = std::make_unique<tsm::TextureEncoder<float>>(cfg, rng);
        gen = std::make_unique<tsm::TextureGenerator<float>>(cfg, rng);
        est = std::make_unique<tsm::ShapeCodeEstimator<float>>(cfg, rng);
    }

    FrozenTsm frozen() { return {enc.get(), gen.get(), est.get()}; }
};

} // namespace

TEST_CASE("hard triplet: invariants hold") {
    Fixture f;
    Rng rng(9);
    const auto& anchor = f.ds.queries[0];
    Triplet t = make_hard_triplet(anchor, f.ds, f.frozen(), rng);
    CHECK(t.mode == TripletMode::HardTexture);
    CHECK(t.positive_shape_id == anchor.shape_id);
    CHECK(t.negative_shape_id != t.positive_shape_id);
    CHECK(t.positive_views.size() == 6);
    CHECK(t.negative_views.size() == 6);
    for (const auto& v : t.positive_views) {
        CHECK(v.dim(1) == 32);
        CHECK(v.carray().minCoeff() >= 0.0f);
        CHECK(v.carray().maxCoeff() <= 1.0f);
    }
}

TEST_CASE("hard triplet: deterministic under a fixed rng") {
    Fixture f;
    Rng r1(123), r2(123);
    Triplet a = make_hard_triplet(f.ds.queries[3], f.ds, f.frozen(), r1);
    Triplet b = make_hard_triplet(f.ds.queries[3], f.ds, f.frozen(), r2);
    CHECK(a.negative_index == b.negative_index);
    for (std::size_t v = 0; v < a.positive_views.size(); ++v)
        CHECK((a.positive_views[v].carray() == b.positive_views[v].carray()).all());
    for (std::size_t v = 0; v < a.negative_views.size(); ++v)
        CHECK((a.negative_views[v].carray() == b.negative_views[v].carray()).all());
}

TEST_CASE("hard triplet: negative texture code is the posterior mean of the masked anchor") {
    Fixture f;
    Rng rng(31);
    const auto& anchor = f.ds.queries[5];
    Triplet t = make_hard_triplet(anchor, f.ds, f.frozen(), rng);
    // Recompute the negative views independently from the contract.
    const TensorF masked = apply_mask(anchor.image, anchor.mask);
    const auto e = f.enc->forward(masked, false);
    const auto& neg_shape = f.ds.pool[static_cast<std::size_t>(t.negative_index)];
    for (std::size_t v = 0; v < neg_shape.normal_views.size(); ++v) {
        const TensorF c = f.est->code(neg_shape.normal_views[v]);
        const TensorF expect = f.gen->forward(neg_shape.normal_views[v], e.mu, c, false);
        CHECK((t.negative_views[v].carray() == expect.carray()).all());
    }
}

TEST_CASE("hard triplet: positive and negative views differ pixelwise") {
    Fixture f;
    Rng rng(77);
    Triplet t = make_hard_triplet(f.ds.queries[10], f.ds, f.frozen(), rng);
    bool any_diff = false;
    for (std::size_t v = 0; v < t.positive_views.size(); ++v)
        any_diff = any_diff || !(t.positive_views[v].carray() == t.negative_views[v].carray()).all();
    CHECK(any_diff);
}

TEST_CASE("adaptation triplet: pass-through of pool normals, mode flag, distinct negative") {
    Fixture f;
    Rng rng(17);
    const auto& anchor = f.ds.queries[8];
    Triplet t = make_adaptation_triplet(anchor, f.ds, rng);
    CHECK(t.mode == TripletMode::Adaptation);
    const auto& pos_shape = f.ds.shape_by_id(anchor.shape_id);
    REQUIRE(t.positive_views.size() == pos_shape.normal_views.size());
    for (std::size_t v = 0; v < t.positive_views.size(); ++v)
        CHECK((t.positive_views[v].carray() == pos_shape.normal_views[v].carray()).all());

    for (int trial = 0; trial < 1000; ++trial) {
        Triplet tt = make_adaptation_triplet(anchor, f.ds, rng);
        CHECK(tt.negative_index != tt.positive_index);
        CHECK(tt.negative_shape_id != tt.positive_shape_id);
    }
}

TEST_CASE("triplets: pool of one shape is rejected") {
    Fixture f;
    data::Dataset single;
    single.pool.push_back(f.ds.pool[0]);
    single.shape_index[f.ds.pool[0].shape_id] = 0;
    single.num_views = f.ds.num_views;
    single.num_categories = f.ds.num_categories;
    data::QueryRecord q = f.ds.queries[0];
    q.shape_id = f.ds.pool[0].shape_id;
    Rng rng(1);
    CHECK_THROWS_AS(make_adaptation_triplet(q, single, rng), Error);
    CHECK_THROWS_AS(make_hard_triplet(q, single, f.frozen(), rng), Error);
}

TEST_CASE("triplet modes parse and print") {
    CHECK(mode_from_name("hard-texture") == TripletMode::HardTexture);
    CHECK(mode_from_name("adaptation") == TripletMode::Adaptation);
    CHECK_THROWS_AS(mode_from_name("bogus"), Error);
    CHECK(std::string(mode_name(TripletMode::HardTexture)) == "hard-texture");
}
