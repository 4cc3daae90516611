#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>

#include "ibsr/core/binio.hpp"
#include "ibsr/data/manifest.hpp"
#include "ibsr/data/toyshapes.hpp"

using namespace ibsr;
using namespace ibsr::data;
namespace fs = std::filesystem;

namespace {

ToyShapeSpec small_spec(std::uint64_t seed = 7) {
    ToyShapeSpec spec;
    spec.num_shapes = 3;
    spec.primitive_budget = 2;
    spec.num_textures = 4;
    spec.image_size = 32;
    spec.seed = seed;
    return spec;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("toy generation is bitwise deterministic") {
    auto [pool_a, queries_a] = generate_toy_dataset(small_spec(), 6);
    auto [pool_b, queries_b] = generate_toy_dataset(small_spec(), 6);
    REQUIRE(pool_a.size() == pool_b.size());
    for (std::size_t i = 0; i < pool_a.size(); ++i)
        for (std::size_t v = 0; v < pool_a[i].normal_views.size(); ++v)
            CHECK((pool_a[i].normal_views[v].carray() == pool_b[i].normal_views[v].carray()).all());
    REQUIRE(queries_a.size() == queries_b.size());
    for (std::size_t i = 0; i < queries_a.size(); ++i) {
        CHECK((queries_a[i].image.carray() == queries_b[i].image.carray()).all());
        CHECK(queries_a[i].mask == queries_b[i].mask);
        CHECK(queries_a[i].azimuth_bin == queries_b[i].azimuth_bin);
    }
}

TEST_CASE("generated normal maps: foreground norms near 1, background exactly 0.5-gray") {
    auto [pool, queries] = generate_toy_dataset(small_spec(11), 6);
    for (const auto& rec : pool) {
        REQUIRE(rec.normal_views.size() == 6);
        for (const auto& view : rec.normal_views) {
            for (int y = 0; y < view.dim(1); ++y)
                for (int x = 0; x < view.dim(2); ++x) {
                    const float nx = 2 * view(0, y, x) - 1, ny = 2 * view(1, y, x) - 1,
                                nz = 2 * view(2, y, x) - 1;
                    const float n = std::sqrt(nx * nx + ny * ny + nz * nz);
                    const bool is_bg = view(0, y, x) == 0.5f && view(1, y, x) == 0.5f && view(2, y, x) == 0.5f;
                    if (!is_bg) {
                        CHECK(n >= 0.95f);
                        CHECK(n <= 1.05f);
                    }
                }
        }
    }
}

TEST_CASE("sphere center pixel decodes to camera-facing normal") {
    // A camera-space normal map makes the sphere's center pixel (0,0,1) at any
    // azimuth/elevation.
    std::vector<Primitive> prims(1);
    prims[0].kind = Primitive::Kind::Sphere;
    prims[0].radius = 0.45f;
    for (float az : {0.0f, 72.5f}) {
        // Odd image size so one pixel center sits exactly on the optical axis.
        const ViewRender r = render_view(prims, {az, 30.0f, 1.0f}, 65);
        const int c = 32;
        const float nx = 2 * r.normal_map(0, c, c) - 1;
        const float ny = 2 * r.normal_map(1, c, c) - 1;
        const float nz = 2 * r.normal_map(2, c, c) - 1;
        CHECK(std::fabs(nx - 0.0f) < 0.02f);
        CHECK(std::fabs(ny - 0.0f) < 0.02f);
        CHECK(std::fabs(nz - 1.0f) < 0.02f);
    }
}

TEST_CASE("mask agrees with normal-map foreground") {
    auto [pool, queries] = generate_toy_dataset(small_spec(3), 6);
    const auto& rec = pool[0];
    const ViewRender r = render_view(rec.primitives, {0.0f, kPoolElevationDeg, 1.0f}, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const bool bg_gray = r.normal_map(0, y, x) == 0.5f && r.normal_map(1, y, x) == 0.5f &&
                                 r.normal_map(2, y, x) == 0.5f;
            CHECK(bg_gray == (r.mask[static_cast<std::size_t>(y) * 32 + x] == 0));
        }
}

TEST_CASE("lambert shading: solid white texture on a camera-facing box facet") {
    // Box face normal (1,0,0); camera at azimuth 0, elevation 30. The
    // camera-space z of the normal is cos(30 deg), so the white-texture pixel
    // equals that shading factor.
    std::vector<Primitive> prims(1);
    prims[0].kind = Primitive::Kind::Box;
    prims[0].half_extents[0] = 0.4f;
    prims[0].half_extents[1] = 0.4f;
    prims[0].half_extents[2] = 0.4f;
    const ViewRender r = render_view(prims, {0.0f, 30.0f, 1.0f}, 64);
    const TensorF img = shade_view(r, 0, 0); // texture 0 = solid white
    const float expected = std::cos(30.0f * 3.14159265f / 180.0f);
    // Center column hits the +x face straight on.
    const int y = 32, x = 32;
    REQUIRE(r.mask[static_cast<std::size_t>(y) * 64 + x] == 1);
    for (int c = 0; c < 3; ++c) CHECK(img(c, y, x) == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("apply_procedural_texture: deterministic, black background, range check") {
    auto [pool, queries] = generate_toy_dataset(small_spec(5), 6);
    const auto& rec = pool[1];
    const auto views_a = apply_procedural_texture(rec, 2, 99, 4);
    const auto views_b = apply_procedural_texture(rec, 2, 99, 4);
    REQUIRE(views_a.size() == 6);
    for (std::size_t v = 0; v < views_a.size(); ++v)
        CHECK((views_a[v].carray() == views_b[v].carray()).all());

    // Background pixels are exactly zero.
    const ViewRender r = render_view(rec.primitives, {0.0f, kPoolElevationDeg, 1.0f}, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (!r.mask[static_cast<std::size_t>(y) * 32 + x])
                for (int c = 0; c < 3; ++c) CHECK(views_a[0](c, y, x) == 0.0f);

    CHECK_THROWS_AS(apply_procedural_texture(rec, 4, 0, 4), Error); // id out of range
    CHECK_THROWS_AS(apply_procedural_texture(rec, -1, 0, 4), Error);
}

TEST_CASE("queries: valid bins, nonempty masks, matching shape ids") {
    ToyShapeSpec spec = small_spec(13);
    auto ds = make_toy_dataset(spec, 6);
    CHECK(ds.num_views == 6);
    CHECK(ds.num_categories == kToyNumCategories);
    REQUIRE(ds.queries.size() == static_cast<std::size_t>(spec.num_shapes) * kQueriesPerShape);
    for (const auto& q : ds.queries) {
        CHECK(q.azimuth_bin >= 0);
        CHECK(q.azimuth_bin < 6);
        CHECK(ds.shape_index.count(q.shape_id) == 1);
        bool any = false;
        for (auto m : q.mask) any = any || m;
        CHECK(any);
    }
    // Splits: disjoint, covering.
    const auto& train = ds.splits.at("train");
    const auto& val = ds.splits.at("val");
    CHECK(train.size() == static_cast<std::size_t>(spec.num_shapes) * kTrainQueriesPerShape);
    CHECK(train.size() + val.size() == ds.queries.size());
    std::set<int> seen(train.begin(), train.end());
    for (int v : val) CHECK(seen.insert(v).second);
}

TEST_CASE("toy category: dominant primitive kind") {
    std::vector<Primitive> prims(3);
    prims[0].kind = Primitive::Kind::Sphere;
    prims[1].kind = Primitive::Kind::Sphere;
    prims[2].kind = Primitive::Kind::Box;
    CHECK(toy_category(prims) == static_cast<int>(Primitive::Kind::Sphere));
    prims[1].kind = Primitive::Kind::Box;
    CHECK(toy_category(prims) == static_cast<int>(Primitive::Kind::Box));
}

TEST_CASE("manifest: save/load round-trip preserves counts and invariants") {
    const fs::path dir = temp_dir("ibsr_manifest_rt");
    auto [pool, queries] = generate_toy_dataset(small_spec(17), 6);
    std::map<std::string, std::vector<std::string>> splits;
    for (std::size_t i = 0; i < queries.size(); ++i)
        splits[i % kQueriesPerShape < kTrainQueriesPerShape ? "train" : "val"].push_back(
            queries[i].query_id);
    save_dataset(pool, queries, splits, kToyNumCategories, 6, dir.string());

    const DatasetManifest m = load_manifest((dir / "manifest.json").string());
    CHECK(m.version == kManifestVersion);
    CHECK(m.pool_paths.size() == pool.size());
    CHECK(m.query_paths.size() == queries.size());

    const Dataset ds = load_dataset(m);
    CHECK(ds.pool.size() == pool.size());
    CHECK(ds.queries.size() == queries.size());
    CHECK(ds.pool[0].primitives.size() == pool[0].primitives.size());
    // PNG round-trip keeps normals within quantization error.
    for (std::size_t v = 0; v < ds.pool[0].normal_views.size(); ++v) {
        const auto& a = ds.pool[0].normal_views[v];
        const auto& b = pool[0].normal_views[v];
        for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) < 0.01f);
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest: validation failures carry the right category") {
    const fs::path dir = temp_dir("ibsr_manifest_bad");
    auto [pool, queries] = generate_toy_dataset(small_spec(19), 6);
    save_dataset(pool, queries, {}, kToyNumCategories, 6, dir.string());
    const std::string mpath = (dir / "manifest.json").string();

    SUBCASE("missing manifest file") {
        try {
            load_manifest((dir / "nope.json").string());
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Io);
        }
    }

    SUBCASE("query references unknown shape id") {
        const std::string qpath = (dir / "queries" / (queries[0].query_id + ".json")).string();
        auto j = nlohmann::json::parse(read_text_file(qpath));
        j["shape_id"] = "not_a_shape";
        write_text_file(qpath, j.dump());
        try {
            load_manifest(mpath);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Referential);
        }
    }

    SUBCASE("shape with wrong view count") {
        const std::string spath = (dir / "shapes" / (pool[0].shape_id + ".json")).string();
        auto j = nlohmann::json::parse(read_text_file(spath));
        auto views = j["normal_views"].get<std::vector<std::string>>();
        views.pop_back();
        j["normal_views"] = views;
        auto az = j["view_azimuths"].get<std::vector<float>>();
        az.pop_back();
        j["view_azimuths"] = az;
        write_text_file(spath, j.dump());
        try {
            load_manifest(mpath);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Validation);
            CHECK(std::string(e.what()).find("normal_views") != std::string::npos);
        }
    }

    SUBCASE("missing field is named") {
        const std::string spath = (dir / "shapes" / (pool[0].shape_id + ".json")).string();
        auto j = nlohmann::json::parse(read_text_file(spath));
        j.erase("category");
        write_text_file(spath, j.dump());
        try {
            load_manifest(mpath);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Validation);
            CHECK(std::string(e.what()).find("category") != std::string::npos);
        }
    }

    SUBCASE("split id in two splits") {
        auto j = nlohmann::json::parse(read_text_file(mpath));
        j["splits"]["train"] = {queries[0].query_id};
        j["splits"]["val"] = {queries[0].query_id};
        write_text_file(mpath, j.dump());
        try {
            load_manifest(mpath);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Validation);
        }
    }

    SUBCASE("missing image file") {
        fs::remove(dir / "shapes" / (pool[1].shape_id + "_n02.png"));
        try {
            load_manifest(mpath);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Io);
        }
    }

    fs::remove_all(dir);
}
