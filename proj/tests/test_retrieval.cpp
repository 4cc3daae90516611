#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "ibsr/core/binio.hpp"
#include "ibsr/retrieval/evaluate.hpp"
#include "ibsr/retrieval/geometry.hpp"
#include "ibsr/retrieval/index.hpp"
#include "ibsr/retrieval/metrics.hpp"

using namespace ibsr;
using namespace ibsr::retrieval;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Independent brute-force references. Deliberately written in a different
// style than the library code (double precision, flat loops, no early exits).
// ---------------------------------------------------------------------------
namespace oracle {

double recall_at_k(const std::vector<std::vector<std::pair<std::string, float>>>& scored,
                   const std::vector<std::string>& truth, int k) {
    int hits = 0;
    for (std::size_t q = 0; q < scored.size(); ++q) {
        // count how many entries strictly beat the truth, plus ties that sort
        // before it lexicographically
        float truth_score = 0;
        bool found = false;
        for (const auto& [id, s] : scored[q])
            if (id == truth[q]) {
                truth_score = s;
                found = true;
            }
        REQUIRE(found);
        int before = 0;
        for (const auto& [id, s] : scored[q]) {
            if (id == truth[q]) continue;
            if (s > truth_score || (s == truth_score && id < truth[q])) ++before;
        }
        const int kk = std::min<int>(k, static_cast<int>(scored[q].size()));
        if (before + 1 <= kk) ++hits;
    }
    return double(hits) / double(scored.size());
}

double mhd(const std::vector<float>& a, const std::vector<float>& b) {
    auto directed = [](const std::vector<float>& from, const std::vector<float>& to) {
        double total = 0;
        for (std::size_t i = 0; i < from.size() / 3; ++i) {
            double best = 1e300;
            for (std::size_t j = 0; j < to.size() / 3; ++j) {
                double d = 0;
                for (int c = 0; c < 3; ++c) {
                    const double diff = double(from[i * 3 + c]) - double(to[j * 3 + c]);
                    d += diff * diff;
                }
                best = std::min(best, d);
            }
            total += std::sqrt(best);
        }
        return total / double(from.size() / 3);
    };
    const double ab = directed(a, b), ba = directed(b, a);
    return ab > ba ? ab : ba;
}

double iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    return inter / uni;
}

} // namespace oracle

namespace {

Eigen::MatrixXf random_unit_rows(int rows, int dim, Rng& rng) {
    Eigen::MatrixXf m(rows, dim);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < dim; ++c) m(r, c) = static_cast<float>(rng.normal());
        m.row(r).normalize();
    }
    return m;
}

std::vector<float> random_points(int n, Rng& rng) {
    std::vector<float> pts(static_cast<std::size_t>(n) * 3);
    for (auto& p : pts) p = static_cast<float>(rng.uniform(-0.5, 0.5));
    return pts;
}

std::vector<std::uint8_t> random_grid(int res, double density, Rng& rng) {
    std::vector<std::uint8_t> g(static_cast<std::size_t>(res) * res * res);
    bool any = false;
    for (auto& v : g) {
        v = rng.uniform() < density ? 1 : 0;
        any = any || v;
    }
    if (!any) g[0] = 1;
    return g;
}

} // namespace

TEST_CASE("index: round-trip is bitwise exact, invariants enforced") {
    Rng rng(1);
    EmbeddingIndex idx(16, 4);
    for (int i = 0; i < 5; ++i)
        idx.add("shape_" + std::to_string(i), random_unit_rows(4, 16, rng));

    const std::string path = (fs::temp_directory_path() / "ibsr_index_test.bin").string();
    idx.save(path);
    EmbeddingIndex back = EmbeddingIndex::load(path);
    REQUIRE(back.count() == 5);
    REQUIRE(back.dim() == 16);
    REQUIRE(back.views() == 4);
    for (int i = 0; i < 5; ++i) {
        CHECK(back.shape_id(i) == idx.shape_id(i));
        CHECK((back.views_of(i) - idx.views_of(i)).cwiseAbs().maxCoeff() == 0.0f);
    }
    // Save again: byte-identical files.
    const std::string path2 = (fs::temp_directory_path() / "ibsr_index_test2.bin").string();
    back.save(path2);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
    fs::remove(path);
    fs::remove(path2);

    Eigen::MatrixXf bad = random_unit_rows(4, 16, rng) * 2.0f;
    CHECK_THROWS_AS(idx.add("bad", bad), Error);
    CHECK_THROWS_AS(idx.add("shape_0", random_unit_rows(4, 16, rng)), Error);
}

TEST_CASE("index file format: exact byte layout") {
    Rng rng(2);
    EmbeddingIndex idx(2, 1);
    Eigen::MatrixXf row(1, 2);
    row << 0.6f, 0.8f;
    idx.add("ab", row);
    const std::string path = (fs::temp_directory_path() / "ibsr_index_layout.bin").string();
    idx.save(path);
    const auto bytes = read_file_bytes(path);
    // magic, version u32, d u32, V u32, count u64, id len u16 + "ab", 2 f32
    REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 8 + 2 + 2 + 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "IBSR");
    CHECK(bytes[4] == 1);  // version LE
    CHECK(bytes[8] == 2);  // d
    CHECK(bytes[12] == 1); // V
    CHECK(bytes[16] == 1); // count
    CHECK(bytes[24] == 2); // id length
    CHECK(bytes[26] == 'a');
    CHECK(bytes[27] == 'b');
    float v0, v1;
    std::memcpy(&v0, &bytes[28], 4);
    std::memcpy(&v1, &bytes[32], 4);
    CHECK(v0 == 0.6f);
    CHECK(v1 == 0.8f);
    fs::remove(path);
}

TEST_CASE("query: cosine identities, bounds, tie-break") {
    Rng rng(3);
    const int d = 8, v = 3;
    EmbeddingIndex idx(d, v);
    Eigen::VectorXf u = random_unit_rows(1, d, rng).row(0).transpose();
    Eigen::MatrixXf same(v, d);
    for (int r = 0; r < v; ++r) same.row(r) = u.transpose();
    idx.add("target", same);
    idx.add("other", random_unit_rows(v, d, rng));

    QueryDescriptor desc;
    desc.embedding = u;
    desc.attention = Eigen::VectorXf::Constant(v, 1.0f / v);
    RankingResult r = query(idx, desc, "q");
    CHECK(r.entries[0].shape_id == "target");
    CHECK(r.entries[0].score == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.entries[0].rank == 1);
    for (const auto& e : r.entries) {
        CHECK(e.score <= 1.0f + 1e-6f);
        CHECK(e.score >= -1.0f - 1e-6f);
    }

    // One-hot attention selects a single view cosine.
    Eigen::MatrixXf views = random_unit_rows(v, d, rng);
    EmbeddingIndex idx2(d, v);
    idx2.add("s", views);
    QueryDescriptor one;
    one.embedding = u;
    one.attention = Eigen::VectorXf::Zero(v);
    one.attention[2] = 1.0f;
    RankingResult r2 = query(idx2, one);
    CHECK(r2.entries[0].score == doctest::Approx(views.row(2).dot(u.transpose())).epsilon(1e-6));

    // Ties broken lexicographically.
    EmbeddingIndex idx3(d, v);
    idx3.add("zeta", same);
    idx3.add("alpha", same);
    RankingResult r3 = query(idx3, desc);
    CHECK(r3.entries[0].shape_id == "alpha");
    CHECK(r3.entries[1].shape_id == "zeta");

    EmbeddingIndex empty(d, v);
    CHECK_THROWS_AS(query(empty, desc), Error);
}

TEST_CASE("topk_recall: examples, clamping, monotonicity, oracle agreement") {
    // Hand example: single query, truth at rank 2.
    RankingResult r;
    r.query_id = "q";
    r.entries = {{"a", 0.9f, 1}, {"truth", 0.8f, 2}, {"c", 0.1f, 3}};
    CHECK(topk_recall({r}, {"truth"}, 1) == doctest::Approx(0.0));
    CHECK(topk_recall({r}, {"truth"}, 2) == doctest::Approx(1.0));
    CHECK(topk_recall({r}, {"truth"}, 100) == doctest::Approx(1.0)); // clamp to pool size

    // 100 random instances against the brute-force oracle; monotone in K.
    Rng rng(4);
    for (int inst = 0; inst < 100; ++inst) {
        const int pool = 2 + static_cast<int>(rng.uniform_index(8));
        const int nq = 1 + static_cast<int>(rng.uniform_index(6));
        std::vector<RankingResult> results;
        std::vector<std::vector<std::pair<std::string, float>>> scored;
        std::vector<std::string> truth;
        for (int q = 0; q < nq; ++q) {
            std::vector<std::pair<std::string, float>> entries;
            for (int s = 0; s < pool; ++s)
                entries.emplace_back("s" + std::to_string(s),
                                     static_cast<float>(rng.uniform_index(4)) * 0.25f);
            scored.push_back(entries);
            std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
            });
            RankingResult rr;
            for (std::size_t i = 0; i < entries.size(); ++i)
                rr.entries.push_back({entries[i].first, entries[i].second, static_cast<int>(i) + 1});
            results.push_back(rr);
            truth.push_back("s" + std::to_string(rng.uniform_index(pool)));
        }
        double prev = 0;
        for (int k = 1; k <= pool; ++k) {
            const double mine = topk_recall(results, truth, k);
            CHECK(mine == doctest::Approx(oracle::recall_at_k(scored, truth, k)));
            CHECK(mine >= prev - 1e-12);
            prev = mine;
        }
        CHECK(prev == doctest::Approx(1.0)); // K = pool size is exhaustive
    }
}

TEST_CASE("modified_hausdorff: identities, symmetry, oracle agreement") {
    std::vector<float> a = {0, 0, 0};
    std::vector<float> b = {1, 0, 0};
    CHECK(modified_hausdorff(a, a) == doctest::Approx(0.0));
    CHECK(modified_hausdorff(a, b) == doctest::Approx(1.0));
    CHECK_THROWS_AS(modified_hausdorff({}, b), Error);

    Rng rng(5);
    for (int inst = 0; inst < 100; ++inst) {
        const auto pa = random_points(3 + static_cast<int>(rng.uniform_index(20)), rng);
        const auto pb = random_points(3 + static_cast<int>(rng.uniform_index(20)), rng);
        const double mine = modified_hausdorff(pa, pb);
        CHECK(std::fabs(mine - oracle::mhd(pa, pb)) <= 1e-9);
        CHECK(std::fabs(mine - modified_hausdorff(pb, pa)) <= 1e-12); // symmetric
        CHECK(mine >= 0.0);
    }
}

TEST_CASE("voxel_iou: identities, bounds, symmetry, oracle agreement") {
    std::vector<std::uint8_t> ga = {1, 1, 0, 0, 1, 1, 0, 0};
    CHECK(voxel_iou(ga, ga) == doctest::Approx(1.0));

    // |A| = 4, |B| = 4, overlap 2 -> 2/6.
    std::vector<std::uint8_t> a8 = {1, 1, 1, 1, 0, 0, 0, 0};
    std::vector<std::uint8_t> b8 = {0, 0, 1, 1, 1, 1, 0, 0};
    CHECK(voxel_iou(a8, b8) == doctest::Approx(2.0 / 6.0));

    std::vector<std::uint8_t> wrong(27, 1);
    CHECK_THROWS_AS(voxel_iou(a8, wrong), Error);

    Rng rng(6);
    for (int inst = 0; inst < 100; ++inst) {
        const auto g1 = random_grid(4, 0.3, rng);
        const auto g2 = random_grid(4, 0.3, rng);
        const double mine = voxel_iou(g1, g2);
        CHECK(mine == doctest::Approx(oracle::iou(g1, g2)));
        CHECK(mine == doctest::Approx(voxel_iou(g2, g1)));
        CHECK(mine >= 0.0);
        CHECK(mine <= 1.0);
    }
}

TEST_CASE("geometry_proxy: normalization bounds, determinism, sphere occupancy") {
    data::Primitive sphere;
    sphere.kind = data::Primitive::Kind::Sphere;
    sphere.radius = 0.37f;
    sphere.center[0] = 0.1f;

    const GeometryProxy p1 = geometry_proxy("s", {sphere}, 2048, 32, 99);
    const GeometryProxy p2 = geometry_proxy("s", {sphere}, 2048, 32, 99);
    CHECK(p1.points == p2.points);
    CHECK(p1.grid == p2.grid);

    // Points inside the normalized unit box; sphere diameter = bbox edge, so
    // every sample sits at radius 1/(2 sqrt 3) from the center.
    double max_pair = 0;
    for (int i = 0; i < p1.point_count(); ++i) {
        for (int c = 0; c < 3; ++c) {
            CHECK(p1.points[static_cast<std::size_t>(i) * 3 + c] >= -0.5f);
            CHECK(p1.points[static_cast<std::size_t>(i) * 3 + c] <= 0.5f);
        }
    }
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            double d = 0;
            for (int c = 0; c < 3; ++c) {
                const double diff = p1.points[static_cast<std::size_t>(i) * 3 + c] -
                                    p1.points[static_cast<std::size_t>(j) * 3 + c];
                d += diff * diff;
            }
            max_pair = std::max(max_pair, std::sqrt(d));
        }
    CHECK(max_pair <= 1.0 + 1e-6);

    // Occupancy fraction of a sphere in its bounding cube: pi/6 within 5%.
    double occupied = 0;
    for (auto g : p1.grid) occupied += g;
    const double fraction = occupied / static_cast<double>(p1.grid.size());
    const double expected = 3.14159265358979 / 6.0;
    CHECK(std::fabs(fraction - expected) / expected < 0.05);
}

TEST_CASE("evaluate: all-correct identities and report schema") {
    Rng rng(7);
    const int d = 8, v = 2, n = 4;
    EmbeddingIndex idx(d, v);
    Eigen::MatrixXf units = random_unit_rows(n, d, rng);
    std::map<std::string, GeometryProxy> proxies;
    data::Primitive sphere;
    sphere.kind = data::Primitive::Kind::Sphere;
    sphere.radius = 0.3f;
    std::vector<data::QueryRecord> queries;
    for (int i = 0; i < n; ++i) {
        const std::string id = "shape_" + std::to_string(i);
        Eigen::MatrixXf rows(v, d);
        for (int r = 0; r < v; ++r) rows.row(r) = units.row(i);
        idx.add(id, rows);
        data::Primitive p = sphere;
        p.center[0] = static_cast<float>(i) * 0.01f;
        proxies[id] = geometry_proxy(id, {p}, 256, 8, 42 + static_cast<std::uint64_t>(i));
        data::QueryRecord q;
        q.query_id = "q" + std::to_string(i);
        q.shape_id = id;
        q.category = i % 2;
        q.image = TensorF::constant({3, 4, 4}, static_cast<float>(i) / n);
        queries.push_back(q);
    }
    // The describe function keys off the constant image value.
    auto describe = [&](const TensorF& img) {
        const int i = static_cast<int>(std::lround(img[0] * n));
        QueryDescriptor desc;
        desc.embedding = units.row(i).transpose();
        desc.attention = Eigen::VectorXf::Constant(v, 1.0f / v);
        return desc;
    };

    const MetricReport report = evaluate(idx, queries, describe, proxies);
    CHECK(report.overall.top1 == doctest::Approx(1.0));
    CHECK(report.overall.top10 == doctest::Approx(1.0));
    CHECK(report.overall.hau == doctest::Approx(0.0));
    CHECK(report.overall.iou == doctest::Approx(1.0));
    CHECK(report.per_category.size() == 2);
    const std::string json = report.to_json();
    for (const char* field : {"top1", "top10", "hau", "iou", "per_category", "category_mean"})
        CHECK(json.find(field) != std::string::npos);

    // Missing proxy -> referential error naming the shape.
    proxies.erase("shape_2");
    try {
        evaluate(idx, queries, describe, proxies);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Referential);
        CHECK(std::string(e.what()).find("shape_2") != std::string::npos);
    }
}

TEST_CASE("evaluate: random index gives chance-level top1") {
    // Expected Top1 under random descriptors is 1/N; average over seeds.
    const int d = 8, v = 2, n = 8;
    double acc = 0;
    const int seeds = 60;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        EmbeddingIndex idx(d, v);
        std::vector<data::QueryRecord> queries;
        for (int i = 0; i < n; ++i) {
            idx.add("s" + std::to_string(i), random_unit_rows(v, d, rng));
            data::QueryRecord q;
            q.query_id = "q" + std::to_string(i);
            q.shape_id = "s" + std::to_string(i);
            q.category = 0;
            q.image = TensorF::zeros({3, 2, 2});
            queries.push_back(q);
        }
        auto describe = [&](const TensorF&) {
            QueryDescriptor desc;
            desc.embedding = random_unit_rows(1, d, rng).row(0).transpose();
            desc.attention = Eigen::VectorXf::Constant(v, 1.0f / v);
            return desc;
        };
        EvaluateOptions opts;
        opts.with_geometry = false;
        const MetricReport r = evaluate(idx, queries, describe, {}, opts);
        acc += r.overall.top1;
    }
    const double mean_top1 = acc / seeds;
    CHECK(mean_top1 > 0.25 / n);
    CHECK(mean_top1 < 4.0 / n);
}
