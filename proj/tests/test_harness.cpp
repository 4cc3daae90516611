#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <regex>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/png_io.hpp"
#include "ibsr/data/manifest.hpp"
#include "ibsr/harness/commands.hpp"

using namespace ibsr;
using namespace ibsr::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ExperimentConfig tiny_config(std::uint64_t seed = 7) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.toy.num_shapes = 3;
    cfg.toy.num_textures = 2;
    cfg.toy.image_size = 32;
    cfg.toy.seed = seed;
    cfg.tsm_net.gen_width = 4;
    cfg.tsm_net.enc_width = 4;
    cfg.tsm_net.disc_width = 4;
    cfg.tsm_net.est_width = 4;
    cfg.tsm_train.batch_size = 2;
    cfg.tsm_train.steps = 4;
    cfg.tsm_train.estimator_steps = 8;
    cfg.amvml_net.image_size = 32;
    cfg.amvml_net.width = 4;
    cfg.amvml_net.embed_dim = 8;
    cfg.amvml_net.num_views = 4;
    cfg.amvml_train.batch_size = 4;
    cfg.amvml_train.warmup_epochs = 1;
    cfg.amvml_train.finetune_epochs = 2;
    cfg.amvml_train.warmup_hold = 1;
    cfg.amvml_train.finetune_hold = 1;
    return cfg;
}

std::map<std::string, std::string> parse_kv_line(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::regex re(R"((\w+)=([-+eE0-9.]+))");
    for (auto it = std::sregex_iterator(line.begin(), line.end(), re); it != std::sregex_iterator(); ++it)
        kv[(*it)[1]] = (*it)[2];
    return kv;
}

} // namespace

TEST_CASE("config: defaults are the published hyperparameters") {
    ExperimentConfig cfg;
    CHECK(cfg.tsm_train.lr == 2e-4);
    CHECK(cfg.tsm_train.beta1 == 0.5);
    CHECK(cfg.tsm_train.beta2 == 0.999);
    CHECK(cfg.tsm_train.batch_size == 16);
    CHECK(cfg.tsm_net.image_size == 256);
    CHECK(cfg.tsm_net.z_dim == 8);
    CHECK(cfg.tsm_train.lambdas.rec == 10.0);
    CHECK(cfg.tsm_train.lambdas.kl == 0.01);
    CHECK(cfg.tsm_train.lambdas.cls == 1.0);
    CHECK(cfg.amvml_train.lr == 0.002);
    CHECK(cfg.amvml_train.momentum == 0.9);
    CHECK(cfg.amvml_train.weight_decay == 4e-4);
    CHECK(cfg.amvml_train.batch_size == 24);
    CHECK(cfg.amvml_net.image_size == 224);
    CHECK(cfg.amvml_net.num_views == 12);
    CHECK(cfg.amvml_net.embed_dim == 256);
    CHECK(cfg.amvml_train.margin == 0.1);
    CHECK(cfg.amvml_train.lambdas.view == 0.5);
    CHECK(cfg.amvml_train.lambdas.sa == 1.0);
    CHECK(cfg.amvml_train.lambdas.vg == 3.0);
    CHECK(cfg.amvml_train.warmup_epochs == 20);
    CHECK(cfg.amvml_train.finetune_epochs == 60);
    CHECK(cfg.amvml_train.warmup_hold == 10);
    CHECK(cfg.amvml_train.finetune_hold == 20);
    CHECK(cfg.amvml_train.mode == triplets::TripletMode::HardTexture);
    CHECK(cfg.eval_ks == std::vector<int>{1, 10});
}

TEST_CASE("config: JSON round-trip and scale") {
    ExperimentConfig cfg = tiny_config();
    cfg.amvml_train.mode = triplets::TripletMode::Adaptation;
    ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.amvml_train.mode == triplets::TripletMode::Adaptation);

    ExperimentConfig big;
    big.apply_scale(0.1);
    CHECK(big.amvml_train.warmup_epochs == 2);
    CHECK(big.amvml_train.finetune_epochs == 6);
    CHECK(big.amvml_train.warmup_hold == 1);
    CHECK(big.amvml_train.finetune_hold == 2);
    CHECK_THROWS_AS(big.apply_scale(0.0), Error);

    CHECK_THROWS_AS(ExperimentConfig::from_json("{\"amvml\": {\"mode\": \"bogus\"}}"), Error);
    CHECK_THROWS_AS(ExperimentConfig::from_json("not json"), Error);
}

TEST_CASE("checkpoint: tensors round-trip bitwise; version mismatch fails loudly") {
    Rng rng(1);
    Checkpoint ck;
    ck.module = "test";
    ck.seed = 99;
    ck.step = 123;
    ck.config_json = "{\"a\":1}";
    ck.scalars["counter"] = 17;
    ck.put("w", TensorF::normal({3, 4, 5}, rng));
    ck.put("b", TensorF::normal({7}, rng));

    const fs::path dir = temp_dir("ibsr_ckpt_test");
    const std::string path = (dir / "test.ckpt").string();
    ck.save(path);
    Checkpoint back = Checkpoint::load_file(path);
    CHECK(back.module == "test");
    CHECK(back.seed == 99);
    CHECK(back.step == 123);
    CHECK(back.config_json == ck.config_json);
    CHECK(back.scalars.at("counter") == 17);
    CHECK((back.get("w").carray() == ck.get("w").carray()).all());
    CHECK((back.get("b").carray() == ck.get("b").carray()).all());
    CHECK_THROWS_AS(back.get("missing"), Error);

    // Patch the version field (offset 4, little-endian u32) and reload.
    auto bytes = read_file_bytes(path);
    bytes[4] = 99;
    write_file_bytes(path, bytes.data(), bytes.size());
    try {
        Checkpoint::load_file(path);
        FAIL("expected version error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("gen-toy command: determinism, manifest validates, force semantics") {
    const fs::path d1 = temp_dir("ibsr_gen1");
    const fs::path d2 = temp_dir("ibsr_gen2");
    GenToyArgs args;
    args.seed = 5;
    args.shapes = 3;
    args.textures = 2;
    args.image_size = 32;
    args.num_views = 4;
    args.out = d1.string();
    args.force = true;
    cmd_gen_toy(args);
    args.out = d2.string();
    cmd_gen_toy(args);

    // Identical directory trees, byte for byte.
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(d1))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), d1));
    REQUIRE(!files.empty());
    for (const auto& rel : files)
        CHECK(read_file_bytes((d1 / rel).string()) == read_file_bytes((d2 / rel).string()));

    const auto manifest = data::load_manifest((d1 / "manifest.json").string());
    CHECK(manifest.pool_paths.size() == 3);
    const auto ds = data::load_dataset(manifest);
    CHECK(ds.pool.size() == 3);

    // Existing non-empty dir without --force is rejected.
    args.out = d1.string();
    args.force = false;
    CHECK_THROWS_AS(cmd_gen_toy(args), Error);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("train-tsm: loss log schema and resume equivalence") {
    const fs::path full_dir = temp_dir("ibsr_tsm_full");
    const fs::path part_dir = temp_dir("ibsr_tsm_part");
    const fs::path resumed_dir = temp_dir("ibsr_tsm_resumed");

    ExperimentConfig cfg = tiny_config(31);

    // Uninterrupted run of 4 steps.
    const std::string full_ck = cmd_train_tsm(cfg, full_dir.string());

    // 2 steps, checkpoint, then resume to 4.
    ExperimentConfig half = cfg;
    half.tsm_train.steps = 2;
    const std::string part_ck = cmd_train_tsm(half, part_dir.string());
    const std::string resumed_ck = cmd_train_tsm(cfg, resumed_dir.string(), part_ck);

    Checkpoint a = Checkpoint::load_file(full_ck);
    Checkpoint b = Checkpoint::load_file(resumed_ck);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        CHECK(a.tensors[i].first == b.tensors[i].first);
        CHECK((a.tensors[i].second.carray() == b.tensors[i].second.carray()).all());
    }

    // Log: four loss columns on every step line.
    std::ifstream log((full_dir / "tsm_log.txt").string());
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto kv = parse_kv_line(line);
        for (const char* key : {"step", "adv", "rec", "kl", "cls"}) CHECK(kv.count(key) == 1);
        ++lines;
    }
    CHECK(lines == 4);

    fs::remove_all(full_dir);
    fs::remove_all(part_dir);
    fs::remove_all(resumed_dir);
}

TEST_CASE("train-amvml: adaptation runs without TSM; lr trace matches the closed form") {
    const fs::path dir = temp_dir("ibsr_amvml_run");
    ExperimentConfig cfg = tiny_config(17);
    cfg.amvml_train.mode = triplets::TripletMode::Adaptation;
    cfg.amvml_train.warmup_epochs = 2;
    cfg.amvml_train.finetune_epochs = 4;
    cfg.amvml_train.warmup_hold = 1;
    cfg.amvml_train.finetune_hold = 2;

    const std::string ck_path = cmd_train_amvml(cfg, dir.string());
    CHECK(fs::exists(ck_path));

    std::ifstream log((dir / "amvml_log.txt").string());
    std::string line;
    bool saw_stage2_marker = false;
    int max_stage1_epoch = -1;
    while (std::getline(log, line)) {
        if (line.rfind("# stage 2", 0) == 0) {
            saw_stage2_marker = true;
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        const auto kv = parse_kv_line(line);
        REQUIRE(kv.count("stage"));
        REQUIRE(kv.count("lr"));
        const int stage = std::stoi(kv.at("stage"));
        const int epoch = std::stoi(kv.at("epoch"));
        if (stage == 1) max_stage1_epoch = std::max(max_stage1_epoch, epoch);
        const double lr = std::stod(kv.at("lr"));
        const double expect = stage == 1 ? nn::lr_at_epoch(cfg.amvml_train.lr, epoch, 2, 1)
                                         : nn::lr_at_epoch(cfg.amvml_train.lr, epoch, 4, 2);
        CHECK(lr == doctest::Approx(expect).epsilon(1e-9));
        for (const char* key : {"inst", "view", "sa", "vg", "obj"}) CHECK(kv.count(key) == 1);
    }
    CHECK(saw_stage2_marker);
    CHECK(max_stage1_epoch == 1); // stage boundary at the configured warmup length

    // Checkpoint reload reproduces descriptors bitwise.
    AmvmlBundle bundle = load_amvml_bundle(ck_path);
    data::Dataset ds = load_dataset_from_config(cfg);
    const auto d1 = bundle.describe(ds.queries[0].image);
    AmvmlBundle bundle2 = load_amvml_bundle(ck_path);
    const auto d2 = bundle2.describe(ds.queries[0].image);
    CHECK((d1.embedding - d2.embedding).norm() == 0.0f);
    CHECK((d1.attention - d2.attention).norm() == 0.0f);

    // Hard-texture mode without a TSM checkpoint is a usage error.
    ExperimentConfig hard = cfg;
    hard.amvml_train.mode = triplets::TripletMode::HardTexture;
    const fs::path dir2 = temp_dir("ibsr_amvml_notsm");
    CHECK_THROWS_AS(cmd_train_amvml(hard, dir2.string()), Error);

    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("build-index and eval: deterministic rebuild and report schema") {
    const fs::path dir = temp_dir("ibsr_index_eval");
    ExperimentConfig cfg = tiny_config(23);
    cfg.amvml_train.mode = triplets::TripletMode::Adaptation;
    const std::string ck = cmd_train_amvml(cfg, (dir / "train").string());

    const std::string idx1 = (dir / "a.index").string();
    const std::string idx2 = (dir / "b.index").string();
    cmd_build_index(cfg, ck, idx1);
    cmd_build_index(cfg, ck, idx2);
    CHECK(read_file_bytes(idx1) == read_file_bytes(idx2));

    const std::string report_path = (dir / "report.json").string();
    const auto report = cmd_eval(cfg, ck, idx1, report_path, true, "val");
    CHECK(fs::exists(report_path));
    const auto j = nlohmann::json::parse(read_text_file(report_path));
    for (const char* field : {"top1", "top10", "hau", "iou", "per_category"})
        CHECK(j.contains(field));
    CHECK(report.overall.top1 >= 0.0);
    CHECK(report.overall.top1 <= 1.0);
    fs::remove_all(dir);
}

TEST_CASE("directory lock: second owner is rejected") {
    const fs::path dir = temp_dir("ibsr_lock");
    {
        DirLock lock(dir.string());
        CHECK_THROWS_AS(DirLock(dir.string()), Error);
    }
    // Released on destruction.
    DirLock again(dir.string());
    fs::remove_all(dir);
}

TEST_CASE("real-format fixture: pre-rendered manifest ingests without code changes") {
    // A 3-shape pool in the import format: pre-rendered normal-map PNGs plus
    // query images with masks, no primitive geometry anywhere.
    const fs::path dir = temp_dir("ibsr_real_fixture");
    fs::create_directories(dir / "shapes");
    fs::create_directories(dir / "queries");
    Rng rng(77);
    const int V = 4, N = 32;
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["num_categories"] = 2;
    manifest["num_views"] = V;

    auto make_normal_png = [&](const fs::path& path) {
        TensorF img = TensorF::constant({3, N, N}, 0.5f);
        // A centered "object" disc of valid unit normals.
        for (int y = 8; y < 24; ++y)
            for (int x = 8; x < 24; ++x) {
                const float nx = static_cast<float>(rng.uniform(-0.4, 0.4));
                const float ny = static_cast<float>(rng.uniform(-0.4, 0.4));
                const float nz = std::sqrt(std::max(0.0f, 1.0f - nx * nx - ny * ny));
                img(0, y, x) = (nx + 1) / 2;
                img(1, y, x) = (ny + 1) / 2;
                img(2, y, x) = (nz + 1) / 2;
            }
        write_png(path.string(), to_u8(img));
    };

    for (int s = 0; s < 3; ++s) {
        const std::string id = "ext_" + std::to_string(s);
        nlohmann::json sj;
        sj["shape_id"] = id;
        sj["category"] = s % 2;
        std::vector<float> az;
        std::vector<std::string> views;
        for (int v = 0; v < V; ++v) {
            az.push_back(360.0f * v / V);
            const std::string rel = "shapes/" + id + "_n" + std::to_string(v) + ".png";
            make_normal_png(dir / rel);
            views.push_back(rel);
        }
        sj["view_azimuths"] = az;
        sj["normal_views"] = views;
        write_text_file((dir / "shapes" / (id + ".json")).string(), sj.dump());
        manifest["pool"].push_back("shapes/" + id + ".json");
    }
    for (int q = 0; q < 4; ++q) {
        const std::string id = "extq_" + std::to_string(q);
        nlohmann::json qj;
        qj["query_id"] = id;
        qj["shape_id"] = "ext_" + std::to_string(q % 3);
        qj["category"] = q % 2;
        qj["azimuth_bin"] = q % V;
        TensorF img = TensorF::uniform({3, N, N}, rng, 0, 1);
        std::vector<std::uint8_t> mask(N * N, 0);
        for (int y = 10; y < 20; ++y)
            for (int x = 10; x < 20; ++x) mask[static_cast<std::size_t>(y) * N + x] = 1;
        write_png((dir / "queries" / (id + ".png")).string(), to_u8(img));
        write_mask_png((dir / "queries" / (id + "_mask.png")).string(), mask, N, N);
        qj["image"] = "queries/" + id + ".png";
        qj["mask"] = "queries/" + id + "_mask.png";
        write_text_file((dir / "queries" / (id + ".json")).string(), qj.dump());
        manifest["queries"].push_back("queries/" + id + ".json");
    }
    write_text_file((dir / "manifest.json").string(), manifest.dump(2));

    // Train a tiny adaptation model on toy data, then point the pipeline at
    // the imported manifest: load, index, rank, recall-only eval.
    ExperimentConfig toy_cfg = tiny_config(41);
    toy_cfg.amvml_train.mode = triplets::TripletMode::Adaptation;
    const fs::path train_dir = temp_dir("ibsr_real_fixture_train");
    const std::string ck = cmd_train_amvml(toy_cfg, train_dir.string());

    ExperimentConfig real_cfg = toy_cfg;
    real_cfg.manifest_path = (dir / "manifest.json").string();
    const std::string idx_path = (dir / "pool.index").string();
    cmd_build_index(real_cfg, ck, idx_path);
    const auto report = cmd_eval(real_cfg, ck, idx_path, (dir / "report.json").string(),
                                 /*with_geometry=*/false, "all");
    CHECK(report.overall.query_count == 4);
    CHECK(report.overall.top1 >= 0.0);

    // Geometry metrics demand proxies, which imports cannot provide.
    try {
        cmd_eval(real_cfg, ck, idx_path, "", true, "all");
        FAIL("expected missing-proxy error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Referential);
        CHECK(std::string(e.what()).find("ext_") != std::string::npos);
    }

    fs::remove_all(dir);
    fs::remove_all(train_dir);
}
