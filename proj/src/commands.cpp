#include "ibsr/harness/commands.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/png_io.hpp"
#include "ibsr/data/manifest.hpp"
#include "ibsr/data/toyshapes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ibsr::harness {

DirLock::DirLock(const std::string& dir) : path_((fs::path(dir) / ".lock").string()) {
    fs::create_directories(dir);
    if (fs::exists(path_))
        raise(ErrorKind::Io, "checkpoint directory is locked by another process: " + dir);
    std::ofstream f(path_);
    f << "locked\n";
}

DirLock::~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

data::Dataset load_dataset_from_config(const ExperimentConfig& cfg) {
    if (!cfg.manifest_path.empty())
        return data::load_dataset(data::load_manifest(cfg.manifest_path));
    return data::make_toy_dataset(cfg.toy, cfg.amvml_net.num_views);
}

void cmd_gen_toy(const GenToyArgs& args) {
    if (fs::exists(args.out) && !fs::is_empty(args.out) && !args.force)
        raise(ErrorKind::Io, "output directory exists and is not empty (use --force): " + args.out);
    data::ToyShapeSpec spec;
    spec.seed = args.seed;
    spec.num_shapes = args.shapes;
    spec.num_textures = args.textures;
    spec.primitive_budget = args.primitive_budget;
    spec.image_size = args.image_size;
    spec.query_image_size = args.query_image_size;
    auto [pool, queries] = data::generate_toy_dataset(spec, args.num_views);

    std::map<std::string, std::vector<std::string>> splits;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const int within = static_cast<int>(i) % data::kQueriesPerShape;
        splits[within < data::kTrainQueriesPerShape ? "train" : "val"].push_back(queries[i].query_id);
    }
    data::save_dataset(pool, queries, splits, data::kToyNumCategories, args.num_views, args.out);
}

namespace {

json tsm_net_json(const tsm::TsmConfig& c) {
    json j;
    j["image_size"] = c.image_size;
    j["z_dim"] = c.z_dim;
    j["num_categories"] = c.num_categories;
    j["gen_width"] = c.gen_width;
    j["enc_width"] = c.enc_width;
    j["disc_width"] = c.disc_width;
    j["est_width"] = c.est_width;
    return j;
}

tsm::TsmConfig tsm_net_from_json(const json& j) {
    tsm::TsmConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.z_dim = j.at("z_dim").get<int>();
    c.num_categories = j.at("num_categories").get<int>();
    c.gen_width = j.at("gen_width").get<int>();
    c.enc_width = j.at("enc_width").get<int>();
    c.disc_width = j.at("disc_width").get<int>();
    c.est_width = j.at("est_width").get<int>();
    return c;
}

json amvml_net_json(const amvml::AmvmlConfig& c) {
    json j;
    j["image_size"] = c.image_size;
    j["width"] = c.width;
    j["embed_dim"] = c.embed_dim;
    j["num_views"] = c.num_views;
    return j;
}

amvml::AmvmlConfig amvml_net_from_json(const json& j) {
    amvml::AmvmlConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.width = j.at("width").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.num_views = j.at("num_views").get<int>();
    return c;
}

void store_adam(Checkpoint& ck, const std::string& prefix, nn::Adam<float>& opt) {
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ck.put(prefix + ".m." + params[i]->name, opt.moment1()[i]);
        ck.put(prefix + ".v." + params[i]->name, opt.moment2()[i]);
    }
    ck.scalars[prefix + ".t"] = static_cast<std::uint64_t>(opt.step_count());
}

void restore_adam(const Checkpoint& ck, const std::string& prefix, nn::Adam<float>& opt) {
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        opt.moment1()[i] = ck.get(prefix + ".m." + params[i]->name);
        opt.moment2()[i] = ck.get(prefix + ".v." + params[i]->name);
    }
    opt.set_step_count(static_cast<long>(ck.scalars.at(prefix + ".t")));
}

Checkpoint make_tsm_checkpoint(tsm::TsmTrainer& trainer, const ExperimentConfig& cfg, long step) {
    Checkpoint ck;
    ck.module = "tsm";
    ck.seed = cfg.seed;
    ck.step = static_cast<std::uint64_t>(step);
    json snap;
    snap["net"] = tsm_net_json(trainer.net_config());
    snap["experiment"] = json::parse(cfg.to_json());
    ck.config_json = snap.dump();
    ck.put_params("", trainer.ge_params());
    ck.put_params("", trainer.d_params());
    std::vector<nn::Param<float>*> est_params;
    trainer.estimator().collect(est_params);
    ck.put_params("", est_params);
    store_adam(ck, "opt_ge", trainer.opt_ge());
    store_adam(ck, "opt_d", trainer.opt_d());
    return ck;
}

void restore_tsm_trainer(tsm::TsmTrainer& trainer, const Checkpoint& ck) {
    if (ck.module != "tsm") raise(ErrorKind::Validation, "checkpoint is not a TSM checkpoint");
    ck.load_params("", trainer.ge_params());
    ck.load_params("", trainer.d_params());
    std::vector<nn::Param<float>*> est_params;
    trainer.estimator().collect(est_params);
    ck.load_params("", est_params);
    restore_adam(ck, "opt_ge", trainer.opt_ge());
    restore_adam(ck, "opt_d", trainer.opt_d());
}

} // namespace

std::string cmd_train_tsm(const ExperimentConfig& cfg, const std::string& out_dir,
                          const std::string& resume) {
    data::Dataset dataset = load_dataset_from_config(cfg);
    tsm::TsmConfig net = cfg.tsm_net;
    net.num_categories = dataset.num_categories;
    net.image_size = dataset.pool.at(0).normal_views.at(0).dim(1);

    tsm::TsmTrainer trainer(dataset, cfg.toy.num_textures, net, cfg.tsm_train, cfg.seed);

    long start_step = 0;
    if (!resume.empty()) {
        Checkpoint ck = Checkpoint::load_file(resume);
        restore_tsm_trainer(trainer, ck);
        start_step = static_cast<long>(ck.step);
    }

    DirLock lock(out_dir);
    const std::string log_path = (fs::path(out_dir) / "tsm_log.txt").string();
    std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);
    for (long s = start_step; s < cfg.tsm_train.steps; ++s) {
        const auto l = trainer.step(s);
        char line[160];
        std::snprintf(line, sizeof(line), "step=%ld adv=%.6f rec=%.6f kl=%.6f cls=%.6f\n", l.step,
                      l.adv, l.rec, l.kl, l.cls);
        log << line;
    }
    log.flush();

    Checkpoint ck = make_tsm_checkpoint(trainer, cfg, cfg.tsm_train.steps);
    const std::string ck_path = (fs::path(out_dir) / "tsm.ckpt").string();
    ck.save(ck_path);
    return ck_path;
}

TsmBundle load_tsm_bundle(const std::string& checkpoint_path) {
    Checkpoint ck = Checkpoint::load_file(checkpoint_path);
    if (ck.module != "tsm") raise(ErrorKind::Validation, "not a TSM checkpoint: " + checkpoint_path);
    json snap = json::parse(ck.config_json);
    TsmBundle b;
    b.net = tsm_net_from_json(snap.at("net"));
    Rng dummy(0);
    b.encoder = std::make_unique<tsm::TextureEncoder<float>>(b.net, dummy);
    b.generator = std::make_unique<tsm::TextureGenerator<float>>(b.net, dummy);
    b.estimator = std::make_unique<tsm::ShapeCodeEstimator<float>>(b.net, dummy);
    std::vector<nn::Param<float>*> params;
    b.encoder->collect(params);
    b.generator->collect(params);
    b.estimator->collect(params);
    ck.load_params("", params);
    return b;
}

std::string cmd_train_amvml(const ExperimentConfig& cfg, const std::string& out_dir,
                            const std::string& tsm_checkpoint) {
    data::Dataset dataset = load_dataset_from_config(cfg);

    std::optional<TsmBundle> tsm;
    triplets::FrozenTsm frozen;
    if (cfg.amvml_train.mode == triplets::TripletMode::HardTexture) {
        if (tsm_checkpoint.empty())
            raise(ErrorKind::Usage, "hard-texture mode requires --tsm CHECKPOINT");
        tsm = load_tsm_bundle(tsm_checkpoint);
        frozen = tsm->frozen();
    }

    amvml::AmvmlTrainer trainer(dataset, frozen, cfg.amvml_net, cfg.amvml_train, cfg.seed);

    DirLock lock(out_dir);
    const std::string log_path = (fs::path(out_dir) / "amvml_log.txt").string();
    std::ofstream log(log_path, std::ios::trunc);
    int last_stage = 0;
    trainer.train([&](const amvml::AmvmlStepLog& l) {
        if (l.stage != last_stage) {
            log << "# stage " << l.stage << " begins (epoch budget "
                << (l.stage == 1 ? cfg.amvml_train.warmup_epochs : cfg.amvml_train.finetune_epochs)
                << ")\n";
            last_stage = l.stage;
        }
        char line[240];
        std::snprintf(line, sizeof(line),
                      "stage=%d epoch=%d step=%ld lr=%.6f inst=%.6f view=%.6f sa=%.6f vg=%.6f obj=%.6f\n",
                      l.stage, l.epoch, l.step, l.lr, l.inst, l.view, l.sa, l.vg, l.objective);
        log << line;
    });
    log.flush();

    Checkpoint ck;
    ck.module = "amvml";
    ck.seed = cfg.seed;
    json snap;
    snap["net"] = amvml_net_json(cfg.amvml_net);
    snap["mode"] = triplets::mode_name(cfg.amvml_train.mode);
    snap["experiment"] = json::parse(cfg.to_json());
    ck.config_json = snap.dump();
    std::vector<nn::Param<float>*> tower_params;
    trainer.tower().collect(tower_params);
    ck.put_params("", tower_params);
    std::vector<nn::Param<float>*> head_params;
    trainer.instance_head().collect(head_params);
    ck.put_params("", head_params);
    const std::string ck_path = (fs::path(out_dir) / "amvml.ckpt").string();
    ck.save(ck_path);
    return ck_path;
}

retrieval::QueryDescriptor AmvmlBundle::describe(const TensorF& image) {
    const int n = net.image_size;
    auto out = tower->forward(resize_bilinear(image, n, n), false);
    retrieval::QueryDescriptor d;
    d.embedding = out.embedding.cvector();
    const float norm = d.embedding.norm();
    if (!(norm > 0)) raise(ErrorKind::Numeric, "query embedding has zero norm");
    d.embedding /= norm;
    d.attention = out.attention.cvector();
    return d;
}

Eigen::MatrixXf AmvmlBundle::view_embeddings(const std::vector<TensorF>& views) {
    const int n = net.image_size;
    Eigen::MatrixXf m(static_cast<int>(views.size()), net.embed_dim);
    for (std::size_t v = 0; v < views.size(); ++v) {
        auto out = tower->forward(resize_bilinear(normal_view_black_background(views[v]), n, n), false);
        Eigen::VectorXf e = out.embedding.cvector();
        const float norm = e.norm();
        if (!(norm > 0)) raise(ErrorKind::Numeric, "view embedding has zero norm");
        m.row(static_cast<int>(v)) = (e / norm).transpose();
    }
    return m;
}

AmvmlBundle load_amvml_bundle(const std::string& checkpoint_path) {
    Checkpoint ck = Checkpoint::load_file(checkpoint_path);
    if (ck.module != "amvml")
        raise(ErrorKind::Validation, "not an AMV-ML checkpoint: " + checkpoint_path);
    json snap = json::parse(ck.config_json);
    AmvmlBundle b;
    b.net = amvml_net_from_json(snap.at("net"));
    Rng dummy(0);
    b.tower = std::make_unique<amvml::Tower<float>>(b.net, dummy);
    std::vector<nn::Param<float>*> params;
    b.tower->collect(params);
    // The instance head exists only for training; it is stored in the
    // checkpoint but not needed here.
    ck.load_params("", params);
    return b;
}

std::string cmd_build_index(const ExperimentConfig& cfg, const std::string& amvml_checkpoint,
                            const std::string& out_path) {
    data::Dataset dataset = load_dataset_from_config(cfg);
    AmvmlBundle bundle = load_amvml_bundle(amvml_checkpoint);
    retrieval::EmbeddingIndex index(bundle.net.embed_dim, dataset.num_views);
    for (const auto& shape : dataset.pool)
        index.add(shape.shape_id, bundle.view_embeddings(shape.normal_views));
    index.save(out_path);
    return out_path;
}

std::map<std::string, retrieval::GeometryProxy> build_proxies(const data::Dataset& dataset,
                                                              const ExperimentConfig& cfg) {
    std::map<std::string, retrieval::GeometryProxy> proxies;
    for (std::size_t i = 0; i < dataset.pool.size(); ++i) {
        const auto& shape = dataset.pool[i];
        if (shape.primitives.empty()) continue;
        const std::uint64_t seed = Rng(cfg.seed).fork({hash_tag("proxy"), static_cast<std::uint64_t>(i)}).state();
        proxies[shape.shape_id] = retrieval::geometry_proxy(shape.shape_id, shape.primitives,
                                                            cfg.proxy_points, cfg.voxel_resolution, seed);
    }
    return proxies;
}

retrieval::MetricReport cmd_eval(const ExperimentConfig& cfg, const std::string& amvml_checkpoint,
                                 const std::string& index_path, const std::string& report_path,
                                 bool with_geometry, const std::string& split) {
    data::Dataset dataset = load_dataset_from_config(cfg);
    AmvmlBundle bundle = load_amvml_bundle(amvml_checkpoint);
    retrieval::EmbeddingIndex index = retrieval::EmbeddingIndex::load(index_path);

    std::vector<data::QueryRecord> queries;
    for (int qi : dataset.split_or_all(split)) queries.push_back(dataset.queries[static_cast<std::size_t>(qi)]);

    retrieval::EvaluateOptions opts;
    opts.ks = cfg.eval_ks;
    opts.with_geometry = with_geometry;
    auto proxies = with_geometry ? build_proxies(dataset, cfg)
                                 : std::map<std::string, retrieval::GeometryProxy>{};
    auto report = retrieval::evaluate(
        index, queries, [&](const TensorF& img) { return bundle.describe(img); }, proxies, opts);
    if (!report_path.empty()) write_text_file(report_path, report.to_json());
    return report;
}

namespace {

TensorF compose_grid(const std::vector<TensorF>& tiles, int cols, int tile_size) {
    const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
    TensorF grid = TensorF::zeros({3, rows * tile_size, cols * tile_size});
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        TensorF tile = resize_bilinear(tiles[i], tile_size, tile_size);
        const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < tile_size; ++y)
                for (int x = 0; x < tile_size; ++x)
                    grid(ch, r * tile_size + y, c * tile_size + x) = tile(ch, y, x);
    }
    return grid;
}

} // namespace

void cmd_synthesize(const ExperimentConfig& cfg, const std::string& tsm_checkpoint,
                    const std::string& out_dir, int num_codes) {
    data::Dataset dataset = load_dataset_from_config(cfg);
    TsmBundle bundle = load_tsm_bundle(tsm_checkpoint);
    fs::create_directories(out_dir);

    Rng rng = Rng(cfg.seed).fork({hash_tag("synthesize")});
    for (const auto& shape : dataset.pool) {
        const TensorF& s0 = shape.normal_views.at(0);
        const TensorF c = bundle.estimator->code(s0);
        for (int k = 0; k < num_codes; ++k) {
            TensorF z = TensorF::normal({bundle.net.z_dim}, rng);
            TensorF img = bundle.generator->forward(s0, z, c, false);
            write_png((fs::path(out_dir) / (shape.shape_id + "_rand" + std::to_string(k) + ".png")).string(),
                      to_u8(img));
        }
        if (!shape.textured_views.empty()) {
            const TensorF& example = shape.textured_views.at(0);
            const auto enc = bundle.encoder->forward(example, false);
            TensorF img = bundle.generator->forward(s0, enc.mu, c, false);
            write_png((fs::path(out_dir) / (shape.shape_id + "_example.png")).string(), to_u8(img));
        }
    }
}

void cmd_dump_triplets(const ExperimentConfig& cfg, const std::string& tsm_checkpoint,
                       const std::string& out_dir, int count) {
    data::Dataset dataset = load_dataset_from_config(cfg);
    std::optional<TsmBundle> tsm;
    triplets::FrozenTsm frozen;
    if (cfg.amvml_train.mode == triplets::TripletMode::HardTexture) {
        tsm = load_tsm_bundle(tsm_checkpoint);
        frozen = tsm->frozen();
    }
    fs::create_directories(out_dir);

    const auto train = dataset.split_or_all("train");
    for (int i = 0; i < count && i < static_cast<int>(train.size()); ++i) {
        Rng rng = Rng(cfg.seed).fork({hash_tag("dump"), static_cast<std::uint64_t>(i)});
        const auto& q = dataset.queries[static_cast<std::size_t>(train[static_cast<std::size_t>(i)])];
        triplets::Triplet t = cfg.amvml_train.mode == triplets::TripletMode::HardTexture
                                  ? triplets::make_hard_triplet(q, dataset, frozen, rng)
                                  : triplets::make_adaptation_triplet(q, dataset, rng);
        std::vector<TensorF> tiles;
        tiles.push_back(t.anchor);
        for (const auto& v : t.positive_views) tiles.push_back(v);
        for (const auto& v : t.negative_views) tiles.push_back(v);
        const int tile = t.positive_views.at(0).dim(1);
        const TensorF grid = compose_grid(tiles, 1 + static_cast<int>(t.positive_views.size()), tile);
        write_png((fs::path(out_dir) / ("triplet_" + std::to_string(i) + "_" + q.query_id + ".png")).string(),
                  to_u8(grid));
    }
}

} // namespace ibsr::harness
