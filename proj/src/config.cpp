#include "ibsr/harness/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/error.hpp"

using nlohmann::json;

namespace ibsr::harness {

namespace {

int scaled_count(int value, double scale) {
    return std::max(1, static_cast<int>(std::lround(value * scale)));
}

} // namespace

void ExperimentConfig::apply_scale(double scale) {
    if (scale <= 0) raise(ErrorKind::Validation, "scale must be positive");
    tsm_train.steps = scaled_count(tsm_train.steps, scale);
    amvml_train.warmup_epochs = scaled_count(amvml_train.warmup_epochs, scale);
    amvml_train.finetune_epochs = scaled_count(amvml_train.finetune_epochs, scale);
    amvml_train.warmup_hold = scaled_count(amvml_train.warmup_hold, scale);
    amvml_train.finetune_hold = scaled_count(amvml_train.finetune_hold, scale);
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    if (!manifest_path.empty()) {
        j["dataset"]["manifest"] = manifest_path;
    } else {
        json t;
        t["shapes"] = toy.num_shapes;
        t["primitive_budget"] = toy.primitive_budget;
        t["textures"] = toy.num_textures;
        t["image_size"] = toy.image_size;
        t["query_image_size"] = toy.query_image_size;
        t["seed"] = toy.seed;
        j["dataset"]["toy"] = t;
    }

    json t;
    t["lr"] = tsm_train.lr;
    t["beta1"] = tsm_train.beta1;
    t["beta2"] = tsm_train.beta2;
    t["batch"] = tsm_train.batch_size;
    t["steps"] = tsm_train.steps;
    t["image"] = tsm_net.image_size;
    t["z"] = tsm_net.z_dim;
    t["lambda_rec"] = tsm_train.lambdas.rec;
    t["lambda_kl"] = tsm_train.lambdas.kl;
    t["lambda_cls"] = tsm_train.lambdas.cls;
    t["one_hot_codes"] = tsm_train.one_hot_codes;
    t["gen_width"] = tsm_net.gen_width;
    t["enc_width"] = tsm_net.enc_width;
    t["disc_width"] = tsm_net.disc_width;
    t["est_width"] = tsm_net.est_width;
    t["estimator_steps"] = tsm_train.estimator_steps;
    j["tsm"] = t;

    json a;
    a["lr"] = amvml_train.lr;
    a["momentum"] = amvml_train.momentum;
    a["weight_decay"] = amvml_train.weight_decay;
    a["batch"] = amvml_train.batch_size;
    a["image"] = amvml_net.image_size;
    a["views"] = amvml_net.num_views;
    a["dim"] = amvml_net.embed_dim;
    a["width"] = amvml_net.width;
    a["margin"] = amvml_train.margin;
    a["tau"] = amvml_train.tau;
    a["lambda1"] = amvml_train.lambdas.view;
    a["lambda2"] = amvml_train.lambdas.sa;
    a["lambda3"] = amvml_train.lambdas.vg;
    a["warmup_epochs"] = amvml_train.warmup_epochs;
    a["finetune_epochs"] = amvml_train.finetune_epochs;
    a["warmup_hold"] = amvml_train.warmup_hold;
    a["finetune_hold"] = amvml_train.finetune_hold;
    a["mode"] = triplets::mode_name(amvml_train.mode);
    j["amvml"] = a;

    json e;
    e["ks"] = eval_ks;
    e["voxel_resolution"] = voxel_resolution;
    e["points"] = proxy_points;
    j["eval"] = e;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) raise(ErrorKind::Validation, "malformed config JSON");
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        if (d.contains("manifest")) cfg.manifest_path = d.at("manifest").get<std::string>();
        if (d.contains("toy")) {
            const auto& t = d.at("toy");
            cfg.toy.num_shapes = t.value("shapes", cfg.toy.num_shapes);
            cfg.toy.primitive_budget = t.value("primitive_budget", cfg.toy.primitive_budget);
            cfg.toy.num_textures = t.value("textures", cfg.toy.num_textures);
            cfg.toy.image_size = t.value("image_size", cfg.toy.image_size);
            cfg.toy.query_image_size = t.value("query_image_size", cfg.toy.query_image_size);
            cfg.toy.seed = t.value("seed", cfg.toy.seed);
        }
    }

    if (j.contains("tsm")) {
        const auto& t = j.at("tsm");
        cfg.tsm_train.lr = t.value("lr", cfg.tsm_train.lr);
        cfg.tsm_train.beta1 = t.value("beta1", cfg.tsm_train.beta1);
        cfg.tsm_train.beta2 = t.value("beta2", cfg.tsm_train.beta2);
        cfg.tsm_train.batch_size = t.value("batch", cfg.tsm_train.batch_size);
        cfg.tsm_train.steps = t.value("steps", cfg.tsm_train.steps);
        cfg.tsm_net.image_size = t.value("image", cfg.tsm_net.image_size);
        cfg.tsm_net.z_dim = t.value("z", cfg.tsm_net.z_dim);
        cfg.tsm_train.lambdas.rec = t.value("lambda_rec", cfg.tsm_train.lambdas.rec);
        cfg.tsm_train.lambdas.kl = t.value("lambda_kl", cfg.tsm_train.lambdas.kl);
        cfg.tsm_train.lambdas.cls = t.value("lambda_cls", cfg.tsm_train.lambdas.cls);
        cfg.tsm_train.one_hot_codes = t.value("one_hot_codes", cfg.tsm_train.one_hot_codes);
        cfg.tsm_net.gen_width = t.value("gen_width", cfg.tsm_net.gen_width);
        cfg.tsm_net.enc_width = t.value("enc_width", cfg.tsm_net.enc_width);
        cfg.tsm_net.disc_width = t.value("disc_width", cfg.tsm_net.disc_width);
        cfg.tsm_net.est_width = t.value("est_width", cfg.tsm_net.est_width);
        cfg.tsm_train.estimator_steps = t.value("estimator_steps", cfg.tsm_train.estimator_steps);
    }

    if (j.contains("amvml")) {
        const auto& a = j.at("amvml");
        cfg.amvml_train.lr = a.value("lr", cfg.amvml_train.lr);
        cfg.amvml_train.momentum = a.value("momentum", cfg.amvml_train.momentum);
        cfg.amvml_train.weight_decay = a.value("weight_decay", cfg.amvml_train.weight_decay);
        cfg.amvml_train.batch_size = a.value("batch", cfg.amvml_train.batch_size);
        cfg.amvml_net.image_size = a.value("image", cfg.amvml_net.image_size);
        cfg.amvml_net.num_views = a.value("views", cfg.amvml_net.num_views);
        cfg.amvml_net.embed_dim = a.value("dim", cfg.amvml_net.embed_dim);
        cfg.amvml_net.width = a.value("width", cfg.amvml_net.width);
        cfg.amvml_train.margin = a.value("margin", cfg.amvml_train.margin);
        cfg.amvml_train.tau = a.value("tau", cfg.amvml_train.tau);
        cfg.amvml_train.lambdas.view = a.value("lambda1", cfg.amvml_train.lambdas.view);
        cfg.amvml_train.lambdas.sa = a.value("lambda2", cfg.amvml_train.lambdas.sa);
        cfg.amvml_train.lambdas.vg = a.value("lambda3", cfg.amvml_train.lambdas.vg);
        cfg.amvml_train.warmup_epochs = a.value("warmup_epochs", cfg.amvml_train.warmup_epochs);
        cfg.amvml_train.finetune_epochs = a.value("finetune_epochs", cfg.amvml_train.finetune_epochs);
        cfg.amvml_train.warmup_hold = a.value("warmup_hold", cfg.amvml_train.warmup_hold);
        cfg.amvml_train.finetune_hold = a.value("finetune_hold", cfg.amvml_train.finetune_hold);
        if (a.contains("mode")) cfg.amvml_train.mode = triplets::mode_from_name(a.at("mode").get<std::string>());
    }

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        if (e.contains("ks")) cfg.eval_ks = e.at("ks").get<std::vector<int>>();
        cfg.voxel_resolution = e.value("voxel_resolution", cfg.voxel_resolution);
        cfg.proxy_points = e.value("points", cfg.proxy_points);
    }

    if (cfg.amvml_train.lambdas.view < 0 || cfg.amvml_train.lambdas.sa < 0 ||
        cfg.amvml_train.lambdas.vg < 0 || cfg.tsm_train.lambdas.rec < 0 ||
        cfg.tsm_train.lambdas.kl < 0 || cfg.tsm_train.lambdas.cls < 0)
        raise(ErrorKind::Validation, "lambda weights must be nonnegative");
    if (cfg.amvml_train.warmup_epochs < 1 || cfg.amvml_train.finetune_epochs < 1)
        raise(ErrorKind::Validation, "epoch counts must be >= 1");
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_json(read_text_file(path));
}

void ExperimentConfig::save(const std::string& path) const { write_text_file(path, to_json()); }

} // namespace ibsr::harness
