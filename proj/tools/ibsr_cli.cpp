#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "ibsr/harness/commands.hpp"

using namespace ibsr;

int main(int argc, char** argv) {
    CLI::App app{"image-based 3D shape retrieval with synthesized hard triplets"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may appear after the subcommand

    std::string config_path, out_dir = "runs/out", tsm_ckpt, amvml_ckpt, index_path, report_path, split = "val";
    std::uint64_t seed = 0;
    bool have_seed = false, force = false, skip_geometry = false;
    double scale = 1.0;

    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--seed", seed, "override the experiment seed")->each([&](const std::string&) { have_seed = true; });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--scale", scale, "schedule scale factor for desk-size runs");
    app.add_flag("--force", force, "overwrite non-empty output directories");

    auto* gen = app.add_subcommand("gen-toy", "generate a deterministic toy dataset");
    harness::GenToyArgs gen_args;
    gen->add_option("--shapes", gen_args.shapes, "number of 3D shapes");
    gen->add_option("--textures", gen_args.textures, "number of procedural textures");
    gen->add_option("--budget", gen_args.primitive_budget, "max primitives per shape");
    gen->add_option("--image-size", gen_args.image_size, "pool render size");
    gen->add_option("--query-size", gen_args.query_image_size, "query render size (0 = pool size)");
    gen->add_option("--views", gen_args.num_views, "views per shape");

    auto* ttsm = app.add_subcommand("train-tsm", "train the texture synthesis module");
    std::string resume;
    ttsm->add_option("--resume", resume, "checkpoint to resume from");

    auto* tamv = app.add_subcommand("train-amvml", "train the attentive multi-view metric network");
    tamv->add_option("--tsm", tsm_ckpt, "TSM checkpoint (required for hard-texture mode)");

    auto* bidx = app.add_subcommand("build-index", "embed the 3D pool into a binary index");
    bidx->add_option("--model", amvml_ckpt, "AMV-ML checkpoint")->required();
    bidx->add_option("--index", index_path, "output index file");

    auto* ev = app.add_subcommand("eval", "rank queries and report retrieval metrics");
    ev->add_option("--model", amvml_ckpt, "AMV-ML checkpoint")->required();
    ev->add_option("--index", index_path, "index file (built on demand when absent)");
    ev->add_option("--report", report_path, "metric report output path");
    ev->add_option("--split", split, "query split to evaluate (default: val)");
    ev->add_flag("--skip-geometry", skip_geometry, "skip Hausdorff/IoU (no primitive geometry)");

    auto* synth = app.add_subcommand("synthesize", "render a texture synthesis gallery");
    int num_codes = 4;
    synth->add_option("--tsm", tsm_ckpt, "TSM checkpoint")->required();
    synth->add_option("--codes", num_codes, "random codes per shape");

    auto* dump = app.add_subcommand("dump-triplets", "write triplet grids for inspection");
    int dump_count = 8;
    dump->add_option("--tsm", tsm_ckpt, "TSM checkpoint (hard-texture mode)");
    dump->add_option("--count", dump_count, "number of triplets");

    CLI11_PARSE(app, argc, argv);

    try {
        harness::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = harness::ExperimentConfig::load(config_path);
        if (have_seed) {
            cfg.seed = seed;
            cfg.toy.seed = seed;
        }
        if (scale != 1.0) cfg.apply_scale(scale);

        if (gen->parsed()) {
            gen_args.seed = have_seed ? seed : cfg.toy.seed;
            gen_args.out = out_dir;
            gen_args.force = force;
            harness::cmd_gen_toy(gen_args);
            std::printf("wrote toy dataset to %s\n", out_dir.c_str());
        } else if (ttsm->parsed()) {
            const std::string path = harness::cmd_train_tsm(cfg, out_dir, resume);
            std::printf("TSM checkpoint: %s\n", path.c_str());
        } else if (tamv->parsed()) {
            const std::string path = harness::cmd_train_amvml(cfg, out_dir, tsm_ckpt);
            std::printf("AMV-ML checkpoint: %s\n", path.c_str());
        } else if (bidx->parsed()) {
            if (index_path.empty()) index_path = out_dir + "/pool.index";
            const std::string path = harness::cmd_build_index(cfg, amvml_ckpt, index_path);
            std::printf("index: %s\n", path.c_str());
        } else if (ev->parsed()) {
            if (index_path.empty()) {
                index_path = out_dir + "/pool.index";
                harness::cmd_build_index(cfg, amvml_ckpt, index_path);
            }
            if (report_path.empty()) report_path = out_dir + "/report.json";
            auto report = harness::cmd_eval(cfg, amvml_ckpt, index_path, report_path, !skip_geometry, split);
            std::printf("%s\n", report.summary_line().c_str());
            std::printf("report: %s\n", report_path.c_str());
        } else if (synth->parsed()) {
            harness::cmd_synthesize(cfg, tsm_ckpt, out_dir, num_codes);
            std::printf("gallery in %s\n", out_dir.c_str());
        } else if (dump->parsed()) {
            harness::cmd_dump_triplets(cfg, tsm_ckpt, out_dir, dump_count);
            std::printf("triplets in %s\n", out_dir.c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.kind_name(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
