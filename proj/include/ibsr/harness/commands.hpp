#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ibsr/harness/checkpoint.hpp"
#include "ibsr/harness/config.hpp"
#include "ibsr/retrieval/evaluate.hpp"
#include "ibsr/triplets/triplets.hpp"

namespace ibsr::harness {

/// Exclusive ownership of a checkpoint/output directory for the lifetime of a
/// training command.
class DirLock {
public:
    explicit DirLock(const std::string& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::string path_;
};

data::Dataset load_dataset_from_config(const ExperimentConfig& cfg);

struct GenToyArgs {
    std::uint64_t seed = 7;
    int shapes = 16;
    int textures = 8;
    int primitive_budget = 3;
    int image_size = 64;
    int query_image_size = 0;
    int num_views = 12;
    std::string out;
    bool force = false;
};
void cmd_gen_toy(const GenToyArgs& args);

/// Trains the texture synthesis module; returns the checkpoint path.
/// `resume` continues from an existing checkpoint (bit-exact with an
/// uninterrupted run of the same total step count).
std::string cmd_train_tsm(const ExperimentConfig& cfg, const std::string& out_dir,
                          const std::string& resume = {});

std::string cmd_train_amvml(const ExperimentConfig& cfg, const std::string& out_dir,
                            const std::string& tsm_checkpoint = {});

/// Inference-side bundles reconstructed from checkpoints.
struct TsmBundle {
    tsm::TsmConfig net;
    std::unique_ptr<tsm::TextureEncoder<float>> encoder;
    std::unique_ptr<tsm::TextureGenerator<float>> generator;
    std::unique_ptr<tsm::ShapeCodeEstimator<float>> estimator;

    triplets::FrozenTsm frozen() { return {encoder.get(), generator.get(), estimator.get()}; }
};
TsmBundle load_tsm_bundle(const std::string& checkpoint_path);

struct AmvmlBundle {
    amvml::AmvmlConfig net;
    std::unique_ptr<amvml::Tower<float>> tower;

    retrieval::QueryDescriptor describe(const TensorF& image);
    Eigen::MatrixXf view_embeddings(const std::vector<TensorF>& views);
};
AmvmlBundle load_amvml_bundle(const std::string& checkpoint_path);

std::string cmd_build_index(const ExperimentConfig& cfg, const std::string& amvml_checkpoint,
                            const std::string& out_path);

std::map<std::string, retrieval::GeometryProxy> build_proxies(const data::Dataset& dataset,
                                                              const ExperimentConfig& cfg);

retrieval::MetricReport cmd_eval(const ExperimentConfig& cfg, const std::string& amvml_checkpoint,
                                 const std::string& index_path, const std::string& report_path,
                                 bool with_geometry, const std::string& split = "val");

void cmd_synthesize(const ExperimentConfig& cfg, const std::string& tsm_checkpoint,
                    const std::string& out_dir, int num_codes);

void cmd_dump_triplets(const ExperimentConfig& cfg, const std::string& tsm_checkpoint,
                       const std::string& out_dir, int count);

} // namespace ibsr::harness
