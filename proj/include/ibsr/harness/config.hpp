#pragma once

#include <optional>
#include <string>

#include "ibsr/amvml/training.hpp"
#include "ibsr/data/types.hpp"
#include "ibsr/tsm/training.hpp"

namespace ibsr::harness {

/// Experiment configuration. Defaults are the published recipe; `scale`
/// shrinks schedule lengths for desk runs without touching anything else.
struct ExperimentConfig {
    std::uint64_t seed = 7;

    // dataset: either a manifest path or a toy spec (toy used when empty).
    std::string manifest_path;
    data::ToyShapeSpec toy;

    tsm::TsmConfig tsm_net;
    tsm::TsmTrainConfig tsm_train;

    amvml::AmvmlConfig amvml_net;
    amvml::AmvmlTrainConfig amvml_train;

    std::vector<int> eval_ks = {1, 10};
    int voxel_resolution = 32;
    int proxy_points = 2048;

    /// Multiplies schedule lengths (tsm steps, amvml epoch counts), keeping
    /// every value >= 1.
    void apply_scale(double scale);

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;
};

} // namespace ibsr::harness
