#pragma once

#include <map>
#include <string>
#include <vector>

#include "ibsr/core/tensor.hpp"
#include "ibsr/nn/layers.hpp"

namespace ibsr::harness {

/// Versioned parameter container. Float tensors round-trip bit-exactly;
/// loading a file with a different version fails loudly.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string module;      // "tsm" | "amvml" | ...
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::string config_json; // snapshot of whatever built this checkpoint
    std::vector<std::pair<std::string, TensorF>> tensors;
    std::map<std::string, std::uint64_t> scalars;

    void put(const std::string& name, const TensorF& t) { tensors.emplace_back(name, t); }
    const TensorF& get(const std::string& name) const;
    bool has(const std::string& name) const;

    /// Stores every parameter under `prefix`.
    void put_params(const std::string& prefix, const std::vector<nn::Param<float>*>& params);
    /// Restores parameters by name; missing or shape-mismatched entries fail.
    void load_params(const std::string& prefix, std::vector<nn::Param<float>*>& params) const;

    void save(const std::string& path) const;
    static Checkpoint load_file(const std::string& path);
};

} // namespace ibsr::harness
