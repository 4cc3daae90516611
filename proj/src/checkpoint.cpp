#include "ibsr/harness/checkpoint.hpp"

#include <fstream>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/error.hpp"

namespace ibsr::harness {

const TensorF& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    raise(ErrorKind::Validation, "checkpoint tensor not found: " + name);
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void Checkpoint::put_params(const std::string& prefix, const std::vector<nn::Param<float>*>& params) {
    for (const auto* p : params) put(prefix + p->name, p->value);
}

void Checkpoint::load_params(const std::string& prefix, std::vector<nn::Param<float>*>& params) const {
    for (auto* p : params) {
        const TensorF& stored = get(prefix + p->name);
        if (!stored.same_dims(p->value))
            raise(ErrorKind::Validation, "checkpoint tensor shape mismatch for " + p->name);
        p->value = stored;
    }
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorKind::Io, "cannot open checkpoint for writing: " + path);
    BinWriter w(f);
    w.bytes("IBCK", 4);
    w.u32(kVersion);
    w.str16(module);
    w.u64(seed);
    w.u64(step);
    w.str32(config_json);
    w.u32(static_cast<std::uint32_t>(scalars.size()));
    for (const auto& [name, value] : scalars) {
        w.str16(name);
        w.u64(value);
    }
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.str16(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<std::uint32_t>(t.dim(i)));
        w.f32_array(t.data(), static_cast<std::size_t>(t.size()));
    }
    if (!f) raise(ErrorKind::Io, "failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorKind::Io, "cannot open checkpoint: " + path);
    BinReader r(f);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "IBCK") raise(ErrorKind::Validation, "not a checkpoint file: " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        raise(ErrorKind::Validation,
              "checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                  std::to_string(kVersion));
    Checkpoint ck;
    ck.module = r.str16();
    ck.seed = r.u64();
    ck.step = r.u64();
    ck.config_json = r.str32();
    const std::uint32_t num_scalars = r.u32();
    for (std::uint32_t i = 0; i < num_scalars; ++i) {
        const std::string name = r.str16();
        ck.scalars[name] = r.u64();
    }
    const std::uint32_t num_tensors = r.u32();
    for (std::uint32_t i = 0; i < num_tensors; ++i) {
        const std::string name = r.str16();
        const int rank = r.u8();
        std::vector<int> dims(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) dims[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        TensorF t(dims);
        r.f32_array(t.data(), static_cast<std::size_t>(t.size()));
        ck.tensors.emplace_back(name, std::move(t));
    }
    return ck;
}

} // namespace ibsr::harness
