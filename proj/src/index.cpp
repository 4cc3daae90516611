#include "ibsr/retrieval/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/error.hpp"

namespace ibsr::retrieval {

void EmbeddingIndex::add(const std::string& shape_id, const Eigen::MatrixXf& view_embeddings) {
    if (view_embeddings.rows() != v_ || view_embeddings.cols() != d_)
        raise(ErrorKind::Validation, "index add: embedding block must be V x d");
    for (int v = 0; v < v_; ++v) {
        const float n = view_embeddings.row(v).norm();
        if (std::fabs(n - 1.0f) > 1e-5f)
            raise(ErrorKind::Validation, "index add: view embedding row is not unit-norm");
    }
    for (const auto& id : ids_)
        if (id == shape_id) raise(ErrorKind::Validation, "index add: duplicate shape_id " + shape_id);
    ids_.push_back(shape_id);
    const std::size_t base = data_.size();
    data_.resize(base + static_cast<std::size_t>(v_) * d_);
    for (int v = 0; v < v_; ++v)
        for (int d = 0; d < d_; ++d)
            data_[base + static_cast<std::size_t>(v) * d_ + d] = view_embeddings(v, d);
}

Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
EmbeddingIndex::views_of(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * v_ * d_, v_, d_};
}

void EmbeddingIndex::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorKind::Io, "cannot open index file for writing: " + path);
    BinWriter w(f);
    w.bytes("IBSR", 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(d_));
    w.u32(static_cast<std::uint32_t>(v_));
    w.u64(static_cast<std::uint64_t>(ids_.size()));
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        w.str16(ids_[i]);
        w.f32_array(data_.data() + i * static_cast<std::size_t>(v_) * d_,
                    static_cast<std::size_t>(v_) * d_);
    }
    if (!f) raise(ErrorKind::Io, "failed writing index file: " + path);
}

EmbeddingIndex EmbeddingIndex::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorKind::Io, "cannot open index file: " + path);
    BinReader r(f);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "IBSR") raise(ErrorKind::Validation, "not an embedding index file: " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        raise(ErrorKind::Validation, "unsupported index version " + std::to_string(version) + " in " + path);
    const int d = static_cast<int>(r.u32());
    const int v = static_cast<int>(r.u32());
    EmbeddingIndex idx(d, v);
    const std::uint64_t count = r.u64();
    idx.ids_.reserve(count);
    idx.data_.resize(count * static_cast<std::size_t>(idx.v_) * idx.d_);
    for (std::uint64_t i = 0; i < count; ++i) {
        idx.ids_.push_back(r.str16());
        r.f32_array(idx.data_.data() + i * static_cast<std::size_t>(idx.v_) * idx.d_,
                    static_cast<std::size_t>(idx.v_) * idx.d_);
    }
    return idx;
}

RankingResult query(const EmbeddingIndex& index, const QueryDescriptor& desc, const std::string& query_id) {
    if (index.count() == 0) raise(ErrorKind::Validation, "query: empty index");
    if (desc.embedding.size() != index.dim()) raise(ErrorKind::Validation, "query: embedding dim mismatch");
    if (desc.attention.size() != index.views()) raise(ErrorKind::Validation, "query: attention length mismatch");

    RankingResult result;
    result.query_id = query_id;
    result.entries.reserve(static_cast<std::size_t>(index.count()));
    for (int i = 0; i < index.count(); ++i) {
        // score = sum_v w_v <f(query), f(view_v)>; rows are stored unit-norm.
        const float score = desc.attention.dot(index.views_of(i) * desc.embedding);
        result.entries.push_back({index.shape_id(i), score, 0});
    }
    std::sort(result.entries.begin(), result.entries.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.shape_id < b.shape_id;
    });
    for (std::size_t i = 0; i < result.entries.size(); ++i)
        result.entries[i].rank = static_cast<int>(i) + 1;
    return result;
}

} // namespace ibsr::retrieval
