#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "ibsr/retrieval/metrics.hpp"

namespace ibsr::retrieval {

/// What the ranking needs from a query's forward pass: the unit-normalized
/// query embedding and the viewpoint attention distribution.
struct QueryDescriptor {
    Eigen::VectorXf embedding; // length d, unit norm
    Eigen::VectorXf attention; // length V, nonnegative, sums to 1
};

/// Per-shape V x d unit-normalized view embeddings, immutable after build.
///
/// On-disk layout (all little-endian): magic "IBSR", version u32, d u32,
/// V u32, count u64, then per record a u16-length-prefixed UTF-8 shape_id
/// followed by V*d float32 values.
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    EmbeddingIndex(int d, int v) : d_(d), v_(v) {}

    void add(const std::string& shape_id, const Eigen::MatrixXf& view_embeddings);

    int dim() const { return d_; }
    int views() const { return v_; }
    int count() const { return static_cast<int>(ids_.size()); }
    const std::string& shape_id(int i) const { return ids_[static_cast<std::size_t>(i)]; }
    /// V x d block for shape i.
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> views_of(int i) const;

    void save(const std::string& path) const;
    static EmbeddingIndex load(const std::string& path);

    static constexpr std::uint32_t kVersion = 1;

private:
    int d_ = 0;
    int v_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_; // count * V * d, row-major per record
};

/// Attention-weighted cosine ranking of every indexed shape against a query.
RankingResult query(const EmbeddingIndex& index, const QueryDescriptor& desc,
                    const std::string& query_id = {});

} // namespace ibsr::retrieval
