#pragma once

#include <string>
#include <vector>

#include "ibsr/core/error.hpp"
#include "ibsr/retrieval/geometry.hpp"

namespace ibsr::retrieval {

/// One ranked retrieval: entries sorted by non-increasing score, ranks 1..N,
/// ties broken by lexicographic shape_id.
struct RankingResult {
    struct Entry {
        std::string shape_id;
        float score;
        int rank;
    };
    std::string query_id;
    std::vector<Entry> entries;

    int rank_of(const std::string& shape_id) const;
};

/// Fraction of queries whose ground-truth shape ranks <= K. K is clamped to
/// the ranking length.
double topk_recall(const std::vector<RankingResult>& results,
                   const std::vector<std::string>& ground_truth, int k);

/// Mean modified Hausdorff distance: max of the two directed mean
/// nearest-neighbor distances between 3D point sets.
double modified_hausdorff(const std::vector<float>& a_points, const std::vector<float>& b_points);

double voxel_iou(const std::vector<std::uint8_t>& ga, const std::vector<std::uint8_t>& gb);

inline double modified_hausdorff(const GeometryProxy& a, const GeometryProxy& b) {
    return modified_hausdorff(a.points, b.points);
}

inline double voxel_iou(const GeometryProxy& a, const GeometryProxy& b) {
    if (a.resolution != b.resolution)
        raise(ErrorKind::Validation, "voxel_iou: resolution mismatch");
    return voxel_iou(a.grid, b.grid);
}

} // namespace ibsr::retrieval
