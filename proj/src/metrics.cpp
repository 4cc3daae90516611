#include "ibsr/retrieval/metrics.hpp"

#include <cmath>
#include <limits>

#include "ibsr/core/error.hpp"

namespace ibsr::retrieval {

int RankingResult::rank_of(const std::string& shape_id) const {
    for (const auto& e : entries)
        if (e.shape_id == shape_id) return e.rank;
    return -1;
}

double topk_recall(const std::vector<RankingResult>& results,
                   const std::vector<std::string>& ground_truth, int k) {
    if (k < 1) raise(ErrorKind::Validation, "topk_recall: K must be >= 1");
    if (results.size() != ground_truth.size())
        raise(ErrorKind::Validation, "topk_recall: results/ground_truth size mismatch");
    if (results.empty()) raise(ErrorKind::Validation, "topk_recall: no queries");
    int hits = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const int kk = std::min<int>(k, static_cast<int>(results[i].entries.size()));
        const int r = results[i].rank_of(ground_truth[i]);
        if (r >= 1 && r <= kk) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

namespace {

double directed_mean_distance(const std::vector<float>& a, const std::vector<float>& b) {
    const std::size_t na = a.size() / 3, nb = b.size() / 3;
    double acc = 0;
    for (std::size_t i = 0; i < na; ++i) {
        double best = std::numeric_limits<double>::infinity();
        const double ax = a[i * 3], ay = a[i * 3 + 1], az = a[i * 3 + 2];
        for (std::size_t j = 0; j < nb; ++j) {
            const double dx = ax - b[j * 3], dy = ay - b[j * 3 + 1], dz = az - b[j * 3 + 2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best) best = d2;
        }
        acc += std::sqrt(best);
    }
    return acc / static_cast<double>(na);
}

} // namespace

double modified_hausdorff(const std::vector<float>& a_points, const std::vector<float>& b_points) {
    if (a_points.empty() || b_points.empty())
        raise(ErrorKind::Validation, "modified_hausdorff: empty point set");
    if (a_points.size() % 3 != 0 || b_points.size() % 3 != 0)
        raise(ErrorKind::Validation, "modified_hausdorff: point arrays must be N x 3");
    return std::max(directed_mean_distance(a_points, b_points),
                    directed_mean_distance(b_points, a_points));
}

double voxel_iou(const std::vector<std::uint8_t>& ga, const std::vector<std::uint8_t>& gb) {
    if (ga.size() != gb.size()) raise(ErrorKind::Validation, "voxel_iou: resolution mismatch");
    if (ga.empty()) raise(ErrorKind::Validation, "voxel_iou: empty grids");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        const bool a = ga[i] != 0, b = gb[i] != 0;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (uni == 0) raise(ErrorKind::Validation, "voxel_iou: both grids empty");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace ibsr::retrieval
