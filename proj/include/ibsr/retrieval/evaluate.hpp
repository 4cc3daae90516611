#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ibsr/core/tensor.hpp"
#include "ibsr/data/types.hpp"
#include "ibsr/retrieval/index.hpp"

namespace ibsr::retrieval {

struct MetricGroup {
    double top1 = 0;
    double top10 = 0;
    double hau = 0;
    double iou = 0;
    std::map<int, double> topk; // every requested K
    int query_count = 0;
};

/// Evaluation report. `overall` aggregates all queries regardless of category;
/// `per_category` holds one group per category id; `category_mean` averages
/// the per-category scores.
struct MetricReport {
    MetricGroup overall;
    std::map<int, MetricGroup> per_category;
    MetricGroup category_mean;
    bool has_geometry = false;

    std::string to_json() const;
    std::string summary_line() const;
};

using DescribeFn = std::function<QueryDescriptor(const TensorF& image)>;

struct EvaluateOptions {
    std::vector<int> ks = {1, 10};
    bool with_geometry = true;
};

/// Ranks every query against the index and aggregates recall plus (optionally)
/// mean modified Hausdorff distance and voxel IoU between each query's Top1
/// retrieval and its ground-truth shape.
MetricReport evaluate(const EmbeddingIndex& index, const std::vector<data::QueryRecord>& queries,
                      const DescribeFn& describe,
                      const std::map<std::string, GeometryProxy>& proxies,
                      const EvaluateOptions& options = {});

} // namespace ibsr::retrieval
