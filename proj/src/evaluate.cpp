#include "ibsr/retrieval/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>

#include "ibsr/core/error.hpp"

using nlohmann::json;

namespace ibsr::retrieval {

namespace {

json group_to_json(const MetricGroup& g, bool with_geometry) {
    json j;
    j["top1"] = g.top1;
    j["top10"] = g.top10;
    if (with_geometry) {
        j["hau"] = g.hau;
        j["iou"] = g.iou;
    }
    for (const auto& [k, v] : g.topk) j["top" + std::to_string(k)] = v;
    j["queries"] = g.query_count;
    return j;
}

} // namespace

std::string MetricReport::to_json() const {
    json j = group_to_json(overall, has_geometry);
    json per;
    for (const auto& [cat, g] : per_category) per[std::to_string(cat)] = group_to_json(g, has_geometry);
    j["per_category"] = per;
    j["category_mean"] = group_to_json(category_mean, has_geometry);
    return j.dump(2);
}

std::string MetricReport::summary_line() const {
    char buf[160];
    if (has_geometry)
        std::snprintf(buf, sizeof(buf), "top1=%.4f top10=%.4f hau=%.4f iou=%.4f (%d queries)",
                      overall.top1, overall.top10, overall.hau, overall.iou, overall.query_count);
    else
        std::snprintf(buf, sizeof(buf), "top1=%.4f top10=%.4f (%d queries)", overall.top1,
                      overall.top10, overall.query_count);
    return buf;
}

MetricReport evaluate(const EmbeddingIndex& index, const std::vector<data::QueryRecord>& queries,
                      const DescribeFn& describe,
                      const std::map<std::string, GeometryProxy>& proxies,
                      const EvaluateOptions& options) {
    if (queries.empty()) raise(ErrorKind::Validation, "evaluate: no queries");

    if (options.with_geometry) {
        std::string missing;
        auto check = [&](const std::string& id) {
            if (!proxies.count(id)) missing += (missing.empty() ? "" : ", ") + id;
        };
        for (const auto& q : queries) check(q.shape_id);
        for (int i = 0; i < index.count(); ++i) check(index.shape_id(i));
        if (!missing.empty())
            raise(ErrorKind::Referential, "evaluate: missing geometry proxies for: " + missing);
    }

    struct Row {
        int category;
        int gt_rank;
        double hau, iou;
    };
    std::vector<Row> rows;
    rows.reserve(queries.size());

    std::vector<int> ks = options.ks;
    for (int k : {1, 10})
        if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);

    for (const auto& q : queries) {
        const RankingResult ranking = query(index, describe(q.image), q.query_id);
        Row row;
        row.category = q.category;
        row.gt_rank = ranking.rank_of(q.shape_id);
        if (row.gt_rank < 0)
            raise(ErrorKind::Referential, "evaluate: ground-truth shape not in index: " + q.shape_id);
        row.hau = 0;
        row.iou = 1;
        if (options.with_geometry) {
            const auto& retrieved = proxies.at(ranking.entries.front().shape_id);
            const auto& truth = proxies.at(q.shape_id);
            row.hau = modified_hausdorff(retrieved, truth);
            row.iou = voxel_iou(retrieved, truth);
        }
        rows.push_back(row);
    }

    auto aggregate = [&](const std::vector<const Row*>& sel) {
        MetricGroup g;
        g.query_count = static_cast<int>(sel.size());
        for (int k : ks) {
            const int kk = std::min(k, index.count());
            int hits = 0;
            for (const auto* r : sel)
                if (r->gt_rank <= kk) ++hits;
            g.topk[k] = static_cast<double>(hits) / static_cast<double>(sel.size());
        }
        g.top1 = g.topk.at(1);
        g.top10 = g.topk.at(10);
        for (const auto* r : sel) {
            g.hau += r->hau;
            g.iou += r->iou;
        }
        g.hau /= static_cast<double>(sel.size());
        g.iou /= static_cast<double>(sel.size());
        return g;
    };

    MetricReport report;
    report.has_geometry = options.with_geometry;

    std::vector<const Row*> all;
    std::map<int, std::vector<const Row*>> by_cat;
    for (const auto& r : rows) {
        all.push_back(&r);
        by_cat[r.category].push_back(&r);
    }
    report.overall = aggregate(all);
    for (const auto& [cat, sel] : by_cat) report.per_category[cat] = aggregate(sel);

    // "category mean": unweighted average of per-category scores.
    MetricGroup& cm = report.category_mean;
    const double n = static_cast<double>(report.per_category.size());
    for (const auto& [cat, g] : report.per_category) {
        cm.top1 += g.top1 / n;
        cm.top10 += g.top10 / n;
        cm.hau += g.hau / n;
        cm.iou += g.iou / n;
        for (const auto& [k, v] : g.topk) cm.topk[k] += v / n;
        cm.query_count += g.query_count;
    }
    return report;
}

} // namespace ibsr::retrieval
