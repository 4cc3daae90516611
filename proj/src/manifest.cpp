#include "ibsr/data/manifest.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/error.hpp"
#include "ibsr/core/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ibsr::data {

namespace {

json parse_json_file(const std::string& path) {
    if (!fs::exists(path)) raise(ErrorKind::Io, "missing file: " + path);
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) raise(ErrorKind::Validation, "malformed JSON: " + path);
    return j;
}

template <typename T>
T require_field(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field))
        raise(ErrorKind::Validation, "missing field '" + std::string(field) + "' in " + where);
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        raise(ErrorKind::Validation, "bad type for field '" + std::string(field) + "' in " + where);
    }
}

std::string kind_name(Primitive::Kind k) {
    switch (k) {
        case Primitive::Kind::Box: return "box";
        case Primitive::Kind::Sphere: return "sphere";
        case Primitive::Kind::Cylinder: return "cylinder";
    }
    return "box";
}

Primitive::Kind kind_from_name(const std::string& s, const std::string& where) {
    if (s == "box") return Primitive::Kind::Box;
    if (s == "sphere") return Primitive::Kind::Sphere;
    if (s == "cylinder") return Primitive::Kind::Cylinder;
    raise(ErrorKind::Validation, "unknown primitive kind '" + s + "' in " + where);
}

struct ParsedShape {
    std::string shape_id;
    int category;
    std::vector<float> view_azimuths;
    std::vector<std::string> normal_views;
    std::vector<std::string> textured_views;
    std::vector<Primitive> primitives;
};

ParsedShape parse_shape_json(const std::string& path) {
    const json j = parse_json_file(path);
    ParsedShape s;
    s.shape_id = require_field<std::string>(j, "shape_id", path);
    s.category = require_field<int>(j, "category", path);
    s.view_azimuths = require_field<std::vector<float>>(j, "view_azimuths", path);
    s.normal_views = require_field<std::vector<std::string>>(j, "normal_views", path);
    if (j.contains("textured_views"))
        s.textured_views = j.at("textured_views").get<std::vector<std::string>>();
    if (j.contains("primitives")) {
        for (const auto& pj : j.at("primitives")) {
            Primitive p;
            p.kind = kind_from_name(require_field<std::string>(pj, "kind", path), path);
            auto c = require_field<std::vector<float>>(pj, "center", path);
            if (c.size() != 3) raise(ErrorKind::Validation, "primitive center must have 3 entries in " + path);
            std::copy(c.begin(), c.end(), p.center);
            if (p.kind == Primitive::Kind::Box) {
                auto e = require_field<std::vector<float>>(pj, "half_extents", path);
                if (e.size() != 3) raise(ErrorKind::Validation, "half_extents must have 3 entries in " + path);
                std::copy(e.begin(), e.end(), p.half_extents);
                p.rot_z_deg = pj.value("rot_z", 0.0f);
            } else {
                p.radius = require_field<float>(pj, "radius", path);
                if (p.kind == Primitive::Kind::Cylinder)
                    p.half_height = require_field<float>(pj, "half_height", path);
            }
            s.primitives.push_back(p);
        }
    }
    return s;
}

struct ParsedQuery {
    std::string query_id;
    std::string shape_id;
    int category;
    int azimuth_bin;
    std::string image;
    std::string mask;
};

ParsedQuery parse_query_json(const std::string& path) {
    const json j = parse_json_file(path);
    ParsedQuery q;
    q.query_id = require_field<std::string>(j, "query_id", path);
    q.shape_id = require_field<std::string>(j, "shape_id", path);
    q.category = require_field<int>(j, "category", path);
    q.azimuth_bin = require_field<int>(j, "azimuth_bin", path);
    q.image = require_field<std::string>(j, "image", path);
    q.mask = require_field<std::string>(j, "mask", path);
    return q;
}

std::string resolve(const std::string& root, const std::string& rel) {
    return (fs::path(root) / rel).string();
}

} // namespace

DatasetManifest load_manifest(const std::string& path) {
    const json j = parse_json_file(path);
    DatasetManifest m;
    m.root_dir = fs::path(path).parent_path().string();
    m.version = require_field<int>(j, "version", path);
    if (m.version != kManifestVersion)
        raise(ErrorKind::Validation, "unsupported manifest version in " + path);
    m.num_categories = require_field<int>(j, "num_categories", path);
    m.num_views = require_field<int>(j, "num_views", path);
    if (m.num_categories < 1 || m.num_views < 1)
        raise(ErrorKind::Validation, "num_categories/num_views must be >= 1 in " + path);
    m.pool_paths = require_field<std::vector<std::string>>(j, "pool", path);
    m.query_paths = require_field<std::vector<std::string>>(j, "queries", path);
    if (j.contains("splits"))
        m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();

    // Walk every record once: existence, schema, counts, references.
    std::set<std::string> shape_ids;
    for (const auto& rel : m.pool_paths) {
        const std::string sp = resolve(m.root_dir, rel);
        const ParsedShape s = parse_shape_json(sp);
        if (static_cast<int>(s.normal_views.size()) != m.num_views)
            raise(ErrorKind::Validation, "shape '" + s.shape_id + "' has " +
                                             std::to_string(s.normal_views.size()) + " normal_views, manifest num_views is " +
                                             std::to_string(m.num_views));
        if (s.view_azimuths.size() != s.normal_views.size())
            raise(ErrorKind::Validation, "view_azimuths length mismatch in " + sp);
        if (!s.textured_views.empty() && static_cast<int>(s.textured_views.size()) != m.num_views)
            raise(ErrorKind::Validation, "textured_views count mismatch in " + sp);
        if (s.category < 0 || s.category >= m.num_categories)
            raise(ErrorKind::Validation, "category out of range in " + sp);
        for (const auto& img : s.normal_views)
            if (!fs::exists(resolve(m.root_dir, img))) raise(ErrorKind::Io, "missing file: " + img);
        for (const auto& img : s.textured_views)
            if (!fs::exists(resolve(m.root_dir, img))) raise(ErrorKind::Io, "missing file: " + img);
        if (!shape_ids.insert(s.shape_id).second)
            raise(ErrorKind::Validation, "duplicate shape_id: " + s.shape_id);
    }

    std::set<std::string> query_ids;
    for (const auto& rel : m.query_paths) {
        const std::string qp = resolve(m.root_dir, rel);
        const ParsedQuery q = parse_query_json(qp);
        if (!shape_ids.count(q.shape_id))
            raise(ErrorKind::Referential, "query '" + q.query_id + "' references unknown shape_id '" + q.shape_id + "'");
        if (q.azimuth_bin < 0 || q.azimuth_bin >= m.num_views)
            raise(ErrorKind::Validation, "azimuth_bin out of range in " + qp);
        if (q.category < 0 || q.category >= m.num_categories)
            raise(ErrorKind::Validation, "category out of range in " + qp);
        if (!fs::exists(resolve(m.root_dir, q.image))) raise(ErrorKind::Io, "missing file: " + q.image);
        if (!fs::exists(resolve(m.root_dir, q.mask))) raise(ErrorKind::Io, "missing file: " + q.mask);
        if (!query_ids.insert(q.query_id).second)
            raise(ErrorKind::Validation, "duplicate query_id: " + q.query_id);
    }

    std::set<std::string> seen_in_split;
    for (const auto& [name, ids] : m.splits) {
        for (const auto& id : ids) {
            if (!query_ids.count(id))
                raise(ErrorKind::Referential, "split '" + name + "' references unknown query id '" + id + "'");
            if (!seen_in_split.insert(id).second)
                raise(ErrorKind::Validation, "query id '" + id + "' appears in more than one split");
        }
    }
    return m;
}

Dataset load_dataset(const DatasetManifest& m) {
    Dataset ds;
    ds.num_categories = m.num_categories;
    ds.num_views = m.num_views;

    for (const auto& rel : m.pool_paths) {
        const ParsedShape s = parse_shape_json(resolve(m.root_dir, rel));
        ShapeRecord rec;
        rec.shape_id = s.shape_id;
        rec.category = s.category;
        rec.view_azimuths = s.view_azimuths;
        rec.primitives = s.primitives;

        // Azimuths strictly increasing and evenly spaced over [0, 360).
        const float spacing = 360.0f / static_cast<float>(m.num_views);
        for (int v = 0; v < m.num_views; ++v) {
            const float expected = spacing * static_cast<float>(v);
            if (std::fabs(rec.view_azimuths[static_cast<std::size_t>(v)] - expected) > 1e-3f)
                raise(ErrorKind::Validation, "shape '" + s.shape_id + "': view_azimuths must be evenly spaced from 0");
        }

        int hw = -1;
        for (const auto& img_rel : s.normal_views) {
            TensorF img = to_float(read_png(resolve(m.root_dir, img_rel)));
            if (img.dim(0) != 3) raise(ErrorKind::Validation, "normal view must be RGB: " + img_rel);
            if (hw < 0) hw = img.dim(1);
            if (img.dim(1) != hw || img.dim(2) != hw)
                raise(ErrorKind::Validation, "all views must share H x W: " + img_rel);
            // Foreground pixels must decode to near-unit normals (eps = 0.05).
            for (int y = 0; y < img.dim(1); ++y)
                for (int x = 0; x < img.dim(2); ++x) {
                    const float nx = 2 * img(0, y, x) - 1, ny = 2 * img(1, y, x) - 1, nz = 2 * img(2, y, x) - 1;
                    const float n = std::sqrt(nx * nx + ny * ny + nz * nz);
                    const bool background = n < 0.5f; // zero-normal gray
                    if (!background && (n < 0.95f || n > 1.05f))
                        raise(ErrorKind::Validation,
                              "shape '" + s.shape_id + "': foreground normal norm " + std::to_string(n) +
                                  " outside [0.95, 1.05]");
                }
            rec.normal_views.push_back(std::move(img));
        }
        for (const auto& img_rel : s.textured_views)
            rec.textured_views.push_back(to_float(read_png(resolve(m.root_dir, img_rel))));

        ds.shape_index[rec.shape_id] = static_cast<int>(ds.pool.size());
        ds.pool.push_back(std::move(rec));
    }

    std::map<std::string, int> query_pos;
    for (const auto& rel : m.query_paths) {
        const ParsedQuery q = parse_query_json(resolve(m.root_dir, rel));
        QueryRecord rec;
        rec.query_id = q.query_id;
        rec.shape_id = q.shape_id;
        rec.category = q.category;
        rec.azimuth_bin = q.azimuth_bin;
        rec.image = to_float(read_png(resolve(m.root_dir, q.image)));
        const ImageU8 mask_img = read_png(resolve(m.root_dir, q.mask));
        if (mask_img.channels != 1)
            raise(ErrorKind::Validation, "mask must be single-channel: " + q.mask);
        if (mask_img.width != rec.image.dim(2) || mask_img.height != rec.image.dim(1))
            raise(ErrorKind::Validation, "mask size does not match image: " + q.mask);
        rec.mask.resize(mask_img.pixels.size());
        bool any = false;
        for (std::size_t i = 0; i < mask_img.pixels.size(); ++i) {
            rec.mask[i] = mask_img.pixels[i] >= 128 ? 1 : 0;
            any = any || rec.mask[i];
        }
        if (!any) raise(ErrorKind::Validation, "mask has no foreground pixels: " + q.mask);
        query_pos[rec.query_id] = static_cast<int>(ds.queries.size());
        ds.queries.push_back(std::move(rec));
    }

    for (const auto& [name, ids] : m.splits) {
        auto& positions = ds.splits[name];
        for (const auto& id : ids) positions.push_back(query_pos.at(id));
    }
    return ds;
}

void save_dataset(const std::vector<ShapeRecord>& pool, const std::vector<QueryRecord>& queries,
                  const std::map<std::string, std::vector<std::string>>& splits,
                  int num_categories, int num_views, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "shapes");
    fs::create_directories(fs::path(dir) / "queries");

    json manifest;
    manifest["version"] = kManifestVersion;
    manifest["num_categories"] = num_categories;
    manifest["num_views"] = num_views;

    for (const auto& rec : pool) {
        json sj;
        sj["shape_id"] = rec.shape_id;
        sj["category"] = rec.category;
        sj["view_azimuths"] = rec.view_azimuths;
        std::vector<std::string> normal_rel, textured_rel;
        for (std::size_t v = 0; v < rec.normal_views.size(); ++v) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "shapes/%s_n%02zu.png", rec.shape_id.c_str(), v);
            write_png(resolve(dir, buf), to_u8(rec.normal_views[v]));
            normal_rel.emplace_back(buf);
        }
        for (std::size_t v = 0; v < rec.textured_views.size(); ++v) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "shapes/%s_t%02zu.png", rec.shape_id.c_str(), v);
            write_png(resolve(dir, buf), to_u8(rec.textured_views[v]));
            textured_rel.emplace_back(buf);
        }
        sj["normal_views"] = normal_rel;
        if (!textured_rel.empty()) sj["textured_views"] = textured_rel;
        if (!rec.primitives.empty()) {
            json prims = json::array();
            for (const auto& p : rec.primitives) {
                json pj;
                pj["kind"] = kind_name(p.kind);
                pj["center"] = {p.center[0], p.center[1], p.center[2]};
                if (p.kind == Primitive::Kind::Box) {
                    pj["half_extents"] = {p.half_extents[0], p.half_extents[1], p.half_extents[2]};
                    pj["rot_z"] = p.rot_z_deg;
                } else {
                    pj["radius"] = p.radius;
                    if (p.kind == Primitive::Kind::Cylinder) pj["half_height"] = p.half_height;
                }
                prims.push_back(pj);
            }
            sj["primitives"] = prims;
        }
        const std::string rel = "shapes/" + rec.shape_id + ".json";
        write_text_file(resolve(dir, rel), sj.dump(2));
        manifest["pool"].push_back(rel);
    }

    for (const auto& q : queries) {
        json qj;
        qj["query_id"] = q.query_id;
        qj["shape_id"] = q.shape_id;
        qj["category"] = q.category;
        qj["azimuth_bin"] = q.azimuth_bin;
        const std::string img_rel = "queries/" + q.query_id + ".png";
        const std::string mask_rel = "queries/" + q.query_id + "_mask.png";
        write_png(resolve(dir, img_rel), to_u8(q.image));
        write_mask_png(resolve(dir, mask_rel), q.mask, q.image.dim(2), q.image.dim(1));
        qj["image"] = img_rel;
        qj["mask"] = mask_rel;
        const std::string rel = "queries/" + q.query_id + ".json";
        write_text_file(resolve(dir, rel), qj.dump(2));
        manifest["queries"].push_back(rel);
    }

    manifest["splits"] = splits;
    write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2));
}

} // namespace ibsr::data
