#include "ibsr/data/toyshapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ibsr/core/error.hpp"

namespace ibsr::data {

namespace {

constexpr float kPi = 3.14159265358979323846f;

struct Vec3 {
    float x = 0, y = 0, z = 0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(Vec3 a, float s) { return {a.x * s, a.y * s, a.z * s}; }
float dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
float norm(Vec3 a) { return std::sqrt(dot(a, a)); }
Vec3 normalize(Vec3 a) { return a * (1.0f / norm(a)); }

Vec3 rot_z(Vec3 p, float deg) {
    const float r = deg * kPi / 180.0f;
    const float c = std::cos(r), s = std::sin(r);
    return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

struct Basis {
    Vec3 xc, yc, zc; // camera right / up / backward, world frame
};

Basis camera_basis(const Camera& cam) {
    const float az = cam.azimuth_deg * kPi / 180.0f;
    const float el = cam.elevation_deg * kPi / 180.0f;
    const Vec3 zc = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    const Vec3 xc = normalize(Vec3{-zc.y, zc.x, 0});
    const Vec3 yc = {zc.y * xc.z - zc.z * xc.y, zc.z * xc.x - zc.x * xc.z, zc.x * xc.y - zc.y * xc.x};
    return {xc, yc, zc};
}

struct Hit {
    float t = std::numeric_limits<float>::infinity();
    Vec3 normal; // world frame, unit
    bool valid = false;
};

Hit intersect_sphere(const Primitive& p, Vec3 o, Vec3 d) {
    const Vec3 c = {p.center[0], p.center[1], p.center[2]};
    const Vec3 oc = o - c;
    const float h = dot(oc, d);
    const float disc = h * h - (dot(oc, oc) - p.radius * p.radius);
    if (disc < 0) return {};
    const float t = -h - std::sqrt(disc);
    if (t <= 0) return {};
    Hit hit;
    hit.t = t;
    hit.normal = normalize(o + d * t - c);
    hit.valid = true;
    return hit;
}

Hit intersect_box(const Primitive& p, Vec3 o, Vec3 d) {
    const Vec3 c = {p.center[0], p.center[1], p.center[2]};
    const Vec3 ol = rot_z(o - c, -p.rot_z_deg);
    const Vec3 dl = rot_z(d, -p.rot_z_deg);
    const float e[3] = {p.half_extents[0], p.half_extents[1], p.half_extents[2]};
    const float olv[3] = {ol.x, ol.y, ol.z};
    const float dlv[3] = {dl.x, dl.y, dl.z};

    float tmin = -std::numeric_limits<float>::infinity();
    float tmax = std::numeric_limits<float>::infinity();
    int enter_axis = -1;
    float enter_sign = 0;
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(dlv[a]) < 1e-9f) {
            if (std::fabs(olv[a]) > e[a]) return {};
            continue;
        }
        float t0 = (-e[a] - olv[a]) / dlv[a];
        float t1 = (e[a] - olv[a]) / dlv[a];
        float sign = -1.0f;
        if (t0 > t1) {
            std::swap(t0, t1);
            sign = 1.0f;
        }
        if (t0 > tmin) {
            tmin = t0;
            enter_axis = a;
            enter_sign = sign;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return {};
    }
    if (tmin <= 0 || enter_axis < 0) return {};
    Vec3 nl = {0, 0, 0};
    (&nl.x)[enter_axis] = enter_sign;
    Hit hit;
    hit.t = tmin;
    hit.normal = rot_z(nl, p.rot_z_deg);
    hit.valid = true;
    return hit;
}

Hit intersect_cylinder(const Primitive& p, Vec3 o, Vec3 d) {
    const Vec3 c = {p.center[0], p.center[1], p.center[2]};
    const Vec3 q = o - c;
    Hit best;

    // Side surface.
    const float a = d.x * d.x + d.y * d.y;
    if (a > 1e-12f) {
        const float b = q.x * d.x + q.y * d.y;
        const float cc = q.x * q.x + q.y * q.y - p.radius * p.radius;
        const float disc = b * b - a * cc;
        if (disc >= 0) {
            const float t = (-b - std::sqrt(disc)) / a;
            if (t > 0 && std::fabs(q.z + t * d.z) <= p.half_height) {
                best.t = t;
                best.normal = normalize(Vec3{q.x + t * d.x, q.y + t * d.y, 0});
                best.valid = true;
            }
        }
    }
    // Caps.
    if (std::fabs(d.z) > 1e-9f) {
        for (float s : {1.0f, -1.0f}) {
            const float t = (s * p.half_height - q.z) / d.z;
            if (t > 0 && t < best.t) {
                const float hx = q.x + t * d.x, hy = q.y + t * d.y;
                if (hx * hx + hy * hy <= p.radius * p.radius) {
                    best.t = t;
                    best.normal = {0, 0, s};
                    best.valid = true;
                }
            }
        }
    }
    return best;
}

Hit intersect(const Primitive& p, Vec3 o, Vec3 d) {
    switch (p.kind) {
        case Primitive::Kind::Sphere: return intersect_sphere(p, o, d);
        case Primitive::Kind::Box: return intersect_box(p, o, d);
        case Primitive::Kind::Cylinder: return intersect_cylinder(p, o, d);
    }
    return {};
}

struct Hsv {
    float h, s, v;
};

void hsv_to_rgb(Hsv in, float rgb[3]) {
    const float h = std::fmod(in.h, 1.0f) * 6.0f;
    const int i = static_cast<int>(h) % 6;
    const float f = h - std::floor(h);
    const float p = in.v * (1 - in.s), q = in.v * (1 - in.s * f), t = in.v * (1 - in.s * (1 - f));
    switch (i) {
        case 0: rgb[0] = in.v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = in.v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = in.v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = in.v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = in.v; break;
        default: rgb[0] = in.v; rgb[1] = p; rgb[2] = q; break;
    }
}

struct TextureDef {
    int kind = 0; // 0 solid, 1 stripes, 2 checker
    float color_a[3] = {1, 1, 1};
    float color_b[3] = {0, 0, 0};
    float dir[3] = {1, 0, 0}; // stripe direction
    float freq = 3.0f;
    float phase = 0.0f;
    float cell = 0.25f;
    float offset[3] = {0, 0, 0};
};

TextureDef make_texture(int texture_id, std::uint64_t rng_seed) {
    TextureDef def;
    if (texture_id == 0) return def; // solid white, fixed reference texture
    Rng rng = Rng(0x7e37ca11u).fork({static_cast<std::uint64_t>(texture_id)});
    def.kind = texture_id % 3;
    hsv_to_rgb({static_cast<float>(rng.uniform()), 0.75f, 1.0f}, def.color_a);
    hsv_to_rgb({static_cast<float>(rng.uniform()), 0.75f, 0.85f}, def.color_b);
    const float ang = static_cast<float>(rng.uniform(0, 2 * kPi));
    const float tilt = static_cast<float>(rng.uniform(-0.5, 0.5));
    def.dir[0] = std::cos(ang);
    def.dir[1] = std::sin(ang);
    def.dir[2] = tilt;
    def.freq = static_cast<float>(rng.uniform(2.0, 5.0));
    def.cell = static_cast<float>(rng.uniform(0.18, 0.35));
    Rng jitter = rng.fork({rng_seed});
    def.phase = static_cast<float>(jitter.uniform(0, 2 * kPi));
    for (int i = 0; i < 3; ++i) def.offset[i] = static_cast<float>(jitter.uniform(0.0, 1.0));
    return def;
}

void eval_texture(const TextureDef& def, const float p[3], float rgb_out[3]) {
    bool pick_a = true;
    if (def.kind == 1) {
        const float s = def.dir[0] * p[0] + def.dir[1] * p[1] + def.dir[2] * p[2];
        pick_a = std::sin(2 * kPi * def.freq * s + def.phase) >= 0;
    } else if (def.kind == 2) {
        int acc = 0;
        for (int i = 0; i < 3; ++i)
            acc += static_cast<int>(std::floor((p[i] + def.offset[i]) / def.cell));
        pick_a = (acc & 1) == 0;
    }
    const float* c = pick_a ? def.color_a : def.color_b;
    rgb_out[0] = c[0];
    rgb_out[1] = c[1];
    rgb_out[2] = c[2];
}

} // namespace

ViewRender render_view(const std::vector<Primitive>& prims, const Camera& cam, int n) {
    if (prims.empty()) raise(ErrorKind::Validation, "render_view: no primitives");
    const Basis basis = camera_basis(cam);
    const Vec3 dir = basis.zc * -1.0f;
    const float s = cam.half_extent;
    constexpr float kCameraDistance = 10.0f;

    ViewRender out;
    out.normal_map = TensorF::constant({3, n, n}, 0.5f);
    out.mask.assign(static_cast<std::size_t>(n) * n, 0);
    out.hit_points.assign(static_cast<std::size_t>(n) * n * 3, 0.0f);
    out.shade.assign(static_cast<std::size_t>(n) * n, 0.0f);

    for (int y = 0; y < n; ++y) {
        const float v = (1.0f - (y + 0.5f) * 2.0f / n) * s;
        for (int x = 0; x < n; ++x) {
            const float u = ((x + 0.5f) * 2.0f / n - 1.0f) * s;
            const Vec3 origin = basis.xc * u + basis.yc * v + basis.zc * kCameraDistance;
            Hit best;
            for (const auto& p : prims) {
                const Hit h = intersect(p, origin, dir);
                if (h.valid && h.t < best.t) best = h;
            }
            if (!best.valid) continue;
            const Vec3 nc = {dot(basis.xc, best.normal), dot(basis.yc, best.normal),
                             dot(basis.zc, best.normal)};
            out.normal_map(0, y, x) = (nc.x + 1.0f) * 0.5f;
            out.normal_map(1, y, x) = (nc.y + 1.0f) * 0.5f;
            out.normal_map(2, y, x) = (nc.z + 1.0f) * 0.5f;
            const std::size_t idx = static_cast<std::size_t>(y) * n + x;
            out.mask[idx] = 1;
            const Vec3 hp = origin + dir * best.t;
            out.hit_points[idx * 3 + 0] = hp.x;
            out.hit_points[idx * 3 + 1] = hp.y;
            out.hit_points[idx * 3 + 2] = hp.z;
            out.shade[idx] = std::max(0.0f, nc.z);
        }
    }
    return out;
}

void texture_color(int texture_id, std::uint64_t rng_seed, const float p[3], float rgb_out[3]) {
    eval_texture(make_texture(texture_id, rng_seed), p, rgb_out);
}

TensorF shade_view(const ViewRender& view, int texture_id, std::uint64_t rng_seed) {
    const TextureDef def = make_texture(texture_id, rng_seed);
    const int n = view.normal_map.dim(1);
    TensorF img = TensorF::zeros({3, n, view.normal_map.dim(2)});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < view.normal_map.dim(2); ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * view.normal_map.dim(2) + x;
            if (!view.mask[idx]) continue;
            float rgb[3];
            eval_texture(def, &view.hit_points[idx * 3], rgb);
            for (int c = 0; c < 3; ++c) img(c, y, x) = rgb[c] * view.shade[idx];
        }
    return img;
}

std::vector<TensorF> apply_procedural_texture(const ShapeRecord& shape, int texture_id,
                                              std::uint64_t rng_seed, int num_textures) {
    if (texture_id < 0 || texture_id >= num_textures)
        raise(ErrorKind::Validation, "texture_id out of range");
    if (shape.primitives.empty())
        raise(ErrorKind::Validation, "apply_procedural_texture requires primitive geometry: " + shape.shape_id);
    if (shape.normal_views.empty())
        raise(ErrorKind::Validation, "shape has no normal views: " + shape.shape_id);
    const int size = shape.normal_views[0].dim(1);
    std::vector<TensorF> out;
    out.reserve(shape.view_azimuths.size());
    for (float az : shape.view_azimuths) {
        const ViewRender view = render_view(shape.primitives, {az, kPoolElevationDeg, 1.0f}, size);
        out.push_back(shade_view(view, texture_id, rng_seed));
    }
    return out;
}

std::vector<Primitive> sample_primitives(const ToyShapeSpec& spec, int shape_index) {
    // Stratified construction: the shape index picks kind, size and aspect
    // classes (plus an optional attached primitive) so pool shapes are
    // pairwise distinct by design; the seeded stream only jitters within the
    // class. Independent draws produced near-duplicate pool entries, which no
    // retrieval method can tell apart.
    Rng rng = Rng(spec.seed).fork({hash_tag("prims"), static_cast<std::uint64_t>(shape_index)});
    const int kind0 = shape_index % 3;
    const int size_class = (shape_index / 3) % 3;
    const int aspect_class = (shape_index / 9) % 3;
    const float base = (0.18f + 0.09f * size_class) * static_cast<float>(rng.uniform(0.94, 1.06));
    const float aspect_table[3] = {0.55f, 1.0f, 1.9f};
    const float aspect = aspect_table[aspect_class] * static_cast<float>(rng.uniform(0.9, 1.1));

    std::vector<Primitive> prims;
    Primitive first;
    first.kind = static_cast<Primitive::Kind>(kind0);
    for (int a = 0; a < 3; ++a) first.center[a] = static_cast<float>(rng.uniform(-0.04, 0.04));
    float main_top = 0;
    switch (first.kind) {
        case Primitive::Kind::Box:
            first.half_extents[0] = base;
            first.half_extents[1] = base * static_cast<float>(rng.uniform(0.55, 0.8));
            first.half_extents[2] = std::min(base * aspect, 0.55f);
            first.rot_z_deg = static_cast<float>(rng.uniform(0, 360));
            main_top = first.half_extents[2];
            break;
        case Primitive::Kind::Sphere:
            // Spheres cannot stretch, so the aspect class scales the radius.
            first.radius = base * (0.85f + 0.3f * aspect_class);
            main_top = first.radius;
            break;
        case Primitive::Kind::Cylinder:
            first.radius = base * 0.75f;
            first.half_height = std::min(base * aspect, 0.55f);
            main_top = first.half_height;
            break;
    }
    prims.push_back(first);

    // Attachment stacked on top: at the fixed 30-degree camera elevation a
    // protrusion above the body stays visible from every azimuth, so attached
    // and plain variants never collapse to the same silhouette.
    const bool attach = spec.primitive_budget >= 2 &&
                        ((shape_index % 2 == 1) ||
                         (first.kind == Primitive::Kind::Sphere && aspect_class > 0));
    if (attach) {
        Primitive second;
        second.kind = static_cast<Primitive::Kind>((kind0 + 1 + (shape_index / 4) % 2) % 3);
        const float theta = static_cast<float>(shape_index) * 2.39996f + // golden angle
                            static_cast<float>(rng.uniform(-0.25, 0.25));
        const float side = base * 0.3f;
        const float small = base * (0.5f + 0.12f * aspect_class);
        second.center[0] = first.center[0] + std::cos(theta) * side;
        second.center[1] = first.center[1] + std::sin(theta) * side;
        second.center[2] = std::min(first.center[2] + main_top * 0.85f + small * 0.35f, 0.72f);
        switch (second.kind) {
            case Primitive::Kind::Box:
                for (int a = 0; a < 3; ++a)
                    second.half_extents[a] = small * static_cast<float>(rng.uniform(0.7, 1.1));
                second.rot_z_deg = static_cast<float>(rng.uniform(0, 360));
                break;
            case Primitive::Kind::Sphere:
                second.radius = small;
                break;
            case Primitive::Kind::Cylinder:
                second.radius = small * 0.8f;
                second.half_height = small * 1.4f;
                break;
        }
        prims.push_back(second);
    }
    return prims;
}

int toy_category(const std::vector<Primitive>& prims) {
    int counts[3] = {0, 0, 0};
    for (const auto& p : prims) counts[static_cast<int>(p.kind)]++;
    int best = 0;
    for (int k = 1; k < 3; ++k)
        if (counts[k] > counts[best]) best = k;
    return best;
}

QueryRecord render_query(const ShapeRecord& shape, const std::string& query_id, int azimuth_bin,
                         int num_views, int texture_id, int num_textures, int image_size, Rng& rng) {
    const float spacing = 360.0f / static_cast<float>(num_views);
    const float jitter = static_cast<float>(rng.uniform(-0.18, 0.18)) * spacing;
    const float azimuth = spacing * static_cast<float>(azimuth_bin) + jitter;
    const std::uint64_t tex_seed = rng.next_u64();

    const ViewRender view = render_view(shape.primitives, {azimuth, kPoolElevationDeg, 1.0f}, image_size);
    TensorF img = shade_view(view, texture_id, tex_seed);

    // Background clutter: a dim color gradient plus a few soft blobs, so
    // saliency prediction has actual work to do on query images.
    float g0[3], g1[3];
    hsv_to_rgb({static_cast<float>(rng.uniform()), 0.35f, 0.22f}, g0);
    hsv_to_rgb({static_cast<float>(rng.uniform()), 0.35f, 0.22f}, g1);
    const float gang = static_cast<float>(rng.uniform(0, 2 * kPi));
    struct Blob {
        float cx, cy, r, rgb[3];
    };
    std::array<Blob, 3> blobs;
    for (auto& b : blobs) {
        b.cx = static_cast<float>(rng.uniform(0, 1));
        b.cy = static_cast<float>(rng.uniform(0, 1));
        b.r = static_cast<float>(rng.uniform(0.07, 0.17));
        hsv_to_rgb({static_cast<float>(rng.uniform()), 0.5f, 0.35f}, b.rgb);
    }
    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * image_size + x;
            if (view.mask[idx]) continue;
            const float fx = (x + 0.5f) / image_size, fy = (y + 0.5f) / image_size;
            const float t = 0.5f + 0.5f * (std::cos(gang) * (fx - 0.5f) + std::sin(gang) * (fy - 0.5f)) * 2.0f;
            const float tc = std::clamp(t, 0.0f, 1.0f);
            float rgb[3];
            for (int c = 0; c < 3; ++c) rgb[c] = g0[c] * (1 - tc) + g1[c] * tc;
            for (const auto& b : blobs) {
                const float d2 = (fx - b.cx) * (fx - b.cx) + (fy - b.cy) * (fy - b.cy);
                const float w = std::exp(-d2 / (2 * b.r * b.r));
                for (int c = 0; c < 3; ++c) rgb[c] = rgb[c] * (1 - w) + b.rgb[c] * w;
            }
            for (int c = 0; c < 3; ++c) img(c, y, x) = rgb[c];
        }

    QueryRecord q;
    q.query_id = query_id;
    q.image = std::move(img);
    q.mask = view.mask;
    q.azimuth_bin = azimuth_bin;
    q.category = shape.category;
    q.shape_id = shape.shape_id;
    bool any = false;
    for (auto m : q.mask) any = any || m != 0;
    if (!any) raise(ErrorKind::Validation, "query has empty mask: " + query_id);
    return q;
}

std::pair<std::vector<ShapeRecord>, std::vector<QueryRecord>>
generate_toy_dataset(const ToyShapeSpec& spec, int num_views) {
    if (spec.num_shapes < 1 || spec.primitive_budget < 1 || spec.num_textures < 1)
        raise(ErrorKind::Validation, "toy spec counts must be >= 1");
    if (spec.image_size < 32) raise(ErrorKind::Validation, "toy spec image_size must be >= 32");
    const int query_size = spec.query_image_size > 0 ? spec.query_image_size : spec.image_size;

    std::vector<ShapeRecord> pool;
    pool.reserve(static_cast<std::size_t>(spec.num_shapes));
    for (int i = 0; i < spec.num_shapes; ++i) {
        ShapeRecord rec;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%03d", i);
        rec.shape_id = buf;
        rec.primitives = sample_primitives(spec, i);
        rec.category = toy_category(rec.primitives);
        rec.view_azimuths.resize(static_cast<std::size_t>(num_views));
        for (int v = 0; v < num_views; ++v) {
            rec.view_azimuths[static_cast<std::size_t>(v)] = 360.0f * v / num_views;
            const ViewRender view =
                render_view(rec.primitives, {rec.view_azimuths[static_cast<std::size_t>(v)], kPoolElevationDeg, 1.0f},
                            spec.image_size);
            rec.normal_views.push_back(view.normal_map);
        }
        const int canonical_texture = i % spec.num_textures;
        rec.textured_views = apply_procedural_texture(rec, canonical_texture, 0, spec.num_textures);
        pool.push_back(std::move(rec));
    }

    std::vector<QueryRecord> queries;
    queries.reserve(static_cast<std::size_t>(spec.num_shapes) * kQueriesPerShape);
    for (int i = 0; i < spec.num_shapes; ++i) {
        for (int k = 0; k < kQueriesPerShape; ++k) {
            Rng rng = Rng(spec.seed).fork({hash_tag("query"), static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(k)});
            char buf[32];
            std::snprintf(buf, sizeof(buf), "q_s%03d_%02d", i, k);
            const int bin = rng.uniform_int(0, num_views - 1);
            const int tex = rng.uniform_int(0, spec.num_textures - 1);
            queries.push_back(render_query(pool[static_cast<std::size_t>(i)], buf, bin, num_views, tex,
                                           spec.num_textures, query_size, rng));
        }
    }
    return {std::move(pool), std::move(queries)};
}

Dataset make_toy_dataset(const ToyShapeSpec& spec, int num_views) {
    auto [pool, queries] = generate_toy_dataset(spec, num_views);
    Dataset ds;
    ds.pool = std::move(pool);
    ds.queries = std::move(queries);
    ds.num_categories = kToyNumCategories;
    ds.num_views = num_views;
    for (std::size_t i = 0; i < ds.pool.size(); ++i)
        ds.shape_index[ds.pool[i].shape_id] = static_cast<int>(i);
    for (std::size_t i = 0; i < ds.queries.size(); ++i) {
        const int within = static_cast<int>(i) % kQueriesPerShape;
        ds.splits[within < kTrainQueriesPerShape ? "train" : "val"].push_back(static_cast<int>(i));
    }
    return ds;
}

Dataset make_texture_confound_dataset(const ToyShapeSpec& spec, int num_views,
                                      int train_queries_per_shape, int eval_queries_per_shape) {
    if (spec.num_shapes < 2) raise(ErrorKind::Validation, "confound set needs >= 2 shapes");
    Dataset ds;
    ds.num_categories = kToyNumCategories;
    ds.num_views = num_views;
    for (int i = 0; i < spec.num_shapes; ++i) {
        ShapeRecord rec;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%03d", i);
        rec.shape_id = buf;
        rec.primitives = sample_primitives(spec, i);
        rec.category = toy_category(rec.primitives);
        rec.view_azimuths.resize(static_cast<std::size_t>(num_views));
        for (int v = 0; v < num_views; ++v) {
            rec.view_azimuths[static_cast<std::size_t>(v)] = 360.0f * v / num_views;
            rec.normal_views.push_back(
                render_view(rec.primitives,
                            {rec.view_azimuths[static_cast<std::size_t>(v)], kPoolElevationDeg, 1.0f},
                            spec.image_size)
                    .normal_map);
        }
        rec.textured_views = apply_procedural_texture(rec, i % spec.num_textures, 0, spec.num_textures);
        ds.shape_index[rec.shape_id] = static_cast<int>(ds.pool.size());
        ds.pool.push_back(std::move(rec));
    }

    const int query_size = spec.query_image_size > 0 ? spec.query_image_size : spec.image_size;
    for (int i = 0; i < spec.num_shapes; ++i) {
        const int own_texture = i % spec.num_textures;
        const int wrong_texture = (i + 1) % spec.num_shapes % spec.num_textures;
        const int total = train_queries_per_shape + eval_queries_per_shape;
        for (int k = 0; k < total; ++k) {
            Rng rng = Rng(spec.seed).fork({hash_tag("confound-query"), static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(k)});
            const bool is_train = k < train_queries_per_shape;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "q_s%03d_%02d", i, k);
            const int bin = rng.uniform_int(0, num_views - 1);
            QueryRecord q = render_query(ds.pool[static_cast<std::size_t>(i)], buf, bin, num_views,
                                         is_train ? own_texture : wrong_texture, spec.num_textures,
                                         query_size, rng);
            ds.splits[is_train ? "train" : "val"].push_back(static_cast<int>(ds.queries.size()));
            ds.queries.push_back(std::move(q));
        }
    }
    return ds;
}

const ShapeRecord& Dataset::shape_by_id(const std::string& id) const {
    auto it = shape_index.find(id);
    if (it == shape_index.end()) raise(ErrorKind::Referential, "unknown shape_id: " + id);
    return pool[static_cast<std::size_t>(it->second)];
}

std::vector<int> Dataset::split_or_all(const std::string& name) const {
    auto it = splits.find(name);
    if (it != splits.end()) return it->second;
    std::vector<int> all(queries.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
}

} // namespace ibsr::data
