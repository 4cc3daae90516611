#include "ibsr/retrieval/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ibsr/core/error.hpp"
#include "ibsr/core/rng.hpp"

namespace ibsr::retrieval {

namespace {

constexpr float kPi = 3.14159265358979323846f;

using data::Primitive;

struct V3 {
    float x, y, z;
};

V3 rot_z(V3 p, float deg) {
    const float r = deg * kPi / 180.0f;
    const float c = std::cos(r), s = std::sin(r);
    return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

float surface_area(const Primitive& p) {
    switch (p.kind) {
        case Primitive::Kind::Sphere:
            return 4.0f * kPi * p.radius * p.radius;
        case Primitive::Kind::Box:
            return 8.0f * (p.half_extents[0] * p.half_extents[1] + p.half_extents[1] * p.half_extents[2] +
                           p.half_extents[0] * p.half_extents[2]);
        case Primitive::Kind::Cylinder:
            return 2.0f * kPi * p.radius * (2.0f * p.half_height) + 2.0f * kPi * p.radius * p.radius;
    }
    return 0;
}

V3 sample_surface(const Primitive& p, Rng& rng) {
    switch (p.kind) {
        case Primitive::Kind::Sphere: {
            // Uniform direction via normalized Gaussian triple.
            float x = static_cast<float>(rng.normal()), y = static_cast<float>(rng.normal()),
                  z = static_cast<float>(rng.normal());
            float n = std::sqrt(x * x + y * y + z * z);
            while (n < 1e-6f) {
                x = static_cast<float>(rng.normal());
                y = static_cast<float>(rng.normal());
                z = static_cast<float>(rng.normal());
                n = std::sqrt(x * x + y * y + z * z);
            }
            const float s = p.radius / n;
            return {p.center[0] + x * s, p.center[1] + y * s, p.center[2] + z * s};
        }
        case Primitive::Kind::Box: {
            const float ex = p.half_extents[0], ey = p.half_extents[1], ez = p.half_extents[2];
            const float ax = ey * ez, ay = ex * ez, az = ex * ey; // per-face-pair area / 4
            const float total = ax + ay + az;
            const float pick = static_cast<float>(rng.uniform(0, total));
            const float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
            V3 local;
            if (pick < ax)
                local = {sign * ex, static_cast<float>(rng.uniform(-ey, ey)), static_cast<float>(rng.uniform(-ez, ez))};
            else if (pick < ax + ay)
                local = {static_cast<float>(rng.uniform(-ex, ex)), sign * ey, static_cast<float>(rng.uniform(-ez, ez))};
            else
                local = {static_cast<float>(rng.uniform(-ex, ex)), static_cast<float>(rng.uniform(-ey, ey)), sign * ez};
            const V3 w = rot_z(local, p.rot_z_deg);
            return {w.x + p.center[0], w.y + p.center[1], w.z + p.center[2]};
        }
        case Primitive::Kind::Cylinder: {
            const float side = 2.0f * kPi * p.radius * 2.0f * p.half_height;
            const float caps = 2.0f * kPi * p.radius * p.radius;
            if (rng.uniform(0, side + caps) < side) {
                const float a = static_cast<float>(rng.uniform(0, 2 * kPi));
                return {p.center[0] + p.radius * std::cos(a), p.center[1] + p.radius * std::sin(a),
                        p.center[2] + static_cast<float>(rng.uniform(-p.half_height, p.half_height))};
            }
            const float a = static_cast<float>(rng.uniform(0, 2 * kPi));
            const float r = p.radius * std::sqrt(static_cast<float>(rng.uniform()));
            const float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
            return {p.center[0] + r * std::cos(a), p.center[1] + r * std::sin(a),
                    p.center[2] + sign * p.half_height};
        }
    }
    return {0, 0, 0};
}

bool inside(const Primitive& p, V3 q, float shrink) {
    switch (p.kind) {
        case Primitive::Kind::Sphere: {
            const float dx = q.x - p.center[0], dy = q.y - p.center[1], dz = q.z - p.center[2];
            return std::sqrt(dx * dx + dy * dy + dz * dz) < p.radius - shrink;
        }
        case Primitive::Kind::Cylinder: {
            const float dx = q.x - p.center[0], dy = q.y - p.center[1], dz = q.z - p.center[2];
            return std::sqrt(dx * dx + dy * dy) < p.radius - shrink && std::fabs(dz) < p.half_height - shrink;
        }
        case Primitive::Kind::Box: {
            const V3 l = rot_z({q.x - p.center[0], q.y - p.center[1], q.z - p.center[2]}, -p.rot_z_deg);
            return std::fabs(l.x) < p.half_extents[0] - shrink && std::fabs(l.y) < p.half_extents[1] - shrink &&
                   std::fabs(l.z) < p.half_extents[2] - shrink;
        }
    }
    return false;
}

void primitive_bbox(const Primitive& p, float lo[3], float hi[3]) {
    switch (p.kind) {
        case Primitive::Kind::Sphere:
            for (int a = 0; a < 3; ++a) {
                lo[a] = p.center[a] - p.radius;
                hi[a] = p.center[a] + p.radius;
            }
            return;
        case Primitive::Kind::Cylinder:
            lo[0] = p.center[0] - p.radius;
            hi[0] = p.center[0] + p.radius;
            lo[1] = p.center[1] - p.radius;
            hi[1] = p.center[1] + p.radius;
            lo[2] = p.center[2] - p.half_height;
            hi[2] = p.center[2] + p.half_height;
            return;
        case Primitive::Kind::Box: {
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::numeric_limits<float>::infinity();
                hi[a] = -std::numeric_limits<float>::infinity();
            }
            for (int corner = 0; corner < 8; ++corner) {
                const V3 local = {(corner & 1 ? 1.0f : -1.0f) * p.half_extents[0],
                                  (corner & 2 ? 1.0f : -1.0f) * p.half_extents[1],
                                  (corner & 4 ? 1.0f : -1.0f) * p.half_extents[2]};
                const V3 w = rot_z(local, p.rot_z_deg);
                const float pt[3] = {w.x + p.center[0], w.y + p.center[1], w.z + p.center[2]};
                for (int a = 0; a < 3; ++a) {
                    lo[a] = std::min(lo[a], pt[a]);
                    hi[a] = std::max(hi[a], pt[a]);
                }
            }
            return;
        }
    }
}

} // namespace

GeometryProxy geometry_proxy(const std::string& shape_id, const std::vector<data::Primitive>& prims,
                             int num_points, int resolution, std::uint64_t seed) {
    if (prims.empty()) raise(ErrorKind::Validation, "geometry_proxy: no primitives for " + shape_id);
    if (num_points < 1 || resolution < 1) raise(ErrorKind::Validation, "geometry_proxy: bad sizes");

    float lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::numeric_limits<float>::infinity();
        hi[a] = -std::numeric_limits<float>::infinity();
    }
    for (const auto& p : prims) {
        float plo[3], phi[3];
        primitive_bbox(p, plo, phi);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], plo[a]);
            hi[a] = std::max(hi[a], phi[a]);
        }
    }
    const float cx = (lo[0] + hi[0]) * 0.5f, cy = (lo[1] + hi[1]) * 0.5f, cz = (lo[2] + hi[2]) * 0.5f;
    const float ex = hi[0] - lo[0], ey = hi[1] - lo[1], ez = hi[2] - lo[2];
    const float diag = std::sqrt(ex * ex + ey * ey + ez * ez);
    if (!(diag > 0)) raise(ErrorKind::Validation, "geometry_proxy: degenerate bounding box for " + shape_id);

    GeometryProxy proxy;
    proxy.shape_id = shape_id;
    proxy.resolution = resolution;

    // Area-weighted surface sampling, rejecting points buried inside another
    // primitive so the samples lie on the union surface. The retry cap
    // guarantees termination on heavily overlapping unions.
    std::vector<float> areas;
    float total_area = 0;
    for (const auto& p : prims) {
        areas.push_back(surface_area(p));
        total_area += areas.back();
    }
    Rng rng(seed);
    proxy.points.reserve(static_cast<std::size_t>(num_points) * 3);
    for (int i = 0; i < num_points; ++i) {
        V3 pt{0, 0, 0};
        for (int attempt = 0; attempt < 64; ++attempt) {
            float pick = static_cast<float>(rng.uniform(0, total_area));
            std::size_t k = 0;
            while (k + 1 < prims.size() && pick >= areas[k]) {
                pick -= areas[k];
                ++k;
            }
            pt = sample_surface(prims[k], rng);
            bool buried = false;
            for (std::size_t other = 0; other < prims.size(); ++other)
                if (other != k && inside(prims[other], pt, 1e-4f)) {
                    buried = true;
                    break;
                }
            if (!buried) break;
        }
        proxy.points.push_back((pt.x - cx) / diag);
        proxy.points.push_back((pt.y - cy) / diag);
        proxy.points.push_back((pt.z - cz) / diag);
    }

    // Occupancy over the shape's own bounding box.
    proxy.grid.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j)
            for (int k = 0; k < resolution; ++k) {
                const V3 q = {lo[0] + (i + 0.5f) * ex / resolution, lo[1] + (j + 0.5f) * ey / resolution,
                              lo[2] + (k + 0.5f) * ez / resolution};
                bool occ = false;
                for (const auto& p : prims)
                    if (inside(p, q, 0.0f)) {
                        occ = true;
                        break;
                    }
                if (occ)
                    proxy.grid[(static_cast<std::size_t>(i) * resolution + j) * resolution + k] = 1;
            }

    bool any = false;
    for (auto g : proxy.grid) any = any || g;
    if (!any) raise(ErrorKind::Validation, "geometry_proxy: empty occupancy grid for " + shape_id);
    return proxy;
}

} // namespace ibsr::retrieval
