#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibsr/data/types.hpp"

namespace ibsr::retrieval {

/// Canonicalized geometry for metric evaluation. Points are surface samples
/// normalized so the bounding-box centroid sits at the origin and the box
/// diagonal has length 1 (all coordinates in [-0.5, 0.5]). The occupancy grid
/// spans the shape's own normalized bounding box at resolution R^3.
struct GeometryProxy {
    std::string shape_id;
    std::vector<float> points;        // P x 3
    std::vector<std::uint8_t> grid;   // R^3, x-major then y then z
    int resolution = 0;

    int point_count() const { return static_cast<int>(points.size() / 3); }
};

GeometryProxy geometry_proxy(const std::string& shape_id, const std::vector<data::Primitive>& prims,
                             int num_points, int resolution, std::uint64_t seed);

inline constexpr int kDefaultProxyPoints = 2048;
inline constexpr int kDefaultProxyResolution = 32;

} // namespace ibsr::retrieval
