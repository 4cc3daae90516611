#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ibsr/core/tensor.hpp"

namespace ibsr::data {

/// Analytic primitive in world space. Boxes rotate about the vertical (z)
/// axis; spheres and cylinders are rotationally symmetric so they carry no
/// rotation of their own.
struct Primitive {
    enum class Kind { Box, Sphere, Cylinder };
    Kind kind = Kind::Box;
    float center[3] = {0, 0, 0};
    float half_extents[3] = {0, 0, 0}; // box
    float radius = 0;                  // sphere, cylinder
    float half_height = 0;             // cylinder (along z)
    float rot_z_deg = 0;               // box only
};

/// A 3D shape as the pipeline sees it: identity plus V rendered views.
/// Normal views encode camera-space unit normals as (n+1)/2; background is
/// exactly 0.5-gray. Primitives are present for locally generated shapes and
/// absent for imported pre-rendered pools.
struct ShapeRecord {
    std::string shape_id;
    int category = 0;
    std::vector<TensorF> normal_views;   // V x (3,H,W)
    std::vector<TensorF> textured_views; // optional, V x (3,H,W)
    std::vector<float> view_azimuths;    // degrees, strictly increasing over [0,360)
    std::vector<Primitive> primitives;   // empty for imported shapes
};

struct QueryRecord {
    std::string query_id;
    TensorF image;                   // (3,H,W), [0,1]
    std::vector<std::uint8_t> mask;  // H*W, 0/1
    int azimuth_bin = 0;
    int category = 0;
    std::string shape_id; // ground-truth match
};

struct DatasetManifest {
    int version = 0;
    int num_categories = 0;
    int num_views = 0;
    std::vector<std::string> pool_paths;  // shape record files, relative to root_dir
    std::vector<std::string> query_paths; // query record files
    std::map<std::string, std::vector<std::string>> splits; // name -> query ids
    std::string root_dir;
};

struct ToyShapeSpec {
    int num_shapes = 16;
    int primitive_budget = 3;
    int num_textures = 8;
    int image_size = 64;       // pool/TSM render size
    int query_image_size = 0;  // 0 = same as image_size
    std::uint64_t seed = 0;
};

/// In-memory dataset with pixel data loaded and invariants checked.
struct Dataset {
    std::vector<ShapeRecord> pool;
    std::vector<QueryRecord> queries;
    std::map<std::string, int> shape_index; // shape_id -> pool position
    std::map<std::string, std::vector<int>> splits; // name -> query positions
    int num_categories = 0;
    int num_views = 0;

    const ShapeRecord& shape_by_id(const std::string& id) const;
    std::vector<int> split_or_all(const std::string& name) const;
};

inline constexpr int kQueriesPerShape = 80;
inline constexpr int kTrainQueriesPerShape = 60;
inline constexpr float kPoolElevationDeg = 30.0f;

} // namespace ibsr::data
