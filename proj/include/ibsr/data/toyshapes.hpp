#pragma once

#include <utility>

#include "ibsr/core/rng.hpp"
#include "ibsr/data/types.hpp"

namespace ibsr::data {

/// Orthographic camera orbiting the origin.
struct Camera {
    float azimuth_deg = 0;
    float elevation_deg = kPoolElevationDeg;
    float half_extent = 1.0f; // world units covered by the image half-width
};

/// Result of rendering one view: camera-space normal map encoded into [0,1]^3
/// (background 0.5-gray), foreground mask, and per-pixel world hit points.
struct ViewRender {
    TensorF normal_map;              // (3,H,W)
    std::vector<std::uint8_t> mask;  // H*W
    std::vector<float> hit_points;   // H*W*3 world coords, valid where mask=1
    std::vector<float> shade;        // H*W Lambert factor (camera-space n.z)
};

ViewRender render_view(const std::vector<Primitive>& prims, const Camera& cam, int image_size);

/// Procedural texture lookup: texture 0 is solid white; others cycle through
/// solid / stripes / checker with colors derived from the id. rng_seed jitters
/// stripe phase and checker offset.
void texture_color(int texture_id, std::uint64_t rng_seed, const float p[3], float rgb_out[3]);

/// Textured rendering of one already-rendered view: foreground colored by the
/// texture modulated by Lambert shading, background exactly black.
TensorF shade_view(const ViewRender& view, int texture_id, std::uint64_t rng_seed);

/// Per-view textured images for a shape (texture fixed across views).
std::vector<TensorF> apply_procedural_texture(const ShapeRecord& shape, int texture_id,
                                              std::uint64_t rng_seed, int num_textures);

/// Random primitive union for toy shape `index` under the spec's seed.
std::vector<Primitive> sample_primitives(const ToyShapeSpec& spec, int shape_index);

/// Category of a toy shape: its most frequent primitive kind (ties go to the
/// lower kind index). Toy datasets always have 3 categories.
int toy_category(const std::vector<Primitive>& prims);
inline constexpr int kToyNumCategories = 3;

/// Renders one query image of a shape: textured view at the bin azimuth plus
/// jitter, fixed pool elevation, with procedural background clutter. Exact
/// foreground mask comes from coverage.
QueryRecord render_query(const ShapeRecord& shape, const std::string& query_id, int azimuth_bin,
                         int num_views, int texture_id, int num_textures, int image_size, Rng& rng);

/// Deterministic toy dataset: `num_shapes` primitive unions rendered at V
/// evenly spaced azimuths, plus kQueriesPerShape textured queries per shape.
std::pair<std::vector<ShapeRecord>, std::vector<QueryRecord>>
generate_toy_dataset(const ToyShapeSpec& spec, int num_views = 12);

/// Assembles an in-memory Dataset from generated records, with the default
/// train/val query split per shape.
Dataset make_toy_dataset(const ToyShapeSpec& spec, int num_views = 12);

/// Texture-confounded variant: every training query wears its own shape's
/// canonical texture (texture id = shape index mod num_textures), so texture
/// identifies shape during training; every "val" query instead wears the next
/// shape's canonical texture. Retrieval keyed on texture follows the wrong
/// shape on the val split. Works best with num_textures >= num_shapes so
/// canonical textures are unique.
Dataset make_texture_confound_dataset(const ToyShapeSpec& spec, int num_views = 12,
                                      int train_queries_per_shape = 24, int eval_queries_per_shape = 8);

} // namespace ibsr::data
