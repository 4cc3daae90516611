#pragma once

#include <string>

#include "ibsr/data/types.hpp"

namespace ibsr::data {

/// Parses and eagerly validates a dataset manifest: schema, file existence,
/// shape references from queries, view counts against num_views, and split
/// integrity. Pixel data is not loaded here.
DatasetManifest load_manifest(const std::string& path);

/// Loads pixel data for every record in a validated manifest and checks the
/// pixel-level invariants (decoded normal norms, non-empty masks, azimuth
/// spacing).
Dataset load_dataset(const DatasetManifest& manifest);

/// Writes records + manifest under dir. Layout: manifest.json, shapes/*.json
/// (+ PNGs), queries/*.json (+ image and 1-bit mask PNGs).
void save_dataset(const std::vector<ShapeRecord>& pool, const std::vector<QueryRecord>& queries,
                  const std::map<std::string, std::vector<std::string>>& splits,
                  int num_categories, int num_views, const std::string& dir);

inline constexpr int kManifestVersion = 1;

} // namespace ibsr::data
