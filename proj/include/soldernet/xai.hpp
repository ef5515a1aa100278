#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "soldernet/classifier.hpp"
#include "soldernet/image.hpp"

namespace soldernet::xai {

// Colour painted over occluded regions.
struct Baseline {
  enum class Kind { mean_color, mid_gray, constant };
  Kind kind = Kind::mean_color;
  Rgb color{};  // used when kind == constant

  static Baseline mean() { return {}; }
  static Baseline gray() { return {Kind::mid_gray, {}}; }
  static Baseline constant(Rgb c) { return {Kind::constant, c}; }
  Rgb resolve(const NormalizedImage& image) const;
};

struct XaiConfig {
  int grid = 16;
  int subdivide = 4;
  double rho = 0.8;
  Baseline baseline{};
};

// Thrown when the scorer fails on an occluded image.
struct ScorerFailure : std::runtime_error {
  ScorerFailure(int cell, const std::string& what)
      : std::runtime_error("scorer failed on occluded cell " + std::to_string(cell) + ": " + what),
        cell_index(cell) {}
  int cell_index;
};

struct ImportanceMap {
  int grid_size = 0;
  int cell_px = 0;
  double base_confidence = 0;
  std::vector<double> deltas;  // row-major, grid_size * grid_size

  double at(int row, int col) const { return deltas[static_cast<std::size_t>(row) * grid_size + col]; }
};

struct GridCell {
  int row = 0;
  int col = 0;
  auto operator<=>(const GridCell&) const = default;
};

struct CriticalFactor {
  std::vector<GridCell> cells;  // row-major order
  Mask mask;                    // 256x256
  std::vector<float> heatmap;   // 256x256, zero outside mask, max 1 inside
  double importance = 0;        // sum of coarse deltas over cells
};

struct Explanation {
  ImportanceMap importance;
  std::vector<CriticalFactor> factors;
  // Share of the total positive delta covered by the selected cells. Taken as
  // 1 when the map has no positive delta at all.
  double mass_fraction = 1.0;

  Mask combined_mask() const;
};

// Delta per cell: score(image) - score(image with the cell painted with the
// baseline). Cells are scored in parallel; the result does not depend on the
// thread count.
ImportanceMap occlusion_importance(const NormalizedImage& image, const classifier::ScorerBackend& scorer,
                                   int grid = 16, Baseline baseline = {});

// Single-threaded reference for the same computation.
ImportanceMap occlusion_importance_serial(const NormalizedImage& image, const classifier::ScorerBackend& scorer,
                                          int grid = 16, Baseline baseline = {});

// Greedy coverage of rho * (total positive delta) in descending-delta order
// (ties row-major), grouped into 4-connected factors. Heatmaps are left empty.
std::vector<CriticalFactor> extract_critical_factors(const ImportanceMap& map, double rho = 0.8);

// Same selection as extract_critical_factors, returned as the flat list of cells.
std::vector<GridCell> select_critical_cells(const ImportanceMap& map, double rho = 0.8);

// Occludes each cell's subdivide x subdivide sub-regions and converts their
// deltas into per-factor heatmaps (clamped at 0, scaled to max 1). The factor
// mask becomes the union of sub-regions with positive heat; a factor with no
// positive sub-delta keeps its whole area at heat 1.
Explanation refine_within_factors(const NormalizedImage& image, const classifier::ScorerBackend& scorer,
                                  const ImportanceMap& map, std::vector<CriticalFactor> factors, int subdivide = 4,
                                  Baseline baseline = {});

// Heatmap arithmetic of refine_within_factors for one factor, given the
// sub-region deltas in the same order as `regions`.
std::vector<double> normalize_heat(const std::vector<double>& sub_deltas);

// Coarse pass, factor extraction and refinement in one call.
Explanation explain(const NormalizedImage& image, const classifier::ScorerBackend& scorer, const XaiConfig& cfg = {});

// score(image) - score(image with the mask painted with the baseline).
double deletion_score(const NormalizedImage& image, const classifier::ScorerBackend& scorer, const Mask& mask,
                      Baseline baseline = {});

NormalizedImage occlude(const NormalizedImage& image, const Mask& mask, Rgb fill);

// RGBA copy of the image with a white 1-px contour on every factor boundary and
// a 50% colour-mapped heatmap inside factors. Other pixels are unchanged.
ImageU8 render_overlay(const NormalizedImage& image, const Explanation& explanation);

// Colour map used by the overlay, t in [0,1].
Rgb heat_color(double t);

// {grid_size, cell_px, base_confidence, cell_deltas, mass_fraction, factors:[{cells, bbox, importance,
//  heatmap_png_path, mask_png_path}]}. Writes <stem>_factorN_heat.png / _mask.png next to json_path.
nlohmann::json export_explanation(const Explanation& e, const std::filesystem::path& json_path);
nlohmann::json to_json(const Explanation& e);

// Inverse of export_explanation. Heatmaps come back quantised to 1/255.
Explanation load_explanation(const std::filesystem::path& json_path);

}  // namespace soldernet::xai
