#include "soldernet/xai.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <queue>

#include "soldernet/png_io.hpp"

namespace soldernet::xai {
namespace {

using classifier::ScorerBackend;

struct Rect {
  int x0, y0, x1, y1;  // half-open
};

void fill_rect(NormalizedImage& img, const Rect& r, Rgb c) {
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      img.at(x, y, 0) = c.r;
      img.at(x, y, 1) = c.g;
      img.at(x, y, 2) = c.b;
    }
  }
}

void copy_rect(NormalizedImage& dst, const NormalizedImage& src, const Rect& r) {
  for (int y = r.y0; y < r.y1; ++y) {
    const auto begin = src.data.begin() + static_cast<std::ptrdiff_t>(src.index(r.x0, y, 0));
    std::copy(begin, begin + (r.x1 - r.x0) * src.channels, dst.data.begin() + static_cast<std::ptrdiff_t>(dst.index(r.x0, y, 0)));
  }
}

Rect cell_rect(int index, int grid, int cell_px) {
  const int row = index / grid, col = index % grid;
  return {col * cell_px, row * cell_px, (col + 1) * cell_px, (row + 1) * cell_px};
}

void check_image(const NormalizedImage& image) {
  if (image.width != kImageSize || image.height != kImageSize || image.channels != 3) {
    throw ParameterError("explanations require a 256x256x3 normalized image");
  }
}

int checked_cell_px(int grid) {
  if (grid <= 0 || kImageSize % grid != 0) {
    throw ParameterError("grid size " + std::to_string(grid) + " does not divide 256");
  }
  return kImageSize / grid;
}

// Scores `image` with each rect painted in turn. Parallel over rects; each
// thread patches and restores its own working copy.
std::vector<double> occluded_deltas(const NormalizedImage& image, const ScorerBackend& scorer,
                                    const std::vector<Rect>& rects, Rgb fill, double base) {
  std::vector<double> deltas(rects.size(), 0.0);
  const auto count = static_cast<std::ptrdiff_t>(rects.size());
  std::ptrdiff_t failed = -1;
  std::string failure;
#pragma omp parallel
  {
    NormalizedImage work = image;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const Rect& r = rects[static_cast<std::size_t>(i)];
      fill_rect(work, r, fill);
      try {
        deltas[static_cast<std::size_t>(i)] = base - scorer.score(work).value();
      } catch (const std::exception& e) {
#pragma omp critical(soldernet_xai_failure)
        {
          if (failed < 0 || i < failed) {
            failed = i;
            failure = e.what();
          }
        }
      }
      copy_rect(work, image, r);
    }
  }
  if (failed >= 0) throw ScorerFailure(static_cast<int>(failed), failure);
  return deltas;
}

std::vector<Rect> grid_rects(int grid, int cell_px) {
  std::vector<Rect> rects;
  rects.reserve(static_cast<std::size_t>(grid) * grid);
  for (int i = 0; i < grid * grid; ++i) rects.push_back(cell_rect(i, grid, cell_px));
  return rects;
}

}  // namespace

Rgb Baseline::resolve(const NormalizedImage& image) const {
  switch (kind) {
    case Kind::mean_color: return mean_color(image);
    case Kind::mid_gray: return {0.5f, 0.5f, 0.5f};
    case Kind::constant: return color;
  }
  return color;
}

Mask Explanation::combined_mask() const {
  Mask m(kImageSize, kImageSize);
  for (const auto& f : factors)
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] |= f.mask.data[i];
  return m;
}

ImportanceMap occlusion_importance(const NormalizedImage& image, const ScorerBackend& scorer, int grid,
                                   Baseline baseline) {
  check_image(image);
  ImportanceMap map;
  map.grid_size = grid;
  map.cell_px = checked_cell_px(grid);
  map.base_confidence = scorer.score(image).value();
  map.deltas = occluded_deltas(image, scorer, grid_rects(grid, map.cell_px), baseline.resolve(image),
                               map.base_confidence);
  return map;
}

ImportanceMap occlusion_importance_serial(const NormalizedImage& image, const ScorerBackend& scorer, int grid,
                                          Baseline baseline) {
  check_image(image);
  ImportanceMap map;
  map.grid_size = grid;
  map.cell_px = checked_cell_px(grid);
  map.base_confidence = scorer.score(image).value();
  const Rgb fill = baseline.resolve(image);
  NormalizedImage work = image;
  map.deltas.resize(static_cast<std::size_t>(grid) * grid);
  for (int i = 0; i < grid * grid; ++i) {
    const Rect r = cell_rect(i, grid, map.cell_px);
    fill_rect(work, r, fill);
    try {
      map.deltas[static_cast<std::size_t>(i)] = map.base_confidence - scorer.score(work).value();
    } catch (const std::exception& e) {
      throw ScorerFailure(i, e.what());
    }
    copy_rect(work, image, r);
  }
  return map;
}

std::vector<GridCell> select_critical_cells(const ImportanceMap& map, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("rho must be in (0,1]");
  std::vector<int> positive;
  double total = 0;
  for (int i = 0; i < static_cast<int>(map.deltas.size()); ++i) {
    if (map.deltas[static_cast<std::size_t>(i)] > 0.0) {
      positive.push_back(i);
      total += map.deltas[static_cast<std::size_t>(i)];
    }
  }
  std::stable_sort(positive.begin(), positive.end(), [&](int a, int b) {
    return map.deltas[static_cast<std::size_t>(a)] > map.deltas[static_cast<std::size_t>(b)];
  });
  std::vector<GridCell> selected;
  const double target = rho * total;
  double covered = 0;
  for (int i : positive) {
    if (covered >= target) break;
    covered += map.deltas[static_cast<std::size_t>(i)];
    selected.push_back({i / map.grid_size, i % map.grid_size});
  }
  return selected;
}

std::vector<CriticalFactor> extract_critical_factors(const ImportanceMap& map, double rho) {
  const std::vector<GridCell> selected = select_critical_cells(map, rho);
  const int g = map.grid_size;
  std::vector<int> owner(static_cast<std::size_t>(g) * g, -2);  // -2 unselected, -1 selected unvisited
  for (const auto& c : selected) owner[static_cast<std::size_t>(c.row) * g + c.col] = -1;

  std::vector<CriticalFactor> factors;
  for (int start = 0; start < g * g; ++start) {
    if (owner[static_cast<std::size_t>(start)] != -1) continue;
    CriticalFactor f;
    const int id = static_cast<int>(factors.size());
    std::queue<int> q;
    q.push(start);
    owner[static_cast<std::size_t>(start)] = id;
    while (!q.empty()) {
      const int p = q.front();
      q.pop();
      const int r = p / g, c = p % g;
      f.cells.push_back({r, c});
      f.importance += map.deltas[static_cast<std::size_t>(p)];
      const std::array<std::pair<int, int>, 4> nbrs{{{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}}};
      for (auto [nr, nc] : nbrs) {
        if (nr < 0 || nc < 0 || nr >= g || nc >= g) continue;
        const int qi = nr * g + nc;
        if (owner[static_cast<std::size_t>(qi)] == -1) {
          owner[static_cast<std::size_t>(qi)] = id;
          q.push(qi);
        }
      }
    }
    std::sort(f.cells.begin(), f.cells.end());
    f.mask = Mask(kImageSize, kImageSize);
    for (const auto& cell : f.cells) {
      for (int y = cell.row * map.cell_px; y < (cell.row + 1) * map.cell_px; ++y)
        for (int x = cell.col * map.cell_px; x < (cell.col + 1) * map.cell_px; ++x) f.mask.at(x, y) = 1;
    }
    factors.push_back(std::move(f));
  }
  std::stable_sort(factors.begin(), factors.end(),
                   [](const CriticalFactor& a, const CriticalFactor& b) { return a.importance > b.importance; });
  return factors;
}

std::vector<double> normalize_heat(const std::vector<double>& sub_deltas) {
  double mx = 0;
  for (double d : sub_deltas) mx = std::max(mx, d);
  std::vector<double> heat(sub_deltas.size(), 1.0);
  if (mx <= 0.0) return heat;
  for (std::size_t i = 0; i < sub_deltas.size(); ++i) heat[i] = std::max(0.0, sub_deltas[i]) / mx;
  return heat;
}

Explanation refine_within_factors(const NormalizedImage& image, const ScorerBackend& scorer, const ImportanceMap& map,
                                  std::vector<CriticalFactor> factors, int subdivide, Baseline baseline) {
  check_image(image);
  if (subdivide < 1 || map.cell_px % subdivide != 0) {
    throw ParameterError("subdivide " + std::to_string(subdivide) + " does not divide the cell size");
  }
  const int sub_px = map.cell_px / subdivide;

  // Flatten every factor's sub-regions into one job list so the whole fine pass
  // is a single parallel sweep.
  std::vector<Rect> rects;
  std::vector<std::size_t> factor_begin;
  for (const auto& f : factors) {
    factor_begin.push_back(rects.size());
    for (const auto& cell : f.cells) {
      for (int sr = 0; sr < subdivide; ++sr) {
        for (int sc = 0; sc < subdivide; ++sc) {
          const int x0 = cell.col * map.cell_px + sc * sub_px, y0 = cell.row * map.cell_px + sr * sub_px;
          rects.push_back({x0, y0, x0 + sub_px, y0 + sub_px});
        }
      }
    }
  }
  factor_begin.push_back(rects.size());
  const double base = scorer.score(image).value();
  const std::vector<double> deltas = occluded_deltas(image, scorer, rects, baseline.resolve(image), base);

  double total_positive = 0;
  for (double d : map.deltas) total_positive += std::max(0.0, d);
  double covered = 0;

  Explanation e;
  e.importance = map;
  for (std::size_t fi = 0; fi < factors.size(); ++fi) {
    CriticalFactor& f = factors[fi];
    const std::vector<double> sub(deltas.begin() + static_cast<std::ptrdiff_t>(factor_begin[fi]),
                                  deltas.begin() + static_cast<std::ptrdiff_t>(factor_begin[fi + 1]));
    const std::vector<double> heat = normalize_heat(sub);
    f.mask = Mask(kImageSize, kImageSize);
    f.heatmap.assign(static_cast<std::size_t>(kImageSize) * kImageSize, 0.0f);
    for (std::size_t k = 0; k < heat.size(); ++k) {
      if (heat[k] <= 0.0) continue;
      const Rect& r = rects[factor_begin[fi] + k];
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
          f.mask.at(x, y) = 1;
          f.heatmap[static_cast<std::size_t>(y) * kImageSize + x] = static_cast<float>(heat[k]);
        }
      }
    }
    for (const auto& cell : f.cells) covered += std::max(0.0, map.at(cell.row, cell.col));
  }
  e.factors = std::move(factors);
  e.mass_fraction = total_positive > 0.0 ? covered / total_positive : 1.0;
  return e;
}

Explanation explain(const NormalizedImage& image, const ScorerBackend& scorer, const XaiConfig& cfg) {
  const ImportanceMap map = occlusion_importance(image, scorer, cfg.grid, cfg.baseline);
  return refine_within_factors(image, scorer, map, extract_critical_factors(map, cfg.rho), cfg.subdivide,
                               cfg.baseline);
}

NormalizedImage occlude(const NormalizedImage& image, const Mask& mask, Rgb fill) {
  if (mask.width != image.width || mask.height != image.height) throw ParameterError("mask size mismatch");
  NormalizedImage out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!mask.at(x, y)) continue;
      out.at(x, y, 0) = fill.r;
      out.at(x, y, 1) = fill.g;
      out.at(x, y, 2) = fill.b;
    }
  }
  return out;
}

double deletion_score(const NormalizedImage& image, const ScorerBackend& scorer, const Mask& mask, Baseline baseline) {
  if (mask.width != image.width || mask.height != image.height) throw ParameterError("mask size mismatch");
  const double base = scorer.score(image).value();
  if (mask.empty()) return 0.0;
  return base - scorer.score(occlude(image, mask, baseline.resolve(image))).value();
}

Rgb heat_color(double t) {
  // Dark purple -> red -> orange -> pale yellow.
  static constexpr std::array<std::array<float, 3>, 5> stops{{
      {0.23f, 0.05f, 0.45f},
      {0.70f, 0.13f, 0.40f},
      {0.93f, 0.33f, 0.15f},
      {0.99f, 0.65f, 0.04f},
      {0.99f, 0.99f, 0.60f},
  }};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const auto f = static_cast<float>(t - static_cast<double>(i));
  return {stops[i][0] + f * (stops[i + 1][0] - stops[i][0]), stops[i][1] + f * (stops[i + 1][1] - stops[i][1]),
          stops[i][2] + f * (stops[i + 1][2] - stops[i][2])};
}

ImageU8 render_overlay(const NormalizedImage& image, const Explanation& explanation) {
  const ImageU8 base = to_u8(image);
  ImageU8 out(image.width, image.height, 4, 255);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = base.at(x, y, c);

  for (const auto& f : explanation.factors) {
    auto inside = [&](int x, int y) {
      return x >= 0 && y >= 0 && x < f.mask.width && y < f.mask.height && f.mask.at(x, y);
    };
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        if (!f.mask.at(x, y)) continue;
        const bool contour = !inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1);
        if (contour) {
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = 255;
          continue;
        }
        const Rgb h = heat_color(f.heatmap[static_cast<std::size_t>(y) * image.width + x]);
        const float tint[3] = {h.r, h.g, h.b};
        for (int c = 0; c < 3; ++c) {
          const float blended = 0.5f * tint[c] * 255.0f + 0.5f * base.at(x, y, c);
          out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(blended, 0.0f, 255.0f)));
        }
      }
    }
  }
  return out;
}

nlohmann::json to_json(const Explanation& e) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : e.factors) {
    nlohmann::json cells = nlohmann::json::array();
    int x0 = kImageSize, y0 = kImageSize, x1 = -1, y1 = -1;
    for (const auto& c : f.cells) cells.push_back({c.row, c.col});
    for (int y = 0; y < f.mask.height; ++y) {
      for (int x = 0; x < f.mask.width; ++x) {
        if (!f.mask.at(x, y)) continue;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    factors.push_back({{"cells", cells},
                       {"bbox", x1 < 0 ? nlohmann::json(nullptr) : nlohmann::json{x0, y0, x1 + 1, y1 + 1}},
                       {"importance", f.importance},
                       {"area_px", f.mask.count()}});
  }
  return {{"grid_size", e.importance.grid_size},
          {"cell_px", e.importance.cell_px},
          {"base_confidence", e.importance.base_confidence},
          {"cell_deltas", e.importance.deltas},
          {"mass_fraction", e.mass_fraction},
          {"factors", factors}};
}

nlohmann::json export_explanation(const Explanation& e, const std::filesystem::path& json_path) {
  nlohmann::json j = to_json(e);
  const auto dir = json_path.parent_path();
  const auto stem = json_path.stem().string();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < e.factors.size(); ++i) {
    const auto& f = e.factors[i];
    const std::string base = stem + "_factor" + std::to_string(i);
    ImageU8 heat(kImageSize, kImageSize, 1);
    for (std::size_t p = 0; p < f.heatmap.size(); ++p) {
      heat.data[p] = static_cast<std::uint8_t>(std::lround(std::clamp(f.heatmap[p], 0.0f, 1.0f) * 255.0f));
    }
    write_png(dir / (base + "_heat.png"), heat);
    write_mask_png(dir / (base + "_mask.png"), f.mask);
    j["factors"][i]["heatmap_png_path"] = base + "_heat.png";
    j["factors"][i]["mask_png_path"] = base + "_mask.png";
  }
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << j.dump(2) << '\n';
  return j;
}

Explanation load_explanation(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open " + json_path.string());
  Explanation e;
  try {
    const auto j = nlohmann::json::parse(in);
    e.importance.grid_size = j.at("grid_size").get<int>();
    e.importance.cell_px = j.at("cell_px").get<int>();
    e.importance.base_confidence = j.at("base_confidence").get<double>();
    e.importance.deltas = j.at("cell_deltas").get<std::vector<double>>();
    e.mass_fraction = j.at("mass_fraction").get<double>();
    const auto dir = json_path.parent_path();
    for (const auto& jf : j.at("factors")) {
      CriticalFactor f;
      for (const auto& c : jf.at("cells")) f.cells.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
      f.importance = jf.at("importance").get<double>();
      f.mask = read_mask_png(dir / jf.at("mask_png_path").get<std::string>());
      const ImageU8 heat = read_png(dir / jf.at("heatmap_png_path").get<std::string>());
      f.heatmap.resize(heat.data.size());
      for (std::size_t p = 0; p < heat.data.size(); ++p) f.heatmap[p] = heat.data[p] / 255.0f;
      e.factors.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("malformed explanation " + json_path.string() + ": " + ex.what());
  }
  return e;
}

}  // namespace soldernet::xai
