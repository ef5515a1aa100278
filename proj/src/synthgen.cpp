#include "soldernet/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "soldernet/png_io.hpp"
#include "soldernet/rng.hpp"

namespace soldernet::synthgen {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

const std::array<std::pair<DefectKind, std::string_view>, 7> kKindNames{{
    {DefectKind::none, "none"},
    {DefectKind::splash, "splash"},
    {DefectKind::crack, "crack"},
    {DefectKind::poor_wetting, "poor_wetting"},
    {DefectKind::fiber, "fiber"},
    {DefectKind::burn, "burn"},
    {DefectKind::disturbed, "disturbed"},
}};

// Float canvas plus the set of pixels touched by defect injection.
struct Canvas {
  ImageF img{kImageSize, kImageSize, 3};
  Mask painted{kImageSize, kImageSize};

  void set(int x, int y, Rgb c) {
    img.at(x, y, 0) = c.r;
    img.at(x, y, 1) = c.g;
    img.at(x, y, 2) = c.b;
  }
  void paint(int x, int y, Rgb c) {
    set(x, y, c);
    painted.at(x, y) = 1;
  }
};

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a < -kPi) a += 2 * kPi;
  return a;
}

// Smooth noise in [-1,1]: bilinear interpolation of a coarse random lattice.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int cells) : cells_(cells), lattice_((cells + 1) * (cells + 1)) {
    for (auto& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }
  double at(double x, double y) const {
    const double gx = x / kImageSize * cells_, gy = y / kImageSize * cells_;
    const int ix = std::clamp(static_cast<int>(gx), 0, cells_ - 1);
    const int iy = std::clamp(static_cast<int>(gy), 0, cells_ - 1);
    const double fx = gx - ix, fy = gy - iy;
    auto L = [&](int i, int j) { return lattice_[j * (cells_ + 1) + i]; };
    const double top = L(ix, iy) * (1 - fx) + L(ix + 1, iy) * fx;
    const double bot = L(ix, iy + 1) * (1 - fx) + L(ix + 1, iy + 1) * fx;
    return top * (1 - fy) + bot * fy;
  }

 private:
  int cells_;
  std::vector<double> lattice_;
};

Rgb copper(double jitter) {
  const auto k = static_cast<float>(1.0 + 0.02 * jitter);
  return {0.80f * k, 0.50f * k, 0.26f * k};
}

Rgb solder(double v) {
  const auto f = static_cast<float>(v);
  return {0.98f * f, 0.99f * f, f};
}

double blob_value(double r, double blob_radius) {
  const double t = std::clamp(r / blob_radius, 0.0, 1.0);
  return 0.68 + 0.12 * (1.0 - t * t);
}

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

void render_base(Canvas& cv, const JointSpec& spec, const JointGeometry& g, Rng& rng) {
  ValueNoise coarse(rng, 8);
  const Hsv board{static_cast<float>(79.0 + 100.0 * spec.board_hue), 0.6f, 0.32f};
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double r = std::hypot(px - g.cx, py - g.cy);
      const double grain = rng.uniform(-1.0, 1.0);
      if (r <= g.blob_radius) {
        cv.set(x, y, solder(blob_value(r, g.blob_radius)));
      } else if (r <= g.pad_radius) {
        cv.set(x, y, copper(grain));
      } else {
        Hsv c = board;
        c.v = static_cast<float>(board.v + 0.03 * coarse.at(px, py) + 0.012 * grain);
        cv.set(x, y, from_hsv(c));
      }
    }
  }
}

void paint_disc(Canvas& cv, double cx, double cy, double radius, Rgb (*shade)(double)) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(kImageSize - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(kImageSize - 1, static_cast<int>(std::ceil(cy + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      if (r <= radius) cv.paint(x, y, shade(r / radius));
    }
  }
}

Rgb splash_shade(double t) { return solder(0.70 + 0.10 * (1.0 - t * t)); }

bool disc_inside(double cx, double cy, double r, double margin) {
  return cx - r >= margin && cy - r >= margin && cx + r <= kImageSize - margin && cy + r <= kImageSize - margin;
}

void inject_splash(Canvas& cv, const JointGeometry& g, Rng& rng) {
  const double radius = rng.uniform(10.0, 16.0);
  const double gap = rng.uniform(4.0, 14.0);
  double angle = rng.uniform(-kPi, kPi);
  const double dist = g.pad_radius + radius + gap;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double cx = g.cx + dist * std::cos(angle), cy = g.cy + dist * std::sin(angle);
    if (disc_inside(cx, cy, radius, 2.0)) {
      paint_disc(cv, cx, cy, radius, splash_shade);
      return;
    }
    angle += 2.399963;  // golden angle
  }
  // Corners always have room: the joint is near the centre and the pad is at most 90 px.
  const double cx = g.cx < kImageSize / 2.0 ? kImageSize - radius - 3 : radius + 3;
  const double cy = g.cy < kImageSize / 2.0 ? kImageSize - radius - 3 : radius + 3;
  paint_disc(cv, cx, cy, radius, splash_shade);
}

void inject_crack(Canvas& cv, const JointGeometry& g, Rng& rng) {
  const double half_width = rng.bernoulli(0.5) ? 1.5 : 2.0;
  const double a = rng.uniform(-kPi, kPi);
  const double b = a + kPi + rng.uniform(-0.5, 0.5);
  const double reach = 0.9 * g.blob_radius;
  std::array<std::pair<double, double>, 4> pts;
  pts[0] = {g.cx + reach * std::cos(a), g.cy + reach * std::sin(a)};
  pts[3] = {g.cx + reach * std::cos(b), g.cy + reach * std::sin(b)};
  const double nx = -(pts[3].second - pts[0].second), ny = pts[3].first - pts[0].first;
  const double nlen = std::hypot(nx, ny);
  for (int i = 1; i <= 2; ++i) {
    const double t = i / 3.0;
    const double off = rng.uniform(-0.15, 0.15) * g.blob_radius;
    pts[i] = {pts[0].first + t * (pts[3].first - pts[0].first) + off * nx / nlen,
              pts[0].second + t * (pts[3].second - pts[0].second) + off * ny / nlen};
  }
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (std::hypot(px - g.cx, py - g.cy) >= g.blob_radius - 1.0) continue;
      double d = 1e9;
      for (int s = 0; s < 3; ++s) {
        d = std::min(d, dist_to_segment(px, py, pts[s].first, pts[s].second, pts[s + 1].first, pts[s + 1].second));
      }
      if (d <= half_width) {
        const auto n = static_cast<float>(0.01 * rng.uniform(-1.0, 1.0));
        cv.paint(x, y, {0.10f + n, 0.09f + n, 0.08f + n});
      }
    }
  }
}

void inject_poor_wetting(Canvas& cv, const JointGeometry& g, Rng& rng) {
  const double centre = rng.uniform(-kPi, kPi);
  const double half_arc = rng.uniform(0.6, 0.95);
  const double depth = std::min(rng.uniform(18.0, 28.0), g.blob_radius - 8.0);
  const double ph1 = rng.uniform(0.0, 2 * kPi), ph2 = rng.uniform(0.0, 2 * kPi);
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double r = std::hypot(px - g.cx, py - g.cy);
      if (r > g.blob_radius) continue;
      const double theta = std::atan2(py - g.cy, px - g.cx);
      const double delta = wrap_angle(theta - centre);
      if (std::abs(delta) >= half_arc) continue;
      const double profile = std::pow(std::cos(0.5 * kPi * delta / half_arc), 2);
      const double ragged = 2.0 * std::sin(5 * theta + ph1) + 1.5 * std::sin(11 * theta + ph2);
      const double edge = g.blob_radius - (depth + ragged) * profile;
      if (r >= edge) cv.paint(x, y, copper(rng.uniform(-1.0, 1.0)));
    }
  }
}

void inject_fiber(Canvas& cv, const JointGeometry& g, Rng& rng) {
  struct P {
    double x, y;
  };
  P p0{}, p1{}, p2{};
  double length = 0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    length = rng.uniform(110.0, 170.0) * (attempt < 100 ? 1.0 : 0.6);
    const double a = rng.uniform(-kPi, kPi);
    const double d = rng.uniform(0.2, 1.3) * g.pad_radius;
    p0 = {g.cx + d * std::cos(a), g.cy + d * std::sin(a)};
    const double phi = rng.uniform(-kPi, kPi);
    p2 = {p0.x + length * std::cos(phi), p0.y + length * std::sin(phi)};
    const double bend = rng.uniform(-0.3, 0.3) * length;
    p1 = {0.5 * (p0.x + p2.x) - bend * std::sin(phi), 0.5 * (p0.y + p2.y) + bend * std::cos(phi)};
    auto inside = [](P p) { return p.x >= 6 && p.y >= 6 && p.x <= kImageSize - 6 && p.y <= kImageSize - 6; };
    // The control point bounds the curve (convex hull property).
    if (inside(p0) && inside(p1) && inside(p2)) break;
  }
  const int steps = static_cast<int>(length * 5.0);
  const Rgb white{0.97f, 0.96f, 0.92f};
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const double u = 1.0 - t;
    const double bx = u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x;
    const double by = u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y;
    for (int y = static_cast<int>(by) - 1; y <= static_cast<int>(by) + 1; ++y) {
      for (int x = static_cast<int>(bx) - 1; x <= static_cast<int>(bx) + 1; ++x) {
        if (x < 0 || y < 0 || x >= kImageSize || y >= kImageSize) continue;
        if (std::hypot(x + 0.5 - bx, y + 0.5 - by) <= 0.75) cv.paint(x, y, white);
      }
    }
  }
}

void inject_burn(Canvas& cv, const JointGeometry& g, Rng& rng) {
  const double a = rng.uniform(-kPi, kPi);
  const double d = g.pad_radius + rng.uniform(-12.0, 6.0);
  double cx = g.cx + d * std::cos(a), cy = g.cy + d * std::sin(a);
  cx = std::clamp(cx, 30.0, kImageSize - 30.0);
  cy = std::clamp(cy, 30.0, kImageSize - 30.0);
  const int lobes = static_cast<int>(rng.integer(3, 5));
  std::vector<std::array<double, 3>> discs;
  for (int i = 0; i < lobes; ++i) {
    discs.push_back({cx + rng.uniform(-10.0, 10.0), cy + rng.uniform(-10.0, 10.0), rng.uniform(7.0, 14.0)});
  }
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      bool hit = false;
      for (const auto& dsc : discs) hit = hit || std::hypot(x + 0.5 - dsc[0], y + 0.5 - dsc[1]) <= dsc[2];
      if (!hit) continue;
      const auto k = static_cast<float>(1.0 + 0.1 * rng.uniform(-1.0, 1.0));
      cv.paint(x, y, {0.14f * k, 0.115f * k, 0.10f * k});
    }
  }
}

void inject_disturbed(Canvas& cv, const JointGeometry& g, Rng& rng) {
  const double radius = rng.uniform(14.0, std::max(14.0, std::min(24.0, g.blob_radius - 8.0)));
  const double reach = std::max(0.0, g.blob_radius - radius - 4.0);
  const double a = rng.uniform(-kPi, kPi), d = rng.uniform(0.0, reach);
  const double cx = g.cx + d * std::cos(a), cy = g.cy + d * std::sin(a);
  const double period = rng.uniform(7.0, 9.0);
  const double phi = rng.uniform(0.0, kPi), phase = rng.uniform(0.0, 2 * kPi);
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (std::hypot(px - cx, py - cy) > radius) continue;
      const double r = std::hypot(px - g.cx, py - g.cy);
      if (r > g.blob_radius) continue;
      const double wave = std::sin(2 * kPi * (px * std::cos(phi) + py * std::sin(phi)) / period + phase);
      cv.paint(x, y, solder(blob_value(r, g.blob_radius) + 0.06 * wave));
    }
  }
}

}  // namespace

std::string_view to_string(DefectKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "none";
}

DefectKind defect_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  throw ParameterError("unknown defect kind '" + std::string(s) + "'");
}

JointSample generate_joint(const JointSpec& spec) {
  if (spec.pad_radius_px < kMinPadRadius || spec.pad_radius_px > kMaxPadRadius) {
    throw ParameterError("pad_radius_px must be in [40,90], got " + std::to_string(spec.pad_radius_px));
  }
  if (!(spec.board_hue >= 0.0 && spec.board_hue <= 1.0)) throw ParameterError("board_hue must be in [0,1]");

  // Base and defect draws use separate streams so the defect never perturbs the base.
  Rng base = Rng::stream(spec.seed, 1);
  Rng defect = Rng::stream(spec.seed, 2);

  JointGeometry g;
  g.cx = kImageSize / 2.0 + base.uniform(-8.0, 8.0);
  g.cy = kImageSize / 2.0 + base.uniform(-8.0, 8.0);
  g.pad_radius = spec.pad_radius_px;
  g.blob_radius = spec.pad_radius_px - kPadRingWidth;

  Canvas cv;
  render_base(cv, spec, g, base);

  switch (spec.kind) {
    case DefectKind::none: break;
    case DefectKind::splash: inject_splash(cv, g, defect); break;
    case DefectKind::crack: inject_crack(cv, g, defect); break;
    case DefectKind::poor_wetting: inject_poor_wetting(cv, g, defect); break;
    case DefectKind::fiber: inject_fiber(cv, g, defect); break;
    case DefectKind::burn: inject_burn(cv, g, defect); break;
    case DefectKind::disturbed: inject_disturbed(cv, g, defect); break;
  }

  JointSample out;
  out.image = to_u8(cv.img);
  out.truth.kind = spec.kind;
  out.truth.label = spec.kind == DefectKind::none ? Label::non_defective : Label::defective;
  out.truth.defect_mask = std::move(cv.painted);
  out.geometry = g;
  return out;
}

void paint_solder_disc(ImageU8& img, Mask* painted, double cx, double cy, double radius) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      if (r > radius) continue;
      const double t = r / radius;
      const Rgb c = splash_shade(t);
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(c.r * 255.0f));
      img.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(c.g * 255.0f));
      img.at(x, y, 2) = static_cast<std::uint8_t>(std::lround(c.b * 255.0f));
      if (painted) painted->at(x, y) = 1;
    }
  }
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "unassigned";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unassigned" || s.empty()) return Split::unassigned;
  throw ParameterError("unknown split '" + std::string(s) + "'");
}

KindWeights uniform_kind_weights() {
  KindWeights w;
  for (auto k : kDefectKinds) w.emplace_back(k, 1.0);
  return w;
}

DatasetManifest plan_dataset(std::size_t n, double defect_ratio, const KindWeights& kinds, std::uint64_t seed) {
  if (n < 1) throw ParameterError("dataset size must be at least 1");
  if (!(defect_ratio >= 0.0 && defect_ratio <= 1.0)) throw ParameterError("defect_ratio must be in [0,1]");
  double total_weight = 0;
  for (const auto& [k, w] : kinds) {
    if (k == DefectKind::none) throw ParameterError("kind table must not contain 'none'");
    if (!(w >= 0.0)) throw ParameterError("kind weights must be non-negative");
    total_weight += w;
  }
  const auto n_defective = static_cast<std::size_t>(std::llround(static_cast<double>(n) * defect_ratio));
  if (n_defective > 0 && total_weight <= 0.0) throw ParameterError("empty kind table with defect_ratio > 0");

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, i - 1))]);
  std::vector<bool> defective(n, false);
  for (std::size_t i = 0; i < n_defective; ++i) defective[order[i]] = true;

  DatasetManifest m;
  m.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng er = Rng::stream(seed, 1000 + i);
    ManifestEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "joint_%05zu", i);
    e.id = id;
    e.image_path = fs::path("images") / (e.id + ".png");
    e.mask_path = fs::path("masks") / (e.id + ".png");
    JointSpec spec;
    spec.seed = er.next();
    spec.pad_radius_px = static_cast<int>(er.integer(kMinPadRadius, kMaxPadRadius));
    spec.board_hue = er.uniform();
    spec.kind = DefectKind::none;
    if (defective[i]) {
      double pick = er.uniform() * total_weight;
      spec.kind = kinds.back().first;
      for (const auto& [k, w] : kinds) {
        if (pick < w) {
          spec.kind = k;
          break;
        }
        pick -= w;
      }
    }
    e.kind = spec.kind;
    e.label = spec.kind == DefectKind::none ? Label::non_defective : Label::defective;
    e.spec = spec;
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest generate_dataset(std::size_t n, double defect_ratio, const KindWeights& kinds, std::uint64_t seed,
                                 const fs::path& out_dir) {
  DatasetManifest m = plan_dataset(n, defect_ratio, kinds, seed);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  const auto count = static_cast<std::ptrdiff_t>(m.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto& e = m.entries[static_cast<std::size_t>(i)];
    const JointSample s = generate_joint(*e.spec);
    write_png(out_dir / e.image_path, s.image);
    write_mask_png(out_dir / e.mask_path, s.truth.defect_mask);
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  const fs::path root = fs::absolute(out_dir);
  for (auto& e : m.entries) {
    e.image_path = root / e.image_path;
    e.mask_path = root / e.mask_path;
  }
  return m;
}

DatasetManifest stratified_split(DatasetManifest manifest, SplitFractions f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ParameterError("split fractions must be non-negative and sum to 1");
  }
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (static_cast<int>(manifest.entries[i].label) == cls) members.push_back(i);
    }
    if (members.empty()) continue;
    const char* cls_name = cls == 1 ? "defective" : "non_defective";
    if (members.size() < 3) {
      manifest.warnings.push_back(std::string("class ") + cls_name + " has " + std::to_string(members.size()) +
                                  " samples; all assigned to train");
      for (auto i : members) manifest.entries[i].split = Split::train;
      continue;
    }
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(cls));
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[static_cast<std::size_t>(rng.integer(0, i - 1))]);
    }
    const double n = static_cast<double>(members.size());
    std::array<std::size_t, 3> counts{static_cast<std::size_t>(std::floor(f.train * n + 1e-9)),
                                      static_cast<std::size_t>(std::floor(f.val * n + 1e-9)),
                                      static_cast<std::size_t>(std::floor(f.test * n + 1e-9))};
    std::size_t leftover = members.size() - counts[0] - counts[1] - counts[2];
    for (std::size_t s = 0; leftover > 0; s = (s + 1) % 3, --leftover) ++counts[s];
    std::size_t pos = 0;
    const std::array<Split, 3> splits{Split::train, Split::val, Split::test};
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) manifest.entries[members[pos++]].split = splits[s];
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  // Paths under the manifest's directory are stored relative to it.
  const fs::path base = fs::absolute(path).parent_path();
  auto stored = [&](const fs::path& p) {
    if (p.empty() || !p.is_absolute()) return p.string();
    const fs::path rel = p.lexically_relative(base);
    return rel.empty() || *rel.begin() == ".." ? p.string() : rel.string();
  };
  for (const auto& e : m.entries) {
    json j{{"id", e.id},
           {"image_path", stored(e.image_path)},
           {"mask_path", stored(e.mask_path)},
           {"label", static_cast<int>(e.label)},
           {"kind", to_string(e.kind)},
           {"split", e.split == Split::unassigned ? json(nullptr) : json(to_string(e.split))}};
    if (e.spec) {
      j["seed"] = e.spec->seed;
      j["pad_radius_px"] = e.spec->pad_radius_px;
      j["board_hue"] = e.spec->board_hue;
    }
    out << j.dump() << '\n';
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  DatasetManifest m;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        return fp.is_absolute() || fp.empty() ? fp : base / fp;
      };
      e.image_path = resolve(j.at("image_path").get<std::string>());
      e.mask_path = resolve(j.value("mask_path", std::string{}));
      e.label = j.at("label").get<int>() != 0 ? Label::defective : Label::non_defective;
      e.kind = defect_kind_from_string(j.value("kind", std::string(e.label == Label::defective ? "splash" : "none")));
      if (j.contains("split") && !j["split"].is_null()) e.split = split_from_string(j["split"].get<std::string>());
      if (j.contains("seed")) {
        JointSpec spec;
        spec.seed = j["seed"].get<std::uint64_t>();
        spec.kind = e.kind;
        spec.pad_radius_px = j.value("pad_radius_px", 60);
        spec.board_hue = j.value("board_hue", 0.5);
        e.spec = spec;
      }
      if (!ids.insert(e.id).second) throw ValidationError("duplicate id '" + e.id + "'");
      m.entries.push_back(std::move(e));
    } catch (const ValidationError& err) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + err.what());
    } catch (const std::exception& err) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed manifest line: " + err.what());
    }
  }
  return m;
}

ImageU8 load_entry_image(const ManifestEntry& e) {
  ImageU8 img = read_png(e.image_path);
  if (img.channels == 4) {
    ImageU8 rgb(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = img.at(x, y, c);
    return rgb;
  }
  if (img.channels == 1) {
    ImageU8 rgb(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = img.at(x, y, 0);
    return rgb;
  }
  return img;
}

}  // namespace soldernet::synthgen
