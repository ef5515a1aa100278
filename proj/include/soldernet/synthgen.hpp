#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "soldernet/image.hpp"

namespace soldernet::synthgen {

enum class DefectKind { none, splash, crack, poor_wetting, fiber, burn, disturbed };

inline constexpr DefectKind kDefectKinds[] = {DefectKind::splash, DefectKind::crack,    DefectKind::poor_wetting,
                                              DefectKind::fiber,  DefectKind::burn,     DefectKind::disturbed};

std::string_view to_string(DefectKind k);
DefectKind defect_kind_from_string(std::string_view s);

using soldernet::Label;

struct JointSpec {
  std::uint64_t seed = 0;
  DefectKind kind = DefectKind::none;
  int pad_radius_px = 60;  // [40, 90]
  double board_hue = 0.5;  // [0, 1]
};

struct GroundTruth {
  Label label = Label::non_defective;
  Mask defect_mask;
  DefectKind kind = DefectKind::none;
};

// Geometry the renderer used; tests check masks against it.
struct JointGeometry {
  double cx = 128, cy = 128;
  double pad_radius = 0;
  double blob_radius = 0;
};

struct JointSample {
  ImageU8 image;
  GroundTruth truth;
  JointGeometry geometry;
};

inline constexpr int kMinPadRadius = 40;
inline constexpr int kMaxPadRadius = 90;
// Width of the exposed copper ring on a well-formed joint.
inline constexpr int kPadRingWidth = 10;

// Renders a 256x256 joint. Same JointSpec, same pixels; throws ParameterError on
// an out-of-range pad radius or board hue.
JointSample generate_joint(const JointSpec& spec);

// Solder-coloured filled disc, the same paint the splash defect uses.
void paint_solder_disc(ImageU8& img, Mask* painted, double cx, double cy, double radius);

enum class Split { unassigned, train, val, test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  Label label = Label::non_defective;
  DefectKind kind = DefectKind::none;
  Split split = Split::unassigned;
  // Generation parameters; absent for manifests not produced here.
  std::optional<JointSpec> spec;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;
};

using KindWeights = std::vector<std::pair<DefectKind, double>>;
KindWeights uniform_kind_weights();

// Plans a dataset without rendering: ids, labels, kinds and per-entry specs.
// Paths are set to images/<id>.png and masks/<id>.png (relative).
DatasetManifest plan_dataset(std::size_t n, double defect_ratio, const KindWeights& kinds, std::uint64_t seed);

// Plans, renders and writes PNGs under out_dir, plus out_dir/manifest.jsonl.
// The returned entries carry absolute paths; the manifest file keeps them
// relative.
DatasetManifest generate_dataset(std::size_t n, double defect_ratio, const KindWeights& kinds, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

struct SplitFractions {
  double train = 0.6, val = 0.2, test = 0.2;
};

// Per-class seeded split. Every split receives floor(frac * n_class) entries of
// the class, then leftover entries go one each to train, then val.
DatasetManifest stratified_split(DatasetManifest manifest, SplitFractions fractions, std::uint64_t seed);

// Line-delimited JSON. Relative paths resolve against the manifest directory on
// load; paths under that directory are written relative to it.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

ImageU8 load_entry_image(const ManifestEntry& e);

}  // namespace soldernet::synthgen
