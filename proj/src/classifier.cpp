#include "soldernet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace soldernet::classifier {
namespace {

using json = nlohmann::json;

constexpr int N = kImageSize;

enum PixelClass : std::uint8_t { kSolder = 1, kCopper = 2, kDark = 4 };

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Size of every 4-connected solder component except the largest.
double off_component_mass(const std::vector<std::uint8_t>& cls) {
  std::vector<std::int32_t> label(cls.size(), -1);
  std::vector<int> stack;
  std::size_t total = 0, largest = 0;
  for (int start = 0; start < N * N; ++start) {
    if (!(cls[start] & kSolder) || label[start] >= 0) continue;
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = start;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int x = p % N, y = p / N;
      const int nbr[4] = {x > 0 ? p - 1 : -1, x < N - 1 ? p + 1 : -1, y > 0 ? p - N : -1, y < N - 1 ? p + N : -1};
      for (int q : nbr) {
        if (q >= 0 && (cls[q] & kSolder) && label[q] < 0) {
          label[q] = start;
          stack.push_back(q);
        }
      }
    }
    total += size;
    largest = std::max(largest, size);
  }
  return static_cast<double>(total - largest);
}

// Copper pixels whose chessboard distance to the nearest non-copper pixel
// (or the image border) is at least 7.
double thick_copper(const std::vector<std::uint8_t>& cls) {
  std::vector<int> d(cls.size());
  for (int i = 0; i < N * N; ++i) d[i] = (cls[i] & kCopper) ? N : 0;
  auto at = [&](int x, int y) { return (x < 0 || y < 0 || x >= N || y >= N) ? 0 : d[y * N + x]; };
  for (int y = 0; y < N; ++y) {
    for (int x = 0; x < N; ++x) {
      int& v = d[y * N + x];
      if (v == 0) continue;
      v = std::min({v, at(x - 1, y) + 1, at(x - 1, y - 1) + 1, at(x, y - 1) + 1, at(x + 1, y - 1) + 1});
    }
  }
  for (int y = N - 1; y >= 0; --y) {
    for (int x = N - 1; x >= 0; --x) {
      int& v = d[y * N + x];
      if (v == 0) continue;
      v = std::min({v, at(x + 1, y) + 1, at(x + 1, y + 1) + 1, at(x, y + 1) + 1, at(x - 1, y + 1) + 1});
    }
  }
  return static_cast<double>(std::count_if(d.begin(), d.end(), [](int v) { return v >= 7; }));
}

}  // namespace

Confidence::Confidence(double v) : value_(v) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("confidence " + std::to_string(v) + " outside [0,1]");
}

FeatureCounts detect_features(const NormalizedImage& image) {
  if (image.width != N || image.height != N || image.channels != 3) {
    throw ParameterError("reference scorer expects a 256x256x3 normalized image");
  }
  std::vector<float> value(N * N);
  std::vector<std::uint8_t> cls(N * N, 0);
  for (int i = 0; i < N * N; ++i) {
    const Rgb c{image.data[3 * i], image.data[3 * i + 1], image.data[3 * i + 2]};
    const Hsv h = to_hsv(c);
    value[i] = h.v;
    std::uint8_t k = 0;
    if (h.v > 0.55f && h.s < 0.25f) k |= kSolder;
    if (h.s > 0.45f && h.v > 0.45f && h.h >= 10.0f && h.h <= 45.0f) k |= kCopper;
    if (h.v < 0.25f && h.s < 0.4f) k |= kDark;
    cls[i] = k;
  }

  FeatureCounts f;
  f.off_pad_mass = off_component_mass(cls);
  f.boundary_roughness = thick_copper(cls);
  f.dark_patch = static_cast<double>(std::count_if(cls.begin(), cls.end(), [](auto k) { return (k & kDark) != 0; }));

  // Bright ridge: near-white and brighter than both samples two pixels away
  // along some axis. Solder and copper never exceed v = 0.82.
  constexpr int dirs[4][2] = {{2, 0}, {0, 2}, {2, 2}, {2, -2}};
  double ridge = 0;
  for (int y = 2; y < N - 2; ++y) {
    for (int x = 2; x < N - 2; ++x) {
      const float v = value[y * N + x];
      if (v <= 0.9f) continue;
      for (const auto& d : dirs) {
        const float a = value[(y + d[1]) * N + x + d[0]], b = value[(y - d[1]) * N + x - d[0]];
        if (v - std::max(a, b) > 0.12f) {
          ridge += 1;
          break;
        }
      }
    }
  }
  f.thin_structure = ridge;

  // Ripple: moderate Laplacian where the whole 5x5 neighbourhood is solder.
  // Large responses come from edges (e.g. a fibre lying on the blob), not ripple.
  std::vector<int> integral((N + 1) * (N + 1), 0);
  for (int y = 0; y < N; ++y) {
    for (int x = 0; x < N; ++x) {
      integral[(y + 1) * (N + 1) + x + 1] = ((cls[y * N + x] & kSolder) ? 1 : 0) + integral[y * (N + 1) + x + 1] +
                                            integral[(y + 1) * (N + 1) + x] - integral[y * (N + 1) + x];
    }
  }
  auto box = [&](int x0, int y0, int x1, int y1) {  // inclusive-exclusive
    return integral[y1 * (N + 1) + x1] - integral[y0 * (N + 1) + x1] - integral[y1 * (N + 1) + x0] +
           integral[y0 * (N + 1) + x0];
  };
  double ripple = 0;
  for (int y = 2; y < N - 2; ++y) {
    for (int x = 2; x < N - 2; ++x) {
      if (box(x - 2, y - 2, x + 3, y + 3) != 25) continue;
      const int i = y * N + x;
      const float lap = value[i - 1] + value[i + 1] + value[i - N] + value[i + N] - 4.0f * value[i];
      if (std::abs(lap) > 0.02f && std::abs(lap) < 0.1f) ripple += 1;
    }
  }
  f.ripple_energy = ripple;
  return f;
}

FeatureVector feature_vector(const FeatureCounts& c) {
  auto phi = [](double count) { return std::log1p(count / 64.0); };
  return {phi(c.off_pad_mass), phi(c.boundary_roughness), phi(c.dark_patch), phi(c.thin_structure),
          phi(c.ripple_energy)};
}

Confidence ReferenceScorer::score(const NormalizedImage& image) const {
  const FeatureVector phi = feature_vector(detect_features(image));
  double z = kBias;
  for (std::size_t k = 0; k < phi.size(); ++k) z += kWeights[k] * phi[k];
  return Confidence(sigmoid(z));
}

std::optional<std::vector<double>> ReferenceScorer::features(const NormalizedImage& image) const {
  const FeatureVector phi = feature_vector(detect_features(image));
  return std::vector<double>(phi.begin(), phi.end());
}

Confidence reference_score(const NormalizedImage& image) { return ReferenceScorer{}.score(image); }

std::vector<ScoreRecord> load_external_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file " + path.string());
  std::vector<ScoreRecord> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("confidence") || !j["confidence"].is_number()) {
      throw ValidationError(where + ": record needs a numeric 'confidence'");
    }
    const std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : std::string{};
    const double c = j["confidence"].get<double>();
    if (!(c >= 0.0 && c <= 1.0)) {
      throw ValidationError(where + ": record '" + (id.empty() ? "<no id>" : id) + "' has confidence " +
                            std::to_string(c) + " outside [0,1]");
    }
    if (id.empty()) throw ValidationError(where + ": record needs a string 'id'");
    if (!seen.insert(id).second) throw ValidationError(where + ": duplicate id '" + id + "'");
    ScoreRecord r{id, Confidence(c), std::nullopt};
    if (j.contains("label") && !j["label"].is_null()) {
      if (!j["label"].is_number_integer() || (j["label"] != 0 && j["label"] != 1)) {
        throw ValidationError(where + ": label of '" + id + "' must be 0 or 1");
      }
      r.oracle_label = label_from_int(j["label"].get<int>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) {
    json j{{"id", r.id}, {"confidence", r.confidence.value()}};
    if (r.oracle_label) j["label"] = static_cast<int>(*r.oracle_label);
    out << j.dump() << '\n';
  }
}

LatencyReport measure_latency(const ScorerBackend& backend, const NormalizedImage& input, int warmups, int runs) {
  if (runs < 1) throw ParameterError("runs must be at least 1");
  if (warmups < 0) throw ParameterError("warmups must be non-negative");
  using Clock = std::chrono::steady_clock;
  LatencyReport report;
  report.warmups = warmups;
  report.runs = runs;
  report.samples.reserve(static_cast<std::size_t>(runs));
  const int total = warmups + runs;
  for (int i = 0; i < total; ++i) {
    const auto start = Clock::now();
    try {
      (void)backend.score(input);
    } catch (const std::exception& e) {
      throw LatencyError(i, e.what());
    }
    const auto stop = Clock::now();
    if (i >= warmups) report.samples.push_back(std::chrono::duration<double>(stop - start).count());
  }
  double sum = 0;
  for (double s : report.samples) sum += s;
  report.mean_seconds = sum / runs;
  return report;
}

}  // namespace soldernet::classifier
