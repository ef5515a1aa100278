#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "soldernet/image.hpp"
#include "soldernet/imaging.hpp"
#include "soldernet/rng.hpp"
#include "soldernet/synthgen.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "soldernet-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline soldernet::synthgen::JointSample joint(std::uint64_t seed, soldernet::synthgen::DefectKind kind) {
  soldernet::synthgen::JointSpec spec;
  spec.seed = seed;
  spec.kind = kind;
  return soldernet::synthgen::generate_joint(spec);
}

inline soldernet::NormalizedImage normalized(const soldernet::ImageU8& img) {
  return soldernet::imaging::preprocess(img);
}

inline soldernet::NormalizedImage noise_image(std::uint64_t seed, int w = soldernet::kImageSize,
                                              int h = soldernet::kImageSize) {
  soldernet::Rng rng(seed);
  soldernet::NormalizedImage img(w, h, 3);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace testing
