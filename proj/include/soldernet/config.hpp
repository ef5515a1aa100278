#pragma once

#include <filesystem>

#include <json.hpp>

#include "soldernet/imaging.hpp"
#include "soldernet/soxai.hpp"
#include "soldernet/triage.hpp"
#include "soldernet/trust.hpp"
#include "soldernet/xai.hpp"

namespace soldernet {

enum class FsyncPolicy { never, every_event };

struct ServiceSettings {
  FsyncPolicy fsync = FsyncPolicy::every_event;
  int snapshot_interval = 500;  // events between snapshot files; 0 disables
  int page_size = 50;
};

// Everything the CLI and the service read from --config. Missing keys keep the
// defaults below; unknown keys are rejected so typos do not pass silently.
struct Config {
  triage::TriageThresholds thresholds;
  double eval_threshold = 0.5;
  xai::XaiConfig xai;
  soxai::TsneParams tsne;
  trust::TrustParams trust;
  imaging::AugmentPolicy augment;
  ServiceSettings service;

  void validate() const;
};

Config config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Config& c);
Config load_config(const std::filesystem::path& path);

}  // namespace soldernet
