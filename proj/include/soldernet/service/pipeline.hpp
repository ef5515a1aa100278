#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "soldernet/classifier.hpp"
#include "soldernet/service/store.hpp"
#include "soldernet/synthgen.hpp"
#include "soldernet/triage.hpp"
#include "soldernet/xai.hpp"

namespace soldernet::service {

struct PipelineOptions {
  triage::TriageThresholds thresholds;
  xai::XaiConfig xai;
  std::filesystem::path artifacts_dir = "artifacts";
  std::string dataset_id;
  // When set, confidences come from this table (by entry id) instead of the
  // backend; the backend still drives the explanations.
  const std::map<std::string, double>* external_scores = nullptr;
};

struct PipelineSummary {
  std::size_t total = 0;
  std::size_t non_defective = 0;       // auto_pass
  std::size_t possibly_defective = 0;  // in_review
  std::size_t defective = 0;           // auto_defect
  std::size_t failed = 0;
  std::size_t skipped = 0;             // id already present in the store
  std::size_t explained = 0;

  std::size_t scored() const { return non_defective + possibly_defective + defective; }
};

nlohmann::json to_json(const PipelineSummary& s);

// Preprocess, score and triage every entry, then explain the review cases.
// Scoring and explanation run in parallel; all events go through the store's
// writer in manifest order. An entry whose image cannot be read or scored is
// marked failed and the run continues.
PipelineSummary run_pipeline(const synthgen::DatasetManifest& manifest, const classifier::ScorerBackend& backend,
                             CaseStore& store, const PipelineOptions& options);

// Directory holding a case's explanation.json and overlay.png.
std::filesystem::path case_artifact_dir(const std::filesystem::path& artifacts_dir, const std::string& case_id);

}  // namespace soldernet::service
