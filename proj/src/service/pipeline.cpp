#include "soldernet/service/pipeline.hpp"

#include <cctype>
#include <exception>
#include <optional>

#include "soldernet/imaging.hpp"
#include "soldernet/png_io.hpp"

namespace soldernet::service {
namespace {

struct Scored {
  std::optional<double> confidence;
  std::string error;
  NormalizedImage image;
};

// Keeps the preprocessed image only for review cases, which get explained later.
Scored score_entry(const synthgen::ManifestEntry& entry, const classifier::ScorerBackend& backend,
                   const PipelineOptions& options) {
  const auto* external = options.external_scores;
  Scored s;
  try {
    s.image = imaging::preprocess(synthgen::load_entry_image(entry));
    if (external) {
      const auto it = external->find(entry.id);
      if (it == external->end()) throw ValidationError("no external score for '" + entry.id + "'");
      s.confidence = classifier::Confidence(it->second).value();
    } else {
      s.confidence = backend.score(s.image).value();
    }
  } catch (const std::exception& e) {
    s.error = e.what();
    s.confidence.reset();
  }
  if (!s.confidence || triage::triage(classifier::Confidence(*s.confidence), options.thresholds) !=
                           triage::TriageDecision::possibly_defective) {
    s.image = {};
  }
  return s;
}

}  // namespace

std::filesystem::path case_artifact_dir(const std::filesystem::path& artifacts_dir, const std::string& case_id) {
  std::string safe = case_id;
  for (char& c : safe)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return artifacts_dir / safe;
}

nlohmann::json to_json(const PipelineSummary& s) {
  return {{"total", s.total},
          {"non_defective", s.non_defective},
          {"possibly_defective", s.possibly_defective},
          {"defective", s.defective},
          {"failed", s.failed},
          {"skipped", s.skipped},
          {"explained", s.explained},
          {"scored", s.scored()}};
}

PipelineSummary run_pipeline(const synthgen::DatasetManifest& manifest, const classifier::ScorerBackend& backend,
                             CaseStore& store, const PipelineOptions& options) {
  options.thresholds.validate();
  PipelineSummary summary;
  summary.total = manifest.entries.size();

  std::vector<const synthgen::ManifestEntry*> todo;
  for (const auto& e : manifest.entries) {
    if (store.contains(e.id)) {
      ++summary.skipped;
      continue;
    }
    store.ingest(e.id, e.image_path, options.dataset_id, e.label,
                 std::string(synthgen::to_string(e.kind)));
    todo.push_back(&e);
  }

  std::vector<Scored> scored(todo.size());
  const auto n = static_cast<std::ptrdiff_t>(todo.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    scored[static_cast<std::size_t>(i)] = score_entry(*todo[static_cast<std::size_t>(i)], backend, options);
  }

  std::vector<std::size_t> review;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    const auto& id = todo[i]->id;
    if (!scored[i].confidence) {
      store.record_failure(id, scored[i].error);
      ++summary.failed;
      continue;
    }
    store.record_score(id, *scored[i].confidence);
    const auto decision = triage::triage(classifier::Confidence(*scored[i].confidence), options.thresholds);
    store.record_triage(id, decision);
    switch (decision) {
      case triage::TriageDecision::non_defective: ++summary.non_defective; break;
      case triage::TriageDecision::defective: ++summary.defective; break;
      case triage::TriageDecision::possibly_defective:
        ++summary.possibly_defective;
        review.push_back(i);
        break;
    }
  }

  std::vector<std::optional<ExplanationArtifact>> artifacts(review.size());
  std::vector<std::string> errors(review.size());
  const auto m = static_cast<std::ptrdiff_t>(review.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < m; ++k) {
    const auto i = review[static_cast<std::size_t>(k)];
    try {
      const auto dir = case_artifact_dir(options.artifacts_dir, todo[i]->id);
      const xai::Explanation ex = xai::explain(scored[i].image, backend, options.xai);
      xai::export_explanation(ex, dir / "explanation.json");
      write_png(dir / "overlay.png", xai::render_overlay(scored[i].image, ex));
      artifacts[static_cast<std::size_t>(k)] = ExplanationArtifact{dir / "explanation.json", dir / "overlay.png", ex.factors.size()};
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  std::string failures;
  for (std::size_t k = 0; k < review.size(); ++k) {
    const auto& id = todo[review[k]]->id;
    if (!artifacts[k]) {
      failures += "\n  " + id + ": " + errors[k];
      continue;
    }
    store.record_explanation(id, *artifacts[k]);
    ++summary.explained;
  }
  // A review case without an explanation would break the queue contract, so
  // this is fatal rather than a per-case failure.
  if (!failures.empty()) throw std::runtime_error("explanations failed for:" + failures);
  return summary;
}

}  // namespace soldernet::service
