#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "soldernet/classifier.hpp"
#include "soldernet/config.hpp"
#include "soldernet/service/pipeline.hpp"
#include "soldernet/service/store.hpp"

namespace soldernet::service {

// The review service behind the HTTP API. Holds the case store, registered
// datasets (data_dir/datasets.json) and explanation artifacts
// (data_dir/artifacts).
class ReviewService {
 public:
  ReviewService(std::filesystem::path data_dir, Config config,
                std::shared_ptr<const classifier::ScorerBackend> backend = nullptr);

  // Registering the same manifest twice returns the same id.
  std::string register_dataset(const std::filesystem::path& manifest_path);
  PipelineSummary inspect(const std::string& dataset_id, std::optional<triage::TriageThresholds> thresholds = {},
                          const std::map<std::string, double>* external_scores = nullptr);

  nlohmann::json queue(std::optional<CaseState> state, int page, int page_size) const;
  nlohmann::json case_json(const JointCase& c) const;
  nlohmann::json metrics(double threshold) const;
  nlohmann::json trust(double threshold) const;
  nlohmann::json soxai();

  CaseStore& store() { return store_; }
  const Config& config() const { return config_; }
  const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  std::vector<classifier::ScoreRecord> labelled_records() const;
  void save_datasets() const;

  std::filesystem::path data_dir_;
  Config config_;
  std::shared_ptr<const classifier::ScorerBackend> backend_;
  CaseStore store_;
  std::map<std::string, std::filesystem::path> datasets_;
  std::mutex datasets_mu_;
  std::mutex inspect_mu_;
  std::mutex soxai_mu_;
  std::vector<std::string> soxai_ids_;
  nlohmann::json soxai_cache_;
};

// Routes under /api on top of a ReviewService. Errors come back as
// {"error": message} with 400 (bad request), 404, 409 (state conflict),
// 422 (data the request needs is missing) or 500.
class ApiServer {
 public:
  explicit ApiServer(ReviewService& service);

  httplib::Server& http() { return server_; }
  // Blocks until stop(). Returns false if the port cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds to an ephemeral port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  void install_routes();

  ReviewService& service_;
  httplib::Server server_;
};

}  // namespace soldernet::service
