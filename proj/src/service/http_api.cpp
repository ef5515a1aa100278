#include "soldernet/service/http_api.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "soldernet/imaging.hpp"
#include "soldernet/png_io.hpp"
#include "soldernet/soxai.hpp"
#include "soldernet/triage.hpp"
#include "soldernet/trust.hpp"

namespace soldernet::service {
namespace {

using nlohmann::json;

// Request needs data that is not there (e.g. oracle labels, explanations).
struct UnprocessableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const UnprocessableError& e) {
      send_error(res, 422, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const ParameterError& e) {
      send_error(res, 400, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("bad JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

double query_threshold(const httplib::Request& req, double fallback) {
  if (!req.has_param("threshold")) return fallback;
  const std::string raw = req.get_param_value("threshold");
  std::size_t used = 0;
  double t = 0;
  try {
    t = std::stod(raw, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != raw.size() || !(t >= 0 && t <= 1)) throw ValidationError("threshold must be a number in [0,1]");
  return t;
}

int query_int(const httplib::Request& req, const char* key, int fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string raw = req.get_param_value(key);
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(raw, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != raw.size() || v < 1) throw ValidationError(std::string(key) + " must be a positive integer");
  return v;
}

JointCase require_case(const CaseStore& store, const std::string& id) {
  auto c = store.get(id);
  if (!c) throw NotFoundError("unknown case '" + id + "'");
  return *c;
}

}  // namespace

ReviewService::ReviewService(std::filesystem::path data_dir, Config config,
                             std::shared_ptr<const classifier::ScorerBackend> backend)
    : data_dir_(std::filesystem::absolute(data_dir)),
      config_(std::move(config)),
      backend_(backend ? std::move(backend) : std::make_shared<classifier::ReferenceScorer>()),
      store_(data_dir_ / "store", config_.service) {
  config_.validate();
  if (std::ifstream in(data_dir_ / "datasets.json"); in) {
    const json saved = json::parse(in);
    for (const auto& [id, path] : saved.items()) datasets_[id] = path.get<std::string>();
  }
}

void ReviewService::save_datasets() const {
  json j = json::object();
  for (const auto& [id, path] : datasets_) j[id] = path.string();
  const auto tmp = data_dir_ / "datasets.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw StorageError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, data_dir_ / "datasets.json");
}

std::string ReviewService::register_dataset(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::is_regular_file(manifest_path)) {
    throw ValidationError("manifest not found: " + manifest_path.string());
  }
  const auto canonical = std::filesystem::canonical(manifest_path);
  synthgen::load_manifest(canonical);  // reject unreadable manifests up front
  std::lock_guard lock(datasets_mu_);
  for (const auto& [id, path] : datasets_)
    if (path == canonical) return id;
  const std::string id = "ds-" + std::to_string(datasets_.size() + 1);
  datasets_[id] = canonical;
  save_datasets();
  return id;
}

PipelineSummary ReviewService::inspect(const std::string& dataset_id, std::optional<triage::TriageThresholds> th,
                                       const std::map<std::string, double>* external_scores) {
  std::filesystem::path manifest_path;
  {
    std::lock_guard lock(datasets_mu_);
    const auto it = datasets_.find(dataset_id);
    if (it == datasets_.end()) throw NotFoundError("unknown dataset '" + dataset_id + "'");
    manifest_path = it->second;
  }
  PipelineOptions opts;
  opts.thresholds = th.value_or(config_.thresholds);
  opts.thresholds.validate();
  opts.xai = config_.xai;
  opts.artifacts_dir = data_dir_ / "artifacts";
  opts.dataset_id = dataset_id;
  opts.external_scores = external_scores;
  std::lock_guard lock(inspect_mu_);
  return run_pipeline(synthgen::load_manifest(manifest_path), *backend_, store_, opts);
}

json ReviewService::case_json(const JointCase& c) const {
  json j = to_json(c);
  j["image_url"] = "/api/cases/" + c.id + "/image";
  j["explanation_url"] = c.explanation ? json("/api/cases/" + c.id + "/explanation") : json(nullptr);
  j["overlay_url"] = c.explanation ? json("/api/cases/" + c.id + "/overlay") : json(nullptr);
  return j;
}

json ReviewService::queue(std::optional<CaseState> state, int page, int page_size) const {
  const auto view = store_.snapshot();
  std::vector<const JointCase*> matching;
  for (const auto& [_, c] : *view)
    if (!state || c.state == *state) matching.push_back(&c);
  json cases = json::array();
  const std::size_t begin = static_cast<std::size_t>(page - 1) * static_cast<std::size_t>(page_size);
  for (std::size_t i = begin; i < matching.size() && i < begin + static_cast<std::size_t>(page_size); ++i) {
    cases.push_back(case_json(*matching[i]));
  }
  return {{"cases", cases},
          {"page", page},
          {"page_size", page_size},
          {"total", matching.size()},
          {"state", state ? json(to_string(*state)) : json(nullptr)}};
}

std::vector<classifier::ScoreRecord> ReviewService::labelled_records() const {
  std::vector<classifier::ScoreRecord> out;
  for (const auto& [_, c] : *store_.snapshot()) {
    if (c.confidence && c.oracle_label) out.push_back({c.id, classifier::Confidence(*c.confidence), c.oracle_label});
  }
  if (out.empty()) throw UnprocessableError("no scored cases with oracle labels; labels are required");
  return out;
}

json ReviewService::metrics(double threshold) const {
  return triage::to_json(triage::evaluate(labelled_records(), threshold));
}

json ReviewService::trust(double threshold) const {
  return trust::to_json(trust::trust_report(labelled_records(), threshold, config_.trust));
}

json ReviewService::soxai() {
  std::vector<JointCase> explained;
  for (const auto& [_, c] : *store_.snapshot())
    if (c.explanation) explained.push_back(c);
  std::vector<std::string> ids;
  for (const auto& c : explained) ids.push_back(c.id);

  std::lock_guard lock(soxai_mu_);
  if (!soxai_cache_.is_null() && ids == soxai_ids_) return soxai_cache_;
  if (explained.size() < 8) {
    throw UnprocessableError("SOXAI needs at least 8 explained cases, have " + std::to_string(explained.size()));
  }
  std::vector<soxai::SoxaiInput> inputs;
  std::map<std::string, xai::Explanation> explanations;
  for (const auto& c : explained) {
    std::optional<synthgen::DefectKind> kind;
    if (c.kind) {
      try {
        kind = synthgen::defect_kind_from_string(*c.kind);
      } catch (const std::exception&) {
      }
    }
    inputs.push_back({c.id, imaging::preprocess(read_png(c.image_path)), kind});
    explanations.emplace(c.id, xai::load_explanation(c.explanation->json_path));
  }
  const auto out = soxai::export_soxai_scatter(inputs, explanations, config_.tsne, data_dir_ / "soxai");
  json points = json::array();
  for (auto p : out.points) {
    json jp = soxai::to_json(p);
    jp["thumbnail_path"] = "/api/cases/" + p.id + "/image";
    points.push_back(std::move(jp));
  }
  soxai_cache_ = {{"points", points}, {"n", out.points.size()}, {"final_kl", out.tsne.kl_history.back()},
                  {"perplexity", out.tsne.perplexity_used}};
  soxai_ids_ = ids;
  return soxai_cache_;
}

ApiServer::ApiServer(ReviewService& service) : service_(service) { install_routes(); }

void ApiServer::install_routes() {
  auto& s = server_;
  ReviewService& svc = service_;

  s.Post("/api/datasets", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("manifest_path") || !body["manifest_path"].is_string()) {
      throw ValidationError("manifest_path (string) is required");
    }
    const std::string id = svc.register_dataset(body["manifest_path"].get<std::string>());
    send_json(res, {{"dataset_id", id}}, 201);
  }));

  s.Post("/api/inspect", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("dataset_id") || !body["dataset_id"].is_string()) {
      throw ValidationError("dataset_id (string) is required");
    }
    std::optional<triage::TriageThresholds> th;
    if (body.contains("thresholds") && !body["thresholds"].is_null()) {
      const auto& t = body["thresholds"];
      th = triage::TriageThresholds{t.at("t_low").get<double>(), t.at("t_high").get<double>()};
      th->validate();
    }
    send_json(res, to_json(svc.inspect(body["dataset_id"].get<std::string>(), th)));
  }));

  s.Get("/api/queue", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<CaseState> state;
    if (req.has_param("state") && !req.get_param_value("state").empty()) {
      state = case_state_from_string(req.get_param_value("state"));
    }
    const int page = query_int(req, "page", 1);
    const int page_size = query_int(req, "page_size", svc.config().service.page_size);
    send_json(res, svc.queue(state, page, page_size));
  }));

  s.Get("/api/cases/:id", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, svc.case_json(require_case(svc.store(), req.path_params.at("id"))));
  }));

  s.Get("/api/cases/:id/image", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const JointCase c = require_case(svc.store(), req.path_params.at("id"));
    res.set_content(read_file(c.image_path), "image/png");
  }));

  s.Get("/api/cases/:id/explanation", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const JointCase c = require_case(svc.store(), req.path_params.at("id"));
    if (!c.explanation) throw NotFoundError("case '" + c.id + "' has no explanation");
    json j = json::parse(read_file(c.explanation->json_path));
    j["case_id"] = c.id;
    send_json(res, j);
  }));

  s.Get("/api/cases/:id/overlay", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const JointCase c = require_case(svc.store(), req.path_params.at("id"));
    if (!c.explanation) throw NotFoundError("case '" + c.id + "' has no explanation overlay");
    res.set_content(read_file(c.explanation->overlay_path), "image/png");
  }));

  s.Post("/api/cases/:id/verdict", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    ReviewVerdict v;
    v.case_id = req.path_params.at("id");
    const std::string decision = body.value("decision", "");
    if (decision == "defective") v.decision = Label::defective;
    else if (decision == "non_defective") v.decision = Label::non_defective;
    else throw ValidationError("decision must be \"defective\" or \"non_defective\"");
    if (!body.contains("operator") || !body["operator"].is_string()) throw ValidationError("operator is required");
    v.operator_id = body["operator"].get<std::string>();
    if (body.contains("note") && !body["note"].is_null()) v.note = body["note"].get<std::string>();
    const VerdictResult r = svc.store().submit_verdict(v);
    send_json(res, svc.case_json(r.joint_case));
  }));

  s.Post("/api/cases/:id/rework", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, svc.case_json(svc.store().rework(req.path_params.at("id"))));
  }));

  s.Get("/api/metrics", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, svc.metrics(query_threshold(req, svc.config().eval_threshold)));
  }));

  s.Get("/api/trust", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, svc.trust(query_threshold(req, svc.config().eval_threshold)));
  }));

  s.Get("/api/soxai", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, svc.soxai());
  }));
}

bool ApiServer::listen(const std::string& host, int port) { return server_.listen(host, port); }

int ApiServer::bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }

bool ApiServer::listen_after_bind() { return server_.listen_after_bind(); }

void ApiServer::stop() { server_.stop(); }

}  // namespace soldernet::service
