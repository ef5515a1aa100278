#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "soldernet/classifier.hpp"
#include "soldernet/config.hpp"
#include "soldernet/imaging.hpp"
#include "soldernet/png_io.hpp"
#include "soldernet/service/http_api.hpp"
#include "soldernet/soxai.hpp"
#include "soldernet/synthgen.hpp"
#include "soldernet/triage.hpp"
#include "soldernet/trust.hpp"
#include "soldernet/xai.hpp"

namespace fs = std::filesystem;
using namespace soldernet;
using nlohmann::json;

namespace {

service::ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

synthgen::DatasetManifest filter_split(synthgen::DatasetManifest m, const std::string& split) {
  if (split.empty() || split == "all") return m;
  const auto want = synthgen::split_from_string(split);
  std::erase_if(m.entries, [&](const synthgen::ManifestEntry& e) { return e.split != want; });
  return m;
}

std::vector<classifier::ScoreRecord> score_manifest(const synthgen::DatasetManifest& m,
                                                    const classifier::ScorerBackend& backend) {
  std::vector<classifier::ScoreRecord> out(m.entries.size());
  const auto n = static_cast<std::ptrdiff_t>(m.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& e = m.entries[static_cast<std::size_t>(i)];
    const auto img = imaging::preprocess(synthgen::load_entry_image(e));
    out[static_cast<std::size_t>(i)] = {e.id, backend.score(img), e.label};
  }
  return out;
}

// Records from --scores, or the reference scorer over --manifest.
std::vector<classifier::ScoreRecord> load_records(const std::string& scores, const std::string& manifest,
                                                  const std::string& split) {
  if (!scores.empty()) return classifier::load_external_scores(scores);
  if (manifest.empty()) throw ParameterError("give --scores or --manifest");
  const classifier::ReferenceScorer scorer;
  return score_manifest(filter_split(synthgen::load_manifest(manifest), split), scorer);
}

synthgen::KindWeights parse_kinds(const std::vector<std::string>& names) {
  if (names.empty()) return synthgen::uniform_kind_weights();
  synthgen::KindWeights w;
  for (const auto& item : names) {
    const auto colon = item.find(':');
    const auto kind = synthgen::defect_kind_from_string(item.substr(0, colon));
    const double weight = colon == std::string::npos ? 1.0 : std::stod(item.substr(colon + 1));
    w.emplace_back(kind, weight);
  }
  return w;
}

void print_split_counts(const synthgen::DatasetManifest& m) {
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& e : m.entries) {
    counts[{std::string(synthgen::to_string(e.split)), e.label == Label::defective ? "defective" : "non_defective"}]++;
  }
  std::printf("%-8s %10s %14s\n", "split", "defective", "non_defective");
  for (const char* s : {"train", "val", "test"}) {
    std::printf("%-8s %10d %14d\n", s, counts[{s, "defective"}], counts[{s, "non_defective"}]);
  }
  for (const auto& w : m.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

std::string trust_table(const trust::TrustReport& r) {
  auto cell = [&](Label o, Label p) {
    const auto v = r.matrix.at(o, p);
    char buf[32];
    if (v) std::snprintf(buf, sizeof buf, "%8.3f", *v);
    else std::snprintf(buf, sizeof buf, "%8s", "-");
    return std::string(buf);
  };
  std::ostringstream os;
  os << "oracle \\ predicted   non_defective  defective\n";
  os << "non_defective            " << cell(Label::non_defective, Label::non_defective) << "   "
     << cell(Label::non_defective, Label::defective) << "\n";
  os << "defective                " << cell(Label::defective, Label::non_defective) << "   "
     << cell(Label::defective, Label::defective) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "NetTrustScore %.3f (n=%zu)\n", r.net_trust_score, r.n);
  os << buf;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable solder-joint inspection"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config (thresholds, XAI grid, t-SNE, trust exponents)")
      ->check(CLI::ExistingFile);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic joint dataset with defect masks");
  std::string gen_out;
  std::size_t gen_n = 2690;
  double gen_ratio = 1644.0 / 2690.0;
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_kinds;
  bool gen_split = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("-n,--count", gen_n, "Number of joints")->check(CLI::PositiveNumber);
  gen->add_option("--defect-ratio", gen_ratio, "Share of defective joints")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gen_seed);
  gen->add_option("--kinds", gen_kinds, "Kind weights, e.g. splash:2 crack (default: uniform)");
  gen->add_flag("--split", gen_split, "Also assign 60/20/20 stratified splits");

  // split
  auto* split = app.add_subcommand("split", "Assign stratified train/val/test splits");
  std::string split_manifest, split_out;
  std::uint64_t split_seed = 0;
  std::vector<double> fractions{0.6, 0.2, 0.2};
  split->add_option("--manifest", split_manifest)->required()->check(CLI::ExistingFile);
  split->add_option("--seed", split_seed);
  split->add_option("--fractions", fractions, "train val test")->expected(3);
  split->add_option("--out", split_out, "Write here instead of overwriting the manifest");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Score, triage and explain a manifest into a data dir");
  std::string insp_manifest, insp_dir, insp_scores;
  inspect->add_option("--manifest", insp_manifest)->required()->check(CLI::ExistingFile);
  inspect->add_option("--data-dir", insp_dir)->required();
  inspect->add_option("--scores", insp_scores, "External scores (JSONL) instead of the reference scorer")
      ->check(CLI::ExistingFile);

  // eval
  auto* eval = app.add_subcommand("eval", "Accuracy / overkill / escape at a threshold");
  std::string ev_manifest, ev_scores, ev_split;
  std::optional<double> ev_threshold;
  bool ev_json = false;
  eval->add_option("--manifest", ev_manifest)->check(CLI::ExistingFile);
  eval->add_option("--scores", ev_scores)->check(CLI::ExistingFile);
  eval->add_option("--split", ev_split, "train, val, test or all");
  eval->add_option("--threshold", ev_threshold)->check(CLI::Range(0.0, 1.0));
  eval->add_flag("--json", ev_json);

  // explain
  auto* explain = app.add_subcommand("explain", "Critical factors and overlay for one image");
  std::string ex_target, ex_manifest, ex_out = "explanation";
  explain->add_option("target", ex_target, "Manifest id or PNG path")->required();
  explain->add_option("--manifest", ex_manifest, "Resolve the target as an id in this manifest")
      ->check(CLI::ExistingFile);
  explain->add_option("--out", ex_out, "Output directory");

  // soxai
  auto* sox = app.add_subcommand("soxai", "Embed explanations and map them to 2-D");
  std::string sox_manifest, sox_out = "soxai", sox_split;
  std::size_t sox_limit = 0;
  bool sox_defective_only = false, sox_features = false;
  sox->add_option("--manifest", sox_manifest)->required()->check(CLI::ExistingFile);
  sox->add_option("--out", sox_out);
  sox->add_option("--split", sox_split);
  sox->add_option("--limit", sox_limit, "Use at most this many entries (0 = all)");
  sox->add_flag("--defective-only", sox_defective_only);
  sox->add_flag("--scorer-features", sox_features, "Append the scorer's feature vector to each embedding");

  // trust
  auto* tr = app.add_subcommand("trust", "Trust matrix and NetTrustScore");
  std::string tr_manifest, tr_scores, tr_split;
  std::optional<double> tr_threshold;
  bool tr_json = false;
  tr->add_option("--manifest", tr_manifest)->check(CLI::ExistingFile);
  tr->add_option("--scores", tr_scores)->check(CLI::ExistingFile);
  tr->add_option("--split", tr_split);
  tr->add_option("--threshold", tr_threshold)->check(CLI::Range(0.0, 1.0));
  tr->add_flag("--json", tr_json);

  // bench-latency
  auto* bench = app.add_subcommand("bench-latency", "Mean scorer latency after warm-up runs");
  std::string bl_image;
  int bl_warmups = 20, bl_runs = 100;
  bench->add_option("--image", bl_image, "PNG to score (default: a rendered splash joint)")->check(CLI::ExistingFile);
  bench->add_option("--warmups", bl_warmups)->check(CLI::NonNegativeNumber);
  bench->add_option("--runs", bl_runs)->check(CLI::PositiveNumber);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the review HTTP API");
  int port = 8080;
  std::string host = "127.0.0.1", serve_dir;
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->add_option("--data-dir", serve_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const Config cfg = config_path.empty() ? Config{} : load_config(config_path);

    if (*gen) {
      auto m = synthgen::generate_dataset(gen_n, gen_ratio, parse_kinds(gen_kinds), gen_seed, gen_out);
      if (gen_split) {
        m = synthgen::stratified_split(std::move(m), {}, gen_seed);
        synthgen::save_manifest(m, fs::path(gen_out) / "manifest.jsonl");
        print_split_counts(m);
      }
      std::size_t defective = 0;
      for (const auto& e : m.entries) defective += e.label == Label::defective;
      std::printf("wrote %zu joints (%zu defective) to %s\n", m.entries.size(), defective,
                  (fs::path(gen_out) / "manifest.jsonl").c_str());
    } else if (*split) {
      auto m = synthgen::load_manifest(split_manifest);
      m = synthgen::stratified_split(std::move(m), {fractions[0], fractions[1], fractions[2]}, split_seed);
      synthgen::save_manifest(m, split_out.empty() ? split_manifest : split_out);
      print_split_counts(m);
    } else if (*inspect) {
      service::ReviewService svc(insp_dir, cfg);
      const std::string id = svc.register_dataset(insp_manifest);
      std::map<std::string, double> table;
      if (!insp_scores.empty()) {
        for (const auto& r : classifier::load_external_scores(insp_scores)) table[r.id] = r.confidence.value();
      }
      const auto summary = svc.inspect(id, std::nullopt, insp_scores.empty() ? nullptr : &table);
      std::printf("dataset %s\n%s\n", id.c_str(), service::to_json(summary).dump(2).c_str());
    } else if (*eval) {
      const auto records = load_records(ev_scores, ev_manifest, ev_split);
      const auto report = triage::evaluate(records, ev_threshold.value_or(cfg.eval_threshold));
      if (ev_json) {
        std::printf("%s\n", triage::to_json(report).dump(2).c_str());
      } else {
        const std::string name = ev_scores.empty() ? "reference" : fs::path(ev_scores).stem().string();
        std::printf("%s", triage::format_eval_table({{name, report}}).c_str());
        std::printf("n=%zu threshold=%.3f\n", report.n, report.threshold);
      }
    } else if (*explain) {
      ImageU8 raw;
      if (!ex_manifest.empty()) {
        const auto m = synthgen::load_manifest(ex_manifest);
        const auto it = std::find_if(m.entries.begin(), m.entries.end(), [&](auto& e) { return e.id == ex_target; });
        if (it == m.entries.end()) throw ParameterError("id '" + ex_target + "' not in manifest");
        raw = synthgen::load_entry_image(*it);
      } else {
        raw = read_png(ex_target);
      }
      const auto img = imaging::preprocess(raw);
      const classifier::ReferenceScorer scorer;
      const auto ex = xai::explain(img, scorer, cfg.xai);
      fs::create_directories(ex_out);
      xai::export_explanation(ex, fs::path(ex_out) / "explanation.json");
      write_png(fs::path(ex_out) / "overlay.png", xai::render_overlay(img, ex));
      std::printf("confidence %.4f, %zu critical factor(s), mass fraction %.3f\n", ex.importance.base_confidence,
                  ex.factors.size(), ex.mass_fraction);
      for (std::size_t i = 0; i < ex.factors.size(); ++i) {
        std::printf("  factor %zu: %zu cell(s), %zu px, importance %.4f\n", i, ex.factors[i].cells.size(),
                    ex.factors[i].mask.count(), ex.factors[i].importance);
      }
      std::printf("wrote %s\n", (fs::path(ex_out) / "explanation.json").c_str());
    } else if (*sox) {
      auto m = filter_split(synthgen::load_manifest(sox_manifest), sox_split);
      if (sox_defective_only) std::erase_if(m.entries, [](auto& e) { return e.label != Label::defective; });
      if (sox_limit > 0 && m.entries.size() > sox_limit) m.entries.resize(sox_limit);
      const classifier::ReferenceScorer scorer;
      std::vector<soxai::SoxaiInput> inputs;
      std::map<std::string, xai::Explanation> explanations;
      for (const auto& e : m.entries) {
        auto img = imaging::preprocess(synthgen::load_entry_image(e));
        explanations.emplace(e.id, xai::explain(img, scorer, cfg.xai));
        inputs.push_back({e.id, std::move(img), e.kind});
      }
      const auto out = soxai::export_soxai_scatter(inputs, explanations, cfg.tsne, sox_out,
                                                   sox_features ? &scorer : nullptr);
      std::printf("%zu points, %zu dims, final KL %.4f\nwrote %s and %s\n", out.points.size(),
                  out.embeddings.front().vector.size(), out.tsne.kl_history.back(), out.scatter_path.c_str(),
                  out.plot_path.c_str());
    } else if (*tr) {
      const auto records = load_records(tr_scores, tr_manifest, tr_split);
      const auto report = trust::trust_report(records, tr_threshold.value_or(cfg.eval_threshold), cfg.trust);
      if (tr_json) std::printf("%s\n", trust::to_json(report).dump(2).c_str());
      else std::printf("%s", trust_table(report).c_str());
    } else if (*bench) {
      const auto img = bl_image.empty()
                           ? imaging::preprocess(synthgen::generate_joint({1, synthgen::DefectKind::splash, 60, 0.5}).image)
                           : imaging::preprocess(read_png(bl_image));
      const classifier::ReferenceScorer scorer;
      const auto rep = classifier::measure_latency(scorer, img, bl_warmups, bl_runs);
      std::printf("backend %s: mean %.6f s over %d runs after %d warm-ups\n", scorer.name().c_str(),
                  rep.mean_seconds, rep.runs, rep.warmups);
    } else if (*serve) {
      service::ReviewService svc(serve_dir, cfg);
      service::ApiServer server(svc);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d\n", host.c_str(), port);
      std::fflush(stdout);
      if (!server.listen(host, port)) {
        std::fprintf(stderr, "cannot listen on %s:%d\n", host.c_str(), port);
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
