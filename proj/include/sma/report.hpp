#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/labeling.hpp"
#include "sma/target.hpp"

namespace sma {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Full provenance record of one audit: masks, raw responses, scores, beta
// vectors, ADS, labels, cost and the config snapshot. Self-describing:
// re-running labeling on the stored vectors reproduces the stored labels.
// ---------------------------------------------------------------------------
struct AuditReport {
  std::string run_id;
  std::string input_text;
  std::vector<std::string> words;
  std::vector<std::string> norm_words;
  std::string image_digest;  // empty when the audit was text-only
  std::string caption;
  std::string target_identity;
  std::string stopwords_source;

  AuditConfig config;

  std::vector<VariantRecord> variants;  // retrieval-on first, then retrieval-off
  // Unperturbed-query outputs, recorded only under OriginalOutput scoring.
  std::string original_output_rag;
  std::string original_output_norag;
  AttributionVector beta_rag;
  bool has_norag = false;
  AttributionVector beta_norag;
  std::vector<double> ads;
  std::vector<SourceLabel> labels;
  std::string o_rec;

  bool ads_available = true;
  bool degenerate_fallback = false;
  std::vector<std::string> notes;

  long long token_cost = 0;
  int query_count = 0;

  std::string started_at;
  std::string finished_at;
};

namespace detail {

inline ordered_json config_to_json(const AuditConfig& cfg) {
  ordered_json j;
  j["n_perturbations"] = cfg.n_perturbations;
  j["gamma1"] = cfg.gamma1;
  j["gamma2"] = cfg.gamma2;
  j["alpha"] = cfg.alpha;
  j["tau"] = cfg.tau;
  j["tau_lo"] = cfg.tau_lo;
  j["tau_hi"] = cfg.tau_hi;
  j["sigma"] = cfg.sigma;
  j["mask_keep_prob"] = cfg.mask_keep_prob;
  j["seed"] = cfg.seed;
  j["max_concurrency"] = cfg.max_concurrency;
  j["qps_limit"] = cfg.qps_limit;
  j["strategy"] = to_string(cfg.strategy);
  j["sim_metric"] = to_string(cfg.sim_metric);
  j["sim_reference"] = to_string(cfg.sim_reference);
  j["allow_underdetermined"] = cfg.allow_underdetermined;
  return j;
}

inline AuditConfig config_from_json(const ordered_json& j) {
  AuditConfig cfg;
  cfg.n_perturbations = j.at("n_perturbations").get<int>();
  cfg.gamma1 = j.at("gamma1").get<double>();
  cfg.gamma2 = j.at("gamma2").get<double>();
  cfg.alpha = j.at("alpha").get<double>();
  cfg.tau = j.at("tau").get<double>();
  cfg.tau_lo = j.at("tau_lo").get<double>();
  cfg.tau_hi = j.at("tau_hi").get<double>();
  cfg.sigma = j.at("sigma").get<double>();
  cfg.mask_keep_prob = j.at("mask_keep_prob").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.max_concurrency = j.at("max_concurrency").get<int>();
  cfg.qps_limit = j.at("qps_limit").get<double>();
  cfg.strategy = perturb_strategy_from(j.at("strategy").get<std::string>());
  cfg.sim_metric = sim_metric_from(j.at("sim_metric").get<std::string>());
  cfg.sim_reference = sim_reference_from(j.at("sim_reference").get<std::string>());
  cfg.allow_underdetermined = j.at("allow_underdetermined").get<bool>();
  return cfg;
}

inline ordered_json attribution_to_json(const AttributionVector& v) {
  ordered_json j;
  j["beta"] = v.beta;
  j["rag_enabled"] = v.rag_enabled;
  j["n_samples"] = v.n_samples;
  j["alpha"] = v.alpha;
  return j;
}

inline AttributionVector attribution_from_json(const ordered_json& j) {
  AttributionVector v;
  v.beta = j.at("beta").get<std::vector<double>>();
  v.rag_enabled = j.at("rag_enabled").get<bool>();
  v.n_samples = j.at("n_samples").get<int>();
  v.alpha = j.at("alpha").get<double>();
  return v;
}

}  // namespace detail

inline ordered_json report_to_json(const AuditReport& report) {
  ordered_json j;
  j["run_id"] = report.run_id;
  j["input"] = report.input_text;
  j["words"] = report.words;
  j["norm_words"] = report.norm_words;
  j["image_digest"] = report.image_digest;
  j["caption"] = report.caption;
  j["target"] = report.target_identity;
  j["stopwords_source"] = report.stopwords_source;
  j["config"] = detail::config_to_json(report.config);
  ordered_json variants = ordered_json::array();
  for (const auto& rec : report.variants) {
    ordered_json v;
    v["index"] = rec.variant_index;
    v["rag"] = rec.rag_enabled;
    v["mask"] = rec.mask.to_string();
    v["text"] = rec.text;
    v["output"] = rec.output;
    v["score"] = rec.score;
    variants.push_back(std::move(v));
  }
  j["variants"] = std::move(variants);
  j["original_output_rag"] = report.original_output_rag;
  j["original_output_norag"] = report.original_output_norag;
  j["beta_rag"] = detail::attribution_to_json(report.beta_rag);
  if (report.has_norag) {
    j["beta_norag"] = detail::attribution_to_json(report.beta_norag);
  } else {
    j["beta_norag"] = nullptr;
  }
  j["ads"] = report.ads;
  ordered_json labels = ordered_json::array();
  for (SourceLabel l : report.labels) labels.push_back(to_string(l));
  j["labels"] = std::move(labels);
  j["o_rec"] = report.o_rec;
  j["ads_available"] = report.ads_available;
  j["degenerate_fallback"] = report.degenerate_fallback;
  j["notes"] = report.notes;
  ordered_json metrics;
  metrics["query_count"] = report.query_count;
  metrics["token_cost"] = report.token_cost;
  j["metrics"] = std::move(metrics);
  ordered_json timing;
  timing["started_at"] = report.started_at;
  timing["finished_at"] = report.finished_at;
  j["timing"] = std::move(timing);
  return j;
}

inline AuditReport report_from_json(const ordered_json& j) {
  AuditReport report;
  try {
    report.run_id = j.at("run_id").get<std::string>();
    report.input_text = j.at("input").get<std::string>();
    report.words = j.at("words").get<std::vector<std::string>>();
    report.norm_words = j.at("norm_words").get<std::vector<std::string>>();
    report.image_digest = j.at("image_digest").get<std::string>();
    report.caption = j.at("caption").get<std::string>();
    report.target_identity = j.at("target").get<std::string>();
    report.stopwords_source = j.at("stopwords_source").get<std::string>();
    report.config = detail::config_from_json(j.at("config"));
    for (const auto& v : j.at("variants")) {
      VariantRecord rec;
      rec.variant_index = v.at("index").get<int>();
      rec.rag_enabled = v.at("rag").get<bool>();
      rec.mask = PerturbationMask::from_string(v.at("mask").get<std::string>());
      rec.text = v.at("text").get<std::string>();
      rec.output = v.at("output").get<std::string>();
      rec.score = v.at("score").get<double>();
      report.variants.push_back(std::move(rec));
    }
    report.original_output_rag = j.at("original_output_rag").get<std::string>();
    report.original_output_norag = j.at("original_output_norag").get<std::string>();
    report.beta_rag = detail::attribution_from_json(j.at("beta_rag"));
    if (!j.at("beta_norag").is_null()) {
      report.has_norag = true;
      report.beta_norag = detail::attribution_from_json(j.at("beta_norag"));
    }
    report.ads = j.at("ads").get<std::vector<double>>();
    for (const auto& l : j.at("labels")) {
      report.labels.push_back(source_label_from(l.get<std::string>()));
    }
    report.o_rec = j.at("o_rec").get<std::string>();
    report.ads_available = j.at("ads_available").get<bool>();
    report.degenerate_fallback = j.at("degenerate_fallback").get<bool>();
    report.notes = j.at("notes").get<std::vector<std::string>>();
    report.query_count = j.at("metrics").at("query_count").get<int>();
    report.token_cost = j.at("metrics").at("token_cost").get<long long>();
    report.started_at = j.at("timing").at("started_at").get<std::string>();
    report.finished_at = j.at("timing").at("finished_at").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedReport, ex.what());
  }
  return report;
}

inline void save_report(const AuditReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write report: " + path);
  out << report_to_json(report).dump(2) << '\n';
}

inline AuditReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open report: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MalformedReport, std::string(ex.what()) + " in " + path);
  }
  return report_from_json(j);
}

/// Re-runs labeling on the stored beta vectors with the stored config; the
/// result must reproduce the stored labels bit-exactly.
inline std::vector<SourceLabel> recompute_labels(const AuditReport& report,
                                                 const StopwordList& stopwords) {
  TokenSequence seq;
  seq.words = report.words;
  seq.norm_words = report.norm_words;
  AdsVector adsv;
  const AdsVector* adsp = nullptr;
  if (report.has_norag) {
    adsv = ads(report.beta_rag, report.beta_norag);
    adsp = &adsv;
  }
  return classify(report.beta_rag, adsp, seq, report.config, stopwords).labels;
}

// ---------------------------------------------------------------------------
// Run manifest: one per audit run, written atomically at run end.
// ---------------------------------------------------------------------------
struct RunManifest {
  std::string run_id;
  AuditConfig config;
  std::string input_digest;
  std::string image_digest;
  std::string target_identity;
  std::string started_at;
  std::string finished_at;
  long long total_tokens = 0;
};

inline void save_manifest(const RunManifest& manifest, const std::string& path) {
  ordered_json j;
  j["run_id"] = manifest.run_id;
  j["config"] = detail::config_to_json(manifest.config);
  j["input_digest"] = manifest.input_digest;
  j["image_digest"] = manifest.image_digest;
  j["target"] = manifest.target_identity;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  j["total_tokens"] = manifest.total_tokens;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest: " + tmp);
    out << j.dump(2) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(ErrorCode::IoError, "cannot move manifest into place: " + path);
  }
}

}  // namespace sma
