#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sma/attribution.hpp"
#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/labeling.hpp"
#include "sma/perturb.hpp"
#include "sma/report.hpp"
#include "sma/target.hpp"

namespace sma {

// ---------------------------------------------------------------------------
// End-to-end audit: two attribution passes under the retrieval switch, ADS,
// three-way labeling, leak reconstruction and cost accounting. With the
// toggle declared unavailable the ADS stage is skipped and the report says
// so; labels then degrade to pretrained-vs-nonmember.
// ---------------------------------------------------------------------------
struct AuditOptions {
  AuditConfig config;
  RagToggle rag_toggle = RagToggle::Native;
  std::string stopwords_source = "builtin";
  const StopwordList* stopwords = nullptr;   // defaults to the builtin list
  const HomoglyphTable* homoglyphs = nullptr;  // defaults to the builtin table
  const SynonymTable* synonyms = nullptr;
  std::string transcript_path;  // optional per-variant dump
};

inline int planned_query_count(const AuditConfig& cfg, bool has_image, RagToggle toggle) {
  const int passes = toggle == RagToggle::None ? 1 : 2;
  int count = passes * cfg.n_perturbations;
  if (has_image) count += 1;  // one caption per sigma level
  if (cfg.sim_reference == SimReference::OriginalOutput) count += passes;
  return count;
}

namespace detail {

inline void dump_transcript(const std::string& path, const std::vector<VariantRecord>& records) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot write transcript: " + path);
  for (const auto& rec : records) {
    ordered_json j;
    j["index"] = rec.variant_index;
    j["rag"] = rec.rag_enabled;
    j["mask"] = rec.mask.to_string();
    j["text"] = rec.text;
    j["output"] = rec.output;
    j["score"] = rec.score;
    out << j.dump() << '\n';
  }
}

inline long long transcript_cost(const AuditReport& report) {
  long long total = 0;
  for (const auto& rec : report.variants) {
    total += estimate_cost(static_cast<long long>(count_words(rec.output)));
  }
  if (!report.caption.empty()) {
    total += estimate_cost(static_cast<long long>(count_words(report.caption)));
  }
  if (report.config.sim_reference == SimReference::OriginalOutput) {
    total += estimate_cost(static_cast<long long>(count_words(report.original_output_rag)));
    if (report.has_norag) {
      total += estimate_cost(static_cast<long long>(count_words(report.original_output_norag)));
    }
  }
  return total;
}

}  // namespace detail

inline const HomoglyphTable& default_homoglyphs() {
  static const HomoglyphTable table = HomoglyphTable::builtin();
  return table;
}

inline AuditReport run_audit(Target& target, const std::string& input_text,
                             const RasterImage* image, const AuditOptions& options) {
  options.config.validate();
  const StopwordList& stopwords =
      options.stopwords ? *options.stopwords : StopwordList::builtin();
  const HomoglyphTable& homoglyphs =
      options.homoglyphs ? *options.homoglyphs : default_homoglyphs();

  AuditReport report;
  report.started_at = iso8601_utc_now();
  report.input_text = input_text;
  const TokenSequence seq = tokenize(input_text);
  report.words = seq.words;
  report.norm_words = seq.norm_words;
  report.config = options.config;
  report.target_identity = target.model_id() + ";" + target.params_fingerprint();
  report.stopwords_source = options.stopwords_source;
  if (image != nullptr) report.image_digest = sma::image_digest(*image);

  // The caption is produced once per audit and shared by both passes.
  std::string caption;
  if (image != nullptr) caption = caption_noisy_image(target, *image, options.config);

  AttributionRun rag_run = attribute(target, seq, image, true, options.config, homoglyphs,
                                     options.synonyms, image ? &caption : nullptr);
  report.caption = rag_run.caption;
  report.beta_rag = rag_run.beta;
  report.original_output_rag = rag_run.original_output;
  report.variants = std::move(rag_run.variants);

  AdsVector adsv;
  const AdsVector* adsp = nullptr;
  if (options.rag_toggle != RagToggle::None) {
    AttributionRun norag_run = attribute(target, seq, image, false, options.config, homoglyphs,
                                         options.synonyms, image ? &caption : nullptr);
    report.has_norag = true;
    report.beta_norag = norag_run.beta;
    report.original_output_norag = norag_run.original_output;
    report.variants.insert(report.variants.end(),
                           std::make_move_iterator(norag_run.variants.begin()),
                           std::make_move_iterator(norag_run.variants.end()));
    adsv = ads(report.beta_rag, report.beta_norag);
    report.ads = adsv.diff;
    adsp = &adsv;
  } else {
    report.notes.push_back(
        "retrieval toggle unavailable: ADS stage skipped, labels degrade to a "
        "two-way pretrained/non-member split");
  }

  const ClassifyResult classified =
      classify(report.beta_rag, adsp, seq, options.config, stopwords);
  report.labels = classified.labels;
  report.ads_available = classified.ads_available;
  report.degenerate_fallback = classified.degenerate_fallback;
  if (classified.degenerate_fallback) {
    report.notes.push_back(
        "all non-stopword attribution scores equal: z-threshold stage skipped, "
        "ADS band labeling only");
  }
  report.o_rec = reconstruct_retrieved(seq, report.labels);

  report.query_count = static_cast<int>(report.variants.size()) +
                       (report.caption.empty() ? 0 : 1);
  if (options.config.sim_reference == SimReference::OriginalOutput) {
    report.query_count += report.has_norag ? 2 : 1;
  }
  report.token_cost = detail::transcript_cost(report);

  std::string canon = input_text + '\x1F' + report.target_identity + '\x1F' +
                      detail::config_to_json(options.config).dump() + '\x1F' +
                      report.image_digest;
  report.run_id = to_hex(fnv1a64(canon.data(), canon.size()));
  report.finished_at = iso8601_utc_now();

  if (!options.transcript_path.empty()) {
    detail::dump_transcript(options.transcript_path, report.variants);
  }
  return report;
}

/// Writes report + run manifest next to each other; the manifest lands
/// atomically at run end.
struct WrittenAudit {
  std::string report_path;
  std::string manifest_path;
};

inline WrittenAudit write_audit_files(const AuditReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  WrittenAudit paths;
  paths.report_path = (fs::path(out_dir) / ("report_" + report.run_id + ".json")).string();
  paths.manifest_path = (fs::path(out_dir) / ("manifest_" + report.run_id + ".json")).string();
  save_report(report, paths.report_path);
  RunManifest manifest;
  manifest.run_id = report.run_id;
  manifest.config = report.config;
  manifest.input_digest = to_hex(fnv1a64(report.input_text.data(), report.input_text.size()));
  manifest.image_digest = report.image_digest;
  manifest.target_identity = report.target_identity;
  manifest.started_at = report.started_at;
  manifest.finished_at = report.finished_at;
  manifest.total_tokens = report.token_cost;
  save_manifest(manifest, paths.manifest_path);
  return paths;
}

}  // namespace sma
