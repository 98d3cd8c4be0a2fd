#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sma/error.hpp"
#include "sma/labeling.hpp"
#include "sma/metrics.hpp"
#include "sma/report.hpp"

namespace sma {

// ---------------------------------------------------------------------------
// Ground truth for a batch of reports: per-sample membership bit, the
// original retrieved text o_orig and (optionally) per-word true labels.
// ---------------------------------------------------------------------------
struct GroundTruthSample {
  std::string report_file;  // matched by filename
  bool member = false;
  std::string o_orig;
  std::vector<SourceLabel> word_labels;  // empty when not provided
};

struct GroundTruth {
  std::vector<GroundTruthSample> samples;
  double member_threshold = 0.5;
};

inline GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingGroundTruth, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MissingGroundTruth, std::string(ex.what()) + " in " + path);
  }
  GroundTruth gt;
  gt.member_threshold = j.value("member_threshold", 0.5);
  if (!j.contains("samples") || !j["samples"].is_array() || j["samples"].empty()) {
    throw Error(ErrorCode::MissingGroundTruth, "manifest has no samples: " + path);
  }
  for (const auto& s : j["samples"]) {
    GroundTruthSample sample;
    sample.report_file = s.at("report").get<std::string>();
    sample.member = s.at("member").get<bool>();
    sample.o_orig = s.value("o_orig", "");
    if (s.contains("word_labels")) {
      for (const auto& l : s["word_labels"]) {
        sample.word_labels.push_back(source_label_from(l.get<std::string>()));
      }
    }
    gt.samples.push_back(std::move(sample));
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Per-sample and aggregate evaluation.
// ---------------------------------------------------------------------------
struct SampleEval {
  std::string report_file;
  bool member = false;
  double member_score = 0.0;  // fraction of content words labeled member-like
  bool predicted_member = false;
  double acc = 0.0;
  double cov = 0.0;
  std::optional<double> word_accuracy;  // only with per-word ground truth
};

struct BatchEval {
  std::vector<SampleEval> samples;
  double mean_acc = 0.0;
  double mean_coverage = 0.0;
  std::optional<double> mean_word_accuracy;
  std::optional<double> mda_value;
  std::optional<double> nmda_value;
  std::optional<double> fpr_value;
  std::optional<double> tpr_value;
  std::optional<double> auc_value;
};

inline double member_score_of(const AuditReport& report) {
  std::size_t content = 0;
  std::size_t member_like = 0;
  for (SourceLabel l : report.labels) {
    if (l == SourceLabel::Excluded) continue;
    ++content;
    if (l != SourceLabel::NonMember) ++member_like;
  }
  return content == 0 ? 0.0 : static_cast<double>(member_like) / content;
}

inline std::vector<std::string> content_words(const std::string& text,
                                              const StopwordList& stopwords) {
  std::vector<std::string> out;
  for (const auto& raw : split_whitespace(text)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty() && !stopwords.contains(norm)) out.push_back(norm);
  }
  return out;
}

inline SampleEval evaluate_sample(const AuditReport& report, const GroundTruthSample& gt,
                                  double member_threshold, const StopwordList& stopwords) {
  SampleEval eval;
  eval.report_file = gt.report_file;
  eval.member = gt.member;
  eval.member_score = member_score_of(report);
  eval.predicted_member = eval.member_score >= member_threshold;
  eval.acc = acc(report.o_rec, gt.o_orig);
  eval.cov = coverage(content_words(report.o_rec, stopwords),
                      content_words(gt.o_orig, stopwords));
  if (!gt.word_labels.empty()) {
    if (gt.word_labels.size() != report.labels.size()) {
      throw Error(ErrorCode::MissingGroundTruth,
                  "word_labels length mismatch for " + gt.report_file);
    }
    std::size_t graded = 0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < report.labels.size(); ++i) {
      if (report.labels[i] == SourceLabel::Excluded ||
          gt.word_labels[i] == SourceLabel::Excluded) {
        continue;
      }
      ++graded;
      if (report.labels[i] == gt.word_labels[i]) ++correct;
    }
    if (graded > 0) eval.word_accuracy = static_cast<double>(correct) / graded;
  }
  return eval;
}

inline BatchEval evaluate_batch(const std::vector<std::pair<AuditReport, GroundTruthSample>>& pairs,
                                double member_threshold,
                                const StopwordList& stopwords = StopwordList::builtin()) {
  if (pairs.empty()) throw Error(ErrorCode::MissingGroundTruth, "no samples to evaluate");
  BatchEval batch;
  std::vector<bool> predicted;
  std::vector<bool> truth;
  std::vector<double> scores;
  double acc_sum = 0.0;
  double cov_sum = 0.0;
  double word_acc_sum = 0.0;
  std::size_t word_acc_count = 0;
  for (const auto& [report, gt] : pairs) {
    SampleEval eval = evaluate_sample(report, gt, member_threshold, stopwords);
    acc_sum += eval.acc;
    cov_sum += eval.cov;
    if (eval.word_accuracy) {
      word_acc_sum += *eval.word_accuracy;
      ++word_acc_count;
    }
    predicted.push_back(eval.predicted_member);
    truth.push_back(eval.member);
    scores.push_back(eval.member_score);
    batch.samples.push_back(std::move(eval));
  }
  batch.mean_acc = acc_sum / batch.samples.size();
  batch.mean_coverage = cov_sum / batch.samples.size();
  if (word_acc_count > 0) batch.mean_word_accuracy = word_acc_sum / word_acc_count;
  const bool has_members = std::find(truth.begin(), truth.end(), true) != truth.end();
  const bool has_non_members = std::find(truth.begin(), truth.end(), false) != truth.end();
  if (has_members) {
    batch.mda_value = mda(predicted, truth);
    batch.tpr_value = tpr_at(scores, truth, member_threshold);
  }
  if (has_non_members) {
    batch.nmda_value = nmda(predicted, truth);
    batch.fpr_value = 1.0 - *batch.nmda_value;
  }
  if (has_members && has_non_members) {
    batch.auc_value = roc_auc(scores, truth);
  }
  return batch;
}

inline void write_eval_csv(const BatchEval& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "report,member,member_score,predicted_member,acc,coverage,word_accuracy\n";
  for (const auto& s : batch.samples) {
    out << s.report_file << ',' << (s.member ? 1 : 0) << ',' << s.member_score << ','
        << (s.predicted_member ? 1 : 0) << ',' << s.acc << ',' << s.cov << ',';
    if (s.word_accuracy) out << *s.word_accuracy;
    out << '\n';
  }
}

inline ordered_json eval_to_json(const BatchEval& batch) {
  ordered_json j;
  j["samples"] = batch.samples.size();
  j["mean_acc"] = batch.mean_acc;
  j["mean_coverage"] = batch.mean_coverage;
  auto set_opt = [&j](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  set_opt("mean_word_accuracy", batch.mean_word_accuracy);
  set_opt("mda", batch.mda_value);
  set_opt("nmda", batch.nmda_value);
  set_opt("fpr", batch.fpr_value);
  set_opt("tpr", batch.tpr_value);
  set_opt("auc", batch.auc_value);
  return j;
}

}  // namespace sma
