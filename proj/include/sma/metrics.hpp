#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "sma/core.hpp"
#include "sma/error.hpp"

namespace sma {

// ---------------------------------------------------------------------------
// Evaluation metrics over audit outcomes and ground truth. All of these are
// deterministic, dependency-free counting functions; the embedding behind ACC
// is a unit-normalized bag of words.
// ---------------------------------------------------------------------------

/// ACC: cosine between bag-of-words embeddings of the reconstructed and the
/// original retrieved text. Both empty -> 1, exactly one empty -> 0.
inline double acc(const std::string& o_rec, const std::string& o_orig) {
  std::unordered_map<std::string, int> a;
  std::unordered_map<std::string, int> b;
  for (const auto& raw : split_whitespace(o_rec)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) ++a[norm];
  }
  for (const auto& raw : split_whitespace(o_orig)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) ++b[norm];
  }
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [word, count] : a) {
    na += double(count) * count;
    auto it = b.find(word);
    if (it != b.end()) dot += double(count) * it->second;
  }
  for (const auto& [_, count] : b) nb += double(count) * count;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Coverage: multiset intersection of identified words with retrieved words,
/// over the retrieved total. An empty retrieved multiset is defined as 1.0
/// (nothing to recover); callers should note that case in their report.
inline double coverage(const std::vector<std::string>& identified,
                       const std::vector<std::string>& retrieved) {
  if (retrieved.empty()) return 1.0;
  std::unordered_map<std::string, long long> id_counts;
  for (const auto& w : identified) ++id_counts[normalize_word(w)];
  std::unordered_map<std::string, long long> ret_counts;
  for (const auto& w : retrieved) ++ret_counts[normalize_word(w)];
  long long matched = 0;
  long long total = 0;
  for (const auto& [word, count] : ret_counts) {
    total += count;
    auto it = id_counts.find(word);
    if (it != id_counts.end()) matched += std::min(count, it->second);
  }
  return static_cast<double>(matched) / static_cast<double>(total);
}

/// Member Data Accuracy: fraction of true member samples predicted member.
inline double mda(const std::vector<bool>& predicted_member,
                  const std::vector<bool>& true_member) {
  if (predicted_member.size() != true_member.size()) {
    throw Error(ErrorCode::LengthMismatch, "prediction/ground-truth size mismatch");
  }
  long long members = 0;
  long long correct = 0;
  for (std::size_t i = 0; i < true_member.size(); ++i) {
    if (!true_member[i]) continue;
    ++members;
    if (predicted_member[i]) ++correct;
  }
  if (members == 0) throw Error(ErrorCode::NoMembers, "ground truth has no member samples");
  return static_cast<double>(correct) / static_cast<double>(members);
}

/// Non-member Data Accuracy: fraction of true non-members predicted
/// non-member. FPR is reported as 1 - NMDA.
inline double nmda(const std::vector<bool>& predicted_member,
                   const std::vector<bool>& true_member) {
  if (predicted_member.size() != true_member.size()) {
    throw Error(ErrorCode::LengthMismatch, "prediction/ground-truth size mismatch");
  }
  long long non_members = 0;
  long long correct = 0;
  for (std::size_t i = 0; i < true_member.size(); ++i) {
    if (true_member[i]) continue;
    ++non_members;
    if (!predicted_member[i]) ++correct;
  }
  if (non_members == 0) {
    throw Error(ErrorCode::NoMembers, "ground truth has no non-member samples");
  }
  return static_cast<double>(correct) / static_cast<double>(non_members);
}

inline double fpr(const std::vector<bool>& predicted_member,
                  const std::vector<bool>& true_member) {
  return 1.0 - nmda(predicted_member, true_member);
}

/// Rank-based AUC (Mann-Whitney); tied scores count half. Throws when only
/// one class is present.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& member) {
  if (scores.size() != member.size()) {
    throw Error(ErrorCode::LengthMismatch, "score/ground-truth size mismatch");
  }
  std::size_t positives = 0;
  for (bool m : member) positives += m;
  const std::size_t negatives = member.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::SingleClass, "AUC needs both member and non-member samples");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks across ties, then AUC = (rank-sum of positives - offset).
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (member[order[k]]) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(positives);
  const double q = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// TPR at a fixed operating threshold (score >= threshold predicts member).
inline double tpr_at(const std::vector<double>& scores, const std::vector<bool>& member,
                     double threshold) {
  if (scores.size() != member.size()) {
    throw Error(ErrorCode::LengthMismatch, "score/ground-truth size mismatch");
  }
  std::vector<bool> predicted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] >= threshold;
  return mda(predicted, member);
}

}  // namespace sma
