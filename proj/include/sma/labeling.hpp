#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sma/core.hpp"
#include "sma/error.hpp"

namespace sma {

// ---------------------------------------------------------------------------
// Stopwords: articles, prepositions, conjunctions, auxiliaries, pronouns and
// similar function words that are never classified. The shipped list is
// fixed; a user file replaces or extends it.
// ---------------------------------------------------------------------------
class StopwordList {
 public:
  bool contains(const std::string& word) const {
    return words_.count(normalize_word(word)) > 0;
  }

  void add(const std::string& word) {
    const std::string norm = normalize_word(word);
    if (!norm.empty()) words_.insert(norm);
  }

  std::size_t size() const { return words_.size(); }

  static const StopwordList& builtin() {
    static const StopwordList list = [] {
      StopwordList l;
      static const char* kWords[] = {
          "a", "an", "the", "this", "that", "these", "those", "some", "any", "each",
          "every", "either", "neither", "both", "such", "same", "other", "another",
          "and", "or", "but", "nor", "so", "yet", "for", "because", "although",
          "though", "while", "whereas", "if", "unless", "until", "since", "when",
          "whenever", "where", "wherever", "whether", "after", "before", "once",
          "in", "on", "at", "by", "to", "from", "of", "with", "without", "within",
          "into", "onto", "upon", "about", "above", "below", "under", "over",
          "between", "among", "through", "throughout", "during", "against",
          "toward", "towards", "across", "behind", "beside", "besides", "beyond",
          "near", "off", "out", "up", "down", "around", "along", "past", "per",
          "via", "amid", "despite", "except", "like", "unlike", "as", "than",
          "is", "am", "are", "was", "were", "be", "been", "being", "do", "does",
          "did", "doing", "done", "have", "has", "had", "having", "will", "would",
          "shall", "should", "can", "could", "may", "might", "must", "ought",
          "need", "dare", "i", "you", "he", "she", "it", "we", "they", "me", "him",
          "her", "us", "them", "my", "your", "his", "its", "our", "their", "mine",
          "yours", "hers", "ours", "theirs", "myself", "yourself", "himself",
          "herself", "itself", "ourselves", "themselves", "who", "whom", "whose",
          "which", "what", "there", "here", "then", "thus", "hence", "also",
          "too", "very", "just", "only", "not", "no", "all", "how", "why",
      };
      for (const char* w : kWords) l.add(w);
      return l;
    }();
    return list;
  }

  /// One word per line, UTF-8; '#' lines are comments.
  static StopwordList from_file(const std::string& path, bool extend_builtin = false) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open stopword file: " + path);
    StopwordList list = extend_builtin ? builtin() : StopwordList{};
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      list.add(line);
    }
    return list;
  }

 private:
  std::unordered_set<std::string> words_;
};

// ---------------------------------------------------------------------------
// Attribution Difference Score: per-word beta gap between the retrieval-on
// and retrieval-off runs. Small |diff| means the word does not depend on
// retrieval.
// ---------------------------------------------------------------------------
struct AdsVector {
  std::vector<double> diff;
  std::vector<double> beta_rag;
  std::vector<double> beta_norag;
};

inline AdsVector ads(const AttributionVector& beta_rag, const AttributionVector& beta_norag) {
  if (beta_rag.beta.size() != beta_norag.beta.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "beta lengths differ: " + std::to_string(beta_rag.beta.size()) + " vs " +
                    std::to_string(beta_norag.beta.size()));
  }
  if (!beta_rag.rag_enabled || beta_norag.rag_enabled) {
    throw Error(ErrorCode::FlagMismatch,
                "ads expects (rag_enabled=true, rag_enabled=false) attribution vectors");
  }
  AdsVector out;
  out.beta_rag = beta_rag.beta;
  out.beta_norag = beta_norag.beta;
  out.diff.resize(beta_rag.beta.size());
  for (std::size_t i = 0; i < out.diff.size(); ++i) {
    out.diff[i] = beta_rag.beta[i] - beta_norag.beta[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Three-way classification. Stopwords are excluded up front; beta_rag is
// z-normalized over the remaining words and words at or above tau become
// pretrained members; the rest split on the raw ADS band [tau_lo, tau_hi).
// Without an ADS vector (no retrieval toggle) the split degrades to
// pretrained-vs-nonmember. When every non-stopword beta is equal the z-score
// is undefined; labeling falls back to the ADS band alone and flags it.
// ---------------------------------------------------------------------------
struct ClassifyResult {
  std::vector<SourceLabel> labels;
  bool degenerate_fallback = false;
  bool ads_available = true;
};

inline ClassifyResult classify(const AttributionVector& beta_rag, const AdsVector* adsv,
                               const TokenSequence& seq, const AuditConfig& cfg,
                               const StopwordList& stopwords) {
  const std::size_t length = seq.length();
  if (beta_rag.beta.size() != length) {
    throw Error(ErrorCode::LengthMismatch, "beta length does not match token sequence");
  }
  if (adsv != nullptr && adsv->diff.size() != length) {
    throw Error(ErrorCode::LengthMismatch, "ads length does not match token sequence");
  }

  ClassifyResult result;
  result.ads_available = adsv != nullptr;
  result.labels.assign(length, SourceLabel::NonMember);

  std::vector<std::size_t> content;
  for (std::size_t i = 0; i < length; ++i) {
    if (stopwords.contains(seq.norm_words[i])) {
      result.labels[i] = SourceLabel::Excluded;
    } else {
      content.push_back(i);
    }
  }
  if (content.empty()) return result;

  double min_beta = beta_rag.beta[content.front()];
  double max_beta = min_beta;
  double mean = 0.0;
  for (std::size_t i : content) {
    const double b = beta_rag.beta[i];
    mean += b;
    min_beta = std::min(min_beta, b);
    max_beta = std::max(max_beta, b);
  }
  mean /= static_cast<double>(content.size());
  double var = 0.0;
  for (std::size_t i : content) {
    const double d = beta_rag.beta[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(content.size());
  const bool degenerate = min_beta == max_beta;
  result.degenerate_fallback = degenerate;
  const double stddev = degenerate ? 1.0 : std::sqrt(var);

  auto band_label = [&](std::size_t i) {
    if (adsv == nullptr) return SourceLabel::NonMember;
    const double d = adsv->diff[i];
    return (d >= cfg.tau_lo && d < cfg.tau_hi) ? SourceLabel::NonMember
                                               : SourceLabel::RetrievedMember;
  };
  for (std::size_t i : content) {
    if (!degenerate) {
      const double z = (beta_rag.beta[i] - mean) / stddev;
      if (z >= cfg.tau) {
        result.labels[i] = SourceLabel::PretrainedMember;
        continue;
      }
    }
    result.labels[i] = band_label(i);
  }
  return result;
}

/// Concatenation, in original order, of the surface words labeled
/// RetrievedMember: the reconstructed retrieval leak o_rec.
inline std::string reconstruct_retrieved(const TokenSequence& seq,
                                         const std::vector<SourceLabel>& labels) {
  if (labels.size() != seq.length()) {
    throw Error(ErrorCode::LengthMismatch, "labels length does not match token sequence");
  }
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != SourceLabel::RetrievedMember) continue;
    if (!out.empty()) out += ' ';
    out += seq.words[i];
  }
  return out;
}

}  // namespace sma
