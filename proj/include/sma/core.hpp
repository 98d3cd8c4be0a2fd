#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sma/error.hpp"
#include "sma/rng.hpp"

namespace sma {

// ---------------------------------------------------------------------------
// Word-level view of an input query. Surface forms are preserved verbatim;
// norm_words carry the lowercased, punctuation-stripped forms used for
// matching against corpora, stopword lists and response text.
// ---------------------------------------------------------------------------
struct TokenSequence {
  std::vector<std::string> words;
  std::vector<std::string> norm_words;

  std::size_t length() const { return words.size(); }

  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out += ' ';
      out += words[i];
    }
    return out;
  }
};

inline std::string normalize_word(const std::string& word) {
  std::size_t begin = 0;
  std::size_t end = word.size();
  while (begin < end && std::ispunct(static_cast<unsigned char>(word[begin]))) ++begin;
  while (end > begin && std::ispunct(static_cast<unsigned char>(word[end - 1]))) --end;
  std::string out = word.substr(begin, end - begin);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

inline TokenSequence tokenize(const std::string& text) {
  TokenSequence seq;
  seq.words = split_whitespace(text);
  if (seq.words.empty()) {
    throw Error(ErrorCode::EmptyInput, "no words survive whitespace split");
  }
  seq.norm_words.reserve(seq.words.size());
  for (const auto& w : seq.words) seq.norm_words.push_back(normalize_word(w));
  return seq;
}

inline std::size_t count_words(const std::string& text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Perturbation primitives.
// ---------------------------------------------------------------------------
enum class PerturbStrategy { UnicodeHomoglyph, MaskToken, Synonym };

inline const char* to_string(PerturbStrategy s) {
  switch (s) {
    case PerturbStrategy::UnicodeHomoglyph: return "unicode_homoglyph";
    case PerturbStrategy::MaskToken: return "mask_token";
    case PerturbStrategy::Synonym: return "synonym";
  }
  return "unicode_homoglyph";
}

inline PerturbStrategy perturb_strategy_from(const std::string& name) {
  if (name == "unicode_homoglyph") return PerturbStrategy::UnicodeHomoglyph;
  if (name == "mask_token") return PerturbStrategy::MaskToken;
  if (name == "synonym") return PerturbStrategy::Synonym;
  throw Error(ErrorCode::ConfigError, "unknown perturbation strategy: " + name);
}

/// Binary retain/perturb vector; bit 1 keeps the word, 0 perturbs it.
struct PerturbationMask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  std::size_t ones() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s += b ? '1' : '0';
    return s;
  }

  static PerturbationMask from_string(const std::string& s) {
    PerturbationMask m;
    m.bits.reserve(s.size());
    for (char c : s) {
      if (c != '0' && c != '1') {
        throw Error(ErrorCode::MalformedReport, "mask string must be 0/1");
      }
      m.bits.push_back(c == '1' ? 1 : 0);
    }
    return m;
  }
};

struct PerturbedVariant {
  PerturbationMask mask;
  std::string text;
  PerturbStrategy strategy = PerturbStrategy::UnicodeHomoglyph;
  int variant_index = 0;  // 1-based, matches the row order of the design matrix
};

// ---------------------------------------------------------------------------
// Images: 8-bit RGB only.
// ---------------------------------------------------------------------------
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  static constexpr int kChannels = 3;

  bool valid() const {
    return width > 0 && height > 0 &&
           pixels.size() == static_cast<std::size_t>(width) * height * kChannels;
  }
};

// ---------------------------------------------------------------------------
// Attribution output and labels.
// ---------------------------------------------------------------------------
struct AttributionVector {
  std::vector<double> beta;
  bool rag_enabled = false;
  int n_samples = 0;
  double alpha = 0.0;
};

enum class SourceLabel { PretrainedMember, RetrievedMember, NonMember, Excluded };

inline const char* to_string(SourceLabel l) {
  switch (l) {
    case SourceLabel::PretrainedMember: return "pretrained_member";
    case SourceLabel::RetrievedMember: return "retrieved_member";
    case SourceLabel::NonMember: return "non_member";
    case SourceLabel::Excluded: return "excluded";
  }
  return "non_member";
}

inline SourceLabel source_label_from(const std::string& name) {
  if (name == "pretrained_member") return SourceLabel::PretrainedMember;
  if (name == "retrieved_member") return SourceLabel::RetrievedMember;
  if (name == "non_member") return SourceLabel::NonMember;
  if (name == "excluded") return SourceLabel::Excluded;
  throw Error(ErrorCode::MalformedReport, "unknown source label: " + name);
}

// ---------------------------------------------------------------------------
// Response scoring knobs shared between the config and the attribution core.
// ---------------------------------------------------------------------------
enum class SimMetric { BowCosine, NgramOverlap };
enum class SimReference { PerturbedInput, OriginalOutput };

inline const char* to_string(SimMetric m) {
  return m == SimMetric::BowCosine ? "bow_cosine" : "ngram_overlap";
}

inline SimMetric sim_metric_from(const std::string& name) {
  if (name == "bow_cosine") return SimMetric::BowCosine;
  if (name == "ngram_overlap") return SimMetric::NgramOverlap;
  throw Error(ErrorCode::ConfigError, "unknown sim_metric: " + name);
}

inline const char* to_string(SimReference r) {
  return r == SimReference::PerturbedInput ? "perturbed_input" : "original_output";
}

inline SimReference sim_reference_from(const std::string& name) {
  if (name == "perturbed_input") return SimReference::PerturbedInput;
  if (name == "original_output") return SimReference::OriginalOutput;
  throw Error(ErrorCode::ConfigError, "unknown sim_reference: " + name);
}

// ---------------------------------------------------------------------------
// Audit configuration. Defaults follow the perturbation-count plateau and the
// empirical thresholds the method ships with; every field can be overridden
// from a flat key=value file or a CLI flag.
// ---------------------------------------------------------------------------
struct AuditConfig {
  int n_perturbations = 80;
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  double alpha = 1.0;
  double tau = 1.0;        // threshold on z-normalized beta
  double tau_lo = -0.1;    // ADS band lower edge (raw beta difference)
  double tau_hi = 0.1;     // ADS band upper edge, exclusive
  double sigma = 40.0;     // image noise std
  double mask_keep_prob = 0.5;
  std::uint64_t seed = 1;
  int max_concurrency = 1;
  double qps_limit = 0.0;  // 0 = unlimited
  PerturbStrategy strategy = PerturbStrategy::UnicodeHomoglyph;
  SimMetric sim_metric = SimMetric::BowCosine;
  SimReference sim_reference = SimReference::PerturbedInput;
  bool allow_underdetermined = false;

  void validate() const {
    if (n_perturbations < 1) throw Error(ErrorCode::ConfigError, "n_perturbations must be >= 1");
    if (gamma1 < 0 || gamma2 < 0 || gamma1 + gamma2 <= 0) {
      throw Error(ErrorCode::ConfigError, "gamma1/gamma2 must be >= 0 and not both zero");
    }
    if (!(alpha > 0)) throw Error(ErrorCode::ConfigError, "alpha must be > 0");
    if (!(tau_lo < tau_hi)) throw Error(ErrorCode::ConfigError, "tau_lo must be < tau_hi");
    if (sigma < 0) throw Error(ErrorCode::ConfigError, "sigma must be >= 0");
    if (!(mask_keep_prob > 0 && mask_keep_prob < 1)) {
      throw Error(ErrorCode::ConfigError, "mask_keep_prob must be in (0,1)");
    }
    if (max_concurrency < 1) throw Error(ErrorCode::ConfigError, "max_concurrency must be >= 1");
    if (qps_limit < 0) throw Error(ErrorCode::ConfigError, "qps_limit must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Flat key=value config file. '#' starts a comment; keys the audit config does
// not own (target wiring etc.) stay available to the caller.
// ---------------------------------------------------------------------------
using FlatConfig = std::map<std::string, std::string>;

inline FlatConfig parse_flat_config(std::istream& in) {
  FlatConfig out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto ltrim = line.find_first_not_of(" \t\r\n");
    if (ltrim == std::string::npos) continue;
    auto rtrim = line.find_last_not_of(" \t\r\n");
    line = line.substr(ltrim, rtrim - ltrim + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError,
                  "line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

inline FlatConfig load_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config file: " + path);
  return parse_flat_config(in);
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "bad numeric value for " + key + ": " + value);
  }
}

inline long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "bad integer value for " + key + ": " + value);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "bad unsigned value for " + key + ": " + value);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorCode::ConfigError, "bad boolean value for " + key + ": " + value);
}

}  // namespace detail

/// Applies the audit-owned keys of a flat config, erasing each consumed key so
/// the caller can detect leftovers it does not understand.
inline void apply_audit_config(FlatConfig& flat, AuditConfig& cfg) {
  auto take = [&flat](const char* key) -> std::optional<std::string> {
    auto it = flat.find(key);
    if (it == flat.end()) return std::nullopt;
    std::string value = it->second;
    flat.erase(it);
    return value;
  };
  if (auto v = take("n_perturbations")) cfg.n_perturbations = static_cast<int>(detail::parse_int("n_perturbations", *v));
  if (auto v = take("gamma1")) cfg.gamma1 = detail::parse_double("gamma1", *v);
  if (auto v = take("gamma2")) cfg.gamma2 = detail::parse_double("gamma2", *v);
  if (auto v = take("alpha")) cfg.alpha = detail::parse_double("alpha", *v);
  if (auto v = take("tau")) cfg.tau = detail::parse_double("tau", *v);
  if (auto v = take("tau_lo")) cfg.tau_lo = detail::parse_double("tau_lo", *v);
  if (auto v = take("tau_hi")) cfg.tau_hi = detail::parse_double("tau_hi", *v);
  if (auto v = take("sigma")) cfg.sigma = detail::parse_double("sigma", *v);
  if (auto v = take("mask_keep_prob")) cfg.mask_keep_prob = detail::parse_double("mask_keep_prob", *v);
  if (auto v = take("seed")) cfg.seed = detail::parse_u64("seed", *v);
  if (auto v = take("max_concurrency")) cfg.max_concurrency = static_cast<int>(detail::parse_int("max_concurrency", *v));
  if (auto v = take("qps_limit")) cfg.qps_limit = detail::parse_double("qps_limit", *v);
  if (auto v = take("strategy")) cfg.strategy = perturb_strategy_from(*v);
  if (auto v = take("sim_metric")) cfg.sim_metric = sim_metric_from(*v);
  if (auto v = take("sim_reference")) cfg.sim_reference = sim_reference_from(*v);
  if (auto v = take("allow_underdetermined")) cfg.allow_underdetermined = detail::parse_bool("allow_underdetermined", *v);
}

// ---------------------------------------------------------------------------
// One audited query/response pair. Reports store these for both RAG flags.
// ---------------------------------------------------------------------------
struct VariantRecord {
  PerturbationMask mask;
  std::string text;    // the text actually submitted (caption suffix included)
  std::string output;  // raw target response
  double score = 0.0;
  bool rag_enabled = false;
  int variant_index = 0;
};

}  // namespace sma
