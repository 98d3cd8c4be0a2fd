#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/perturb.hpp"
#include "sma/rng.hpp"
#include "sma/target.hpp"

namespace sma {

inline constexpr const char* kCaptionPrompt = "Describe this image.";

// ---------------------------------------------------------------------------
// Similarity metrics over word bags / n-grams. Both live in [0,1] with
// empty-vs-empty = 1 and empty-vs-nonempty = 0.
// ---------------------------------------------------------------------------
namespace detail {

inline std::unordered_map<std::string, int> word_bag(const std::string& text) {
  std::unordered_map<std::string, int> bag;
  for (const auto& raw : split_whitespace(text)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) ++bag[norm];
  }
  return bag;
}

inline double bag_cosine(const std::unordered_map<std::string, int>& a,
                         const std::unordered_map<std::string, int>& b) {
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

inline std::unordered_map<std::string, int> ngram_bag(const std::vector<std::string>& words,
                                                      std::size_t n) {
  std::unordered_map<std::string, int> bag;
  if (words.size() < n) return bag;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string gram;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) gram += '\x1F';
      gram += words[i + k];
    }
    ++bag[gram];
  }
  return bag;
}

inline std::size_t clipped_matches(const std::unordered_map<std::string, int>& candidate,
                                   const std::unordered_map<std::string, int>& reference) {
  std::size_t matched = 0;
  for (const auto& [gram, count] : candidate) {
    auto it = reference.find(gram);
    if (it != reference.end()) matched += std::min(count, it->second);
  }
  return matched;
}

}  // namespace detail

/// Harmonic mean of averaged 1- and 2-gram precision and recall (clipped
/// counts). Gram sizes where both texts are too short are skipped.
inline double ngram_overlap(const std::string& a, const std::string& b) {
  std::vector<std::string> wa;
  std::vector<std::string> wb;
  for (const auto& raw : split_whitespace(a)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) wa.push_back(norm);
  }
  for (const auto& raw : split_whitespace(b)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) wb.push_back(norm);
  }
  if (wa.empty() && wb.empty()) return 1.0;
  if (wa.empty() || wb.empty()) return 0.0;
  double precision_sum = 0.0;
  double recall_sum = 0.0;
  int levels = 0;
  for (std::size_t n = 1; n <= 2; ++n) {
    const auto ga = detail::ngram_bag(wa, n);
    const auto gb = detail::ngram_bag(wb, n);
    std::size_t ca = 0;
    std::size_t cb = 0;
    for (const auto& [_, c] : ga) ca += c;
    for (const auto& [_, c] : gb) cb += c;
    if (ca == 0 && cb == 0) continue;  // both too short for this n
    const std::size_t matched = detail::clipped_matches(ga, gb);
    precision_sum += ca ? double(matched) / ca : 0.0;
    recall_sum += cb ? double(matched) / cb : 0.0;
    ++levels;
  }
  if (levels == 0) return 0.0;
  const double precision = precision_sum / levels;
  const double recall = recall_sum / levels;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline double similarity(const std::string& a, const std::string& b, SimMetric metric) {
  if (metric == SimMetric::BowCosine) {
    return detail::bag_cosine(detail::word_bag(a), detail::word_bag(b));
  }
  return ngram_overlap(a, b);
}

// ---------------------------------------------------------------------------
// Response score: r = gamma1 * Len(output)/Len(input) + gamma2 * Sim(output,
// reference). Len counts whitespace words.
// ---------------------------------------------------------------------------
struct ResponseScoreParams {
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  SimMetric metric = SimMetric::BowCosine;
  SimReference reference = SimReference::PerturbedInput;
};

inline double response_score(const std::string& perturbed_input, const std::string& output,
                             const std::string& sim_reference_text,
                             const ResponseScoreParams& params) {
  const std::size_t input_len = count_words(perturbed_input);
  if (input_len == 0) {
    throw Error(ErrorCode::EmptyInput, "perturbed input has no words");
  }
  if (params.gamma1 < 0 || params.gamma2 < 0 || params.gamma1 + params.gamma2 <= 0) {
    throw Error(ErrorCode::ConfigError, "gamma weights must be >= 0 and not both zero");
  }
  const double length_ratio =
      static_cast<double>(count_words(output)) / static_cast<double>(input_len);
  const double sim = similarity(output, sim_reference_text, params.metric);
  return params.gamma1 * length_ratio + params.gamma2 * sim;
}

// ---------------------------------------------------------------------------
// The stacked perturbation system: row i is variant i's mask, r[i] its score.
// ---------------------------------------------------------------------------
struct RegressionSystem {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::uint8_t> mask_matrix;  // row-major n_rows x n_cols
  std::vector<double> scores;

  std::uint8_t mask_at(std::size_t row, std::size_t col) const {
    return mask_matrix[row * n_cols + col];
  }

  void validate() const {
    if (n_rows < 1 || n_cols < 1) {
      throw Error(ErrorCode::ConfigError, "regression system must be non-empty");
    }
    if (mask_matrix.size() != n_rows * n_cols || scores.size() != n_rows) {
      throw Error(ErrorCode::LengthMismatch, "regression system shape mismatch");
    }
    for (std::size_t i = 0; i < n_rows; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < n_cols && !any; ++j) any = mask_at(i, j) != 0;
      if (!any) {
        throw Error(ErrorCode::ConfigError,
                    "all-zero mask row " + std::to_string(i) + " in regression system");
      }
    }
    for (double r : scores) {
      if (!std::isfinite(r)) {
        throw Error(ErrorCode::NumericalFailure, "non-finite response score");
      }
    }
  }
};

inline RegressionSystem make_regression_system(const std::vector<PerturbationMask>& masks,
                                               const std::vector<double>& scores) {
  if (masks.empty() || masks.size() != scores.size()) {
    throw Error(ErrorCode::LengthMismatch, "mask/score count mismatch");
  }
  RegressionSystem sys;
  sys.n_rows = masks.size();
  sys.n_cols = masks.front().size();
  sys.mask_matrix.reserve(sys.n_rows * sys.n_cols);
  for (const auto& mask : masks) {
    if (mask.size() != sys.n_cols) {
      throw Error(ErrorCode::LengthMismatch, "inconsistent mask lengths");
    }
    sys.mask_matrix.insert(sys.mask_matrix.end(), mask.bits.begin(), mask.bits.end());
  }
  sys.scores = scores;
  sys.validate();
  return sys;
}

/// Solves (M^T M + alpha I) beta = M^T r by Cholesky factorization. alpha > 0
/// makes the matrix positive definite, so the factorization cannot break down
/// in exact arithmetic; an infinity-norm residual check guards the computed
/// solution anyway.
inline std::vector<double> ridge_solve(const RegressionSystem& sys, double alpha) {
  if (!(alpha > 0)) throw Error(ErrorCode::ConfigError, "alpha must be > 0");
  sys.validate();
  const std::size_t n = sys.n_rows;
  const std::size_t p = sys.n_cols;

  // Normal equations. M is 0/1 so M^T M accumulates exactly in doubles.
  std::vector<double> gram(p * p, 0.0);
  std::vector<double> rhs(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* row = sys.mask_matrix.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      if (!row[j]) continue;
      rhs[j] += sys.scores[i];
      for (std::size_t k = j; k < p; ++k) {
        if (row[k]) gram[j * p + k] += 1.0;
      }
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    gram[j * p + j] += alpha;
    for (std::size_t k = j + 1; k < p; ++k) gram[k * p + j] = gram[j * p + k];
  }

  // In-place lower Cholesky.
  std::vector<double> chol = gram;
  for (std::size_t j = 0; j < p; ++j) {
    double diag = chol[j * p + j];
    for (std::size_t k = 0; k < j; ++k) diag -= chol[j * p + k] * chol[j * p + k];
    if (!(diag > 0.0)) {
      throw Error(ErrorCode::NumericalFailure, "Cholesky breakdown at column " +
                                                   std::to_string(j));
    }
    const double root = std::sqrt(diag);
    chol[j * p + j] = root;
    for (std::size_t i = j + 1; i < p; ++i) {
      double v = chol[i * p + j];
      for (std::size_t k = 0; k < j; ++k) v -= chol[i * p + k] * chol[j * p + k];
      chol[i * p + j] = v / root;
    }
  }

  // Forward then back substitution.
  std::vector<double> beta = rhs;
  for (std::size_t i = 0; i < p; ++i) {
    double v = beta[i];
    for (std::size_t k = 0; k < i; ++k) v -= chol[i * p + k] * beta[k];
    beta[i] = v / chol[i * p + i];
  }
  for (std::size_t ii = p; ii-- > 0;) {
    double v = beta[ii];
    for (std::size_t k = ii + 1; k < p; ++k) v -= chol[k * p + ii] * beta[k];
    beta[ii] = v / chol[ii * p + ii];
  }

  // Residual check against the assembled system.
  double rhs_inf = 0.0;
  for (double b : rhs) rhs_inf = std::max(rhs_inf, std::abs(b));
  double resid_inf = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p; ++k) acc += gram[i * p + k] * beta[k];
    resid_inf = std::max(resid_inf, std::abs(acc - rhs[i]));
  }
  if (resid_inf > 1e-8 * std::max(1.0, rhs_inf)) {
    throw Error(ErrorCode::NumericalFailure,
                "ridge residual " + std::to_string(resid_inf) + " exceeds tolerance");
  }
  return beta;
}

// ---------------------------------------------------------------------------
// Full attribution pass: sample masks, build variants, query, score, regress.
// Masks and image noise derive from fixed seed streams, so the retrieval-on
// and retrieval-off passes see identical perturbed inputs.
// ---------------------------------------------------------------------------
struct AttributionRun {
  AttributionVector beta;
  std::vector<VariantRecord> variants;  // ordered by variant_index
  std::string caption;                  // empty when no image was supplied
  std::string original_output;          // filled only for OriginalOutput scoring
};

/// Image pathway: caption the sigma-noised image once so visual influence is
/// attributed in the same text space. The noise stream is fixed by the seed,
/// so every pass over the same audit sees the same noisy image.
inline std::string caption_noisy_image(Target& target, const RasterImage& image,
                                       const AuditConfig& cfg) {
  if (!target.supports_images()) {
    throw Error(ErrorCode::UnsupportedModality, "target does not accept images");
  }
  Rng noise_rng = seeded_rng(cfg.seed, rng_stream::kImageNoise);
  const RasterImage noised = perturb_image(image, cfg.sigma, noise_rng);
  return target.caption(noised, kCaptionPrompt);
}

inline AttributionRun attribute(Target& target, const TokenSequence& seq,
                                const RasterImage* image, bool rag_enabled,
                                const AuditConfig& cfg, const HomoglyphTable& table,
                                const SynonymTable* synonyms = nullptr,
                                const std::string* precomputed_caption = nullptr) {
  cfg.validate();
  const std::size_t length = seq.length();
  const int n = cfg.n_perturbations;
  if (!cfg.allow_underdetermined && static_cast<std::size_t>(n) < length + 1) {
    throw Error(ErrorCode::PartialTranscript,
                "N=" + std::to_string(n) + " is below N_min=L+1=" + std::to_string(length + 1) +
                    "; the regression would be underdetermined "
                    "(set allow_underdetermined to override)");
  }

  AttributionRun run;

  std::string caption_suffix;
  if (image != nullptr) {
    run.caption =
        precomputed_caption ? *precomputed_caption : caption_noisy_image(target, *image, cfg);
    caption_suffix = " " + run.caption;
  }

  Rng mask_rng = seeded_rng(cfg.seed, rng_stream::kMasks);
  std::vector<PerturbationMask> masks;
  masks.reserve(n);
  std::vector<VariantRecord> records(n);
  for (int i = 0; i < n; ++i) {
    PerturbationMask mask = sample_mask(length, cfg.mask_keep_prob, mask_rng);
    PerturbedVariant variant = perturb_text(seq, mask, cfg.strategy, table, synonyms);
    variant.variant_index = i + 1;
    records[i].mask = variant.mask;
    records[i].text = variant.text + caption_suffix;
    records[i].rag_enabled = rag_enabled;
    records[i].variant_index = variant.variant_index;
    masks.push_back(std::move(variant.mask));
  }

  ResponseScoreParams score_params{cfg.gamma1, cfg.gamma2, cfg.sim_metric, cfg.sim_reference};
  if (cfg.sim_reference == SimReference::OriginalOutput) {
    run.original_output = target.query(seq.joined() + caption_suffix, nullptr, rag_enabled);
  }

  const int workers = std::min(cfg.max_concurrency, n);
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        VariantRecord& rec = records[i];
        rec.output = target.query(rec.text, nullptr, rag_enabled);
        const std::string& reference = cfg.sim_reference == SimReference::PerturbedInput
                                           ? rec.text
                                           : run.original_output;
        rec.score = response_score(rec.text, rec.output, reference, score_params);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<double> scores;
  scores.reserve(n);
  for (const auto& rec : records) scores.push_back(rec.score);
  const RegressionSystem sys = make_regression_system(masks, scores);
  run.beta.beta = ridge_solve(sys, cfg.alpha);
  run.beta.rag_enabled = rag_enabled;
  run.beta.n_samples = n;
  run.beta.alpha = cfg.alpha;
  run.variants = std::move(records);
  return run;
}

}  // namespace sma
