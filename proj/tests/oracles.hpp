// Test-only brute-force oracles, deliberately implemented on different
// algorithmic routes than the library code they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracles {

/// Dense linear solve by Gauss-Jordan elimination with partial pivoting
/// (the library uses Cholesky).
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < n; ++row) {
      if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
    }
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("singular system");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    const double inv = 1.0 / a[col][col];
    for (std::size_t k = col; k < n; ++k) a[col][k] *= inv;
    b[col] *= inv;
    for (std::size_t row = 0; row < n; ++row) {
      if (row == col) continue;
      const double factor = a[row][col];
      if (factor == 0.0) continue;
      for (std::size_t k = col; k < n; ++k) a[row][k] -= factor * a[col][k];
      b[row] -= factor * b[col];
    }
  }
  return b;
}

/// Ridge regression straight from the definition: assemble M^T M + alpha*I
/// and M^T r elementwise, then Gauss-Jordan.
inline std::vector<double> ridge(const std::vector<std::vector<double>>& m,
                                 const std::vector<double>& r, double alpha) {
  const std::size_t n = m.size();
  const std::size_t p = m.front().size();
  std::vector<std::vector<double>> gram(p, std::vector<double>(p, 0.0));
  std::vector<double> rhs(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = 0; k < p; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += m[i][j] * m[i][k];
      gram[j][k] = acc;
    }
    gram[j][j] += alpha;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += m[i][j] * r[i];
    rhs[j] = acc;
  }
  return gauss_solve(std::move(gram), std::move(rhs));
}

/// AUC by exhaustive pair counting (the library ranks).
inline double pair_count_auc(const std::vector<double>& scores,
                             const std::vector<bool>& member) {
  double wins = 0.0;
  long long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!member[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (member[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  if (pairs == 0) throw std::runtime_error("no member/non-member pairs");
  return wins / static_cast<double>(pairs);
}

inline double counting_mda(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  long long total = 0;
  long long hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      ++total;
      hit += predicted[i] ? 1 : 0;
    }
  }
  return double(hit) / double(total);
}

inline double counting_nmda(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  long long total = 0;
  long long hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i]) {
      ++total;
      hit += predicted[i] ? 0 : 1;
    }
  }
  return double(hit) / double(total);
}

/// Coverage by sorting both multisets and two-pointer intersection (the
/// library counts via hash maps).
inline double sorted_coverage(std::vector<std::string> identified,
                              std::vector<std::string> retrieved) {
  if (retrieved.empty()) return 1.0;
  std::sort(identified.begin(), identified.end());
  std::sort(retrieved.begin(), retrieved.end());
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t matched = 0;
  while (i < identified.size() && j < retrieved.size()) {
    if (identified[i] == retrieved[j]) {
      ++matched;
      ++i;
      ++j;
    } else if (identified[i] < retrieved[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return double(matched) / double(retrieved.size());
}

/// Cosine similarity between two word-count maps, computed term-by-term.
inline double map_cosine(const std::map<std::string, int>& a,
                         const std::map<std::string, int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [w, c] : a) {
    na += double(c) * c;
    auto it = b.find(w);
    if (it != b.end()) dot += double(c) * it->second;
  }
  for (const auto& [w, c] : b) nb += double(c) * c;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace oracles
