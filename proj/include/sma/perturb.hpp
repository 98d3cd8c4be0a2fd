#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/rng.hpp"

namespace sma {

/// Placeholder used by the MaskToken strategy (U+25AE).
inline constexpr const char* kMaskToken = "▮";

// ---------------------------------------------------------------------------
// ASCII letter -> visually confusable non-ASCII replacement. The table is
// total over [a-zA-Z]; every replacement has a different byte encoding, so a
// perturbed word never equals its original.
// ---------------------------------------------------------------------------
class HomoglyphTable {
 public:
  HomoglyphTable() = default;

  void set(char from, const std::string& to) { map_[from] = to; }

  const std::string* find(char c) const {
    auto it = map_.find(c);
    return it == map_.end() ? nullptr : &it->second;
  }

  bool covers_ascii_letters() const {
    for (char c = 'a'; c <= 'z'; ++c) {
      if (!map_.count(c)) return false;
    }
    for (char c = 'A'; c <= 'Z'; ++c) {
      if (!map_.count(c)) return false;
    }
    return true;
  }

  /// Replaces every mappable byte of `word`; unmapped bytes pass through.
  std::string apply(const std::string& word) const {
    std::string out;
    out.reserve(word.size() * 2);
    for (char c : word) {
      if (const std::string* rep = find(c)) {
        out += *rep;
      } else {
        out += c;
      }
    }
    return out;
  }

  /// The fixed table shipped with the toolkit: Cyrillic/Greek/Armenian
  /// lookalikes where a close one exists, fullwidth forms otherwise.
  static HomoglyphTable builtin() {
    HomoglyphTable t;
    const std::pair<char, const char*> lower[] = {
        {'a', "а"},  // Cyrillic а
        {'b', "ƅ"},  // Latin tone six ƅ
        {'c', "с"},  // Cyrillic с
        {'d', "ԁ"},  // Cyrillic ԁ
        {'e', "е"},  // Cyrillic е
        {'f', "ғ"},  // Cyrillic ғ
        {'g', "ɡ"},  // Latin script g ɡ
        {'h', "һ"},  // Cyrillic һ
        {'i', "і"},  // Cyrillic і
        {'j', "ј"},  // Cyrillic ј
        {'k', "κ"},  // Greek κ
        {'l', "ӏ"},  // Cyrillic ӏ
        {'m', "ⅿ"},  // Roman numeral ⅿ
        {'n', "ո"},  // Armenian ո
        {'o', "о"},  // Cyrillic о
        {'p', "р"},  // Cyrillic р
        {'q', "ԛ"},  // Cyrillic ԛ
        {'r', "г"},  // Cyrillic г (closest shape)
        {'s', "ѕ"},  // Cyrillic ѕ
        {'t', "τ"},  // Greek τ
        {'u', "ս"},  // Armenian ս
        {'v', "ν"},  // Greek ν
        {'w', "ԝ"},  // Cyrillic ԝ
        {'x', "х"},  // Cyrillic х
        {'y', "у"},  // Cyrillic у
        {'z', "ᴢ"},  // Latin small capital ᴢ
    };
    const std::pair<char, const char*> upper[] = {
        {'A', "А"}, {'B', "В"}, {'C', "С"}, {'D', "Ⅾ"},
        {'E', "Е"}, {'F', "Ϝ"}, {'G', "Ԍ"}, {'H', "Н"},
        {'I', "І"}, {'J', "Ј"}, {'K', "К"}, {'L', "Ⅼ"},
        {'M', "М"}, {'N', "Ν"}, {'O', "О"}, {'P', "Р"},
        {'Q', "Ԛ"}, {'R', "Ʀ"}, {'S', "Ѕ"}, {'T', "Т"},
        {'U', "Ս"}, {'V', "Ⅴ"}, {'W', "Ԝ"}, {'X', "Х"},
        {'Y', "У"}, {'Z', "Ζ"},
    };
    for (auto [c, rep] : lower) t.set(c, rep);
    for (auto [c, rep] : upper) t.set(c, rep);
    // Fullwidth digits keep number-only words perturbable.
    const char* digits[] = {"０", "１", "２", "３", "４",
                            "５", "６", "７", "８", "９"};
    for (int d = 0; d < 10; ++d) t.set(static_cast<char>('0' + d), digits[d]);
    return t;
  }

  /// Two-column TSV: source<TAB>replacement, UTF-8, one mapping per line.
  static HomoglyphTable from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open homoglyph table: " + path);
    HomoglyphTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab != 1 || tab + 1 >= line.size()) {
        throw Error(ErrorCode::ConfigError,
                    "homoglyph table line " + std::to_string(line_no) +
                        ": expected single-char source, TAB, replacement");
      }
      std::string rep = line.substr(tab + 1);
      if (!rep.empty() && rep.back() == '\r') rep.pop_back();
      if (rep == line.substr(0, 1)) {
        throw Error(ErrorCode::ConfigError,
                    "homoglyph table line " + std::to_string(line_no) +
                        ": replacement must differ from source");
      }
      t.set(line[0], rep);
    }
    if (!t.covers_ascii_letters()) {
      throw Error(ErrorCode::ConfigError, "homoglyph table must cover [a-zA-Z]: " + path);
    }
    return t;
  }

 private:
  std::unordered_map<char, std::string> map_;
};

// ---------------------------------------------------------------------------
// Optional synonym table: normalized word -> replacement.
// ---------------------------------------------------------------------------
class SynonymTable {
 public:
  void set(const std::string& word, const std::string& replacement) {
    map_[normalize_word(word)] = replacement;
  }

  const std::string* find(const std::string& norm_word) const {
    auto it = map_.find(norm_word);
    return it == map_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return map_.size(); }

  static SynonymTable from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open synonym table: " + path);
    SynonymTable t;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      std::string rep = line.substr(tab + 1);
      if (!rep.empty() && rep.back() == '\r') rep.pop_back();
      if (!rep.empty()) t.set(line.substr(0, tab), rep);
    }
    return t;
  }

 private:
  std::unordered_map<std::string, std::string> map_;
};

// ---------------------------------------------------------------------------
// Mask sampling: each bit keeps its word with probability keep_prob. An
// all-zero draw is repaired by forcing one uniformly chosen bit to 1.
// ---------------------------------------------------------------------------
inline PerturbationMask sample_mask(std::size_t length, double keep_prob, Rng& rng) {
  if (length < 1) throw Error(ErrorCode::EmptyInput, "mask length must be >= 1");
  if (!(keep_prob > 0 && keep_prob < 1)) {
    throw Error(ErrorCode::ConfigError, "keep_prob must be in (0,1)");
  }
  PerturbationMask mask;
  mask.bits.resize(length);
  bool any = false;
  for (std::size_t i = 0; i < length; ++i) {
    mask.bits[i] = rng.bernoulli(keep_prob) ? 1 : 0;
    any = any || mask.bits[i];
  }
  if (!any) mask.bits[rng.uniform_index(length)] = 1;
  return mask;
}

// ---------------------------------------------------------------------------
// Text perturbation. Words at mask=1 positions are left byte-identical; words
// at mask=0 positions are transformed per strategy. Synonym falls back to the
// homoglyph form when the table has no entry, keeping the operator total.
// ---------------------------------------------------------------------------
inline PerturbedVariant perturb_text(const TokenSequence& seq,
                                     const PerturbationMask& mask,
                                     PerturbStrategy strategy,
                                     const HomoglyphTable& table,
                                     const SynonymTable* synonyms = nullptr) {
  if (mask.size() != seq.length()) {
    throw Error(ErrorCode::LengthMismatch,
                "mask length " + std::to_string(mask.size()) + " vs sequence length " +
                    std::to_string(seq.length()));
  }
  PerturbedVariant variant;
  variant.mask = mask;
  variant.strategy = strategy;
  std::string out;
  for (std::size_t i = 0; i < seq.length(); ++i) {
    if (i) out += ' ';
    if (mask.bits[i]) {
      out += seq.words[i];
      continue;
    }
    switch (strategy) {
      case PerturbStrategy::UnicodeHomoglyph:
        out += table.apply(seq.words[i]);
        break;
      case PerturbStrategy::MaskToken:
        out += kMaskToken;
        break;
      case PerturbStrategy::Synonym: {
        const std::string* rep = synonyms ? synonyms->find(seq.norm_words[i]) : nullptr;
        out += rep ? *rep : table.apply(seq.words[i]);
        break;
      }
    }
  }
  variant.text = std::move(out);
  return variant;
}

// ---------------------------------------------------------------------------
// Image perturbation: independent Gaussian noise per channel value, clamped
// to [0,255] and rounded. sigma=0 is the identity and consumes no draws.
// ---------------------------------------------------------------------------
inline RasterImage perturb_image(const RasterImage& img, double sigma, Rng& rng) {
  if (sigma < 0) throw Error(ErrorCode::ConfigError, "sigma must be >= 0");
  RasterImage out = img;
  if (sigma == 0.0) return out;
  for (auto& value : out.pixels) {
    const double noised = static_cast<double>(value) + sigma * rng.gaussian();
    const double clamped = noised < 0.0 ? 0.0 : (noised > 255.0 ? 255.0 : noised);
    value = static_cast<std::uint8_t>(std::lround(clamped));
  }
  return out;
}

}  // namespace sma
