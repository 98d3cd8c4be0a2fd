#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/image_io.hpp"

namespace sma {

enum class MembershipTag { RetrievalStore, PretrainOnly, Absent };

inline const char* to_string(MembershipTag t) {
  switch (t) {
    case MembershipTag::RetrievalStore: return "retrieval_store";
    case MembershipTag::PretrainOnly: return "pretrain_only";
    case MembershipTag::Absent: return "absent";
  }
  return "absent";
}

inline MembershipTag membership_tag_from(const std::string& name) {
  if (name == "retrieval_store") return MembershipTag::RetrievalStore;
  if (name == "pretrain_only") return MembershipTag::PretrainOnly;
  if (name == "absent") return MembershipTag::Absent;
  throw Error(ErrorCode::ConfigError, "unknown membership tag: " + name);
}

// ---------------------------------------------------------------------------
// Text corpus with a TF-IDF index over the RetrievalStore subset.
// Term weight: tf * (log((1 + |D|) / (1 + df)) + 1), vectors unit-normalized,
// where |D| and df are counted over indexed documents only. The +1 keeps
// every present term weighted even when df equals |D| (single-document
// stores would otherwise zero out entirely).
// ---------------------------------------------------------------------------
struct Document {
  std::string doc_id;
  std::string text;
  MembershipTag tag = MembershipTag::Absent;
};

struct Corpus {
  struct IndexedDoc {
    std::size_t doc_index = 0;                          // into documents
    std::unordered_map<std::string, double> weights;   // unit-normalized
  };

  std::vector<Document> documents;
  std::vector<IndexedDoc> index;
  std::unordered_map<std::string, int> df;  // over indexed docs
  std::size_t indexed_count = 0;

  double idf(const std::string& term) const {
    auto it = df.find(term);
    const int d = it == df.end() ? 0 : it->second;
    return std::log((1.0 + static_cast<double>(indexed_count)) / (1.0 + d)) + 1.0;
  }
};

namespace detail {

inline std::unordered_map<std::string, int> term_counts(const std::string& text) {
  std::unordered_map<std::string, int> counts;
  for (const auto& raw : split_whitespace(text)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) ++counts[norm];
  }
  return counts;
}

}  // namespace detail

inline Corpus make_corpus(std::vector<Document> documents) {
  Corpus corpus;
  corpus.documents = std::move(documents);
  std::unordered_map<std::string, bool> seen_ids;
  for (const auto& doc : corpus.documents) {
    if (seen_ids.count(doc.doc_id)) {
      throw Error(ErrorCode::DuplicateDocId, doc.doc_id);
    }
    seen_ids[doc.doc_id] = true;
  }
  std::vector<std::size_t> indexed;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    if (corpus.documents[i].tag == MembershipTag::RetrievalStore) indexed.push_back(i);
  }
  corpus.indexed_count = indexed.size();
  for (std::size_t i : indexed) {
    for (const auto& [term, _] : detail::term_counts(corpus.documents[i].text)) {
      ++corpus.df[term];
    }
  }
  for (std::size_t i : indexed) {
    Corpus::IndexedDoc entry;
    entry.doc_index = i;
    double norm_sq = 0.0;
    for (const auto& [term, tf] : detail::term_counts(corpus.documents[i].text)) {
      const double w = tf * corpus.idf(term);
      entry.weights[term] = w;
      norm_sq += w * w;
    }
    if (norm_sq > 0) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& [_, w] : entry.weights) w *= inv;
    }
    corpus.index.push_back(std::move(entry));
  }
  return corpus;
}

/// Directory layout: one text file per document plus manifest.tsv with lines
/// `doc_id<TAB>tag<TAB>filename`.
inline Corpus ingest_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest) {
    throw Error(ErrorCode::MissingManifest, manifest_path.string());
  }
  std::vector<Document> docs;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos) {
      throw Error(ErrorCode::MissingManifest,
                  manifest_path.string() + " line " + std::to_string(line_no) +
                      ": expected doc_id<TAB>tag<TAB>filename");
    }
    Document doc;
    doc.doc_id = line.substr(0, tab1);
    doc.tag = membership_tag_from(line.substr(tab1 + 1, tab2 - tab1 - 1));
    const std::string filename = line.substr(tab2 + 1);
    std::ifstream body(fs::path(dir) / filename);
    if (!body) {
      throw Error(ErrorCode::MissingManifest, "missing document file: " + filename);
    }
    std::string text((std::istreambuf_iterator<char>(body)), std::istreambuf_iterator<char>());
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    doc.text = std::move(text);
    docs.push_back(std::move(doc));
  }
  return make_corpus(std::move(docs));
}

struct RetrievalHit {
  std::string doc_id;
  double score = 0.0;
  std::size_t doc_index = 0;
};

/// Top-k cosine retrieval against the indexed documents. Ties break by
/// ascending doc_id; fewer than k hits come back when the store is smaller.
inline std::vector<RetrievalHit> retrieve(const Corpus& corpus, const std::string& query, int k) {
  if (k < 1) throw Error(ErrorCode::ConfigError, "k must be >= 1");
  std::unordered_map<std::string, double> qvec;
  double norm_sq = 0.0;
  for (const auto& [term, tf] : detail::term_counts(query)) {
    const double w = tf * corpus.idf(term);
    qvec[term] = w;
    norm_sq += w * w;
  }
  const double inv_norm = norm_sq > 0 ? 1.0 / std::sqrt(norm_sq) : 0.0;

  std::vector<RetrievalHit> hits;
  hits.reserve(corpus.index.size());
  for (const auto& entry : corpus.index) {
    double dot = 0.0;
    for (const auto& [term, qw] : qvec) {
      auto it = entry.weights.find(term);
      if (it != entry.weights.end()) dot += qw * it->second;
    }
    hits.push_back({corpus.documents[entry.doc_index].doc_id, dot * inv_norm, entry.doc_index});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (hits.size() > static_cast<std::size_t>(k)) hits.resize(k);
  return hits;
}

// ---------------------------------------------------------------------------
// Image store with the toy patch-mean encoder: mean intensity per cell of a
// fixed 8x8 grid, per channel (192 dims), unit-normalized.
// ---------------------------------------------------------------------------
inline constexpr int kEncoderGrid = 8;

inline std::vector<double> encode_image(const RasterImage& img) {
  if (!img.valid()) throw Error(ErrorCode::EncoderShapeMismatch, "invalid image buffer");
  if (img.width < kEncoderGrid || img.height < kEncoderGrid) {
    throw Error(ErrorCode::EncoderShapeMismatch,
                "image smaller than the " + std::to_string(kEncoderGrid) + "x" +
                    std::to_string(kEncoderGrid) + " patch grid");
  }
  std::vector<double> features;
  features.reserve(kEncoderGrid * kEncoderGrid * RasterImage::kChannels);
  for (int gy = 0; gy < kEncoderGrid; ++gy) {
    const int y0 = gy * img.height / kEncoderGrid;
    const int y1 = (gy + 1) * img.height / kEncoderGrid;
    for (int gx = 0; gx < kEncoderGrid; ++gx) {
      const int x0 = gx * img.width / kEncoderGrid;
      const int x1 = (gx + 1) * img.width / kEncoderGrid;
      double sums[3] = {0.0, 0.0, 0.0};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const std::uint8_t* px = img.pixels.data() + (std::size_t(y) * img.width + x) * 3;
          sums[0] += px[0];
          sums[1] += px[1];
          sums[2] += px[2];
        }
      }
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (double s : sums) features.push_back(s / count);
    }
  }
  double norm_sq = 0.0;
  for (double f : features) norm_sq += f * f;
  if (norm_sq > 0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& f : features) f *= inv;
  }
  return features;
}

struct ImageItem {
  std::string item_id;
  std::vector<double> features;
  std::string caption;
  MembershipTag tag = MembershipTag::Absent;
};

struct ImageStore {
  std::vector<ImageItem> items;
};

inline ImageStore make_image_store(std::vector<ImageItem> items) {
  ImageStore store;
  store.items = std::move(items);
  std::unordered_map<std::string, bool> seen;
  for (const auto& item : store.items) {
    if (seen.count(item.item_id)) throw Error(ErrorCode::DuplicateDocId, item.item_id);
    seen[item.item_id] = true;
  }
  return store;
}

/// Manifest: `item_id<TAB>tag<TAB>filename<TAB>caption`. Images are PNG or
/// binary PPM (P6).
inline ImageStore ingest_image_store(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw Error(ErrorCode::MissingManifest, manifest_path.string());
  std::vector<ImageItem> items;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      const auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        throw Error(ErrorCode::MissingManifest,
                    manifest_path.string() + " line " + std::to_string(line_no) +
                        ": expected item_id<TAB>tag<TAB>filename<TAB>caption");
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    fields.push_back(line.substr(start));
    ImageItem item;
    item.item_id = fields[0];
    item.tag = membership_tag_from(fields[1]);
    item.features = encode_image(load_image((fs::path(dir) / fields[2]).string()));
    item.caption = fields[3];
    items.push_back(std::move(item));
  }
  return make_image_store(std::move(items));
}

struct ImageHit {
  std::size_t item_index = 0;
  double score = 0.0;
};

inline std::vector<ImageHit> retrieve_image(const ImageStore& store, const RasterImage& img,
                                            int k) {
  if (k < 1) throw Error(ErrorCode::ConfigError, "k must be >= 1");
  const std::vector<double> query = encode_image(img);
  std::vector<ImageHit> hits;
  hits.reserve(store.items.size());
  for (std::size_t i = 0; i < store.items.size(); ++i) {
    const auto& feats = store.items[i].features;
    double dot = 0.0;
    for (std::size_t d = 0; d < feats.size() && d < query.size(); ++d) {
      dot += feats[d] * query[d];
    }
    hits.push_back({i, dot});
  }
  std::sort(hits.begin(), hits.end(), [&store](const ImageHit& a, const ImageHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return store.items[a.item_index].item_id < store.items[b.item_index].item_id;
  });
  if (hits.size() > static_cast<std::size_t>(k)) hits.resize(k);
  return hits;
}

// ---------------------------------------------------------------------------
// Deterministic generation with ground-truth provenance spans.
// ---------------------------------------------------------------------------
enum class GeneratorMode { Echoer, Paraphraser };

inline const char* to_string(GeneratorMode m) {
  return m == GeneratorMode::Echoer ? "echoer" : "paraphraser";
}

inline GeneratorMode generator_mode_from(const std::string& name) {
  if (name == "echoer") return GeneratorMode::Echoer;
  if (name == "paraphraser") return GeneratorMode::Paraphraser;
  throw Error(ErrorCode::ConfigError, "unknown generator mode: " + name);
}

struct GeneratorProfile {
  GeneratorMode mode = GeneratorMode::Echoer;
  double leak_rate = 1.0;  // fraction of each retrieved passage copied out
  // Keyword (normalized single word) -> canned sentence, emitted whenever the
  // keyword appears in the query, with or without retrieval.
  std::map<std::string, std::string> pretrain_response_table;
};

struct Passage {
  std::string doc_id;
  std::string text;
  double score = 0.0;
};

struct SourceSpan {
  enum class Kind { Retrieved, Pretrain };
  std::size_t begin = 0;  // byte offsets into GenerationResult::text
  std::size_t end = 0;
  Kind kind = Kind::Retrieved;
  std::string origin_id;  // doc_id or pretrain keyword
};

struct GenerationResult {
  std::string text;
  std::vector<SourceSpan> spans;
};

/// Builds a generator profile whose pretrain table is derived from the
/// corpus: each PretrainOnly document contributes one entry keyed by its
/// first normalized word, with the full document text as the canned sentence.
inline GeneratorProfile profile_from_corpus(const Corpus& corpus,
                                            GeneratorMode mode = GeneratorMode::Echoer,
                                            double leak_rate = 1.0) {
  GeneratorProfile profile;
  profile.mode = mode;
  profile.leak_rate = leak_rate;
  for (const auto& doc : corpus.documents) {
    if (doc.tag != MembershipTag::PretrainOnly) continue;
    for (const auto& raw : split_whitespace(doc.text)) {
      const std::string keyword = normalize_word(raw);
      if (keyword.empty()) continue;
      profile.pretrain_response_table[keyword] = doc.text;
      break;
    }
  }
  return profile;
}

/// Output template: "Answer:" then, per retrieved passage (retrieval enabled
/// only), a fixed introduction followed by the leaked fraction of the
/// passage, then every pretrain sentence whose keyword occurs in the query.
/// Byte spans cover exactly the characters copied from a source (template
/// words are not part of any span); that record is the provenance oracle for
/// tests.
inline constexpr const char* kPassageIntro =
    "According to the retrieved external source record:";

inline GenerationResult generate(const GeneratorProfile& profile, const std::string& query,
                                 const std::vector<Passage>& retrieved, bool rag_enabled) {
  GenerationResult result;
  result.text = "Answer:";
  if (rag_enabled) {
    for (const auto& passage : retrieved) {
      const auto words = split_whitespace(passage.text);
      if (words.empty()) continue;
      const auto leak_count = static_cast<std::size_t>(
          std::floor(profile.leak_rate * static_cast<double>(words.size()) + 0.5));
      if (leak_count == 0) continue;
      std::string leaked;
      if (profile.mode == GeneratorMode::Echoer) {
        for (std::size_t i = 0; i < leak_count; ++i) {
          if (i) leaked += ' ';
          leaked += words[i];
        }
      } else {
        for (std::size_t i = 0; i < leak_count; ++i) {
          if (i) leaked += ' ';
          leaked += words[leak_count - 1 - i];
        }
      }
      result.text += ' ';
      result.text += kPassageIntro;
      result.text += ' ';
      const std::size_t begin = result.text.size();
      result.text += leaked;
      result.spans.push_back(
          {begin, result.text.size(), SourceSpan::Kind::Retrieved, passage.doc_id});
    }
  }
  std::unordered_map<std::string, bool> query_terms;
  for (const auto& raw : split_whitespace(query)) {
    const std::string norm = normalize_word(raw);
    if (!norm.empty()) query_terms[norm] = true;
  }
  for (const auto& [keyword, sentence] : profile.pretrain_response_table) {
    if (!query_terms.count(keyword)) continue;
    result.text += ' ';
    const std::size_t begin = result.text.size();
    result.text += sentence;
    result.spans.push_back({begin, result.text.size(), SourceSpan::Kind::Pretrain, keyword});
  }
  return result;
}

}  // namespace sma
