#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "sma/image_io.hpp"
#include "sma/perturb.hpp"
#include "sma/ragsim.hpp"
#include "sma/rng.hpp"

using namespace sma;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

/// Brute-force TF-IDF cosine, recomputed from scratch with ordered maps.
std::vector<std::pair<std::string, double>> brute_force_retrieve(
    const std::vector<Document>& docs, const std::string& query) {
  std::vector<const Document*> indexed;
  for (const auto& d : docs) {
    if (d.tag == MembershipTag::RetrievalStore) indexed.push_back(&d);
  }
  std::map<std::string, int> df;
  auto counts = [](const std::string& text) {
    std::map<std::string, int> c;
    for (const auto& w : split_whitespace(text)) {
      const std::string n = normalize_word(w);
      if (!n.empty()) ++c[n];
    }
    return c;
  };
  for (const auto* d : indexed) {
    for (const auto& [term, _] : counts(d->text)) ++df[term];
  }
  auto idf = [&](const std::string& term) {
    const auto it = df.find(term);
    return std::log((1.0 + double(indexed.size())) /
                    (1.0 + (it == df.end() ? 0 : it->second))) +
           1.0;
  };
  auto vec = [&](const std::string& text) {
    std::map<std::string, double> v;
    double norm = 0.0;
    for (const auto& [term, tf] : counts(text)) {
      const double w = tf * idf(term);
      v[term] = w;
      norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (auto& [_, w] : v) w /= norm;
    }
    return v;
  };
  const auto qv = vec(query);
  std::vector<std::pair<std::string, double>> scores;
  for (const auto* d : indexed) {
    const auto dv = vec(d->text);
    double dot = 0.0;
    for (const auto& [term, w] : qv) {
      auto it = dv.find(term);
      if (it != dv.end()) dot += w * it->second;
    }
    scores.emplace_back(d->doc_id, dot);
  }
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return scores;
}

}  // namespace

TEST_CASE("make_corpus indexes only retrieval-store documents") {
  Corpus corpus = make_corpus({
      {"d1", "alpha beta", MembershipTag::RetrievalStore},
      {"d2", "gamma delta", MembershipTag::RetrievalStore},
      {"d3", "epsilon", MembershipTag::PretrainOnly},
  });
  CHECK(corpus.documents.size() == 3);
  CHECK(corpus.index.size() == 2);
}

TEST_CASE("make_corpus rejects duplicate doc ids") {
  CHECK_THROWS_AS(make_corpus({{"d1", "a", MembershipTag::Absent},
                               {"d1", "b", MembershipTag::Absent}}),
                  Error);
}

TEST_CASE("ingest_corpus reads manifest and bodies; empty dir is MissingManifest") {
  const fs::path dir = make_temp_dir("sma_corpus_test");
  write_file(dir / "doc_a.txt", "alpha beta gamma\n");
  write_file(dir / "doc_b.txt", "delta epsilon\n");
  write_file(dir / "doc_c.txt", "zeta\n");
  write_file(dir / "manifest.tsv",
             "a\tretrieval_store\tdoc_a.txt\n"
             "b\tretrieval_store\tdoc_b.txt\n"
             "c\tabsent\tdoc_c.txt\n");
  const Corpus corpus = ingest_corpus(dir.string());
  CHECK(corpus.documents.size() == 3);
  CHECK(corpus.index.size() == 2);
  CHECK(corpus.documents[0].text == "alpha beta gamma");

  const fs::path empty = make_temp_dir("sma_corpus_empty");
  CHECK_THROWS_AS(ingest_corpus(empty.string()), Error);
  try {
    ingest_corpus(empty.string());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingManifest);
  }
}

TEST_CASE("tf weighting: repeated term outweighs single term on a 1-doc corpus") {
  // Hand-computed: |D|=1, df(a)=df(b)=1 so idf = log(2/2)+1 = 1 for both;
  // pre-normalization weight(a) = tf*idf = 2 > 1 = weight(b).
  const Corpus corpus = make_corpus({{"d", "a a b", MembershipTag::RetrievalStore}});
  CHECK(corpus.idf("a") == doctest::Approx(1.0).epsilon(1e-12));
  const auto& entry = corpus.index[0];
  // Stored weights are normalized; the 2:1 tf ratio survives normalization.
  CHECK(entry.weights.at("a") > entry.weights.at("b"));
  CHECK(entry.weights.at("a") == doctest::Approx(2.0 * entry.weights.at("b")).epsilon(1e-12));
  // Unseen terms keep a higher idf than saturated ones: log(2/1)+1.
  CHECK(corpus.idf("unseen") == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("retrieve: self-query ranks first with score 1") {
  const Corpus corpus = make_corpus({
      {"d1", "alpha beta gamma", MembershipTag::RetrievalStore},
      {"d2", "delta epsilon zeta", MembershipTag::RetrievalStore},
  });
  const auto hits = retrieve(corpus, "alpha beta gamma", 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].doc_id == "d1");
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("retrieve: disjoint vocabulary scores zero") {
  const Corpus corpus = make_corpus({
      {"d1", "alpha beta", MembershipTag::RetrievalStore},
  });
  const auto hits = retrieve(corpus, "nothing shared here", 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].score == doctest::Approx(0.0));
}

TEST_CASE("retrieve matches the brute-force oracle on a 3-doc toy corpus") {
  const std::vector<Document> docs = {
      {"d1", "red apples grow on trees", MembershipTag::RetrievalStore},
      {"d2", "green apples taste sour", MembershipTag::RetrievalStore},
      {"d3", "trees shade the red house", MembershipTag::RetrievalStore},
  };
  const Corpus corpus = make_corpus(docs);
  const std::string query = "red apples near trees";
  const auto hits = retrieve(corpus, query, 3);
  const auto expected = brute_force_retrieve(docs, query);
  REQUIRE(hits.size() == expected.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CHECK(hits[i].doc_id == expected[i].first);
    CHECK(hits[i].score == doctest::Approx(expected[i].second).epsilon(1e-10));
  }
}

TEST_CASE("retrieve agrees with brute force on a 1000-doc corpus") {
  std::vector<Document> docs;
  Rng rng(5150, 9);
  const char* vocab[] = {"atlas",  "binary", "cobalt", "dynamo", "ember",
                         "fulcrum", "geyser", "harbor", "iodine", "jasper",
                         "krypton", "lattice", "meteor", "nimbus", "onyx"};
  for (int i = 0; i < 1000; ++i) {
    std::string text;
    const int len = 3 + int(rng.uniform_index(5));
    for (int w = 0; w < len; ++w) {
      if (w) text += ' ';
      text += vocab[rng.uniform_index(15)];
    }
    docs.push_back({"doc" + std::to_string(1000 + i), text, MembershipTag::RetrievalStore});
  }
  const Corpus corpus = make_corpus(docs);
  const std::string query = "cobalt lattice meteor";
  const auto hits = retrieve(corpus, query, 1000);
  const auto expected = brute_force_retrieve(docs, query);
  REQUIRE(hits.size() == expected.size());

  // Per-document scores must agree; ranking must agree wherever scores are
  // separated (exact ties may legally reorder between summation routes, the
  // library tie-break on doc_id is checked separately below).
  std::map<std::string, double> oracle_score;
  std::map<std::string, std::size_t> oracle_rank;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    oracle_score[expected[i].first] = expected[i].second;
    oracle_rank[expected[i].first] = i;
  }
  bool scores_match = true;
  for (const auto& hit : hits) {
    scores_match =
        scores_match && std::abs(hit.score - oracle_score.at(hit.doc_id)) < 1e-10;
  }
  CHECK(scores_match);
  bool order_consistent = true;
  for (std::size_t i = 0; i + 1 < hits.size(); ++i) {
    if (hits[i].score - hits[i + 1].score > 1e-9) {
      order_consistent =
          order_consistent && oracle_rank.at(hits[i].doc_id) < oracle_rank.at(hits[i + 1].doc_id);
    } else {
      // near-tie: library promises descending score then ascending doc_id
      order_consistent = order_consistent && (hits[i].score > hits[i + 1].score ||
                                              hits[i].doc_id < hits[i + 1].doc_id);
    }
  }
  CHECK(order_consistent);
}

TEST_CASE("retrieve ties break by ascending doc_id and k truncates") {
  const Corpus corpus = make_corpus({
      {"z", "same text", MembershipTag::RetrievalStore},
      {"a", "same text", MembershipTag::RetrievalStore},
      {"m", "same text", MembershipTag::RetrievalStore},
  });
  const auto hits = retrieve(corpus, "same text", 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].doc_id == "a");
  CHECK(hits[1].doc_id == "m");
}

TEST_CASE("toy encoder: dimensions, normalization, shape guard") {
  RasterImage img;
  img.width = 16;
  img.height = 16;
  img.pixels.assign(16 * 16 * 3, 100);
  const auto features = encode_image(img);
  REQUIRE(features.size() == std::size_t(kEncoderGrid * kEncoderGrid * 3));
  double norm = 0.0;
  for (double f : features) norm += f * f;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));

  RasterImage tiny;
  tiny.width = 4;
  tiny.height = 4;
  tiny.pixels.assign(4 * 4 * 3, 1);
  CHECK_THROWS_AS(encode_image(tiny), Error);
  try {
    encode_image(tiny);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EncoderShapeMismatch);
  }
}

TEST_CASE("hand-computed encoder features for a 2-item store and a gray query") {
  // Item A: pure red; item B: pure blue; query: uniform gray. Each patch mean
  // equals the solid color, so after normalization the cosine reduces to a
  // ratio computable by hand: gray=(g,g,g)/|.| dot red=(255,0,0)/|.| per
  // patch -> 1/sqrt(3) for both items.
  RasterImage red;
  red.width = 8;
  red.height = 8;
  red.pixels.assign(8 * 8 * 3, 0);
  for (int i = 0; i < 8 * 8; ++i) red.pixels[i * 3] = 255;
  RasterImage blue = red;
  for (int i = 0; i < 8 * 8; ++i) {
    blue.pixels[i * 3] = 0;
    blue.pixels[i * 3 + 2] = 255;
  }
  RasterImage gray;
  gray.width = 8;
  gray.height = 8;
  gray.pixels.assign(8 * 8 * 3, 128);

  const ImageStore store = make_image_store({
      {"red", encode_image(red), "a red card", MembershipTag::RetrievalStore},
      {"blue", encode_image(blue), "a blue card", MembershipTag::RetrievalStore},
  });
  const auto hits = retrieve_image(store, gray, 2);
  REQUIRE(hits.size() == 2);
  const double expected = 1.0 / std::sqrt(3.0);
  CHECK(hits[0].score == doctest::Approx(expected).epsilon(1e-9));
  CHECK(hits[1].score == doctest::Approx(expected).epsilon(1e-9));
  // tie broken by item_id: "blue" < "red"
  CHECK(store.items[hits[0].item_index].item_id == "blue");
}

TEST_CASE("stored image queried by itself ranks first with score 1") {
  Rng rng(77, 8);
  auto random_image = [&rng]() {
    RasterImage img;
    img.width = 32;
    img.height = 32;
    img.pixels.resize(32 * 32 * 3);
    for (auto& p : img.pixels) p = std::uint8_t(rng.uniform_index(256));
    return img;
  };
  const RasterImage a = random_image();
  const RasterImage b = random_image();
  const ImageStore store = make_image_store({
      {"a", encode_image(a), "first", MembershipTag::RetrievalStore},
      {"b", encode_image(b), "second", MembershipTag::RetrievalStore},
  });
  const auto hits = retrieve_image(store, a, 1);
  REQUIRE(hits.size() == 1);
  CHECK(store.items[hits[0].item_index].item_id == "a");
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("generate: echoer with leak_rate=1 copies the passage verbatim") {
  GeneratorProfile profile;
  profile.mode = GeneratorMode::Echoer;
  profile.leak_rate = 1.0;
  const std::vector<Passage> passages = {{"d1", "secret launch codes stored here", 0.9}};
  const GenerationResult out = generate(profile, "any query", passages, true);
  CHECK(out.text.find("secret launch codes stored here") != std::string::npos);
  REQUIRE(out.spans.size() == 1);
  CHECK(out.spans[0].kind == SourceSpan::Kind::Retrieved);
  CHECK(out.text.substr(out.spans[0].begin, out.spans[0].end - out.spans[0].begin) ==
        "secret launch codes stored here");
}

TEST_CASE("generate: rag disabled ignores the retrieval store entirely") {
  GeneratorProfile profile;
  profile.pretrain_response_table["eiffel"] = "the eiffel tower opened in 1889";
  const std::vector<Passage> passages = {{"d1", "some retrieved text", 0.9}};
  const GenerationResult with_store = generate(profile, "tell me about eiffel", passages, false);
  const GenerationResult without_store = generate(profile, "tell me about eiffel", {}, false);
  CHECK(with_store.text == without_store.text);
  CHECK(with_store.text.find("eiffel tower opened") != std::string::npos);
  CHECK(with_store.text.find("retrieved") == std::string::npos);
}

TEST_CASE("generate: pretrain sentence appears with and without retrieval") {
  GeneratorProfile profile;
  profile.pretrain_response_table["eiffel"] = "the eiffel tower opened in 1889";
  const std::vector<Passage> passages = {{"d1", "other text", 0.5}};
  for (bool rag : {true, false}) {
    const GenerationResult out = generate(profile, "about the eiffel tower", passages, rag);
    CHECK(out.text.find("the eiffel tower opened in 1889") != std::string::npos);
    bool has_pretrain_span = false;
    for (const auto& span : out.spans) {
      if (span.kind == SourceSpan::Kind::Pretrain && span.origin_id == "eiffel") {
        has_pretrain_span = true;
      }
    }
    CHECK(has_pretrain_span);
  }
}

TEST_CASE("generate: leak_rate fraction takes a prefix; paraphraser reverses") {
  GeneratorProfile profile;
  profile.mode = GeneratorMode::Echoer;
  profile.leak_rate = 0.5;
  const std::vector<Passage> passages = {{"d1", "one two three four", 0.9}};
  const GenerationResult half = generate(profile, "q", passages, true);
  CHECK(half.text.find("one two") != std::string::npos);
  CHECK(half.text.find("three") == std::string::npos);

  profile.mode = GeneratorMode::Paraphraser;
  profile.leak_rate = 1.0;
  const GenerationResult reversed = generate(profile, "q", passages, true);
  CHECK(reversed.text.find("four three two one") != std::string::npos);
}

TEST_CASE("generate(rag=false) is invariant under retrieval store edits") {
  GeneratorProfile profile;
  profile.pretrain_response_table["fact"] = "a known fact sentence";
  const GenerationResult a = generate(profile, "state the fact", {}, false);
  const GenerationResult b =
      generate(profile, "state the fact",
               {{"dx", "injected passage", 1.0}, {"dy", "another one", 0.8}}, false);
  CHECK(a.text == b.text);
}

TEST_CASE("profile_from_corpus keys pretrain entries by first word") {
  const Corpus corpus = make_corpus({
      {"p1", "tesla built the first coil in 1891", MembershipTag::PretrainOnly},
      {"r1", "store doc", MembershipTag::RetrievalStore},
  });
  const GeneratorProfile profile = profile_from_corpus(corpus);
  REQUIRE(profile.pretrain_response_table.size() == 1);
  CHECK(profile.pretrain_response_table.count("tesla") == 1);
  CHECK(profile.pretrain_response_table.at("tesla") == "tesla built the first coil in 1891");
}

TEST_CASE("ppm round-trip and png decode") {
  const fs::path dir = make_temp_dir("sma_image_io");
  RasterImage img;
  img.width = 9;
  img.height = 5;
  img.pixels.resize(9 * 5 * 3);
  Rng rng(3, 3);
  for (auto& p : img.pixels) p = std::uint8_t(rng.uniform_index(256));
  const std::string ppm_path = (dir / "img.ppm").string();
  write_ppm(img, ppm_path);
  const RasterImage back = load_image(ppm_path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
}
