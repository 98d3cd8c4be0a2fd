// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Run via ctest or directly: ./acceptance -s
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sma/sma.hpp"

using namespace sma;
namespace fs = std::filesystem;

namespace {

void report_criterion(int number, const char* name, bool pass) {
  std::printf("[acceptance] criterion %d (%s): %s\n", number, name, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Shared fixture for criteria 3 and 7: a 50-doc corpus (20 retrieval-store,
// 20 pretrain-table, 10 absent). Each of the 20 queries quotes three stored
// two-word documents (filling the top_k=3 retrieval slots), triggers one
// pretrain keyword and carries absent-word filler.
// ---------------------------------------------------------------------------
struct FixtureQuery {
  std::string text;
  std::string keyword;
};

struct Fixture {
  std::vector<Document> docs;
  std::vector<FixtureQuery> queries;
  SimulatorOptions options;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const char* stem[20] = {"bal", "cor", "dun", "far", "gol", "hem", "jor",
                            "kel", "lum", "mor", "nar", "pol", "qin", "rov",
                            "sal", "tor", "ulm", "ven", "wex", "yor"};
    const char* slot[2] = {"adin", "ektor"};
    const char* abs_slot[3] = {"veilum", "cryptor", "mistal"};
    Fixture f;
    for (int d = 0; d < 20; ++d) {
      const std::string text =
          std::string(stem[d]) + slot[0] + " " + std::string(stem[d]) + slot[1];
      f.docs.push_back({"rs" + std::to_string(10 + d), text, MembershipTag::RetrievalStore});
    }
    for (int d = 0; d < 20; ++d) {
      const std::string kw = std::string(stem[d]) + "oracle";
      f.docs.push_back({"pt" + std::to_string(10 + d),
                        kw +
                            " legend holds that scholars copied nineteen volumes of "
                            "commentary into vaults beneath ancient halls preserving "
                            "every margin note faithfully",
                        MembershipTag::PretrainOnly});
    }
    for (int d = 0; d < 10; ++d) {
      std::string text;
      for (int i = 0; i < 3; ++i) {
        if (i) text += ' ';
        text += std::string(stem[d]) + abs_slot[i];
      }
      f.docs.push_back({"ab" + std::to_string(10 + d), text, MembershipTag::Absent});
    }
    for (int q = 0; q < 20; ++q) {
      FixtureQuery query;
      query.keyword = std::string(stem[q]) + "oracle";
      const int doc_a = q;
      const int doc_b = (q + 7) % 20;
      const int doc_c = (q + 13) % 20;
      const std::string a1 = std::string(stem[q % 10]) + abs_slot[q % 3];
      const std::string a2 = std::string(stem[(q + 3) % 10]) + abs_slot[(q + 1) % 3];
      query.text = "does " + f.docs[doc_a].text + " " + f.docs[doc_b].text + " " +
                   f.docs[doc_c].text + " match " + query.keyword + " and " + a1 + " " + a2;
      f.queries.push_back(std::move(query));
    }
    f.options.top_k = 3;
    f.options.min_score = 0.1;
    return f;
  }();
  return f;
}

SimulatorTarget make_fixture_target() {
  const Fixture& f = fixture();
  Corpus corpus = make_corpus(f.docs);
  GeneratorProfile profile = profile_from_corpus(corpus, GeneratorMode::Echoer, 1.0);
  return SimulatorTarget(std::move(corpus), std::move(profile), f.options);
}

struct QueryGroundTruth {
  std::vector<SourceLabel> labels;  // per word of the query
  std::string o_orig;               // text actually leaked on the clean RAG-on query
};

QueryGroundTruth ground_truth_for(const SimulatorTarget& sim, const std::string& query_text) {
  const auto traced = sim.traced_query(query_text, nullptr, true);
  std::set<std::string> leaked;
  std::set<std::string> pretrained;
  QueryGroundTruth gt;
  for (const auto& span : traced.generation.spans) {
    const std::string text =
        traced.generation.text.substr(span.begin, span.end - span.begin);
    auto& bucket = span.kind == SourceSpan::Kind::Retrieved ? leaked : pretrained;
    for (const auto& raw : split_whitespace(text)) {
      const std::string norm = normalize_word(raw);
      if (!norm.empty()) bucket.insert(norm);
    }
    if (span.kind == SourceSpan::Kind::Retrieved) {
      if (!gt.o_orig.empty()) gt.o_orig += ' ';
      gt.o_orig += text;
    }
  }
  const StopwordList& stopwords = StopwordList::builtin();
  const TokenSequence seq = tokenize(query_text);
  for (std::size_t i = 0; i < seq.length(); ++i) {
    const std::string& norm = seq.norm_words[i];
    if (stopwords.contains(norm)) {
      gt.labels.push_back(SourceLabel::Excluded);
    } else if (leaked.count(norm)) {
      gt.labels.push_back(SourceLabel::RetrievedMember);
    } else if (pretrained.count(norm)) {
      gt.labels.push_back(SourceLabel::PretrainedMember);
    } else {
      gt.labels.push_back(SourceLabel::NonMember);
    }
  }
  return gt;
}

}  // namespace

TEST_CASE("criterion 1: ridge oracle equivalence over 200 random systems") {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(20260808, 101);
  const double alphas[3] = {0.1, 1.0, 10.0};
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(196);  // [5, 200]
    const std::size_t p = 2 + rng.uniform_index(49);   // [2, 50]
    const double alpha = alphas[trial % 3];
    std::vector<PerturbationMask> masks;
    std::vector<double> scores;
    std::vector<std::vector<double>> dense(n, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      PerturbationMask mask = sample_mask(p, 0.5, rng);
      for (std::size_t j = 0; j < p; ++j) dense[i][j] = mask.bits[j];
      masks.push_back(std::move(mask));
      scores.push_back(rng.uniform() * 4.0 - 1.0);
    }
    const auto beta = ridge_solve(make_regression_system(masks, scores), alpha);
    const auto expected = oracles::ridge(dense, scores, alpha);
    for (std::size_t j = 0; j < p; ++j) {
      worst = std::max(worst, std::abs(beta[j] - expected[j]));
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst <= 1e-8 && elapsed < 5.0;
  report_criterion(1, "ridge oracle equivalence", pass);
  CHECK(worst <= 1e-8);
  CHECK(elapsed < 5.0);
}

namespace {

/// Target with a planted linear response r = w.m + noise, read back through
/// the output length under gamma1=1, gamma2=0 scoring.
class PlantedTarget : public Target {
 public:
  PlantedTarget(TokenSequence original, std::vector<double> weights, double noise_std,
                std::uint64_t seed)
      : original_(std::move(original)),
        weights_(std::move(weights)),
        noise_std_(noise_std),
        rng_(seed, 4242) {}

  std::string model_id() const override { return "planted"; }
  std::string params_fingerprint() const override { return "acceptance"; }
  bool supports_images() const override { return false; }

  std::string query(const std::string& text, const RasterImage*, bool) override {
    const auto words = split_whitespace(text);
    double signal = 0.0;
    for (std::size_t i = 0; i < words.size() && i < original_.words.size(); ++i) {
      if (words[i] == original_.words[i]) signal += weights_[i];
    }
    if (noise_std_ > 0.0) signal += noise_std_ * rng_.gaussian();
    const auto target_len =
        static_cast<long long>(std::llround(signal * static_cast<double>(words.size())));
    std::string out;
    for (long long i = 0; i < target_len; ++i) {
      if (i) out += ' ';
      out += "tok";
    }
    return out;
  }

  std::string caption(const RasterImage&, const std::string&) override {
    throw Error(ErrorCode::UnsupportedModality, "text-only");
  }

 private:
  TokenSequence original_;
  std::vector<double> weights_;
  double noise_std_;
  Rng rng_;
};

}  // namespace

TEST_CASE("criterion 2: planted-importance recovery") {
  const auto start = std::chrono::steady_clock::now();
  const TokenSequence seq = tokenize(
      "w01 w02 w03 w04 w05 w06 w07 w08 w09 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19 w20");
  const std::size_t length = 20;
  const std::size_t support_size = 4;
  double precision_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<double> weights(length, 0.0);
    std::vector<std::size_t> support;
    Rng pick(seed, 303);
    while (support.size() < support_size) {
      const std::size_t j = pick.uniform_index(length);
      bool fresh = true;
      for (std::size_t s : support) fresh = fresh && s != j;
      if (fresh) {
        support.push_back(j);
        weights[j] = 0.5 + 0.1 * double(support.size());
      }
    }
    PlantedTarget target(seq, weights, 0.01, seed);
    AuditConfig cfg;
    cfg.n_perturbations = 200;
    cfg.alpha = 1.0;
    cfg.gamma1 = 1.0;
    cfg.gamma2 = 0.0;
    cfg.seed = seed;
    const AttributionRun run =
        attribute(target, seq, nullptr, true, cfg, HomoglyphTable::builtin());
    std::vector<std::size_t> order(length);
    for (std::size_t i = 0; i < length; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&run](std::size_t a, std::size_t b) {
      return run.beta.beta[a] > run.beta.beta[b];
    });
    std::size_t hits = 0;
    for (std::size_t k = 0; k < support_size; ++k) {
      for (std::size_t s : support) {
        if (order[k] == s) ++hits;
      }
    }
    precision_sum += double(hits) / double(support_size);
  }
  const double precision = precision_sum / 20.0;
  const double elapsed = seconds_since(start);
  const bool pass = precision >= 0.9 && elapsed < 30.0;
  report_criterion(2, "planted-importance recovery", pass);
  CHECK(precision >= 0.9);
  CHECK(elapsed < 30.0);
}

TEST_CASE("criterion 3: end-to-end provenance on the 50-doc simulator") {
  const auto start = std::chrono::steady_clock::now();
  SimulatorTarget sim = make_fixture_target();
  const Fixture& f = fixture();

  std::size_t rs_total = 0;
  std::size_t rs_hit = 0;
  std::size_t kw_total = 0;
  std::size_t kw_hit = 0;
  double acc_sum = 0.0;
  double cov_sum = 0.0;
  const StopwordList& stopwords = StopwordList::builtin();

  for (std::size_t q = 0; q < f.queries.size(); ++q) {
    const QueryGroundTruth gt = ground_truth_for(sim, f.queries[q].text);
    AuditOptions options;
    options.config.n_perturbations = 80;
    options.config.seed = 5000 + q;
    options.rag_toggle = RagToggle::Native;
    const AuditReport report = run_audit(sim, f.queries[q].text, nullptr, options);

    REQUIRE(report.labels.size() == gt.labels.size());
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
      if (gt.labels[i] == SourceLabel::RetrievedMember) {
        ++rs_total;
        if (report.labels[i] == SourceLabel::RetrievedMember) ++rs_hit;
      } else if (gt.labels[i] == SourceLabel::PretrainedMember) {
        ++kw_total;
        if (report.labels[i] == SourceLabel::PretrainedMember) ++kw_hit;
      }
    }
    acc_sum += acc(report.o_rec, gt.o_orig);
    cov_sum += coverage(content_words(report.o_rec, stopwords),
                        content_words(gt.o_orig, stopwords));
  }
  const double rs_recall = double(rs_hit) / double(rs_total);
  const double kw_recall = double(kw_hit) / double(kw_total);
  const double mean_acc = acc_sum / double(f.queries.size());
  const double mean_cov = cov_sum / double(f.queries.size());
  const double elapsed = seconds_since(start);
  std::printf(
      "[acceptance]   retrieved-word recall %.4f (need >= 0.8), pretrain-word recall %.4f "
      "(need >= 0.8), mean ACC %.4f (need >= 0.8), mean coverage %.4f (need >= 0.6), "
      "%.1fs (budget 120s)\n",
      rs_recall, kw_recall, mean_acc, mean_cov, elapsed);
  const bool pass = rs_recall >= 0.8 && kw_recall >= 0.8 && mean_acc >= 0.8 &&
                    mean_cov >= 0.6 && elapsed < 120.0;
  report_criterion(3, "end-to-end provenance on ragsim", pass);
  CHECK(rs_recall >= 0.8);
  CHECK(kw_recall >= 0.8);
  CHECK(mean_acc >= 0.8);
  CHECK(mean_cov >= 0.6);
  CHECK(elapsed < 120.0);
}

TEST_CASE("criterion 4: image-noise retrieval stability") {
  // 20 stored block-pattern images; noisy queries must keep their top-1.
  Rng maker(31415, 404);
  std::vector<RasterImage> originals;
  std::vector<ImageItem> items;
  for (int k = 0; k < 20; ++k) {
    RasterImage img;
    img.width = 64;
    img.height = 64;
    img.pixels.resize(64 * 64 * 3);
    // one random solid color per 8x8 block
    std::uint8_t block_color[8][8][3];
    for (int by = 0; by < 8; ++by) {
      for (int bx = 0; bx < 8; ++bx) {
        for (int c = 0; c < 3; ++c) {
          block_color[by][bx][c] = std::uint8_t(maker.uniform_index(256));
        }
      }
    }
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        for (int c = 0; c < 3; ++c) {
          img.pixels[(std::size_t(y) * 64 + x) * 3 + c] = block_color[y / 8][x / 8][c];
        }
      }
    }
    items.push_back({"img" + std::to_string(10 + k), encode_image(img),
                     "card " + std::to_string(k), MembershipTag::RetrievalStore});
    originals.push_back(std::move(img));
  }
  const ImageStore store = make_image_store(std::move(items));

  int stable_noisy = 0;
  int stable_clean = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = trial % 20;
    Rng noise(9000 + trial, rng_stream::kImageNoise);
    const RasterImage noisy = perturb_image(originals[k], 40.0, noise);
    const auto hits = retrieve_image(store, noisy, 1);
    if (store.items[hits.front().item_index].item_id == "img" + std::to_string(10 + k)) {
      ++stable_noisy;
    }
    Rng zero_noise(9000 + trial, rng_stream::kImageNoise);
    const RasterImage clean = perturb_image(originals[k], 0.0, zero_noise);
    const auto clean_hits = retrieve_image(store, clean, 1);
    if (store.items[clean_hits.front().item_index].item_id ==
        "img" + std::to_string(10 + k)) {
      ++stable_clean;
    }
  }
  const bool pass = stable_noisy >= 95 && stable_clean == 100;
  report_criterion(4, "image-noise retrieval stability", pass);
  CHECK(stable_noisy >= 95);
  CHECK(stable_clean == 100);
}

TEST_CASE("criterion 5: metric oracles on 100 random instances") {
  Rng rng(271828, 505);
  bool all_exact = true;
  int tested = 0;
  const char* vocab[] = {"ash", "birch", "cedar", "dour", "elm", "fir"};
  for (int trial = 0; trial < 400 && tested < 100; ++trial) {
    const int n = 3 + int(rng.uniform_index(25));
    std::vector<double> scores(n);
    std::vector<bool> member(n);
    std::vector<bool> predicted(n);
    bool has_pos = false;
    bool has_neg = false;
    for (int i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform() * 10.0) / 10.0;
      member[i] = rng.bernoulli(0.5);
      predicted[i] = rng.bernoulli(0.5);
      has_pos = has_pos || member[i];
      has_neg = has_neg || !member[i];
    }
    if (!has_pos || !has_neg) continue;
    ++tested;

    all_exact = all_exact && mda(predicted, member) == oracles::counting_mda(predicted, member);
    all_exact =
        all_exact && nmda(predicted, member) == oracles::counting_nmda(predicted, member);
    all_exact = all_exact &&
                fpr(predicted, member) == 1.0 - oracles::counting_nmda(predicted, member);
    all_exact = all_exact && std::abs(roc_auc(scores, member) -
                                      oracles::pair_count_auc(scores, member)) <= 1e-12;

    std::vector<std::string> identified;
    std::vector<std::string> retrieved;
    std::map<std::string, int> bag_a;
    std::map<std::string, int> bag_b;
    std::string text_a;
    std::string text_b;
    const int la = int(rng.uniform_index(8));
    const int lb = 1 + int(rng.uniform_index(8));
    for (int i = 0; i < la; ++i) {
      const std::string w = vocab[rng.uniform_index(6)];
      identified.push_back(w);
      ++bag_a[w];
      text_a += (text_a.empty() ? "" : " ") + w;
    }
    for (int i = 0; i < lb; ++i) {
      const std::string w = vocab[rng.uniform_index(6)];
      retrieved.push_back(w);
      ++bag_b[w];
      text_b += (text_b.empty() ? "" : " ") + w;
    }
    all_exact = all_exact && coverage(identified, retrieved) ==
                                 oracles::sorted_coverage(identified, retrieved);
    all_exact =
        all_exact && std::abs(acc(text_a, text_b) - oracles::map_cosine(bag_a, bag_b)) <= 1e-12;
  }
  const bool pass = all_exact && tested == 100;
  report_criterion(5, "metric oracles", pass);
  CHECK(all_exact);
  CHECK(tested == 100);
}

TEST_CASE("criterion 6: determinism and cost accounting") {
  const fs::path dir = fs::temp_directory_path() / "sma_acceptance_c6";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cache_path = (dir / "cache.jsonl").string();

  SimulatorTarget sim = make_fixture_target();
  const std::string query = fixture().queries[0].text;
  AuditOptions options;
  options.config.n_perturbations = 80;
  options.config.seed = 777;
  options.rag_toggle = RagToggle::Native;

  QueryCache cache1(cache_path);
  CachedTarget cached1(sim, cache1);
  const AuditReport first = run_audit(cached1, query, nullptr, options);

  QueryCache cache2(cache_path);  // warm: reloaded from disk
  CachedTarget cached2(sim, cache2);
  const long long invocations_before = sim.invocations();
  const AuditReport second = run_audit(cached2, query, nullptr, options);
  const bool no_new_queries = sim.invocations() == invocations_before;

  ordered_json ja = report_to_json(first);
  ordered_json jb = report_to_json(second);
  ja.erase("timing");
  jb.erase("timing");
  const bool identical = ja.dump() == jb.dump();

  // Cost: exactly 160 queries, each costed at output words + 60.
  long long expected_cost = 0;
  for (const auto& rec : first.variants) {
    expected_cost += static_cast<long long>(count_words(rec.output)) + 60;
  }
  const bool count_ok = first.variants.size() == 160 && first.query_count == 160;
  const bool cost_ok = first.token_cost == expected_cost;
  const bool planned_ok =
      planned_query_count(options.config, false, RagToggle::Native) == 160;

  const bool pass = identical && no_new_queries && count_ok && cost_ok && planned_ok;
  report_criterion(6, "determinism and cost", pass);
  CHECK(identical);
  CHECK(no_new_queries);
  CHECK(count_ok);
  CHECK(cost_ok);
  CHECK(planned_ok);
}

TEST_CASE("criterion 7: parameter-sensitivity sweep over N") {
  const auto start = std::chrono::steady_clock::now();
  SimulatorTarget sim = make_fixture_target();
  const Fixture& f = fixture();

  std::vector<QueryGroundTruth> gts;
  for (const auto& query : f.queries) gts.push_back(ground_truth_for(sim, query.text));

  const int sweep[3] = {10, 40, 80};
  double mean_accuracy[3] = {0.0, 0.0, 0.0};
  for (int step = 0; step < 3; ++step) {
    double accuracy_sum = 0.0;
    std::size_t samples = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      for (std::size_t q = 0; q < f.queries.size(); ++q) {
        AuditOptions options;
        options.config.n_perturbations = sweep[step];
        options.config.seed = seed * 1000 + q;
        options.config.allow_underdetermined = true;  // N=10 sits below L+1
        options.rag_toggle = RagToggle::Native;
        const AuditReport report = run_audit(sim, f.queries[q].text, nullptr, options);
        std::size_t graded = 0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < gts[q].labels.size(); ++i) {
          if (gts[q].labels[i] == SourceLabel::Excluded) continue;
          ++graded;
          if (report.labels[i] == gts[q].labels[i]) ++correct;
        }
        accuracy_sum += double(correct) / double(graded);
        ++samples;
      }
    }
    mean_accuracy[step] = accuracy_sum / double(samples);
  }
  const double elapsed = seconds_since(start);
  std::printf(
      "[acceptance]   mean label accuracy N=10: %.4f, N=40: %.4f, N=80: %.4f "
      "(monotone within 0.02), %.1fs\n",
      mean_accuracy[0], mean_accuracy[1], mean_accuracy[2], elapsed);
  const bool monotone = mean_accuracy[1] >= mean_accuracy[0] - 0.02 &&
                        mean_accuracy[2] >= mean_accuracy[1] - 0.02 &&
                        mean_accuracy[2] >= mean_accuracy[0] - 0.02;
  report_criterion(7, "parameter-sensitivity sweep", monotone);
  CHECK(monotone);
}
