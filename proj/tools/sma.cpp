// sma: source-aware membership audit CLI.
//
// Subcommands: audit (run the perturbation/attribution pipeline against a
// target), simulate (build and check a deterministic RAG simulator target),
// eval (score a directory of reports against ground truth), cost (token
// accounting for a report). Every exit path prints exactly one key=value
// status line on stdout; exit codes: 0 ok, 2 config error, 3 target error,
// 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sma/http_target.hpp"
#include "sma/sma.hpp"

namespace fs = std::filesystem;

namespace {

int exit_code_for(sma::ErrorCode code) {
  switch (code) {
    case sma::ErrorCode::ConfigError:
    case sma::ErrorCode::MissingManifest:
    case sma::ErrorCode::DuplicateDocId:
    case sma::ErrorCode::EmptyInput:
    case sma::ErrorCode::IoError:
    case sma::ErrorCode::MalformedReport:
    case sma::ErrorCode::MissingGroundTruth:
      return 2;
    case sma::ErrorCode::NetworkError:
    case sma::ErrorCode::RateLimited:
    case sma::ErrorCode::UnsupportedModality:
    case sma::ErrorCode::EncoderShapeMismatch:
    case sma::ErrorCode::PartialTranscript:
      return 3;
    case sma::ErrorCode::NumericalFailure:
      return 4;
    default:
      return 1;
  }
}

std::string quote_for_status(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  out += '"';
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n' || c == '\r') {
      out += ' ';
    } else {
      out += c;
    }
  }
  out += '"';
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sma::Error(sma::ErrorCode::ConfigError, "cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

// -----------------------------------------------------------------------
// Target wiring from the flat config. Audit-owned keys are consumed before
// this runs; anything left unknown is a config error.
// -----------------------------------------------------------------------
struct BuiltTarget {
  std::unique_ptr<sma::SimulatorTarget> simulator;
  std::unique_ptr<sma::HttpChatTarget> http;
  sma::Target* target = nullptr;
  sma::RagToggle toggle = sma::RagToggle::Native;
  std::string cache_path;
};

BuiltTarget build_target(sma::FlatConfig& flat, const sma::AuditConfig& cfg) {
  auto take = [&flat](const char* key) -> std::optional<std::string> {
    auto it = flat.find(key);
    if (it == flat.end()) return std::nullopt;
    std::string v = it->second;
    flat.erase(it);
    return v;
  };
  BuiltTarget built;
  const std::string kind = take("target").value_or("simulator");
  if (auto v = take("cache")) built.cache_path = *v;

  if (kind == "simulator") {
    const auto corpus_dir = take("corpus_dir");
    if (!corpus_dir) {
      throw sma::Error(sma::ErrorCode::ConfigError, "simulator target requires corpus_dir");
    }
    sma::SimulatorOptions options;
    if (auto v = take("top_k")) options.top_k = static_cast<int>(sma::detail::parse_int("top_k", *v));
    if (auto v = take("min_score")) options.min_score = sma::detail::parse_double("min_score", *v);
    sma::GeneratorMode mode = sma::GeneratorMode::Echoer;
    if (auto v = take("generator_mode")) mode = sma::generator_mode_from(*v);
    double leak_rate = 1.0;
    if (auto v = take("leak_rate")) leak_rate = sma::detail::parse_double("leak_rate", *v);
    sma::Corpus corpus = sma::ingest_corpus(*corpus_dir);
    sma::GeneratorProfile profile = sma::profile_from_corpus(corpus, mode, leak_rate);
    sma::ImageStore images;
    if (auto v = take("image_store_dir")) images = sma::ingest_image_store(*v);
    built.simulator = std::make_unique<sma::SimulatorTarget>(
        std::move(corpus), std::move(profile), options, std::move(images));
    built.target = built.simulator.get();
    built.toggle = sma::RagToggle::Native;
    if (auto v = take("rag_toggle")) built.toggle = sma::rag_toggle_from(*v);
  } else if (kind == "http") {
    sma::HttpTargetOptions options;
    if (auto v = take("http_base_url")) options.base_url = *v;
    if (auto v = take("http_path")) options.path = *v;
    if (auto v = take("http_model")) options.model = *v;
    if (auto v = take("http_auth_env")) options.auth_env = *v;
    if (auto v = take("http_temperature")) options.temperature = sma::detail::parse_double("http_temperature", *v);
    if (auto v = take("http_max_tokens")) options.max_output_tokens = static_cast<int>(sma::detail::parse_int("http_max_tokens", *v));
    if (auto v = take("http_multimodal")) options.multimodal = sma::detail::parse_bool("http_multimodal", *v);
    if (auto v = take("http_rag_flag_key")) options.rag_flag_key = *v;
    if (auto v = take("http_rag_off_path")) options.rag_off_path = *v;
    if (auto v = take("http_max_retries")) options.max_retries = static_cast<int>(sma::detail::parse_int("http_max_retries", *v));
    if (auto v = take("http_timeout_seconds")) options.timeout_seconds = static_cast<int>(sma::detail::parse_int("http_timeout_seconds", *v));
    options.qps_limit = cfg.qps_limit;
    built.toggle = sma::RagToggle::Flag;
    if (auto v = take("rag_toggle")) built.toggle = sma::rag_toggle_from(*v);
    options.rag_toggle = built.toggle;
    built.http = std::make_unique<sma::HttpChatTarget>(std::move(options));
    built.target = built.http.get();
  } else {
    throw sma::Error(sma::ErrorCode::ConfigError, "unknown target kind: " + kind);
  }
  if (!flat.empty()) {
    throw sma::Error(sma::ErrorCode::ConfigError, "unknown config key: " + flat.begin()->first);
  }
  return built;
}

// -----------------------------------------------------------------------
// audit
// -----------------------------------------------------------------------
struct AuditArgs {
  std::string config_path;
  std::string input_path;
  std::string image_path;
  std::string out_dir = "audit_out";
  std::string rag_toggle_override;
  std::string stopwords_path;
  std::string synonyms_path;
  std::string homoglyphs_path;
  std::string transcript_path;
  std::string cache_override;
  sma::FlatConfig overrides;  // config keys set from CLI flags
  bool dry_run = false;
};

int cmd_audit(const AuditArgs& args) {
  sma::FlatConfig flat = sma::load_flat_config(args.config_path);
  sma::AuditConfig cfg;
  sma::apply_audit_config(flat, cfg);
  sma::FlatConfig overrides = args.overrides;
  sma::apply_audit_config(overrides, cfg);
  cfg.validate();

  BuiltTarget built = build_target(flat, cfg);
  if (!args.rag_toggle_override.empty()) {
    built.toggle = sma::rag_toggle_from(args.rag_toggle_override);
  }
  if (!args.cache_override.empty()) built.cache_path = args.cache_override;

  const std::string raw_input = read_text_file(args.input_path);
  const sma::TokenSequence seq = sma::tokenize(raw_input);
  const std::string input_text = seq.joined();

  std::optional<sma::RasterImage> image;
  if (!args.image_path.empty()) image = sma::load_image(args.image_path);

  if (args.dry_run) {
    const int planned = sma::planned_query_count(cfg, image.has_value(), built.toggle);
    std::cout << "status=ok cmd=audit dry_run=1 planned_queries=" << planned << "\n";
    return 0;
  }

  sma::QueryCache cache =
      built.cache_path.empty() ? sma::QueryCache() : sma::QueryCache(built.cache_path);
  sma::CachedTarget cached(*built.target, cache);

  sma::AuditOptions options;
  options.config = cfg;
  options.rag_toggle = built.toggle;
  options.transcript_path = args.transcript_path;
  sma::StopwordList stopwords;
  if (!args.stopwords_path.empty()) {
    stopwords = sma::StopwordList::from_file(args.stopwords_path);
    options.stopwords = &stopwords;
    options.stopwords_source = args.stopwords_path;
  }
  sma::HomoglyphTable homoglyphs;
  if (!args.homoglyphs_path.empty()) {
    homoglyphs = sma::HomoglyphTable::from_file(args.homoglyphs_path);
    options.homoglyphs = &homoglyphs;
  }
  sma::SynonymTable synonyms;
  if (!args.synonyms_path.empty()) {
    synonyms = sma::SynonymTable::from_file(args.synonyms_path);
    options.synonyms = &synonyms;
  }

  const sma::AuditReport report =
      sma::run_audit(cached, input_text, image ? &*image : nullptr, options);
  const sma::WrittenAudit written = sma::write_audit_files(report, args.out_dir);

  std::cout << "status=ok cmd=audit report=" << written.report_path
            << " manifest=" << written.manifest_path << " queries=" << report.query_count
            << " cache_hits=" << cached.hits() << " cost=" << report.token_cost << "\n";
  return 0;
}

// -----------------------------------------------------------------------
// simulate
// -----------------------------------------------------------------------
struct SimulateArgs {
  std::string corpus_dir;
  std::string image_store_dir;
  std::string out_path = "simulator.cfg";
  int top_k = 3;
  double min_score = 0.0;
  double leak_rate = 1.0;
  std::string mode = "echoer";
};

int cmd_simulate(const SimulateArgs& args) {
  sma::Corpus corpus = sma::ingest_corpus(args.corpus_dir);
  const sma::GeneratorMode mode = sma::generator_mode_from(args.mode);
  sma::GeneratorProfile profile = sma::profile_from_corpus(corpus, mode, args.leak_rate);
  sma::ImageStore images;
  if (!args.image_store_dir.empty()) images = sma::ingest_image_store(args.image_store_dir);

  const std::size_t doc_count = corpus.documents.size();
  const std::size_t indexed = corpus.index.size();
  const std::size_t pretrain = profile.pretrain_response_table.size();
  const std::size_t image_count = images.items.size();

  // Retrieval smoke check: the first indexed document queried by its own
  // text must come back at rank 1 with score 1.
  std::string smoke = "skipped";
  if (indexed > 0) {
    const auto& doc = corpus.documents[corpus.index.front().doc_index];
    const auto hits = sma::retrieve(corpus, doc.text, args.top_k);
    smoke = (!hits.empty() && hits.front().doc_id == doc.doc_id &&
             std::abs(hits.front().score - 1.0) < 1e-9)
                ? "ok"
                : "failed";
    if (static_cast<std::size_t>(args.top_k) > indexed) {
      std::cerr << "note: top_k=" << args.top_k << " exceeds index size " << indexed
                << "; retrieval will truncate\n";
    }
  }
  if (image_count > 0) {
    std::cerr << "image encoder: " << sma::kEncoderGrid << "x" << sma::kEncoderGrid
              << " grid x 3 channels = "
              << sma::kEncoderGrid * sma::kEncoderGrid * 3 << " dims\n";
  }

  std::ofstream out(args.out_path);
  if (!out) throw sma::Error(sma::ErrorCode::IoError, "cannot write " + args.out_path);
  out << "target=simulator\n";
  out << "corpus_dir=" << fs::absolute(args.corpus_dir).string() << "\n";
  if (!args.image_store_dir.empty()) {
    out << "image_store_dir=" << fs::absolute(args.image_store_dir).string() << "\n";
  }
  out << "top_k=" << args.top_k << "\n";
  out << "min_score=" << args.min_score << "\n";
  out << "leak_rate=" << args.leak_rate << "\n";
  out << "generator_mode=" << args.mode << "\n";

  std::cout << "status=ok cmd=simulate docs=" << doc_count << " indexed=" << indexed
            << " pretrain_entries=" << pretrain << " images=" << image_count
            << " smoke=" << smoke << " config=" << args.out_path << "\n";
  return 0;
}

// -----------------------------------------------------------------------
// eval
// -----------------------------------------------------------------------
struct EvalArgs {
  std::string reports_dir;
  std::string ground_truth_path;
  std::string out_dir;
  std::string stopwords_path;
};

int cmd_eval(const EvalArgs& args) {
  const sma::GroundTruth gt = sma::load_ground_truth(args.ground_truth_path);
  sma::StopwordList stopwords = sma::StopwordList::builtin();
  if (!args.stopwords_path.empty()) {
    stopwords = sma::StopwordList::from_file(args.stopwords_path);
  }
  std::vector<std::pair<sma::AuditReport, sma::GroundTruthSample>> pairs;
  for (const auto& sample : gt.samples) {
    const fs::path report_path = fs::path(args.reports_dir) / sample.report_file;
    if (!fs::exists(report_path)) {
      throw sma::Error(sma::ErrorCode::MissingGroundTruth,
                       "report not found: " + report_path.string());
    }
    pairs.emplace_back(sma::load_report(report_path.string()), sample);
  }
  const sma::BatchEval batch = sma::evaluate_batch(pairs, gt.member_threshold, stopwords);

  const std::string out_dir = args.out_dir.empty() ? args.reports_dir : args.out_dir;
  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
  const std::string json_path = (fs::path(out_dir) / "metrics.json").string();
  sma::write_eval_csv(batch, csv_path);
  {
    std::ofstream out(json_path);
    if (!out) throw sma::Error(sma::ErrorCode::IoError, "cannot write " + json_path);
    out << sma::eval_to_json(batch).dump(2) << '\n';
  }
  auto fmt_opt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("na");
  };
  std::cout << "status=ok cmd=eval samples=" << batch.samples.size()
            << " mean_acc=" << batch.mean_acc << " mean_coverage=" << batch.mean_coverage
            << " mda=" << fmt_opt(batch.mda_value) << " nmda=" << fmt_opt(batch.nmda_value)
            << " fpr=" << fmt_opt(batch.fpr_value) << " tpr=" << fmt_opt(batch.tpr_value)
            << " auc=" << fmt_opt(batch.auc_value) << " csv=" << csv_path << "\n";
  return 0;
}

// -----------------------------------------------------------------------
// cost
// -----------------------------------------------------------------------
int cmd_cost(const std::string& report_path) {
  const sma::AuditReport report = sma::load_report(report_path);
  const long long total = sma::detail::transcript_cost(report);
  std::cout << "status=ok cmd=cost report=" << report_path
            << " queries=" << report.query_count << " total_tokens=" << total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-aware membership audit toolkit"};
  app.require_subcommand(1);

  AuditArgs audit_args;
  auto* audit = app.add_subcommand("audit", "Run a membership audit against a target");
  audit->add_option("--config", audit_args.config_path, "Flat key=value config file")->required();
  audit->add_option("--input", audit_args.input_path, "Text file with the query to audit")->required();
  audit->add_option("--image", audit_args.image_path, "Optional query image (PNG or PPM)");
  audit->add_option("--out", audit_args.out_dir, "Output directory for report + manifest");
  // every audit config field is overridable from the command line
  auto add_override = [&](const std::string& flag, const char* key, const char* desc) {
    audit->add_option_function<std::string>(
        flag,
        [&audit_args, key](const std::string& value) { audit_args.overrides[key] = value; },
        desc);
  };
  add_override("--seed", "seed", "Override the config seed");
  add_override("--n-perturbations", "n_perturbations", "Override perturbation count");
  add_override("--gamma1", "gamma1", "Length-ratio weight in the response score");
  add_override("--gamma2", "gamma2", "Similarity weight in the response score");
  add_override("--alpha", "alpha", "Ridge regularization coefficient");
  add_override("--tau", "tau", "Pretrained threshold on z-normalized attribution");
  add_override("--tau-lo", "tau_lo", "ADS band lower edge");
  add_override("--tau-hi", "tau_hi", "ADS band upper edge (exclusive)");
  add_override("--sigma", "sigma", "Image noise standard deviation");
  add_override("--mask-keep-prob", "mask_keep_prob", "Per-word keep probability");
  add_override("--max-concurrency", "max_concurrency", "Parallel target queries");
  add_override("--qps-limit", "qps_limit", "Request rate cap (0 = unlimited)");
  add_override("--strategy", "strategy",
               "Perturbation strategy: unicode_homoglyph|mask_token|synonym");
  add_override("--sim-metric", "sim_metric", "Similarity metric: bow_cosine|ngram_overlap");
  add_override("--sim-reference", "sim_reference",
               "Similarity reference: perturbed_input|original_output");
  add_override("--allow-underdetermined", "allow_underdetermined",
               "Run the regression below N = L+1 (true|false)");
  audit->add_option("--rag-toggle", audit_args.rag_toggle_override,
                    "How retrieval is switched: native|endpoint|flag|none");
  audit->add_option("--stopwords", audit_args.stopwords_path, "Stopword file (one word per line)");
  audit->add_option("--synonyms", audit_args.synonyms_path, "Synonym table (word<TAB>replacement)");
  audit->add_option("--homoglyphs", audit_args.homoglyphs_path, "Homoglyph table override");
  audit->add_option("--transcript", audit_args.transcript_path, "Per-variant transcript dump path");
  audit->add_option("--cache", audit_args.cache_override, "Query cache file (JSONL, append-only)");
  audit->add_flag("--dry-run", audit_args.dry_run, "Print the planned query count and exit");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Build and check a simulator target");
  simulate->add_option("--corpus", sim_args.corpus_dir, "Corpus directory with manifest.tsv")->required();
  simulate->add_option("--image-store", sim_args.image_store_dir, "Image store directory");
  simulate->add_option("--out", sim_args.out_path, "Where to write the target config");
  simulate->add_option("--top-k", sim_args.top_k, "Retrieval depth");
  simulate->add_option("--min-score", sim_args.min_score, "Minimum retrieval score to include");
  simulate->add_option("--leak-rate", sim_args.leak_rate, "Fraction of each passage echoed");
  simulate->add_option("--mode", sim_args.mode, "Generator mode: echoer|paraphraser");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate reports against ground truth");
  eval->add_option("--reports", eval_args.reports_dir, "Directory of report JSON files")->required();
  eval->add_option("--ground-truth", eval_args.ground_truth_path, "Ground truth manifest")->required();
  eval->add_option("--out", eval_args.out_dir, "Output directory (default: reports dir)");
  eval->add_option("--stopwords", eval_args.stopwords_path, "Stopword file override");

  std::string cost_report;
  auto* cost = app.add_subcommand("cost", "Sum the token cost of a report");
  cost->add_option("--report", cost_report, "Report JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cout << "status=error code=ConfigError exit=2 msg="
              << quote_for_status(e.what()) << "\n";
    return 2;
  }

  try {
    if (*audit) return cmd_audit(audit_args);
    if (*simulate) return cmd_simulate(sim_args);
    if (*eval) return cmd_eval(eval_args);
    if (*cost) return cmd_cost(cost_report);
  } catch (const sma::Error& e) {
    const int code = exit_code_for(e.code());
    std::cout << "status=error code=" << sma::error_code_name(e.code()) << " exit=" << code
              << " msg=" << quote_for_status(e.what()) << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cout << "status=error code=Internal exit=1 msg=" << quote_for_status(e.what()) << "\n";
    return 1;
  }
  return 0;
}
