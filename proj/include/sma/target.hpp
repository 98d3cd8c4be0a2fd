#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/ragsim.hpp"

namespace sma {

/// Per-query token cost model: output tokens plus a fixed prompt overhead.
inline long long estimate_cost(long long output_token_count) {
  if (output_token_count < 0) {
    throw Error(ErrorCode::ConfigError, "output_token_count must be >= 0");
  }
  return output_token_count + 60;
}

enum class RagToggle { Native, Endpoint, Flag, None };

inline const char* to_string(RagToggle t) {
  switch (t) {
    case RagToggle::Native: return "native";
    case RagToggle::Endpoint: return "endpoint";
    case RagToggle::Flag: return "flag";
    case RagToggle::None: return "none";
  }
  return "none";
}

inline RagToggle rag_toggle_from(const std::string& name) {
  if (name == "native") return RagToggle::Native;
  if (name == "endpoint") return RagToggle::Endpoint;
  if (name == "flag") return RagToggle::Flag;
  if (name == "none") return RagToggle::None;
  throw Error(ErrorCode::ConfigError, "unknown rag toggle: " + name);
}

// ---------------------------------------------------------------------------
// The semi-black-box boundary: submit inputs, observe outputs, toggle
// retrieval. Adapters must be safe for concurrent query() callers.
// ---------------------------------------------------------------------------
class Target {
 public:
  virtual ~Target() = default;

  virtual std::string model_id() const = 0;

  /// Decoding parameters and toggle wiring, folded into cache keys so records
  /// from a differently configured target are never reused.
  virtual std::string params_fingerprint() const = 0;

  virtual bool supports_images() const = 0;

  virtual std::string query(const std::string& text, const RasterImage* image,
                            bool rag_enabled) = 0;

  virtual std::string caption(const RasterImage& image, const std::string& prompt) = 0;
};

// ---------------------------------------------------------------------------
// Hashing for cache keys.
// ---------------------------------------------------------------------------
inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xCBF29CE484222325ULL) {
  const auto* bytes = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline std::string image_digest(const RasterImage& img) {
  std::uint64_t h = fnv1a64(&img.width, sizeof(img.width));
  h = fnv1a64(&img.height, sizeof(img.height), h);
  h = fnv1a64(img.pixels.data(), img.pixels.size(), h);
  return to_hex(h);
}

/// Stable digest over everything that determines a response.
inline std::string request_hash(const std::string& input_text, const std::string& img_digest,
                                bool rag_enabled, const std::string& model_id,
                                const std::string& params_fingerprint) {
  std::string canon;
  auto field = [&canon](const std::string& s) {
    canon += std::to_string(s.size());
    canon += ':';
    canon += s;
    canon += '|';
  };
  field(input_text);
  field(img_digest);
  field(rag_enabled ? "1" : "0");
  field(model_id);
  field(params_fingerprint);
  return to_hex(fnv1a64(canon.data(), canon.size()));
}

inline std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Query cache: in-memory map plus an optional append-only JSONL file, so an
// interrupted audit resumes without re-spending tokens.
// ---------------------------------------------------------------------------
struct QueryRecord {
  std::string request_hash;
  std::string input_text;
  std::string image_digest;
  bool rag_enabled = false;
  std::string output;
  double latency_ms = 0.0;
  std::string timestamp;
};

class QueryCache {
 public:
  QueryCache() = default;

  explicit QueryCache(const std::string& path) : path_(path) {
    std::ifstream in(path_);
    if (!in) return;  // fresh cache file, created on first insert
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::IoError, "corrupt cache line in " + path_);
      }
      QueryRecord rec;
      rec.request_hash = j.at("hash").get<std::string>();
      rec.input_text = j.at("input").get<std::string>();
      rec.image_digest = j.value("image", "");
      rec.rag_enabled = j.at("rag").get<bool>();
      rec.output = j.at("output").get<std::string>();
      rec.latency_ms = j.value("latency_ms", 0.0);
      rec.timestamp = j.value("timestamp", "");
      records_.emplace(rec.request_hash, std::move(rec));
    }
  }

  std::optional<QueryRecord> lookup(const std::string& hash) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = records_.find(hash);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  /// At-most-once per hash; returns false when the record already existed.
  bool insert(const QueryRecord& rec) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = records_.emplace(rec.request_hash, rec);
    if (!inserted) return false;
    if (!path_.empty()) append_to_file(rec);
    return true;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_.size();
  }

 private:
  void append_to_file(const QueryRecord& rec) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to cache file " + path_);
    nlohmann::json j;
    j["hash"] = rec.request_hash;
    j["input"] = rec.input_text;
    j["image"] = rec.image_digest;
    j["rag"] = rec.rag_enabled;
    j["output"] = rec.output;
    j["latency_ms"] = rec.latency_ms;
    j["timestamp"] = rec.timestamp;
    out << j.dump() << '\n';
  }

  mutable std::mutex mutex_;
  std::unordered_map<std::string, QueryRecord> records_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Minimum-interval rate limiter: at most qps acquisitions per second. Clock
// and sleep are injectable for fake-clock tests.
// ---------------------------------------------------------------------------
class RateLimiter {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  using Sleeper = std::function<void(std::chrono::microseconds)>;

  explicit RateLimiter(double qps, Clock clock = nullptr, Sleeper sleeper = nullptr)
      : qps_(qps),
        clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }),
        sleeper_(sleeper ? std::move(sleeper)
                         : [](std::chrono::microseconds d) { std::this_thread::sleep_for(d); }) {}

  /// Blocks until a request slot is available. qps <= 0 disables limiting.
  void acquire() {
    if (qps_ <= 0) return;
    const auto interval =
        std::chrono::microseconds(static_cast<std::int64_t>(1e6 / qps_));
    std::chrono::microseconds wait{0};
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const auto now = clock_();
      if (!initialized_ || now >= next_allowed_) {
        next_allowed_ = now + interval;
        initialized_ = true;
        return;
      }
      wait = std::chrono::duration_cast<std::chrono::microseconds>(next_allowed_ - now);
      next_allowed_ += interval;
    }
    sleeper_(wait);
  }

 private:
  double qps_;
  Clock clock_;
  Sleeper sleeper_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_allowed_{};
  bool initialized_ = false;
};

// ---------------------------------------------------------------------------
// Deterministic simulator adapter over the ragsim corpus/stores. Retrieval
// keeps the top_k hits scoring strictly above min_score; captioning returns
// the caption of the nearest stored image.
// ---------------------------------------------------------------------------
struct SimulatorOptions {
  int top_k = 3;
  double min_score = 0.0;
};

class SimulatorTarget : public Target {
 public:
  SimulatorTarget(Corpus corpus, GeneratorProfile profile, SimulatorOptions options = {},
                  ImageStore images = {})
      : corpus_(std::move(corpus)),
        images_(std::move(images)),
        profile_(std::move(profile)),
        options_(options) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& doc : corpus_.documents) {
      h = fnv1a64(doc.doc_id.data(), doc.doc_id.size(), h);
      h = fnv1a64(doc.text.data(), doc.text.size(), h);
    }
    for (const auto& item : images_.items) {
      h = fnv1a64(item.item_id.data(), item.item_id.size(), h);
      h = fnv1a64(item.caption.data(), item.caption.size(), h);
    }
    corpus_digest_ = to_hex(h);
  }

  std::string model_id() const override { return "simulator"; }

  std::string params_fingerprint() const override {
    return "topk=" + std::to_string(options_.top_k) +
           ";min_score=" + std::to_string(options_.min_score) +
           ";mode=" + to_string(profile_.mode) +
           ";leak=" + std::to_string(profile_.leak_rate) + ";corpus=" + corpus_digest_;
  }

  bool supports_images() const override { return !images_.items.empty(); }

  struct TracedResult {
    GenerationResult generation;
    std::vector<Passage> passages;
  };

  TracedResult traced_query(const std::string& text, const RasterImage* image,
                            bool rag_enabled) const {
    invocations_.fetch_add(1, std::memory_order_relaxed);
    TracedResult traced;
    if (rag_enabled) {
      if (!corpus_.index.empty()) {
        for (const auto& hit : retrieve(corpus_, text, options_.top_k)) {
          if (hit.score <= options_.min_score) continue;
          traced.passages.push_back(
              {hit.doc_id, corpus_.documents[hit.doc_index].text, hit.score});
        }
      }
      if (image != nullptr) {
        if (images_.items.empty()) {
          throw Error(ErrorCode::UnsupportedModality, "simulator has no image store");
        }
        for (const auto& hit : retrieve_image(images_, *image, options_.top_k)) {
          if (hit.score <= options_.min_score) continue;
          const auto& item = images_.items[hit.item_index];
          traced.passages.push_back({item.item_id, item.caption, hit.score});
        }
      }
    }
    traced.generation = generate(profile_, text, traced.passages, rag_enabled);
    return traced;
  }

  std::string query(const std::string& text, const RasterImage* image,
                    bool rag_enabled) override {
    return traced_query(text, image, rag_enabled).generation.text;
  }

  std::string caption(const RasterImage& image, const std::string& /*prompt*/) override {
    if (images_.items.empty()) {
      throw Error(ErrorCode::UnsupportedModality, "simulator has no image store");
    }
    invocations_.fetch_add(1, std::memory_order_relaxed);
    const auto hits = retrieve_image(images_, image, 1);
    return images_.items[hits.front().item_index].caption;
  }

  /// Number of raw adapter calls; cache tests assert on this.
  long long invocations() const { return invocations_.load(std::memory_order_relaxed); }

  const Corpus& corpus() const { return corpus_; }
  const ImageStore& image_store() const { return images_; }
  const GeneratorProfile& profile() const { return profile_; }
  const SimulatorOptions& options() const { return options_; }

 private:
  Corpus corpus_;
  ImageStore images_;
  GeneratorProfile profile_;
  SimulatorOptions options_;
  std::string corpus_digest_;
  mutable std::atomic<long long> invocations_{0};
};

// ---------------------------------------------------------------------------
// Cache layer over any adapter. Hits never reach the inner target; inserts
// are at-most-once per request hash even under concurrent callers.
// ---------------------------------------------------------------------------
class CachedTarget : public Target {
 public:
  CachedTarget(Target& inner, QueryCache& cache) : inner_(inner), cache_(cache) {}

  std::string model_id() const override { return inner_.model_id(); }
  std::string params_fingerprint() const override { return inner_.params_fingerprint(); }
  bool supports_images() const override { return inner_.supports_images(); }

  std::string query(const std::string& text, const RasterImage* image,
                    bool rag_enabled) override {
    const std::string img_digest = image ? sma::image_digest(*image) : "";
    return cached_call(text, img_digest, rag_enabled,
                       [&] { return inner_.query(text, image, rag_enabled); });
  }

  std::string caption(const RasterImage& image, const std::string& prompt) override {
    const std::string img_digest = sma::image_digest(image);
    return cached_call("caption:" + prompt, img_digest, false,
                       [&] { return inner_.caption(image, prompt); });
  }

  long long hits() const { return hits_.load(std::memory_order_relaxed); }
  long long misses() const { return misses_.load(std::memory_order_relaxed); }

 private:
  // Single-flight per key: concurrent callers on the same hash share one
  // inner call instead of racing. Failed calls leave no entry, so a retry
  // re-queries and a success still inserts at most once.
  template <typename Fn>
  std::string cached_call(const std::string& input_text, const std::string& img_digest,
                          bool rag_enabled, Fn&& fn) {
    const std::string key = request_hash(input_text, img_digest, rag_enabled,
                                         inner_.model_id(), inner_.params_fingerprint());
    for (;;) {
      std::shared_future<std::string> pending;
      std::promise<std::string> promise;
      bool owner = false;
      {
        std::lock_guard<std::mutex> lock(inflight_mutex_);
        if (auto rec = cache_.lookup(key)) {
          hits_.fetch_add(1, std::memory_order_relaxed);
          return rec->output;
        }
        auto it = inflight_.find(key);
        if (it != inflight_.end()) {
          pending = it->second;
        } else {
          inflight_.emplace(key, promise.get_future().share());
          owner = true;
        }
      }
      if (owner) {
        return run_and_record(key, input_text, img_digest, rag_enabled, std::move(promise),
                              std::forward<Fn>(fn));
      }
      try {
        const std::string out = pending.get();
        hits_.fetch_add(1, std::memory_order_relaxed);
        return out;
      } catch (...) {
        // The owning call failed; loop and try to become the owner.
      }
    }
  }

  template <typename Fn>
  std::string run_and_record(const std::string& key, const std::string& input_text,
                             const std::string& img_digest, bool rag_enabled,
                             std::promise<std::string> promise, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    QueryRecord rec;
    rec.request_hash = key;
    rec.input_text = input_text;
    rec.image_digest = img_digest;
    rec.rag_enabled = rag_enabled;
    try {
      rec.output = fn();
    } catch (...) {
      {
        std::lock_guard<std::mutex> lock(inflight_mutex_);
        inflight_.erase(key);
      }
      promise.set_exception(std::current_exception());
      throw;
    }
    rec.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    rec.timestamp = iso8601_utc_now();
    {
      std::lock_guard<std::mutex> lock(inflight_mutex_);
      cache_.insert(rec);
      inflight_.erase(key);
    }
    promise.set_value(rec.output);
    misses_.fetch_add(1, std::memory_order_relaxed);
    return rec.output;
  }

  Target& inner_;
  QueryCache& cache_;
  std::mutex inflight_mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> inflight_;
  std::atomic<long long> hits_{0};
  std::atomic<long long> misses_{0};
};

}  // namespace sma
