#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "sma/error.hpp"
#include "sma/image_io.hpp"
#include "sma/target.hpp"

namespace sma {

namespace detail {

inline std::string base64_encode(const std::string& data) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < data.size()) {
    const std::uint32_t chunk = (std::uint8_t(data[i]) << 16) |
                                (std::uint8_t(data[i + 1]) << 8) | std::uint8_t(data[i + 2]);
    out += alphabet[(chunk >> 18) & 63];
    out += alphabet[(chunk >> 12) & 63];
    out += alphabet[(chunk >> 6) & 63];
    out += alphabet[chunk & 63];
    i += 3;
  }
  if (i + 1 == data.size()) {
    const std::uint32_t chunk = std::uint8_t(data[i]) << 16;
    out += alphabet[(chunk >> 18) & 63];
    out += alphabet[(chunk >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    const std::uint32_t chunk = (std::uint8_t(data[i]) << 16) | (std::uint8_t(data[i + 1]) << 8);
    out += alphabet[(chunk >> 18) & 63];
    out += alphabet[(chunk >> 12) & 63];
    out += alphabet[(chunk >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::string ppm_bytes(const RasterImage& img) {
  std::ostringstream out;
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  return out.str();
}

}  // namespace detail

struct HttpTargetOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string auth_env;      // name of the env var holding the bearer token
  double temperature = 0.0;  // pinned low: sampling noise degrades attribution
  int max_output_tokens = 512;
  bool multimodal = false;
  RagToggle rag_toggle = RagToggle::Flag;
  std::string rag_flag_key = "rag_enabled";  // body key when toggle == Flag
  std::string rag_off_path;                  // alternate path when toggle == Endpoint
  double qps_limit = 0.0;
  int max_retries = 3;
  int timeout_seconds = 30;
  int backoff_base_ms = 200;
  int backoff_cap_ms = 5000;
  RateLimiter::Sleeper sleeper;  // injectable for tests
};

/// Chat-completions-style adapter. One POST per uncached query; retryable
/// failures (connect errors, 429, 5xx) back off exponentially up to
/// max_retries, and the shared limiter keeps callers under qps_limit.
class HttpChatTarget : public Target {
 public:
  explicit HttpChatTarget(HttpTargetOptions options)
      : options_(std::move(options)),
        limiter_(options_.qps_limit, nullptr, options_.sleeper),
        sleeper_(options_.sleeper ? options_.sleeper : [](std::chrono::microseconds d) {
          std::this_thread::sleep_for(d);
        }) {
    if (options_.base_url.empty()) {
      throw Error(ErrorCode::ConfigError, "http target requires base_url");
    }
    if (options_.rag_toggle == RagToggle::Native) {
      throw Error(ErrorCode::ConfigError,
                  "rag toggle 'native' is simulator-only; use endpoint, flag or none");
    }
    if (options_.rag_toggle == RagToggle::Endpoint && options_.rag_off_path.empty()) {
      throw Error(ErrorCode::ConfigError, "rag toggle 'endpoint' requires rag_off_path");
    }
  }

  std::string model_id() const override { return options_.model; }

  std::string params_fingerprint() const override {
    return "temp=" + std::to_string(options_.temperature) +
           ";max_tokens=" + std::to_string(options_.max_output_tokens) +
           ";toggle=" + to_string(options_.rag_toggle) + ";url=" + options_.base_url +
           options_.path;
  }

  bool supports_images() const override { return options_.multimodal; }

  std::string query(const std::string& text, const RasterImage* image,
                    bool rag_enabled) override {
    if (image != nullptr && !options_.multimodal) {
      throw Error(ErrorCode::UnsupportedModality, "target is not configured as multimodal");
    }
    return post_chat(build_body(text, image, rag_enabled), rag_enabled);
  }

  std::string caption(const RasterImage& image, const std::string& prompt) override {
    if (!options_.multimodal) {
      throw Error(ErrorCode::UnsupportedModality, "target is not configured as multimodal");
    }
    return post_chat(build_body(prompt, &image, false), false);
  }

 private:
  nlohmann::json build_body(const std::string& text, const RasterImage* image,
                            bool rag_enabled) const {
    nlohmann::json body;
    body["model"] = options_.model;
    body["temperature"] = options_.temperature;
    body["max_tokens"] = options_.max_output_tokens;
    if (options_.rag_toggle == RagToggle::Flag) {
      body[options_.rag_flag_key] = rag_enabled;
    }
    nlohmann::json message;
    message["role"] = "user";
    if (image == nullptr) {
      message["content"] = text;
    } else {
      nlohmann::json parts = nlohmann::json::array();
      parts.push_back({{"type", "text"}, {"text", text}});
      parts.push_back(
          {{"type", "image_url"},
           {"image_url",
            {{"url", "data:image/x-portable-pixmap;base64," +
                         detail::base64_encode(detail::ppm_bytes(*image))}}}});
      message["content"] = std::move(parts);
    }
    body["messages"] = nlohmann::json::array({std::move(message)});
    return body;
  }

  std::string post_chat(const nlohmann::json& body, bool rag_enabled) {
    const std::string path = (options_.rag_toggle == RagToggle::Endpoint && !rag_enabled)
                                 ? options_.rag_off_path
                                 : options_.path;
    const std::string payload = body.dump();
    httplib::Headers headers;
    if (!options_.auth_env.empty()) {
      if (const char* token = std::getenv(options_.auth_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
    }
    int last_status = 0;
    std::string last_detail;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
      if (attempt > 0) {
        const int shift = attempt - 1;
        std::int64_t delay_ms = static_cast<std::int64_t>(options_.backoff_base_ms) << shift;
        if (delay_ms > options_.backoff_cap_ms) delay_ms = options_.backoff_cap_ms;
        sleeper_(std::chrono::microseconds(delay_ms * 1000));
      }
      limiter_.acquire();
      httplib::Client client(options_.base_url);
      client.set_connection_timeout(options_.timeout_seconds, 0);
      client.set_read_timeout(options_.timeout_seconds, 0);
      auto res = client.Post(path, headers, payload, "application/json");
      if (!res) {
        last_status = 0;
        last_detail = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_status = res->status;
        last_detail = res->body;
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorCode::NetworkError,
                    "HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
      }
      return parse_content(res->body, path);
    }
    if (last_status == 429) {
      throw Error(ErrorCode::RateLimited, "still rate-limited after " +
                                              std::to_string(options_.max_retries) +
                                              " retries: " + last_detail);
    }
    throw Error(ErrorCode::NetworkError,
                "request to " + path + " failed after " +
                    std::to_string(options_.max_retries) + " retries (" +
                    (last_status ? "HTTP " + std::to_string(last_status) : last_detail) + ")");
  }

  static std::string parse_content(const std::string& body, const std::string& path) {
    try {
      const auto j = nlohmann::json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::NetworkError,
                  "unparseable chat response from " + path + ": " + ex.what());
    }
  }

  HttpTargetOptions options_;
  RateLimiter limiter_;
  RateLimiter::Sleeper sleeper_;
};

}  // namespace sma
