#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "linksyn/digest.hpp"
#include "linksyn/errors.hpp"

namespace linksyn {

using json = nlohmann::json;

// Text-in, text-out model endpoint. Implementations must be callable from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_attempts = 4;
  int initial_backoff_ms = 500;
  double multiplier = 2.0;
  int max_backoff_ms = 30000;
};

// Retries RateLimited and transient BackendUnavailable errors with exponential backoff.
inline std::string complete_with_retry(Backend& backend, const std::string& prompt, const RetryPolicy& policy) {
  double backoff = policy.initial_backoff_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      return backend.complete(prompt);
    } catch (const Error& e) {
      const bool retriable = e.code() == Errc::kRateLimited || e.code() == Errc::kBackendUnavailable;
      if (!retriable || attempt >= policy.max_attempts) {
        if (e.code() == Errc::kRateLimited)
          throw Error(Errc::kBackendUnavailable, "rate limited after " + std::to_string(attempt) + " attempts");
        throw;
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(backoff)));
    backoff = std::min<double>(backoff * policy.multiplier, policy.max_backoff_ms);
  }
}

// Runs fn(i) for i in [0, n) on at most `concurrency` worker threads; results keep index order.
template <class Result, class Fn>
std::vector<Result> run_bounded(std::size_t n, std::size_t concurrency, Fn&& fn) {
  std::vector<Result> results(n);
  if (n == 0) return results;
  concurrency = std::clamp<std::size_t>(concurrency, 1, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        results[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < concurrency; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

// Deterministic offline backend. Answers are a pure function of the prompt bytes.
class MockBackend : public Backend {
 public:
  struct Options {
    int latency_ms = 0;
    // Truncate the JSON payload for prompts whose digest is divisible by n (0 = never, 1 = always).
    int truncate_every = 0;
    // On refinement, report the correct option as missing on the same digest rule.
    int missing_option_every = 0;
    // Fail with RateLimited on the first n calls.
    int rate_limit_first = 0;
    bool unavailable = false;
  };

  MockBackend() = default;
  explicit MockBackend(Options options) : options_(options) {}

  std::string id() const override { return "mock/1"; }

  std::string complete(const std::string& prompt) override {
    const int call = calls_.fetch_add(1) + 1;
    if (options_.unavailable) throw Error(Errc::kBackendUnavailable, "mock backend configured as unavailable");
    if (call <= options_.rate_limit_first) throw Error(Errc::kRateLimited, "mock rate limit");
    const int now = in_flight_.fetch_add(1) + 1;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    if (options_.latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options_.latency_ms));
    std::string out;
    try {
      out = respond(prompt);
    } catch (...) {
      in_flight_.fetch_sub(1);
      throw;
    }
    in_flight_.fetch_sub(1);
    return out;
  }

  int calls() const { return calls_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }

 private:
  std::string respond(const std::string& prompt) const {
    const std::string tag = sha256_hex(prompt).substr(0, 12);
    if (prompt.find("'Solution Steps' and 'Final Answer'") != std::string::npos) return refine(prompt, tag);
    return synthesize(prompt, tag);
  }

  std::string synthesize(const std::string& prompt, const std::string& tag) const {
    static const std::regex kGen(R"(Generate (\d+) novel questions)");
    std::smatch m;
    int gen = 1;
    if (std::regex_search(prompt, m, kGen)) gen = std::stoi(m[1].str());
    const bool mcq = prompt.find("question type is multiple-choice") != std::string::npos;
    const std::string topic = seed_topic(prompt);
    json items = json::array();
    for (int k = 0; k < gen; ++k) {
      const std::string stem = "Variant " + std::to_string(k + 1) + " [" + tag + "] of a graduate problem on " + topic;
      if (mcq) {
        items.push_back({{"question", stem + ": which statement holds?"},
                         {"options",
                          {"(A) statement " + tag + "-a", "(B) statement " + tag + "-b",
                           "(C) statement " + tag + "-c", "(D) statement " + tag + "-d"}},
                         {"answer_index", k % 4}});
      } else {
        items.push_back({{"question", stem + ": derive the final quantity."},
                         {"solution", "Apply the relevant result step by step for case " + std::to_string(k + 1) + "."},
                         {"answer", "value-" + tag + "-" + std::to_string(k + 1)}});
      }
    }
    std::string body = "Here are the generated questions:\n```json\n" + items.dump(2) + "\n```";
    if (hits(tag, options_.truncate_every)) body = body.substr(0, body.size() / 2);
    return body;
  }

  std::string refine(const std::string& prompt, const std::string& tag) const {
    const auto pos = prompt.rfind("Input: ");
    json input;
    if (pos != std::string::npos) input = json::parse(prompt.substr(pos + 7), nullptr, false);
    json out = {{"Solution Steps", "Step 1: extract the givens. Step 2: apply the governing result. [" + tag + "]"}};
    if (input.is_object() && input.contains("options")) {
      int idx = input.value("answer_index", 0);
      if (hits(tag, options_.missing_option_every)) {
        out["Final Answer"] = "corrected value " + tag;
        out["answer_index"] = 4;
      } else {
        const auto& opts = input["options"];
        out["Final Answer"] = idx >= 0 && idx < static_cast<int>(opts.size()) ? opts[idx].get<std::string>() : "";
        out["answer_index"] = idx;
      }
    } else if (input.is_object()) {
      out["Final Answer"] = input.value("answer", std::string("value-") + tag);
    } else {
      out["Final Answer"] = "value-" + tag;
    }
    return out.dump();
  }

  static bool hits(const std::string& tag, int every) {
    return every > 0 && std::stoull(tag.substr(0, 8), nullptr, 16) % static_cast<unsigned>(every) == 0;
  }

  static std::string seed_topic(const std::string& prompt) {
    const auto pos = prompt.find("Reference Question 1:\n");
    if (pos == std::string::npos) return "the reference material";
    std::string s = prompt.substr(pos + 22, 48);
    // keep whole UTF-8 sequences only
    std::size_t cut = s.size();
    if (pos + 22 + cut < prompt.size())
      while (cut > 0 && (static_cast<unsigned char>(prompt[pos + 22 + cut]) & 0xC0) == 0x80) --cut;
    s.resize(cut);
    s.erase(std::remove(s.begin(), s.end(), '\n'), s.end());
    return s;
  }

  Options options_{};
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

struct Endpoint {
  std::string scheme_host_port;  // e.g. "https://api.example.com:443"
  std::string path_prefix;       // e.g. "/v1"
};

inline Endpoint parse_endpoint(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw Error(Errc::kConfigInvalid, "invalid endpoint URL '" + url + "'");
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

struct HttpOptions {
  std::string endpoint;                       // base URL, e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key_env = "LINKSYN_API_KEY";
  double temperature = 0.6;
  double top_p = 0.95;
  int timeout_s = 120;
};

// Issues a POST of `body` to base+route; maps transport and status failures onto backend errors.
inline json post_json(const HttpOptions& opts, const std::string& route, const json& body) {
  const Endpoint ep = parse_endpoint(opts.endpoint);
  httplib::Client client(ep.scheme_host_port);
  client.set_connection_timeout(std::min(opts.timeout_s, 30), 0);
  client.set_read_timeout(opts.timeout_s, 0);
  client.set_write_timeout(opts.timeout_s, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(opts.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = client.Post(ep.path_prefix + route, headers, body.dump(), "application/json");
  if (!res) throw Error(Errc::kBackendUnavailable, "request to " + opts.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429) throw Error(Errc::kRateLimited, "HTTP 429 from " + opts.endpoint);
  if (res->status >= 500) throw Error(Errc::kBackendUnavailable, "HTTP " + std::to_string(res->status) + " from " + opts.endpoint);
  if (res->status != 200)
    throw Error(Errc::kConfigInvalid, "HTTP " + std::to_string(res->status) + " from " + opts.endpoint + ": " + res->body.substr(0, 200));
  json out = json::parse(res->body, nullptr, false);
  if (out.is_discarded()) throw Error(Errc::kBackendUnavailable, "non-JSON response from " + opts.endpoint);
  return out;
}

// OpenAI-compatible chat completions client.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpOptions options) : options_(std::move(options)) {
    parse_endpoint(options_.endpoint);
    if (options_.model.empty()) throw Error(Errc::kConfigInvalid, "backend model name is empty");
  }

  std::string id() const override { return "http/" + options_.model; }

  std::string complete(const std::string& prompt) override {
    const json body = {{"model", options_.model},
                       {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                       {"temperature", options_.temperature},
                       {"top_p", options_.top_p}};
    const json out = post_json(options_, "/chat/completions", body);
    try {
      return out.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw Error(Errc::kBackendUnavailable, "unexpected completion payload from " + options_.endpoint);
    }
  }

 private:
  HttpOptions options_;
};

}  // namespace linksyn
