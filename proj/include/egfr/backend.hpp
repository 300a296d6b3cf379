#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "egfr/chart.hpp"
#include "egfr/cohort.hpp"
#include "egfr/prompts.hpp"

namespace egfr {

enum class BackendKind { remote, mock };

enum class MockPolicyKind { persistence, linear, noisy, malformed };

struct MockPolicy {
  MockPolicyKind kind = MockPolicyKind::persistence;
  double sigma = 1.0;   // noisy
  uint64_t seed = 0;    // noisy
};

std::optional<MockPolicyKind> parse_mock_policy(const std::string& name);

struct BackendConfig {
  std::string backend_id;
  BackendKind kind = BackendKind::mock;
  // remote
  std::string endpoint;        // e.g. https://api.example.com
  std::string model;           // model name sent on the wire
  std::string credential_env;  // env var holding the API key; never the key itself
  std::optional<double> temperature;
  // mock
  MockPolicy mock;

  double timeout_seconds = 30;
  int max_retries = 3;
  double rate_per_minute = 60;
};

struct ModelResponse {
  std::string backend_id;
  std::string prompt_digest;
  std::string image_digest;
  int attempt_index = 1;
  std::string raw_text;
  int64_t received_unix = 0;  // 0 for mocks and cache replays
  std::string status = "ok";  // "ok" | "transport-error"
};

// Deterministic offline test double for a multimodal endpoint.
std::string mock_predict(const MockPolicy& policy, const PredictionWindow& window,
                         int attempt_index);

// Wraps a numeric prediction in the template-echoing sentence the mocks emit.
std::string mock_sentence(long next_day_diff, double value);

// Injectable clock so rate limiting and backoff are testable.
struct Clock {
  virtual ~Clock() = default;
  virtual double now() = 0;               // seconds, monotonic
  virtual void sleep(double seconds) = 0;
};

Clock& real_clock();

class RateLimiter {
 public:
  RateLimiter(double per_minute, Clock& clock);
  void acquire();  // blocks (via clock.sleep) until a slot is free

 private:
  double per_minute_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<double> recent_;
};

// One file per response under <dir>/<backend_id>/<key>.json, written via
// temp-file + atomic rename so concurrent writers are safe.
class ResponseCache {
 public:
  explicit ResponseCache(std::string dir);

  static std::string make_key(const std::string& backend_id, const std::string& model,
                              const std::string& prompt_digest,
                              const std::string& image_digest, int attempt_index);

  std::optional<ModelResponse> lookup(const std::string& backend_id,
                                      const std::string& key) const;
  void store(const std::string& backend_id, const std::string& key,
             const ModelResponse& r);
  // Replay: throws ReplayError naming the key on a miss.
  ModelResponse require(const std::string& backend_id, const std::string& key) const;

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
};

// Raw transport callable: returns response text, throws TransportError /
// CredentialError. The production implementation speaks the chat-completion
// HTTP protocol; tests may substitute anything.
using Transport =
    std::function<std::string(const BackendConfig&, const std::string& prompt_text,
                              const std::vector<uint8_t>& png_bytes)>;

Transport http_transport();

class Backend {
 public:
  Backend(BackendConfig config, ResponseCache* cache, Clock& clock = real_clock(),
          Transport transport = {});

  // Serves from the cache when possible; otherwise runs the mock policy or the
  // remote transport with retries + exponential backoff, then stores the
  // result. `window` supplies the trajectory for mock policies.
  ModelResponse query(const PromptInstance& prompt, const ChartImage& image,
                      int attempt_index, const PredictionWindow* window = nullptr,
                      bool offline = false);

  const BackendConfig& config() const { return config_; }
  int remote_calls() const { return remote_calls_; }

 private:
  BackendConfig config_;
  ResponseCache* cache_;
  Clock& clock_;
  Transport transport_;
  std::unique_ptr<RateLimiter> limiter_;
  int remote_calls_ = 0;
};

}  // namespace egfr
