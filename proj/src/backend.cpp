#include "egfr/backend.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "egfr/digest.hpp"
#include "egfr/numfmt.hpp"

namespace egfr {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::optional<MockPolicyKind> parse_mock_policy(const std::string& name) {
  if (name == "persistence") return MockPolicyKind::persistence;
  if (name == "linear") return MockPolicyKind::linear;
  if (name == "noisy") return MockPolicyKind::noisy;
  if (name == "malformed") return MockPolicyKind::malformed;
  return std::nullopt;
}

std::string mock_sentence(long next_day_diff, double value) {
  return "The most likely predicted value for the next " +
         std::to_string(next_day_diff) + " days is " + format_double(value) +
         " mL/min/1.73m².";
}

namespace {

double linear_fit_at_target(const PredictionWindow& window) {
  if (window.observed.size() < 2)
    throw PolicyError("linear mock policy needs at least 2 observed visits");
  const Date d0 = window.observed.front().date;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(window.observed.size());
  for (const auto& v : window.observed) {
    double x = double(day_diff(v.date, d0));
    sx += x;
    sy += v.egfr;
    sxx += x * x;
    sxy += x * v.egfr;
  }
  double denom = n * sxx - sx * sx;
  double slope = denom != 0 ? (n * sxy - sx * sy) / denom : 0.0;
  double intercept = (sy - slope * sx) / n;
  double xt = double(day_diff(window.target.date, d0));
  return intercept + slope * xt;
}

}  // namespace

std::string mock_predict(const MockPolicy& policy, const PredictionWindow& window,
                         int attempt_index) {
  switch (policy.kind) {
    case MockPolicyKind::persistence:
      return mock_sentence(window.next_day_diff, window.observed.back().egfr);
    case MockPolicyKind::linear:
      return mock_sentence(window.next_day_diff, linear_fit_at_target(window));
    case MockPolicyKind::noisy: {
      double base = linear_fit_at_target(window);
      // Noise keyed by (seed, window, attempt) so each attempt differs but
      // every rerun reproduces it.
      uint64_t h = std::hash<std::string>{}(window.id());
      std::mt19937_64 rng(policy.seed ^ h ^ (uint64_t(attempt_index) << 32));
      std::normal_distribution<double> noise(0.0, policy.sigma);
      return mock_sentence(window.next_day_diff, base + noise(rng));
    }
    case MockPolicyKind::malformed:
      return "The trajectory is concerning and warrants close clinical follow-up.";
  }
  throw PolicyError("unknown mock policy");
}

Clock& real_clock() {
  struct RealClock : Clock {
    double now() override {
      return std::chrono::duration<double>(
                 std::chrono::steady_clock::now().time_since_epoch())
          .count();
    }
    void sleep(double seconds) override {
      std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }
  };
  static RealClock c;
  return c;
}

RateLimiter::RateLimiter(double per_minute, Clock& clock)
    : per_minute_(per_minute), clock_(clock) {
  if (per_minute <= 0) throw ConfigError("rate limit must be > 0 requests/minute");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    double now = clock_.now();
    while (!recent_.empty() && now - recent_.front() >= 60.0) recent_.pop_front();
    if (double(recent_.size()) < per_minute_) {
      recent_.push_back(now);
      return;
    }
    double wait = 60.0 - (now - recent_.front());
    lock.unlock();
    clock_.sleep(std::max(wait, 1e-3));
    lock.lock();
  }
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

std::string ResponseCache::make_key(const std::string& backend_id,
                                    const std::string& model,
                                    const std::string& prompt_digest,
                                    const std::string& image_digest,
                                    int attempt_index) {
  return sha256_hex(backend_id + "\n" + model + "\n" + prompt_digest + "\n" +
                    image_digest + "\n" + std::to_string(attempt_index));
}

std::optional<ModelResponse> ResponseCache::lookup(const std::string& backend_id,
                                                   const std::string& key) const {
  fs::path p = fs::path(dir_) / backend_id / (key + ".json");
  std::ifstream f(p);
  if (!f) return std::nullopt;
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw IoError("corrupt cache entry: " + p.string());
  ModelResponse r;
  r.backend_id = j.at("backend_id");
  r.prompt_digest = j.at("prompt_digest");
  r.image_digest = j.at("image_digest");
  r.attempt_index = j.at("attempt_index");
  r.raw_text = j.at("raw_text");
  r.received_unix = j.at("received_unix");
  r.status = j.at("status");
  return r;
}

void ResponseCache::store(const std::string& backend_id, const std::string& key,
                          const ModelResponse& r) {
  fs::path d = fs::path(dir_) / backend_id;
  fs::create_directories(d);
  json j = {{"backend_id", r.backend_id},     {"prompt_digest", r.prompt_digest},
            {"image_digest", r.image_digest}, {"attempt_index", r.attempt_index},
            {"raw_text", r.raw_text},         {"received_unix", r.received_unix},
            {"status", r.status}};
  fs::path tmp = d / (key + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream f(tmp);
    if (!f) throw IoError("cannot write cache entry: " + tmp.string());
    f << j.dump(2) << '\n';
  }
  fs::rename(tmp, d / (key + ".json"));
}

ModelResponse ResponseCache::require(const std::string& backend_id,
                                     const std::string& key) const {
  auto r = lookup(backend_id, key);
  if (!r)
    throw ReplayError("cache miss during replay: " + backend_id + "/" + key);
  return *r;
}

Backend::Backend(BackendConfig config, ResponseCache* cache, Clock& clock,
                 Transport transport)
    : config_(std::move(config)),
      cache_(cache),
      clock_(clock),
      transport_(std::move(transport)) {
  if (config_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (config_.kind == BackendKind::remote && !transport_)
    transport_ = http_transport();
  limiter_ = std::make_unique<RateLimiter>(config_.rate_per_minute, clock_);
}

ModelResponse Backend::query(const PromptInstance& prompt, const ChartImage& image,
                             int attempt_index, const PredictionWindow* window,
                             bool offline) {
  if (attempt_index < 1) throw ConfigError("attempt_index must be >= 1");
  const std::string prompt_digest = sha256_hex(prompt.rendered_text);
  const std::string key = ResponseCache::make_key(
      config_.backend_id, config_.model, prompt_digest, image.digest, attempt_index);

  if (cache_) {
    if (auto hit = cache_->lookup(config_.backend_id, key)) return *hit;
  }

  ModelResponse r;
  r.backend_id = config_.backend_id;
  r.prompt_digest = prompt_digest;
  r.image_digest = image.digest;
  r.attempt_index = attempt_index;

  if (config_.kind == BackendKind::mock) {
    if (!window)
      throw PolicyError("mock backend '" + config_.backend_id +
                        "' needs the prediction window");
    r.raw_text = mock_predict(config_.mock, *window, attempt_index);
    r.received_unix = 0;
  } else {
    if (offline)
      throw PolicyError("offline mode: remote query to '" + config_.backend_id +
                        "' not in cache");
    auto png = encode_png(image.image);
    double backoff = 0.5;
    int attempt = 0;
    for (;;) {
      limiter_->acquire();
      ++remote_calls_;
      try {
        r.raw_text = transport_(config_, prompt.rendered_text, png);
        break;
      } catch (const CredentialError&) {
        throw;  // never retried
      } catch (const TransportError& e) {
        if (attempt >= config_.max_retries)
          throw TransportError(std::string(e.what()) + " (retries exhausted, cell " +
                               prompt.window_id + "/" +
                               std::to_string(prompt.template_id) + "/" +
                               config_.backend_id + "/" +
                               std::to_string(attempt_index) + ")");
        clock_.sleep(backoff);
        backoff *= 2;
        ++attempt;
      }
    }
    r.received_unix = int64_t(std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                                  .count());
  }

  if (cache_) cache_->store(config_.backend_id, key, r);
  return r;
}

}  // namespace egfr
