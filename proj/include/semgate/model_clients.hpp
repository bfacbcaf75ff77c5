#pragma once

// External model services (policy generator, judge, embedder) behind small interfaces,
// with deterministic offline stubs and a persistent content-keyed cache.
//
// Secrets are only ever read from environment variables named in ClientConfig.

#include <Eigen/Core>

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semgate/dataset_builder.hpp"
#include "semgate/date.hpp"
#include "semgate/errors.hpp"

namespace semgate {

struct ClientConfig {
  std::string endpoint;  ///< full URL, e.g. http://127.0.0.1:8080/v1/embeddings
  std::chrono::milliseconds timeout{30'000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{250};  ///< doubled after every failed attempt
  std::string api_key_env;                 ///< name of the env var holding the token
  std::string model_name;

  void validate() const;
  /// Token from the environment, empty when unset.
  std::string api_key() const;
  /// Reads <PREFIX>_ENDPOINT and names <PREFIX>_API_KEY as the secret source.
  static ClientConfig from_env(std::string_view prefix);
  static ClientConfig from_env(std::string_view prefix, ClientConfig defaults);
};

// ---------------------------------------------------------------------------
// Transport

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws TransportError when no response was received or the status is not 2xx.
  virtual HttpResponse post_json(const std::string& url, const std::string& body,
                                 const HttpHeaders& headers, std::chrono::milliseconds timeout) = 0;
};

/// Plain-HTTP transport backed by cpp-httplib.
class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post_json(const std::string& url, const std::string& body, const HttpHeaders& headers,
                         std::chrono::milliseconds timeout) override;
};

/// Runs `call`, retrying TransportError up to config.max_retries times with exponential
/// backoff. The final failure is rethrown as TransportError.
template <typename Call>
auto with_retries(const ClientConfig& config, Call&& call) -> decltype(call()) {
  auto delay = config.backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      return call();
    } catch (const TransportError& e) {
      if (attempt >= config.max_retries) {
        throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt + 1) +
                             " attempts)");
      }
    }
    if (delay.count() > 0) {
      std::this_thread::sleep_for(delay);
    }
    delay *= 2;
  }
}

// ---------------------------------------------------------------------------
// Embeddings

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  /// One unit-norm vector per text, all of the same dimension.
  virtual std::vector<Eigen::VectorXd> embed(std::span<const std::string> texts) = 0;
  virtual std::string model_name() const = 0;
  /// Number of embed() invocations that reached the backend.
  virtual std::size_t calls() const = 0;
};

/// Offline stub: hashed bag-of-words projection. Each lowercased alphanumeric word is
/// hashed with 64-bit FNV-1a; the bucket is hash % dim and the sign is the top hash bit.
/// Text without words is hashed whole as a single token. Output is L2-normalized.
class HashingEmbedder final : public EmbeddingClient {
 public:
  explicit HashingEmbedder(int dim = 256);
  std::vector<Eigen::VectorXd> embed(std::span<const std::string> texts) override;
  std::string model_name() const override;
  std::size_t calls() const override { return calls_.load(); }

  Eigen::VectorXd embed_one(std::string_view text) const;

 private:
  int dim_;
  std::atomic<std::size_t> calls_{0};
};

/// JSON adapter: POST {"model", "input": [...]} -> {"data": [{"index", "embedding"}]}.
class HttpEmbedder final : public EmbeddingClient {
 public:
  HttpEmbedder(ClientConfig config, std::shared_ptr<HttpTransport> transport);
  std::vector<Eigen::VectorXd> embed(std::span<const std::string> texts) override;
  std::string model_name() const override { return config_.model_name; }
  std::size_t calls() const override { return calls_.load(); }

 private:
  ClientConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::atomic<std::size_t> calls_{0};
};

std::uint64_t fnv1a64(std::string_view s);

// ---------------------------------------------------------------------------
// Judge

enum class Rubric { Factuality, Deduction, Consistency };

std::string_view to_name(Rubric rubric);

struct JudgeRequest {
  Rubric rubric = Rubric::Factuality;
  std::string left;
  std::string right;
  std::string prompt;  ///< rendered template, the only text a remote judge sees
  std::string prompt_version;
  bool reask = false;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  /// Raw judge response text; the score is extracted by the caller.
  virtual std::string complete(const JudgeRequest& request) = 0;
  virtual std::string model_name() const = 0;
  virtual std::size_t calls() const = 0;
};

/// Offline stub: overlap coefficient |A ∩ B| / min(|A|, |B|) of the two word sets,
/// answered in the same <score> tag a remote judge uses.
class OverlapJudge final : public JudgeClient {
 public:
  std::string complete(const JudgeRequest& request) override;
  std::string model_name() const override { return "overlap-stub-v1"; }
  std::size_t calls() const override { return calls_.load(); }

  static double overlap(std::string_view left, std::string_view right);

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Chat-completions adapter: POST {"model", "messages": [{"role": "user", "content": prompt}]}
/// -> {"choices": [{"message": {"content": "..."}}]}.
class HttpJudge final : public JudgeClient {
 public:
  HttpJudge(ClientConfig config, std::shared_ptr<HttpTransport> transport);
  std::string complete(const JudgeRequest& request) override;
  std::string model_name() const override { return config_.model_name; }
  std::size_t calls() const override { return calls_.load(); }

 private:
  ClientConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::atomic<std::size_t> calls_{0};
};

/// Versioned judge prompt templates. The rendered prompt contains only the pair under
/// evaluation and asks for a decimal in [0, 1] inside <score></score>.
struct JudgePrompts {
  std::string version = "v1";
  std::string render(Rubric rubric, std::string_view left, std::string_view right) const;
  std::string reask_suffix() const;
};

/// Parses the first <score>x</score>, divides by `scale`, and rejects values outside [0, 1].
std::optional<double> extract_score(std::string_view response, double scale = 1.0);

// ---------------------------------------------------------------------------
// Cache

/// Append-only JSON-lines key/value store with an in-memory index. Safe for concurrent use;
/// identical keys carry identical values, so the last writer wins harmlessly.
class ScoreCache {
 public:
  ScoreCache() = default;  ///< memory only
  explicit ScoreCache(std::filesystem::path path);

  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& value);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, nlohmann::json> index_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
};

struct JudgeVerdict {
  double score = 0.0;
  std::string cache_key;  ///< doubles as the transcript id
};

/// Pairwise judge with caching and one structured re-ask.
class Judge {
 public:
  Judge(JudgeClient& client, ScoreCache* cache = nullptr, JudgePrompts prompts = {},
        double score_scale = 1.0);

  /// Throws DomainError on empty inputs, TransportError when the backend is unreachable and
  /// UnavailableError when no valid score was returned after the re-ask.
  JudgeVerdict judge(std::string_view left, std::string_view right, Rubric rubric) const;

  double judge_pair(std::string_view left, std::string_view right, Rubric rubric) const {
    return judge(left, right, rubric).score;
  }

  const JudgePrompts& prompts() const { return prompts_; }
  std::string model_name() const { return client_.model_name(); }

 private:
  JudgeClient& client_;
  ScoreCache* cache_;
  JudgePrompts prompts_;
  double score_scale_;
};

// ---------------------------------------------------------------------------
// Generator

/// One recorded policy output.
struct RolloutRecord {
  Date date;
  int belief_id = 0;
  std::string raw;
};

/// Reads rollout logs: one JSON object per line with at least date, belief_id and raw.
std::vector<RolloutRecord> load_rollout_log(const std::filesystem::path& path);

class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::vector<std::string> generate(const AugmentedSample& prompt, int n,
                                            double temperature) = 0;
  virtual std::size_t calls() const = 0;
};

/// Serves recorded outputs per (date, belief) in log order.
class ReplayGenerator final : public GeneratorClient {
 public:
  explicit ReplayGenerator(std::vector<RolloutRecord> records);
  /// Throws ReplayExhaustedError when fewer than n outputs remain for the sample.
  std::vector<std::string> generate(const AugmentedSample& prompt, int n, double temperature) override;
  std::size_t calls() const override { return calls_.load(); }

 private:
  std::mutex mutex_;
  std::map<std::pair<std::string, int>, std::vector<std::string>> outputs_;
  std::map<std::pair<std::string, int>, std::size_t> cursor_;
  std::atomic<std::size_t> calls_{0};
};

/// Chat-completions adapter requesting n choices at the given temperature.
class HttpGenerator final : public GeneratorClient {
 public:
  HttpGenerator(ClientConfig config, std::shared_ptr<HttpTransport> transport);
  std::vector<std::string> generate(const AugmentedSample& prompt, int n, double temperature) override;
  std::size_t calls() const override { return calls_.load(); }

 private:
  ClientConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace semgate
