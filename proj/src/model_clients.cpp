#include "semgate/model_clients.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <ctime>
#include <regex>
#include <set>

#include "httplib.h"
#include "semgate/content_hash.hpp"
#include "semgate/text.hpp"

namespace semgate {
namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string base;  // scheme://host:port
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw TransportError("malformed endpoint URL '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpHeaders auth_headers(const ClientConfig& config) {
  HttpHeaders headers;
  if (const std::string key = config.api_key(); !key.empty()) {
    headers.emplace_back("Authorization", "Bearer " + key);
  }
  return headers;
}

json parse_body(const HttpResponse& response, std::string_view what) {
  try {
    return json::parse(response.body);
  } catch (const json::exception& e) {
    throw TransportError(std::string(what) + ": response is not JSON: " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_score(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

// ---------------------------------------------------------------------------

void ClientConfig::validate() const {
  if (timeout.count() <= 0) throw DomainError("timeout", "must be positive");
  if (max_retries < 0) throw DomainError("max_retries", "must be non-negative");
  if (backoff.count() < 0) throw DomainError("backoff", "must be non-negative");
}

std::string ClientConfig::api_key() const {
  if (api_key_env.empty()) return {};
  const char* v = std::getenv(api_key_env.c_str());
  return v != nullptr ? std::string(v) : std::string();
}

ClientConfig ClientConfig::from_env(std::string_view prefix) { return from_env(prefix, ClientConfig{}); }

ClientConfig ClientConfig::from_env(std::string_view prefix, ClientConfig defaults) {
  const std::string p(prefix);
  if (const char* endpoint = std::getenv((p + "_ENDPOINT").c_str()); endpoint != nullptr) {
    defaults.endpoint = endpoint;
  }
  defaults.api_key_env = p + "_API_KEY";
  return defaults;
}

HttpResponse HttplibTransport::post_json(const std::string& url, const std::string& body,
                                         const HttpHeaders& headers,
                                         std::chrono::milliseconds timeout) {
  const ParsedUrl parsed = split_url(url);
  httplib::Client client(parsed.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(parsed.path, h, body, "application/json");
  if (!res) {
    throw TransportError("POST " + url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("POST " + url + " returned HTTP " + std::to_string(res->status));
  }
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

HashingEmbedder::HashingEmbedder(int dim) : dim_(dim) {
  if (dim <= 0) throw DomainError("dim", "embedding dimension must be positive");
}

std::string HashingEmbedder::model_name() const { return "hashing-bow-" + std::to_string(dim_); }

Eigen::VectorXd HashingEmbedder::embed_one(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  auto tokens = text::words(text);
  if (tokens.empty()) tokens.emplace_back(text);
  for (const auto& token : tokens) {
    const std::uint64_t h = fnv1a64(token);
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
    v(bucket) += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  const double norm = v.norm();
  if (norm > 0) {
    v /= norm;
  } else {
    // Every token cancelled out; fall back to the whole-text bucket.
    const std::uint64_t h = fnv1a64(text);
    v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_))) = 1.0;
  }
  return v;
}

std::vector<Eigen::VectorXd> HashingEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw DomainError("texts", "nothing to embed");
  ++calls_;
  std::vector<Eigen::VectorXd> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

HttpEmbedder::HttpEmbedder(ClientConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
}

std::vector<Eigen::VectorXd> HttpEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw DomainError("texts", "nothing to embed");
  const json request = {{"model", config_.model_name}, {"input", json(std::vector<std::string>(texts.begin(), texts.end()))}};
  const std::string body = request.dump();
  const HttpResponse response = with_retries(config_, [&] {
    ++calls_;
    return transport_->post_json(config_.endpoint, body, auth_headers(config_), config_.timeout);
  });
  const json parsed = parse_body(response, "embed");
  const auto& data = parsed.contains("data") ? parsed["data"] : json();
  if (!data.is_array() || data.size() != texts.size()) {
    throw TransportError("embed: expected " + std::to_string(texts.size()) + " embeddings");
  }
  std::vector<Eigen::VectorXd> out(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t index = data[i].value("index", i);
    if (index >= out.size()) throw TransportError("embed: index out of range");
    const auto values = data[i].at("embedding").get<std::vector<double>>();
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    if (const double norm = v.norm(); norm > 0) v /= norm;
    out[index] = std::move(v);
  }
  for (const auto& v : out) {
    if (v.size() == 0 || v.size() != out.front().size()) {
      throw TransportError("embed: inconsistent embedding dimensions");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_name(Rubric rubric) {
  switch (rubric) {
    case Rubric::Factuality: return "factuality";
    case Rubric::Deduction: return "deduction";
    case Rubric::Consistency: return "consistency";
  }
  return "unknown";
}

double OverlapJudge::overlap(std::string_view left, std::string_view right) {
  const auto lw = text::words(left);
  const auto rw = text::words(right);
  const std::set<std::string> a(lw.begin(), lw.end());
  const std::set<std::string> b(rw.begin(), rw.end());
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& w : a) common += b.count(w);
  return static_cast<double>(common) / static_cast<double>(std::min(a.size(), b.size()));
}

std::string OverlapJudge::complete(const JudgeRequest& request) {
  ++calls_;
  return "<score>" + format_score(overlap(request.left, request.right)) + "</score>";
}

HttpJudge::HttpJudge(ClientConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
}

std::string HttpJudge::complete(const JudgeRequest& request) {
  const json body = {{"model", config_.model_name},
                     {"temperature", 0.0},
                     {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  const std::string payload = body.dump();
  const HttpResponse response = with_retries(config_, [&] {
    ++calls_;
    return transport_->post_json(config_.endpoint, payload, auth_headers(config_), config_.timeout);
  });
  const json parsed = parse_body(response, "judge");
  try {
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    // A well-formed HTTP answer without content is treated like an unparseable score.
    return {};
  }
}

std::string JudgePrompts::render(Rubric rubric, std::string_view left, std::string_view right) const {
  std::string question;
  std::string left_label;
  std::string right_label;
  switch (rubric) {
    case Rubric::Factuality:
      left_label = "Evidence";
      right_label = "Reasoning";
      question = "Is every factual claim in the reasoning supported by the evidence?";
      break;
    case Rubric::Deduction:
      left_label = "Reasoning";
      right_label = "Decision";
      question = "Does the decision follow logically from the reasoning?";
      break;
    case Rubric::Consistency:
      left_label = "Evidence";
      right_label = "Decision";
      question = "Is the decision consistent with the information in the evidence?";
      break;
  }
  std::string p = "[judge-prompt " + version + " / " + std::string(to_name(rubric)) + "]\n";
  p += question + "\n\n";
  p += "<" + left_label + ">\n" + std::string(left) + "\n</" + left_label + ">\n\n";
  p += "<" + right_label + ">\n" + std::string(right) + "\n</" + right_label + ">\n\n";
  p += "Answer with a single decimal between 0 and 1, where 1 means fully supported, inside "
       "<score></score>.";
  return p;
}

std::string JudgePrompts::reask_suffix() const {
  return "\n\nYour previous answer did not contain a valid score. Reply with only "
         "<score>x</score> where x is a decimal between 0 and 1.";
}

std::optional<double> extract_score(std::string_view response, double scale) {
  static const std::regex kScore(R"(<score>\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*</score>)",
                                 std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(response.begin(), response.end(), m, kScore)) return std::nullopt;
  const std::string token = m[1].str();
  const char* first = token.c_str();
  if (*first == '+') ++first;
  double value = 0.0;
  const auto res = std::from_chars(first, token.c_str() + token.size(), value);
  if (res.ec != std::errc{} || !(scale > 0)) return std::nullopt;
  value /= scale;
  if (!(value >= 0.0 && value <= 1.0)) return std::nullopt;
  return value;
}

// ---------------------------------------------------------------------------

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::ifstream in(*path_); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      try {
        const json entry = json::parse(line);
        index_[entry.at("key").get<std::string>()] = entry.at("value");
      } catch (const json::exception&) {
        // A torn final line from an interrupted run; the entry is recomputed.
      }
    }
  }
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  out_.open(*path_, std::ios::app);
  if (!out_) throw DomainError("cache", "cannot open " + path_->string() + " for append");
}

std::optional<json> ScoreCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  return std::nullopt;
}

void ScoreCache::put(const std::string& key, const json& value) {
  std::lock_guard lock(mutex_);
  index_[key] = value;
  if (out_.is_open()) {
    out_ << json{{"key", key}, {"value", value}, {"created_at", utc_timestamp()}}.dump() << '\n';
    out_.flush();
  }
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mutex_);
  return index_.size();
}

// ---------------------------------------------------------------------------

Judge::Judge(JudgeClient& client, ScoreCache* cache, JudgePrompts prompts, double score_scale)
    : client_(client), cache_(cache), prompts_(std::move(prompts)), score_scale_(score_scale) {
  if (!(score_scale > 0)) throw DomainError("score_scale", "must be positive");
}

JudgeVerdict Judge::judge(std::string_view left, std::string_view right, Rubric rubric) const {
  if (text::trim(left).empty() || text::trim(right).empty()) {
    throw DomainError(std::string(to_name(rubric)), "judge inputs must be non-empty");
  }
  const std::string key = content_key({"judge", left, right, to_name(rubric), prompts_.version,
                                       client_.model_name()});
  if (cache_ != nullptr) {
    if (auto hit = cache_->get(key); hit && hit->is_number()) {
      return {hit->get<double>(), key};
    }
  }
  JudgeRequest request{rubric, std::string(left), std::string(right),
                       prompts_.render(rubric, left, right), prompts_.version, false};
  auto score = extract_score(client_.complete(request), score_scale_);
  if (!score) {
    request.reask = true;
    request.prompt += prompts_.reask_suffix();
    score = extract_score(client_.complete(request), score_scale_);
  }
  if (!score) {
    throw UnavailableError("judge returned no valid " + std::string(to_name(rubric)) +
                           " score after re-ask");
  }
  if (cache_ != nullptr) cache_->put(key, *score);
  return {*score, key};
}

// ---------------------------------------------------------------------------

std::vector<RolloutRecord> load_rollout_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("rollouts", "cannot open " + path.string());
  std::vector<RolloutRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({Date::parse(j.at("date").get<std::string>()), j.at("belief_id").get<int>(),
                     j.at("raw").get<std::string>()});
    } catch (const json::exception& e) {
      throw DomainError("rollouts:" + std::to_string(line_no), e.what());
    }
  }
  return out;
}

ReplayGenerator::ReplayGenerator(std::vector<RolloutRecord> records) {
  for (auto& r : records) {
    outputs_[{r.date.to_string(), r.belief_id}].push_back(std::move(r.raw));
  }
}

std::vector<std::string> ReplayGenerator::generate(const AugmentedSample& prompt, int n,
                                                   double /*temperature*/) {
  if (n < 1) throw DomainError("n", "must be at least 1");
  std::lock_guard lock(mutex_);
  ++calls_;
  const auto key = std::make_pair(prompt.context->date.to_string(), prompt.belief.id);
  const auto it = outputs_.find(key);
  const std::size_t available = it == outputs_.end() ? 0 : it->second.size();
  std::size_t& cursor = cursor_[key];
  if (cursor + static_cast<std::size_t>(n) > available) {
    throw ReplayExhaustedError("replay log has " + std::to_string(available - cursor) +
                               " unused outputs for " + prompt.key() + ", " + std::to_string(n) +
                               " requested");
  }
  std::vector<std::string> out(it->second.begin() + static_cast<std::ptrdiff_t>(cursor),
                               it->second.begin() + static_cast<std::ptrdiff_t>(cursor + n));
  cursor += static_cast<std::size_t>(n);
  return out;
}

HttpGenerator::HttpGenerator(ClientConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
}

std::vector<std::string> HttpGenerator::generate(const AugmentedSample& prompt, int n,
                                                 double temperature) {
  if (n < 1) throw DomainError("n", "must be at least 1");
  const json body = {{"model", config_.model_name},
                     {"n", n},
                     {"temperature", temperature},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt.prompt}}})}};
  const std::string payload = body.dump();
  const HttpResponse response = with_retries(config_, [&] {
    ++calls_;
    return transport_->post_json(config_.endpoint, payload, auth_headers(config_), config_.timeout);
  });
  const json parsed = parse_body(response, "generate");
  std::vector<std::string> out;
  try {
    for (const auto& choice : parsed.at("choices")) {
      out.push_back(choice.at("message").at("content").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("generate: malformed response: ") + e.what());
  }
  if (out.size() != static_cast<std::size_t>(n)) {
    throw TransportError("generate: expected " + std::to_string(n) + " choices, got " +
                         std::to_string(out.size()));
  }
  return out;
}

}  // namespace semgate
