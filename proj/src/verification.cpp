#include "semgate/verification.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <set>

#include "semgate/content_hash.hpp"
#include "semgate/errors.hpp"
#include "semgate/text.hpp"

namespace semgate {
namespace {

bool is_word_byte(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

void collect(std::string_view hay, std::string_view needle, std::vector<Span>& out) {
  if (text::trim(needle).empty()) return;
  std::size_t pos = text::ifind(hay, needle, 0);
  while (pos != std::string_view::npos) {
    const std::size_t end = pos + needle.size();
    const bool left_ok = pos == 0 || !is_word_byte(hay[pos - 1]) || !is_word_byte(needle.front());
    const bool right_ok = end == hay.size() || !is_word_byte(hay[end]) || !is_word_byte(needle.back());
    if (left_ok && right_ok) out.push_back({pos, end});
    pos = text::ifind(hay, needle, pos + 1);
  }
}

std::string decision_text(const TradingDecision& d) {
  std::string out = describe_decision(d);
  return out.empty() ? std::string("hold: no trading signals") : out;
}

}  // namespace

MentionMap locate_mentions(std::string_view briefing, const TradingDecision& decision) {
  MentionMap out;
  for (const auto& s : decision.signals) {
    std::vector<Span> found;
    collect(briefing, s.symbol_code, found);
    if (!text::iequals(s.symbol_name, s.symbol_code)) collect(briefing, s.symbol_name, found);
    std::sort(found.begin(), found.end(), [](const Span& a, const Span& b) {
      return a.start != b.start ? a.start < b.start : a.end > b.end;
    });
    std::vector<Span> kept;
    for (const auto& sp : found) {
      if (kept.empty() || !kept.back().overlaps(sp)) kept.push_back(sp);
    }
    auto& slot = out[s.symbol_code];
    slot.insert(slot.end(), kept.begin(), kept.end());
  }
  return out;
}

void ChunkConfig::validate() const {
  if (window == 0) throw DomainError("chunking.window", "must be positive");
  if (overlap >= window) throw DomainError("chunking.overlap", "must be smaller than the window");
}

std::vector<TextChunk> chunk(std::string_view briefing, const ChunkConfig& config) {
  config.validate();
  std::vector<TextChunk> out;
  const std::size_t n = briefing.size();
  if (n == 0) return out;
  const std::size_t stride = config.window - config.overlap;
  // Never snap so far back that the next start would not advance.
  const std::size_t margin = std::min(config.snap_margin, stride - 1);
  std::size_t start = 0;
  while (true) {
    std::size_t end = std::min(start + config.window, n);
    if (end < n) {
      bool snapped = false;
      if (margin > 0) {
        const std::size_t lo = end - margin;
        const std::size_t nl = briefing.rfind('\n', end - 1);
        if (nl != std::string_view::npos && nl + 1 >= lo && nl + 1 > start) {
          end = nl + 1;
          snapped = true;
        }
      }
      if (!snapped) {
        const std::size_t floored = text::utf8_floor(briefing, end);
        if (floored > start) {
          end = floored;
        } else {
          // Window narrower than one character: take the whole character.
          while (end < n && text::utf8_floor(briefing, end) != end) ++end;
        }
      }
    }
    out.push_back({{start, end}, std::string(briefing.substr(start, end - start))});
    if (end >= n) break;
    std::size_t next = text::utf8_floor(briefing, end - config.overlap);
    if (next <= start) next = end;
    start = next;
  }
  return out;
}

std::vector<TextChunk> chunk(std::string_view briefing, long window, long overlap) {
  if (window <= 0) throw DomainError("chunking.window", "must be positive");
  if (overlap < 0) throw DomainError("chunking.overlap", "must not be negative");
  ChunkConfig c;
  c.window = static_cast<std::size_t>(window);
  c.overlap = static_cast<std::size_t>(overlap);
  return chunk(briefing, c);
}

std::vector<EvidenceCandidate> candidate_chunks(std::span<const TextChunk> chunks,
                                                const MentionMap& mentions) {
  std::vector<EvidenceCandidate> out;
  for (const auto& [symbol, spans] : mentions) {
    for (const auto& c : chunks) {
      const bool hit = std::any_of(spans.begin(), spans.end(), [&](const Span& m) {
        return m.start >= c.span.start && m.end <= c.span.end;
      });
      if (hit) out.push_back({symbol, c});
    }
  }
  return out;
}

std::string EvidencePacket::text() const {
  std::vector<const EvidenceChunk*> ordered;
  for (const auto& c : chunks) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const EvidenceChunk* a, const EvidenceChunk* b) { return a->source_span.start < b->source_span.start; });
  std::string out;
  for (const auto* c : ordered) {
    if (!out.empty()) out += "\n\n";
    out += c->text;
  }
  return out;
}

std::string rollout_output_text(const Rollout& rollout) {
  std::string out = rollout.reasoning.text;
  if (!out.empty()) out += "\n";
  out += describe_decision(rollout.decision);
  return out;
}

EvidencePacket rank_evidence(std::span<const EvidenceCandidate> candidates, const Rollout& rollout,
                             EmbeddingClient& embedder, std::size_t k) {
  EvidencePacket packet;
  packet.decision_ref = rollout.decision;
  if (candidates.empty() || k == 0) return packet;

  // Embed each distinct span once, plus the rollout output at index 0.
  std::vector<std::string> texts{rollout_output_text(rollout)};
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot;
  for (const auto& c : candidates) {
    const auto key = std::make_pair(c.chunk.span.start, c.chunk.span.end);
    if (slot.emplace(key, texts.size()).second) texts.push_back(c.chunk.text);
  }
  const auto vecs = embedder.embed(texts);
  if (vecs.size() != texts.size()) {
    throw TransportError("embedder returned " + std::to_string(vecs.size()) + " vectors for " +
                         std::to_string(texts.size()) + " texts");
  }
  const Eigen::VectorXd& q = vecs.front();

  std::map<std::string, std::vector<EvidenceChunk>> by_symbol;
  for (const auto& c : candidates) {
    const Eigen::VectorXd& v = vecs[slot.at({c.chunk.span.start, c.chunk.span.end})];
    double cos = 0.0;
    const double norms = q.norm() * v.norm();
    if (v.size() == q.size() && norms > 0.0) cos = q.dot(v) / norms;
    by_symbol[c.symbol].push_back({c.chunk.text, c.chunk.span, c.symbol, std::clamp(cos, 0.0, 1.0)});
  }

  const auto better = [](const EvidenceChunk& a, const EvidenceChunk& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    return a.source_span.start < b.source_span.start;
  };
  std::vector<EvidenceChunk> merged;
  for (auto& [symbol, list] : by_symbol) {
    std::stable_sort(list.begin(), list.end(), better);
    if (list.size() > k) list.resize(k);
    merged.insert(merged.end(), list.begin(), list.end());
  }
  std::stable_sort(merged.begin(), merged.end(), better);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto& c : merged) {
    if (!seen.insert({c.source_span.start, c.source_span.end}).second) continue;
    packet.total_token_estimate += text::token_estimate(c.text);
    packet.chunks.push_back(std::move(c));
  }
  return packet;
}

TriangularScores TriangularScores::from_components(double factuality, double deduction, double consistency) {
  const auto check = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(field, "must lie in [0, 1]");
  };
  check(factuality, "factuality");
  check(deduction, "deduction");
  check(consistency, "consistency");
  std::array<double, 3> parts{factuality, deduction, consistency};
  std::sort(parts.begin(), parts.end());
  // Error-free sum followed by one correction step of the division, so the result is the
  // double nearest the true average and independent of argument order.
  const auto two_sum = [](double a, double b, double& err) {
    const double s = a + b;
    const double bb = s - a;
    err = (a - (s - bb)) + (b - bb);
    return s;
  };
  double e1 = 0.0;
  double e2 = 0.0;
  const double partial = two_sum(parts[0], parts[1], e1);
  const double hi = two_sum(partial, parts[2], e2);
  const double lo = e1 + e2;
  double q = hi / 3.0;
  const double rem = std::fma(-3.0, q, hi) + lo;
  q += rem / 3.0;
  return {factuality, deduction, consistency, std::clamp(q, 0.0, 1.0)};
}

TriangularJudgement judge_triangle(const EvidencePacket& evidence, const Rollout& rollout,
                                   const Judge& judge, bool concurrent) {
  if (!rollout.parse_ok) throw DomainError("rollout", "cannot score an unparsed rollout");
  const std::string e = evidence.text();
  const std::string& c = rollout.reasoning.text;
  const std::string d = decision_text(rollout.decision);

  struct Pair {
    Rubric rubric;
    const std::string* left;
    const std::string* right;
  };
  const std::array<Pair, 3> pairs{Pair{Rubric::Factuality, &e, &c}, Pair{Rubric::Deduction, &c, &d},
                                  Pair{Rubric::Consistency, &e, &d}};

  TriangularJudgement out;
  std::array<std::optional<JudgeVerdict>, 3> verdicts;
  std::array<std::future<JudgeVerdict>, 3> pending;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (text::trim(*p.left).empty() || text::trim(*p.right).empty()) {
      out.skipped.push_back(p.rubric);
      continue;
    }
    if (concurrent) {
      pending[i] = std::async(std::launch::async, [&judge, p] { return judge.judge(*p.left, *p.right, p.rubric); });
    } else {
      verdicts[i] = judge.judge(*p.left, *p.right, p.rubric);
    }
  }
  // Wait for every future before rethrowing so no task outlives the references it holds.
  std::exception_ptr failure;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (!pending[i].valid()) continue;
    try {
      verdicts[i] = pending[i].get();
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::array<double, 3> s{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (!verdicts[i]) continue;
    s[i] = verdicts[i]->score;
    out.transcript_ids.push_back(verdicts[i]->cache_key);
  }
  out.scores = TriangularScores::from_components(s[0], s[1], s[2]);
  return out;
}

TriangularScores triangular_score(const EvidencePacket& evidence, const Rollout& rollout, const Judge& judge) {
  return judge_triangle(evidence, rollout, judge).scores;
}

std::vector<std::string> hallucination_flags(std::string_view briefing, const TradingDecision& decision) {
  const MentionMap mentions = locate_mentions(briefing, decision);
  std::vector<std::string> out;
  for (const auto& s : decision.signals) {
    const auto it = mentions.find(s.symbol_code);
    if (it == mentions.end() || it->second.empty()) out.push_back(s.symbol_code);
  }
  return out;
}

void VerificationConfig::validate() const {
  chunking.validate();
  if (top_k == 0) throw DomainError("verification.top_k", "must be positive");
}

nlohmann::json VerificationConfig::to_json() const {
  nlohmann::ordered_json j;
  j["window"] = chunking.window;
  j["overlap"] = chunking.overlap;
  j["snap_margin"] = chunking.snap_margin;
  j["top_k"] = top_k;
  return nlohmann::json::parse(j.dump());
}

VerificationOutcome verify(std::string_view briefing, const Rollout& rollout, const VerificationConfig& config,
                           EmbeddingClient& embedder, const Judge& judge) {
  config.validate();
  VerificationOutcome out;
  try {
    const MentionMap mentions = locate_mentions(briefing, rollout.decision);
    const auto chunks = chunk(briefing, config.chunking);
    const auto candidates = candidate_chunks(chunks, mentions);
    VerificationReport report;
    report.evidence = rank_evidence(candidates, rollout, embedder, config.top_k);
    for (const auto& s : rollout.decision.signals) {
      if (mentions.at(s.symbol_code).empty()) report.hallucinated_symbols.push_back(s.symbol_code);
    }
    auto tri = judge_triangle(report.evidence, rollout, judge, config.concurrent_judges);
    report.scores = tri.scores;
    report.judge_transcript_ids = std::move(tri.transcript_ids);
    report.skipped_components = std::move(tri.skipped);
    out.report = std::move(report);
  } catch (const TransportError& e) {
    out.unavailable_reason = std::string("transport: ") + e.what();
  } catch (const UnavailableError& e) {
    out.unavailable_reason = std::string("judge: ") + e.what();
  }
  return out;
}

std::string verification_key(std::string_view briefing, const Rollout& rollout, const VerificationConfig& config,
                             const EmbeddingClient& embedder, const Judge& judge) {
  const std::string cfg = config.to_json().dump();
  const std::string emb = embedder.model_name();
  const std::string jm = judge.model_name();
  return content_key({"verify", briefing, rollout.raw, cfg, emb, jm, judge.prompts().version});
}

nlohmann::json to_json(const TriangularScores& s) {
  return {{"factuality", s.factuality}, {"deduction", s.deduction}, {"consistency", s.consistency}, {"mean", s.mean}};
}

nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json chunks = nlohmann::json::array();
  for (const auto& c : r.evidence.chunks) {
    chunks.push_back({{"symbol", c.symbol},
                      {"start", c.source_span.start},
                      {"end", c.source_span.end},
                      {"relevance", c.relevance},
                      {"text", c.text}});
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto rb : r.skipped_components) skipped.push_back(to_name(rb));
  return {{"scores", to_json(r.scores)},
          {"evidence", chunks},
          {"evidence_tokens", r.evidence.total_token_estimate},
          {"decision", to_json(r.evidence.decision_ref)},
          {"hallucinated_symbols", r.hallucinated_symbols},
          {"judge_transcript_ids", r.judge_transcript_ids},
          {"skipped_components", skipped}};
}

VerificationReport verification_report_from_json(const nlohmann::json& j) {
  VerificationReport r;
  const auto& s = j.at("scores");
  r.scores = TriangularScores::from_components(s.at("factuality").get<double>(), s.at("deduction").get<double>(),
                                               s.at("consistency").get<double>());
  for (const auto& c : j.at("evidence")) {
    r.evidence.chunks.push_back({c.at("text").get<std::string>(),
                                 {c.at("start").get<std::size_t>(), c.at("end").get<std::size_t>()},
                                 c.at("symbol").get<std::string>(),
                                 c.at("relevance").get<double>()});
  }
  r.evidence.total_token_estimate = j.at("evidence_tokens").get<std::size_t>();
  r.evidence.decision_ref = decision_from_json(j.at("decision"));
  r.hallucinated_symbols = j.at("hallucinated_symbols").get<std::vector<std::string>>();
  r.judge_transcript_ids = j.at("judge_transcript_ids").get<std::vector<std::string>>();
  for (const auto& name : j.at("skipped_components")) {
    const auto n = name.get<std::string>();
    for (const auto rb : {Rubric::Factuality, Rubric::Deduction, Rubric::Consistency}) {
      if (to_name(rb) == n) r.skipped_components.push_back(rb);
    }
  }
  return r;
}

}  // namespace semgate
