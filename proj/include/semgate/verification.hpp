#pragma once

// Two-stage verification of a rollout against its briefing.
//
// Stage 1 locates every mention of each selected symbol, keeps the chunks containing a
// mention, and ranks them by embedding similarity to the rollout output (top-k per symbol).
// Stage 2 asks the judge for three pairwise scores over evidence E, reasoning c and
// decision d: factuality (E, c), deduction (c, d) and consistency (E, d). Their mean is s.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semgate/decision_codec.hpp"
#include "semgate/model_clients.hpp"

namespace semgate {

/// Half-open byte range [start, end) into a briefing.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

using MentionMap = std::map<std::string, std::vector<Span>>;

/// Case-insensitive occurrences of each ticker and, when given, each symbol name. A match
/// must not be glued to neighbouring letters or digits. Spans are ascending and
/// non-overlapping; symbols without mentions map to an empty list.
MentionMap locate_mentions(std::string_view briefing, const TradingDecision& decision);

struct ChunkConfig {
  std::size_t window = 1600;     ///< bytes
  std::size_t overlap = 200;     ///< bytes shared by consecutive chunks
  std::size_t snap_margin = 160; ///< how far back a chunk end may move to reach a line break

  void validate() const;
};

struct TextChunk {
  Span span;
  std::string text;
};

/// Ordered covering windows. Ends snap back to just after a newline when one lies within
/// the snap margin, and never split a UTF-8 sequence.
std::vector<TextChunk> chunk(std::string_view briefing, const ChunkConfig& config);
std::vector<TextChunk> chunk(std::string_view briefing, long window, long overlap);

struct EvidenceCandidate {
  std::string symbol;
  TextChunk chunk;
};

/// Chunks that contain at least one mention, listed once per symbol.
std::vector<EvidenceCandidate> candidate_chunks(std::span<const TextChunk> chunks,
                                                const MentionMap& mentions);

struct EvidenceChunk {
  std::string text;
  Span source_span;
  std::string symbol;
  double relevance = 0.0;  ///< clamped cosine similarity, in [0, 1]
};

struct EvidencePacket {
  std::vector<EvidenceChunk> chunks;  ///< descending relevance, ties by earlier start
  TradingDecision decision_ref;
  std::size_t total_token_estimate = 0;

  /// Chunks in briefing order, separated by blank lines.
  std::string text() const;
};

/// Text the evidence is ranked against: reasoning followed by the decision description.
std::string rollout_output_text(const Rollout& rollout);

/// Throws TransportError if the embedder fails (after its own retries).
EvidencePacket rank_evidence(std::span<const EvidenceCandidate> candidates, const Rollout& rollout,
                             EmbeddingClient& embedder, std::size_t k);

struct TriangularScores {
  double factuality = 0.0;
  double deduction = 0.0;
  double consistency = 0.0;
  double mean = 0.0;

  /// Validates each component in [0, 1]. The mean sums the components in ascending order,
  /// which makes it an exactly symmetric function of the three.
  static TriangularScores from_components(double factuality, double deduction, double consistency);
};

struct TriangularJudgement {
  TriangularScores scores;
  std::vector<std::string> transcript_ids;
  /// Components scored 0 without a judge call because one side of the pair was empty
  /// (no evidence located, or no reasoning).
  std::vector<Rubric> skipped;
};

/// Requires rollout.parse_ok. Issues up to three judge calls, concurrently when asked.
TriangularJudgement judge_triangle(const EvidencePacket& evidence, const Rollout& rollout,
                                   const Judge& judge, bool concurrent = true);
TriangularScores triangular_score(const EvidencePacket& evidence, const Rollout& rollout,
                                  const Judge& judge);

/// Decision symbols with no mention in the briefing.
std::vector<std::string> hallucination_flags(std::string_view briefing, const TradingDecision& decision);

/// Corpus-level hallucination rate: flagged symbols / selected symbols.
struct HallucinationTally {
  std::size_t flagged = 0;
  std::size_t total = 0;

  void add(std::size_t flagged_symbols, std::size_t selected_symbols) {
    flagged += flagged_symbols;
    total += selected_symbols;
  }
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(total); }
};

struct VerificationConfig {
  ChunkConfig chunking;
  std::size_t top_k = 3;
  bool concurrent_judges = true;

  void validate() const;
  nlohmann::json to_json() const;
};

struct VerificationReport {
  TriangularScores scores;
  EvidencePacket evidence;
  std::vector<std::string> hallucinated_symbols;
  std::vector<std::string> judge_transcript_ids;
  std::vector<Rubric> skipped_components;
};

/// Either a report or the reason verification was unavailable (client outage or
/// unparseable judge output). Unavailable samples must be excluded, never scored as 0.
struct VerificationOutcome {
  std::optional<VerificationReport> report;
  std::string unavailable_reason;

  bool available() const { return report.has_value(); }
};

VerificationOutcome verify(std::string_view briefing, const Rollout& rollout,
                           const VerificationConfig& config, EmbeddingClient& embedder,
                           const Judge& judge);

/// Key for persisting a verification result: hash of briefing, raw rollout, config and
/// model identities.
std::string verification_key(std::string_view briefing, const Rollout& rollout,
                             const VerificationConfig& config, const EmbeddingClient& embedder,
                             const Judge& judge);

nlohmann::json to_json(const TriangularScores& scores);
nlohmann::json to_json(const VerificationReport& report);
VerificationReport verification_report_from_json(const nlohmann::json& j);

}  // namespace semgate
