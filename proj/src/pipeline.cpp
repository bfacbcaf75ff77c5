#include "semgate/pipeline.hpp"

#include <toml.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "semgate/dataset_builder.hpp"
#include "semgate/decision_codec.hpp"
#include "semgate/errors.hpp"

namespace semgate {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// TOML helpers

void reject_unknown(const toml::table& t, std::string_view section, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : t) {
    if (std::find(keys.begin(), keys.end(), k.str()) == keys.end()) {
      const std::string name = section.empty() ? std::string(k.str()) : std::string(section) + "." + std::string(k.str());
      throw DomainError(name, "unknown configuration key");
    }
  }
}

const toml::table* section(const toml::table& root, std::string_view name) {
  const auto* node = root.get(name);
  if (node == nullptr) return nullptr;
  const auto* t = node->as_table();
  if (t == nullptr) throw DomainError(std::string(name), "must be a table");
  return t;
}

template <typename T>
std::optional<T> get(const toml::table* t, std::string_view section_name, std::string_view key) {
  if (t == nullptr) return std::nullopt;
  const auto* node = t->get(key);
  if (node == nullptr) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node->value<double>()) return *v;  // integers convert
  } else if constexpr (std::is_same_v<T, std::int64_t>) {
    if (node->is_integer()) return node->value<std::int64_t>();
  } else {
    if (auto v = node->value_exact<T>()) return *v;
  }
  throw DomainError(std::string(section_name) + "." + std::string(key), "has the wrong type");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& p, const char* key) {
  if (!fs::is_regular_file(p)) throw DomainError(key, "file not found: " + p.string());
}

// ---------------------------------------------------------------------------

void flush_partial(const ExperimentConfig& config, const std::vector<SampleRecord>& done) {
  if (!config.report) return;
  ojson j;
  j["partial"] = true;
  j["records"] = ojson::array();
  for (const auto& r : done) j["records"].push_back(to_json(r));
  try {
    write_json(fs::path(config.report->string() + ".partial.json"), j);
  } catch (const std::exception&) {
    // The original error matters more than a failed flush.
  }
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::parse(std::string_view toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw DomainError("config", std::string(e.description()));
  }
  reject_unknown(root, "", {"seed", "offline", "data", "reward", "grpo", "verification", "market", "clients", "output"});

  ExperimentConfig c;
  if (auto v = get<std::int64_t>(&root, "", "seed")) {
    if (*v < 0) throw DomainError("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = get<bool>(&root, "", "offline")) c.offline = *v;

  const auto* data = section(root, "data");
  if (data == nullptr) throw DomainError("data", "section is required");
  reject_unknown(*data, "data", {"corpus", "beliefs", "rollouts", "prices"});
  const auto corpus = get<std::string>(data, "data", "corpus");
  if (!corpus) throw DomainError("data.corpus", "is required");
  c.corpus = resolve(base_dir, *corpus);
  if (auto v = get<std::string>(data, "data", "beliefs")) c.beliefs = resolve(base_dir, *v);
  if (auto v = get<std::string>(data, "data", "rollouts")) c.rollouts = resolve(base_dir, *v);
  const auto prices = get<std::string>(data, "data", "prices");
  if (!prices) throw DomainError("data.prices", "is required");
  c.prices = resolve(base_dir, *prices);

  if (const auto* t = section(root, "reward")) {
    reject_unknown(*t, "reward", {"strategy", "fsr_coefficient"});
    if (auto v = get<std::string>(t, "reward", "strategy")) c.strategy = RewardStrategy::from_name(*v);
    if (auto v = get<double>(t, "reward", "fsr_coefficient")) c.strategy.fsr_coefficient = *v;
  }
  if (const auto* t = section(root, "grpo")) {
    reject_unknown(*t, "grpo", {"group_size", "epsilon", "std", "temperature"});
    if (auto v = get<std::int64_t>(t, "grpo", "group_size")) c.group_size = static_cast<int>(*v);
    if (auto v = get<double>(t, "grpo", "epsilon")) c.epsilon = *v;
    if (auto v = get<std::string>(t, "grpo", "std")) {
      if (*v == "population") {
        c.std_convention = StdConvention::Population;
      } else if (*v == "sample") {
        c.std_convention = StdConvention::Sample;
      } else {
        throw DomainError("grpo.std", "expected population or sample");
      }
    }
    if (auto v = get<double>(t, "grpo", "temperature")) c.temperature = *v;
  }
  if (const auto* t = section(root, "verification")) {
    reject_unknown(*t, "verification",
                   {"window", "overlap", "snap_margin", "top_k", "parallelism", "prompt_version", "judge_scale"});
    const auto size = [&](std::string_view key, std::size_t& out) {
      if (auto v = get<std::int64_t>(t, "verification", key)) {
        if (*v < 0) throw DomainError("verification." + std::string(key), "must be non-negative");
        out = static_cast<std::size_t>(*v);
      }
    };
    size("window", c.verification.chunking.window);
    size("overlap", c.verification.chunking.overlap);
    size("snap_margin", c.verification.chunking.snap_margin);
    size("top_k", c.verification.top_k);
    if (auto v = get<std::int64_t>(t, "verification", "parallelism")) c.parallelism = static_cast<int>(*v);
    if (auto v = get<std::string>(t, "verification", "prompt_version")) c.prompt_version = *v;
    if (auto v = get<double>(t, "verification", "judge_scale")) c.judge_scale = *v;
  }
  if (const auto* t = section(root, "market")) {
    reject_unknown(*t, "market", {"tranches", "holding_days", "one_way_cost", "benchmark", "backtest"});
    if (auto v = get<std::int64_t>(t, "market", "tranches")) c.market.tranches = static_cast<int>(*v);
    if (auto v = get<std::int64_t>(t, "market", "holding_days")) c.market.holding_days = static_cast<int>(*v);
    if (auto v = get<double>(t, "market", "one_way_cost")) c.market.one_way_cost = *v;
    if (auto v = get<std::string>(t, "market", "benchmark")) c.market.benchmark = *v;
    if (auto v = get<bool>(t, "market", "backtest")) c.backtest = *v;
  }
  if (const auto* t = section(root, "clients")) {
    reject_unknown(*t, "clients", {"embed_dim"});
    if (auto v = get<std::int64_t>(t, "clients", "embed_dim")) c.embed_dim = static_cast<int>(*v);
  }
  if (const auto* t = section(root, "output")) {
    reject_unknown(*t, "output", {"report", "cache"});
    if (auto v = get<std::string>(t, "output", "report")) c.report = resolve(base_dir, *v);
    if (auto v = get<std::string>(t, "output", "cache")) c.cache = resolve(base_dir, *v);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("config", "cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.parent_path());
}

void ExperimentConfig::validate() const {
  require_file(corpus, "data.corpus");
  require_file(prices, "data.prices");
  if (beliefs) require_file(*beliefs, "data.beliefs");
  if (rollouts) require_file(*rollouts, "data.rollouts");
  if (offline && !rollouts) throw DomainError("data.rollouts", "offline runs need a rollout log");
  if (group_size < 2) throw DomainError("grpo.group_size", "must be at least 2");
  if (!(epsilon > 0.0)) throw DomainError("grpo.epsilon", "must be positive");
  if (!(temperature >= 0.0)) throw DomainError("grpo.temperature", "must be non-negative");
  if (!(strategy.fsr_coefficient >= 0.0)) throw DomainError("reward.fsr_coefficient", "must be non-negative");
  verification.validate();
  if (parallelism < 1) throw DomainError("verification.parallelism", "must be at least 1");
  if (prompt_version.empty()) throw DomainError("verification.prompt_version", "must not be empty");
  if (!(judge_scale > 0.0)) throw DomainError("verification.judge_scale", "must be positive");
  market.validate();
  if (embed_dim < 1) throw DomainError("clients.embed_dim", "must be positive");
}

ClientBundle make_clients(const ExperimentConfig& config, std::shared_ptr<HttpTransport> transport) {
  ClientBundle b;
  if (config.rollouts) {
    b.generator = std::make_unique<ReplayGenerator>(load_rollout_log(*config.rollouts));
  }
  if (config.offline) {
    b.embedder = std::make_unique<HashingEmbedder>(config.embed_dim);
    b.judge = std::make_unique<OverlapJudge>();
    return b;
  }
  if (!transport) transport = std::make_shared<HttplibTransport>();
  if (!b.generator) b.generator = std::make_unique<HttpGenerator>(ClientConfig::from_env("GEN"), transport);
  b.embedder = std::make_unique<HttpEmbedder>(ClientConfig::from_env("EMBED"), transport);
  b.judge = std::make_unique<HttpJudge>(ClientConfig::from_env("JUDGE"), transport);
  return b;
}

// ---------------------------------------------------------------------------
// Pipeline

ScoredRollouts score_rollouts(const ExperimentConfig& config, ClientBundle& clients) {
  config.validate();
  const auto corpus = load_corpus(config.corpus);
  const auto beliefs = config.beliefs ? load_beliefs(*config.beliefs) : builtin_beliefs();
  const auto prices = ReturnTable::load(config.prices);
  const auto samples = augment(corpus, beliefs);

  std::unique_ptr<ScoreCache> cache =
      config.cache ? std::make_unique<ScoreCache>(*config.cache) : std::make_unique<ScoreCache>();
  const Judge judge(*clients.judge, cache.get(), JudgePrompts{config.prompt_version}, config.judge_scale);

  ScoredRollouts out;
  std::vector<Rollout> rollouts;
  std::vector<const AugmentedSample*> origin;
  std::map<Date, std::map<int, TradingDecision>> votes;

  // Generation, parsing and market reward run in sample order.
  for (const auto& sample : samples) {
    const Date& date = sample.context->date;
    std::vector<std::string> raws;
    try {
      raws = clients.generator->generate(sample, config.group_size, config.temperature);
    } catch (const std::exception& e) {
      flush_partial(config, out.records);
      throw SampleError(sample.key(), 0, e.what());
    }
    for (int i = 0; i < static_cast<int>(raws.size()); ++i) {
      SampleRecord rec;
      rec.date = date.to_string();
      rec.market = std::string(to_name(sample.context->market));
      rec.belief_id = sample.belief.id;
      rec.rollout_index = i;
      Rollout rollout = parse_rollout(raws[static_cast<std::size_t>(i)], RolloutMeta{sample.belief.id, date});
      rec.parse_ok = rollout.parse_ok;
      if (rollout.parse_ok) {
        rec.long_symbols = rollout.decision.long_symbols();
        rec.selected_symbols = rollout.decision.signals.size();
        try {
          rec.r = score_decision(rollout.decision, date, prices, config.market).reward;
        } catch (const std::exception& e) {
          flush_partial(config, out.records);
          throw SampleError(sample.key(), i, e.what());
        }
        votes[date].emplace(sample.belief.id, rollout.decision);
      }
      out.records.push_back(std::move(rec));
      rollouts.push_back(std::move(rollout));
      origin.push_back(&sample);
    }
  }

  // Verification fans out across workers; results land in their own slots.
  std::vector<std::size_t> jobs;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    if (rollouts[i].parse_ok) jobs.push_back(i);
  }
  std::vector<std::optional<VerificationOutcome>> outcomes(rollouts.size());
  std::vector<std::exception_ptr> errors(rollouts.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const std::size_t i = jobs[j];
      try {
        const std::string& briefing = origin[i]->context->briefing;
        const std::string key = verification_key(briefing, rollouts[i], config.verification, *clients.embedder, judge);
        if (auto hit = cache->get(key)) {
          outcomes[i] = VerificationOutcome{verification_report_from_json(*hit), {}};
        } else {
          outcomes[i] = verify(briefing, rollouts[i], config.verification, *clients.embedder, judge);
          if (outcomes[i]->available()) cache->put(key, to_json(*outcomes[i]->report));
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    SampleRecord& rec = out.records[i];
    if (errors[i]) {
      std::vector<SampleRecord> done(out.records.begin(), out.records.begin() + static_cast<std::ptrdiff_t>(i));
      flush_partial(config, done);
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw SampleError(origin[i]->key(), rec.rollout_index, e.what());
      }
    }
    if (!outcomes[i]) continue;  // parse failure: r = 0, s = 0
    if (!outcomes[i]->available()) {
      rec.available = false;
      rec.unavailable_reason = outcomes[i]->unavailable_reason;
      continue;
    }
    const auto& report = *outcomes[i]->report;
    rec.s = report.scores.mean;
    rec.scores = report.scores;
    rec.hallucinated_symbols = report.hallucinated_symbols;
  }

  for (auto& [date, by_belief] : votes) {
    std::vector<TradingDecision> decisions;
    for (auto& [belief, d] : by_belief) decisions.push_back(d);
    out.daily_votes.emplace_back(date, std::move(decisions));
  }
  return out;
}

Aggregates aggregate(const std::vector<SampleRecord>& records, const RewardStrategy& strategy) {
  Aggregates a;
  a.records = records.size();
  double sum_r = 0.0, sum_s = 0.0, sum_g = 0.0, sum_sp = 0.0, sum_sl = 0.0, sum_inc = 0.0;
  std::size_t flagged = 0, selected = 0;
  bool first = true;
  for (const auto& rec : records) {
    if (!rec.parse_ok) ++a.parse_failures;
    if (!rec.available) continue;
    ++a.available;
    sum_r += rec.r;
    sum_s += rec.s;
    sum_g += rec.gated;
    a.min_gated = first ? rec.gated : std::min(a.min_gated, rec.gated);
    a.max_gated = first ? rec.gated : std::max(a.max_gated, rec.gated);
    first = false;
    flagged += rec.hallucinated_symbols.size();
    selected += rec.selected_symbols;
    if (rec.r > 0.0) {
      ++a.profit_count;
      sum_sp += rec.s;
    } else if (rec.r < 0.0) {
      ++a.loss_count;
      sum_sl += rec.s;
      sum_inc += alignment_incentive_of(strategy, rec.r);
    }
  }
  if (a.available > 0) {
    const auto n = static_cast<double>(a.available);
    a.mean_r = sum_r / n;
    a.mean_s = sum_s / n;
    a.mean_gated = sum_g / n;
  }
  a.hallucination_rate = selected == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(selected);
  if (a.profit_count > 0) a.mean_s_profit = sum_sp / static_cast<double>(a.profit_count);
  if (a.loss_count > 0) {
    a.mean_s_loss = sum_sl / static_cast<double>(a.loss_count);
    a.loss_alignment_incentive = sum_inc / static_cast<double>(a.loss_count);
  }
  return a;
}

RunReport assemble_report(const ExperimentConfig& config, const RewardStrategy& strategy,
                          const ScoredRollouts& scored) {
  RunReport rep;
  rep.records = scored.records;
  for (auto& rec : rep.records) rec.gated = gate_of(strategy, rec.r, rec.s);

  // Groups are the rollouts of one (market, date, belief), in rollout order.
  std::map<std::tuple<std::string, std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& rec = rep.records[i];
    if (rec.available) groups[{rec.market, rec.date, rec.belief_id}].push_back(i);
  }
  for (const auto& [key, members] : groups) {
    if (members.size() < 2) continue;
    Eigen::VectorXd g(static_cast<Eigen::Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) g(static_cast<Eigen::Index>(j)) = rep.records[members[j]].gated;
    const Eigen::VectorXd adv = group_advantages(g, config.epsilon, config.std_convention);
    for (std::size_t j = 0; j < members.size(); ++j) rep.records[members[j]].advantage = adv(static_cast<Eigen::Index>(j));
  }
  rep.aggregates = aggregate(rep.records, strategy);

  if (config.backtest && !scored.daily_votes.empty()) {
    const auto prices = ReturnTable::load(config.prices);
    std::vector<PortfolioSnapshot> snaps;
    for (const auto& [date, decisions] : scored.daily_votes) {
      snaps.push_back(vote_snapshot(decisions, date, prices, config.market));
    }
    rep.backtest = run_backtest(snaps, prices, config.market);
  }

  auto& s = rep.settings;
  s["strategy"] = strategy.name();
  if (strategy.kind == StrategyKind::Fsr) s["fsr_coefficient"] = strategy.fsr_coefficient;
  s["seed"] = config.seed;
  s["offline"] = config.offline;
  s["group_size"] = config.group_size;
  s["epsilon"] = config.epsilon;
  s["std"] = config.std_convention == StdConvention::Population ? "population" : "sample";
  s["verification"] = config.verification.to_json();
  s["prompt_version"] = config.prompt_version;
  s["market"] = {{"tranches", config.market.tranches},
                 {"holding_days", config.market.holding_days},
                 {"one_way_cost", config.market.one_way_cost},
                 {"benchmark", config.market.benchmark}};
  return rep;
}

RunReport run_experiment(const ExperimentConfig& config, ClientBundle& clients) {
  const ScoredRollouts scored = score_rollouts(config, clients);
  RunReport rep = assemble_report(config, config.strategy, scored);
  rep.settings["embedder"] = clients.embedder->model_name();
  rep.settings["judge"] = clients.judge->model_name();
  if (config.report) write_json(*config.report, to_json(rep));
  return rep;
}

ojson ablation_compare(const ExperimentConfig& config, const std::vector<RewardStrategy>& strategies,
                       ClientBundle& clients) {
  if (strategies.size() < 2) throw DomainError("strategies", "ablation needs at least two strategies");
  ExperimentConfig cfg = config;
  cfg.backtest = false;  // the backtest does not depend on the gate
  const ScoredRollouts scored = score_rollouts(cfg, clients);
  ojson table;
  table["records"] = scored.records.size();
  table["columns"] = ojson::array();
  for (const auto& strategy : strategies) {
    const RunReport rep = assemble_report(cfg, strategy, scored);
    ojson col;
    col["strategy"] = strategy.name();
    col["aggregates"] = to_json(rep.aggregates);
    ojson gated = ojson::array();
    for (const auto& rec : rep.records) gated.push_back(rec.gated);
    col["gated"] = std::move(gated);
    table["columns"].push_back(std::move(col));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Serialization

ojson to_json(const SampleRecord& r) {
  ojson j;
  j["date"] = r.date;
  j["market"] = r.market;
  j["belief_id"] = r.belief_id;
  j["rollout_index"] = r.rollout_index;
  j["parse_ok"] = r.parse_ok;
  j["available"] = r.available;
  if (!r.available) j["unavailable_reason"] = r.unavailable_reason;
  j["r"] = r.r;
  j["s"] = r.s;
  j["gated"] = r.gated;
  j["advantage"] = opt_json(r.advantage);
  if (r.scores) {
    j["triangular"] = {{"factuality", r.scores->factuality},
                       {"deduction", r.scores->deduction},
                       {"consistency", r.scores->consistency}};
  } else {
    j["triangular"] = nullptr;
  }
  j["long_symbols"] = r.long_symbols;
  j["selected_symbols"] = r.selected_symbols;
  j["hallucinated_symbols"] = r.hallucinated_symbols;
  return j;
}

ojson to_json(const Aggregates& a) {
  ojson j;
  j["records"] = a.records;
  j["available"] = a.available;
  j["parse_failures"] = a.parse_failures;
  j["mean_r"] = a.mean_r;
  j["mean_s"] = a.mean_s;
  j["mean_gated"] = a.mean_gated;
  j["min_gated"] = a.min_gated;
  j["max_gated"] = a.max_gated;
  j["hallucination_rate"] = a.hallucination_rate;
  j["profit_count"] = a.profit_count;
  j["loss_count"] = a.loss_count;
  j["mean_s_profit"] = opt_json(a.mean_s_profit);
  j["mean_s_loss"] = opt_json(a.mean_s_loss);
  j["loss_alignment_incentive"] = opt_json(a.loss_alignment_incentive);
  return j;
}

ojson to_json(const RunReport& rep) {
  ojson j;
  j["settings"] = rep.settings;
  j["aggregates"] = to_json(rep.aggregates);
  j["records"] = ojson::array();
  for (const auto& r : rep.records) j["records"].push_back(to_json(r));
  if (rep.backtest) {
    j["backtest"] = ojson::parse(to_json(*rep.backtest).dump());
  } else {
    j["backtest"] = nullptr;
  }
  return j;
}

void write_json(const fs::path& path, const ojson& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("output", "cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw DomainError("output", "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace semgate
