// semgate: command-line front end for the reward-gating toolkit.

#include <CLI11.hpp>
#include <toml.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "semgate/dataset_builder.hpp"
#include "semgate/decision_codec.hpp"
#include "semgate/errors.hpp"
#include "semgate/grpo_advantage.hpp"
#include "semgate/market_env.hpp"
#include "semgate/model_clients.hpp"
#include "semgate/noise_lab.hpp"
#include "semgate/pipeline.hpp"
#include "semgate/reward_gating.hpp"
#include "semgate/text.hpp"
#include "semgate/verification.hpp"

namespace {

using namespace semgate;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Globals {
  bool offline = false;
  std::optional<std::uint64_t> seed;
  std::string config;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DomainError("file", "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void emit(const ojson& j, const std::string& report) {
  if (report.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(report, j);
  }
}

template <typename J>
ojson ordered(const J& j) {
  return ojson::parse(j.dump());
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (text::trim(cell).empty()) continue;
    out.push_back(std::stod(std::string(text::trim(cell))));
  }
  return out;
}

ExperimentConfig load_experiment(const Globals& g, const std::string& strategy) {
  if (g.config.empty()) throw DomainError("config", "--config is required");
  ExperimentConfig cfg = ExperimentConfig::load(g.config);
  if (g.offline) cfg.offline = true;
  if (g.seed) cfg.seed = *g.seed;
  if (!strategy.empty()) {
    const double coef = cfg.strategy.fsr_coefficient;
    cfg.strategy = RewardStrategy::from_name(strategy);
    cfg.strategy.fsr_coefficient = coef;
  }
  cfg.validate();
  return cfg;
}

BacktestConfig load_backtest_config(const std::string& path) {
  BacktestConfig c;
  if (path.empty()) return c;
  toml::table root;
  try {
    root = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    throw DomainError("backtest config", std::string(e.description()));
  }
  const toml::table* t = root.get_as<toml::table>("market");
  if (t == nullptr) t = &root;
  for (const auto& [k, v] : *t) {
    const auto key = k.str();
    if (key == "tranches") {
      c.tranches = static_cast<int>(v.value<std::int64_t>().value());
    } else if (key == "holding_days") {
      c.holding_days = static_cast<int>(v.value<std::int64_t>().value());
    } else if (key == "one_way_cost") {
      c.one_way_cost = v.value<double>().value();
    } else if (key == "benchmark") {
      c.benchmark = v.value<std::string>().value();
    } else if (t != &root || key != "market") {
      throw DomainError(std::string(key), "unknown backtest configuration key");
    }
  }
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semgate: semantic reward gating toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_flag("--offline", g.offline, "Force offline stubs and replay");
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--config", g.config, "Experiment TOML file");

  std::string strategy_name;
  std::string report;

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "Corpus and belief augmentation");
  dataset->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "Write one prompt per (context, belief)");
  std::string corpus_path, beliefs_path, out_path, split;
  build->add_option("--corpus", corpus_path, "JSON-lines corpus")->required()->check(CLI::ExistingFile);
  build->add_option("--beliefs", beliefs_path, "Belief catalog (built-in when omitted)")->check(CLI::ExistingFile);
  build->add_option("--out", out_path, "Output directory (train.jsonl/test.jsonl, or samples.jsonl without --split)")->required();
  build->add_option("--split", split, "Boundary date; samples before it are train, the rest test");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Score one rollout against its briefing");
  std::string briefing_path, rollout_path;
  VerificationConfig vcfg;
  verify_cmd->add_option("--briefing", briefing_path, "Briefing text file")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--rollout", rollout_path, "Raw rollout text file")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--window", vcfg.chunking.window, "Chunk window in bytes");
  verify_cmd->add_option("--overlap", vcfg.chunking.overlap, "Chunk overlap in bytes");
  verify_cmd->add_option("--top-k", vcfg.top_k, "Evidence chunks per symbol");
  verify_cmd->add_option("--report", report, "Write JSON here instead of stdout");

  // gate
  auto* gate_cmd = app.add_subcommand("gate", "Gated reward for given r and s");
  double gate_r = 0.0, gate_s = 0.0, fsr_coef = 2.0;
  gate_cmd->add_option("--r", gate_r, "Market reward (fraction)")->required();
  gate_cmd->add_option("--s", gate_s, "Semantic score in [0, 1]")->required();
  gate_cmd->add_option("--reward-strategy", strategy_name, "market_only, fsr, dsr, naive_multiply")
      ->default_val("dsr");
  gate_cmd->add_option("--fsr-coefficient", fsr_coef, "FSR weight")->default_val(2.0);

  // advantages
  auto* adv_cmd = app.add_subcommand("advantages", "Group-normalized advantages");
  std::string adv_input, adv_rewards, adv_std = "population";
  double adv_eps = 1e-8;
  adv_cmd->add_option("--input", adv_input, "JSON lines of {\"group\": id, \"rewards\": [...]}")
      ->check(CLI::ExistingFile);
  adv_cmd->add_option("--rewards", adv_rewards, "Comma-separated rewards of one group");
  adv_cmd->add_option("--epsilon", adv_eps, "Stabilizer")->default_val(1e-8);
  adv_cmd->add_option("--std", adv_std, "population or sample")->default_val("population");

  // backtest
  auto* bt_cmd = app.add_subcommand("backtest", "Tranche-rolling backtest of daily decisions");
  std::string decisions_path, prices_path, bt_config;
  bt_cmd->add_option("--decisions", decisions_path, "JSON lines of decisions")->required()->check(CLI::ExistingFile);
  bt_cmd->add_option("--prices", prices_path, "Daily return table (CSV)")->required()->check(CLI::ExistingFile);
  bt_cmd->add_option("--config", bt_config, "Backtest TOML")->check(CLI::ExistingFile);
  bt_cmd->add_option("--report", report, "Write JSON here instead of stdout");

  // noiselab
  auto* nl_cmd = app.add_subcommand("noiselab", "Monte Carlo gate statistics");
  std::string nl_mode = "ratio", nl_regime;
  double nl_s = 0.0, nl_sigma = 0.02, nl_rstar = 0.0, nl_s_hi = 1.0;
  std::size_t nl_n = 1'000'000;
  nl_cmd->add_option("--mode", nl_mode, "ratio, distributional, snr or evasion")->default_val("ratio");
  nl_cmd->add_option("--strategy", strategy_name, "Gate under test")->default_val("dsr");
  nl_cmd->add_option("--s", nl_s, "Fixed score (or lower bound in distributional mode)");
  nl_cmd->add_option("--s-hi", nl_s_hi, "Upper score bound in distributional mode");
  nl_cmd->add_option("--sigma", nl_sigma, "Noise standard deviation");
  nl_cmd->add_option("--r-star", nl_rstar, "Latent signal");
  nl_cmd->add_option("--n", nl_n, "Draws");
  nl_cmd->add_option("--regime", nl_regime, "positive_r, negative_r or all (default: every regime)");
  nl_cmd->add_option("--report", report, "Write JSON here instead of stdout");

  // run / ablate
  auto* run_cmd = app.add_subcommand("run", "Full pipeline from an experiment config");
  run_cmd->add_option("--reward-strategy", strategy_name, "Override the configured strategy");
  run_cmd->add_option("--report", report, "Override the configured report path");
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare strategies over identical rollouts");
  std::string strategies_csv = "dsr,naive_multiply";
  ablate_cmd->add_option("--strategies", strategies_csv, "Comma-separated strategy names")
      ->default_val("dsr,naive_multiply");
  ablate_cmd->add_option("--report", report, "Write JSON here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dataset->got_subcommand(build)) {
      const auto corpus = load_corpus(corpus_path);
      const auto beliefs = beliefs_path.empty() ? builtin_beliefs() : load_beliefs(beliefs_path);
      std::optional<Date> boundary;
      if (!split.empty()) boundary = Date::parse(split);
      fs::create_directories(out_path);
      std::map<std::string, std::ofstream> files;
      const auto sink = [&](const std::string& name) -> std::ofstream& {
        auto it = files.find(name);
        if (it == files.end()) {
          const fs::path p = fs::path(out_path) / (name + ".jsonl");
          it = files.emplace(name, std::ofstream(p, std::ios::binary | std::ios::trunc)).first;
          if (!it->second) throw DomainError("out", "cannot write " + p.string());
        }
        return it->second;
      };
      if (boundary) {
        sink("train");
        sink("test");
      }
      std::size_t n = 0;
      for (const auto& s : augment(corpus, beliefs)) {
        const std::string part = !boundary ? "samples" : (s.context->date < *boundary ? "train" : "test");
        sink(part) << ordered(to_json(s)).dump() << '\n';
        ++n;
      }
      std::cerr << "wrote " << n << " samples to " << out_path << '\n';
    } else if (app.got_subcommand(verify_cmd)) {
      const std::string briefing = slurp(briefing_path);
      const Rollout rollout = parse_rollout(slurp(rollout_path));
      if (!rollout.parse_ok) throw DomainError("rollout", "no signals block found");
      HashingEmbedder embedder;
      OverlapJudge judge_client;
      std::unique_ptr<EmbeddingClient> http_embedder;
      std::unique_ptr<JudgeClient> http_judge;
      EmbeddingClient* emb = &embedder;
      JudgeClient* jc = &judge_client;
      if (!g.offline) {
        auto transport = std::make_shared<HttplibTransport>();
        const auto ec = ClientConfig::from_env("EMBED");
        const auto jcfg = ClientConfig::from_env("JUDGE");
        if (!ec.endpoint.empty() && !jcfg.endpoint.empty()) {
          http_embedder = std::make_unique<HttpEmbedder>(ec, transport);
          http_judge = std::make_unique<HttpJudge>(jcfg, transport);
          emb = http_embedder.get();
          jc = http_judge.get();
        }
      }
      const Judge judge(*jc);
      const auto outcome = verify(briefing, rollout, vcfg, *emb, judge);
      if (!outcome.available()) {
        std::cerr << "verification unavailable: " << outcome.unavailable_reason << '\n';
        return 3;
      }
      emit(ordered(to_json(*outcome.report)), report);
    } else if (app.got_subcommand(gate_cmd)) {
      RewardStrategy st = RewardStrategy::from_name(strategy_name);
      st.fsr_coefficient = fsr_coef;
      ojson j;
      j["strategy"] = st.name();
      j["r"] = gate_r;
      j["s"] = gate_s;
      j["value"] = gate(st, gate_r, gate_s).value;
      j["alignment_incentive"] = alignment_incentive(st, gate_r, gate_s);
      std::cout << j.dump() << '\n';
    } else if (app.got_subcommand(adv_cmd)) {
      StdConvention conv = StdConvention::Population;
      if (adv_std == "sample") {
        conv = StdConvention::Sample;
      } else if (adv_std != "population") {
        throw DomainError("std", "expected population or sample");
      }
      const auto run_group = [&](const std::string& id, const std::vector<double>& rewards) {
        const Eigen::VectorXd a =
            group_advantages(Eigen::Map<const Eigen::VectorXd>(rewards.data(), static_cast<Eigen::Index>(rewards.size())),
                             adv_eps, conv);
        ojson j;
        j["group"] = id;
        j["advantages"] = std::vector<double>(a.data(), a.data() + a.size());
        std::cout << j.dump() << '\n';
      };
      if (!adv_rewards.empty()) run_group("cli", parse_list(adv_rewards));
      if (!adv_input.empty()) {
        std::ifstream in(adv_input);
        std::string line;
        while (std::getline(in, line)) {
          if (text::trim(line).empty()) continue;
          const auto j = nlohmann::json::parse(line);
          const std::string id = j.contains("group") ? j["group"].dump() : std::string("null");
          run_group(j.contains("group") && j["group"].is_string() ? j["group"].get<std::string>() : id,
                    j.at("rewards").get<std::vector<double>>());
        }
      }
      if (adv_rewards.empty() && adv_input.empty()) throw DomainError("advantages", "give --rewards or --input");
    } else if (app.got_subcommand(bt_cmd)) {
      const BacktestConfig cfg = load_backtest_config(bt_config);
      const auto prices = ReturnTable::load(prices_path);
      std::map<Date, std::vector<TradingDecision>> by_date;
      std::ifstream in(decisions_path);
      std::string line;
      while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto d = decision_from_json(nlohmann::json::parse(line));
        if (!d.date) throw DomainError("decisions", "every decision needs a date");
        by_date[*d.date].push_back(d);
      }
      std::vector<PortfolioSnapshot> snaps;
      for (const auto& [date, ds] : by_date) snaps.push_back(vote_snapshot(ds, date, prices, cfg));
      const auto result = run_backtest(snaps, prices, cfg);
      ojson j = ordered(to_json(result));
      j["snapshots"] = ojson::array();
      for (const auto& s : snaps) j["snapshots"].push_back(ordered(to_json(s)));
      emit(j, report);
    } else if (app.got_subcommand(nl_cmd)) {
      const RewardStrategy st = RewardStrategy::from_name(strategy_name);
      const std::uint64_t seed = g.seed.value_or(0);
      const NoiseModel model{nl_rstar, nl_sigma, seed};
      std::vector<Regime> regimes{Regime::PositiveR, Regime::NegativeR, Regime::All};
      if (!nl_regime.empty()) regimes = {regime_from_name(nl_regime)};
      ojson j;
      j["mode"] = nl_mode;
      j["seed"] = seed;
      j["rows"] = ojson::array();
      if (nl_mode == "ratio") {
        for (const auto r : regimes) j["rows"].push_back(ordered(to_json(variance_ratio(model, st, nl_s, nl_n, r))));
      } else if (nl_mode == "distributional") {
        for (const auto r : regimes) {
          j["rows"].push_back(ordered(to_json(variance_ratio_distributional(model, st, nl_s, nl_s_hi, nl_n, r))));
        }
      } else if (nl_mode == "snr") {
        PopulationSpec spec;
        spec.noise_sigma = nl_sigma;
        spec.seed = seed;
        j["rows"].push_back(ordered(to_json(snr_compare(spec, nl_n))));
      } else if (nl_mode == "evasion") {
        const std::vector<double> rs{-0.1, -0.05, -0.01, 0.01, 0.05, 0.1};
        std::vector<double> ss;
        for (int i = 0; i <= 20; ++i) ss.push_back(i / 20.0);
        for (const auto& p : evasion_sweep(st, rs, ss)) j["rows"].push_back(ordered(to_json(p)));
      } else {
        throw DomainError("mode", "expected ratio, distributional, snr or evasion");
      }
      emit(j, report);
    } else if (app.got_subcommand(run_cmd)) {
      ExperimentConfig cfg = load_experiment(g, strategy_name);
      if (!report.empty()) cfg.report = report;
      auto clients = make_clients(cfg, nullptr);
      const auto rep = run_experiment(cfg, clients);
      if (!cfg.report) std::cout << to_json(rep).dump(2) << '\n';
      std::cerr << rep.records.size() << " records, mean s " << rep.aggregates.mean_s << '\n';
    } else if (app.got_subcommand(ablate_cmd)) {
      const ExperimentConfig cfg = load_experiment(g, "");
      std::vector<RewardStrategy> strategies;
      std::stringstream ss(strategies_csv);
      std::string name;
      while (std::getline(ss, name, ',')) strategies.push_back(RewardStrategy::from_name(text::trim(name)));
      for (auto& s : strategies) s.fsr_coefficient = cfg.strategy.fsr_coefficient;
      auto clients = make_clients(cfg, nullptr);
      emit(ablation_compare(cfg, strategies, clients), report);
    }
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
