#include "kprel/cli.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "kprel/error.h"
#include "kprel/evalkit.h"
#include "kprel/experiment.h"
#include "kprel/judge.h"
#include "kprel/jsonl.h"
#include "kprel/labels.h"
#include "kprel/scorer.h"
#include "kprel/serve.h"
#include "kprel/simkit.h"

namespace kprel {

using nlohmann::json;

namespace {

std::atomic<bool> g_reload_requested{false};
std::atomic<bool> g_stop_requested{false};

extern "C" void on_reload_signal(int) { g_reload_requested = true; }
extern "C" void on_stop_signal(int) { g_stop_requested = true; }

std::optional<std::string> env(const char* name) {
  if (const char* v = std::getenv(name)) return std::string(v);
  return std::nullopt;
}

simkit::SimConfig load_sim_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return simkit::config_from_json(json::parse(jsonl::read_text(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kCorruptPayload, path + ": " + e.what());
  }
}

struct Options {
  // ingest
  std::string kind, in, out;
  bool no_filter = false;
  // mix
  std::string strategy, clicks, search, judgments;
  // judge
  std::string pairs, backend_url, token, cache, judge_kind = "general";
  std::size_t batch_size = 100, concurrency = 1;
  long timeout_ms = 30000;
  bool simulate = false;
  std::string sim_config;
  double epsilon = 0.05;
  std::uint64_t stream = 0;
  std::optional<std::uint64_t> seed;
  // train
  std::string data, version = "dev";
  double lr = 0.1, l2 = 1e-4, pos_weight = 1.0;
  int epochs = 200;
  // calibrate / eval / compare
  std::string model, calibration, recs, search_oracle, weighting = "by_clicks";
  std::optional<double> threshold;
  double target = evalkit::kDefaultRetentionTarget;
  std::string baseline_model;
  std::optional<double> baseline_threshold;
  std::optional<double> ad_spend;
  std::vector<std::string> models;
  std::string baseline, json_out, csv_out, experiment_config;
  // simulate
  std::string config, out_dir;
  // batch-infer / diff-merge
  int partitions = 1;
  std::string timestamp, full, diff;
  bool allow_model_change = false;
  // serve
  std::optional<std::string> bind, serve_model;
};

int cmd_ingest(const Options& o, std::ostream& out) {
  std::size_t read = 0, kept = 0;
  if (o.kind == "clicks") {
    const auto records = labels::read_clicks(o.in);
    const auto filtered = o.no_filter ? records : labels::filter_clicks(records);
    labels::write_jsonl(o.out, filtered);
    read = records.size();
    kept = filtered.size();
  } else if (o.kind == "human") {
    std::vector<labels::LabeledExample> examples;
    const auto judgments = labels::read_human(o.in);
    for (const auto& j : judgments) {
      if (auto label = labels::binarize_human(j)) {
        examples.push_back({j.title, j.category, j.keyphrase, *label,
                            labels::Provenance::kHuman});
      }
    }
    labels::write_jsonl(o.out, examples);
    read = judgments.size();
    kept = examples.size();
  } else if (o.kind == "search") {
    const auto records = labels::read_search(o.in);
    labels::write_jsonl(o.out, records);
    read = kept = records.size();
  } else {
    const auto records = labels::read_verdicts(o.in);
    labels::write_jsonl(o.out, records);
    read = kept = records.size();
  }
  out << "ingested " << read << " " << o.kind << " records, kept " << kept << "\n";
  return 0;
}

int cmd_mix(const Options& o, std::ostream& out) {
  const auto strategy = labels::parse_strategy(o.strategy);
  std::vector<labels::ClickRecord> clicks;
  if (!o.clicks.empty()) clicks = labels::filter_clicks(labels::read_clicks(o.clicks));
  std::vector<labels::SearchRelevanceRecord> search;
  if (!o.search.empty()) search = labels::read_search(o.search);
  std::vector<labels::JudgeVerdict> verdicts;
  if (!o.judgments.empty()) verdicts = labels::read_verdicts(o.judgments);
  const auto dataset = labels::mix(strategy, clicks, search, verdicts);
  labels::write_jsonl(o.out, dataset);
  const auto pos = std::count_if(dataset.begin(), dataset.end(), [](const auto& e) {
    return e.label == labels::Label::kRelevant;
  });
  out << labels::to_string(strategy) << ": " << dataset.size() << " examples (" << pos
      << " relevant)\n";
  return 0;
}

int cmd_judge(const Options& o, std::ostream& out) {
  if (o.simulate) {
    auto cfg = load_sim_config(o.sim_config);
    if (o.seed) cfg.seed = *o.seed;
    const auto world = simkit::generate_world(cfg);
    const auto verdicts = judge::simulated_judge(world, o.epsilon, o.stream);
    labels::write_jsonl(o.out, verdicts);
    out << "simulated " << verdicts.size() << " verdicts (epsilon " << o.epsilon << ")\n";
    return 0;
  }
  if (o.pairs.empty() || o.backend_url.empty()) {
    throw Error(ErrorCode::kInvalidInput,
                "judge needs --pairs and --backend-url (or --simulate)");
  }
  std::vector<judge::JudgePair> pairs;
  for (const auto& r : evalkit::read_recommendations(o.pairs)) {
    pairs.push_back({r.item_id, r.keyphrase, r.title, r.category});
  }
  judge::HttpJudgeBackend backend({o.backend_url,
                                   o.token.empty() ? env("KPREL_JUDGE_TOKEN").value_or("")
                                                   : o.token,
                                   o.batch_size, std::chrono::milliseconds(o.timeout_ms)});
  std::unique_ptr<judge::VerdictCache> cache =
      o.cache.empty() ? std::make_unique<judge::VerdictCache>()
                      : std::make_unique<judge::VerdictCache>(o.cache);
  judge::JudgeOptions options;
  options.kind = labels::parse_judge_kind(o.judge_kind);
  options.max_concurrency = o.concurrency;
  const auto result = judge::judge_batch(pairs, backend, *cache, options);
  labels::write_jsonl(o.out, result.verdicts());
  const auto& s = result.summary;
  out << "judged " << s.judged << ", cache hits " << s.cache_hits << ", skipped " << s.skipped
      << ", errors " << s.errors << ", backend calls " << s.backend_calls << "\n";
  return s.errors > 0 ? 1 : 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto dataset = labels::read_examples(o.data);
  scorer::TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.l2 = o.l2;
  cfg.positive_class_weight = o.pos_weight;
  cfg.seed = o.seed.value_or(0);
  auto report = scorer::train(dataset, cfg);
  report.model.version = o.version;
  if (!o.strategy.empty()) report.model.trained_on = labels::parse_strategy(o.strategy);
  scorer::save_file(report.model, o.out);
  out << "trained on " << dataset.size() << " examples: final loss "
      << json(report.final_loss).dump() << ", training accuracy "
      << json(report.train_accuracy).dump() << "\n";
  return 0;
}

int cmd_calibrate(const Options& o, std::ostream& out) {
  const auto model = scorer::load_file(o.model);
  const auto log = labels::read_clicks(o.clicks);
  const auto cal =
      evalkit::calibrate(model, log, o.target, evalkit::parse_weighting(o.weighting));
  const std::string text = evalkit::to_json(cal).dump(2) + "\n";
  if (!o.out.empty()) jsonl::write_text(o.out, text);
  out << text;
  return 0;
}

double resolve_threshold(const Options& o, const scorer::RelevanceModel& model,
                         const std::vector<labels::ClickRecord>& log) {
  if (o.threshold) return *o.threshold;
  if (!o.calibration.empty()) {
    return evalkit::calibration_from_json(json::parse(jsonl::read_text(o.calibration)))
        .threshold;
  }
  return evalkit::calibrate(model, log, o.target, evalkit::parse_weighting(o.weighting))
      .threshold;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto model = scorer::load_file(o.model);
  const auto log = labels::read_clicks(o.clicks);
  const double threshold = resolve_threshold(o, model, log);
  const auto weighting = evalkit::parse_weighting(o.weighting);
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"model_version", model.version},
            {"threshold", threshold},
            {"clicks_retained", evalkit::clicks_retained(model, threshold, log, weighting)},
            {"sales_retention", opt(evalkit::sales_retention(model, threshold, log))}};
  if (!o.recs.empty()) {
    const auto recs = evalkit::read_recommendations(o.recs);
    j["survivors_per_item"] = evalkit::survivors_per_item(model, threshold, recs);
    if (!o.search_oracle.empty()) {
      j["search_pass_rate"] = opt(evalkit::search_pass_rate(
          model, threshold, recs, evalkit::load_search_oracle(o.search_oracle)));
    }
    if (!o.baseline_model.empty()) {
      const auto base = scorer::load_file(o.baseline_model);
      const double base_t =
          o.baseline_threshold
              ? *o.baseline_threshold
              : evalkit::calibrate(base, log, o.target, weighting).threshold;
      j["keyphrase_delta_pct"] =
          opt(evalkit::keyphrase_reduction(model, threshold, recs, base, base_t));
    }
  }
  if (o.ad_spend) {
    const auto m = evalkit::ratio_metrics(log, *o.ad_spend);
    j["ctr"] = opt(m.ctr);
    j["cvr"] = opt(m.cvr);
    j["roas"] = opt(m.roas);
  }
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_compare(const Options& o, std::ostream& out) {
  std::vector<evalkit::EvalReport> reports;
  if (!o.experiment_config.empty() || o.models.empty()) {
    experiment::ExperimentConfig cfg;
    if (!o.experiment_config.empty()) {
      cfg = experiment::experiment_config_from_json(
          json::parse(jsonl::read_text(o.experiment_config)));
    }
    if (o.seed) cfg.sim.seed = *o.seed;
    const auto result = experiment::run_experiment(cfg);
    out << experiment::render(result);
    if (!o.json_out.empty()) jsonl::write_text(o.json_out, experiment::to_json(result).dump(2) + "\n");
    reports = result.reports;
  } else {
    std::vector<evalkit::NamedModel> models;
    for (const auto& spec : o.models) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::kInvalidInput, "--model expects name=path, got " + spec);
      }
      models.push_back({spec.substr(0, eq), scorer::load_file(spec.substr(eq + 1))});
    }
    const std::string baseline = o.baseline.empty() ? models.front().name : o.baseline;
    reports = evalkit::compare(models, labels::read_clicks(o.clicks),
                               evalkit::read_recommendations(o.recs),
                               evalkit::load_search_oracle(o.search_oracle), baseline,
                               o.target, evalkit::parse_weighting(o.weighting));
    out << evalkit::render_table(reports);
    if (!o.json_out.empty()) {
      jsonl::write_text(o.json_out, evalkit::reports_to_json(reports).dump(2) + "\n");
    }
  }
  if (!o.csv_out.empty()) jsonl::write_text(o.csv_out, evalkit::reports_to_csv(reports));
  return 0;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  auto cfg = load_sim_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  const auto world = simkit::generate_world(cfg);
  simkit::write_outputs(world, o.out_dir);
  out << "simulated " << world.items().size() << " items, " << world.keyphrases().size()
      << " keyphrases, " << world.pool().size() << " pool pairs -> " << o.out_dir << "\n";
  return 0;
}

int cmd_batch_infer(const Options& o, std::ostream& out) {
  if (!o.threshold) throw Error(ErrorCode::kInvalidInput, "batch-infer needs --threshold");
  const auto model = scorer::load_file(o.model);
  const auto pairs = evalkit::read_recommendations(o.pairs);
  const auto result = serve::batch_infer(model, *o.threshold, pairs, o.partitions,
                                         o.timestamp.empty() ? serve::now_iso8601() : o.timestamp);
  serve::write_snapshot(o.out, result.snapshot);
  serve::write_rejects(o.out + ".rejects", result.rejects);
  out << "scored " << result.snapshot.records.size() << " pairs, rejected "
      << result.rejects.size() << "\n";
  return 0;
}

int cmd_diff_merge(const Options& o, std::ostream& out) {
  const auto merged = serve::diff_merge(serve::read_snapshot(o.full),
                                        serve::read_snapshot(o.diff), o.allow_model_change);
  serve::write_snapshot(o.out, merged);
  out << "merged snapshot has " << merged.records.size() << " records\n";
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const auto settings = serve::resolve_settings({o.bind, o.serve_model, o.threshold}, env);
  if (settings.model_path.empty()) {
    throw Error(ErrorCode::kInvalidInput, "serve needs --model or KPREL_MODEL");
  }
  serve::NrtService service(scorer::load_file(settings.model_path), settings.threshold);
  std::signal(SIGHUP, on_reload_signal);
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);
  const int port = service.start(settings.host, settings.port);
  out << "serving model " << service.model_version() << " on " << settings.host << ":" << port
      << " (SIGHUP reloads " << settings.model_path << ")" << std::endl;
  while (!g_stop_requested) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (g_reload_requested.exchange(false)) {
      try {
        service.reload(scorer::load_file(settings.model_path));
        out << "reloaded model " << service.model_version() << std::endl;
      } catch (const Error& e) {
        // Keep serving the previous model.
        std::cerr << "kprel serve: reload failed: " << e.what() << std::endl;
      }
    }
  }
  service.stop();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Advertiser keyphrase relevance pipeline", "kprel"};
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Validate a label source and apply its filtering rules");
  ingest->add_option("--kind", o.kind, "clicks | human | search | judge")
      ->required()
      ->check(CLI::IsMember({"clicks", "human", "search", "judge"}));
  ingest->add_option("--in", o.in)->required();
  ingest->add_option("--out", o.out)->required();
  ingest->add_flag("--no-filter", o.no_filter, "Keep click records failing the thresholds");

  auto* mix = app.add_subcommand("mix", "Build a training set under a mixing strategy");
  mix->add_option("--strategy", o.strategy)->required();
  mix->add_option("--clicks", o.clicks, "Click log; the click thresholds are applied");
  mix->add_option("--search", o.search);
  mix->add_option("--judgments", o.judgments);
  mix->add_option("--out", o.out)->required();

  auto* judge_cmd = app.add_subcommand("judge", "Collect judge verdicts");
  judge_cmd->add_option("--pairs", o.pairs, "Recommendations JSONL");
  judge_cmd->add_option("--out", o.out)->required();
  judge_cmd->add_option("--backend-url", o.backend_url);
  judge_cmd->add_option("--token", o.token, "Defaults to $KPREL_JUDGE_TOKEN");
  judge_cmd->add_option("--batch-size", o.batch_size);
  judge_cmd->add_option("--timeout-ms", o.timeout_ms);
  judge_cmd->add_option("--concurrency", o.concurrency);
  judge_cmd->add_option("--cache", o.cache, "Append-only verdict cache (JSONL)");
  judge_cmd->add_option("--kind", o.judge_kind)->check(CLI::IsMember({"general", "finetuned"}));
  judge_cmd->add_flag("--simulate", o.simulate, "Use the simulated judge over a world");
  judge_cmd->add_option("--sim-config", o.sim_config);
  judge_cmd->add_option("--epsilon", o.epsilon);
  judge_cmd->add_option("--stream", o.stream);
  judge_cmd->add_option("--seed", o.seed);

  auto* train = app.add_subcommand("train", "Train a relevance model");
  train->add_option("--data", o.data)->required();
  train->add_option("--out", o.out)->required();
  train->add_option("--lr", o.lr);
  train->add_option("--epochs", o.epochs);
  train->add_option("--l2", o.l2);
  train->add_option("--pos-weight", o.pos_weight);
  train->add_option("--seed", o.seed);
  train->add_option("--version", o.version);
  train->add_option("--strategy", o.strategy, "Tag recorded as trained_on");

  auto* calibrate = app.add_subcommand("calibrate", "Find the click-retention threshold");
  calibrate->add_option("--model", o.model)->required();
  calibrate->add_option("--clicks", o.clicks)->required();
  calibrate->add_option("--target", o.target);
  calibrate->add_option("--weighting", o.weighting)
      ->check(CLI::IsMember({"by_clicks", "by_pairs"}));
  calibrate->add_option("--out", o.out);

  auto* eval = app.add_subcommand("eval", "Business metrics for one model");
  eval->add_option("--model", o.model)->required();
  eval->add_option("--clicks", o.clicks)->required();
  eval->add_option("--threshold", o.threshold);
  eval->add_option("--calibration", o.calibration);
  eval->add_option("--target", o.target);
  eval->add_option("--weighting", o.weighting)->check(CLI::IsMember({"by_clicks", "by_pairs"}));
  eval->add_option("--recs", o.recs);
  eval->add_option("--search-oracle", o.search_oracle);
  eval->add_option("--baseline-model", o.baseline_model);
  eval->add_option("--baseline-threshold", o.baseline_threshold);
  eval->add_option("--ad-spend", o.ad_spend);

  auto* compare = app.add_subcommand("compare", "Comparison table against a baseline");
  compare->add_option("--model", o.models, "name=path, repeatable");
  compare->add_option("--baseline", o.baseline);
  compare->add_option("--clicks", o.clicks);
  compare->add_option("--recs", o.recs);
  compare->add_option("--search-oracle", o.search_oracle);
  compare->add_option("--target", o.target);
  compare->add_option("--weighting", o.weighting)
      ->check(CLI::IsMember({"by_clicks", "by_pairs"}));
  compare->add_option("--experiment", o.experiment_config,
                      "Run the closed-loop simulated experiment from this config");
  compare->add_option("--seed", o.seed);
  compare->add_option("--json", o.json_out);
  compare->add_option("--csv", o.csv_out);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic marketplace");
  simulate->add_option("--config", o.config);
  simulate->add_option("--seed", o.seed);
  simulate->add_option("--out-dir", o.out_dir)->required();

  auto* batch = app.add_subcommand("batch-infer", "Score a pairs file into a snapshot");
  batch->add_option("--model", o.model)->required();
  batch->add_option("--threshold", o.threshold);
  batch->add_option("--pairs", o.pairs)->required();
  batch->add_option("--out", o.out)->required();
  batch->add_option("--partitions", o.partitions)->check(CLI::PositiveNumber);
  batch->add_option("--timestamp", o.timestamp);

  auto* merge = app.add_subcommand("diff-merge", "Merge a daily diff into a full snapshot");
  merge->add_option("--full", o.full)->required();
  merge->add_option("--diff", o.diff)->required();
  merge->add_option("--out", o.out)->required();
  merge->add_flag("--allow-model-change", o.allow_model_change);

  auto* serve_cmd = app.add_subcommand("serve", "Run the near-real-time scoring service");
  serve_cmd->add_option("--bind", o.bind, "host:port (env KPREL_BIND)");
  serve_cmd->add_option("--model", o.serve_model, "model file (env KPREL_MODEL)");
  serve_cmd->add_option("--threshold", o.threshold, "(env KPREL_THRESHOLD)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "kprel: usage error: " << e.what() << "\n";
    return 2;
  }

  const std::map<CLI::App*, std::function<int(const Options&, std::ostream&)>> handlers = {
      {ingest, cmd_ingest},       {mix, cmd_mix},           {judge_cmd, cmd_judge},
      {train, cmd_train},         {calibrate, cmd_calibrate}, {eval, cmd_eval},
      {compare, cmd_compare},     {simulate, cmd_simulate}, {batch, cmd_batch_infer},
      {merge, cmd_diff_merge},    {serve_cmd, cmd_serve}};
  CLI::App* chosen = app.get_subcommands().front();
  try {
    return handlers.at(chosen)(o, out);
  } catch (const Error& e) {
    err << "kprel " << chosen->get_name() << ": " << error_code_name(e.code())
        << " error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "kprel " << chosen->get_name() << ": error: " << e.what() << "\n";
  }
  return 1;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace kprel
