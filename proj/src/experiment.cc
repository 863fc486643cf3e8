#include "kprel/experiment.h"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "kprel/error.h"
#include "kprel/judge.h"
#include "kprel/kernels.h"

namespace kprel::experiment {

using nlohmann::json;

double Confusion::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}
double Confusion::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}
double Confusion::f1() const {
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

json to_json(const ExperimentConfig& c) {
  return {{"sim", simkit::to_json(c.sim)},
          {"judge_epsilon", c.judge_epsilon},
          {"finetuned_epsilon", c.finetuned_epsilon},
          {"train",
           {{"learning_rate", c.train.learning_rate},
            {"epochs", c.train.epochs},
            {"seed", c.train.seed},
            {"l2", c.train.l2},
            {"positive_class_weight", c.train.positive_class_weight}}},
          {"target", c.target},
          {"weighting", evalkit::to_string(c.weighting)}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  auto reject_unknown = [](const json& obj, std::initializer_list<std::string_view> known,
                           std::string_view where) {
    if (!obj.is_object()) {
      throw Error(ErrorCode::kCorruptPayload, std::string(where) + " must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw Error(ErrorCode::kInvalidInput,
                    std::string(where) + ": unknown field '" + key + "'");
      }
    }
  };
  reject_unknown(j, {"sim", "judge_epsilon", "finetuned_epsilon", "train", "target", "weighting"},
                 "experiment config");
  if (j.contains("train")) {
    reject_unknown(j.at("train"),
                   {"learning_rate", "epochs", "seed", "l2", "positive_class_weight"},
                   "experiment config train");
  }
  try {
    if (j.contains("sim")) c.sim = simkit::config_from_json(j.at("sim"));
    c.judge_epsilon = j.value("judge_epsilon", c.judge_epsilon);
    c.finetuned_epsilon = j.value("finetuned_epsilon", c.finetuned_epsilon);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.l2 = t.value("l2", c.train.l2);
      c.train.positive_class_weight =
          t.value("positive_class_weight", c.train.positive_class_weight);
    }
    c.target = j.value("target", c.target);
    if (j.contains("weighting")) {
      c.weighting = evalkit::parse_weighting(j.at("weighting").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptPayload, std::string("experiment config: ") + e.what());
  }
  return c;
}

const ModelOutcome& ExperimentResult::model(const std::string& name) const {
  for (const auto& m : models) {
    if (m.name == name) return m;
  }
  throw Error(ErrorCode::kInvalidInput, "no model named " + name);
}

const evalkit::EvalReport& ExperimentResult::report(const std::string& name) const {
  for (const auto& r : reports) {
    if (r.model_name == name) return r;
  }
  throw Error(ErrorCode::kInvalidInput, "no report named " + name);
}

Confusion ground_truth_confusion(const simkit::World& world,
                                 const scorer::RelevanceModel& model, double threshold) {
  std::vector<kernels::TripleView> triples;
  triples.reserve(world.pool().size());
  for (simkit::PairRef p : world.pool()) {
    const auto& it = world.items()[p.item];
    triples.push_back({world.keyphrases()[p.keyphrase].text, it.category, it.title});
  }
  const auto scores = kernels::score_triples_parallel(model.weights, triples);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i].ok()) throw Error(ErrorCode::kInvalidInput, scores[i].error);
    const bool predicted = scores[i].score >= threshold;
    const bool truth = world.relevant(world.pool()[i]);
    if (predicted && truth) ++c.tp;
    else if (predicted) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const simkit::World world = simkit::generate_world(config.sim);
  const auto log = simkit::run_auctions(world, std::nullopt);
  const auto positives = labels::filter_clicks(log);
  const auto search = simkit::search_records(world);
  const auto general = judge::simulated_judge(world, config.judge_epsilon, 0);
  const auto finetuned = judge::simulated_judge(world, config.finetuned_epsilon, 1);

  ExperimentResult result;
  result.pool_size = world.pool().size();
  result.logged_pairs = log.size();
  result.click_positives = positives.size();

  // Row order follows the published comparison table, baseline first.
  const labels::MixStrategy order[] = {
      labels::MixStrategy::kSearchPM,    labels::MixStrategy::kClickPLlmM,
      labels::MixStrategy::kLlmPM,       labels::MixStrategy::kClickPLlmPM,
      labels::MixStrategy::kClickPSearchM, labels::MixStrategy::kFtLlmPM};

  std::vector<evalkit::NamedModel> named;
  for (auto strategy : order) {
    const auto& verdicts =
        strategy == labels::MixStrategy::kFtLlmPM ? finetuned : general;
    const auto dataset = labels::mix(strategy, positives, search, verdicts);
    auto report = scorer::train(dataset, config.train);
    report.model.version = "sim-" + std::string(labels::to_string(strategy));
    report.model.trained_on = strategy;
    ModelOutcome m;
    m.name = std::string(labels::display_name(strategy));
    m.strategy = strategy;
    m.model = report.model;
    m.training_examples = dataset.size();
    m.final_loss = report.final_loss;
    result.models.push_back(m);
    named.push_back({m.name, m.model});
  }
  ModelOutcome jac;
  jac.name = kJaccardName;
  jac.model = scorer::jaccard_baseline();
  result.models.push_back(jac);
  named.push_back({jac.name, jac.model});

  result.reports = evalkit::compare(named, log, world.recommendations(),
                                    simkit::search_oracle(world),
                                    std::string(labels::display_name(order[0])),
                                    config.target, config.weighting);
  for (std::size_t i = 0; i < result.models.size(); ++i) {
    result.models[i].ground_truth =
        ground_truth_confusion(world, result.models[i].model, result.reports[i].threshold);
  }
  return result;
}

std::string render(const ExperimentResult& result) {
  std::ostringstream out;
  out << evalkit::render_table(result.reports);
  out << "pool pairs: " << result.pool_size << ", logged pairs: " << result.logged_pairs
      << ", click positives: " << result.click_positives << '\n';
  for (std::size_t i = 0; i < result.models.size(); ++i) {
    const auto& m = result.models[i];
    const auto& r = result.reports[i];
    out << std::left << std::setw(22) << m.name << std::fixed << std::setprecision(4)
        << " threshold=" << r.threshold << " ground-truth F1=" << m.ground_truth.f1()
        << " precision=" << m.ground_truth.precision()
        << " recall=" << m.ground_truth.recall() << '\n';
  }
  return out.str();
}

json to_json(const ExperimentResult& result) {
  json j = evalkit::reports_to_json(result.reports);
  json models = json::array();
  for (const auto& m : result.models) {
    models.push_back({{"name", m.name},
                      {"trained_on", m.strategy ? json(labels::to_string(*m.strategy))
                                                : json(nullptr)},
                      {"weights", m.model.weights},
                      {"training_examples", m.training_examples},
                      {"final_loss", m.final_loss},
                      {"ground_truth",
                       {{"tp", m.ground_truth.tp},
                        {"fp", m.ground_truth.fp},
                        {"fn", m.ground_truth.fn},
                        {"tn", m.ground_truth.tn},
                        {"precision", m.ground_truth.precision()},
                        {"recall", m.ground_truth.recall()},
                        {"f1", m.ground_truth.f1()}}}});
  }
  j["models"] = models;
  j["pool_size"] = result.pool_size;
  j["logged_pairs"] = result.logged_pairs;
  j["click_positives"] = result.click_positives;
  return j;
}

}  // namespace kprel::experiment
