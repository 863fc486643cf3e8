#ifndef KPREL_EXPERIMENT_H_
#define KPREL_EXPERIMENT_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kprel/evalkit.h"
#include "kprel/labels.h"
#include "kprel/scorer.h"
#include "kprel/simkit.h"

namespace kprel::experiment {

// Closed-loop run over a simulated marketplace: historical click log under a
// pass-all advertising filter, search verdicts and two simulated judges over
// the recommendation pool, one model per mixing strategy plus the Jaccard
// baseline, all calibrated on the same log.
struct ExperimentConfig {
  simkit::SimConfig sim;
  double judge_epsilon = 0.05;       // general judge
  double finetuned_epsilon = 0.20;   // stand-in for the fine-tuned judge
  // The library defaults stop well short of convergence on pool-sized sets.
  scorer::TrainConfig train{.learning_rate = 0.5, .epochs = 2000};
  double target = evalkit::kDefaultRetentionTarget;
  evalkit::Weighting weighting = evalkit::Weighting::kByClicks;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Accepts {"sim": {...}, "judge_epsilon": ..., ...}; missing keys keep defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision() const;
  double recall() const;
  double f1() const;
};

struct ModelOutcome {
  std::string name;
  std::optional<labels::MixStrategy> strategy;
  scorer::RelevanceModel model;
  std::size_t training_examples = 0;
  double final_loss = 0.0;
  Confusion ground_truth;  // at the calibrated threshold over the pool
};

struct ExperimentResult {
  std::vector<ModelOutcome> models;  // same order as reports
  std::vector<evalkit::EvalReport> reports;
  std::size_t pool_size = 0;
  std::size_t logged_pairs = 0;
  std::size_t click_positives = 0;

  const ModelOutcome& model(const std::string& name) const;
  const evalkit::EvalReport& report(const std::string& name) const;
};

inline constexpr const char* kJaccardName = "Jaccard";

// Confusion of (score >= threshold) against ground truth over the pool.
Confusion ground_truth_confusion(const simkit::World& world,
                                 const scorer::RelevanceModel& model, double threshold);

ExperimentResult run_experiment(const ExperimentConfig& config);

// Table plus per-model ground-truth F1 lines.
std::string render(const ExperimentResult& result);
nlohmann::json to_json(const ExperimentResult& result);

}  // namespace kprel::experiment

#endif  // KPREL_EXPERIMENT_H_
