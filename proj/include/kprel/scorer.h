#ifndef KPREL_SCORER_H_
#define KPREL_SCORER_H_

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "kprel/labels.h"
#include "kprel/textcore.h"

namespace kprel::scorer {

using Weights = std::array<double, textcore::kFeatureDim>;

// Immutable after training. weights[i] multiplies component i of
// textcore::FeatureVector; the last component is the constant bias feature.
struct RelevanceModel {
  Weights weights{};
  std::string version;
  std::optional<labels::MixStrategy> trained_on;  // empty for hand-built models
  std::string feature_schema_hash = textcore::feature_schema_hash();
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const RelevanceModel&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 200;
  std::uint64_t seed = 0;
  double l2 = 1e-4;
  double positive_class_weight = 1.0;
};

// One distinct (features, label) row with its multiplicity. Training runs over
// these rows so duplicated examples only change counts.
struct TrainingRow {
  Weights features{};
  bool positive = false;
  double count = 0.0;
};

struct TrainingSet {
  std::vector<TrainingRow> rows;  // sorted by (features, positive)
  double total_count = 0.0;
};

struct TrainReport {
  RelevanceModel model;
  double final_loss = 0.0;
  // loss_history[e] is the objective before epoch e; the last entry is the
  // objective of the returned weights.
  std::vector<double> loss_history;
  double train_accuracy = 0.0;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// The single scoring path shared by score(), batch inference and the NRT
// service: fixed-order dot product followed by sigmoid.
inline double score_features(const Weights& w, const Weights& x) {
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * x[i];
  return sigmoid(z);
}

// Throws Error(kUntrainable) on an empty or single-class dataset and
// Error(kInvalidInput) if an example cannot be featurized.
TrainingSet build_training_set(const std::vector<labels::LabeledExample>& dataset);

// Full-batch gradient descent on mean L2-regularized binary cross-entropy,
// weights initialized to zero. The bias weight is not regularized.
// Throws Error(kNumerical) if the objective becomes non-finite.
TrainReport train(const std::vector<labels::LabeledExample>& dataset,
                  const TrainConfig& config);

// Throws Error(kSchemaMismatch) if the model was built against a different
// feature layout, Error(kInvalidInput) for unfeaturizable text.
double score(const RelevanceModel& model, std::string_view keyphrase,
             std::string_view category, std::string_view title);

void check_schema(const RelevanceModel& model);

// Raw Jaccard expressed as a model: weights (w, 0, 0, 0, 0, 0, b), w > 0.
// Ranks pairs exactly as jaccard() does.
RelevanceModel jaccard_baseline(double w = 1.0, double b = 0.0);

inline constexpr std::string_view kModelFormat = "kprel.relevance_model";
inline constexpr int kModelFormatVersion = 1;

std::string save(const RelevanceModel& model);
// Throws Error(kCorruptPayload), Error(kVersionMismatch) or
// Error(kSchemaMismatch).
RelevanceModel load(std::string_view bytes);

RelevanceModel load_file(const std::string& path);
void save_file(const RelevanceModel& model, const std::string& path);

}  // namespace kprel::scorer

#endif  // KPREL_SCORER_H_
