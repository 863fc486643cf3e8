#include "kprel/scorer.h"

#include <cmath>
#include <map>

#include "kprel/error.h"
#include "kprel/jsonl.h"
#include "kprel/kernels.h"

namespace kprel::scorer {

using nlohmann::json;

namespace {

void validate_config(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw Error(ErrorCode::kInvalidInput, "learning_rate must be positive");
  }
  if (c.epochs < 0) throw Error(ErrorCode::kInvalidInput, "epochs must be >= 0");
  if (!(c.l2 >= 0.0)) throw Error(ErrorCode::kInvalidInput, "l2 must be >= 0");
  if (!(c.positive_class_weight > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "positive_class_weight must be positive");
  }
}

double accuracy(const TrainingSet& set, const Weights& w) {
  double correct = 0.0;
  for (const auto& r : set.rows) {
    const bool predicted = score_features(w, r.features) >= 0.5;
    if (predicted == r.positive) correct += r.count;
  }
  return correct / set.total_count;
}

}  // namespace

TrainingSet build_training_set(const std::vector<labels::LabeledExample>& dataset) {
  std::map<std::pair<Weights, bool>, double> counts;
  bool has_pos = false, has_neg = false;
  for (const auto& e : dataset) {
    const auto f = textcore::extract_features(e.keyphrase, e.category, e.title);
    const bool positive = e.label == labels::Label::kRelevant;
    (positive ? has_pos : has_neg) = true;
    counts[{f.as_array(), positive}] += 1.0;
  }
  if (dataset.empty()) {
    throw Error(ErrorCode::kUntrainable, "training dataset is empty");
  }
  if (!has_pos || !has_neg) {
    throw Error(ErrorCode::kUntrainable,
                std::string("training dataset contains only ") +
                    (has_pos ? "relevant" : "irrelevant") +
                    " examples; both classes are required");
  }
  TrainingSet set;
  set.rows.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    set.rows.push_back({key.first, key.second, n});
    set.total_count += n;
  }
  return set;
}

TrainReport train(const std::vector<labels::LabeledExample>& dataset,
                  const TrainConfig& config) {
  validate_config(config);
  const TrainingSet set = build_training_set(dataset);
  const kernels::ObjectiveParams params{config.l2, config.positive_class_weight};

  Weights w{};
  TrainReport report;
  report.loss_history.reserve(static_cast<std::size_t>(config.epochs) + 1);
  for (int epoch = 0;; ++epoch) {
    const auto obj = kernels::objective_parallel(set, w, params);
    if (!std::isfinite(obj.loss)) {
      throw Error(ErrorCode::kNumerical,
                  "training loss became non-finite at epoch " + std::to_string(epoch) +
                      "; lower the learning rate");
    }
    report.loss_history.push_back(obj.loss);
    if (epoch == config.epochs) break;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= config.learning_rate * obj.gradient[i];
    }
  }
  for (double v : w) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNumerical, "non-finite weight");
  }

  report.final_loss = report.loss_history.back();
  report.train_accuracy = accuracy(set, w);
  report.model.weights = w;
  report.model.metadata = {{"learning_rate", config.learning_rate},
                           {"epochs", config.epochs},
                           {"seed", config.seed},
                           {"l2", config.l2},
                           {"positive_class_weight", config.positive_class_weight},
                           {"examples", set.total_count},
                           {"final_loss", report.final_loss},
                           {"train_accuracy", report.train_accuracy}};
  return report;
}

void check_schema(const RelevanceModel& model) {
  if (model.feature_schema_hash != textcore::feature_schema_hash()) {
    throw Error(ErrorCode::kSchemaMismatch,
                "model feature schema " + model.feature_schema_hash +
                    " does not match this build (" + textcore::feature_schema_hash() + ")");
  }
}

double score(const RelevanceModel& model, std::string_view keyphrase,
             std::string_view category, std::string_view title) {
  check_schema(model);
  const auto f = textcore::extract_features(keyphrase, category, title);
  return score_features(model.weights, f.as_array());
}

RelevanceModel jaccard_baseline(double w, double b) {
  if (!(w > 0.0)) throw Error(ErrorCode::kInvalidInput, "jaccard weight must be > 0");
  RelevanceModel m;
  m.weights = {w, 0.0, 0.0, 0.0, 0.0, 0.0, b};
  m.version = "jaccard-baseline";
  m.metadata = {{"kind", "jaccard_baseline"}};
  return m;
}

std::string save(const RelevanceModel& model) {
  json j;
  j["format"] = kModelFormat;
  j["format_version"] = kModelFormatVersion;
  j["version"] = model.version;
  j["trained_on"] = model.trained_on ? json(labels::to_string(*model.trained_on))
                                     : json(nullptr);
  j["feature_schema_hash"] = model.feature_schema_hash;
  j["weights"] = model.weights;
  j["metadata"] = model.metadata;
  return j.dump(2) + "\n";
}

RelevanceModel load(std::string_view bytes) {
  if (bytes.empty()) throw Error(ErrorCode::kCorruptPayload, "empty model payload");
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kCorruptPayload, std::string("model is not JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kModelFormat) {
      throw Error(ErrorCode::kCorruptPayload, "not a relevance model document");
    }
    const int fv = j.at("format_version").get<int>();
    if (fv != kModelFormatVersion) {
      throw Error(ErrorCode::kVersionMismatch,
                  "model format version " + std::to_string(fv) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
    }
    RelevanceModel m;
    m.version = j.at("version").get<std::string>();
    if (!j.at("trained_on").is_null()) {
      m.trained_on = labels::parse_strategy(j.at("trained_on").get<std::string>());
    }
    m.feature_schema_hash = j.at("feature_schema_hash").get<std::string>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != m.weights.size()) {
      throw Error(ErrorCode::kCorruptPayload,
                  "model has " + std::to_string(w.size()) + " weights, expected " +
                      std::to_string(m.weights.size()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(w[i])) throw Error(ErrorCode::kCorruptPayload, "non-finite weight");
      m.weights[i] = w[i];
    }
    m.metadata = j.value("metadata", json::object());
    check_schema(m);
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptPayload, std::string("malformed model: ") + e.what());
  }
}

RelevanceModel load_file(const std::string& path) { return load(jsonl::read_text(path)); }

void save_file(const RelevanceModel& model, const std::string& path) {
  jsonl::write_text(path, save(model));
}

}  // namespace kprel::scorer
