#include "kprel/scorer.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dataset_gen.h"
#include "kprel/error.h"
#include "kprel/kernels.h"
#include "kprel/textcore.h"
#include "test_support.h"

namespace kprel::scorer {
namespace {

using labels::Label;
using labels::LabeledExample;

// Direct per-example objective, written without the compressed training set.
double naive_loss(const std::vector<LabeledExample>& data, const Weights& w, double l2,
                  double pos_weight) {
  double total = 0.0;
  for (const auto& e : data) {
    const auto x = textcore::extract_features(e.keyphrase, e.category, e.title).as_array();
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
    const double p = 1.0 / (1.0 + std::exp(-z));
    total += e.label == Label::kRelevant ? -pos_weight * std::log(p) : -std::log(1.0 - p);
  }
  double penalty = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) penalty += w[i] * w[i];
  return total / static_cast<double>(data.size()) + 0.5 * l2 * penalty;
}

TEST(GradientCheck, AnalyticMatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> wdist(-1.5, 1.5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 31);
    const auto data = testing::random_dataset(rng, n);
    Weights w;
    for (auto& v : w) v = wdist(rng);
    const double l2 = (trial % 3 == 0) ? 0.0 : 0.05;
    const double pcw = (trial % 2 == 0) ? 1.0 : 2.5;
    const auto set = build_training_set(data);
    const auto obj = kernels::objective_serial(set, w, {l2, pcw});
    EXPECT_NEAR(obj.loss, naive_loss(data, w, l2, pcw), 1e-12);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double h = 1e-5;
      Weights up = w, down = w;
      up[i] += h;
      down[i] -= h;
      const double numeric =
          (naive_loss(data, up, l2, pcw) - naive_loss(data, down, l2, pcw)) / (2 * h);
      const double denom = std::max({std::fabs(numeric), std::fabs(obj.gradient[i]), 1e-3});
      const double rel = std::fabs(numeric - obj.gradient[i]) / denom;
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

std::vector<LabeledExample> toy_separable() {
  // Jaccard 1.0 for the positives, 0.0 for the negatives; other features
  // follow from the text.
  return {{"red shoes", "", "red shoes", Label::kRelevant, labels::Provenance::kHuman},
          {"blue hat", "", "blue hat", Label::kRelevant, labels::Provenance::kHuman},
          {"red shoes", "", "green tent", Label::kIrrelevant, labels::Provenance::kHuman},
          {"blue hat", "", "usb cable", Label::kIrrelevant, labels::Provenance::kHuman}};
}

TEST(Train, ZeroEpochsKeepsZeroWeights) {
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto r = train(toy_separable(), cfg);
  for (double w : r.model.weights) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(r.loss_history.size(), 1u);
  EXPECT_DOUBLE_EQ(r.final_loss, std::log(2.0));
}

TEST(Train, ToySeparableReachesPerfectAccuracy) {
  const auto r = train(toy_separable(), TrainConfig{});
  EXPECT_EQ(r.train_accuracy, 1.0);
  EXPECT_GT(score(r.model, "red shoes", "", "red shoes"),
            score(r.model, "red shoes", "", "green tent"));
}

TEST(Train, LossNonIncreasingAtDefaults) {
  const auto r = train(toy_separable(), TrainConfig{});
  ASSERT_EQ(r.loss_history.size(), 201u);
  for (std::size_t e = 1; e < r.loss_history.size(); ++e) {
    EXPECT_LE(r.loss_history[e], r.loss_history[e - 1]) << "epoch " << e;
  }
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    TrainConfig cfg;
    cfg.l2 = 0.0;
    const auto h = train(testing::random_dataset(rng, 32), cfg).loss_history;
    for (std::size_t e = 1; e < h.size(); ++e) EXPECT_LE(h[e], h[e - 1]);
  }
}

TEST(Train, DuplicationInvarianceIsBitwise) {
  std::mt19937_64 rng(77);
  const auto data = testing::random_dataset(rng, 25);
  auto doubled = data;
  doubled.insert(doubled.end(), data.begin(), data.end());
  const auto a = train(data, TrainConfig{});
  const auto b = train(doubled, TrainConfig{});
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.final_loss, b.final_loss);
}

TEST(Train, Deterministic) {
  std::mt19937_64 rng(78);
  const auto data = testing::random_dataset(rng, 30);
  EXPECT_EQ(train(data, TrainConfig{}).model, train(data, TrainConfig{}).model);
}

TEST(Train, Preconditions) {
  auto data = toy_separable();
  for (auto& e : data) e.label = Label::kRelevant;
  try {
    train(data, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUntrainable);
  }
  TrainConfig bad;
  bad.learning_rate = 0.0;
  EXPECT_THROW(train(toy_separable(), bad), Error);
  bad = TrainConfig{};
  bad.learning_rate = 1e6;
  bad.l2 = 1e6;
  try {
    train(toy_separable(), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumerical);
  }
}

TEST(Score, ClosedFormValues) {
  RelevanceModel zero;
  EXPECT_EQ(score(zero, "anything", "c", "at all"), 0.5);
  const auto jac = jaccard_baseline();
  EXPECT_NEAR(score(jac, "red shoes", "", "red shoes"), 0.7310585786300049, 1e-15);
  EXPECT_THROW(score(jac, "", "", "title"), Error);
}

TEST(Score, JaccardBaselineRanksLikeJaccard) {
  std::mt19937_64 rng(3);
  const auto data = testing::random_dataset(rng, 200);
  const auto model = jaccard_baseline(2.5, -1.0);
  for (std::size_t i = 0; i + 1 < data.size(); ++i) {
    const auto& a = data[i];
    const auto& b = data[i + 1];
    const double ja = textcore::jaccard(textcore::normalize(a.keyphrase), textcore::normalize(a.title));
    const double jb = textcore::jaccard(textcore::normalize(b.keyphrase), textcore::normalize(b.title));
    const double sa = score(model, a.keyphrase, a.category, a.title);
    const double sb = score(model, b.keyphrase, b.category, b.title);
    EXPECT_EQ(ja < jb, sa < sb);
    EXPECT_EQ(ja == jb, sa == sb);
  }
}

TEST(ModelIo, RoundTrip) {
  std::mt19937_64 rng(4);
  auto r = train(testing::random_dataset(rng, 20), TrainConfig{});
  r.model.version = "v7";
  r.model.trained_on = labels::MixStrategy::kLlmPM;
  EXPECT_EQ(load(save(r.model)), r.model);
  const auto jac = jaccard_baseline();
  EXPECT_EQ(load(save(jac)), jac);
  testing::TempDir dir;
  save_file(r.model, dir.file("m.json"));
  EXPECT_EQ(load_file(dir.file("m.json")), r.model);
}

TEST(ModelIo, RejectsDamagedPayloads) {
  auto expect_code = [](std::string_view bytes, ErrorCode code) {
    try {
      load(bytes);
      FAIL() << bytes;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  expect_code("", ErrorCode::kCorruptPayload);
  expect_code("{not json", ErrorCode::kCorruptPayload);
  auto j = nlohmann::json::parse(save(jaccard_baseline()));
  auto tampered = j;
  tampered["feature_schema_hash"] = "0000000000000000";
  expect_code(tampered.dump(), ErrorCode::kSchemaMismatch);
  tampered = j;
  tampered["format_version"] = 99;
  expect_code(tampered.dump(), ErrorCode::kVersionMismatch);
  tampered = j;
  tampered["weights"] = {1, 2, 3};
  expect_code(tampered.dump(), ErrorCode::kCorruptPayload);
}

TEST(ModelIo, ScoreChecksSchema) {
  RelevanceModel m;
  m.feature_schema_hash = "ffffffffffffffff";
  EXPECT_THROW(score(m, "a", "b", "c"), Error);
}

}  // namespace
}  // namespace kprel::scorer
