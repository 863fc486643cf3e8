#include "kprel/evalkit.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "calibration_oracle.h"
#include "kprel/error.h"
#include "test_support.h"

namespace kprel::evalkit {
namespace {

using labels::ClickRecord;

TEST(CalibrateScores, HandExample) {
  const auto r = calibrate_scores({{0.9, 10}, {0.5, 5}, {0.2, 5}}, 0.75, Weighting::kByClicks);
  EXPECT_EQ(r.threshold, 0.5);
  EXPECT_EQ(r.achieved_retention, 0.75);
}

TEST(CalibrateScores, DegenerateAndFullTarget) {
  auto r = calibrate_scores({{0.3, 4}, {0.3, 9}}, 0.95, Weighting::kByClicks);
  EXPECT_EQ(r.threshold, 0.3);
  EXPECT_EQ(r.achieved_retention, 1.0);
  r = calibrate_scores({{0.8, 1}, {0.1, 1}, {0.4, 50}}, 1.0, Weighting::kByClicks);
  EXPECT_EQ(r.threshold, 0.1);
  EXPECT_THROW(calibrate_scores({}, 0.9, Weighting::kByClicks), Error);
  EXPECT_THROW(calibrate_scores({{0.5, 1}}, 0.0, Weighting::kByClicks), Error);
  EXPECT_THROW(calibrate_scores({{0.5, 1}}, 1.5, Weighting::kByClicks), Error);
}

TEST(Calibrate, MatchesBruteForceOnRandomLogs) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto log = testing::random_click_log(rng, 1 + rng() % 1500);
    const auto model = testing::random_model(rng);
    const double target = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    bool any_click = false;
    for (const auto& r : log) any_click |= r.clicks > 0;
    if (!any_click) continue;
    for (auto w : {Weighting::kByClicks, Weighting::kByPairs}) {
      EXPECT_EQ(calibrate(model, log, target, w).threshold,
                testing::brute_force_threshold(model, log, target, w));
    }
  }
}

TEST(Calibrate, UnclickedPairsDoNotCount) {
  std::mt19937_64 rng(32);
  auto log = testing::random_click_log(rng, 200);
  const auto model = testing::random_model(rng);
  const auto before = calibrate(model, log, 0.9);
  for (auto& r : log) {
    if (r.clicks == 0) r.title = "completely different words here";
  }
  EXPECT_EQ(calibrate(model, log, 0.9).threshold, before.threshold);
}

ClickRecord rec(std::string kp, std::string title, std::int64_t clicks, double gmb) {
  return {"i-" + title, std::move(kp), "cat", std::move(title), 100, clicks, 0, gmb};
}

TEST(SalesRetention, Examples) {
  const auto model = scorer::jaccard_baseline();
  const std::vector<ClickRecord> log = {rec("red shoes", "red shoes", 5, 100.0),
                                        rec("red shoes", "blue hat", 5, 50.0)};
  const double hi = scorer::score(model, "red shoes", "cat", "red shoes");
  EXPECT_NEAR(*sales_retention(model, hi, log), 100.0 / 150.0, 1e-9);
  EXPECT_EQ(*sales_retention(model, 0.0, log), 1.0);
  EXPECT_EQ(*sales_retention(model, 1.0, log), 0.0);
  const std::vector<ClickRecord> no_gmb = {rec("a", "a", 1, 0.0)};
  EXPECT_FALSE(sales_retention(model, 0.5, no_gmb).has_value());
}

TEST(Retention, MonotoneInThreshold) {
  std::mt19937_64 rng(33);
  const auto log = testing::random_click_log(rng, 400);
  const auto model = testing::random_model(rng);
  std::vector<Recommendation> recs;
  for (const auto& r : log) recs.push_back({r.item_id.substr(0, 3), r.category, r.title, r.keyphrase});
  double prev_c = 2, prev_s = 2, prev_k = 1e9;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const double c = clicks_retained(model, t, log);
    const double s = *sales_retention(model, t, log);
    const double k = survivors_per_item(model, t, recs);
    EXPECT_LE(c, prev_c);
    EXPECT_LE(s, prev_s);
    EXPECT_LE(k, prev_k);
    prev_c = c;
    prev_s = s;
    prev_k = k;
  }
}

TEST(Decisions, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(34);
  const auto log = testing::random_click_log(rng, 300);
  auto model = testing::random_model(rng);
  const double t = 0.6;
  // Adding c to the bias maps sigmoid(z) to sigmoid(z + c), strictly increasing.
  auto shifted = model;
  shifted.weights.back() += 0.7;
  const double z = std::log(t / (1 - t));
  const double t2 = 1.0 / (1.0 + std::exp(-(z + 0.7)));
  for (const auto& r : log) {
    const bool a = scorer::score(model, r.keyphrase, r.category, r.title) >= t;
    const bool b = scorer::score(shifted, r.keyphrase, r.category, r.title) >= t2;
    const double sa = scorer::score(model, r.keyphrase, r.category, r.title);
    if (std::fabs(sa - t) > 1e-9) {
      EXPECT_EQ(a, b);
    }
  }
}

std::vector<Recommendation> recs_for(int items, int per_item) {
  std::vector<Recommendation> out;
  for (int i = 0; i < items; ++i) {
    for (int k = 0; k < per_item; ++k) {
      out.push_back({"item" + std::to_string(i), "cat", "alpha beta gamma",
                     k < 6 ? "alpha beta" : "delta"});
    }
  }
  return out;
}

TEST(KeyphraseReduction, Examples) {
  const auto recs = recs_for(10, 10);
  const auto model = scorer::jaccard_baseline();
  // Everything survives at 0; only the 6 overlapping keyphrases per item at 0.6.
  EXPECT_EQ(*keyphrase_reduction(model, 0.0, recs, model, 0.0), 0.0);
  EXPECT_NEAR(*keyphrase_reduction(model, 0.6, recs, model, 0.0), -40.0, 1e-12);
  EXPECT_GT(*keyphrase_reduction(model, 0.0, recs, model, 0.6), 0.0);
  EXPECT_FALSE(keyphrase_reduction(model, 0.0, recs, model, 1.0).has_value());
}

TEST(SearchPassRate, Examples) {
  std::vector<Recommendation> recs;
  for (int i = 0; i < 10; ++i) recs.push_back({"i" + std::to_string(i), "c", "t", "t"});
  const auto model = scorer::jaccard_baseline();
  SearchOracle eight = [](const Recommendation& r) { return r.item_id != "i0" && r.item_id != "i1"; };
  EXPECT_EQ(*search_pass_rate(model, 0.0, recs, eight), 0.8);
  EXPECT_EQ(*search_pass_rate(model, 0.0, recs, [](const auto&) { return true; }), 1.0);
  EXPECT_EQ(*search_pass_rate(model, 0.0, recs, [](const auto&) { return false; }), 0.0);
  EXPECT_FALSE(search_pass_rate(model, 1.0, recs, eight).has_value());
}

// Direct formula from the 2x2 table [[both yes, a yes b no], [a no b yes, both no]].
double kappa_from_table(long yy, long yn, long ny, long nn) {
  const double n = static_cast<double>(yy + yn + ny + nn);
  const double po = static_cast<double>(yy + nn) / n;
  const double pa = static_cast<double>(yy + yn) / n;
  const double pb = static_cast<double>(yy + ny) / n;
  const double pe = pa * pb + (1 - pa) * (1 - pb);
  return (po - pe) / (1 - pe);
}

std::pair<std::vector<bool>, std::vector<bool>> expand(long yy, long yn, long ny, long nn) {
  std::vector<bool> a, b;
  auto push = [&](long k, bool x, bool y) {
    for (long i = 0; i < k; ++i) {
      a.push_back(x);
      b.push_back(y);
    }
  };
  push(yy, true, true);
  push(yn, true, false);
  push(ny, false, true);
  push(nn, false, false);
  return {a, b};
}

double kappa(const std::vector<bool>& a, const std::vector<bool>& b) {
  const std::unique_ptr<bool[]> pa(new bool[a.size()]), pb(new bool[b.size()]);
  std::copy(a.begin(), a.end(), pa.get());
  std::copy(b.begin(), b.end(), pb.get());
  return cohen_kappa({pa.get(), a.size()}, {pb.get(), b.size()});
}

TEST(Kappa, DerivedExamplesExact) {
  auto [a, b] = expand(20, 5, 10, 15);
  EXPECT_EQ(kappa(a, b), 0.4);
  std::vector<bool> all_yes(10, true), half(10, false);
  for (int i = 0; i < 5; ++i) half[static_cast<std::size_t>(i)] = true;
  EXPECT_EQ(kappa(all_yes, half), 0.0);
  std::vector<bool> mixed = {true, false, true, false};
  EXPECT_EQ(kappa(mixed, mixed), 1.0);
}

TEST(Kappa, RandomTablesMatchFormulaAndSymmetry) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 300; ++trial) {
    const long yy = static_cast<long>(rng() % 40), yn = static_cast<long>(rng() % 40),
               ny = static_cast<long>(rng() % 40), nn = static_cast<long>(rng() % 40) + 1;
    if (yy + yn == 0 && yy + ny == 0) continue;
    auto [a, b] = expand(yy, yn, ny, nn);
    const double k = kappa(a, b);
    EXPECT_NEAR(k, kappa_from_table(yy, yn, ny, nn), 1e-9);
    EXPECT_EQ(k, kappa(b, a));
    std::vector<bool> na(a.size()), nb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      na[i] = !a[i];
      nb[i] = !b[i];
    }
    EXPECT_EQ(k, kappa(na, nb));
  }
}

TEST(Kappa, UndefinedAndInvalid) {
  std::vector<bool> yes(5, true);
  EXPECT_EQ(kappa(yes, yes), 1.0);
  EXPECT_THROW(kappa({true}, {true, false}), Error);
  EXPECT_THROW(kappa({}, {}), Error);
}

TEST(Concordance, Examples) {
  std::set<PairKey> clicked;
  std::vector<labels::JudgeVerdict> v;
  for (int i = 0; i < 10; ++i) {
    clicked.insert({"i" + std::to_string(i), "k"});
    v.push_back({"i" + std::to_string(i), "k", "t", "c", i != 3, labels::JudgeKind::kGeneral});
  }
  EXPECT_EQ(*concordance(v, clicked), 0.9);
  clicked.insert({"unjudged", "k"});
  v.push_back({"not-clicked", "k", "t", "c", false, labels::JudgeKind::kGeneral});
  EXPECT_EQ(*concordance(v, clicked), 0.9);
  v[3].yes = true;
  EXPECT_EQ(*concordance(v, clicked), 1.0);
  EXPECT_FALSE(concordance(v, {{"x", "y"}}).has_value());
}

TEST(RatioMetrics, Formulas) {
  std::vector<ClickRecord> log = {{"i", "k", "c", "t", 10000, 200, 10, 1120.0}};
  const auto m = ratio_metrics(log, 1000.0);
  EXPECT_EQ(*m.ctr, 0.02);
  EXPECT_EQ(*m.cvr, 0.05);
  EXPECT_NEAR(*m.roas, 1.12, 1e-15);
  EXPECT_THROW(ratio_metrics(log, 0.0), Error);
}

TEST(FormatPct, Rounding) {
  EXPECT_EQ(format_pct(103.4), "+103%");
  EXPECT_EQ(format_pct(-31.0), "-31%");
  EXPECT_EQ(format_pct(0.2), "0%");
  EXPECT_EQ(format_pct(-0.4), "0%");
  EXPECT_EQ(format_pct(std::nullopt), "n/a");
}

TEST(Compare, BaselineRowAndIdenticalModel) {
  std::mt19937_64 rng(36);
  const auto log = testing::random_click_log(rng, 300);
  std::vector<Recommendation> recs;
  for (const auto& r : log) recs.push_back({r.item_id, r.category, r.title, r.keyphrase});
  const auto model = testing::random_model(rng);
  const auto other = testing::random_model(rng);
  SearchOracle oracle = [](const Recommendation& r) { return r.keyphrase.size() % 2 == 0; };
  const auto reports = compare({{"Base", model}, {"Same", model}, {"Other", other}}, log, recs,
                               oracle, "Base");
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_TRUE(reports[0].is_baseline);
  for (int i : {0, 1}) {
    EXPECT_EQ(*reports[static_cast<std::size_t>(i)].keyphrase_delta_pct, 0.0);
    EXPECT_EQ(*reports[static_cast<std::size_t>(i)].sales_delta_pct, 0.0);
    EXPECT_EQ(*reports[static_cast<std::size_t>(i)].search_pass_rate_delta_pct, 0.0);
  }
  const auto table = render_table(reports);
  EXPECT_EQ(table.substr(0, table.find('\n')),
            "Model | # Keyphrases | Sales | Search Pass Rate");
  EXPECT_NE(table.find("\nBase  |           0% |    0% |               0%\n"), std::string::npos)
      << table;
  EXPECT_NE(table.find("reference: Base search pass rate = "), std::string::npos);
  EXPECT_THROW(compare({{"A", model}}, log, recs, oracle, "B"), Error);
  const auto csv = reports_to_csv(reports);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(SearchOracleFile, UnknownPairsFail) {
  testing::TempDir dir;
  testing::spit(dir.file("o.jsonl"),
                "{\"item_id\":\"a\",\"keyphrase\":\"k\",\"pass\":true}\n"
                "{\"item_id\":\"b\",\"keyphrase\":\"k\",\"pass\":false}\n");
  const auto oracle = load_search_oracle(dir.file("o.jsonl"));
  EXPECT_TRUE(oracle({"a", "c", "t", "k"}));
  EXPECT_FALSE(oracle({"b", "c", "t", "k"}));
  EXPECT_FALSE(oracle({"z", "c", "t", "k"}));
}

}  // namespace
}  // namespace kprel::evalkit
