#include "kprel/labels.h"

#include <gtest/gtest.h>

#include <random>

#include "kprel/error.h"
#include "test_support.h"

namespace kprel::labels {
namespace {

ClickRecord click(std::int64_t impressions, std::int64_t clicks, std::string kp = "kp",
                  std::string title = "title") {
  ClickRecord r;
  r.item_id = "i-" + title;
  r.keyphrase = std::move(kp);
  r.category = "cat";
  r.title = std::move(title);
  r.impressions = impressions;
  r.clicks = clicks;
  return r;
}

JudgeVerdict verdict(std::string kp, std::string title, bool yes,
                     JudgeKind kind = JudgeKind::kGeneral) {
  return {"i-" + title, std::move(kp), std::move(title), "cat", yes, kind};
}

SearchRelevanceRecord search(std::string kp, std::string title, Label v) {
  return {"i-" + title, std::move(kp), std::move(title), "cat", v};
}

TEST(ClickFilter, ThresholdExamples) {
  EXPECT_TRUE(passes_click_filter(click(30, 3)));
  EXPECT_FALSE(passes_click_filter(click(1000, 1)));
  EXPECT_FALSE(passes_click_filter(click(29, 29)));
  EXPECT_FALSE(passes_click_filter(click(100, 0)));
  EXPECT_FALSE(passes_click_filter(click(31, 3)));
}

TEST(ClickFilter, Idempotent) {
  std::mt19937_64 rng(5);
  std::vector<ClickRecord> records;
  for (int i = 0; i < 500; ++i) {
    const auto imp = static_cast<std::int64_t>(rng() % 100);
    const auto clk = imp == 0 ? 0 : static_cast<std::int64_t>(rng() % (imp + 1));
    records.push_back(click(imp, clk, "kp" + std::to_string(i)));
  }
  const auto once = filter_clicks(records);
  EXPECT_EQ(filter_clicks(once), once);
  for (const auto& r : once) EXPECT_TRUE(passes_click_filter(r));
}

TEST(ClickRecordValidation, RejectsImpossibleCounts) {
  auto r = click(10, 11);
  EXPECT_THROW(validate(r), Error);
  r = click(10, 5);
  r.purchases = 6;
  EXPECT_THROW(validate(r), Error);
  r.purchases = 1;
  r.gmb = -1.0;
  EXPECT_THROW(validate(r), Error);
}

TEST(BinarizeHuman, UnanimityRequired) {
  HumanJudgment j;
  j.grades = {Grade::kExcellent, Grade::kExcellent, Grade::kExcellent};
  EXPECT_EQ(binarize_human(j), Label::kRelevant);
  j.grades = {Grade::kGood, Grade::kGood, Grade::kBad};
  EXPECT_EQ(binarize_human(j), std::nullopt);
  j.grades = {Grade::kFair, Grade::kFair, Grade::kFair};
  EXPECT_EQ(binarize_human(j), Label::kIrrelevant);
  j.grades = {Grade::kExcellent, Grade::kGood, Grade::kGood};
  EXPECT_EQ(binarize_human(j), std::nullopt);
}

TEST(Mix, SearchPlusMinus) {
  std::vector<SearchRelevanceRecord> s = {
      search("a", "t1", Label::kRelevant), search("b", "t2", Label::kRelevant),
      search("c", "t3", Label::kRelevant), search("d", "t4", Label::kIrrelevant),
      search("e", "t5", Label::kIrrelevant)};
  const auto out = mix(MixStrategy::kSearchPM, {}, s, {});
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(std::count_if(out.begin(), out.end(),
                          [](const auto& e) { return e.label == Label::kRelevant; }),
            3);
}

TEST(Mix, LlmIgnoresClicks) {
  const auto out = mix(MixStrategy::kLlmPM, {click(30, 3, "p1", "t1"), click(5, 0)}, {},
                       {verdict("p1", "t1", true), verdict("p2", "t2", false)});
  ASSERT_EQ(out.size(), 2u);
  for (const auto& e : out) EXPECT_EQ(e.provenance, Provenance::kLlm);
}

TEST(Mix, ClickPositiveBeatsJudgeNegative) {
  const auto out = mix(MixStrategy::kClickPLlmM, {click(30, 3, "p1", "t1")}, {},
                       {verdict("p1", "t1", false), verdict("p2", "t2", false),
                        verdict("p3", "t3", true)});
  // Judge-yes is discarded under this strategy.
  ASSERT_EQ(out.size(), 2u);
  const auto it = std::find_if(out.begin(), out.end(),
                               [](const auto& e) { return e.keyphrase == "p1"; });
  ASSERT_NE(it, out.end());
  EXPECT_EQ(it->label, Label::kRelevant);
  EXPECT_EQ(it->provenance, Provenance::kClick);
}

TEST(Mix, PositiveBeatsNegativeAndOnePerTriple) {
  const auto out = mix(MixStrategy::kClickPLlmPM, {}, {},
                       {verdict("p", "t", false), verdict("p", "t", true),
                        verdict("q", "t", false), verdict("q", "t", false)});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].keyphrase, "p");
  EXPECT_EQ(out[0].label, Label::kRelevant);
  EXPECT_EQ(out[1].label, Label::kIrrelevant);
}

TEST(Mix, ClickSearchMinus) {
  const auto out = mix(MixStrategy::kClickPSearchM, {click(40, 8, "p", "t")},
                       {search("p", "t", Label::kIrrelevant),
                        search("x", "y", Label::kRelevant),
                        search("n", "m", Label::kIrrelevant)},
                       {});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].keyphrase, "n");
  EXPECT_EQ(out[0].label, Label::kIrrelevant);
  EXPECT_EQ(out[1].label, Label::kRelevant);
}

TEST(Mix, PreconditionsEnforced) {
  EXPECT_THROW(mix(MixStrategy::kClickPSearchM, {click(1000, 1)},
                   {search("n", "m", Label::kIrrelevant)}, {}),
               Error);
  EXPECT_THROW(mix(MixStrategy::kFtLlmPM, {}, {},
                   {verdict("a", "b", true), verdict("c", "d", false)}),
               Error);
  EXPECT_THROW(mix(MixStrategy::kLlmPM, {}, {},
                   {verdict("a", "b", true, JudgeKind::kFinetuned),
                    verdict("c", "d", false, JudgeKind::kFinetuned)}),
               Error);
  try {
    mix(MixStrategy::kLlmPM, {}, {}, {verdict("a", "b", true)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUntrainable);
  }
}

TEST(Mix, SimulatedJudgeAcceptedEverywhere) {
  const std::vector<JudgeVerdict> v = {verdict("a", "b", true, JudgeKind::kSimulated),
                                       verdict("c", "d", false, JudgeKind::kSimulated)};
  EXPECT_EQ(mix(MixStrategy::kLlmPM, {}, {}, v).size(), 2u);
  EXPECT_EQ(mix(MixStrategy::kFtLlmPM, {}, {}, v).size(), 2u);
}

TEST(Mix, OutputIndependentOfInputOrder) {
  std::vector<JudgeVerdict> v;
  for (int i = 0; i < 40; ++i) {
    v.push_back(verdict("k" + std::to_string(i % 7), "t" + std::to_string(i % 5), i % 3 == 0));
  }
  const auto a = mix(MixStrategy::kLlmPM, {}, {}, v);
  std::reverse(v.begin(), v.end());
  EXPECT_EQ(mix(MixStrategy::kLlmPM, {}, {}, v), a);
}

TEST(Names, RoundTrip) {
  for (auto s : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_EQ(display_name(MixStrategy::kClickPLlmM), "Click (+) LLM (-)");
  EXPECT_EQ(display_name(MixStrategy::kSearchPM), "Search (+/-)");
  EXPECT_THROW(parse_strategy("LLM"), Error);
}

TEST(Io, ClickCsvAndJsonlAgree) {
  testing::TempDir dir;
  testing::spit(dir.file("c.csv"),
                "item_id,keyphrase,category,title,impressions,clicks,purchases,gmb\n"
                "i1,\"usb, cable\",Cables,\"Anker \"\"USB\"\" cable\",40,5,1,12.5\n");
  const auto from_csv = read_clicks(dir.file("c.csv"));
  ASSERT_EQ(from_csv.size(), 1u);
  EXPECT_EQ(from_csv[0].keyphrase, "usb, cable");
  EXPECT_EQ(from_csv[0].title, "Anker \"USB\" cable");
  write_jsonl(dir.file("c.jsonl"), from_csv);
  EXPECT_EQ(read_clicks(dir.file("c.jsonl")), from_csv);
}

TEST(Io, BadLineReportsLineNumber) {
  testing::TempDir dir;
  testing::spit(dir.file("v.jsonl"),
                "{\"item_id\":\"i\",\"keyphrase\":\"k\",\"title\":\"t\",\"category\":\"c\","
                "\"yes\":true,\"judge_kind\":\"general\"}\n\n{not json}\n");
  try {
    read_verdicts(dir.file("v.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace kprel::labels
