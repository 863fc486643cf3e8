#ifndef KPREL_LABELS_H_
#define KPREL_LABELS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace kprel::labels {

enum class Label { kIrrelevant, kRelevant };
enum class Provenance { kClick, kSearch, kLlm, kHuman };
enum class Grade { kExcellent, kGood, kFair, kBad };
enum class JudgeKind { kGeneral, kFinetuned, kSimulated };

// Closed set of dataset mixing strategies; names follow the model list they
// reproduce ("Click (+) LLM (-)" is CLICK_P_LLM_M, and so on).
enum class MixStrategy {
  kSearchPM,
  kClickPSearchM,
  kClickPLlmPM,
  kClickPLlmM,
  kLlmPM,
  kFtLlmPM,
};

inline constexpr std::array<MixStrategy, 6> kAllStrategies = {
    MixStrategy::kSearchPM,   MixStrategy::kClickPSearchM,
    MixStrategy::kClickPLlmPM, MixStrategy::kClickPLlmM,
    MixStrategy::kLlmPM,      MixStrategy::kFtLlmPM};

std::string_view to_string(Label v);
std::string_view to_string(Provenance v);
std::string_view to_string(Grade v);
std::string_view to_string(JudgeKind v);
// Wire tag, e.g. "CLICK_P_LLM_M".
std::string_view to_string(MixStrategy v);
// Table-style display name, e.g. "Click (+) LLM (-)".
std::string_view display_name(MixStrategy v);

Label parse_label(std::string_view s);
Provenance parse_provenance(std::string_view s);
Grade parse_grade(std::string_view s);
JudgeKind parse_judge_kind(std::string_view s);
MixStrategy parse_strategy(std::string_view s);

struct ClickRecord {
  std::string item_id;
  std::string keyphrase;
  std::string category;
  std::string title;
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
  std::int64_t purchases = 0;
  double gmb = 0.0;

  bool operator==(const ClickRecord&) const = default;
};

// Throws Error(kInvalidInput) unless 0 <= purchases <= clicks <= impressions
// and gmb is finite and non-negative.
void validate(const ClickRecord& r);

struct HumanJudgment {
  std::string item_id;
  std::string keyphrase;
  std::string title;
  std::string category;
  std::array<Grade, 3> grades{};
};

struct SearchRelevanceRecord {
  std::string item_id;
  std::string keyphrase;
  std::string title;
  std::string category;
  Label verdict = Label::kIrrelevant;
};

struct JudgeVerdict {
  std::string item_id;
  std::string keyphrase;
  std::string title;
  std::string category;
  bool yes = false;
  JudgeKind judge_kind = JudgeKind::kGeneral;

  bool operator==(const JudgeVerdict&) const = default;
};

struct LabeledExample {
  std::string title;
  std::string category;
  std::string keyphrase;
  Label label = Label::kIrrelevant;
  Provenance provenance = Provenance::kClick;

  bool operator==(const LabeledExample&) const = default;
  auto triple() const { return std::tie(title, category, keyphrase); }
};

inline constexpr std::int64_t kMinImpressions = 30;
inline constexpr std::int64_t kMinClicks = 1;
inline constexpr double kMinCtr = 0.1;

bool passes_click_filter(const ClickRecord& r);

// Keeps records with >= 30 impressions, >= 1 click and CTR >= 0.1.
std::vector<ClickRecord> filter_clicks(const std::vector<ClickRecord>& records);

// Unanimous grades only; excellent/good -> relevant, fair/bad -> irrelevant.
std::optional<Label> binarize_human(const HumanJudgment& j);

// Materializes a training set. Output is sorted by (title, category,
// keyphrase) with exactly one example per triple; a click-derived positive
// beats everything, then any positive beats any negative.
//
// Throws Error(kInvalidInput) when a click record has not passed
// filter_clicks or the judgments do not match the strategy's judge kind, and
// Error(kUntrainable) when the result is empty or single-class.
std::vector<LabeledExample> mix(MixStrategy strategy,
                                const std::vector<ClickRecord>& clicks,
                                const std::vector<SearchRelevanceRecord>& search,
                                const std::vector<JudgeVerdict>& judgments);

// JSON field names are the lower_snake_case struct member names.
nlohmann::json to_json(const ClickRecord& r);
nlohmann::json to_json(const HumanJudgment& r);
nlohmann::json to_json(const SearchRelevanceRecord& r);
nlohmann::json to_json(const JudgeVerdict& r);
nlohmann::json to_json(const LabeledExample& r);

ClickRecord click_from_json(const nlohmann::json& j);
HumanJudgment human_from_json(const nlohmann::json& j);
SearchRelevanceRecord search_from_json(const nlohmann::json& j);
JudgeVerdict verdict_from_json(const nlohmann::json& j);
LabeledExample example_from_json(const nlohmann::json& j);

// Accepts .jsonl, or .csv with a header row naming the ClickRecord fields.
std::vector<ClickRecord> read_clicks(const std::filesystem::path& path);
std::vector<HumanJudgment> read_human(const std::filesystem::path& path);
std::vector<SearchRelevanceRecord> read_search(const std::filesystem::path& path);
std::vector<JudgeVerdict> read_verdicts(const std::filesystem::path& path);
std::vector<LabeledExample> read_examples(const std::filesystem::path& path);

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& rows);

}  // namespace kprel::labels

#endif  // KPREL_LABELS_H_
