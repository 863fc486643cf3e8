#include "kprel/labels.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "kprel/error.h"
#include "kprel/jsonl.h"

namespace kprel::labels {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values,
             std::string_view what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::kInvalidInput,
              "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename T>
T field(const json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptPayload,
                std::string("field '") + name + "': " + e.what());
  }
}

std::int64_t parse_count(const std::string& s, const char* name) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kCorruptPayload,
                std::string("csv field '") + name + "' is not an integer: " + s);
  }
}

enum class Rank { kClickPositive = 0, kPositive = 1, kNegative = 2 };

Rank rank_of(const LabeledExample& e) {
  if (e.label == Label::kRelevant) {
    return e.provenance == Provenance::kClick ? Rank::kClickPositive
                                              : Rank::kPositive;
  }
  return Rank::kNegative;
}

bool uses_llm(MixStrategy s) {
  return s == MixStrategy::kClickPLlmPM || s == MixStrategy::kClickPLlmM ||
         s == MixStrategy::kLlmPM || s == MixStrategy::kFtLlmPM;
}

void check_judge_kinds(MixStrategy strategy,
                       const std::vector<JudgeVerdict>& judgments) {
  if (!uses_llm(strategy) || judgments.empty()) return;
  const JudgeKind kind = judgments.front().judge_kind;
  for (const auto& v : judgments) {
    if (v.judge_kind != kind) {
      throw Error(ErrorCode::kInvalidInput,
                  "judgments mix judge kinds; supply one judge's verdicts per dataset");
    }
  }
  const JudgeKind wanted = strategy == MixStrategy::kFtLlmPM
                               ? JudgeKind::kFinetuned
                               : JudgeKind::kGeneral;
  if (kind != wanted && kind != JudgeKind::kSimulated) {
    throw Error(ErrorCode::kInvalidInput,
                std::string(to_string(strategy)) + " expects " +
                    std::string(to_string(wanted)) + " judgments, got " +
                    std::string(to_string(kind)));
  }
}

}  // namespace

std::string_view to_string(Label v) {
  return v == Label::kRelevant ? "relevant" : "irrelevant";
}

std::string_view to_string(Provenance v) {
  switch (v) {
    case Provenance::kClick: return "click";
    case Provenance::kSearch: return "search";
    case Provenance::kLlm: return "llm";
    case Provenance::kHuman: return "human";
  }
  return "?";
}

std::string_view to_string(Grade v) {
  switch (v) {
    case Grade::kExcellent: return "excellent";
    case Grade::kGood: return "good";
    case Grade::kFair: return "fair";
    case Grade::kBad: return "bad";
  }
  return "?";
}

std::string_view to_string(JudgeKind v) {
  switch (v) {
    case JudgeKind::kGeneral: return "general";
    case JudgeKind::kFinetuned: return "finetuned";
    case JudgeKind::kSimulated: return "simulated";
  }
  return "?";
}

std::string_view to_string(MixStrategy v) {
  switch (v) {
    case MixStrategy::kSearchPM: return "SEARCH_PM";
    case MixStrategy::kClickPSearchM: return "CLICK_P_SEARCH_M";
    case MixStrategy::kClickPLlmPM: return "CLICK_P_LLM_PM";
    case MixStrategy::kClickPLlmM: return "CLICK_P_LLM_M";
    case MixStrategy::kLlmPM: return "LLM_PM";
    case MixStrategy::kFtLlmPM: return "FT_LLM_PM";
  }
  return "?";
}

std::string_view display_name(MixStrategy v) {
  switch (v) {
    case MixStrategy::kSearchPM: return "Search (+/-)";
    case MixStrategy::kClickPSearchM: return "Click (+) Search (-)";
    case MixStrategy::kClickPLlmPM: return "Click (+) LLM (+/-)";
    case MixStrategy::kClickPLlmM: return "Click (+) LLM (-)";
    case MixStrategy::kLlmPM: return "LLM (+/-)";
    case MixStrategy::kFtLlmPM: return "fine-tuned LLM (+/-)";
  }
  return "?";
}

Label parse_label(std::string_view s) {
  return parse_enum(s, std::array{Label::kIrrelevant, Label::kRelevant}, "label");
}
Provenance parse_provenance(std::string_view s) {
  return parse_enum(s,
                    std::array{Provenance::kClick, Provenance::kSearch,
                               Provenance::kLlm, Provenance::kHuman},
                    "provenance");
}
Grade parse_grade(std::string_view s) {
  return parse_enum(
      s, std::array{Grade::kExcellent, Grade::kGood, Grade::kFair, Grade::kBad},
      "grade");
}
JudgeKind parse_judge_kind(std::string_view s) {
  return parse_enum(s,
                    std::array{JudgeKind::kGeneral, JudgeKind::kFinetuned,
                               JudgeKind::kSimulated},
                    "judge kind");
}
MixStrategy parse_strategy(std::string_view s) {
  return parse_enum(s, kAllStrategies, "mix strategy");
}

void validate(const ClickRecord& r) {
  if (r.impressions < 0 || r.clicks < 0 || r.purchases < 0) {
    throw Error(ErrorCode::kInvalidInput, "negative count in click record " + r.item_id);
  }
  if (r.clicks > r.impressions) {
    throw Error(ErrorCode::kInvalidInput, "clicks exceed impressions for " + r.item_id);
  }
  if (r.purchases > r.clicks) {
    throw Error(ErrorCode::kInvalidInput, "purchases exceed clicks for " + r.item_id);
  }
  if (!std::isfinite(r.gmb) || r.gmb < 0.0) {
    throw Error(ErrorCode::kInvalidInput, "gmb must be finite and >= 0 for " + r.item_id);
  }
}

bool passes_click_filter(const ClickRecord& r) {
  if (r.impressions < kMinImpressions || r.clicks < kMinClicks) return false;
  // clicks / impressions >= 0.1, written without division so CTR exactly at
  // the boundary (3/30) is kept.
  return static_cast<double>(r.clicks) * 10.0 >= static_cast<double>(r.impressions);
}

std::vector<ClickRecord> filter_clicks(const std::vector<ClickRecord>& records) {
  std::vector<ClickRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               passes_click_filter);
  return out;
}

std::optional<Label> binarize_human(const HumanJudgment& j) {
  const Grade g = j.grades[0];
  if (j.grades[1] != g || j.grades[2] != g) return std::nullopt;
  return (g == Grade::kExcellent || g == Grade::kGood) ? Label::kRelevant
                                                       : Label::kIrrelevant;
}

std::vector<LabeledExample> mix(MixStrategy strategy,
                                const std::vector<ClickRecord>& clicks,
                                const std::vector<SearchRelevanceRecord>& search,
                                const std::vector<JudgeVerdict>& judgments) {
  check_judge_kinds(strategy, judgments);

  std::vector<LabeledExample> candidates;
  auto add_clicks = [&] {
    for (const auto& c : clicks) {
      if (!passes_click_filter(c)) {
        throw Error(ErrorCode::kInvalidInput,
                    "click record for " + c.item_id + " / '" + c.keyphrase +
                        "' has not passed filter_clicks");
      }
      candidates.push_back({c.title, c.category, c.keyphrase, Label::kRelevant,
                            Provenance::kClick});
    }
  };
  auto add_search = [&](bool positives, bool negatives) {
    for (const auto& s : search) {
      if ((s.verdict == Label::kRelevant && positives) ||
          (s.verdict == Label::kIrrelevant && negatives)) {
        candidates.push_back({s.title, s.category, s.keyphrase, s.verdict,
                              Provenance::kSearch});
      }
    }
  };
  auto add_judge = [&](bool positives, bool negatives) {
    for (const auto& v : judgments) {
      if ((v.yes && positives) || (!v.yes && negatives)) {
        candidates.push_back({v.title, v.category, v.keyphrase,
                              v.yes ? Label::kRelevant : Label::kIrrelevant,
                              Provenance::kLlm});
      }
    }
  };

  switch (strategy) {
    case MixStrategy::kSearchPM:
      add_search(true, true);
      break;
    case MixStrategy::kClickPSearchM:
      add_clicks();
      add_search(false, true);
      break;
    case MixStrategy::kClickPLlmPM:
      add_clicks();
      add_judge(true, true);
      break;
    case MixStrategy::kClickPLlmM:
      add_clicks();
      add_judge(false, true);
      break;
    case MixStrategy::kLlmPM:
    case MixStrategy::kFtLlmPM:
      add_judge(true, true);
      break;
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const LabeledExample& a, const LabeledExample& b) {
                     return a.triple() < b.triple();
                   });

  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < candidates.size();) {
    std::size_t j = i;
    std::size_t best = i;
    while (j < candidates.size() && candidates[j].triple() == candidates[i].triple()) {
      if (rank_of(candidates[j]) < rank_of(candidates[best])) best = j;
      ++j;
    }
    out.push_back(candidates[best]);
    i = j;
  }

  const auto positives = std::count_if(out.begin(), out.end(), [](const auto& e) {
    return e.label == Label::kRelevant;
  });
  if (out.empty()) {
    throw Error(ErrorCode::kUntrainable,
                std::string(to_string(strategy)) + " produced an empty dataset");
  }
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(out.size())) {
    throw Error(ErrorCode::kUntrainable,
                std::string(to_string(strategy)) + " produced a single-class dataset");
  }
  return out;
}

json to_json(const ClickRecord& r) {
  return {{"item_id", r.item_id},   {"keyphrase", r.keyphrase},
          {"category", r.category}, {"title", r.title},
          {"impressions", r.impressions}, {"clicks", r.clicks},
          {"purchases", r.purchases},     {"gmb", r.gmb}};
}

json to_json(const HumanJudgment& r) {
  json grades = json::array();
  for (Grade g : r.grades) grades.push_back(to_string(g));
  return {{"item_id", r.item_id}, {"keyphrase", r.keyphrase},
          {"title", r.title},     {"category", r.category},
          {"grades", grades}};
}

json to_json(const SearchRelevanceRecord& r) {
  return {{"item_id", r.item_id}, {"keyphrase", r.keyphrase},
          {"title", r.title},     {"category", r.category},
          {"verdict", to_string(r.verdict)}};
}

json to_json(const JudgeVerdict& r) {
  return {{"item_id", r.item_id},   {"keyphrase", r.keyphrase},
          {"title", r.title},       {"category", r.category},
          {"verdict", r.yes ? "yes" : "no"},
          {"judge_kind", to_string(r.judge_kind)}};
}

json to_json(const LabeledExample& r) {
  return {{"title", r.title},
          {"category", r.category},
          {"keyphrase", r.keyphrase},
          {"label", to_string(r.label)},
          {"provenance", to_string(r.provenance)}};
}

ClickRecord click_from_json(const json& j) {
  ClickRecord r;
  r.item_id = field<std::string>(j, "item_id");
  r.keyphrase = field<std::string>(j, "keyphrase");
  r.category = field<std::string>(j, "category");
  r.title = field<std::string>(j, "title");
  r.impressions = field<std::int64_t>(j, "impressions");
  r.clicks = field<std::int64_t>(j, "clicks");
  r.purchases = field<std::int64_t>(j, "purchases");
  r.gmb = field<double>(j, "gmb");
  validate(r);
  return r;
}

HumanJudgment human_from_json(const json& j) {
  HumanJudgment r;
  r.item_id = field<std::string>(j, "item_id");
  r.keyphrase = field<std::string>(j, "keyphrase");
  r.title = field<std::string>(j, "title");
  r.category = field<std::string>(j, "category");
  const auto grades = field<std::vector<std::string>>(j, "grades");
  if (grades.size() != 3) {
    throw Error(ErrorCode::kInvalidInput,
                "human judgment for " + r.item_id + " needs exactly 3 grades");
  }
  for (std::size_t i = 0; i < 3; ++i) r.grades[i] = parse_grade(grades[i]);
  return r;
}

SearchRelevanceRecord search_from_json(const json& j) {
  SearchRelevanceRecord r;
  r.item_id = field<std::string>(j, "item_id");
  r.keyphrase = field<std::string>(j, "keyphrase");
  r.title = field<std::string>(j, "title");
  r.category = field<std::string>(j, "category");
  r.verdict = parse_label(field<std::string>(j, "verdict"));
  return r;
}

JudgeVerdict verdict_from_json(const json& j) {
  JudgeVerdict r;
  r.item_id = field<std::string>(j, "item_id");
  r.keyphrase = field<std::string>(j, "keyphrase");
  r.title = field<std::string>(j, "title");
  r.category = field<std::string>(j, "category");
  const auto verdict = field<std::string>(j, "verdict");
  if (verdict != "yes" && verdict != "no") {
    throw Error(ErrorCode::kInvalidInput, "verdict must be yes or no, got " + verdict);
  }
  r.yes = verdict == "yes";
  r.judge_kind = parse_judge_kind(field<std::string>(j, "judge_kind"));
  return r;
}

LabeledExample example_from_json(const json& j) {
  LabeledExample r;
  r.title = field<std::string>(j, "title");
  r.category = field<std::string>(j, "category");
  r.keyphrase = field<std::string>(j, "keyphrase");
  r.label = parse_label(field<std::string>(j, "label"));
  r.provenance = parse_provenance(field<std::string>(j, "provenance"));
  return r;
}

std::vector<ClickRecord> read_clicks(const std::filesystem::path& path) {
  if (path.extension() != ".csv") {
    return jsonl::read_as<ClickRecord>(path, click_from_json);
  }
  const auto rows = jsonl::parse_csv(jsonl::read_text(path));
  if (rows.empty()) return {};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  const char* required[] = {"item_id", "keyphrase", "category", "title",
                            "impressions", "clicks", "purchases", "gmb"};
  for (const char* name : required) {
    if (!col.count(name)) {
      throw Error(ErrorCode::kCorruptPayload,
                  path.string() + ": csv header lacks column '" + name + "'");
    }
  }
  std::vector<ClickRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != rows[0].size()) {
      throw Error(ErrorCode::kCorruptPayload,
                  path.string() + ": csv row " + std::to_string(i + 1) +
                      " has " + std::to_string(row.size()) + " fields");
    }
    ClickRecord r;
    r.item_id = row[col["item_id"]];
    r.keyphrase = row[col["keyphrase"]];
    r.category = row[col["category"]];
    r.title = row[col["title"]];
    r.impressions = parse_count(row[col["impressions"]], "impressions");
    r.clicks = parse_count(row[col["clicks"]], "clicks");
    r.purchases = parse_count(row[col["purchases"]], "purchases");
    try {
      r.gmb = std::stod(row[col["gmb"]]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kCorruptPayload, "csv field 'gmb' is not a number");
    }
    validate(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<HumanJudgment> read_human(const std::filesystem::path& path) {
  return jsonl::read_as<HumanJudgment>(path, human_from_json);
}
std::vector<SearchRelevanceRecord> read_search(const std::filesystem::path& path) {
  return jsonl::read_as<SearchRelevanceRecord>(path, search_from_json);
}
std::vector<JudgeVerdict> read_verdicts(const std::filesystem::path& path) {
  return jsonl::read_as<JudgeVerdict>(path, verdict_from_json);
}
std::vector<LabeledExample> read_examples(const std::filesystem::path& path) {
  return jsonl::read_as<LabeledExample>(path, example_from_json);
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& rows) {
  std::vector<json> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(to_json(r));
  jsonl::write_file(path, out);
}

template void write_jsonl(const std::filesystem::path&, const std::vector<ClickRecord>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<HumanJudgment>&);
template void write_jsonl(const std::filesystem::path&,
                          const std::vector<SearchRelevanceRecord>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<JudgeVerdict>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<LabeledExample>&);

}  // namespace kprel::labels
