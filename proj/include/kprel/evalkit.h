#ifndef KPREL_EVALKIT_H_
#define KPREL_EVALKIT_H_

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kprel/labels.h"
#include "kprel/scorer.h"

namespace kprel::evalkit {

enum class Weighting { kByClicks, kByPairs };

std::string_view to_string(Weighting w);
Weighting parse_weighting(std::string_view s);

inline constexpr double kDefaultRetentionTarget = 0.95;

struct CalibrationResult {
  double threshold = 0.0;
  double retention_target = kDefaultRetentionTarget;
  double achieved_retention = 0.0;
  long clicked_pairs_seen = 0;
  Weighting weighting = Weighting::kByClicks;
};

nlohmann::json to_json(const CalibrationResult& c);
CalibrationResult calibration_from_json(const nlohmann::json& j);

// A scored clicked pair; mass is its click count or 1 depending on weighting.
struct ScoredClick {
  double score = 0.0;
  double mass = 0.0;
};

// Largest threshold t among the scores such that the mass with score >= t is
// at least target of the total. Exposed for callers that already hold scores.
// Throws Error(kInvalidInput) for an empty input, zero mass, or a target
// outside (0, 1].
CalibrationResult calibrate_scores(std::vector<ScoredClick> clicks, double target,
                                   Weighting weighting);

// Pairs with at least one click are the clicked pairs; by_clicks weights each
// by its click count, by_pairs counts each once.
CalibrationResult calibrate(const scorer::RelevanceModel& model,
                            const std::vector<labels::ClickRecord>& click_log,
                            double target = kDefaultRetentionTarget,
                            Weighting weighting = Weighting::kByClicks);

// Share of click mass surviving the threshold under the given weighting.
double clicks_retained(const scorer::RelevanceModel& model, double threshold,
                       const std::vector<labels::ClickRecord>& click_log,
                       Weighting weighting = Weighting::kByClicks);

// GMB of pairs scoring >= threshold over total GMB; empty when total GMB is 0.
std::optional<double> sales_retention(const scorer::RelevanceModel& model,
                                      double threshold,
                                      const std::vector<labels::ClickRecord>& click_log);

struct Recommendation {
  std::string item_id;
  std::string category;
  std::string title;
  std::string keyphrase;
  bool operator==(const Recommendation&) const = default;
};

nlohmann::json to_json(const Recommendation& r);
Recommendation recommendation_from_json(const nlohmann::json& j);
std::vector<Recommendation> read_recommendations(const std::string& path);

using SearchOracle = std::function<bool(const Recommendation&)>;

// Loads (item_id, keyphrase, pass) JSONL records. Unknown pairs fail.
SearchOracle load_search_oracle(const std::string& path);

// Mean surviving keyphrases per item.
double survivors_per_item(const scorer::RelevanceModel& model, double threshold,
                          const std::vector<Recommendation>& recommendations);

// Percent change of per-item surviving keyphrases, candidate vs baseline.
// Empty when the baseline keeps nothing. Throws Error(kInvalidInput) for an
// empty recommendation list.
std::optional<double> keyphrase_reduction(const scorer::RelevanceModel& model,
                                          double threshold,
                                          const std::vector<Recommendation>& recommendations,
                                          const scorer::RelevanceModel& baseline,
                                          double baseline_threshold);

// Share of advertising-filter survivors that also pass search; empty when
// nothing survives.
std::optional<double> search_pass_rate(const scorer::RelevanceModel& model,
                                       double threshold,
                                       const std::vector<Recommendation>& recommendations,
                                       const SearchOracle& oracle);

// (p_o - p_e) / (1 - p_e). Throws Error(kInvalidInput) on length mismatch or
// empty input, Error(kDomain) when p_e = 1 and p_o < 1.
double cohen_kappa(std::span<const bool> a, std::span<const bool> b);

using PairKey = std::pair<std::string, std::string>;  // (item_id, keyphrase)

// Fraction of judged click-positive pairs the judge said yes to. Empty when no
// click-positive pair was judged.
std::optional<double> concordance(const std::vector<labels::JudgeVerdict>& verdicts,
                                  const std::set<PairKey>& click_positives);

struct RatioMetrics {
  std::optional<double> ctr;
  std::optional<double> cvr;
  std::optional<double> roas;
};

// Ratios are empty when their denominator is zero. Throws Error(kInvalidInput)
// unless ad_spend is positive.
RatioMetrics ratio_metrics(const std::vector<labels::ClickRecord>& log, double ad_spend);

struct EvalReport {
  std::string model_name;
  bool is_baseline = false;
  Weighting weighting = Weighting::kByClicks;
  double threshold = 0.0;
  double clicks_retained = 0.0;
  std::optional<double> sales_retention;
  double survivors_per_item = 0.0;
  std::optional<double> search_pass_rate;
  // Relative to the baseline row, in percent.
  std::optional<double> keyphrase_delta_pct;
  std::optional<double> sales_delta_pct;
  std::optional<double> search_pass_rate_delta_pct;
};

struct NamedModel {
  std::string name;
  scorer::RelevanceModel model;
};

// Calibrates every model on the same click log, then measures each against
// the baseline. Throws Error(kInvalidInput) if baseline_name is not present.
std::vector<EvalReport> compare(const std::vector<NamedModel>& models,
                                const std::vector<labels::ClickRecord>& click_log,
                                const std::vector<Recommendation>& recommendations,
                                const SearchOracle& oracle,
                                const std::string& baseline_name,
                                double target = kDefaultRetentionTarget,
                                Weighting weighting = Weighting::kByClicks);

// "+103%", "-31%", "0%", or "n/a".
std::string format_pct(const std::optional<double>& pct);

// Columns: Model | # Keyphrases | Sales | Search Pass Rate, relative to the
// baseline, followed by a line with the baseline's absolute pass rate.
std::string render_table(const std::vector<EvalReport>& reports);

nlohmann::json to_json(const EvalReport& r);
nlohmann::json reports_to_json(const std::vector<EvalReport>& reports);
std::string reports_to_csv(const std::vector<EvalReport>& reports);

}  // namespace kprel::evalkit

#endif  // KPREL_EVALKIT_H_
