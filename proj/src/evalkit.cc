#include "kprel/evalkit.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>

#include "kprel/error.h"
#include "kprel/jsonl.h"
#include "kprel/kernels.h"

namespace kprel::evalkit {

using nlohmann::json;

namespace {

std::vector<double> score_or_throw(const scorer::RelevanceModel& model,
                                   const std::vector<kernels::TripleView>& triples,
                                   std::string_view what) {
  scorer::check_schema(model);
  const auto outcomes = kernels::score_triples_parallel(model.weights, triples);
  std::vector<double> scores(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok()) {
      throw Error(ErrorCode::kInvalidInput, std::string(what) + " row " +
                                                std::to_string(i) + ": " +
                                                outcomes[i].error);
    }
    scores[i] = outcomes[i].score;
  }
  return scores;
}

std::vector<double> score_log(const scorer::RelevanceModel& model,
                              const std::vector<labels::ClickRecord>& log) {
  std::vector<kernels::TripleView> t;
  t.reserve(log.size());
  for (const auto& r : log) t.push_back({r.keyphrase, r.category, r.title});
  return score_or_throw(model, t, "click log");
}

std::vector<double> score_recs(const scorer::RelevanceModel& model,
                               const std::vector<Recommendation>& recs) {
  std::vector<kernels::TripleView> t;
  t.reserve(recs.size());
  for (const auto& r : recs) t.push_back({r.keyphrase, r.category, r.title});
  return score_or_throw(model, t, "recommendation");
}

double mass_of(const labels::ClickRecord& r, Weighting w) {
  return w == Weighting::kByClicks ? static_cast<double>(r.clicks) : 1.0;
}

CalibrationResult calibrate_from_scores(const std::vector<labels::ClickRecord>& log,
                                        const std::vector<double>& scores,
                                        double target, Weighting weighting) {
  std::vector<ScoredClick> clicked;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].clicks > 0) clicked.push_back({scores[i], mass_of(log[i], weighting)});
  }
  if (clicked.empty()) {
    throw Error(ErrorCode::kInvalidInput, "click log has no clicked pairs to calibrate on");
  }
  return calibrate_scores(std::move(clicked), target, weighting);
}

double retained_from_scores(const std::vector<labels::ClickRecord>& log,
                            const std::vector<double>& scores, double threshold,
                            Weighting weighting) {
  double kept = 0.0, total = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].clicks == 0) continue;
    const double m = mass_of(log[i], weighting);
    total += m;
    if (scores[i] >= threshold) kept += m;
  }
  if (total == 0.0) {
    throw Error(ErrorCode::kInvalidInput, "click log has no clicked pairs");
  }
  return kept / total;
}

std::optional<double> sales_from_scores(const std::vector<labels::ClickRecord>& log,
                                        const std::vector<double>& scores,
                                        double threshold) {
  double kept = 0.0, total = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    total += log[i].gmb;
    if (scores[i] >= threshold) kept += log[i].gmb;
  }
  if (total == 0.0) return std::nullopt;
  return kept / total;
}

double per_item_from_scores(const std::vector<Recommendation>& recs,
                            const std::vector<double>& scores, double threshold) {
  if (recs.empty()) {
    throw Error(ErrorCode::kInvalidInput, "recommendation pool is empty");
  }
  std::set<std::string_view> items;
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    items.insert(recs[i].item_id);
    if (scores[i] >= threshold) ++survivors;
  }
  return static_cast<double>(survivors) / static_cast<double>(items.size());
}

std::optional<double> pass_rate_from_scores(const std::vector<Recommendation>& recs,
                                            const std::vector<double>& scores,
                                            double threshold, const SearchOracle& oracle) {
  std::size_t survivors = 0, passed = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (scores[i] < threshold) continue;
    ++survivors;
    if (oracle(recs[i])) ++passed;
  }
  if (survivors == 0) return std::nullopt;
  return static_cast<double>(passed) / static_cast<double>(survivors);
}

std::optional<double> pct_change(const std::optional<double>& value,
                                 const std::optional<double>& base) {
  if (!value || !base || *base == 0.0) return std::nullopt;
  return (*value - *base) / *base * 100.0;
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

std::string_view to_string(Weighting w) {
  return w == Weighting::kByClicks ? "by_clicks" : "by_pairs";
}

Weighting parse_weighting(std::string_view s) {
  if (s == "by_clicks") return Weighting::kByClicks;
  if (s == "by_pairs") return Weighting::kByPairs;
  throw Error(ErrorCode::kInvalidInput, "unknown weighting '" + std::string(s) + "'");
}

json to_json(const CalibrationResult& c) {
  return {{"threshold", c.threshold},
          {"retention_target", c.retention_target},
          {"achieved_retention", c.achieved_retention},
          {"clicked_pairs_seen", c.clicked_pairs_seen},
          {"weighting", to_string(c.weighting)}};
}

CalibrationResult calibration_from_json(const json& j) {
  try {
    CalibrationResult c;
    c.threshold = j.at("threshold").get<double>();
    c.retention_target = j.at("retention_target").get<double>();
    c.achieved_retention = j.at("achieved_retention").get<double>();
    c.clicked_pairs_seen = j.at("clicked_pairs_seen").get<long>();
    c.weighting = parse_weighting(j.at("weighting").get<std::string>());
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptPayload, std::string("calibration: ") + e.what());
  }
}

CalibrationResult calibrate_scores(std::vector<ScoredClick> clicks, double target,
                                   Weighting weighting) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "retention target must lie in (0, 1]");
  }
  if (clicks.empty()) throw Error(ErrorCode::kInvalidInput, "empty click log");
  double total = 0.0;
  for (const auto& c : clicks) total += c.mass;
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidInput, "click log has zero click mass");

  std::sort(clicks.begin(), clicks.end(),
            [](const ScoredClick& a, const ScoredClick& b) { return a.score > b.score; });

  CalibrationResult result;
  result.retention_target = target;
  result.weighting = weighting;
  result.clicked_pairs_seen = static_cast<long>(clicks.size());
  double cum = 0.0;
  for (std::size_t i = 0; i < clicks.size();) {
    const double s = clicks[i].score;
    while (i < clicks.size() && clicks[i].score == s) cum += clicks[i++].mass;
    if (cum / total >= target) {
      result.threshold = s;
      result.achieved_retention = cum / total;
      return result;
    }
  }
  // Unreachable for target <= 1: the lowest score retains everything.
  throw Error(ErrorCode::kDomain, "no threshold reaches the retention target");
}

CalibrationResult calibrate(const scorer::RelevanceModel& model,
                            const std::vector<labels::ClickRecord>& click_log,
                            double target, Weighting weighting) {
  if (click_log.empty()) throw Error(ErrorCode::kInvalidInput, "empty click log");
  return calibrate_from_scores(click_log, score_log(model, click_log), target, weighting);
}

double clicks_retained(const scorer::RelevanceModel& model, double threshold,
                       const std::vector<labels::ClickRecord>& click_log,
                       Weighting weighting) {
  return retained_from_scores(click_log, score_log(model, click_log), threshold, weighting);
}

std::optional<double> sales_retention(const scorer::RelevanceModel& model,
                                      double threshold,
                                      const std::vector<labels::ClickRecord>& click_log) {
  return sales_from_scores(click_log, score_log(model, click_log), threshold);
}

json to_json(const Recommendation& r) {
  return {{"item_id", r.item_id},
          {"category", r.category},
          {"title", r.title},
          {"keyphrase", r.keyphrase}};
}

Recommendation recommendation_from_json(const json& j) {
  try {
    return {j.at("item_id").get<std::string>(), j.at("category").get<std::string>(),
            j.at("title").get<std::string>(), j.at("keyphrase").get<std::string>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptPayload, std::string("recommendation: ") + e.what());
  }
}

std::vector<Recommendation> read_recommendations(const std::string& path) {
  return jsonl::read_as<Recommendation>(path, recommendation_from_json);
}

SearchOracle load_search_oracle(const std::string& path) {
  auto verdicts = std::make_shared<std::map<PairKey, bool>>();
  for (const auto& row : jsonl::read_file(path)) {
    try {
      (*verdicts)[{row.at("item_id").get<std::string>(),
                   row.at("keyphrase").get<std::string>()}] = row.at("pass").get<bool>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptPayload, path + ": " + e.what());
    }
  }
  return [verdicts](const Recommendation& r) {
    auto it = verdicts->find({r.item_id, r.keyphrase});
    return it != verdicts->end() && it->second;
  };
}

double survivors_per_item(const scorer::RelevanceModel& model, double threshold,
                          const std::vector<Recommendation>& recommendations) {
  return per_item_from_scores(recommendations, score_recs(model, recommendations),
                              threshold);
}

std::optional<double> keyphrase_reduction(const scorer::RelevanceModel& model,
                                          double threshold,
                                          const std::vector<Recommendation>& recommendations,
                                          const scorer::RelevanceModel& baseline,
                                          double baseline_threshold) {
  const double cand = survivors_per_item(model, threshold, recommendations);
  const double base = survivors_per_item(baseline, baseline_threshold, recommendations);
  return pct_change(cand, base);
}

std::optional<double> search_pass_rate(const scorer::RelevanceModel& model,
                                       double threshold,
                                       const std::vector<Recommendation>& recommendations,
                                       const SearchOracle& oracle) {
  return pass_rate_from_scores(recommendations, score_recs(model, recommendations),
                               threshold, oracle);
}

double cohen_kappa(std::span<const bool> a, std::span<const bool> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kInvalidInput, "kappa: label lists differ in length");
  }
  if (a.empty()) throw Error(ErrorCode::kInvalidInput, "kappa: empty label lists");
  if (a.size() > (std::size_t{1} << 31)) {
    throw Error(ErrorCode::kInvalidInput, "kappa: more than 2^31 labels");
  }
  // Scaled by n^2 and kept in integers: kappa = (n*agree - chance) / (n^2 - chance)
  // with chance = a_yes*b_yes + a_no*b_no, so table-derived values are exact.
  std::int64_t agree = 0, a_yes = 0, b_yes = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i];
    a_yes += a[i];
    b_yes += b[i];
  }
  const auto n = static_cast<std::int64_t>(a.size());
  const std::int64_t chance = a_yes * b_yes + (n - a_yes) * (n - b_yes);
  const std::int64_t den = n * n - chance;
  const std::int64_t num = n * agree - chance;
  if (den == 0) {
    if (agree == n) return 1.0;
    throw Error(ErrorCode::kDomain, "kappa undefined: chance agreement is 1");
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> concordance(const std::vector<labels::JudgeVerdict>& verdicts,
                                  const std::set<PairKey>& click_positives) {
  // A pair judged more than once counts once, with its last verdict.
  std::map<PairKey, bool> judged;
  for (const auto& v : verdicts) {
    PairKey key{v.item_id, v.keyphrase};
    if (click_positives.count(key)) judged[key] = v.yes;
  }
  if (judged.empty()) return std::nullopt;
  std::size_t yes = 0;
  for (const auto& [key, v] : judged) yes += v ? 1 : 0;
  return static_cast<double>(yes) / static_cast<double>(judged.size());
}

RatioMetrics ratio_metrics(const std::vector<labels::ClickRecord>& log, double ad_spend) {
  if (!(ad_spend > 0.0) || !std::isfinite(ad_spend)) {
    throw Error(ErrorCode::kInvalidInput, "ad spend must be a positive finite amount");
  }
  double impressions = 0.0, clicks = 0.0, purchases = 0.0, gmb = 0.0;
  for (const auto& r : log) {
    impressions += static_cast<double>(r.impressions);
    clicks += static_cast<double>(r.clicks);
    purchases += static_cast<double>(r.purchases);
    gmb += r.gmb;
  }
  RatioMetrics m;
  if (impressions > 0.0) m.ctr = clicks / impressions;
  if (clicks > 0.0) m.cvr = purchases / clicks;
  m.roas = gmb / ad_spend;
  return m;
}

std::vector<EvalReport> compare(const std::vector<NamedModel>& models,
                                const std::vector<labels::ClickRecord>& click_log,
                                const std::vector<Recommendation>& recommendations,
                                const SearchOracle& oracle,
                                const std::string& baseline_name, double target,
                                Weighting weighting) {
  const auto base_it = std::find_if(models.begin(), models.end(), [&](const auto& m) {
    return m.name == baseline_name;
  });
  if (base_it == models.end()) {
    throw Error(ErrorCode::kInvalidInput,
                "baseline '" + baseline_name + "' is not among the compared models");
  }
  if (click_log.empty()) throw Error(ErrorCode::kInvalidInput, "empty click log");

  std::vector<EvalReport> reports;
  for (const auto& m : models) {
    const auto log_scores = score_log(m.model, click_log);
    const auto rec_scores = score_recs(m.model, recommendations);
    const auto cal = calibrate_from_scores(click_log, log_scores, target, weighting);
    EvalReport r;
    r.model_name = m.name;
    r.is_baseline = m.name == baseline_name;
    r.weighting = weighting;
    r.threshold = cal.threshold;
    r.clicks_retained = cal.achieved_retention;
    r.sales_retention = sales_from_scores(click_log, log_scores, cal.threshold);
    r.survivors_per_item = per_item_from_scores(recommendations, rec_scores, cal.threshold);
    r.search_pass_rate = pass_rate_from_scores(recommendations, rec_scores, cal.threshold, oracle);
    reports.push_back(std::move(r));
  }

  const EvalReport base = reports[static_cast<std::size_t>(base_it - models.begin())];
  for (auto& r : reports) {
    r.keyphrase_delta_pct = pct_change(r.survivors_per_item, base.survivors_per_item);
    r.sales_delta_pct = pct_change(r.sales_retention, base.sales_retention);
    r.search_pass_rate_delta_pct = pct_change(r.search_pass_rate, base.search_pass_rate);
    if (r.is_baseline) {
      // Self-comparison is 0% by definition, even when the metric is absent.
      r.keyphrase_delta_pct = 0.0;
      r.sales_delta_pct = 0.0;
      r.search_pass_rate_delta_pct = 0.0;
    }
  }
  return reports;
}

std::string format_pct(const std::optional<double>& pct) {
  if (!pct || !std::isfinite(*pct)) return "n/a";
  const long v = std::lround(*pct);
  if (v == 0) return "0%";
  return (v > 0 ? "+" : "") + std::to_string(v) + "%";
}

std::string render_table(const std::vector<EvalReport>& reports) {
  const std::vector<std::string> headers = {"Model", "# Keyphrases", "Sales",
                                            "Search Pass Rate"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    rows.push_back({r.model_name, format_pct(r.keyphrase_delta_pct),
                    format_pct(r.sales_delta_pct),
                    format_pct(r.search_pass_rate_delta_pct)});
  }
  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out << " | ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << cells[c];
      }
    }
    out << '\n';
  };
  emit(headers);
  for (std::size_t c = 0; c < headers.size(); ++c) {
    if (c > 0) out << "-+-";
    out << std::string(width[c], '-');
  }
  out << '\n';
  for (const auto& row : rows) emit(row);
  for (const auto& r : reports) {
    if (!r.is_baseline) continue;
    out << "reference: " << r.model_name << " search pass rate = ";
    if (r.search_pass_rate) {
      out << std::fixed << std::setprecision(4) << *r.search_pass_rate;
    } else {
      out << "n/a";
    }
    out << " (absolute); calibration weighting " << to_string(r.weighting) << '\n';
  }
  return out.str();
}

json to_json(const EvalReport& r) {
  return {{"model_name", r.model_name},
          {"is_baseline", r.is_baseline},
          {"weighting", to_string(r.weighting)},
          {"threshold", r.threshold},
          {"clicks_retained", r.clicks_retained},
          {"sales_retention", optional_json(r.sales_retention)},
          {"survivors_per_item", r.survivors_per_item},
          {"search_pass_rate", optional_json(r.search_pass_rate)},
          {"keyphrase_delta_pct", optional_json(r.keyphrase_delta_pct)},
          {"sales_delta_pct", optional_json(r.sales_delta_pct)},
          {"search_pass_rate_delta_pct", optional_json(r.search_pass_rate_delta_pct)}};
}

json reports_to_json(const std::vector<EvalReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return {{"reports", arr}};
}

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "model_name,is_baseline,weighting,threshold,clicks_retained,sales_retention,"
         "survivors_per_item,search_pass_rate,keyphrase_delta_pct,sales_delta_pct,"
         "search_pass_rate_delta_pct\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v).dump() : std::string();
  };
  for (const auto& r : reports) {
    std::string name = r.model_name;
    if (name.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : name) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      name = quoted + "\"";
    }
    out << name << ',' << (r.is_baseline ? "true" : "false") << ','
        << to_string(r.weighting) << ',' << json(r.threshold).dump() << ','
        << json(r.clicks_retained).dump() << ',' << opt(r.sales_retention) << ','
        << json(r.survivors_per_item).dump() << ',' << opt(r.search_pass_rate) << ','
        << opt(r.keyphrase_delta_pct) << ',' << opt(r.sales_delta_pct) << ','
        << opt(r.search_pass_rate_delta_pct) << '\n';
  }
  return out.str();
}

}  // namespace kprel::evalkit
