#ifndef KPREL_SIMKIT_H_
#define KPREL_SIMKIT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kprel/evalkit.h"
#include "kprel/labels.h"
#include "kprel/scorer.h"

namespace kprel::simkit {

struct SimConfig {
  int n_items = 300;
  int n_keyphrases = 200;
  int vocab_size = 40;
  int attrs_per_item = 5;
  int attrs_per_keyphrase = 2;
  double search_fpr = 0.10;
  double search_fnr = 0.15;
  double seller_error_rate = 0.05;
  double base_ctr = 0.5;
  double irrelevant_ctr = 0.02;
  double cvr = 0.1;
  double popularity_skew = 1.5;
  int impressions_per_auction = 60;
  std::uint64_t seed = 7;
  // Upper bound on non-attribute words appended to each title.
  int max_filler_tokens = 10;

  bool operator==(const SimConfig&) const = default;
};

// Throws Error(kInvalidInput) for out-of-range fields or an infeasible
// combination (attrs_per_keyphrase > attrs_per_item, too few distinct
// keyphrase attribute sets).
void validate(const SimConfig& c);

nlohmann::json to_json(const SimConfig& c);
// Missing fields keep their defaults; unknown fields are rejected.
SimConfig config_from_json(const nlohmann::json& j);

struct Item {
  std::string item_id;
  std::vector<int> attrs;  // sorted
  std::string title;
  std::string category;
  double popularity = 1.0;  // Zipf weight, mean 1 over items
  double price = 0.0;
};

struct Keyphrase {
  std::string text;
  std::vector<int> attrs;  // sorted
};

struct PairRef {
  std::uint32_t item = 0;
  std::uint32_t keyphrase = 0;
  bool operator==(const PairRef&) const = default;
  auto operator<=>(const PairRef&) const = default;
};

// Immutable after generate_world. Per-pair noise (search, seller, auction
// draws) is a pure function of (seed, stream, pair) so every query for a pair
// sees the same draw.
class World {
 public:
  const SimConfig& config() const { return config_; }
  const std::vector<Item>& items() const { return items_; }
  const std::vector<Keyphrase>& keyphrases() const { return keyphrases_; }

  // Recommendation pool: pairs sharing at least one attribute, ordered by
  // (item, keyphrase).
  const std::vector<PairRef>& pool() const { return pool_; }

  // Ground truth: keyphrase attributes are a subset of the item's.
  bool relevant(PairRef p) const;

  // Uniform [0, 1) draw fixed for (pair, stream).
  double uniform(PairRef p, std::uint64_t stream) const;

  evalkit::Recommendation recommendation(PairRef p) const;
  std::vector<evalkit::Recommendation> recommendations() const;

  bool operator==(const World& other) const;

 private:
  friend World generate_world(const SimConfig& config);
  SimConfig config_;
  std::vector<Item> items_;
  std::vector<Keyphrase> keyphrases_;
  std::vector<PairRef> pool_;
};

World generate_world(const SimConfig& config);

// Stream identifiers for per-pair draws.
inline constexpr std::uint64_t kSearchStream = 0x5345415243480001ull;
inline constexpr std::uint64_t kSellerStream = 0x53454c4c45520002ull;
inline constexpr std::uint64_t kAuctionStream = 0x4155435449300003ull;
inline constexpr std::uint64_t kJudgeStream = 0x4a55444745000004ull;

// Relevant pairs fail with probability search_fnr, irrelevant pairs pass with
// probability search_fpr.
bool search_filter(const World& world, PairRef pair);

// Ground truth flipped with probability seller_error_rate.
bool seller_curation(const World& world, PairRef pair);

struct AdvertisingFilter {
  scorer::RelevanceModel model;
  double threshold = 0.0;
};

// Only pairs passing advertising (if given), seller curation and search enter
// an auction; other pairs produce no record at all.
std::vector<labels::ClickRecord> run_auctions(
    const World& world, const std::optional<AdvertisingFilter>& advertising);

// Search verdicts for the whole pool, as labels-module records.
std::vector<labels::SearchRelevanceRecord> search_records(const World& world);

// In-process search oracle over the world's recommendations.
evalkit::SearchOracle search_oracle(const World& world);

// Writes clicks.jsonl, ground_truth.jsonl, search_relevance.jsonl,
// search_oracle.jsonl, recommendations.jsonl and config.json into dir.
void write_outputs(const World& world, const std::string& dir);

}  // namespace kprel::simkit

#endif  // KPREL_SIMKIT_H_
