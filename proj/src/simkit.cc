#include "kprel/simkit.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "kprel/error.h"
#include "kprel/jsonl.h"
#include "kprel/kernels.h"

namespace kprel::simkit {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t pair_hash(std::uint64_t seed, std::uint64_t stream, PairRef p) {
  const std::uint64_t key = (static_cast<std::uint64_t>(p.item) << 32) | p.keyphrase;
  return splitmix64(seed ^ splitmix64(stream ^ splitmix64(key)));
}

double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// mt19937_64 output is fixed by the standard; the helpers below avoid the
// implementation-defined std distributions so worlds match across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() { return to_unit(engine_()); }

  // Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // k distinct values from pool, in draw order.
  std::vector<int> sample(std::vector<int> pool, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(pool[i], pool[i + below(pool.size() - i)]);
    }
    pool.resize(k);
    return pool;
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::int64_t binomial(Rng& rng, std::int64_t n, double p) {
  std::int64_t k = 0;
  for (std::int64_t i = 0; i < n; ++i) k += rng.uniform() < p ? 1 : 0;
  return k;
}

// Two-syllable pseudo-words: 14 consonants x 5 vowels per syllable.
std::string vocab_word(int index) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  constexpr int kSyllables = 14 * 5;
  auto syllable = [](int s) {
    return std::string{kConsonants[s / 5], kVowels[s % 5]};
  };
  std::string w = syllable(index % kSyllables) + syllable((index / kSyllables) % kSyllables);
  if (index >= kSyllables * kSyllables) w += std::to_string(index / (kSyllables * kSyllables));
  return w;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "new",    "genuine",  "lot",    "oem",    "fast",     "free",
      "shipping", "vintage", "authentic", "used", "mint",   "box",
      "sealed", "original", "brand",  "bundle", "set",      "pack",
      "great",  "condition", "excellent", "tested", "works", "nice"};
  return words;
}

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

double binomial_coefficient(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

bool shares_attribute(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    if (a[i] < b[j]) ++i; else ++j;
  }
  return false;
}

template <typename T>
void require(bool ok, const char* name, const T& value, const char* rule) {
  if (!ok) {
    throw Error(ErrorCode::kInvalidInput, std::string("sim config: ") + name + " = " +
                                              json(value).dump() + " violates " + rule);
  }
}

}  // namespace

void validate(const SimConfig& c) {
  require(c.n_items > 0, "n_items", c.n_items, "> 0");
  require(c.n_keyphrases > 0, "n_keyphrases", c.n_keyphrases, "> 0");
  require(c.vocab_size > 0, "vocab_size", c.vocab_size, "> 0");
  require(c.attrs_per_item > 0, "attrs_per_item", c.attrs_per_item, "> 0");
  require(c.attrs_per_keyphrase > 0, "attrs_per_keyphrase", c.attrs_per_keyphrase, "> 0");
  require(c.vocab_size >= c.attrs_per_item, "vocab_size", c.vocab_size, ">= attrs_per_item");
  require(c.attrs_per_keyphrase <= c.attrs_per_item, "attrs_per_keyphrase",
          c.attrs_per_keyphrase, "<= attrs_per_item (relevant pairs impossible otherwise)");
  require(c.search_fpr >= 0.0 && c.search_fpr < 0.5, "search_fpr", c.search_fpr, "[0, 0.5)");
  require(c.search_fnr >= 0.0 && c.search_fnr < 0.5, "search_fnr", c.search_fnr, "[0, 0.5)");
  require(c.seller_error_rate >= 0.0 && c.seller_error_rate < 0.5, "seller_error_rate",
          c.seller_error_rate, "[0, 0.5)");
  require(c.base_ctr > 0.0 && c.base_ctr <= 1.0, "base_ctr", c.base_ctr, "(0, 1]");
  require(c.irrelevant_ctr >= 0.0 && c.irrelevant_ctr < c.base_ctr, "irrelevant_ctr",
          c.irrelevant_ctr, "[0, base_ctr)");
  require(c.cvr >= 0.0 && c.cvr <= 1.0, "cvr", c.cvr, "[0, 1]");
  require(c.popularity_skew > 0.0, "popularity_skew", c.popularity_skew, "> 0");
  require(c.impressions_per_auction > 0, "impressions_per_auction",
          c.impressions_per_auction, "> 0");
  require(c.max_filler_tokens >= 0 &&
              c.max_filler_tokens <= static_cast<int>(filler_words().size()),
          "max_filler_tokens", c.max_filler_tokens, "[0, filler vocabulary size]");
  require(binomial_coefficient(c.vocab_size, c.attrs_per_keyphrase) >= c.n_keyphrases,
          "n_keyphrases", c.n_keyphrases, "<= number of distinct keyphrase attribute sets");
}

json to_json(const SimConfig& c) {
  return {{"n_items", c.n_items},
          {"n_keyphrases", c.n_keyphrases},
          {"vocab_size", c.vocab_size},
          {"attrs_per_item", c.attrs_per_item},
          {"attrs_per_keyphrase", c.attrs_per_keyphrase},
          {"search_fpr", c.search_fpr},
          {"search_fnr", c.search_fnr},
          {"seller_error_rate", c.seller_error_rate},
          {"base_ctr", c.base_ctr},
          {"irrelevant_ctr", c.irrelevant_ctr},
          {"cvr", c.cvr},
          {"popularity_skew", c.popularity_skew},
          {"impressions_per_auction", c.impressions_per_auction},
          {"seed", c.seed},
          {"max_filler_tokens", c.max_filler_tokens}};
}

SimConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kCorruptPayload, "sim config must be an object");
  SimConfig c;
  const std::map<std::string, std::function<void(const json&)>> setters = {
      {"n_items", [&](const json& v) { c.n_items = v.get<int>(); }},
      {"n_keyphrases", [&](const json& v) { c.n_keyphrases = v.get<int>(); }},
      {"vocab_size", [&](const json& v) { c.vocab_size = v.get<int>(); }},
      {"attrs_per_item", [&](const json& v) { c.attrs_per_item = v.get<int>(); }},
      {"attrs_per_keyphrase", [&](const json& v) { c.attrs_per_keyphrase = v.get<int>(); }},
      {"search_fpr", [&](const json& v) { c.search_fpr = v.get<double>(); }},
      {"search_fnr", [&](const json& v) { c.search_fnr = v.get<double>(); }},
      {"seller_error_rate", [&](const json& v) { c.seller_error_rate = v.get<double>(); }},
      {"base_ctr", [&](const json& v) { c.base_ctr = v.get<double>(); }},
      {"irrelevant_ctr", [&](const json& v) { c.irrelevant_ctr = v.get<double>(); }},
      {"cvr", [&](const json& v) { c.cvr = v.get<double>(); }},
      {"popularity_skew", [&](const json& v) { c.popularity_skew = v.get<double>(); }},
      {"impressions_per_auction",
       [&](const json& v) { c.impressions_per_auction = v.get<int>(); }},
      {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"max_filler_tokens", [&](const json& v) { c.max_filler_tokens = v.get<int>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorCode::kInvalidInput, "sim config: unknown field '" + key + "'");
    }
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptPayload, "sim config field '" + key + "': " + e.what());
    }
  }
  return c;
}

bool World::relevant(PairRef p) const {
  const auto& kp = keyphrases_.at(p.keyphrase).attrs;
  const auto& item = items_.at(p.item).attrs;
  return std::includes(item.begin(), item.end(), kp.begin(), kp.end());
}

double World::uniform(PairRef p, std::uint64_t stream) const {
  return to_unit(pair_hash(config_.seed, stream, p));
}

evalkit::Recommendation World::recommendation(PairRef p) const {
  const Item& it = items_.at(p.item);
  return {it.item_id, it.category, it.title, keyphrases_.at(p.keyphrase).text};
}

std::vector<evalkit::Recommendation> World::recommendations() const {
  std::vector<evalkit::Recommendation> out;
  out.reserve(pool_.size());
  for (PairRef p : pool_) out.push_back(recommendation(p));
  return out;
}

bool World::operator==(const World& o) const {
  auto item_eq = [](const Item& a, const Item& b) {
    return a.item_id == b.item_id && a.attrs == b.attrs && a.title == b.title &&
           a.category == b.category && a.popularity == b.popularity && a.price == b.price;
  };
  auto kp_eq = [](const Keyphrase& a, const Keyphrase& b) {
    return a.text == b.text && a.attrs == b.attrs;
  };
  return config_ == o.config_ &&
         std::equal(items_.begin(), items_.end(), o.items_.begin(), o.items_.end(), item_eq) &&
         std::equal(keyphrases_.begin(), keyphrases_.end(), o.keyphrases_.begin(),
                    o.keyphrases_.end(), kp_eq) &&
         pool_ == o.pool_;
}

World generate_world(const SimConfig& config) {
  validate(config);
  World w;
  w.config_ = config;
  Rng rng(config.seed);

  std::vector<int> vocab(static_cast<std::size_t>(config.vocab_size));
  for (int i = 0; i < config.vocab_size; ++i) vocab[static_cast<std::size_t>(i)] = i;
  std::vector<int> filler_ids(filler_words().size());
  for (std::size_t i = 0; i < filler_ids.size(); ++i) filler_ids[i] = static_cast<int>(i);

  const auto n_items = static_cast<std::size_t>(config.n_items);
  std::vector<std::size_t> rank(n_items);
  for (std::size_t i = 0; i < n_items; ++i) rank[i] = i;
  rng.shuffle(rank);
  double zipf_sum = 0.0;
  for (std::size_t r = 0; r < n_items; ++r) {
    zipf_sum += std::pow(static_cast<double>(r + 1), -config.popularity_skew);
  }

  for (std::size_t i = 0; i < n_items; ++i) {
    Item item;
    char id[32];
    std::snprintf(id, sizeof(id), "itm%06zu", i);
    item.item_id = id;
    const auto drawn = rng.sample(vocab, static_cast<std::size_t>(config.attrs_per_item));
    item.category = capitalize(vocab_word(drawn[0])) + " Accessories";
    std::vector<std::string> words;
    for (int a : drawn) words.push_back(vocab_word(a));
    const auto n_filler = static_cast<std::size_t>(
        rng.below(static_cast<std::uint64_t>(config.max_filler_tokens) + 1));
    for (int f : rng.sample(filler_ids, n_filler)) {
      words.push_back(filler_words()[static_cast<std::size_t>(f)]);
    }
    rng.shuffle(words);
    for (const auto& word : words) {
      if (!item.title.empty()) item.title += ' ';
      item.title += capitalize(word);
    }
    item.attrs = drawn;
    std::sort(item.attrs.begin(), item.attrs.end());
    item.popularity = std::pow(static_cast<double>(rank[i] + 1), -config.popularity_skew) *
                      static_cast<double>(n_items) / zipf_sum;
    item.price = std::round((5.0 + 195.0 * rng.uniform()) * 100.0) / 100.0;
    w.items_.push_back(std::move(item));
  }

  // Even slots copy attributes from a random item (so relevant pairs exist);
  // odd slots draw uniformly from the vocabulary.
  std::set<std::vector<int>> seen;
  const auto k = static_cast<std::size_t>(config.attrs_per_keyphrase);
  for (int slot = 0; slot < config.n_keyphrases; ++slot) {
    std::vector<int> drawn;
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      if (slot % 2 == 0) {
        const auto& src = w.items_[rng.below(n_items)].attrs;
        drawn = rng.sample(src, k);
      } else {
        drawn = rng.sample(vocab, k);
      }
      auto key = drawn;
      std::sort(key.begin(), key.end());
      placed = seen.insert(key).second;
    }
    if (!placed) {
      throw Error(ErrorCode::kInvalidInput,
                  "sim config: could not draw " + std::to_string(config.n_keyphrases) +
                      " distinct keyphrases; enlarge vocab_size or attrs_per_item");
    }
    Keyphrase kp;
    for (int a : drawn) {
      if (!kp.text.empty()) kp.text += ' ';
      kp.text += vocab_word(a);
    }
    kp.attrs = drawn;
    std::sort(kp.attrs.begin(), kp.attrs.end());
    w.keyphrases_.push_back(std::move(kp));
  }

  for (std::uint32_t i = 0; i < w.items_.size(); ++i) {
    for (std::uint32_t j = 0; j < w.keyphrases_.size(); ++j) {
      if (shares_attribute(w.items_[i].attrs, w.keyphrases_[j].attrs)) {
        w.pool_.push_back({i, j});
      }
    }
  }
  return w;
}

bool search_filter(const World& world, PairRef pair) {
  const double u = world.uniform(pair, kSearchStream);
  return world.relevant(pair) ? u >= world.config().search_fnr
                              : u < world.config().search_fpr;
}

bool seller_curation(const World& world, PairRef pair) {
  const bool flip = world.uniform(pair, kSellerStream) < world.config().seller_error_rate;
  return world.relevant(pair) != flip;
}

std::vector<labels::ClickRecord> run_auctions(
    const World& world, const std::optional<AdvertisingFilter>& advertising) {
  const auto& pool = world.pool();
  const auto& cfg = world.config();

  std::vector<double> ad_scores;
  if (advertising) {
    scorer::check_schema(advertising->model);
    std::vector<kernels::TripleView> triples;
    triples.reserve(pool.size());
    for (PairRef p : pool) {
      const Item& it = world.items()[p.item];
      triples.push_back({world.keyphrases()[p.keyphrase].text, it.category, it.title});
    }
    for (const auto& o : kernels::score_triples_parallel(advertising->model.weights, triples)) {
      if (!o.ok()) throw Error(ErrorCode::kInvalidInput, "advertising filter: " + o.error);
      ad_scores.push_back(o.score);
    }
  }

  std::vector<labels::ClickRecord> log;
  for (std::size_t idx = 0; idx < pool.size(); ++idx) {
    const PairRef p = pool[idx];
    if (advertising && ad_scores[idx] < advertising->threshold) continue;
    if (!seller_curation(world, p) || !search_filter(world, p)) continue;

    const Item& it = world.items()[p.item];
    Rng rng(pair_hash(cfg.seed, kAuctionStream, p));
    const double ctr = std::min(
        1.0, (world.relevant(p) ? cfg.base_ctr : cfg.irrelevant_ctr) * it.popularity);
    labels::ClickRecord r;
    r.item_id = it.item_id;
    r.keyphrase = world.keyphrases()[p.keyphrase].text;
    r.category = it.category;
    r.title = it.title;
    r.impressions = cfg.impressions_per_auction;
    r.clicks = binomial(rng, r.impressions, ctr);
    r.purchases = binomial(rng, r.clicks, cfg.cvr);
    r.gmb = static_cast<double>(r.purchases) * it.price;
    log.push_back(std::move(r));
  }
  return log;
}

std::vector<labels::SearchRelevanceRecord> search_records(const World& world) {
  std::vector<labels::SearchRelevanceRecord> out;
  out.reserve(world.pool().size());
  for (PairRef p : world.pool()) {
    const Item& it = world.items()[p.item];
    out.push_back({it.item_id, world.keyphrases()[p.keyphrase].text, it.title, it.category,
                   search_filter(world, p) ? labels::Label::kRelevant
                                           : labels::Label::kIrrelevant});
  }
  return out;
}

evalkit::SearchOracle search_oracle(const World& world) {
  auto index = std::make_shared<std::map<evalkit::PairKey, bool>>();
  for (PairRef p : world.pool()) {
    (*index)[{world.items()[p.item].item_id, world.keyphrases()[p.keyphrase].text}] =
        search_filter(world, p);
  }
  return [index](const evalkit::Recommendation& r) {
    auto it = index->find({r.item_id, r.keyphrase});
    return it != index->end() && it->second;
  };
}

void write_outputs(const World& world, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);

  jsonl::write_text(base / "config.json", to_json(world.config()).dump(2) + "\n");
  labels::write_jsonl(base / "clicks.jsonl", run_auctions(world, std::nullopt));
  labels::write_jsonl(base / "search_relevance.jsonl", search_records(world));

  std::vector<json> truth, oracle, recs;
  for (PairRef p : world.pool()) {
    const auto rec = world.recommendation(p);
    truth.push_back({{"item_id", rec.item_id},
                     {"keyphrase", rec.keyphrase},
                     {"relevant", world.relevant(p)}});
    oracle.push_back({{"item_id", rec.item_id},
                      {"keyphrase", rec.keyphrase},
                      {"pass", search_filter(world, p)}});
    recs.push_back(evalkit::to_json(rec));
  }
  jsonl::write_file(base / "ground_truth.jsonl", truth);
  jsonl::write_file(base / "search_oracle.jsonl", oracle);
  jsonl::write_file(base / "recommendations.jsonl", recs);
}

}  // namespace kprel::simkit
