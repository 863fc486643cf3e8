#include "kprel/textcore.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>

#include "kprel/error.h"

namespace kprel::textcore {

namespace {

bool is_ascii_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9');
}

char ascii_lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

std::set<std::string_view> distinct(const TokenList& list) {
  return {list.tokens.begin(), list.tokens.end()};
}

std::size_t intersection_size(const std::set<std::string_view>& a,
                              const std::set<std::string_view>& b) {
  std::size_t n = 0;
  for (const auto& t : a) n += b.count(t);
  return n;
}

std::string rejoin(const TokenList& list) {
  std::string out;
  for (const auto& t : list.tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::map<std::string, std::int64_t> trigram_counts(const TokenList& list) {
  std::map<std::string, std::int64_t> counts;
  if (list.empty()) return counts;
  const std::string padded = " " + rejoin(list) + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    ++counts[padded.substr(i, 3)];
  }
  return counts;
}

}  // namespace

TokenList normalize(std::string_view text) {
  TokenList out;
  std::string current;
  for (unsigned char c : text) {
    if (is_ascii_alnum(c)) {
      current.push_back(ascii_lower(c));
    } else if (!current.empty()) {
      out.tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.tokens.push_back(std::move(current));
  return out;
}

double jaccard(const TokenList& a, const TokenList& b) {
  const auto da = distinct(a);
  const auto db = distinct(b);
  const std::size_t inter = intersection_size(da, db);
  const std::size_t uni = da.size() + db.size() - inter;
  if (uni == 0) {
    throw Error(ErrorCode::kDomain, "jaccard of two empty token sets is undefined");
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double trigram_cosine(const TokenList& a, const TokenList& b) {
  const auto ca = trigram_counts(a);
  const auto cb = trigram_counts(b);
  if (ca.empty() || cb.empty()) return 0.0;
  // Integer accumulation keeps the identical-input case exactly 1.
  std::int64_t dot = 0, na = 0, nb = 0;
  for (const auto& [g, n] : ca) {
    na += n * n;
    auto it = cb.find(g);
    if (it != cb.end()) dot += n * it->second;
  }
  for (const auto& [g, n] : cb) nb += n * n;
  const double cos = static_cast<double>(dot) /
                     std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
  return std::clamp(cos, 0.0, 1.0);
}

const std::array<std::string_view, kFeatureDim>& feature_names() {
  static const std::array<std::string_view, kFeatureDim> names = {
      "jaccard", "kp_coverage", "title_coverage", "trigram_cosine",
      "len_diff", "cat_overlap", "bias"};
  return names;
}

const std::string& feature_schema_hash() {
  static const std::string hash = [] {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](unsigned char c) {
      h ^= c;
      h *= 1099511628211ull;
    };
    for (const auto& name : feature_names()) {
      for (unsigned char c : name) mix(c);
      mix(',');
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }();
  return hash;
}

FeatureVector extract_features(std::string_view keyphrase,
                               std::string_view category,
                               std::string_view title) {
  const TokenList kp = normalize(keyphrase);
  const TokenList ti = normalize(title);
  if (kp.empty()) {
    throw Error(ErrorCode::kInvalidInput, "keyphrase has no tokens after normalization");
  }
  if (ti.empty()) {
    throw Error(ErrorCode::kInvalidInput, "title has no tokens after normalization");
  }
  const TokenList cat = normalize(category);

  const auto dkp = distinct(kp);
  const auto dti = distinct(ti);
  const std::size_t inter = intersection_size(dkp, dti);

  FeatureVector f;
  f.jaccard = static_cast<double>(inter) /
              static_cast<double>(dkp.size() + dti.size() - inter);
  f.kp_coverage = static_cast<double>(inter) / static_cast<double>(dkp.size());
  f.title_coverage = static_cast<double>(inter) / static_cast<double>(dti.size());
  f.trigram_cosine = trigram_cosine(kp, ti);
  const double diff = std::fabs(static_cast<double>(dkp.size()) -
                                static_cast<double>(dti.size()));
  f.len_diff = std::min(1.0, diff / 10.0);
  f.cat_overlap = jaccard(kp, cat);
  f.bias = 1.0;
  return f;
}

}  // namespace kprel::textcore
