#ifndef KPREL_TEXTCORE_H_
#define KPREL_TEXTCORE_H_

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace kprel::textcore {

// Ordered lowercase alphanumeric tokens. Duplicates are kept; set semantics
// only apply inside the set-based similarity functions.
struct TokenList {
  std::vector<std::string> tokens;

  bool empty() const { return tokens.empty(); }
  std::size_t size() const { return tokens.size(); }
  bool operator==(const TokenList&) const = default;
};

// Lowercases and splits on every character that is not an ASCII letter or
// digit. Bytes outside ASCII are separators.
TokenList normalize(std::string_view text);

// |distinct(a) & distinct(b)| / |distinct(a) | distinct(b)|.
// Throws Error(kDomain) when both distinct sets are empty.
double jaccard(const TokenList& a, const TokenList& b);

// Cosine similarity of padded character-trigram count vectors. The inputs are
// the token lists rejoined with single spaces and padded with one space on
// each side. Returns 0 when either side is empty.
double trigram_cosine(const TokenList& a, const TokenList& b);

inline constexpr std::size_t kFeatureDim = 7;

// Component order is part of the model file contract (see schema_hash()).
struct FeatureVector {
  double jaccard = 0.0;
  double kp_coverage = 0.0;
  double title_coverage = 0.0;
  double trigram_cosine = 0.0;
  double len_diff = 0.0;
  double cat_overlap = 0.0;
  double bias = 1.0;

  std::array<double, kFeatureDim> as_array() const {
    return {jaccard, kp_coverage, title_coverage, trigram_cosine,
            len_diff, cat_overlap, bias};
  }
  bool operator==(const FeatureVector&) const = default;
};

// Names of the FeatureVector components, in order.
const std::array<std::string_view, kFeatureDim>& feature_names();

// Stable hash (FNV-1a 64, hex) of the component names and order.
const std::string& feature_schema_hash();

// Throws Error(kInvalidInput) if keyphrase or title normalizes to nothing.
FeatureVector extract_features(std::string_view keyphrase,
                               std::string_view category,
                               std::string_view title);

}  // namespace kprel::textcore

#endif  // KPREL_TEXTCORE_H_
