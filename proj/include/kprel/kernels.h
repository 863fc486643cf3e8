#ifndef KPREL_KERNELS_H_
#define KPREL_KERNELS_H_

// Data-parallel inner loops. Each OpenMP kernel has a serial reference that
// the tests and the benchmark compare against.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kprel/scorer.h"

namespace kprel::kernels {

struct TripleView {
  std::string_view keyphrase;
  std::string_view category;
  std::string_view title;
};

struct ScoreOutcome {
  double score = 0.0;
  std::string error;  // empty on success
  bool ok() const { return error.empty(); }
};

// Per-triple featurize + score. Output slot i depends only on input i, so the
// parallel kernel is bitwise identical to the serial one.
std::vector<ScoreOutcome> score_triples_serial(const scorer::Weights& w,
                                               std::span<const TripleView> in);
std::vector<ScoreOutcome> score_triples_parallel(const scorer::Weights& w,
                                                 std::span<const TripleView> in,
                                                 int num_threads = 0);

struct Objective {
  double loss = 0.0;
  scorer::Weights gradient{};
};

struct ObjectiveParams {
  double l2 = 0.0;
  double positive_class_weight = 1.0;
};

// Plain left-to-right accumulation over rows.
Objective objective_serial(const scorer::TrainingSet& set, const scorer::Weights& w,
                           const ObjectiveParams& params);

// Rows are cut into fixed-size chunks; chunk partials are computed in
// parallel and summed in chunk order, so the result is bitwise independent of
// the thread count.
inline constexpr std::size_t kReductionChunk = 256;
Objective objective_parallel(const scorer::TrainingSet& set, const scorer::Weights& w,
                             const ObjectiveParams& params, int num_threads = 0);

}  // namespace kprel::kernels

#endif  // KPREL_KERNELS_H_
