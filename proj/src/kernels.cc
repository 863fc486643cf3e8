#include "kprel/kernels.h"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "kprel/error.h"
#include "kprel/textcore.h"

namespace kprel::kernels {

namespace {

ScoreOutcome score_one(const scorer::Weights& w, const TripleView& t) {
  ScoreOutcome out;
  try {
    const auto f = textcore::extract_features(t.keyphrase, t.category, t.title);
    out.score = scorer::score_features(w, f.as_array());
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::fabs(t)));
}

// Adds row r's weighted loss and gradient into acc.
void accumulate_row(const scorer::TrainingRow& r, const scorer::Weights& w,
                    const ObjectiveParams& params, Objective& acc) {
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * r.features[i];
  const double a = r.count * (r.positive ? params.positive_class_weight : 1.0);
  acc.loss += a * softplus(r.positive ? -z : z);
  const double residual = a * (scorer::sigmoid(z) - (r.positive ? 1.0 : 0.0));
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc.gradient[i] += residual * r.features[i];
  }
}

Objective finish(Objective sum, const scorer::TrainingSet& set,
                 const scorer::Weights& w, const ObjectiveParams& params) {
  if (set.total_count <= 0.0) {
    throw Error(ErrorCode::kUntrainable, "objective over an empty training set");
  }
  Objective out;
  out.loss = sum.loss / set.total_count;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.gradient[i] = sum.gradient[i] / set.total_count;
  }
  // Every weight except the trailing bias weight is regularized.
  double penalty = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    penalty += w[i] * w[i];
    out.gradient[i] += params.l2 * w[i];
  }
  out.loss += 0.5 * params.l2 * penalty;
  return out;
}

}  // namespace

std::vector<ScoreOutcome> score_triples_serial(const scorer::Weights& w,
                                               std::span<const TripleView> in) {
  std::vector<ScoreOutcome> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = score_one(w, in[i]);
  return out;
}

std::vector<ScoreOutcome> score_triples_parallel(const scorer::Weights& w,
                                                 std::span<const TripleView> in,
                                                 int num_threads) {
  std::vector<ScoreOutcome> out(in.size());
  const auto n = static_cast<std::ptrdiff_t>(in.size());
  const int threads = num_threads > 0 ? num_threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = score_one(w, in[static_cast<std::size_t>(i)]);
  }
  return out;
}

Objective objective_serial(const scorer::TrainingSet& set, const scorer::Weights& w,
                           const ObjectiveParams& params) {
  Objective sum;
  for (const auto& r : set.rows) accumulate_row(r, w, params, sum);
  return finish(sum, set, w, params);
}

Objective objective_parallel(const scorer::TrainingSet& set, const scorer::Weights& w,
                             const ObjectiveParams& params, int num_threads) {
  const std::size_t n = set.rows.size();
  const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
  std::vector<Objective> partial(chunks);
  const int threads = num_threads > 0 ? num_threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kReductionChunk;
    const std::size_t end = std::min(n, begin + kReductionChunk);
    Objective& acc = partial[static_cast<std::size_t>(c)];
    for (std::size_t i = begin; i < end; ++i) accumulate_row(set.rows[i], w, params, acc);
  }
  Objective sum;
  for (const auto& p : partial) {
    sum.loss += p.loss;
    for (std::size_t i = 0; i < w.size(); ++i) sum.gradient[i] += p.gradient[i];
  }
  return finish(sum, set, w, params);
}

}  // namespace kprel::kernels
