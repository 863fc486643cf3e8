#ifndef KPREL_JUDGE_H_
#define KPREL_JUDGE_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kprel/labels.h"

namespace kprel::simkit {
class World;
}

namespace kprel::judge {

struct PromptRequest {
  std::string title;
  std::string keyphrase;
};

// Instruction-style judging template with the title and keyphrase substituted
// verbatim (no escaping). Throws Error(kInvalidInput) if either is empty.
std::string build_prompt(const PromptRequest& req);

enum class Verdict { kYes, kNo, kUnparseable };

// Trims whitespace and trailing punctuation, then matches the first token
// case-insensitively against yes/no.
Verdict parse_verdict(std::string_view completion);

// Batch completion boundary. complete() returns exactly one completion per
// prompt, in order, or throws.
class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::vector<std::string> complete(const std::vector<std::string>& prompts) = 0;
  virtual std::size_t max_batch_size() const = 0;
};

struct HttpBackendConfig {
  std::string url;  // http://host:port/path
  std::string auth_token;
  std::size_t max_batch_size = 100;
  std::chrono::milliseconds timeout{30000};
};

// POSTs a JSON array of prompts and expects a JSON array of completions.
class HttpJudgeBackend : public JudgeBackend {
 public:
  explicit HttpJudgeBackend(HttpBackendConfig config);
  std::vector<std::string> complete(const std::vector<std::string>& prompts) override;
  std::size_t max_batch_size() const override { return config_.max_batch_size; }

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

// Verdicts keyed by (title, keyphrase). Safe for concurrent use. When opened
// on a file, existing JSONL verdicts are loaded and new ones are appended.
class VerdictCache {
 public:
  VerdictCache() = default;
  explicit VerdictCache(std::filesystem::path path);

  std::optional<bool> lookup(const std::string& title, const std::string& keyphrase) const;
  void insert(const labels::JudgeVerdict& v);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::pair<std::string, std::string>, bool> verdicts_;
  std::optional<std::filesystem::path> path_;
};

struct JudgePair {
  std::string item_id;
  std::string keyphrase;
  std::string title;
  std::string category;
};

struct JudgeOptions {
  labels::JudgeKind kind = labels::JudgeKind::kGeneral;
  std::size_t max_concurrency = 1;
};

enum class PairStatus { kOk, kSkipped, kError };

struct PairOutcome {
  PairStatus status = PairStatus::kError;
  std::optional<labels::JudgeVerdict> verdict;
  bool from_cache = false;
  std::string error;
};

struct JudgeSummary {
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t judged = 0;
  std::size_t skipped = 0;
  std::size_t errors = 0;
};

struct JudgeBatchResult {
  std::vector<PairOutcome> outcomes;  // aligned with the input pairs
  JudgeSummary summary;

  std::vector<labels::JudgeVerdict> verdicts() const;
};

// Cache hits never reach the backend. Misses are deduplicated by
// (title, keyphrase) and sent in batches of at most max_batch_size. A batch
// that throws is retried once; unparseable completions are re-asked once and
// then reported as skipped.
JudgeBatchResult judge_batch(const std::vector<JudgePair>& pairs, JudgeBackend& backend,
                             VerdictCache& cache, const JudgeOptions& options = {});

// Ground truth flipped independently with probability epsilon for every pair
// in the world's recommendation pool. Different streams give independent
// judges over the same world. Throws Error(kInvalidInput) unless
// 0 <= epsilon < 0.5.
std::vector<labels::JudgeVerdict> simulated_judge(const simkit::World& world, double epsilon,
                                                  std::uint64_t stream = 0);

}  // namespace kprel::judge

#endif  // KPREL_JUDGE_H_
