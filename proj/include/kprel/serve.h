#ifndef KPREL_SERVE_H_
#define KPREL_SERVE_H_

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kprel/evalkit.h"
#include "kprel/scorer.h"

namespace kprel::serve {

struct ScoreRecord {
  std::string item_id;
  std::string keyphrase;
  double score = 0.0;
  bool relevant = false;  // score >= snapshot threshold
  std::string model_version;
  std::string scored_at;

  bool operator==(const ScoreRecord&) const = default;
};

struct SnapshotHeader {
  std::string model_version;
  double threshold = 0.0;
  std::string created_at;
  std::size_t record_count = 0;

  bool operator==(const SnapshotHeader&) const = default;
};

// Records sorted by (item_id, keyphrase), keys unique, count matches header.
struct Snapshot {
  SnapshotHeader header;
  std::vector<ScoreRecord> records;

  bool operator==(const Snapshot&) const = default;
};

// Throws Error(kCorruptPayload) if the snapshot breaks its invariants.
void validate(const Snapshot& s);

struct Reject {
  std::size_t row = 0;  // 0-based index into the input
  std::string item_id;
  std::string keyphrase;
  std::string reason;
};

struct BatchResult {
  Snapshot snapshot;
  std::vector<Reject> rejects;
};

// UTC, second precision: 2024-01-31T12:00:00Z.
std::string now_iso8601();

// Scores every pair. Input is cut into `partitions` contiguous slices scored
// in parallel; the merged output is sorted and independent of the partition
// count. Unfeaturizable rows and repeated (item_id, keyphrase) keys (after
// the first occurrence) go to rejects.
BatchResult batch_infer(const scorer::RelevanceModel& model, double threshold,
                        const std::vector<evalkit::Recommendation>& pairs,
                        int partitions = 1, const std::string& scored_at = now_iso8601());

// Key-wise union, diff records winning collisions. Snapshots must agree on
// model_version and threshold unless allow_model_change is set, in which case
// a mismatched diff replaces the full snapshot outright.
Snapshot diff_merge(const Snapshot& full, const Snapshot& diff,
                    bool allow_model_change = false);

// Header JSON line, then one JSON record per line.
void write_snapshot(const std::string& path, const Snapshot& s);
Snapshot read_snapshot(const std::string& path);
void write_rejects(const std::string& path, const std::vector<Reject>& rejects);

nlohmann::json to_json(const ScoreRecord& r);

struct ServeSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string model_path;
  double threshold = 0.5;
};

struct ServeFlags {
  std::optional<std::string> bind;  // host:port
  std::optional<std::string> model;
  std::optional<double> threshold;
};

// Flags beat KPREL_BIND / KPREL_MODEL / KPREL_THRESHOLD, which beat defaults.
ServeSettings resolve_settings(const ServeFlags& flags,
                               const std::function<std::optional<std::string>(const char*)>&
                                   getenv_fn);

// HTTP scoring service: POST /score, POST /batch-score, GET /health.
// The model reference is swapped atomically by reload(); requests already
// running finish on the model they started with.
class NrtService {
 public:
  NrtService(scorer::RelevanceModel model, double threshold);
  ~NrtService();
  NrtService(const NrtService&) = delete;
  NrtService& operator=(const NrtService&) = delete;

  void reload(scorer::RelevanceModel model, std::optional<double> threshold = std::nullopt);
  std::string model_version() const;
  double threshold() const;

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kprel::serve

#endif  // KPREL_SERVE_H_
