#include "kprel/serve.h"

#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>

#include "dataset_gen.h"
#include "httplib.h"
#include "kprel/error.h"
#include "kprel/simkit.h"
#include "test_support.h"

namespace kprel::serve {
namespace {

using evalkit::Recommendation;
using nlohmann::json;

scorer::RelevanceModel test_model(std::string version = "m1") {
  scorer::RelevanceModel m;
  m.weights = {1.3, 2.1, 0.4, 0.9, -0.8, 0.3, -1.7};
  m.version = std::move(version);
  return m;
}

std::vector<Recommendation> random_pairs(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<Recommendation> out;
  int i = 0;
  for (const auto& e : testing::random_dataset(rng, n)) {
    out.push_back({"s" + std::to_string(seed) + "i" + std::to_string(i++), e.category, e.title,
                   e.keyphrase});
  }
  return out;
}

TEST(BatchInfer, EmptyInput) {
  const auto r = batch_infer(test_model(), 0.5, {}, 4, "2024-01-01T00:00:00Z");
  EXPECT_EQ(r.snapshot.header.record_count, 0u);
  EXPECT_TRUE(r.snapshot.records.empty());
  EXPECT_TRUE(r.rejects.empty());
}

TEST(BatchInfer, PartitionCountDoesNotMatter) {
  const auto pairs = random_pairs(1, 2000);
  const auto one = batch_infer(test_model(), 0.6, pairs, 1, "t");
  for (int parts : {2, 8, 13}) {
    const auto many = batch_infer(test_model(), 0.6, pairs, parts, "t");
    EXPECT_EQ(many.snapshot, one.snapshot);
    ASSERT_EQ(many.rejects.size(), one.rejects.size());
  }
  EXPECT_NO_THROW(validate(one.snapshot));
}

TEST(BatchInfer, EqualsPerPairScoreLoopOnSimulatedPool) {
  simkit::SimConfig c;
  c.n_items = 100;
  c.n_keyphrases = 60;
  const auto world = simkit::generate_world(c);
  const auto recs = world.recommendations();
  const auto model = test_model();
  const auto r = batch_infer(model, 0.7, recs, 8, "t");
  EXPECT_TRUE(r.rejects.empty());
  std::map<std::pair<std::string, std::string>, double> expected;
  for (const auto& p : recs) {
    expected[{p.item_id, p.keyphrase}] = scorer::score(model, p.keyphrase, p.category, p.title);
  }
  ASSERT_EQ(r.snapshot.records.size(), expected.size());
  for (const auto& rec : r.snapshot.records) {
    const double s = expected.at({rec.item_id, rec.keyphrase});
    EXPECT_EQ(rec.score, s);
    EXPECT_EQ(rec.relevant, s >= 0.7);
    EXPECT_EQ(rec.model_version, "m1");
  }
}

TEST(BatchInfer, RejectsUnfeaturizableAndDuplicates) {
  std::vector<Recommendation> pairs = {{"a", "c", "good title", "kp"},
                                       {"b", "c", "", "kp"},
                                       {"a", "c", "other title", "kp"},
                                       {"c", "c", "title", "?!"}};
  const auto r = batch_infer(test_model(), 0.5, pairs, 3, "t");
  ASSERT_EQ(r.snapshot.records.size(), 1u);
  EXPECT_EQ(r.snapshot.records[0].score, scorer::score(test_model(), "kp", "c", "good title"));
  ASSERT_EQ(r.rejects.size(), 3u);
  EXPECT_EQ(r.rejects[0].row, 1u);
  EXPECT_EQ(r.rejects[1].row, 2u);
  EXPECT_EQ(r.rejects[2].row, 3u);
}

Snapshot snap(std::vector<std::pair<std::string, double>> keyed, std::string version = "m1") {
  Snapshot s;
  for (auto& [k, v] : keyed) s.records.push_back({k, "kp", v, v >= 0.5, version, "t0"});
  std::sort(s.records.begin(), s.records.end(),
            [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
  s.header = {version, 0.5, "t0", s.records.size()};
  return s;
}

TEST(DiffMerge, CollisionRuleAndIdentity) {
  const auto full = snap({{"A", 0.1}, {"B", 0.2}});
  auto diff = snap({{"B", 0.9}, {"C", 0.3}});
  diff.header.created_at = "t1";
  const auto merged = diff_merge(full, diff);
  ASSERT_EQ(merged.header.record_count, 3u);
  EXPECT_EQ(merged.records[1].score, 0.9);
  EXPECT_EQ(merged.header.created_at, "t1");
  EXPECT_EQ(diff_merge(merged, diff), merged);
  const auto same = diff_merge(full, snap({}));
  EXPECT_EQ(same.records, full.records);
}

TEST(DiffMerge, ModelMismatch) {
  const auto full = snap({{"A", 0.1}});
  const auto diff = snap({{"B", 0.9}}, "m2");
  try {
    diff_merge(full, diff);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }
  EXPECT_EQ(diff_merge(full, diff, true), diff);
}

TEST(DiffMerge, MatchesRecomputeFromScratch) {
  const auto model = test_model();
  auto universe = random_pairs(7, 3000);
  const auto full = batch_infer(model, 0.6, universe, 4, "t").snapshot;
  auto current = full;
  std::mt19937_64 rng(8);
  for (int day = 0; day < 3; ++day) {
    // Revise some titles, add new pairs.
    std::vector<Recommendation> changed;
    for (int k = 0; k < 200; ++k) {
      auto& p = universe[rng() % universe.size()];
      p.title += " revised";
      changed.push_back(p);
    }
    for (const auto& p : random_pairs(100 + static_cast<std::uint64_t>(day), 150)) {
      universe.push_back(p);
      changed.push_back(p);
    }
    // A pair revised twice in one day keeps its last version.
    std::map<std::pair<std::string, std::string>, Recommendation> latest;
    for (const auto& p : changed) latest[{p.item_id, p.keyphrase}] = p;
    std::vector<Recommendation> diff_pairs;
    for (const auto& [k, p] : latest) diff_pairs.push_back(p);
    current = diff_merge(current, batch_infer(model, 0.6, diff_pairs, 2, "t").snapshot);
  }
  std::map<std::pair<std::string, std::string>, Recommendation> final_universe;
  for (const auto& p : universe) final_universe[{p.item_id, p.keyphrase}] = p;
  std::vector<Recommendation> flat;
  for (const auto& [k, p] : final_universe) flat.push_back(p);
  const auto scratch = batch_infer(model, 0.6, flat, 1, "t").snapshot;
  EXPECT_EQ(current.records, scratch.records);
}

TEST(SnapshotIo, RoundTripAndCorruption) {
  testing::TempDir dir;
  const auto s = batch_infer(test_model(), 0.5, random_pairs(3, 100), 2, "t").snapshot;
  write_snapshot(dir.file("s.jsonl"), s);
  EXPECT_EQ(read_snapshot(dir.file("s.jsonl")), s);
  auto text = testing::slurp(dir.file("s.jsonl"));
  testing::spit(dir.file("bad.jsonl"), text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  EXPECT_THROW(read_snapshot(dir.file("bad.jsonl")), Error);
}

TEST(Settings, FlagsBeatEnvBeatDefaults) {
  std::map<std::string, std::string> env = {{"KPREL_BIND", "0.0.0.0:9000"},
                                            {"KPREL_MODEL", "/env/model.json"},
                                            {"KPREL_THRESHOLD", "0.7"}};
  auto getenv_fn = [&](const char* k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  auto s = resolve_settings({}, getenv_fn);
  EXPECT_EQ(s.host, "0.0.0.0");
  EXPECT_EQ(s.port, 9000);
  EXPECT_EQ(s.model_path, "/env/model.json");
  EXPECT_EQ(s.threshold, 0.7);
  s = resolve_settings({"127.0.0.1:81", "/flag.json", 0.2}, getenv_fn);
  EXPECT_EQ(s.port, 81);
  EXPECT_EQ(s.model_path, "/flag.json");
  EXPECT_EQ(s.threshold, 0.2);
  env.clear();
  s = resolve_settings({}, getenv_fn);
  EXPECT_EQ(s.host, "127.0.0.1");
  EXPECT_EQ(s.port, 8080);
  EXPECT_EQ(s.threshold, 0.5);
  env["KPREL_THRESHOLD"] = "abc";
  EXPECT_THROW(resolve_settings({}, getenv_fn), Error);
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<NrtService>(test_model(), 0.6);
    port_ = service_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override { service_->stop(); }

  json post(const std::string& path, const std::string& body, int expect_status = 200) {
    auto res = client_->Post(path, body, "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect_status) << res->body;
    return json::parse(res->body);
  }

  std::unique_ptr<NrtService> service_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceTest, HealthReportsModelVersion) {
  auto res = client_->Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body), (json{{"status", "ok"}, {"model_version", "m1"}}));
}

TEST_F(ServiceTest, ScoreMatchesInProcess) {
  const auto j = post("/score", R"({"item_title":"Red running shoes","category":"Shoes","keyphrase":"red shoes"})");
  const double s = scorer::score(test_model(), "red shoes", "Shoes", "Red running shoes");
  EXPECT_EQ(j.at("score").get<double>(), s);
  EXPECT_EQ(j.at("relevant").get<bool>(), s >= 0.6);
  EXPECT_EQ(j.at("model_version"), "m1");
}

TEST_F(ServiceTest, BatchKeepsOrderAndIsolatesErrors) {
  const auto pairs = random_pairs(5, 100);
  json req = json::array();
  for (const auto& p : pairs) {
    req.push_back({{"item_title", p.title}, {"category", p.category}, {"keyphrase", p.keyphrase}});
  }
  req[10]["keyphrase"] = "";
  const auto j = post("/batch-score", req.dump());
  ASSERT_EQ(j.at("results").size(), 100u);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& r = j.at("results")[i];
    if (i == 10) {
      EXPECT_EQ(r.at("error").at("code"), "unfeaturizable");
      continue;
    }
    EXPECT_EQ(r.at("score").get<double>(),
              scorer::score(test_model(), pairs[i].keyphrase, pairs[i].category, pairs[i].title));
  }
  const auto wrapped = post("/batch-score", json{{"requests", json::array({req[0]})}}.dump());
  EXPECT_EQ(wrapped.at("results").size(), 1u);
}

TEST_F(ServiceTest, ErrorStatuses) {
  EXPECT_EQ(post("/score", "{not json", 400).at("error").at("code"), "malformed_request");
  EXPECT_EQ(post("/score", R"({"item_title":"t"})", 400).at("error").at("code"),
            "malformed_request");
  EXPECT_EQ(post("/score", R"({"item_title":"t","category":"c","keyphrase":5})", 400)
                .at("error").at("code"), "malformed_request");
  EXPECT_EQ(post("/score", R"({"item_title":"","category":"c","keyphrase":"k"})", 422)
                .at("error").at("code"), "unfeaturizable");
  EXPECT_EQ(post("/batch-score", R"({"x":1})", 400).at("error").at("code"), "malformed_request");
}

TEST_F(ServiceTest, ReloadSwapsModelWithoutDroppingRequests) {
  std::atomic<bool> done{false};
  std::atomic<int> ok{0}, bad{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&] {
      httplib::Client c("127.0.0.1", port_);
      while (!done) {
        auto res = c.Post("/score", R"({"item_title":"a b c","category":"x","keyphrase":"a b"})",
                          "application/json");
        if (res && res->status == 200) {
          const auto v = json::parse(res->body).at("model_version").get<std::string>();
          (v == "m1" || v == "m2") ? ++ok : ++bad;
        } else {
          ++bad;
        }
      }
    });
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service_->reload(test_model("m2"));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  done = true;
  for (auto& t : workers) t.join();
  EXPECT_EQ(bad, 0);
  EXPECT_GT(ok, 0);
  EXPECT_EQ(service_->model_version(), "m2");
  EXPECT_EQ(service_->threshold(), 0.6);
  auto res = client_->Get("/health");
  EXPECT_EQ(json::parse(res->body).at("model_version"), "m2");
  auto wrong = test_model("m3");
  wrong.feature_schema_hash = "deadbeefdeadbeef";
  EXPECT_THROW(service_->reload(wrong), Error);
  EXPECT_EQ(service_->model_version(), "m2");
}

}  // namespace
}  // namespace kprel::serve
