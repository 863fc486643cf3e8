#include "kprel/judge.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <future>

#include "httplib.h"
#include "json.hpp"
#include "kprel/error.h"
#include "kprel/jsonl.h"
#include "kprel/simkit.h"

namespace kprel::judge {

using nlohmann::json;

namespace {

constexpr std::string_view kPromptHead =
    "Below is an instruction that describes a task. Write a response that "
    "appropriately completes the request.\n"
    "\n"
    "### Instruction:\n"
    "Given an item with title: \"";
constexpr std::string_view kPromptMiddle = "\", determine whether the keyphrase: \"";
constexpr std::string_view kPromptTail =
    "\", is relevant for cpc targeting or not by giving ONLY yes or no answer:\n"
    "\n"
    "### Response:";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

using CacheKey = std::pair<std::string, std::string>;

struct Answer {
  std::optional<bool> yes;  // set when parsed
  bool failed = false;      // backend error after retry
  std::string error;
};

}  // namespace

std::string build_prompt(const PromptRequest& req) {
  if (req.title.empty()) throw Error(ErrorCode::kInvalidInput, "prompt title is empty");
  if (req.keyphrase.empty()) throw Error(ErrorCode::kInvalidInput, "prompt keyphrase is empty");
  std::string out;
  out.reserve(kPromptHead.size() + kPromptMiddle.size() + kPromptTail.size() +
              req.title.size() + req.keyphrase.size());
  out += kPromptHead;
  out += req.title;
  out += kPromptMiddle;
  out += req.keyphrase;
  out += kPromptTail;
  return out;
}

Verdict parse_verdict(std::string_view completion) {
  std::size_t b = 0, e = completion.size();
  while (b < e && is_space(completion[b])) ++b;
  while (e > b && (is_space(completion[e - 1]) || is_punct(completion[e - 1]))) --e;
  std::string_view s = completion.substr(b, e - b);
  std::size_t end = 0;
  while (end < s.size() && !is_space(s[end])) ++end;
  std::string_view token = s.substr(0, end);
  while (!token.empty() && is_punct(token.back())) token.remove_suffix(1);
  std::string lower(token);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "yes") return Verdict::kYes;
  if (lower == "no") return Verdict::kNo;
  return Verdict::kUnparseable;
}

HttpJudgeBackend::HttpJudgeBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.max_batch_size == 0) {
    throw Error(ErrorCode::kInvalidInput, "judge backend batch size must be positive");
  }
  const auto scheme = config_.url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::kInvalidInput, "judge backend url needs a scheme: " + config_.url);
  }
  const auto slash = config_.url.find('/', scheme + 3);
  scheme_host_port_ = config_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.url.substr(slash);
}

std::vector<std::string> HttpJudgeBackend::complete(const std::vector<std::string>& prompts) {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.auth_token.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.auth_token);
  }
  auto res = client.Post(path_, headers, json(prompts).dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kBackend,
                "judge backend request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kBackend,
                "judge backend returned HTTP " + std::to_string(res->status));
  }
  std::vector<std::string> out;
  try {
    out = json::parse(res->body).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBackend, std::string("judge backend body: ") + e.what());
  }
  if (out.size() != prompts.size()) {
    throw Error(ErrorCode::kBackend, "judge backend returned " + std::to_string(out.size()) +
                                         " completions for " +
                                         std::to_string(prompts.size()) + " prompts");
  }
  return out;
}

VerdictCache::VerdictCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) {
    for (const auto& v : labels::read_verdicts(*path_)) {
      verdicts_[{v.title, v.keyphrase}] = v.yes;
    }
  }
}

std::optional<bool> VerdictCache::lookup(const std::string& title,
                                         const std::string& keyphrase) const {
  std::shared_lock lock(mu_);
  auto it = verdicts_.find({title, keyphrase});
  if (it == verdicts_.end()) return std::nullopt;
  return it->second;
}

void VerdictCache::insert(const labels::JudgeVerdict& v) {
  std::unique_lock lock(mu_);
  const bool fresh = verdicts_.insert_or_assign({v.title, v.keyphrase}, v.yes).second;
  if (fresh && path_) {
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path_->string());
    out << labels::to_json(v).dump() << '\n';
  }
}

std::size_t VerdictCache::size() const {
  std::shared_lock lock(mu_);
  return verdicts_.size();
}

std::vector<labels::JudgeVerdict> JudgeBatchResult::verdicts() const {
  std::vector<labels::JudgeVerdict> out;
  for (const auto& o : outcomes) {
    if (o.verdict) out.push_back(*o.verdict);
  }
  return out;
}

JudgeBatchResult judge_batch(const std::vector<JudgePair>& pairs, JudgeBackend& backend,
                             VerdictCache& cache, const JudgeOptions& options) {
  const std::size_t batch = backend.max_batch_size();
  if (batch == 0) throw Error(ErrorCode::kInvalidInput, "backend batch size is zero");
  const std::size_t concurrency = std::max<std::size_t>(1, options.max_concurrency);

  JudgeBatchResult result;
  result.outcomes.resize(pairs.size());
  std::atomic<std::size_t> calls{0};

  // Unique misses in first-seen order.
  std::vector<CacheKey> misses;
  std::map<CacheKey, Answer> answers;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    auto& out = result.outcomes[i];
    if (p.title.empty() || p.keyphrase.empty()) {
      out.status = PairStatus::kError;
      out.error = "empty title or keyphrase";
      continue;
    }
    if (auto hit = cache.lookup(p.title, p.keyphrase)) {
      out.status = PairStatus::kOk;
      out.from_cache = true;
      out.verdict = labels::JudgeVerdict{p.item_id, p.keyphrase, p.title, p.category,
                                         *hit, options.kind};
      ++result.summary.cache_hits;
      continue;
    }
    CacheKey key{p.title, p.keyphrase};
    if (answers.emplace(key, Answer{}).second) misses.push_back(std::move(key));
  }

  // Sends keys in batches, at most `concurrency` in flight, and records the
  // parsed answers. Returns the keys whose completion could not be parsed.
  auto run_round = [&](const std::vector<CacheKey>& keys) {
    std::vector<std::vector<CacheKey>> batches;
    for (std::size_t b = 0; b < keys.size(); b += batch) {
      batches.emplace_back(keys.begin() + static_cast<std::ptrdiff_t>(b),
                           keys.begin() + static_cast<std::ptrdiff_t>(std::min(keys.size(), b + batch)));
    }
    std::vector<std::optional<std::vector<std::string>>> replies(batches.size());
    std::vector<std::string> failures(batches.size());
    auto send = [&](std::size_t bi) {
      std::vector<std::string> prompts;
      for (const auto& k : batches[bi]) prompts.push_back(build_prompt({k.first, k.second}));
      for (int attempt = 0; attempt < 2; ++attempt) {
        ++calls;
        try {
          auto got = backend.complete(prompts);
          if (got.size() != prompts.size()) {
            throw Error(ErrorCode::kBackend, "backend returned " + std::to_string(got.size()) +
                                                 " completions for " +
                                                 std::to_string(prompts.size()) + " prompts");
          }
          replies[bi] = std::move(got);
          return;
        } catch (const std::exception& e) {
          failures[bi] = e.what();
        }
      }
    };
    for (std::size_t wave = 0; wave < batches.size(); wave += concurrency) {
      const std::size_t end = std::min(batches.size(), wave + concurrency);
      if (end - wave == 1) {
        send(wave);
        continue;
      }
      std::vector<std::future<void>> inflight;
      for (std::size_t bi = wave; bi < end; ++bi) {
        inflight.push_back(std::async(std::launch::async, send, bi));
      }
      for (auto& f : inflight) f.get();
    }
    std::vector<CacheKey> unparsed;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      for (std::size_t k = 0; k < batches[bi].size(); ++k) {
        Answer& a = answers[batches[bi][k]];
        if (!replies[bi]) {
          a.failed = true;
          a.error = failures[bi];
          continue;
        }
        switch (parse_verdict((*replies[bi])[k])) {
          case Verdict::kYes: a.yes = true; break;
          case Verdict::kNo: a.yes = false; break;
          case Verdict::kUnparseable: unparsed.push_back(batches[bi][k]); break;
        }
      }
    }
    return unparsed;
  };

  const auto retry = run_round(misses);
  run_round(retry);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& out = result.outcomes[i];
    if (out.from_cache || !out.error.empty()) continue;
    const auto& p = pairs[i];
    const Answer& a = answers.at({p.title, p.keyphrase});
    if (a.yes) {
      out.status = PairStatus::kOk;
      out.verdict = labels::JudgeVerdict{p.item_id, p.keyphrase, p.title, p.category,
                                         *a.yes, options.kind};
      cache.insert(*out.verdict);
    } else if (a.failed) {
      out.status = PairStatus::kError;
      out.error = a.error;
    } else {
      out.status = PairStatus::kSkipped;
      out.error = "unparseable completion after retry";
    }
  }
  for (const auto& o : result.outcomes) {
    if (o.status == PairStatus::kOk && !o.from_cache) ++result.summary.judged;
    if (o.status == PairStatus::kSkipped) ++result.summary.skipped;
    if (o.status == PairStatus::kError) ++result.summary.errors;
  }
  result.summary.backend_calls = calls.load();
  return result;
}

std::vector<labels::JudgeVerdict> simulated_judge(const simkit::World& world, double epsilon,
                                                  std::uint64_t stream) {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) {
    throw Error(ErrorCode::kInvalidInput, "judge epsilon must lie in [0, 0.5)");
  }
  std::vector<labels::JudgeVerdict> out;
  out.reserve(world.pool().size());
  for (simkit::PairRef p : world.pool()) {
    const bool flip = world.uniform(p, simkit::kJudgeStream + stream) < epsilon;
    const auto& item = world.items()[p.item];
    out.push_back({item.item_id, world.keyphrases()[p.keyphrase].text, item.title,
                   item.category, world.relevant(p) != flip, labels::JudgeKind::kSimulated});
  }
  return out;
}

}  // namespace kprel::judge
