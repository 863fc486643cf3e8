#include "kprel/serve.h"

#include <algorithm>
#include <ctime>
#include <mutex>
#include <numeric>
#include <thread>

#include <omp.h>

#include "httplib.h"
#include "kprel/error.h"
#include "kprel/jsonl.h"
#include "kprel/kernels.h"

namespace kprel::serve {

using nlohmann::json;

namespace {

auto key_of(const ScoreRecord& r) { return std::tie(r.item_id, r.keyphrase); }

json header_to_json(const SnapshotHeader& h) {
  return {{"model_version", h.model_version},
          {"threshold", h.threshold},
          {"created_at", h.created_at},
          {"record_count", h.record_count}};
}

ScoreRecord record_from_json(const json& j) {
  ScoreRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.keyphrase = j.at("keyphrase").get<std::string>();
  r.score = j.at("score").get<double>();
  r.relevant = j.at("relevant").get<bool>();
  r.model_version = j.at("model_version").get<std::string>();
  r.scored_at = j.at("scored_at").get<std::string>();
  return r;
}

}  // namespace

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void validate(const Snapshot& s) {
  if (s.header.record_count != s.records.size()) {
    throw Error(ErrorCode::kCorruptPayload,
                "snapshot header says " + std::to_string(s.header.record_count) +
                    " records, found " + std::to_string(s.records.size()));
  }
  for (std::size_t i = 1; i < s.records.size(); ++i) {
    if (!(key_of(s.records[i - 1]) < key_of(s.records[i]))) {
      throw Error(ErrorCode::kCorruptPayload,
                  "snapshot records unsorted or duplicated at " + s.records[i].item_id +
                      " / '" + s.records[i].keyphrase + "'");
    }
  }
}

json to_json(const ScoreRecord& r) {
  return {{"item_id", r.item_id},   {"keyphrase", r.keyphrase},
          {"score", r.score},       {"relevant", r.relevant},
          {"model_version", r.model_version}, {"scored_at", r.scored_at}};
}

BatchResult batch_infer(const scorer::RelevanceModel& model, double threshold,
                        const std::vector<evalkit::Recommendation>& pairs, int partitions,
                        const std::string& scored_at) {
  scorer::check_schema(model);
  const std::size_t n = pairs.size();
  const std::size_t parts =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(partitions, 1)), 1,
                              std::max<std::size_t>(n, 1));

  std::vector<kernels::TripleView> triples;
  triples.reserve(n);
  for (const auto& p : pairs) triples.push_back({p.keyphrase, p.category, p.title});

  std::vector<kernels::ScoreOutcome> outcomes(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t part = 0; part < static_cast<std::ptrdiff_t>(parts); ++part) {
    const std::size_t begin = static_cast<std::size_t>(part) * n / parts;
    const std::size_t end = (static_cast<std::size_t>(part) + 1) * n / parts;
    auto slice = kernels::score_triples_serial(
        model.weights, std::span<const kernels::TripleView>(triples).subspan(begin, end - begin));
    std::move(slice.begin(), slice.end(), outcomes.begin() + static_cast<std::ptrdiff_t>(begin));
  }

  BatchResult result;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (outcomes[i].ok()) {
      order.push_back(i);
    } else {
      result.rejects.push_back({i, pairs[i].item_id, pairs[i].keyphrase, outcomes[i].error});
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(pairs[a].item_id, pairs[a].keyphrase) <
           std::tie(pairs[b].item_id, pairs[b].keyphrase);
  });

  auto& records = result.snapshot.records;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (!records.empty() && records.back().item_id == pairs[i].item_id &&
        records.back().keyphrase == pairs[i].keyphrase) {
      result.rejects.push_back({i, pairs[i].item_id, pairs[i].keyphrase,
                                "duplicate (item_id, keyphrase); first occurrence kept"});
      continue;
    }
    const double s = outcomes[i].score;
    records.push_back({pairs[i].item_id, pairs[i].keyphrase, s, s >= threshold,
                       model.version, scored_at});
  }
  std::sort(result.rejects.begin(), result.rejects.end(),
            [](const Reject& a, const Reject& b) { return a.row < b.row; });

  result.snapshot.header = {model.version, threshold, scored_at, records.size()};
  return result;
}

Snapshot diff_merge(const Snapshot& full, const Snapshot& diff, bool allow_model_change) {
  validate(full);
  validate(diff);
  if (full.header.model_version != diff.header.model_version ||
      full.header.threshold != diff.header.threshold) {
    if (!allow_model_change) {
      throw Error(ErrorCode::kVersionMismatch,
                  "diff was scored with model '" + diff.header.model_version +
                      "' at threshold " + json(diff.header.threshold).dump() +
                      ", full snapshot with '" + full.header.model_version +
                      "' at threshold " + json(full.header.threshold).dump() +
                      " (pass the model-change override to replace it)");
    }
    return diff;
  }

  Snapshot out;
  out.records.reserve(full.records.size() + diff.records.size());
  auto a = full.records.begin();
  auto b = diff.records.begin();
  while (a != full.records.end() || b != diff.records.end()) {
    if (b == diff.records.end() || (a != full.records.end() && key_of(*a) < key_of(*b))) {
      out.records.push_back(*a++);
    } else {
      if (a != full.records.end() && key_of(*a) == key_of(*b)) ++a;
      out.records.push_back(*b++);
    }
  }
  out.header = {full.header.model_version, full.header.threshold, diff.header.created_at,
                out.records.size()};
  return out;
}

void write_snapshot(const std::string& path, const Snapshot& s) {
  std::vector<json> rows;
  rows.reserve(s.records.size() + 1);
  rows.push_back(header_to_json(s.header));
  for (const auto& r : s.records) rows.push_back(to_json(r));
  jsonl::write_file(path, rows);
}

Snapshot read_snapshot(const std::string& path) {
  const auto rows = jsonl::read_file(path);
  if (rows.empty()) throw Error(ErrorCode::kCorruptPayload, path + ": missing snapshot header");
  Snapshot s;
  try {
    const auto& h = rows[0];
    s.header.model_version = h.at("model_version").get<std::string>();
    s.header.threshold = h.at("threshold").get<double>();
    s.header.created_at = h.at("created_at").get<std::string>();
    s.header.record_count = h.at("record_count").get<std::size_t>();
    for (std::size_t i = 1; i < rows.size(); ++i) s.records.push_back(record_from_json(rows[i]));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptPayload, path + ": " + e.what());
  }
  validate(s);
  return s;
}

void write_rejects(const std::string& path, const std::vector<Reject>& rejects) {
  std::vector<json> rows;
  for (const auto& r : rejects) {
    rows.push_back({{"row", r.row},
                    {"item_id", r.item_id},
                    {"keyphrase", r.keyphrase},
                    {"reason", r.reason}});
  }
  jsonl::write_file(path, rows);
}

ServeSettings resolve_settings(
    const ServeFlags& flags,
    const std::function<std::optional<std::string>(const char*)>& getenv_fn) {
  ServeSettings s;
  auto bind = flags.bind ? flags.bind : getenv_fn("KPREL_BIND");
  if (bind) {
    const auto colon = bind->rfind(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::kInvalidInput, "bind address must be host:port, got " + *bind);
    }
    s.host = bind->substr(0, colon);
    try {
      s.port = std::stoi(bind->substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidInput, "bad port in bind address " + *bind);
    }
  }
  if (auto m = flags.model ? flags.model : getenv_fn("KPREL_MODEL")) s.model_path = *m;
  if (flags.threshold) {
    s.threshold = *flags.threshold;
  } else if (auto t = getenv_fn("KPREL_THRESHOLD")) {
    try {
      s.threshold = std::stod(*t);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidInput, "KPREL_THRESHOLD is not a number: " + *t);
    }
  }
  return s;
}

namespace {

struct ServingState {
  scorer::RelevanceModel model;
  double threshold;
};

struct BadRequest {
  std::string message;
};

struct Triple {
  std::string title, category, keyphrase;
};

Triple parse_triple(const json& j) {
  if (!j.is_object()) throw BadRequest{"request must be a JSON object"};
  Triple t;
  auto get = [&](const char* name, std::string& out) {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string()) {
      throw BadRequest{std::string("field '") + name + "' must be a string"};
    }
    out = it->get<std::string>();
  };
  get("item_title", t.title);
  get("category", t.category);
  get("keyphrase", t.keyphrase);
  return t;
}

json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

struct NrtService::Impl {
  httplib::Server server;
  mutable std::mutex mu;
  std::shared_ptr<const ServingState> state;
  std::thread thread;

  std::shared_ptr<const ServingState> current() const {
    std::lock_guard lock(mu);
    return state;
  }

  static json score_one(const ServingState& st, const Triple& t) {
    const double s = scorer::score(st.model, t.keyphrase, t.category, t.title);
    return {{"score", s}, {"relevant", s >= st.threshold}, {"model_version", st.model.version}};
  }

  void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  // Runs fn with the model captured at request start; maps failures to
  // 400 / 422 / 500.
  template <typename Fn>
  void guarded(const httplib::Request& req, httplib::Response& res, Fn fn) {
    try {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        throw BadRequest{std::string("body is not valid JSON: ") + e.what()};
      }
      const auto st = current();
      reply(res, 200, fn(*st, body));
    } catch (const BadRequest& e) {
      reply(res, 400, error_body("malformed_request", e.message));
    } catch (const Error& e) {
      const bool client = e.code() == ErrorCode::kInvalidInput;
      reply(res, client ? 422 : 500,
            error_body(client ? "unfeaturizable" : error_code_name(e.code()), e.what()));
    } catch (const std::exception& e) {
      reply(res, 500, error_body("internal", e.what()));
    }
  }

  void install_routes() {
    server.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [](const ServingState& st, const json& body) {
        return score_one(st, parse_triple(body));
      });
    });
    server.Post("/batch-score", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [](const ServingState& st, const json& body) {
        const json* items = &body;
        if (body.is_object() && body.contains("requests")) items = &body.at("requests");
        if (!items->is_array()) throw BadRequest{"expected an array of triples"};
        std::vector<Triple> triples;
        for (const auto& j : *items) triples.push_back(parse_triple(j));
        json results = json::array();
        for (const auto& t : triples) {
          try {
            results.push_back(score_one(st, t));
          } catch (const Error& e) {
            results.push_back(error_body(e.code() == ErrorCode::kInvalidInput
                                             ? "unfeaturizable"
                                             : error_code_name(e.code()),
                                         e.what()));
          }
        }
        return json{{"results", results}, {"model_version", st.model.version}};
      });
    });
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto st = current();
      reply(res, 200, {{"status", "ok"}, {"model_version", st->model.version}});
    });
  }
};

NrtService::NrtService(scorer::RelevanceModel model, double threshold)
    : impl_(std::make_unique<Impl>()) {
  scorer::check_schema(model);
  impl_->state = std::make_shared<const ServingState>(ServingState{std::move(model), threshold});
  impl_->install_routes();
}

NrtService::~NrtService() { stop(); }

void NrtService::reload(scorer::RelevanceModel model, std::optional<double> threshold) {
  scorer::check_schema(model);
  std::lock_guard lock(impl_->mu);
  const double t = threshold.value_or(impl_->state->threshold);
  impl_->state = std::make_shared<const ServingState>(ServingState{std::move(model), t});
}

std::string NrtService::model_version() const { return impl_->current()->model.version; }
double NrtService::threshold() const { return impl_->current()->threshold; }

int NrtService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void NrtService::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw Error(ErrorCode::kIo, "cannot serve on " + host + ":" + std::to_string(port));
  }
}

void NrtService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace kprel::serve
