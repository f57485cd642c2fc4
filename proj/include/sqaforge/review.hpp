#pragma once

// Human review of rotated groups: an in-memory store backed by an
// append-only JSONL decision log, and an HTTP front end for the browser
// console.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <httplib.h>

#include "sqaforge/error.hpp"
#include "sqaforge/geometry.hpp"
#include "sqaforge/io.hpp"
#include "sqaforge/metrics.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

enum class ReviewStatus { Pending, Accepted, Corrected, Rejected };

inline std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::Pending: return "pending";
    case ReviewStatus::Accepted: return "accepted";
    case ReviewStatus::Corrected: return "corrected";
    case ReviewStatus::Rejected: return "rejected";
  }
  return "?";
}

inline std::optional<ReviewStatus> parse_review_status(std::string_view s) {
  for (auto st : {ReviewStatus::Pending, ReviewStatus::Accepted, ReviewStatus::Corrected, ReviewStatus::Rejected})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

struct ReviewDecision {
  std::uint64_t seq = 0;
  std::string group_id;
  std::string reviewer_id;
  ReviewStatus status = ReviewStatus::Accepted;
  std::string corrected_answer;
  std::string qid;  // record the correction applies to; the seed when empty
  std::string note;
  std::string timestamp;
};

inline json to_json(const ReviewDecision& d) {
  json j = {{"seq", d.seq},
            {"group_id", d.group_id},
            {"reviewer_id", d.reviewer_id},
            {"status", std::string(to_string(d.status))},
            {"timestamp", d.timestamp}};
  if (d.status == ReviewStatus::Corrected) {
    j["corrected_answer"] = d.corrected_answer;
    j["qid"] = d.qid;
  }
  if (!d.note.empty()) j["note"] = d.note;
  return j;
}

/// Ground-plane rectangles of every object.
inline json topdown_json(const Scene& scene) {
  json objects = json::array();
  double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  for (const auto& o : scene.objects) {
    const double ax = o.center.x - o.half_extents.x, bx = o.center.x + o.half_extents.x;
    const double ay = o.center.y - o.half_extents.y, by = o.center.y + o.half_extents.y;
    x0 = std::min(x0, ax);
    x1 = std::max(x1, bx);
    y0 = std::min(y0, ay);
    y1 = std::max(y1, by);
    objects.push_back({{"id", o.id},
                       {"label", o.label},
                       {"center", {o.center.x, o.center.y}},
                       {"rect", {{"x_min", ax}, {"y_min", ay}, {"x_max", bx}, {"y_max", by}}}});
  }
  return {{"scene_id", scene.scene_id},
          {"objects", objects},
          {"bounds", {{"x_min", x0}, {"y_min", y0}, {"x_max", x1}, {"y_max", y1}}}};
}

/// Top-down view of a group: scene rectangles, the observer, one heading
/// arrow per rotation with its ±45° and ±135° boundary rays, each object's
/// quadrant per rotation and the object each answer names.
inline json group_snapshot(const Scene& scene, const std::vector<RotatedVariant>& records) {
  json snap = topdown_json(scene);
  const auto& base = records.front().record.pose;
  json arrows = json::array();
  json quadrants = json::object();
  for (const auto& v : records) {
    const auto& pose = v.record.pose;
    const double h = pose.heading_rad();
    json rays = json::array();
    for (double off : {std::numbers::pi / 4, 3 * std::numbers::pi / 4, -3 * std::numbers::pi / 4, -std::numbers::pi / 4})
      rays.push_back(normalize_heading(h + off));
    arrows.push_back({{"rotation_deg", v.record.rotation_deg},
                      {"heading_rad", h},
                      {"direction", {std::cos(h), std::sin(h)}},
                      {"boundary_rays_rad", rays}});
    json q = json::object();
    for (const auto& o : scene.objects)
      q[o.id] = detail::is_degenerate(o, pose) ? json(nullptr) : json(std::string(to_string(classify_quadrant(o, pose))));
    quadrants[std::to_string(v.record.rotation_deg)] = q;
  }
  json answers = json::object();
  for (const auto& v : records) {
    const auto want = normalize_answer(v.record.answer);
    const SceneObject* best = nullptr;
    double best_d = INFINITY;
    for (const auto& o : scene.objects) {
      if (normalize_answer(o.label) != want) continue;
      const double d = ground_distance(o.center, v.record.pose.position());
      if (d < best_d) {
        best_d = d;
        best = &o;
      }
    }
    answers[v.record.qid] = best ? json(best->id) : json(nullptr);
  }
  snap["observer"] = {{"position", {base.position().x, base.position().y}}, {"arrows", arrows}};
  snap["quadrants"] = quadrants;
  snap["answer_objects"] = answers;
  return snap;
}

struct ReviewItem {
  std::string group_id;
  std::string scene_id;
  std::vector<RotatedVariant> records;  // ascending rotation
  json snapshot;
  std::vector<ReviewDecision> decisions;
  ReviewStatus status = ReviewStatus::Pending;
  std::map<std::string, std::string> corrections;  // qid -> answer

  bool complete() const {
    if (records.size() != 4) return false;
    for (std::size_t i = 0; i < 4; ++i)
      if (records[i].record.rotation_deg != static_cast<int>(90 * i)) return false;
    return true;
  }

  bool decided_by(const std::string& reviewer) const {
    return std::any_of(decisions.begin(), decisions.end(),
                       [&](const ReviewDecision& d) { return d.reviewer_id == reviewer; });
  }
};

inline json to_json(const ReviewItem& it, bool with_snapshot) {
  json recs = json::array();
  for (const auto& v : it.records) recs.push_back(to_json(v));
  json decisions = json::array();
  for (const auto& d : it.decisions) decisions.push_back(to_json(d));
  json j = {{"group_id", it.group_id},
            {"scene_id", it.scene_id},
            {"status", std::string(to_string(it.status))},
            {"complete", it.complete()},
            {"records", recs},
            {"decisions", decisions},
            {"corrections", it.corrections}};
  if (with_snapshot) j["snapshot"] = it.snapshot;
  return j;
}

struct ReviewOptions {
  /// Decisions an item collects before it leaves the queue.
  int reviews_required = 1;
  std::filesystem::path log_path;  // empty: no durable log
  std::function<std::string()> clock;
  json qualification = json::array();
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct DecisionOutcome {
  int http_status = 200;
  json body;
};

/// Review state. Readers share a lock; decisions are serialized and each
/// accepted decision is appended to the log before it becomes visible.
class ReviewStore {
 public:
  ReviewStore(std::span<const RotatedVariant> benchmark, std::map<std::string, Scene> scenes, ReviewOptions opt = {})
      : scenes_(std::move(scenes)), opt_(std::move(opt)) {
    if (opt_.reviews_required < 1) throw Error(ErrorCode::InvalidArgument, "reviews_required must be at least 1");
    if (!opt_.clock) opt_.clock = utc_timestamp;
    for (const auto& v : benchmark) {
      auto& item = items_[v.record.group_id];
      item.group_id = v.record.group_id;
      item.scene_id = v.record.scene_id;
      item.records.push_back(v);
    }
    for (auto& [gid, item] : items_) {
      std::sort(item.records.begin(), item.records.end(),
                [](const auto& a, const auto& b) { return a.record.rotation_deg < b.record.rotation_deg; });
      auto sc = scenes_.find(item.scene_id);
      if (sc == scenes_.end())
        throw Error(ErrorCode::DanglingSceneRef, "group '" + gid + "' references unknown scene '" + item.scene_id + "'");
      item.snapshot = group_snapshot(sc->second, item.records);
    }
    if (!opt_.log_path.empty()) replay_log();
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return items_.size();
  }

  std::optional<ReviewStatus> status(const std::string& group_id) const {
    std::shared_lock lock(mu_);
    auto it = items_.find(group_id);
    if (it == items_.end()) return std::nullopt;
    return it->second.status;
  }

  std::map<std::string, ReviewStatus> statuses() const {
    std::shared_lock lock(mu_);
    std::map<std::string, ReviewStatus> out;
    for (const auto& [gid, item] : items_) out.emplace(gid, item.status);
    return out;
  }

  /// `status` is a ReviewStatus name or "all". With a reviewer, items that
  /// reviewer already decided are left out. Pages are 1-based.
  json queue(const std::string& status, const std::string& reviewer, std::size_t page, std::size_t page_size) const {
    std::optional<ReviewStatus> want;
    if (status != "all") {
      want = parse_review_status(status);
      if (!want) throw Error(ErrorCode::InvalidArgument, "unknown status '" + status + "'");
    }
    if (page < 1 || page_size < 1 || page_size > 500)
      throw Error(ErrorCode::InvalidArgument, "page must be >= 1 and page_size in [1, 500]");
    std::shared_lock lock(mu_);
    std::vector<const ReviewItem*> matches;
    for (const auto& [gid, item] : items_) {
      if (want && item.status != *want) continue;
      if (!reviewer.empty() && item.decided_by(reviewer)) continue;
      matches.push_back(&item);
    }
    json items = json::array();
    for (std::size_t i = (page - 1) * page_size; i < matches.size() && i < page * page_size; ++i)
      items.push_back(to_json(*matches[i], false));
    return {{"status", status}, {"page", page}, {"page_size", page_size}, {"total", matches.size()}, {"items", items}};
  }

  std::optional<json> item(const std::string& group_id) const {
    std::shared_lock lock(mu_);
    auto it = items_.find(group_id);
    if (it == items_.end()) return std::nullopt;
    return to_json(it->second, true);
  }

  std::optional<json> topdown(const std::string& scene_id) const {
    auto it = scenes_.find(scene_id);
    if (it == scenes_.end()) return std::nullopt;
    return topdown_json(it->second);
  }

  DecisionOutcome submit(const json& body) {
    auto parsed = parse_decision(body);
    if (!parsed.error.empty()) return {400, {{"error", parsed.error}}};
    std::unique_lock lock(mu_);
    auto it = items_.find(parsed.decision.group_id);
    if (it == items_.end()) return {404, {{"error", "unknown group '" + parsed.decision.group_id + "'"}}};
    if (auto err = check_applicable(it->second, parsed.decision); err.http_status != 200) return err;
    auto d = parsed.decision;
    d.seq = next_seq_++;
    d.timestamp = opt_.clock();
    append_log(d);
    apply(it->second, d);
    return {200, {{"decision", to_json(d)}, {"item_status", std::string(to_string(it->second.status))}}};
  }

  /// Kappa over groups with at least two decisions, comparing the first two.
  json agreement() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> a, b;
    for (const auto& [gid, item] : items_) {
      if (item.decisions.size() < 2) continue;
      a.emplace_back(to_string(item.decisions[0].status));
      b.emplace_back(to_string(item.decisions[1].status));
    }
    if (a.empty()) return {{"n", 0}, {"kappa", nullptr}};
    const auto r = cohens_kappa(a, b);
    return {{"n", r.n},
            {"kappa", r.kappa},
            {"observed_agreement", r.observed_agreement},
            {"expected_agreement", r.expected_agreement},
            {"degenerate", r.degenerate}};
  }

  /// Records of complete Accepted/Corrected groups with corrections applied,
  /// ordered by group then rotation.
  std::vector<QARecord> export_records() const {
    std::shared_lock lock(mu_);
    std::vector<QARecord> out;
    for (const auto& [gid, item] : items_) {
      if (item.status != ReviewStatus::Accepted && item.status != ReviewStatus::Corrected) continue;
      if (!item.complete()) continue;
      for (const auto& v : item.records) {
        auto r = v.record;
        if (auto c = item.corrections.find(r.qid); c != item.corrections.end()) r.answer = c->second;
        out.push_back(std::move(r));
      }
    }
    return out;
  }

  const json& qualification() const { return opt_.qualification; }
  int reviews_required() const { return opt_.reviews_required; }

 private:
  struct Parsed {
    ReviewDecision decision;
    std::string error;
  };

  static Parsed parse_decision(const json& body) {
    Parsed p;
    auto str = [&](const char* key, bool required) -> std::optional<std::string> {
      if (!body.contains(key) || body.at(key).is_null()) {
        if (required) p.error = std::string("missing '") + key + "'";
        return std::nullopt;
      }
      if (!body.at(key).is_string()) {
        p.error = std::string("'") + key + "' must be a string";
        return std::nullopt;
      }
      return body.at(key).get<std::string>();
    };
    if (!body.is_object()) return {{}, "decision must be a JSON object"};
    auto gid = str("group_id", true);
    auto rid = str("reviewer_id", true);
    auto st = str("status", true);
    auto ans = str("corrected_answer", false);
    auto qid = str("qid", false);
    auto note = str("note", false);
    if (!p.error.empty()) return p;
    if (gid->empty() || rid->empty()) return {{}, "group_id and reviewer_id must be non-empty"};
    auto status = parse_review_status(*st);
    if (!status || *status == ReviewStatus::Pending)
      return {{}, "status must be accepted, corrected or rejected"};
    if (*status == ReviewStatus::Corrected && (!ans || normalize_answer(*ans).empty()))
      return {{}, "corrected status requires a non-empty corrected_answer"};
    if (*status != ReviewStatus::Corrected && ans) return {{}, "corrected_answer is only allowed with corrected status"};
    p.decision.group_id = *gid;
    p.decision.reviewer_id = *rid;
    p.decision.status = *status;
    if (ans) p.decision.corrected_answer = to_lower(*ans);
    if (qid) p.decision.qid = *qid;
    if (note) p.decision.note = *note;
    return p;
  }

  static DecisionOutcome check_applicable(const ReviewItem& item, ReviewDecision& d) {
    if (item.status != ReviewStatus::Pending)
      return {409, {{"error", "group '" + item.group_id + "' is already " + std::string(to_string(item.status))}}};
    if (item.decided_by(d.reviewer_id))
      return {409, {{"error", "reviewer '" + d.reviewer_id + "' already decided group '" + item.group_id + "'"}}};
    if (d.status == ReviewStatus::Corrected) {
      if (d.qid.empty()) d.qid = item.records.front().record.qid;
      const bool known = std::any_of(item.records.begin(), item.records.end(),
                                     [&](const RotatedVariant& v) { return v.record.qid == d.qid; });
      if (!known) return {400, {{"error", "qid '" + d.qid + "' is not in group '" + item.group_id + "'"}}};
    } else if (!d.qid.empty()) {
      return {400, {{"error", "qid is only allowed with corrected status"}}};
    }
    return {200, {}};
  }

  /// A completed item is Rejected if any reviewer rejected it, else
  /// Corrected if any reviewer corrected it, else Accepted.
  void apply(ReviewItem& item, const ReviewDecision& d) const {
    item.decisions.push_back(d);
    if (d.status == ReviewStatus::Corrected) item.corrections[d.qid] = d.corrected_answer;
    if (static_cast<int>(item.decisions.size()) < opt_.reviews_required) return;
    bool rejected = false, corrected = false;
    for (const auto& x : item.decisions) {
      rejected |= x.status == ReviewStatus::Rejected;
      corrected |= x.status == ReviewStatus::Corrected;
    }
    item.status = rejected ? ReviewStatus::Rejected : corrected ? ReviewStatus::Corrected : ReviewStatus::Accepted;
  }

  void append_log(const ReviewDecision& d) {
    if (opt_.log_path.empty()) return;
    std::ofstream out(opt_.log_path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot append to " + opt_.log_path.string());
    out << to_json(d).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::InvalidArgument, "write to " + opt_.log_path.string() + " failed");
  }

  void replay_log() {
    std::ifstream in(opt_.log_path);
    if (!in) return;
    for_each_jsonl(in, opt_.log_path.string(), [&](const json& j, std::size_t line) {
      auto parsed = parse_decision(j);
      if (!parsed.error.empty()) throw Error(ErrorCode::ParseError, parsed.error);
      auto d = parsed.decision;
      d.seq = j.value("seq", next_seq_);
      d.timestamp = j.value("timestamp", std::string());
      auto it = items_.find(d.group_id);
      if (it == items_.end()) throw Error(ErrorCode::ParseError, "log names unknown group '" + d.group_id + "'");
      if (auto err = check_applicable(it->second, d); err.http_status != 200)
        throw Error(ErrorCode::InvariantViolation,
                    "decision log line " + std::to_string(line) + " does not replay: " + err.body.at("error").get<std::string>());
      apply(it->second, d);
      next_seq_ = std::max(next_seq_, d.seq + 1);
    });
  }

  std::map<std::string, Scene> scenes_;
  ReviewOptions opt_;
  std::map<std::string, ReviewItem> items_;
  std::uint64_t next_seq_ = 1;
  mutable std::shared_mutex mu_;
};

/// HTTP routes over a ReviewStore. All bodies are JSON except the export,
/// which is JSONL.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewStore& store) : store_(store) { routes(); }

  /// Binds and returns the port; port 0 picks a free one.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? svr_.bind_to_any_port(host) : (svr_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::EndpointUnavailable, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop().
  bool serve() { return svr_.listen_after_bind(); }
  void stop() { svr_.stop(); }
  void wait_until_ready() const { svr_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::size_t size_param(const httplib::Request& req, const char* key, std::size_t dflt) {
    if (!req.has_param(key)) return dflt;
    const auto v = req.get_param_value(key);
    std::size_t used = 0;
    long long n = 0;
    try {
      n = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || n < 0) throw Error(ErrorCode::InvalidArgument, std::string("bad ") + key + " '" + v + "'");
    return static_cast<std::size_t>(n);
  }

  void routes() {
    svr_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    svr_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    svr_.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto status = req.has_param("status") ? req.get_param_value("status") : std::string("pending");
        const auto reviewer = req.has_param("reviewer_id") ? req.get_param_value("reviewer_id") : std::string();
        send(res, 200, store_.queue(status, reviewer, size_param(req, "page", 1), size_param(req, "page_size", 20)));
      } catch (const Error& e) {
        send(res, 400, {{"error", e.what()}});
      }
    });
    svr_.Get(R"(/api/item/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto item = store_.item(req.matches[1]);
      if (!item) return send(res, 404, {{"error", "unknown group '" + std::string(req.matches[1]) + "'"}});
      send(res, 200, *item);
    });
    svr_.Post("/api/decision", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        return send(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      }
      try {
        auto out = store_.submit(body);
        send(res, out.http_status, out.body);
      } catch (const Error& e) {
        send(res, 500, {{"error", e.what()}});
      }
    });
    svr_.Get("/api/agreement", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, store_.agreement());
    });
    svr_.Get(R"(/api/scene/([^/]+)/topdown)", [this](const httplib::Request& req, httplib::Response& res) {
      auto view = store_.topdown(req.matches[1]);
      if (!view) return send(res, 404, {{"error", "unknown scene '" + std::string(req.matches[1]) + "'"}});
      send(res, 200, *view);
    });
    svr_.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
      std::string out;
      for (const auto& r : store_.export_records()) out += to_json(r).dump() + "\n";
      res.set_content(out, "application/x-ndjson");
    });
    svr_.Get("/api/qualification", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"checklist", store_.qualification()}, {"reviews_required", store_.reviews_required()}});
    });
  }

  ReviewStore& store_;
  httplib::Server svr_;
};

}  // namespace sqaforge
