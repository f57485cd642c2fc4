#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "sqaforge/review.hpp"
#include "support.hpp"

namespace sq = sqaforge;
using sq::json;
using sq::testing::TempDir;

namespace {

// `groups` complete rotation groups over the classroom scene, plus one seed
// without variants.
std::vector<sq::RotatedVariant> benchmark(int groups) {
  const auto scene = sq::testing::classroom();
  const auto lex = sq::DirectionalLexicon::standard();
  std::vector<sq::RotatedVariant> out;
  for (int i = 0; i < groups; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "g%03d", i);
    const auto s = sq::testing::seed_record(id, scene, sq::ObserverPose({0, 0, 0}, 0.0),
                                            "I am facing a trash can and the whiteboard is on my right.",
                                            "What is on my right?", "whiteboard", sq::Category::Object,
                                            sq::VrsType::Direction);
    out.push_back(sq::validate_seed(s, scene, lex));
    for (auto& v : sq::augment_seed(s, scene, lex)) out.push_back(v);
  }
  auto lone = sq::testing::seed_record("lone", scene, sq::ObserverPose({0, 0, 0}, 0.0), "I am facing a trash can.",
                                       "What is behind me?", "table", sq::Category::Object, sq::VrsType::Direction);
  out.push_back(sq::validate_seed(lone, scene, lex));
  return out;
}

std::map<std::string, sq::Scene> scenes() { return {{"classroom", sq::testing::classroom()}}; }

sq::ReviewOptions options(const std::filesystem::path& log, int required = 1) {
  sq::ReviewOptions o;
  o.log_path = log;
  o.reviews_required = required;
  o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
  o.qualification = json::array({"reads the top-down map", "knows the quadrant convention"});
  return o;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

class LiveServer {
 public:
  explicit LiveServer(sq::ReviewStore& store) : server_(store) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.serve(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(5, 0);
    return c;
  }
  int port() const { return port_; }

 private:
  sq::ReviewServer server_;
  int port_ = 0;
  std::thread thread_;
};

json post(httplib::Client& c, const json& body, int& status) {
  auto res = c.Post("/api/decision", body.dump(), "application/json");
  EXPECT_TRUE(res);
  status = res ? res->status : -1;
  return res && !res->body.empty() ? json::parse(res->body) : json();
}

json get(httplib::Client& c, const std::string& path, int expect = 200) {
  auto res = c.Get(path);
  EXPECT_TRUE(res) << path;
  if (!res) return {};
  EXPECT_EQ(res->status, expect) << path << ": " << res->body;
  return json::parse(res->body);
}

}  // namespace

TEST(ReviewHttp, DecisionIsLoggedAndLeavesTheQueue) {
  TempDir dir;
  sq::ReviewStore store(benchmark(3), scenes(), options(dir / "log.jsonl"));
  LiveServer server(store);
  auto c = server.client();

  const auto q = get(c, "/api/queue");
  EXPECT_EQ(q["total"], 4);
  int status = 0;
  const auto out = post(c, {{"group_id", "g001"}, {"reviewer_id", "ana"}, {"status", "accepted"}}, status);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(out["item_status"], "accepted");
  EXPECT_EQ(out["decision"]["timestamp"], "2026-01-01T00:00:00Z");
  EXPECT_EQ(line_count(dir / "log.jsonl"), 1u);
  const auto after = get(c, "/api/queue");
  EXPECT_EQ(after["total"], 3);
  for (const auto& it : after["items"]) EXPECT_NE(it["group_id"], "g001");
  EXPECT_EQ(get(c, "/api/queue?status=accepted")["total"], 1);
}

TEST(ReviewHttp, RejectsConflictsAndBadInput) {
  TempDir dir;
  sq::ReviewStore store(benchmark(2), scenes(), options(dir / "log.jsonl", 2));
  LiveServer server(store);
  auto c = server.client();
  int status = 0;
  post(c, {{"group_id", "g000"}, {"reviewer_id", "ana"}, {"status", "accepted"}}, status);
  EXPECT_EQ(status, 200);
  post(c, {{"group_id", "g000"}, {"reviewer_id", "ana"}, {"status", "rejected"}}, status);
  EXPECT_EQ(status, 409);
  post(c, {{"group_id", "nope"}, {"reviewer_id", "ana"}, {"status", "accepted"}}, status);
  EXPECT_EQ(status, 404);
  post(c, {{"group_id", "g001"}, {"reviewer_id", "ana"}, {"status", "corrected"}}, status);
  EXPECT_EQ(status, 400);
  post(c, {{"group_id", "g001"}, {"reviewer_id", "ana"}, {"status", "corrected"}, {"corrected_answer", "door"},
           {"qid", "g000_r90"}},
       status);
  EXPECT_EQ(status, 400);
  post(c, {{"group_id", "g001"}, {"reviewer_id", "ana"}, {"status", "pending"}}, status);
  EXPECT_EQ(status, 400);
  auto res = c.Post("/api/decision", "{\"group_id\": ", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  // Only the first decision reached the log.
  EXPECT_EQ(line_count(dir / "log.jsonl"), 1u);

  // Item is finished after the second reviewer; further decisions conflict.
  post(c, {{"group_id", "g000"}, {"reviewer_id", "ben"}, {"status", "accepted"}}, status);
  EXPECT_EQ(status, 200);
  post(c, {{"group_id", "g000"}, {"reviewer_id", "cy"}, {"status", "accepted"}}, status);
  EXPECT_EQ(status, 409);
  EXPECT_EQ(get(c, "/api/queue?status=bogus", 400)["error"].is_string(), true);
  get(c, "/api/queue?page=0", 400);
}

TEST(ReviewHttp, IdenticalReviewersAgreePerfectly) {
  TempDir dir;
  sq::ReviewStore store(benchmark(50), scenes(), options(dir / "log.jsonl", 2));
  LiveServer server(store);
  auto c = server.client();
  EXPECT_TRUE(get(c, "/api/agreement")["kappa"].is_null());
  for (int i = 0; i < 50; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "g%03d", i);
    const json base = {{"group_id", id}, {"status", i % 3 == 0 ? "rejected" : "accepted"}};
    for (const char* who : {"ana", "ben"}) {
      auto d = base;
      d["reviewer_id"] = who;
      int status = 0;
      post(c, d, status);
      ASSERT_EQ(status, 200);
    }
  }
  const auto a = get(c, "/api/agreement");
  EXPECT_EQ(a["n"], 50);
  EXPECT_DOUBLE_EQ(a["kappa"].get<double>(), 1.0);
  EXPECT_EQ(line_count(dir / "log.jsonl"), 100u);
}

TEST(ReviewHttp, ReviewerQueueHidesOwnDecisions) {
  sq::ReviewStore store(benchmark(5), scenes(), options({}, 2));
  LiveServer server(store);
  auto c = server.client();
  int status = 0;
  post(c, {{"group_id", "g002"}, {"reviewer_id", "ana"}, {"status", "accepted"}}, status);
  EXPECT_EQ(get(c, "/api/queue?reviewer_id=ana")["total"], 5);
  EXPECT_EQ(get(c, "/api/queue?reviewer_id=ben")["total"], 6);
}

TEST(ReviewHttp, Pagination) {
  sq::ReviewStore store(benchmark(25), scenes(), options({}));
  LiveServer server(store);
  auto c = server.client();
  std::set<std::string> seen;
  for (int page = 1; page <= 3; ++page) {
    const auto q = get(c, "/api/queue?page=" + std::to_string(page) + "&page_size=10");
    EXPECT_EQ(q["total"], 26);
    EXPECT_EQ(q["items"].size(), page < 3 ? 10u : 6u);
    for (const auto& it : q["items"]) seen.insert(it["group_id"].get<std::string>());
  }
  EXPECT_EQ(seen.size(), 26u);
  EXPECT_TRUE(get(c, "/api/queue?page=9&page_size=10")["items"].empty());
}

TEST(ReviewHttp, ItemCarriesRotationSnapshot) {
  sq::ReviewStore store(benchmark(1), scenes(), options({}));
  LiveServer server(store);
  auto c = server.client();
  const auto item = get(c, "/api/item/g000");
  ASSERT_EQ(item["records"].size(), 4u);
  const auto& snap = item["snapshot"];
  ASSERT_EQ(snap["observer"]["arrows"].size(), 4u);
  // Seed faces the trash can at +x; a 90 degree turn faces the door at +y.
  EXPECT_NEAR(snap["observer"]["arrows"][0]["heading_rad"].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(snap["observer"]["arrows"][1]["heading_rad"].get<double>(), std::numbers::pi / 2, 1e-12);
  EXPECT_EQ(snap["quadrants"]["0"]["o2"], "right");
  EXPECT_EQ(snap["quadrants"]["90"]["o2"], "back");
  EXPECT_EQ(snap["quadrants"]["180"]["o2"], "left");
  EXPECT_EQ(snap["quadrants"]["270"]["o2"], "front");
  EXPECT_EQ(item["complete"], true);
  get(c, "/api/item/missing", 404);
}

TEST(ReviewHttp, TopdownAndQualification) {
  sq::ReviewStore store(benchmark(1), scenes(), options({}, 3));
  LiveServer server(store);
  auto c = server.client();
  const auto td = get(c, "/api/scene/classroom/topdown");
  ASSERT_EQ(td["objects"].size(), 4u);
  EXPECT_EQ(td["objects"][0]["id"], "o1");
  EXPECT_DOUBLE_EQ(td["objects"][0]["center"][0].get<double>(), 2.0);
  get(c, "/api/scene/unknown/topdown", 404);
  const auto qual = get(c, "/api/qualification");
  EXPECT_EQ(qual["reviews_required"], 3);
  EXPECT_EQ(qual["checklist"].size(), 2u);
  auto res = c.Options("/api/decision");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST(ReviewHttp, ExportKeepsCompleteApprovedGroupsWithCorrections) {
  sq::ReviewStore store(benchmark(3), scenes(), options({}));
  LiveServer server(store);
  auto c = server.client();
  int status = 0;
  post(c, {{"group_id", "g000"}, {"reviewer_id", "ana"}, {"status", "accepted"}}, status);
  post(c, {{"group_id", "g001"}, {"reviewer_id", "ana"}, {"status", "corrected"}, {"corrected_answer", "Door"},
           {"qid", "g001_r90"}},
       status);
  EXPECT_EQ(status, 200);
  post(c, {{"group_id", "g002"}, {"reviewer_id", "ana"}, {"status", "rejected"}}, status);
  post(c, {{"group_id", "lone"}, {"reviewer_id", "ana"}, {"status", "accepted"}}, status);
  auto res = c.Get("/api/export");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/x-ndjson");
  std::istringstream in(res->body);
  std::map<std::string, std::string> answers;
  for (std::string line; std::getline(in, line);) {
    const auto r = sq::qa_from_json(json::parse(line));
    answers[r.qid] = r.answer;
  }
  ASSERT_EQ(answers.size(), 8u);
  EXPECT_EQ(answers.count("g002"), 0u);
  EXPECT_EQ(answers.count("lone"), 0u);
  EXPECT_EQ(answers["g001_r90"], "door");
  EXPECT_EQ(answers["g000_r90"], "trash can");
}

TEST(ReviewStore, ReplayingTheLogRestoresState) {
  TempDir dir;
  const auto bench = benchmark(10);
  std::map<std::string, sq::ReviewStatus> before;
  {
    sq::ReviewStore store(bench, scenes(), options(dir / "log.jsonl", 2));
    const char* verdict[] = {"accepted", "rejected", "corrected"};
    for (int i = 0; i < 10; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "g%03d", i);
      for (int r = 0; r < (i % 2 ? 2 : 1); ++r) {
        json d = {{"group_id", id}, {"reviewer_id", r ? "ben" : "ana"}, {"status", verdict[(i + r) % 3]}};
        if (d["status"] == "corrected") d["corrected_answer"] = "table";
        ASSERT_EQ(store.submit(d).http_status, 200);
      }
    }
    before = store.statuses();
  }
  sq::ReviewStore again(bench, scenes(), options(dir / "log.jsonl", 2));
  EXPECT_EQ(again.statuses(), before);
  EXPECT_EQ(again.export_records().size(), sq::ReviewStore(bench, scenes(), options(dir / "log.jsonl", 2)).export_records().size());
  // Sequence numbers continue after the replayed ones.
  const auto out = again.submit({{"group_id", "g000"}, {"reviewer_id", "ben"}, {"status", "accepted"}});
  EXPECT_EQ(out.body["decision"]["seq"], 16);
}

TEST(ReviewStore, CorruptLogIsReported) {
  TempDir dir;
  std::ofstream(dir / "log.jsonl") << R"({"group_id": "zzz", "reviewer_id": "a", "status": "accepted"})" "\n";
  EXPECT_THROW(sq::ReviewStore(benchmark(1), scenes(), options(dir / "log.jsonl")), sq::Error);
}

TEST(ReviewStore, ConcurrentSubmissionsAreSerialized) {
  TempDir dir;
  sq::ReviewStore store(benchmark(40), scenes(), options(dir / "log.jsonl", 4));
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 40; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "g%03d", i);
        const json d = {{"group_id", id}, {"reviewer_id", "r" + std::to_string(t)}, {"status", "accepted"}};
        ok += store.submit(d).http_status == 200;
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok.load(), 160);
  EXPECT_EQ(line_count(dir / "log.jsonl"), 160u);
  sq::ReviewStore replayed(benchmark(40), scenes(), options(dir / "log.jsonl", 4));
  EXPECT_EQ(replayed.statuses(), store.statuses());
}
