#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "sqaforge/llm.hpp"
#include "support.hpp"

namespace sq = sqaforge;

namespace {

class ScriptedClient : public sq::ChatClient {
 public:
  explicit ScriptedClient(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const std::vector<sq::ChatMessage>& messages) override {
    last_ = messages;
    if (reply_ == "!unavailable") throw sq::Error(sq::ErrorCode::EndpointUnavailable, "down");
    return reply_;
  }
  std::vector<sq::ChatMessage> last_;

 private:
  std::string reply_;
};

std::string completion(const std::string& content) {
  return sq::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

sq::QARecord classroom_seed() {
  return sq::testing::seed_record("cls", sq::testing::classroom(), sq::ObserverPose({0, 0, 0}, 0.0),
                                  "I am facing a trash can and the whiteboard is on my right.", "What is on my right?",
                                  "whiteboard", sq::Category::Object, sq::VrsType::Direction);
}

// Chat endpoint on a free local port that fails `failures` times with 503
// before answering.
class MockEndpoint {
 public:
  MockEndpoint(int failures, std::string body) : failures_(failures), body_(std::move(body)) {
    svr_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      auth_ = req.get_header_value("Authorization");
      request_ = req.body;
      if (failures_-- > 0) {
        res.status = 503;
        return;
      }
      res.set_content(body_, "application/json");
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~MockEndpoint() {
    svr_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int calls() const { return calls_; }
  std::string auth_, request_;

 private:
  httplib::Server svr_;
  std::atomic<int> failures_;
  std::string body_;
  std::atomic<int> calls_{0};
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Llm, ParsesCompletionBody) {
  EXPECT_EQ(sq::parse_chat_completion(completion("hello")), "hello");
  EXPECT_THROW(sq::parse_chat_completion("{}"), sq::Error);
  EXPECT_THROW(sq::parse_chat_completion("not json"), sq::Error);
}

TEST(Llm, PromptCarriesExamplesAndScene) {
  const auto scene = sq::testing::classroom();
  const auto msgs = sq::build_rotation_prompt(classroom_seed(), 90, scene, sq::PromptTemplate::standard());
  ASSERT_EQ(msgs.size(), 1u + 2 * 2 + 1);
  EXPECT_EQ(msgs.front().role, "system");
  EXPECT_NE(msgs.back().content.find("whiteboard (right)"), std::string::npos);
  EXPECT_NE(msgs.back().content.find("Rotate: 90 degrees"), std::string::npos);
  EXPECT_EQ(sq::fill_placeholders("{{a}}-{{a}}", {{"a", "{{a}}x"}}), "{{a}}x-{{a}}x");
}

TEST(Llm, AcceptsAGeometricallyConsistentRewrite) {
  const auto scene = sq::testing::classroom();
  ScriptedClient client("\"After turning, I am facing a door and the whiteboard is behind me.\"");
  const auto v = sq::augment_with_llm(classroom_seed(), 90, scene, sq::DirectionalLexicon::standard(),
                                      sq::PromptTemplate::standard(), &client);
  EXPECT_EQ(v.record.situation, "After turning, I am facing a door and the whiteboard is behind me.");
  EXPECT_NE(v.validation_note.find("llm situation accepted"), std::string::npos);
  EXPECT_EQ(v.record.answer, "trash can");
}

TEST(Llm, ContradictingRewriteFallsBackToDeterministicText) {
  const auto scene = sq::testing::classroom();
  ScriptedClient client("I am facing a door and the whiteboard is on my right.");
  const auto v = sq::augment_with_llm(classroom_seed(), 90, scene, sq::DirectionalLexicon::standard(),
                                      sq::PromptTemplate::standard(), &client);
  EXPECT_EQ(v.validity, sq::Validity::AnswerCorrected);
  EXPECT_EQ(v.record.situation, "I am facing a door and the whiteboard is behind me.");
  EXPECT_NE(v.validation_note.find("contradicts"), std::string::npos);
}

TEST(Llm, UnavailableClientFallsBack) {
  const auto scene = sq::testing::classroom();
  ScriptedClient client("!unavailable");
  const auto r = sq::llm_rewrite(classroom_seed(), 180, scene, sq::DirectionalLexicon::standard(),
                                 sq::PromptTemplate::standard(), &client);
  EXPECT_FALSE(r.from_llm);
  EXPECT_EQ(r.situation, "I am facing a table and the whiteboard is on my left.");
}

TEST(Llm, HttpClientRetriesServerErrors) {
  MockEndpoint endpoint(2, completion("ok"));
  sq::LlmConfig cfg;
  cfg.endpoint = endpoint.url();
  cfg.api_key_env = "SQAFORGE_TEST_KEY";
  cfg.max_retries = 2;
  cfg.timeout_s = 5;
  ::setenv("SQAFORGE_TEST_KEY", "secret", 1);
  sq::HttpChatClient client(cfg);
  EXPECT_EQ(client.complete({{"user", "hi"}}), "ok");
  EXPECT_EQ(endpoint.calls(), 3);
  EXPECT_EQ(endpoint.auth_, "Bearer secret");
  const auto body = sq::json::parse(endpoint.request_);
  EXPECT_EQ(body["model"], cfg.model);
  EXPECT_EQ(body["messages"][0]["content"], "hi");
}

TEST(Llm, HttpClientGivesUp) {
  MockEndpoint endpoint(10, completion("never"));
  sq::LlmConfig cfg;
  cfg.endpoint = endpoint.url();
  cfg.max_retries = 1;
  cfg.timeout_s = 5;
  sq::HttpChatClient client(cfg);
  try {
    client.complete({{"user", "hi"}});
    FAIL();
  } catch (const sq::Error& e) {
    EXPECT_EQ(e.code(), sq::ErrorCode::EndpointUnavailable);
  }
  EXPECT_EQ(endpoint.calls(), 2);
}

TEST(Llm, HttpClientReportsMalformedBody) {
  MockEndpoint endpoint(0, "{\"choices\": []}");
  sq::LlmConfig cfg;
  cfg.endpoint = endpoint.url();
  sq::HttpChatClient client(cfg);
  try {
    client.complete({{"user", "hi"}});
    FAIL();
  } catch (const sq::Error& e) {
    EXPECT_EQ(e.code(), sq::ErrorCode::MalformedResponse);
  }
}

TEST(Llm, BoundedRunnerKeepsOrderAndLimit) {
  std::atomic<int> active{0}, peak{0};
  const auto out = sq::run_bounded<int>(64, 3, [&](std::size_t i) {
    const int now = ++active;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    --active;
    return static_cast<int>(i * i);
  });
  ASSERT_EQ(out.size(), 64u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  EXPECT_LE(peak.load(), 3);
  EXPECT_THROW(sq::run_bounded<int>(4, 2, [](std::size_t i) -> int {
                 if (i == 2) throw sq::Error(sq::ErrorCode::InvalidArgument, "boom");
                 return 0;
               }),
               sq::Error);
}
