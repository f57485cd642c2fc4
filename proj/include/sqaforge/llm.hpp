#pragma once

// Optional chat-completion client for LLM-assisted rotation rewrites. Its
// output is never trusted: every candidate goes through the same geometric
// validation as the deterministic rewriter, which is also the fallback.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sqaforge/augment.hpp"
#include "sqaforge/error.hpp"
#include "sqaforge/io.hpp"

namespace sqaforge {

struct ChatMessage {
  std::string role;
  std::string content;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the assistant reply. Throws EndpointUnavailable or
  /// MalformedResponse.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

struct LlmConfig {
  bool enabled = false;
  std::string endpoint;  // e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 30.0;
  int max_concurrency = 4;
  int max_retries = 2;

  static LlmConfig from_json(const json& j) {
    LlmConfig c;
    c.enabled = j.value("enabled", c.enabled);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.path = j.value("path", c.path);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_concurrency = std::max(1, j.value("max_concurrency", c.max_concurrency));
    c.max_retries = std::max(0, j.value("max_retries", c.max_retries));
    return c;
  }
};

/// Pulls the reply text out of an OpenAI-style chat completion body.
inline std::string parse_chat_completion(const std::string& body) {
  try {
    const auto j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error(ErrorCode::MalformedResponse, "content is not a string");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(LlmConfig cfg) : cfg_(std::move(cfg)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    const json body = {{"model", cfg_.model}, {"messages", msgs}, {"temperature", 0}};

    httplib::Client client(cfg_.endpoint);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
      auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw Error(ErrorCode::EndpointUnavailable, "HTTP " + std::to_string(res->status));
      return parse_chat_completion(res->body);
    }
    throw Error(ErrorCode::EndpointUnavailable, cfg_.endpoint + ": " + last_error);
  }

 private:
  LlmConfig cfg_;
};

struct PromptExample {
  std::string user;
  std::string assistant;
};

/// System instruction, in-context examples and a user turn. The user turn
/// may use {{scene_summary}}, {{situation}}, {{question}}, {{answer}} and
/// {{degrees}}.
struct PromptTemplate {
  std::string system;
  std::vector<PromptExample> examples;
  std::string user;

  static PromptTemplate standard() {
    PromptTemplate t;
    t.system =
        "You rewrite situation descriptions for a 3D question answering benchmark. The agent "
        "stays at the same position and turns counterclockwise (to its left) by the given angle. "
        "Keep the question's intent, describe what the agent now faces, and update every "
        "directional phrase so that it is true from the new viewpoint. Reply with the rewritten "
        "situation only.";
    t.examples.push_back(
        {"Objects: trash can (front), whiteboard (right), table (back), door (left)\n"
         "Situation: I am facing a trash can and the whiteboard is on my right.\n"
         "Rotate: 90 degrees",
         "I am facing a door and the whiteboard is behind me."});
    t.examples.push_back(
        {"Objects: sofa (front), lamp (right), tv (back), shelf (left)\n"
         "Situation: I am facing a sofa with a lamp on my right.\n"
         "Rotate: 180 degrees",
         "I am facing a tv with a lamp on my left."});
    t.user =
        "Objects: {{scene_summary}}\nSituation: {{situation}}\nQuestion: {{question}}\n"
        "Rotate: {{degrees}} degrees";
    return t;
  }

  static PromptTemplate from_json(const json& j) {
    PromptTemplate t;
    t.system = j.value("system", std::string());
    t.user = j.value("user", std::string());
    if (j.contains("examples"))
      for (const auto& e : j.at("examples"))
        t.examples.push_back({e.at("user").get<std::string>(), e.at("assistant").get<std::string>()});
    if (t.user.empty()) throw Error(ErrorCode::ParseError, "prompt template needs a 'user' turn");
    return t;
  }
};

inline std::string fill_placeholders(std::string text, const std::vector<std::pair<std::string, std::string>>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{{" + key + "}}";
    for (std::size_t pos = text.find(token); pos != std::string::npos;
         pos = text.find(token, pos + value.size()))
      text.replace(pos, token.size(), value);
  }
  return text;
}

/// Object labels with their quadrant from the seed viewpoint.
inline std::string scene_summary(const Scene& scene, const ObserverPose& pose) {
  std::string out;
  for (const auto& o : scene.objects) {
    if (ground_distance(o.center, pose.position()) < kDegenerateDistance) continue;
    if (!out.empty()) out += ", ";
    out += o.label + " (" + std::string(to_string(classify_quadrant(o, pose))) + ")";
  }
  return out;
}

inline std::vector<ChatMessage> build_rotation_prompt(const QARecord& seed, int deg, const Scene& scene,
                                                      const PromptTemplate& tmpl) {
  std::vector<ChatMessage> msgs;
  if (!tmpl.system.empty()) msgs.push_back({"system", tmpl.system});
  for (const auto& e : tmpl.examples) {
    msgs.push_back({"user", e.user});
    msgs.push_back({"assistant", e.assistant});
  }
  msgs.push_back({"user", fill_placeholders(tmpl.user, {{"scene_summary", scene_summary(scene, seed.pose)},
                                                         {"situation", seed.situation},
                                                         {"question", seed.question},
                                                         {"answer", seed.answer},
                                                         {"degrees", std::to_string(deg)}})});
  return msgs;
}

namespace detail {
inline std::string clean_reply(std::string s) {
  auto trim = [](std::string& t) {
    const auto b = t.find_first_not_of(" \t\r\n\"");
    const auto e = t.find_last_not_of(" \t\r\n\"");
    t = b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
  };
  trim(s);
  if (text::iequals_at(s, 0, "situation:")) s.erase(0, 10);
  trim(s);
  return s;
}
}  // namespace detail

struct RewriteResult {
  std::string situation;
  bool from_llm = false;
  std::string note;
};

/// Candidate situation text for a rotation. Any client failure falls back
/// to the deterministic rewrite; the note records why.
inline RewriteResult llm_rewrite(const QARecord& seed, int deg, const Scene& scene,
                                 const DirectionalLexicon& lexicon, const PromptTemplate& tmpl,
                                 ChatClient* client) {
  auto fallback = [&](std::string note) {
    RewriteResult r;
    r.situation = remap_directional_terms(seed.situation, deg, lexicon,
                                          Grounding{&scene, detail::turn(seed.pose, deg)});
    r.note = std::move(note);
    return r;
  };
  if (!client) return fallback("llm disabled; deterministic rewrite");
  try {
    auto reply = detail::clean_reply(client->complete(build_rotation_prompt(seed, deg, scene, tmpl)));
    if (reply.empty()) throw Error(ErrorCode::MalformedResponse, "empty reply");
    return {std::move(reply), true, "llm rewrite"};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EndpointUnavailable && e.code() != ErrorCode::MalformedResponse) throw;
    return fallback(std::string("llm failed (") + e.what() + "); deterministic rewrite");
  }
}

/// One rotated variant using the LLM rewrite when it survives validation.
/// A candidate that contradicts the scene is replaced by the deterministic
/// rewrite and the variant is marked AnswerCorrected.
inline RotatedVariant augment_with_llm(const QARecord& seed, int deg, const Scene& scene,
                                       const DirectionalLexicon& lexicon, const PromptTemplate& tmpl,
                                       ChatClient* client) {
  RotatedVariant v = rotate_record(seed, deg, scene, lexicon);
  if (!client) return v;
  RewriteResult cand;
  try {
    cand = llm_rewrite(seed, deg, scene, lexicon, tmpl, client);
  } catch (const Error& e) {
    v.validation_note += (v.validation_note.empty() ? "" : "; ") + std::string(e.what());
    return v;
  }
  if (!cand.from_llm) {
    v.validation_note += (v.validation_note.empty() ? "" : "; ") + cand.note;
    return v;
  }
  std::vector<std::string> problems = lexicon.uncovered_phrases(cand.situation);
  for (const auto& c : situation_claims(cand.situation, scene, v.record.pose, lexicon))
    if (!c.holds)
      problems.push_back("'" + c.label + "' is not " + lexicon.inverse(c.quadrant));
  if (problems.empty()) {
    if (v.validity != Validity::Invalid) v.record.situation = cand.situation;
    v.validation_note += (v.validation_note.empty() ? "" : "; ") + std::string("llm situation accepted");
    return v;
  }
  std::string why = "llm situation contradicts geometry:";
  for (const auto& p : problems) why += " " + p + ";";
  if (v.validity == Validity::Invalid) {
    v.validation_note += "; " + why;
    return v;
  }
  v.validity = Validity::AnswerCorrected;
  v.validation_note = why + " replaced by deterministic rewrite" +
                      (v.validation_note.empty() ? "" : "; " + v.validation_note);
  return v;
}

/// Runs `jobs` on at most `max_concurrency` threads; results keep job order.
template <typename Result>
std::vector<Result> run_bounded(std::size_t jobs, int max_concurrency,
                                const std::function<Result(std::size_t)>& job) {
  std::vector<Result> results(jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto workers = std::min<std::size_t>(jobs, static_cast<std::size_t>(std::max(1, max_concurrency)));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          results[i] = job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace sqaforge
