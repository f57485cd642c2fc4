#pragma once

// Run configuration read from a JSON file. Relative paths resolve against
// the file's directory. Every key is optional.
//
// {
//   "seed": 0,
//   "matcher": "em_r",
//   "lexicon": "lexicon.json",
//   "llm": { "enabled": false, "endpoint": "http://localhost:8000", ... },
//   "reweight": { "prob_clamp_eps": 1e-6, "w_min": 0.1, "w_max": 10, "detach_weights": true },
//   "review": { "host": "127.0.0.1", "port": 8080, "log": "decisions.jsonl",
//               "reviews_required": 1, "qualification": [] },
//   "paths": { "scenes": [...], "qa": "...", "out_dir": "..." }
// }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sqaforge/io.hpp"
#include "sqaforge/lexicon.hpp"
#include "sqaforge/llm.hpp"
#include "sqaforge/metrics.hpp"
#include "sqaforge/reweight.hpp"

namespace sqaforge {

struct ReviewConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path log = "decisions.jsonl";
  int reviews_required = 1;
  json qualification = json::array();
};

struct Config {
  std::uint64_t seed = 0;
  MatchPolicy matcher = MatchPolicy::EM_R;
  std::optional<std::filesystem::path> lexicon_path;
  LlmConfig llm;
  ReweightConfig reweight;
  ReviewConfig review;
  std::vector<std::filesystem::path> scene_files;
  std::optional<std::filesystem::path> qa_file;
  std::filesystem::path out_dir = ".";

  DirectionalLexicon lexicon() const {
    return lexicon_path ? DirectionalLexicon::from_json(read_json_file(*lexicon_path)) : DirectionalLexicon::standard();
  }

  static Config from_json(const json& j, const std::filesystem::path& base = {}) {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base.empty() ? base / path : path;
    };
    Config c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("matcher")) c.matcher = parse_match_policy(j.at("matcher").get<std::string>());
    if (j.contains("lexicon")) c.lexicon_path = resolve(j.at("lexicon").get<std::string>());
    if (j.contains("llm")) c.llm = LlmConfig::from_json(j.at("llm"));
    if (j.contains("reweight")) {
      const auto& r = j.at("reweight");
      c.reweight.prob_clamp_eps = r.value("prob_clamp_eps", c.reweight.prob_clamp_eps);
      c.reweight.w_min = r.value("w_min", c.reweight.w_min);
      c.reweight.w_max = r.value("w_max", c.reweight.w_max);
      c.reweight.detach_weights = r.value("detach_weights", c.reweight.detach_weights);
      c.reweight.validate();
    }
    if (j.contains("review")) {
      const auto& r = j.at("review");
      c.review.host = r.value("host", c.review.host);
      c.review.port = r.value("port", c.review.port);
      if (r.contains("log")) c.review.log = resolve(r.at("log").get<std::string>());
      c.review.reviews_required = r.value("reviews_required", c.review.reviews_required);
      if (r.contains("qualification")) c.review.qualification = r.at("qualification");
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      if (p.contains("scenes"))
        for (const auto& s : p.at("scenes")) c.scene_files.push_back(resolve(s.get<std::string>()));
      if (p.contains("qa")) c.qa_file = resolve(p.at("qa").get<std::string>());
      if (p.contains("out_dir")) c.out_dir = resolve(p.at("out_dir").get<std::string>());
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    try {
      return from_json(read_json_file(path), path.parent_path());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
  }
};

}  // namespace sqaforge
