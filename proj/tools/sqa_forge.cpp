// sqa-forge: command-line front end for benchmark construction, scoring,
// reweighting diagnostics and the review service.

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sqaforge/augment.hpp"
#include "sqaforge/config.hpp"
#include "sqaforge/filter.hpp"
#include "sqaforge/llm.hpp"
#include "sqaforge/metrics.hpp"
#include "sqaforge/pipeline.hpp"
#include "sqaforge/reports.hpp"
#include "sqaforge/review.hpp"
#include "sqaforge/reweight.hpp"
#include "sqaforge/toy_model.hpp"

namespace fs = std::filesystem;
using namespace sqaforge;

namespace {

void emit(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(path, j);
  }
}

std::map<std::string, Scene> load_scenes(const std::vector<std::string>& files) {
  std::map<std::string, Scene> scenes;
  for (const auto& f : files) {
    const auto j = read_json_file(f);
    auto add = [&](const json& s) {
      auto scene = scene_from_json(s);
      scenes.emplace(scene.scene_id, std::move(scene));
    };
    if (j.is_array()) {
      for (const auto& s : j) add(s);
    } else {
      add(j);
    }
  }
  return scenes;
}

PredictionSet load_set(const std::string& path) {
  const auto recs = read_predictions_jsonl(path);
  return PredictionSet::from_records(recs);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::optional<json> optional_json(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return read_json_file(path);
}

std::string fmt(double v, int prec = 1) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << v;
  return ss.str();
}

ReviewServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Situated 3D QA benchmark construction and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);

  Config cfg;
  auto matcher_of = [&](const std::string& s) { return s.empty() ? cfg.matcher : parse_match_policy(s); };

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate scenes and QA records");
  std::vector<std::string> scenes;
  std::string qa, out, report;
  ingest_cmd->add_option("--scenes", scenes, "Scene JSON files")->required();
  ingest_cmd->add_option("--qa", qa, "QA JSONL file")->required();
  ingest_cmd->add_option("--out", out, "Summary JSON (stdout if omitted)");

  // augment
  auto* augment_cmd = app.add_subcommand("augment", "Generate and validate rotated variants");
  bool use_llm = false;
  std::string lexicon_path;
  augment_cmd->add_option("--scenes", scenes)->required();
  augment_cmd->add_option("--qa", qa, "Seed QA JSONL")->required();
  augment_cmd->add_option("--out", out, "Variant JSONL (seeds included)")->required();
  augment_cmd->add_option("--report", report, "Verdict counts JSON");
  augment_cmd->add_option("--lexicon", lexicon_path, "Directional lexicon JSON");
  augment_cmd->add_flag("--llm", use_llm, "Propose situation rewrites through the configured LLM endpoint");

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Remove 3D-independent questions");
  std::vector<std::string> runs;
  std::string llm_preds, matcher_name;
  filter_cmd->add_option("--gold", qa, "Gold QA JSONL")->required();
  filter_cmd->add_option("--run", runs, "full.jsonl:blind.jsonl per model, in cascade order")->required();
  filter_cmd->add_option("--llm", llm_preds, "Text-only LLM predictions")->required();
  filter_cmd->add_option("--matcher", matcher_name, "em or em_r");
  filter_cmd->add_option("--out", out, "Kept QA JSONL")->required();
  filter_cmd->add_option("--report", report, "Filter report JSON");

  // score / vrs
  std::string preds;
  auto* score_cmd = app.add_subcommand("score", "Accuracy per category");
  score_cmd->add_option("--gold", qa)->required();
  score_cmd->add_option("--pred", preds)->required();
  score_cmd->add_option("--matcher", matcher_name);
  score_cmd->add_option("--report", report);
  auto* vrs_cmd = app.add_subcommand("vrs", "Viewpoint Rotation Score");
  vrs_cmd->add_option("--gold", qa)->required();
  vrs_cmd->add_option("--pred", preds)->required();
  vrs_cmd->add_option("--matcher", matcher_name);
  vrs_cmd->add_option("--report", report);

  // kappa
  auto* kappa_cmd = app.add_subcommand("kappa", "Cohen's kappa of two label files (one label per line)");
  std::string labels_a, labels_b;
  kappa_cmd->add_option("a", labels_a)->required();
  kappa_cmd->add_option("b", labels_b)->required();

  // reweight
  auto* reweight_cmd = app.add_subcommand("reweight", "3D-reweighted loss over precomputed log-probs");
  std::string logprobs;
  std::optional<double> eps, w_min, w_max;
  reweight_cmd->add_option("--logprobs", logprobs, "TokenLogProbs JSONL")->required();
  reweight_cmd->add_option("--eps", eps, "Probability clamp");
  reweight_cmd->add_option("--w-min", w_min);
  reweight_cmd->add_option("--w-max", w_max);
  reweight_cmd->add_option("--report", report);

  // rft-demo
  auto* demo_cmd = app.add_subcommand("rft-demo", "Toy comparison of SFT, blind and 3DR-FT training");
  double guessable = 0.3;
  std::size_t seeds = 5, steps = 1500;
  bool attached = false;
  demo_cmd->add_option("--guessable-frac", guessable)->check(CLI::Range(0.0, 1.0));
  demo_cmd->add_option("--seeds", seeds)->check(CLI::PositiveNumber);
  demo_cmd->add_option("--steps", steps);
  demo_cmd->add_flag("--attached-weights", attached, "Differentiate through the weights");
  demo_cmd->add_option("--report", report);

  // mock-run
  auto* mock_cmd = app.add_subcommand("mock-run", "Predictions from a geometric oracle or a blind prior");
  std::string answerer = "oracle", mode = "sample", train_qa, model_id, variant = "full";
  mock_cmd->add_option("--scenes", scenes);
  mock_cmd->add_option("--qa", qa)->required();
  mock_cmd->add_option("--answerer", answerer)->check(CLI::IsMember({"oracle", "blind"}));
  mock_cmd->add_option("--mode", mode, "Blind prior mode")->check(CLI::IsMember({"sample", "majority"}));
  mock_cmd->add_option("--train", train_qa, "Training split for the blind prior (defaults to --qa)");
  mock_cmd->add_option("--model-id", model_id);
  mock_cmd->add_option("--variant", variant)->check(CLI::IsMember({"full", "blind", "llm"}));
  mock_cmd->add_option("--out", out)->required();

  // review-serve / export
  std::string benchmark, log_path;
  std::optional<int> port, reviews_required;
  auto* serve_cmd = app.add_subcommand("review-serve", "Serve the review queue over HTTP");
  serve_cmd->add_option("--scenes", scenes)->required();
  serve_cmd->add_option("--benchmark", benchmark, "Variant JSONL from augment")->required();
  serve_cmd->add_option("--log", log_path, "Decision log JSONL");
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--reviews-required", reviews_required);
  auto* export_cmd = app.add_subcommand("export", "Replay a decision log and write the reviewed benchmark");
  export_cmd->add_option("--scenes", scenes)->required();
  export_cmd->add_option("--benchmark", benchmark)->required();
  export_cmd->add_option("--log", log_path)->required();
  export_cmd->add_option("--reviews-required", reviews_required);
  export_cmd->add_option("--out", out)->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Merge component reports and re-check their totals");
  std::string s_filter, s_score, s_vrs, s_augment, s_reweight, csv;
  stats_cmd->add_option("--filter", s_filter);
  stats_cmd->add_option("--score", s_score);
  stats_cmd->add_option("--vrs", s_vrs);
  stats_cmd->add_option("--augment", s_augment);
  stats_cmd->add_option("--reweight", s_reweight);
  stats_cmd->add_option("--out", out, "Merged JSON");
  stats_cmd->add_option("--csv", csv, "Stage table CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) cfg = Config::load(config_path);
    if (!lexicon_path.empty()) cfg.lexicon_path = lexicon_path;

    if (ingest_cmd->parsed()) {
      std::vector<fs::path> files(scenes.begin(), scenes.end());
      const auto data = ingest(files, qa);
      emit(data.summary(), out);
    } else if (augment_cmd->parsed()) {
      std::vector<fs::path> files(scenes.begin(), scenes.end());
      const auto data = ingest(files, qa);
      const auto lexicon = cfg.lexicon();
      std::vector<const QARecord*> seeds_in;
      for (const auto& r : data.records)
        if (r.is_seed()) seeds_in.push_back(&r);
      std::unique_ptr<ChatClient> client;
      if (use_llm || cfg.llm.enabled) {
        if (cfg.llm.endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "llm endpoint is not configured");
        client = std::make_unique<HttpChatClient>(cfg.llm);
      }
      const auto tmpl = PromptTemplate::standard();
      std::mutex client_mu;
      auto per_seed = run_bounded<std::vector<RotatedVariant>>(
          seeds_in.size(), client ? cfg.llm.max_concurrency : static_cast<int>(std::thread::hardware_concurrency()),
          [&](std::size_t i) {
            const auto& seed = *seeds_in[i];
            const auto& scene = data.scene_for(seed);
            std::vector<RotatedVariant> group{validate_seed(seed, scene, lexicon)};
            for (int deg : kRotations)
              group.push_back(client ? augment_with_llm(seed, deg, scene, lexicon, tmpl, client.get())
                                     : rotate_record(seed, deg, scene, lexicon));
            return group;
          });
      std::vector<RotatedVariant> all;
      VariantCounts counts;
      for (const auto& g : per_seed)
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (k > 0) counts.add(g[k]);
          all.push_back(g[k]);
        }
      write_jsonl(out, all);
      const auto rep = to_json(counts, seeds_in.size());
      if (!report.empty()) write_json(report, rep);
      std::cout << rep.dump(2) << '\n';
    } else if (filter_cmd->parsed()) {
      const auto gold = read_qa_jsonl(qa);
      std::vector<ModelRun> model_runs;
      for (const auto& r : runs) {
        const auto colon = r.find(':');
        if (colon == std::string::npos)
          throw Error(ErrorCode::InvalidArgument, "--run expects full.jsonl:blind.jsonl, got '" + r + "'");
        model_runs.push_back({load_set(r.substr(0, colon)), load_set(r.substr(colon + 1))});
      }
      const auto result = build_benchmark(gold, model_runs, load_set(llm_preds), matcher_of(matcher_name));
      write_jsonl(out, result.kept);
      const auto rep = to_json(result.report);
      if (!report.empty()) write_json(report, rep);
      std::cerr << "kept " << result.report.final_count << " of " << result.report.original_count << '\n';
      if (result.report.empty_benchmark) std::cerr << "warning: every question was filtered out\n";
    } else if (score_cmd->parsed()) {
      const auto policy = matcher_of(matcher_name);
      emit(to_json(score_accuracy(read_predictions_jsonl(preds), read_qa_jsonl(qa), policy), policy), report);
    } else if (vrs_cmd->parsed()) {
      const auto policy = matcher_of(matcher_name);
      emit(to_json(vrs(read_predictions_jsonl(preds), read_qa_jsonl(qa), policy), policy), report);
    } else if (kappa_cmd->parsed()) {
      const auto a = read_lines(labels_a), b = read_lines(labels_b);
      const auto r = cohens_kappa(a, b);
      emit({{"n", r.n},
            {"kappa", r.kappa},
            {"observed_agreement", r.observed_agreement},
            {"expected_agreement", r.expected_agreement},
            {"degenerate", r.degenerate}},
           "");
    } else if (reweight_cmd->parsed()) {
      auto rc = cfg.reweight;
      if (eps) rc.prob_clamp_eps = *eps;
      if (w_min) rc.w_min = *w_min;
      if (w_max) rc.w_max = *w_max;
      const auto batch = read_jsonl<TokenLogProbs>(logprobs, logprobs_from_json);
      const auto loss = rft_loss(batch, rc);
      json rep = {{"sequences", batch.size()},
                  {"loss", loss.loss},
                  {"cross_entropy", cross_entropy(batch)},
                  {"clamped_entries", loss.clamped_entries},
                  {"capped_weights", loss.capped_weights},
                  {"config", {{"prob_clamp_eps", rc.prob_clamp_eps}, {"w_min", rc.w_min}, {"w_max", rc.w_max}}}};
      try {
        const auto d = decomposition_check(batch, rc);
        rep["decomposition"] = {{"term_blind", d.term_blind}, {"term_gap", d.term_gap}, {"residual", d.residual}};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::CapFired) throw;
        rep["decomposition"] = {{"skipped", std::string(e.what())}};
      }
      emit(rep, report);
    } else if (demo_cmd->parsed()) {
      toy::SyntheticSetup setup;
      setup.guessable_frac = guessable;
      auto rc = cfg.reweight;
      rc.detach_weights = !attached;
      const auto results = toy::rft_demo(setup, seeds, steps, rc, cfg.seed);
      json rows = json::array();
      std::printf("%-5s %-22s %-22s %-22s %s\n", "seed", "blind acc g/d", "sft acc d, delta d", "3dr-ft acc d, delta d",
                  "3dr-ft > sft");
      bool all_better = true;
      for (const auto& r : results) {
        const bool better = r.rft.mean_delta_dependent > r.sft.mean_delta_dependent;
        all_better &= better;
        std::printf("%-5llu %-22s %-22s %-22s %s\n", static_cast<unsigned long long>(r.seed),
                    (fmt(100 * r.blind.acc_guessable) + " / " + fmt(100 * r.blind.acc_dependent)).c_str(),
                    (fmt(100 * r.sft.acc_dependent) + ", " + fmt(r.sft.mean_delta_dependent, 3)).c_str(),
                    (fmt(100 * r.rft.acc_dependent) + ", " + fmt(r.rft.mean_delta_dependent, 3)).c_str(),
                    better ? "yes" : "no");
        auto m = [](const toy::EvalMetrics& e) {
          return json{{"acc_guessable", e.acc_guessable},
                      {"acc_dependent", e.acc_dependent},
                      {"mean_delta_guessable", e.mean_delta_guessable},
                      {"mean_delta_dependent", e.mean_delta_dependent}};
        };
        rows.push_back({{"seed", r.seed}, {"blind", m(r.blind)}, {"sft", m(r.sft)}, {"rft", m(r.rft)}});
      }
      if (!report.empty())
        write_json(report, {{"guessable_frac", guessable}, {"steps", steps}, {"detach_weights", rc.detach_weights},
                            {"seeds", rows}, {"rft_beats_sft_every_seed", all_better}});
    } else if (mock_cmd->parsed()) {
      const auto records = read_qa_jsonl(qa);
      std::vector<PredictionRecord> out_preds;
      const auto pv = parse_prediction_variant(variant);
      if (answerer == "oracle") {
        if (scenes.empty()) throw Error(ErrorCode::InvalidArgument, "the oracle answerer needs --scenes");
        const auto scene_map = load_scenes(scenes);
        GeometricOracle oracle(scene_map, cfg.lexicon());
        out_preds = run_mock(oracle, records, model_id.empty() ? "geometric-oracle" : model_id, pv);
      } else {
        const auto train = train_qa.empty() ? records : read_qa_jsonl(train_qa);
        const auto prior = BlindPrior::fit(train, parse_blind_mode(mode), cfg.seed);
        out_preds = run_mock(prior, records, model_id.empty() ? "blind-prior" : model_id, pv);
      }
      write_jsonl(out, out_preds);
    } else if (serve_cmd->parsed() || export_cmd->parsed()) {
      ReviewOptions opt;
      opt.reviews_required = reviews_required.value_or(cfg.review.reviews_required);
      opt.log_path = log_path.empty() ? cfg.review.log : fs::path(log_path);
      opt.qualification = cfg.review.qualification;
      const auto variants = read_variants_jsonl(benchmark);
      if (export_cmd->parsed() && !fs::exists(opt.log_path))
        throw Error(ErrorCode::InvalidArgument, "decision log " + opt.log_path.string() + " does not exist");
      ReviewStore store(variants, load_scenes(scenes), opt);
      if (export_cmd->parsed()) {
        const auto recs = store.export_records();
        write_jsonl(out, recs);
        std::cerr << "exported " << recs.size() << " records\n";
      } else {
        ReviewServer server(store);
        const int bound = server.bind(cfg.review.host, port.value_or(cfg.review.port));
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "review service on http://" << cfg.review.host << ':' << bound << " (" << store.size()
                  << " groups, log " << opt.log_path.string() << ")\n";
        server.serve();
        g_server = nullptr;
      }
    } else if (stats_cmd->parsed()) {
      const auto st = build_stats(optional_json(s_filter), optional_json(s_score), optional_json(s_vrs),
                                  optional_json(s_augment), optional_json(s_reweight));
      if (!out.empty()) write_json(out, st.merged);
      const auto& m = st.merged;
      if (!m["filter"].is_null()) {
        std::printf("%-28s %10s %10s\n", "stage", "filtered", "remaining");
        for (const auto& s : m["filter"]["stages"])
          std::printf("%-28s %10lld %10lld\n", s["stage"].get<std::string>().c_str(), s["filtered"].get<long long>(),
                      s["remaining"].get<long long>());
      }
      if (!m["score"].is_null()) {
        std::printf("\n%-28s %10s %10s\n", "category", "correct", "accuracy");
        for (const auto& [cat, t] : m["score"]["per_category"].items())
          std::printf("%-28s %10lld %10s\n", cat.c_str(), t["correct"].get<long long>(),
                      fmt(t["percent"].get<double>()).c_str());
        std::printf("%-28s %10lld %10s\n", "overall", m["score"]["overall"]["correct"].get<long long>(),
                    fmt(m["score"]["overall"]["percent"].get<double>()).c_str());
      }
      if (!m["vrs"].is_null()) {
        const auto& v = m["vrs"];
        std::printf("\n%8s %8s %8s %8s %8s\n", "1", "2", "3", "4", "VRS");
        std::printf("%8s %8s %8s %8s %8s\n", fmt(v["p_k"][0].get<double>()).c_str(),
                    fmt(v["p_k"][1].get<double>()).c_str(), fmt(v["p_k"][2].get<double>()).c_str(),
                    fmt(v["p_k"][3].get<double>()).c_str(), fmt(v["vrs"].get<double>()).c_str());
      }
      std::printf("\n");
      for (const auto& c : st.checks)
        std::printf("%-5s %-24s %s\n", c.ok ? "ok" : "FAIL", c.name.c_str(), c.detail.c_str());
      if (!csv.empty()) {
        std::ofstream f(csv);
        f << "stage,filtered,remaining\n";
        if (!m["filter"].is_null())
          for (const auto& s : m["filter"]["stages"])
            f << s["stage"].get<std::string>() << ',' << s["filtered"] << ',' << s["remaining"] << '\n';
      }
      if (!st.all_ok()) return 2;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const auto& d = e.details();
    for (std::size_t i = 0; i < d.size() && i < 20; ++i) std::cerr << "  " << d[i] << '\n';
    if (d.size() > 20) std::cerr << "  ... " << d.size() - 20 << " more\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
