// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0
//
// stepwise: process-supervision toolkit for step-by-step math solutions.
// Subcommands cover the full flow: gen-synth -> sample -> annotate ->
// train-rm -> verify -> rl-demo, plus `run` for the whole pipeline.

#include <iostream>

#include "CLI11.hpp"
#include "stepwise/http_completer.hpp"
#include "stepwise/pipeline.hpp"
#include "stepwise/rl.hpp"
#include "stepwise/verifier.hpp"

namespace sw = stepwise;
using nlohmann::json;

namespace {

std::uint64_t args_hash(const json& args) { return sw::config_hash(args); }

int cmd_gen_synth(const std::string& out, const std::string& gold, int depth,
                  std::vector<std::int64_t> range, const std::string& ops,
                  int count, std::uint64_t seed) {
  sw::ChainSpec spec;
  spec.depth = depth;
  spec.value_lo = range.at(0);
  spec.value_hi = range.at(1);
  spec.ops = ops;
  spec.seed = seed;
  spec.validate();

  std::vector<sw::Problem> problems;
  std::vector<sw::Solution> solutions;
  for (auto& [problem, solution] : sw::generate_dataset(spec, count)) {
    problems.push_back(std::move(problem));
    solutions.push_back(std::move(solution));
  }
  std::uint64_t hash = args_hash(json{{"cmd", "gen-synth"},
                                      {"depth", depth},
                                      {"range", range},
                                      {"ops", ops},
                                      {"count", count},
                                      {"seed", seed}});
  sw::write_problems(out, problems, sw::make_header("gen-synth", hash));
  if (!gold.empty())
    sw::write_solutions(gold, solutions, sw::make_header("gen-synth", hash));
  std::cout << "wrote " << problems.size() << " problems to " << out << "\n";
  return 0;
}

int cmd_sample(const std::string& problems_path, const std::string& out,
               const std::string& reference_out, double error_rate,
               double completer_error_rate, int samples, std::uint64_t seed) {
  std::vector<sw::Problem> problems = sw::read_problems(problems_path);
  std::vector<sw::Solution> solutions;
  std::vector<sw::ReferenceRecord> references;
  sw::NoisyPolicy completer_policy{completer_error_rate, 0};
  for (const sw::Problem& problem : problems) {
    for (int k = 0; k < samples; ++k) {
      sw::NoisyPolicy policy{error_rate,
                             sw::derive_seed(seed, problem.id + "#sample",
                                             static_cast<std::uint64_t>(k))};
      sw::Solution s = sw::sample_noisy_solution(
          problem, policy, problem.id + "-s" + std::to_string(k));
      if (!reference_out.empty()) {
        sw::ReferenceRecord ref;
        ref.problem_id = problem.id;
        ref.solution_id = s.solution_id;
        auto oracle = sw::oracle_references(problem, s, completer_policy);
        for (std::size_t i = 0; i < oracle.size(); ++i)
          ref.steps.emplace_back(static_cast<int>(i) + 1, oracle[i]);
        references.push_back(std::move(ref));
      }
      solutions.push_back(std::move(s));
    }
  }
  std::uint64_t hash = args_hash(json{{"cmd", "sample"},
                                      {"error_rate", error_rate},
                                      {"samples", samples},
                                      {"seed", seed}});
  sw::write_solutions(out, solutions, sw::make_header("sample", hash));
  if (!reference_out.empty())
    sw::write_references(reference_out, references,
                         sw::make_header("sample", hash));
  std::cout << "wrote " << solutions.size() << " solutions to " << out
            << "\n";
  return 0;
}

int cmd_annotate(const std::string& problems_path, const std::string& in,
                 const std::string& out, const std::string& quarantine,
                 int n_rollouts, const std::string& estimator,
                 const std::string& backend, double error_rate,
                 const sw::HttpCompleterConfig& http, int workers,
                 std::uint64_t seed) {
  std::vector<sw::Problem> problems = sw::read_problems(problems_path);
  std::vector<sw::Solution> solutions = sw::read_solutions(in);

  std::unique_ptr<sw::Completer> completer;
  if (backend == "synthetic")
    completer = std::make_unique<sw::SyntheticCompleter>(error_rate);
  else if (backend == "http")
    completer = std::make_unique<sw::HttpCompleter>(http);
  else
    throw sw::Error("unknown completer backend: " + backend);

  sw::AnnotateOptions options;
  options.n_rollouts = n_rollouts;
  options.seed = seed;
  options.workers = workers;
  sw::AnnotateDatasetResult result =
      sw::annotate_dataset(problems, solutions, *completer, options);

  std::uint64_t hash = args_hash(json{{"cmd", "annotate"},
                                      {"n_rollouts", n_rollouts},
                                      {"estimator", estimator},
                                      {"backend", completer->identity()},
                                      {"seed", seed}});
  sw::write_annotated(out, result.annotated, sw::make_header("annotate", hash));
  if (!quarantine.empty()) {
    std::vector<json> records;
    for (const sw::QuarantinedSolution& q : result.quarantined) {
      json record = sw::solution_to_json(q.solution);
      record["error"] = q.error;
      records.push_back(std::move(record));
    }
    sw::write_jsonl(quarantine, sw::make_header("annotate", hash), records);
  }
  std::cout << "annotated " << result.annotated.size() << " solutions ("
            << result.quarantined.size() << " quarantined)\n";
  return 0;
}

int cmd_train_rm(const std::string& mode, const std::string& labels,
                 const std::string& in, const std::string& problems_path,
                 const std::string& solutions_path, const std::string& out,
                 double lr, int epochs, double l2, std::size_t dim,
                 int batch_size, std::uint64_t seed) {
  std::vector<sw::Problem> problems = sw::read_problems(problems_path);
  std::vector<sw::Solution> solutions = sw::read_solutions(solutions_path);
  std::vector<sw::AnnotatedSolution> annotated =
      sw::read_annotated(in, solutions);

  sw::TrainConfig config;
  config.learning_rate = lr;
  config.epochs = epochs;
  config.l2 = l2;
  config.seed = seed;
  config.batch_size = batch_size;
  config.label_source =
      labels == "soft" ? sw::LabelSource::soft : sw::LabelSource::hard;

  sw::TrainTrace trace;
  sw::RewardModel model = sw::train_reward_model(
      problems, annotated,
      mode == "orm" ? sw::RewardMode::orm : sw::RewardMode::prm, config, dim,
      &trace);
  std::uint64_t hash = args_hash(json{{"cmd", "train-rm"},
                                      {"mode", mode},
                                      {"labels", labels},
                                      {"lr", lr},
                                      {"epochs", epochs},
                                      {"seed", seed}});
  sw::save_model(model, out, hash);
  std::cout << "trained " << mode << " model; final loss "
            << (trace.epoch_loss.empty() ? 0.0 : trace.epoch_loss.back())
            << "; saved to " << out << "\n";
  return 0;
}

int cmd_verify(const std::string& strategy_name, const std::string& model_path,
               const std::string& candidates_path,
               const std::string& problems_path, std::vector<int> n_grid,
               int trials, std::uint64_t seed, const std::string& report_path) {
  std::vector<sw::Problem> problems = sw::read_problems(problems_path);
  std::vector<sw::Solution> candidates = sw::read_solutions(candidates_path);

  std::optional<sw::RewardModel> model;
  if (!model_path.empty()) model = sw::load_model(model_path);
  sw::Strategy strategy = sw::strategy_from_name(
      strategy_name, model ? model->mode : sw::RewardMode::prm);

  std::vector<std::vector<sw::Solution>> pools(problems.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t p = 0; p < problems.size(); ++p)
    index.emplace(problems[p].id, p);
  for (sw::Solution& s : candidates) {
    auto it = index.find(s.problem_id);
    if (it == index.end())
      throw sw::Error("candidate references unknown problem " + s.problem_id);
    pools[it->second].push_back(std::move(s));
  }

  auto curve = sw::evaluate_best_of_n(problems, pools,
                                      model ? &*model : nullptr, strategy,
                                      n_grid, trials, seed);
  json points = json::array();
  for (const sw::BestOfNPoint& point : curve) {
    points.push_back(json{{"n", point.n},
                          {"mean_accuracy", point.mean_accuracy},
                          {"trial_accuracy", point.trial_accuracy}});
    std::cout << "strategy=" << sw::strategy_name(strategy)
              << " n=" << point.n << " accuracy=" << point.mean_accuracy
              << "\n";
  }
  if (!report_path.empty())
    sw::write_json_file(report_path,
                        json{{"strategy", sw::strategy_name(strategy)},
                             {"points", points}});
  return 0;
}

int cmd_rl_demo(const std::string& reward, const std::string& prm_path,
                const std::string& orm_path, const std::string& problems_path,
                int iterations, int episodes, int horizon, std::uint64_t seed,
                const std::string& trace_path) {
  std::vector<sw::Problem> problems = sw::read_problems(problems_path);
  if (horizon <= 0) {
    auto chain = sw::parse_chain(problems.at(0).question);
    if (!chain) throw sw::Error("problems are not synthetic chains");
    horizon = chain->depth();
  }
  sw::EnvFactory envs = sw::make_synth_env_factory(problems, horizon);

  sw::RewardFn reward_fn;
  if (reward == "step")
    reward_fn = sw::make_step_reward_fn(sw::load_model(prm_path));
  else if (reward == "outcome")
    reward_fn = sw::make_outcome_reward_fn(sw::load_model(orm_path));
  else
    throw sw::Error("unknown reward provider: " + reward);

  sw::PPOConfig config;
  config.iterations = iterations;
  config.episodes_per_iteration = episodes;
  config.seed = seed;

  sw::PPOTrace trace;
  sw::Policy trained =
      sw::train_ppo(sw::Policy{}, envs, reward_fn, config, &trace);
  double untrained = sw::greedy_success_rate(sw::Policy{}, envs, 200, seed);
  double greedy = sw::greedy_success_rate(trained, envs, 200, seed);

  json iters = json::array();
  for (const auto& it : trace.iterations)
    iters.push_back(json{{"mean_success", it.mean_success},
                         {"mean_reward", it.mean_reward},
                         {"mean_kl", it.mean_kl},
                         {"loss", it.loss}});
  json body{{"reward", reward},
            {"untrained_greedy_success", untrained},
            {"greedy_success", greedy},
            {"iterations", iters}};
  if (!trace_path.empty()) sw::write_json_file(trace_path, body);
  std::cout << "reward=" << reward << " greedy_success=" << greedy
            << " (untrained " << untrained << ")\n";
  return 0;
}

int cmd_eval_quality(const std::string& annotated_path,
                     const std::string& solutions_path,
                     const std::string& reference_path,
                     const std::string& labels) {
  std::vector<sw::Solution> solutions = sw::read_solutions(solutions_path);
  std::vector<sw::AnnotatedSolution> annotated =
      sw::read_annotated(annotated_path, solutions);
  sw::ReferenceMap reference = sw::read_reference_map(reference_path);
  sw::QualityReport report = sw::evaluate_annotation_quality(
      annotated, reference,
      labels == "soft" ? sw::LabelSource::soft : sw::LabelSource::hard);
  std::cout << "steps=" << report.num_steps
            << " accuracy=" << report.accuracy
            << " cross_entropy=" << report.cross_entropy << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"process-supervision toolkit for step-by-step math solutions"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate synthetic problems");
  std::string gen_out = "problems.jsonl";
  std::string gen_gold;
  int gen_depth = 4;
  std::vector<std::int64_t> gen_range = {1, 9};
  std::string gen_ops = "+-";
  int gen_count = 100;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "problems output path");
  gen->add_option("--gold", gen_gold, "gold solutions output path");
  gen->add_option("--depth", gen_depth, "steps per problem");
  gen->add_option("--range", gen_range, "operand range lo hi")->expected(2);
  gen->add_option("--ops", gen_ops, "operation set, subset of +-*");
  gen->add_option("--count", gen_count, "number of problems");
  gen->add_option("--seed", gen_seed, "generation seed");

  // sample
  auto* sample = app.add_subcommand("sample", "sample noisy solutions");
  std::string sample_problems = "problems.jsonl";
  std::string sample_out = "solutions.jsonl";
  std::string sample_reference;
  double sample_error = 0.3;
  double sample_completer_error = 0.3;
  int sample_count = 15;
  std::uint64_t sample_seed = 0;
  sample->add_option("--problems", sample_problems, "problems input");
  sample->add_option("--out", sample_out, "solutions output");
  sample->add_option("--reference", sample_reference,
                     "also write oracle step labels here");
  sample->add_option("--error-rate", sample_error, "per-step error rate");
  sample->add_option("--completer-error-rate", sample_completer_error,
                     "completer error rate used for reference potentials");
  sample->add_option("--samples-per-problem", sample_count,
                     "solutions per problem");
  sample->add_option("--seed", sample_seed, "sampling seed");

  // annotate
  auto* annotate = app.add_subcommand("annotate", "annotate steps via rollouts");
  std::string ann_problems = "problems.jsonl";
  std::string ann_in = "solutions.jsonl";
  std::string ann_out = "annotated.jsonl";
  std::string ann_quarantine = "failed.jsonl";
  int ann_n = 8;
  std::string ann_estimator = "he";
  std::string ann_backend = "synthetic";
  double ann_error = 0.3;
  int ann_workers = 1;
  std::uint64_t ann_seed = 0;
  sw::HttpCompleterConfig http;
  std::string cache_mode = "off";
  annotate->add_option("--problems", ann_problems, "problems input");
  annotate->add_option("--in", ann_in, "solutions input");
  annotate->add_option("--out", ann_out, "annotated output");
  annotate->add_option("--quarantine", ann_quarantine,
                       "failed solutions output");
  annotate->add_option("--n-rollouts", ann_n, "rollouts per step (N)");
  annotate->add_option("--estimator", ann_estimator, "he or se")
      ->check(CLI::IsMember({"he", "se"}));
  annotate->add_option("--completer", ann_backend, "synthetic or http")
      ->check(CLI::IsMember({"synthetic", "http"}));
  annotate->add_option("--error-rate", ann_error,
                       "synthetic completer error rate");
  annotate->add_option("--workers,--max-in-flight", ann_workers,
                       "solution-level parallelism");
  annotate->add_option("--seed", ann_seed, "annotation seed");
  annotate->add_option("--endpoint", http.endpoint, "http completer base URL");
  annotate->add_option("--model-name", http.model, "served model name");
  annotate->add_option("--api-key-env", http.api_key_env,
                       "environment variable holding the API key");
  annotate->add_option("--timeout", http.timeout_seconds, "http timeout");
  annotate->add_option("--cache-mode", cache_mode, "off, record or replay")
      ->check(CLI::IsMember({"off", "record", "replay"}));
  annotate->add_option("--cache-dir", http.cache_dir, "replay cache directory");

  // train-rm
  auto* train = app.add_subcommand("train-rm", "train a reward model");
  std::string train_mode = "prm";
  std::string train_labels = "hard";
  std::string train_in = "annotated.jsonl";
  std::string train_problems = "problems.jsonl";
  std::string train_solutions = "solutions.jsonl";
  std::string train_out = "model.bin";
  double train_lr = 0.1;
  int train_epochs = 5;
  double train_l2 = 1e-6;
  std::size_t train_dim = sw::kDefaultFeatureDim;
  int train_batch = 32;
  std::uint64_t train_seed = 0;
  train->add_option("--mode", train_mode, "orm or prm")
      ->check(CLI::IsMember({"orm", "prm"}));
  train->add_option("--labels", train_labels, "hard or soft")
      ->check(CLI::IsMember({"hard", "soft"}));
  train->add_option("--in", train_in, "annotated input");
  train->add_option("--problems", train_problems, "problems input");
  train->add_option("--solutions", train_solutions, "solutions input");
  train->add_option("--out", train_out, "model output");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--epochs", train_epochs, "epochs");
  train->add_option("--l2", train_l2, "L2 coefficient");
  train->add_option("--dim", train_dim, "feature dimension");
  train->add_option("--batch-size", train_batch, "mini-batch size");
  train->add_option("--seed", train_seed, "shuffle seed");

  // verify
  auto* verify = app.add_subcommand("verify", "best-of-N verification");
  std::string verify_strategy = "prm";
  std::string verify_model;
  std::string verify_candidates = "candidates.jsonl";
  std::string verify_problems = "problems.jsonl";
  std::vector<int> verify_n = {64};
  int verify_trials = 3;
  std::uint64_t verify_seed = 0;
  std::string verify_report;
  verify->add_option("--strategy", verify_strategy,
                     "sc, orm, prm, sc+orm, sc+prm or sc+rm");
  verify->add_option("--model", verify_model, "reward model path");
  verify->add_option("--candidates", verify_candidates, "candidates input");
  verify->add_option("--problems", verify_problems, "problems input");
  verify->add_option("--n", verify_n, "candidate counts to evaluate");
  verify->add_option("--trials", verify_trials, "resampled trials per n");
  verify->add_option("--seed", verify_seed, "subsample seed");
  verify->add_option("--report", verify_report, "report JSON output");

  // rl-demo
  auto* rl = app.add_subcommand("rl-demo", "step vs outcome reward PPO");
  std::string rl_reward = "step";
  std::string rl_prm = "prm.bin";
  std::string rl_orm = "orm.bin";
  std::string rl_problems = "problems.jsonl";
  int rl_iters = 100;
  int rl_episodes = 64;
  int rl_horizon = 0;
  std::uint64_t rl_seed = 0;
  std::string rl_trace;
  rl->add_option("--reward", rl_reward, "step or outcome")
      ->check(CLI::IsMember({"step", "outcome"}));
  rl->add_option("--prm", rl_prm, "PRM model path");
  rl->add_option("--orm", rl_orm, "ORM model path");
  rl->add_option("--problems", rl_problems, "problems input");
  rl->add_option("--iters", rl_iters, "PPO iterations");
  rl->add_option("--episodes", rl_episodes, "episodes per iteration");
  rl->add_option("--horizon", rl_horizon, "max steps (0 = chain depth)");
  rl->add_option("--seed", rl_seed, "training seed");
  rl->add_option("--trace", rl_trace, "trace JSON output");

  // eval-quality
  auto* quality = app.add_subcommand("eval-quality",
                                     "grade annotations against references");
  std::string q_annotated = "annotated.jsonl";
  std::string q_solutions = "solutions.jsonl";
  std::string q_reference = "reference.jsonl";
  std::string q_labels = "hard";
  quality->add_option("--annotated", q_annotated, "annotated input");
  quality->add_option("--solutions", q_solutions, "solutions input");
  quality->add_option("--reference", q_reference, "reference labels input");
  quality->add_option("--labels", q_labels, "hard or soft")
      ->check(CLI::IsMember({"hard", "soft"}));

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a config file");
  std::string run_config_path;
  std::string run_out_dir;
  std::int64_t run_seed = -1;
  int run_train_problems = -1;
  int run_test_problems = -1;
  int run_n_rollouts = -1;
  bool run_rl = false;
  run->add_option("--config", run_config_path, "RunConfig JSON path");
  run->add_option("--out-dir", run_out_dir, "output directory override");
  run->add_option("--seed", run_seed, "seed override");
  run->add_option("--train-problems", run_train_problems,
                  "training problem count override");
  run->add_option("--test-problems", run_test_problems,
                  "test problem count override");
  run->add_option("--n-rollouts", run_n_rollouts, "rollout count override");
  run->add_flag("--rl", run_rl, "enable the RL demo stage");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_synth(gen_out, gen_gold, gen_depth, gen_range, gen_ops,
                           gen_count, gen_seed);
    if (sample->parsed())
      return cmd_sample(sample_problems, sample_out, sample_reference,
                        sample_error, sample_completer_error, sample_count,
                        sample_seed);
    if (annotate->parsed()) {
      http.cache_mode = cache_mode == "record" ? sw::CacheMode::record
                        : cache_mode == "replay" ? sw::CacheMode::replay
                                                 : sw::CacheMode::off;
      return cmd_annotate(ann_problems, ann_in, ann_out, ann_quarantine,
                          ann_n, ann_estimator, ann_backend, ann_error, http,
                          ann_workers, ann_seed);
    }
    if (train->parsed())
      return cmd_train_rm(train_mode, train_labels, train_in, train_problems,
                          train_solutions, train_out, train_lr, train_epochs,
                          train_l2, train_dim, train_batch, train_seed);
    if (verify->parsed())
      return cmd_verify(verify_strategy, verify_model, verify_candidates,
                        verify_problems, verify_n, verify_trials, verify_seed,
                        verify_report);
    if (rl->parsed())
      return cmd_rl_demo(rl_reward, rl_prm, rl_orm, rl_problems, rl_iters,
                         rl_episodes, rl_horizon, rl_seed, rl_trace);
    if (quality->parsed())
      return cmd_eval_quality(q_annotated, q_solutions, q_reference, q_labels);
    if (run->parsed()) {
      sw::RunConfig config;
      if (!run_config_path.empty())
        config = sw::RunConfig::from_json(sw::read_json_file(run_config_path));
      if (!run_out_dir.empty()) config.out_dir = run_out_dir;
      if (run_seed >= 0) config.seed = static_cast<std::uint64_t>(run_seed);
      if (run_train_problems > 0) config.train_problems = run_train_problems;
      if (run_test_problems > 0) config.test_problems = run_test_problems;
      if (run_n_rollouts > 0) config.n_rollouts = run_n_rollouts;
      if (run_rl) config.rl_enabled = true;
      sw::RunReport report = sw::run_pipeline(config);
      std::cout << "pipeline complete; report at "
                << (config.out_dir / "run_report.json").string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
