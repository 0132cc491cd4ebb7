// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/pipeline.hpp"

#include <algorithm>

#include "stepwise/rl.hpp"
#include "stepwise/verifier.hpp"

namespace stepwise {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json RunConfig::to_json() const {
  return json{{"seed", seed},
              {"out_dir", out_dir.string()},
              {"depth", depth},
              {"value_lo", value_lo},
              {"value_hi", value_hi},
              {"ops", ops},
              {"train_problems", train_problems},
              {"test_problems", test_problems},
              {"generator_error_rate", generator_error_rate},
              {"samples_per_problem", samples_per_problem},
              {"candidates_per_problem", candidates_per_problem},
              {"completer_error_rate", completer_error_rate},
              {"n_rollouts", n_rollouts},
              {"estimator", estimator == LabelSource::hard ? "he" : "se"},
              {"learning_rate", learning_rate},
              {"epochs", epochs},
              {"l2", l2},
              {"feature_dim", feature_dim},
              {"strategies", strategies},
              {"n_grid", n_grid},
              {"trials", trials},
              {"rl_enabled", rl_enabled},
              {"rl_iterations", rl_iterations},
              {"rl_episodes_per_iteration", rl_episodes_per_iteration}};
}

RunConfig RunConfig::from_json(const json& value) {
  RunConfig config;
  config.seed = value.value("seed", config.seed);
  config.out_dir = value.value("out_dir", config.out_dir.string());
  config.depth = value.value("depth", config.depth);
  config.value_lo = value.value("value_lo", config.value_lo);
  config.value_hi = value.value("value_hi", config.value_hi);
  config.ops = value.value("ops", config.ops);
  config.train_problems = value.value("train_problems", config.train_problems);
  config.test_problems = value.value("test_problems", config.test_problems);
  config.generator_error_rate =
      value.value("generator_error_rate", config.generator_error_rate);
  config.samples_per_problem =
      value.value("samples_per_problem", config.samples_per_problem);
  config.candidates_per_problem =
      value.value("candidates_per_problem", config.candidates_per_problem);
  config.completer_error_rate =
      value.value("completer_error_rate", config.completer_error_rate);
  config.n_rollouts = value.value("n_rollouts", config.n_rollouts);
  config.estimator = value.value("estimator", "he") == std::string("se")
                         ? LabelSource::soft
                         : LabelSource::hard;
  config.learning_rate = value.value("learning_rate", config.learning_rate);
  config.epochs = value.value("epochs", config.epochs);
  config.l2 = value.value("l2", config.l2);
  config.feature_dim = value.value("feature_dim", config.feature_dim);
  if (value.contains("strategies"))
    config.strategies = value["strategies"].get<std::vector<std::string>>();
  if (value.contains("n_grid"))
    config.n_grid = value["n_grid"].get<std::vector<int>>();
  config.trials = value.value("trials", config.trials);
  config.rl_enabled = value.value("rl_enabled", config.rl_enabled);
  config.rl_iterations = value.value("rl_iterations", config.rl_iterations);
  config.rl_episodes_per_iteration = value.value(
      "rl_episodes_per_iteration", config.rl_episodes_per_iteration);
  return config;
}

Strategy strategy_from_name(const std::string& name, RewardMode model_mode) {
  if (name == "sc") return Strategy::sc;
  if (name == "orm") return Strategy::orm;
  if (name == "prm") return Strategy::prm;
  if (name == "sc+orm") return Strategy::sc_orm;
  if (name == "sc+prm") return Strategy::sc_prm;
  if (name == "sc+rm")
    return model_mode == RewardMode::orm ? Strategy::sc_orm
                                         : Strategy::sc_prm;
  throw Error("unknown strategy: " + name);
}

namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage " + name + ": " + e.what());
  }
}

// true when the artifact still needs computing; an existing artifact with a
// foreign config hash is a hard refusal
bool jsonl_stale(const fs::path& path, std::uint64_t hash) {
  if (!fs::exists(path)) return true;
  check_header(read_jsonl(path), path, hash);
  return false;
}

bool json_stale(const fs::path& path, std::uint64_t hash) {
  if (!fs::exists(path)) return true;
  json value = read_json_file(path);
  if (value.value("config_hash", "") != hash_hex(hash))
    throw ConfigMismatch(path.string() + ": produced by another config");
  return false;
}

bool model_stale(const fs::path& path, std::uint64_t hash) {
  if (!fs::exists(path)) return true;
  std::uint64_t producer = 0;
  load_model(path, &producer);
  if (producer != hash)
    throw ConfigMismatch(path.string() + ": produced by another config");
  return false;
}

}  // namespace

RunReport run_pipeline(const RunConfig& config) {
  // out_dir does not affect artifact content, so it stays out of the hash;
  // the same config can be materialized in two places identically
  json hash_source = config.to_json();
  hash_source.erase("out_dir");
  const std::uint64_t hash = config_hash(hash_source);
  fs::create_directories(config.out_dir);
  auto path = [&](const char* name) { return config.out_dir / name; };

  ChainSpec base;
  base.depth = config.depth;
  base.value_lo = config.value_lo;
  base.value_hi = config.value_hi;
  base.ops = config.ops;

  // ---- generate ----
  stage("generate", [&] {
    auto emit = [&](const char* problems_file, const char* gold_file,
                    int count, std::uint64_t seed) {
      if (!jsonl_stale(path(problems_file), hash) &&
          !jsonl_stale(path(gold_file), hash))
        return;
      ChainSpec spec = base;
      spec.seed = seed;
      std::vector<Problem> problems;
      std::vector<Solution> gold;
      for (auto& [problem, solution] :
           generate_dataset(spec, count)) {
        problems.push_back(std::move(problem));
        gold.push_back(std::move(solution));
      }
      write_problems(path(problems_file), problems,
                     make_header("generate", hash));
      write_solutions(path(gold_file), gold, make_header("generate", hash));
    };
    emit("problems_train.jsonl", "gold_train.jsonl", config.train_problems,
         derive_seed(config.seed, "gen", 0));
    emit("problems_test.jsonl", "gold_test.jsonl", config.test_problems,
         derive_seed(config.seed, "gen", 1));
  });

  // ---- sample ----
  stage("sample", [&] {
    if (jsonl_stale(path("solutions_train.jsonl"), hash) ||
        jsonl_stale(path("references_train.jsonl"), hash)) {
      std::vector<Problem> problems = read_problems(path("problems_train.jsonl"));
      std::vector<Solution> solutions;
      std::vector<ReferenceRecord> references;
      NoisyPolicy completer_policy{config.completer_error_rate, 0};
      for (const Problem& problem : problems) {
        for (int k = 0; k < config.samples_per_problem; ++k) {
          NoisyPolicy gen{config.generator_error_rate,
                          derive_seed(config.seed, problem.id + "#sample",
                                      static_cast<std::uint64_t>(k))};
          Solution s = sample_noisy_solution(
              problem, gen, problem.id + "-s" + std::to_string(k));
          ReferenceRecord ref;
          ref.problem_id = problem.id;
          ref.solution_id = s.solution_id;
          auto oracle = oracle_references(problem, s, completer_policy);
          for (std::size_t i = 0; i < oracle.size(); ++i)
            ref.steps.emplace_back(static_cast<int>(i) + 1, oracle[i]);
          references.push_back(std::move(ref));
          solutions.push_back(std::move(s));
        }
      }
      write_solutions(path("solutions_train.jsonl"), solutions,
                      make_header("sample", hash));
      write_references(path("references_train.jsonl"), references,
                       make_header("sample", hash));
    }
    if (jsonl_stale(path("candidates_test.jsonl"), hash)) {
      std::vector<Problem> problems = read_problems(path("problems_test.jsonl"));
      std::vector<Solution> candidates;
      for (const Problem& problem : problems)
        for (int k = 0; k < config.candidates_per_problem; ++k) {
          NoisyPolicy gen{config.generator_error_rate,
                          derive_seed(config.seed, problem.id + "#candidate",
                                      static_cast<std::uint64_t>(k))};
          candidates.push_back(sample_noisy_solution(
              problem, gen, problem.id + "-c" + std::to_string(k)));
        }
      write_solutions(path("candidates_test.jsonl"), candidates,
                      make_header("sample", hash));
    }
  });

  // ---- annotate ----
  stage("annotate", [&] {
    if (!jsonl_stale(path("annotated_train.jsonl"), hash)) return;
    std::vector<Problem> problems = read_problems(path("problems_train.jsonl"));
    std::vector<Solution> solutions = read_solutions(path("solutions_train.jsonl"));
    SyntheticCompleter completer(config.completer_error_rate);
    AnnotateOptions options;
    options.n_rollouts = config.n_rollouts;
    options.seed = derive_seed(config.seed, "annotate", 0);
    AnnotateDatasetResult result =
        annotate_dataset(problems, solutions, completer, options);

    std::vector<json> quarantine;
    for (const QuarantinedSolution& q : result.quarantined) {
      json record = solution_to_json(q.solution);
      record["error"] = q.error;
      quarantine.push_back(std::move(record));
    }
    write_jsonl(path("quarantine.jsonl"), make_header("annotate", hash),
                quarantine);
    write_annotated(path("annotated_train.jsonl"), result.annotated,
                    make_header("annotate", hash));
  });

  // ---- quality ----
  stage("quality", [&] {
    if (!json_stale(path("quality.json"), hash)) return;
    std::vector<Solution> solutions = read_solutions(path("solutions_train.jsonl"));
    std::vector<AnnotatedSolution> annotated =
        read_annotated(path("annotated_train.jsonl"), solutions);
    ReferenceMap reference = read_reference_map(path("references_train.jsonl"));
    QualityReport hard =
        evaluate_annotation_quality(annotated, reference, LabelSource::hard);
    QualityReport soft =
        evaluate_annotation_quality(annotated, reference, LabelSource::soft);
    write_json_file(path("quality.json"),
                    json{{"config_hash", hash_hex(hash)},
                         {"accuracy", hard.accuracy},
                         {"cross_entropy_hard", hard.cross_entropy},
                         {"cross_entropy_soft", soft.cross_entropy},
                         {"num_steps", hard.num_steps}});
  });

  // ---- train ----
  stage("train", [&] {
    if (!model_stale(path("orm.bin"), hash) &&
        !model_stale(path("prm.bin"), hash) &&
        !json_stale(path("train_metrics.json"), hash))
      return;
    std::vector<Problem> problems = read_problems(path("problems_train.jsonl"));
    std::vector<Solution> solutions = read_solutions(path("solutions_train.jsonl"));
    std::vector<AnnotatedSolution> annotated =
        read_annotated(path("annotated_train.jsonl"), solutions);

    TrainConfig tc;
    tc.learning_rate = config.learning_rate;
    tc.epochs = config.epochs;
    tc.l2 = config.l2;
    tc.seed = derive_seed(config.seed, "train", 0);
    tc.label_source = config.estimator;

    TrainTrace orm_trace;
    RewardModel orm = train_reward_model(problems, annotated, RewardMode::orm,
                                         tc, config.feature_dim, &orm_trace);
    TrainTrace prm_trace;
    RewardModel prm = train_reward_model(problems, annotated, RewardMode::prm,
                                         tc, config.feature_dim, &prm_trace);
    save_model(orm, path("orm.bin"), hash);
    save_model(prm, path("prm.bin"), hash);
    write_json_file(path("train_metrics.json"),
                    json{{"config_hash", hash_hex(hash)},
                         {"orm_epoch_loss", orm_trace.epoch_loss},
                         {"prm_epoch_loss", prm_trace.epoch_loss}});
  });

  // ---- verify ----
  stage("verify", [&] {
    if (!json_stale(path("verify_report.json"), hash)) return;
    std::vector<Problem> problems = read_problems(path("problems_test.jsonl"));
    std::vector<Solution> candidates = read_solutions(path("candidates_test.jsonl"));
    std::vector<std::vector<Solution>> pools(problems.size());
    {
      std::map<std::string, std::size_t> index;
      for (std::size_t p = 0; p < problems.size(); ++p)
        index.emplace(problems[p].id, p);
      for (Solution& s : candidates) {
        auto it = index.find(s.problem_id);
        if (it == index.end())
          throw Error("candidate references unknown problem " + s.problem_id);
        pools[it->second].push_back(std::move(s));
      }
    }
    RewardModel orm = load_model(path("orm.bin"));
    RewardModel prm = load_model(path("prm.bin"));

    json per_strategy = json::object();
    for (const std::string& name : config.strategies) {
      Strategy strategy = strategy_from_name(name, RewardMode::prm);
      const RewardModel* model = nullptr;
      if (strategy == Strategy::orm || strategy == Strategy::sc_orm)
        model = &orm;
      else if (strategy == Strategy::prm || strategy == Strategy::sc_prm)
        model = &prm;
      auto curve = evaluate_best_of_n(problems, pools, model, strategy,
                                      config.n_grid, config.trials,
                                      derive_seed(config.seed, "verify", 0));
      json points = json::array();
      for (const BestOfNPoint& point : curve)
        points.push_back(json{{"n", point.n},
                              {"mean_accuracy", point.mean_accuracy},
                              {"trial_accuracy", point.trial_accuracy}});
      per_strategy[name] = std::move(points);
    }
    write_json_file(path("verify_report.json"),
                    json{{"config_hash", hash_hex(hash)},
                         {"accuracy", std::move(per_strategy)}});
  });

  // ---- rl-demo ----
  if (config.rl_enabled) {
    stage("rl-demo", [&] {
      if (!json_stale(path("rl_trace.json"), hash)) return;
      std::vector<Problem> problems = read_problems(path("problems_train.jsonl"));
      std::vector<Problem> eval_problems =
          read_problems(path("problems_test.jsonl"));
      RewardModel orm = load_model(path("orm.bin"));
      RewardModel prm = load_model(path("prm.bin"));

      EnvFactory train_envs =
          make_synth_env_factory(problems, config.depth);
      EnvFactory eval_envs =
          make_synth_env_factory(eval_problems, config.depth);

      PPOConfig pc;
      pc.iterations = config.rl_iterations;
      pc.episodes_per_iteration = config.rl_episodes_per_iteration;
      pc.seed = derive_seed(config.seed, "rl", 0);

      auto run_one = [&](const RewardFn& fn) {
        PPOTrace trace;
        Policy trained = train_ppo(Policy{}, train_envs, fn, pc, &trace);
        json iters = json::array();
        for (const auto& it : trace.iterations)
          iters.push_back(json{{"mean_success", it.mean_success},
                               {"mean_reward", it.mean_reward},
                               {"mean_kl", it.mean_kl},
                               {"loss", it.loss}});
        double greedy = greedy_success_rate(trained, eval_envs, 200,
                                            derive_seed(config.seed, "rl", 1));
        return json{{"greedy_success", greedy}, {"iterations", iters}};
      };

      double untrained = greedy_success_rate(
          Policy{}, eval_envs, 200, derive_seed(config.seed, "rl", 1));
      write_json_file(
          path("rl_trace.json"),
          json{{"config_hash", hash_hex(hash)},
               {"untrained_greedy_success", untrained},
               {"step", run_one(make_step_reward_fn(prm))},
               {"outcome", run_one(make_outcome_reward_fn(orm))}});
    });
  }

  // ---- report ----
  RunReport report;
  report.body = json{{"config", config.to_json()},
                     {"config_hash", hash_hex(hash)},
                     {"quality", read_json_file(path("quality.json"))},
                     {"train_metrics", read_json_file(path("train_metrics.json"))},
                     {"verify", read_json_file(path("verify_report.json"))}};
  if (config.rl_enabled)
    report.body["rl"] = read_json_file(path("rl_trace.json"));
  write_json_file(path("run_report.json"), report.body);
  return report;
}

}  // namespace stepwise
