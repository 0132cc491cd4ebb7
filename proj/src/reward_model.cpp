// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "stepwise/synth.hpp"

namespace stepwise {

namespace {

constexpr char kMagic[8] = {'S', 'W', 'R', 'M', 'v', '1', 0, 0};
constexpr double kLogClamp = 1e-12;

void add_feature(std::vector<std::pair<std::uint32_t, float>>& out,
                 std::string_view key, float weight, std::size_t dim) {
  out.emplace_back(static_cast<std::uint32_t>(fnv1a64(key) % dim), weight);
}

bool is_number_token(std::string_view t) {
  if (!t.empty() && (t.back() == '.' || t.back() == ','))
    t.remove_suffix(1);
  if (t.empty()) return false;
  std::size_t i = t.front() == '-' ? 1 : 0;
  if (i == t.size()) return false;
  for (; i < t.size(); ++i)
    if (t[i] < '0' || t[i] > '9') return false;
  return true;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > begin) tokens.push_back(lower(text.substr(begin, i - begin)));
  }
  return tokens;
}

// `a op b = r` with integer operands; used for consistency flags
struct Equation {
  std::int64_t lhs;
  bool ok;
};

std::optional<Equation> parse_equation(std::string_view line) {
  std::size_t eq = line.rfind('=');
  if (eq == std::string_view::npos) return std::nullopt;
  auto rhs = claimed_result(line);
  if (!rhs) return std::nullopt;

  std::vector<std::string> tokens;
  {
    std::string_view left = line.substr(0, eq);
    std::size_t i = 0;
    while (i < left.size()) {
      while (i < left.size() && is_space(left[i])) ++i;
      std::size_t begin = i;
      while (i < left.size() && !is_space(left[i])) ++i;
      if (i > begin) tokens.emplace_back(left.substr(begin, i - begin));
    }
  }
  if (tokens.size() < 3) return std::nullopt;
  const std::string& op = tokens[tokens.size() - 2];
  if (op != "+" && op != "-" && op != "*") return std::nullopt;
  auto parse = [](const std::string& s) -> std::optional<std::int64_t> {
    try {
      std::size_t used = 0;
      std::int64_t v = std::stoll(s, &used);
      if (used != s.size()) return std::nullopt;
      return v;
    } catch (...) {
      return std::nullopt;
    }
  };
  auto a = parse(tokens[tokens.size() - 3]);
  auto b = parse(tokens[tokens.size() - 1]);
  if (!a || !b) return std::nullopt;
  std::int64_t expect = op == "+" ? *a + *b : op == "-" ? *a - *b : *a * *b;
  return Equation{expect, expect == *rhs};
}

}  // namespace

double FeatureVector::dot(const std::vector<double>& weights) const {
  double sum = 0.0;
  for (const auto& [id, w] : entries) sum += weights[id] * w;
  return sum;
}

std::uint64_t feature_spec_hash(std::size_t dim) {
  return fnv1a64("unigram-bigram+numeric-shape;v1;dim=" + std::to_string(dim));
}

FeatureVector featurize(const Problem& problem, std::string_view prefix,
                        std::size_t dim) {
  std::vector<std::pair<std::uint32_t, float>> raw;
  raw.reserve(128);

  auto add_text = [&](std::string_view tag, std::string_view text) {
    std::vector<std::string> tokens = tokenize(text);
    for (const std::string& t : tokens)
      add_feature(raw, std::string(tag) + "1:" + t, 1.0f, dim);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
      add_feature(raw, std::string(tag) + "2:" + tokens[i] + " " + tokens[i + 1],
                  1.0f, dim);
  };
  add_text("q", problem.question);
  add_text("s", prefix);

  // numeric shape
  int number_count = 0;
  for (const std::string& t : tokenize(prefix))
    if (is_number_token(t)) ++number_count;
  add_feature(raw, "num_count:" + std::to_string(std::min(number_count, 16)),
              1.0f, dim);
  if (auto last = claimed_result(prefix))
    add_feature(raw,
                "last_digits:" + std::to_string(std::to_string(*last).size()),
                1.0f, dim);

  // arithmetic consistency of `a op b = r` lines
  int ok_count = 0;
  int bad_count = 0;
  int last_state = -1;  // -1 none, 0 bad, 1 ok
  for (std::string_view line : split_lines(prefix)) {
    if (auto eq = parse_equation(line)) {
      eq->ok ? ++ok_count : ++bad_count;
      last_state = eq->ok ? 1 : 0;
    }
  }
  if (ok_count > 0)
    add_feature(raw, "arith_ok", static_cast<float>(ok_count), dim);
  if (bad_count > 0)
    add_feature(raw, "arith_bad", static_cast<float>(bad_count), dim);
  if (last_state == 1) add_feature(raw, "arith_last_ok", 1.0f, dim);
  if (last_state == 0) add_feature(raw, "arith_last_bad", 1.0f, dim);

  std::sort(raw.begin(), raw.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  FeatureVector out;
  out.entries.reserve(raw.size());
  for (const auto& [id, w] : raw) {
    if (!out.entries.empty() && out.entries.back().first == id)
      out.entries.back().second += w;
    else
      out.entries.emplace_back(id, w);
  }
  return out;
}

RewardModel RewardModel::zeros(RewardMode mode, std::size_t dim) {
  RewardModel model;
  model.mode = mode;
  model.dim = dim;
  model.weights.assign(dim, 0.0);
  model.bias = 0.0;
  return model;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double score_prefix(const RewardModel& model, const Problem& problem,
                    std::string_view prefix) {
  FeatureVector x = featurize(problem, prefix, model.dim);
  return sigmoid(x.dot(model.weights) + model.bias);
}

double score_step(const RewardModel& model, const Problem& problem,
                  const Solution& solution, int i) {
  if (model.mode != RewardMode::prm)
    throw Error("score_step requires a PRM-mode model");
  return score_prefix(model, problem, step_prefix(solution, i));
}

std::string full_solution_text(const Solution& solution) {
  std::string text = step_prefix(
      solution, static_cast<int>(solution.steps.size()));
  // append the answer only when the final step does not already state it
  if (solution.answer && !extract_answer_marker(solution.steps.back().text))
    text += "\n" + answer_marker_line(*solution.answer);
  return text;
}

double score_solution(const RewardModel& model, const Problem& problem,
                      const Solution& solution) {
  if (model.mode != RewardMode::orm)
    throw Error("score_solution requires an ORM-mode model");
  if (solution.steps.empty()) throw EmptySolution("solution has no steps");
  return score_prefix(model, problem, full_solution_text(solution));
}

// ======================== Losses ========================

namespace {

double example_nll(const RewardModel& model, const TrainExample& ex) {
  double q = sigmoid(ex.features.dot(model.weights) + model.bias);
  double y = ex.label;
  double lq = std::log(std::max(q, kLogClamp));
  double l1q = std::log(std::max(1.0 - q, kLogClamp));
  return -(y * lq + (1.0 - y) * l1q);
}

}  // namespace

double nll_loss(const RewardModel& model,
                std::span<const TrainExample> batch) {
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (const TrainExample& ex : batch) sum += example_nll(model, ex);
  return sum / static_cast<double>(batch.size());
}

void nll_gradient(const RewardModel& model,
                  std::span<const TrainExample> batch,
                  std::vector<double>& grad_weights, double& grad_bias) {
  grad_weights.assign(model.dim, 0.0);
  grad_bias = 0.0;
  if (batch.empty()) return;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    double q = sigmoid(ex.features.dot(model.weights) + model.bias);
    double delta = (q - ex.label) * scale;
    for (const auto& [id, w] : ex.features.entries)
      grad_weights[id] += delta * w;
    grad_bias += delta;
  }
}

double loss_orm(const RewardModel& model, std::span<const OrmItem> batch) {
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (const OrmItem& item : batch) {
    double q = score_solution(model, *item.problem, *item.solution);
    double lq = std::log(std::max(q, kLogClamp));
    double l1q = std::log(std::max(1.0 - q, kLogClamp));
    sum += -(item.label * lq + (1.0 - item.label) * l1q);
  }
  return sum / static_cast<double>(batch.size());
}

double loss_prm(const RewardModel& model,
                const std::vector<Problem>& problems,
                std::span<const AnnotatedSolution> batch,
                LabelSource label_source) {
  std::map<std::string, const Problem*> by_id;
  for (const Problem& p : problems) by_id.emplace(p.id, &p);

  double sum = 0.0;
  std::size_t steps = 0;
  for (const AnnotatedSolution& a : batch) {
    auto it = by_id.find(a.solution.problem_id);
    if (it == by_id.end())
      throw Error("loss_prm: unknown problem " + a.solution.problem_id);
    for (const StepAnnotation& ann : a.step_annotations) {
      double q = score_prefix(model, *it->second,
                              step_prefix(a.solution, ann.step_index));
      double y = label_source == LabelSource::hard
                     ? static_cast<double>(ann.hard_label)
                     : ann.soft_label;
      double lq = std::log(std::max(q, kLogClamp));
      double l1q = std::log(std::max(1.0 - q, kLogClamp));
      sum += -(y * lq + (1.0 - y) * l1q);
      ++steps;
    }
  }
  return steps == 0 ? 0.0 : sum / static_cast<double>(steps);
}

// ======================== Example builders ========================

namespace {

std::vector<const AnnotatedSolution*> canonical_order(
    std::span<const AnnotatedSolution> annotated) {
  std::vector<const AnnotatedSolution*> out;
  out.reserve(annotated.size());
  for (const AnnotatedSolution& a : annotated) out.push_back(&a);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    return std::tie(a->solution.problem_id, a->solution.solution_id) <
           std::tie(b->solution.problem_id, b->solution.solution_id);
  });
  return out;
}

const Problem& problem_for(const std::map<std::string, const Problem*>& by_id,
                           const std::string& problem_id) {
  auto it = by_id.find(problem_id);
  if (it == by_id.end()) throw Error("unknown problem_id: " + problem_id);
  return *it->second;
}

}  // namespace

std::vector<TrainExample> build_orm_examples(
    const std::vector<Problem>& problems,
    std::span<const AnnotatedSolution> annotated, std::size_t dim) {
  std::map<std::string, const Problem*> by_id;
  for (const Problem& p : problems) by_id.emplace(p.id, &p);

  std::vector<TrainExample> out;
  out.reserve(annotated.size());
  for (const AnnotatedSolution* a : canonical_order(annotated)) {
    const Problem& p = problem_for(by_id, a->solution.problem_id);
    out.push_back({featurize(p, full_solution_text(a->solution), dim),
                   static_cast<double>(a->outcome_label)});
  }
  return out;
}

std::vector<TrainExample> build_prm_examples(
    const std::vector<Problem>& problems,
    std::span<const AnnotatedSolution> annotated, LabelSource label_source,
    std::size_t dim) {
  std::map<std::string, const Problem*> by_id;
  for (const Problem& p : problems) by_id.emplace(p.id, &p);

  std::vector<TrainExample> out;
  for (const AnnotatedSolution* a : canonical_order(annotated)) {
    const Problem& p = problem_for(by_id, a->solution.problem_id);
    for (const StepAnnotation& ann : a->step_annotations) {
      double y = label_source == LabelSource::hard
                     ? static_cast<double>(ann.hard_label)
                     : ann.soft_label;
      out.push_back(
          {featurize(p, step_prefix(a->solution, ann.step_index), dim), y});
    }
  }
  return out;
}

// ======================== Training ========================

RewardModel train(RewardModel model, std::span<const TrainExample> dataset,
                  const TrainConfig& config, TrainTrace* trace) {
  if (dataset.empty()) throw Error("train: empty dataset");
  if (config.epochs < 1) throw Error("train: epochs must be >= 1");
  if (config.learning_rate < 0) throw Error("train: negative learning rate");

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  SplitMix64 rng(hash_mix(config.seed, 0x7261696e));
  const std::size_t batch_size =
      config.batch_size < 1 ? dataset.size()
                            : static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
    }
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      std::size_t end = std::min(begin + batch_size, order.size());
      const double scale =
          config.learning_rate / static_cast<double>(end - begin);

      // exact L2: decay then apply the data gradient sparsely
      if (config.l2 > 0.0) {
        double decay = 1.0 - config.learning_rate * config.l2;
        for (double& w : model.weights) w *= decay;
        model.bias *= decay;
      }
      double bias_step = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const TrainExample& ex = dataset[order[k]];
        double q = sigmoid(ex.features.dot(model.weights) + model.bias);
        double delta = (q - ex.label) * scale;
        if (!std::isfinite(delta))
          throw NonFiniteLoss("train: non-finite update at epoch " +
                              std::to_string(epoch) + ", example " +
                              std::to_string(order[k]));
        for (const auto& [id, w] : ex.features.entries)
          model.weights[id] -= delta * w;
        bias_step += delta;
      }
      model.bias -= bias_step;
    }

    double epoch_loss = nll_loss(model, dataset);
    if (!std::isfinite(epoch_loss))
      throw NonFiniteLoss("train: non-finite loss after epoch " +
                          std::to_string(epoch));
    if (trace) trace->epoch_loss.push_back(epoch_loss);
  }
  return model;
}

RewardModel train_reward_model(const std::vector<Problem>& problems,
                               std::span<const AnnotatedSolution> annotated,
                               RewardMode mode, const TrainConfig& config,
                               std::size_t dim, TrainTrace* trace) {
  std::vector<TrainExample> examples =
      mode == RewardMode::orm
          ? build_orm_examples(problems, annotated, dim)
          : build_prm_examples(problems, annotated, config.label_source, dim);
  return train(RewardModel::zeros(mode, dim), examples, config, trace);
}

// ======================== Persistence ========================

void save_model(const RewardModel& model, const std::filesystem::path& path,
                std::uint64_t producer_hash) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_model: cannot open " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    std::uint32_t mode = model.mode == RewardMode::orm ? 0u : 1u;
    std::uint64_t dim = model.dim;
    std::uint64_t fhash = feature_spec_hash(model.dim);
    out.write(reinterpret_cast<const char*>(&mode), sizeof(mode));
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(&model.bias), sizeof(model.bias));
    out.write(reinterpret_cast<const char*>(&fhash), sizeof(fhash));
    out.write(reinterpret_cast<const char*>(&producer_hash),
              sizeof(producer_hash));
    out.write(reinterpret_cast<const char*>(model.weights.data()),
              static_cast<std::streamsize>(model.weights.size() *
                                           sizeof(double)));
    if (!out) throw Error("save_model: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RewardModel load_model(const std::filesystem::path& path,
                       std::uint64_t* producer_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_model: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("load_model: bad magic in " + path.string());

  std::uint32_t mode = 0;
  std::uint64_t dim = 0;
  double bias = 0;
  std::uint64_t fhash = 0;
  std::uint64_t phash = 0;
  in.read(reinterpret_cast<char*>(&mode), sizeof(mode));
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  in.read(reinterpret_cast<char*>(&bias), sizeof(bias));
  in.read(reinterpret_cast<char*>(&fhash), sizeof(fhash));
  in.read(reinterpret_cast<char*>(&phash), sizeof(phash));
  if (!in) throw Error("load_model: truncated header in " + path.string());
  if (fhash != feature_spec_hash(dim))
    throw ConfigMismatch("load_model: feature spec mismatch in " +
                         path.string());

  RewardModel model;
  model.mode = mode == 0 ? RewardMode::orm : RewardMode::prm;
  model.dim = dim;
  model.bias = bias;
  model.weights.resize(dim);
  in.read(reinterpret_cast<char*>(model.weights.data()),
          static_cast<std::streamsize>(dim * sizeof(double)));
  if (!in) throw Error("load_model: truncated weights in " + path.string());
  if (producer_hash) *producer_hash = phash;
  return model;
}

}  // namespace stepwise
