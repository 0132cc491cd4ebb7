// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stepwise/annotator.hpp"
#include "stepwise/core.hpp"

namespace stepwise {

// Sparse hashed feature vector; entries sorted by bucket id, unique.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, float>> entries;

  double dot(const std::vector<double>& weights) const;
  bool operator==(const FeatureVector&) const = default;
};

inline constexpr std::size_t kDefaultFeatureDim = std::size_t{1} << 18;

// Version tag of the featurizer; stored in model files so a model is never
// silently applied to features it was not trained on.
std::uint64_t feature_spec_hash(std::size_t dim);

// Hashed unigrams + bigrams of the question and the step prefix, plus
// numeric-shape features (number count, digit length of the last
// intermediate value, arithmetic-consistency flags of `a op b = r` lines).
// Deterministic.
FeatureVector featurize(const Problem& problem, std::string_view prefix,
                        std::size_t dim = kDefaultFeatureDim);

enum class RewardMode { orm, prm };

// Sigmoid linear scorer over step-prefix features; stands in for an
// LLM-head reward model behind the same scoring surface.
struct RewardModel {
  RewardMode mode = RewardMode::prm;
  std::size_t dim = kDefaultFeatureDim;
  std::vector<double> weights;  // length dim
  double bias = 0.0;

  static RewardModel zeros(RewardMode mode, std::size_t dim = kDefaultFeatureDim);
};

double sigmoid(double z);

// sigmoid(w . x + b) for an arbitrary prefix; shared by both modes.
double score_prefix(const RewardModel& model, const Problem& problem,
                    std::string_view prefix);

// PRM score of step i: the prefix up to and including step i.
// Requires model.mode == prm; throws IndexOutOfRange on bad i.
double score_step(const RewardModel& model, const Problem& problem,
                  const Solution& solution, int i);

// ORM score of the whole solution (all steps plus the answer marker, which
// is appended only when the final step does not already carry one).
// Requires model.mode == orm.
double score_solution(const RewardModel& model, const Problem& problem,
                      const Solution& solution);

std::string full_solution_text(const Solution& solution);

// ======================== Losses ========================

struct TrainExample {
  FeatureVector features;
  double label = 0.0;  // in [0,1]
};

// Mean negative log-likelihood over the batch, log arguments clamped at
// 1e-12. Also the ORM loss when examples are whole solutions.
double nll_loss(const RewardModel& model, std::span<const TrainExample> batch);

// Mean-NLL gradient; grad_weights must have length model.dim.
void nll_gradient(const RewardModel& model, std::span<const TrainExample> batch,
                  std::vector<double>& grad_weights, double& grad_bias);

// ORM objective over (problem, solution, label) triples.
struct OrmItem {
  const Problem* problem;
  const Solution* solution;
  double label;
};
double loss_orm(const RewardModel& model, std::span<const OrmItem> batch);

// PRM objective: per-step NLL summed over each solution's steps, normalized
// by the total step count of the batch.
double loss_prm(const RewardModel& model,
                const std::vector<Problem>& problems,
                std::span<const AnnotatedSolution> batch,
                LabelSource label_source);

// Example builders; both iterate solutions in canonical
// (problem_id, solution_id) order so training is independent of input order.
std::vector<TrainExample> build_orm_examples(
    const std::vector<Problem>& problems,
    std::span<const AnnotatedSolution> annotated, std::size_t dim);
std::vector<TrainExample> build_prm_examples(
    const std::vector<Problem>& problems,
    std::span<const AnnotatedSolution> annotated, LabelSource label_source,
    std::size_t dim);

// ======================== Training ========================

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 1;
  double l2 = 1e-6;
  std::uint64_t seed = 0;
  LabelSource label_source = LabelSource::hard;
  int batch_size = 32;
  bool shuffle = true;  // seed-fixed shuffling
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // full-dataset NLL after each epoch
};

// Mini-batch gradient descent. Deterministic given config.seed; throws
// NonFiniteLoss with diagnostics if the loss leaves the reals.
RewardModel train(RewardModel model, std::span<const TrainExample> dataset,
                  const TrainConfig& config, TrainTrace* trace = nullptr);

// Builds examples in the configured mode and trains.
RewardModel train_reward_model(const std::vector<Problem>& problems,
                               std::span<const AnnotatedSolution> annotated,
                               RewardMode mode, const TrainConfig& config,
                               std::size_t dim = kDefaultFeatureDim,
                               TrainTrace* trace = nullptr);

// ======================== Persistence ========================

// Versioned binary model file: header (magic, version, mode, dim, bias,
// feature-spec hash, producer hash) + little-endian weight block.
void save_model(const RewardModel& model, const std::filesystem::path& path,
                std::uint64_t producer_hash = 0);
RewardModel load_model(const std::filesystem::path& path,
                       std::uint64_t* producer_hash = nullptr);

}  // namespace stepwise
