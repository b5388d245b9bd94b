#pragma once

// Mini-batch training of the convolutional regressor, task assembly from a
// dataset split, and evaluation.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "sftm/dataset.hpp"
#include "sftm/matrix.hpp"
#include "sftm/scnn.hpp"

namespace sftm {

enum class Optimizer { Adam, SGD };
std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view text);

/// params8 regresses the P columns, noise2 the Sigma columns.
enum class Target { Params8, Noise2 };
std::string_view to_string(Target t);
Target parse_target(std::string_view text);
std::size_t target_dim(Target t);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
  double validation_fraction = 0.1;
  // Fit the output affine to the training-label mean and spread before training.
  bool standardize_targets = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochLoss {
  double train = 0.0;
  double val = 0.0;  // NaN when there are no validation rows
  bool operator==(const EpochLoss&) const = default;
};

struct TrainedModel {
  Scnn net;
  TrainConfig train;
  std::vector<EpochLoss> history;
  std::optional<ScalingStats> scaling;
  Target target = Target::Params8;
  Hypothesis hypothesis = Hypothesis::FSH;
};

/// Everything a task needs after splitting and scaling.
struct TaskData {
  SeriesBatch train_x, test_x;
  Matrix train_y, test_y;
  ScalingStats scaling;
};

TaskData prepare_task(const Dataset& ds, const Split& split, Target target);
Matrix select_labels(const Dataset& ds, Target target, std::span<const std::size_t> rows);

/// Holds out validation_fraction of the rows (seeded from shuffle_seed),
/// reshuffles the rest every epoch and steps the optimizer once per batch.
/// Throws NumericalError as soon as a batch loss is non-finite.
TrainedModel fit(const ScnnConfig& net_cfg, const SeriesBatch& x, const Matrix& y,
                 const TrainConfig& cfg);

struct Metrics {
  double test_mse = 0.0;
  std::vector<double> per_target_mse;
};

Metrics evaluate(const Scnn& net, const SeriesBatch& x, const Matrix& y);
Metrics evaluate_predictions(const Matrix& pred, const Matrix& y);

/// Rows of the training-label column means, one per query.
Matrix mean_predictor(const Matrix& train_y, std::size_t queries);

}  // namespace sftm
