#pragma once

// Synthetic training data: constrained parameter sampling, replicated
// simulation into feature matrices A (forest) and F (agriculture) with label
// matrices P (8 model parameters) and Sigma (2 noise intensities), splitting,
// min-max scaling and on-disk persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sftm/matrix.hpp"
#include "sftm/model.hpp"
#include "sftm/sim.hpp"

namespace sftm {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

struct SamplingRanges {
  // Order: mu, h, eta, beta, delta, lambda, gamma, alpha, sigma1, sigma2.
  std::array<Interval, 10> bounds;

  static constexpr std::array<std::string_view, 10> kNames = {
      "mu", "h", "eta", "beta", "delta", "lambda", "gamma", "alpha", "sigma1", "sigma2"};

  static SamplingRanges defaults();
  Interval& operator[](std::string_view name);
  const Interval& operator[](std::string_view name) const;
  /// Each interval must be ordered and inside its parameter's legal domain.
  void validate() const;
  bool operator==(const SamplingRanges&) const = default;
};

struct ParameterSample {
  ModelParams model;
  NoiseParams noise;
};

/// n1 sets drawn coordinatewise-uniform and rejection-resampled until the
/// joint constraints hold. Throws ConfigError if the acceptance rate falls
/// below 1% (checked once at least 1000 draws have been made).
std::vector<ParameterSample> sample_parameters(std::size_t n1, const SamplingRanges& ranges,
                                               Hypothesis hyp, std::uint64_t seed);

enum class InitialPolicy { Fixed, Uniform };
std::string_view to_string(InitialPolicy p);
InitialPolicy parse_initial_policy(std::string_view text);

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetMeta {
  Hypothesis hypothesis = Hypothesis::FSH;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t T = 30;
  double dt = 1.0 / 99.0;
  std::uint64_t seed = 0;
  SamplingRanges ranges = SamplingRanges::defaults();
  InitialPolicy initial_policy = InitialPolicy::Fixed;
  LandState fixed_initial = kPaper4Initial;
  int format_version = kDatasetFormatVersion;

  /// T, or T + 1 when the uniform policy prepends the initial state.
  std::size_t feature_length() const {
    return initial_policy == InitialPolicy::Uniform ? T + 1 : T;
  }
  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  Matrix A;      // n x feature_length, forest proportions
  Matrix F;      // n x feature_length, agricultural proportions
  Matrix P;      // n x 8, model parameters
  Matrix Sigma;  // n x 2, noise intensities
  DatasetMeta meta;

  std::size_t rows() const { return A.rows(); }
  bool operator==(const Dataset&) const = default;
};

struct BuildOptions {
  std::size_t n2 = 5;
  std::size_t T = 30;
  SimConfig sim{1.0 / 99.0, 30.0, 0, 1e-9};  // t_end is overridden by T
  InitialPolicy initial_policy = InitialPolicy::Fixed;
  LandState fixed_initial = kPaper4Initial;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Row k = i * n2 + j replicates sample i with noise seed derive_seed(seed, k).
/// Under the uniform policy the series gain a leading column holding the
/// simulated initial state. Simulation failures are rethrown with the row index.
Dataset build_dataset(const std::vector<ParameterSample>& samples, const BuildOptions& opt,
                      const SamplingRanges& ranges = SamplingRanges::defaults());

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Uniform random split; the test set receives round(fraction * n) rows.
Split split_dataset(std::size_t rows, double fraction, std::uint64_t seed);

struct ScalingStats {
  double max_A = 0.0;
  double min_A = 0.0;
  double max_F = 0.0;
  double min_F = 0.0;

  /// (v - max) / (max - min), or 0 when max == min.
  static double apply(double v, double max, double min);
  bool operator==(const ScalingStats&) const = default;
};

/// Matrix-wide max/min over the training rows of A and F.
ScalingStats compute_scaling(const Dataset& ds, std::span<const std::size_t> train_rows);
Matrix apply_scaling(const Matrix& m, double max, double min);

struct ScaledFeatures {
  Matrix train_A, train_F;
  Matrix test_A, test_F;
  ScalingStats stats;
};

ScaledFeatures scale_features(const Dataset& ds, const Split& split);

/// Writes meta.json plus A.csv, F.csv, P.csv, Sigma.csv into dir.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws IoError, FormatError or VersionError.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace sftm
