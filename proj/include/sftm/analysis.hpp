#pragma once

// Monte-Carlo estimation of E[G(x_T)], one-parameter sweeps and sign-change
// threshold extraction.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sftm/model.hpp"
#include "sftm/sim.hpp"

namespace sftm {

struct GainEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // zero for a single path
};

struct McOptions {
  double dt = 1.0 / 99.0;
  double boundary_epsilon = 1e-9;
  unsigned threads = 0;
};

/// G evaluated at the terminal forest proportion of n_paths paths started
/// at s0 and run to time T. Path i uses seed ensemble_path_seed(seed, i).
std::vector<double> terminal_gains(const ModelParams& p, const NoiseParams& n,
                                   const LandState& s0, double T, std::size_t n_paths,
                                   std::uint64_t seed, const McOptions& opt = {});

GainEstimate summarize(const std::vector<double>& samples);

GainEstimate expected_gain(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                           double T, std::size_t n_paths, std::uint64_t seed,
                           const McOptions& opt = {});

enum class SweepParameter { Eta, Delta, Lambda, Gamma, Alpha, Sigma };

std::string_view to_string(SweepParameter s);
SweepParameter parse_sweep_parameter(std::string_view text);

struct SweepRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Figure ranges with open endpoints nudged inward by 0.01:
/// eta, delta, gamma in (0,1); lambda in (0,2]; alpha and sigma in (0,3].
SweepRange default_sweep_range(SweepParameter s);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Eta;
  double lo = 0.01;
  double hi = 0.99;
  std::size_t grid_size = 50;
  std::size_t paths_per_point = 100;
  double horizon = 30.0;
  ModelParams base = preset_paper4(Hypothesis::FSH);
  NoiseParams base_noise = preset_paper4_noise();
  LandState initial = kPaper4Initial;
  std::uint64_t seed = 0;
  /// Every grid point reuses the same path seeds (common random numbers).
  /// When false, point i draws from derive_seed(seed, i).
  bool common_random_numbers = true;
  McOptions mc;

  void validate() const;
  std::vector<double> grid() const;
  /// Copies of the base parameters with the swept value substituted.
  std::pair<ModelParams, NoiseParams> apply(double value) const;
  std::uint64_t point_seed(std::size_t index) const;
};

struct SweepCurve {
  std::string parameter;
  std::vector<double> values;
  std::vector<double> mean;
  std::vector<double> std_error;
  std::vector<bool> skipped;  // grid point violates a parameter constraint

  std::size_t size() const { return values.size(); }
  std::size_t valid_count() const;
};

/// Per-path terminal gains at every grid point (empty for skipped points).
struct SweepSamples {
  std::string parameter;
  std::vector<double> values;
  std::vector<bool> skipped;
  std::vector<std::vector<double>> gains;

  SweepCurve curve() const;
};

/// Throws ConfigError when every grid point is invalid.
SweepSamples sweep_samples(const SweepSpec& spec);
SweepCurve sweep(const SweepSpec& spec);

enum class CrossingDirection { NegativeToPositive, PositiveToNegative };
std::string_view to_string(CrossingDirection d);

struct Crossing {
  double location = 0.0;
  CrossingDirection direction = CrossingDirection::NegativeToPositive;
};

/// Every interval between consecutive non-skipped grid points where the mean
/// changes sign, located by linear interpolation. A mean of exactly zero
/// counts as a crossing at that grid point when its neighbours disagree.
std::vector<Crossing> find_sign_changes(const SweepCurve& curve);

struct CrossingInterval {
  Crossing crossing;
  double lower = 0.0;  // 2.5% bootstrap quantile
  double upper = 0.0;  // 97.5% bootstrap quantile
  double width() const { return upper - lower; }
};

/// Path-level bootstrap of the crossings of the mean curve. Resampled path
/// indices are shared across grid points so the common-random-number
/// structure is preserved. Replicates without a matching crossing are dropped.
std::vector<CrossingInterval> bootstrap_crossings(const SweepSamples& samples,
                                                  std::size_t replicates, std::uint64_t seed);

/// Terminal states at time T of count paths with initial states uniform in
/// the triangle (margin 0.05). Uses the same seeding as simulate_ensemble.
std::vector<LandState> terminal_distribution(const ModelParams& p, const NoiseParams& n,
                                             double T, std::size_t count, std::uint64_t seed,
                                             const McOptions& opt = {});

}  // namespace sftm
