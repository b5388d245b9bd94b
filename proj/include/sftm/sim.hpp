#pragma once

// Seeded Euler-Maruyama integration of the forest-transition SDE.

#include <cstdint>
#include <span>
#include <vector>

#include "sftm/model.hpp"

namespace sftm {

struct SimConfig {
  double dt = 1.0 / 999.0;
  double t_end = 30.0;
  std::uint64_t seed = 0;
  double boundary_epsilon = 1e-9;

  /// Throws ConfigError on dt <= 0, t_end <= 0 or epsilon outside (0, 1e-3).
  void validate() const;
  /// ceil(t_end / dt), treating t_end / dt within 1e-9 relative of an
  /// integer as that integer. The final step is shortened to land on t_end.
  std::size_t step_count() const;
  /// Time of grid point k (k = step_count() gives exactly t_end).
  double time_at(std::size_t k) const;
};

struct Path {
  std::vector<double> times;
  std::vector<LandState> states;
  std::uint64_t seed = 0;
  /// Number of steps whose raw Euler update left the shrunk triangle.
  std::size_t projections = 0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  bool operator==(const Path&) const = default;
};

struct ObservationSeries {
  LandState initial;  // state at t = 1 (equal to the first observation)
  std::vector<double> x;
  std::vector<double> y;

  std::size_t length() const { return x.size(); }
};

/// Moves s into {x, y >= eps, x + y <= 1 - eps}: clamp each coordinate to
/// eps, then rescale by (1 - eps) / (x + y) if the sum is too large.
/// Returns true if s was modified.
bool project_to_triangle(LandState& s, double eps);

struct StepOutcome {
  LandState state;
  bool projected = false;
};

/// One Euler-Maruyama step with a caller-supplied Brownian increment dw
/// shared by both equations, followed by boundary projection.
StepOutcome em_step_detailed(const ModelParams& p, const NoiseParams& n, const LandState& s,
                             double dt, double dw, double eps = 1e-9);
LandState em_step(const ModelParams& p, const NoiseParams& n, const LandState& s, double dt,
                  double dw, double eps = 1e-9);

/// Full trajectory on the dt grid; the Gaussian stream is seeded with cfg.seed.
/// Noise intensities may be zero (deterministic limit). Throws ConfigError
/// for invalid model parameters, negative noise or s0 outside the open triangle.
Path simulate_path(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                   const SimConfig& cfg);

struct TerminalOutcome {
  LandState state;
  std::size_t projections = 0;
  std::size_t steps = 0;
};

/// Same trajectory as simulate_path, keeping only the final state.
TerminalOutcome simulate_terminal(const ModelParams& p, const NoiseParams& n,
                                  const LandState& s0, const SimConfig& cfg);

/// Integrates with explicit per-step increments (increments.size() steps of
/// length dt); for strong-convergence studies on a fixed Brownian path.
LandState integrate_increments(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                               double dt, std::span<const double> increments,
                               double eps = 1e-9);

/// Trajectory sampled at integer times t = 1..T without storing the path.
/// Identical to observe(simulate_path(...), T) for cfg.t_end >= T.
ObservationSeries simulate_observations(const ModelParams& p, const NoiseParams& n,
                                        const LandState& s0, const SimConfig& cfg,
                                        std::size_t T);

/// Samples integer times 1..T at the nearest grid point. Throws ConfigError
/// when T < 2 or the path ends before T.
ObservationSeries observe(const Path& path, std::size_t T);

/// Initial-state policy for ensembles.
struct InitSampler {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Fixed;
  LandState fixed = kPaper4Initial;
  /// Uniform draws lie in {x, y >= margin, x + y <= 1 - margin}.
  double margin = 0.05;

  static InitSampler fixed_at(LandState s) { return {Kind::Fixed, s, 0.05}; }
  static InitSampler uniform(double margin = 0.05) { return {Kind::Uniform, {}, margin}; }

  LandState draw(std::uint64_t seed) const;
};

/// Seed used for ensemble member `index`.
std::uint64_t ensemble_path_seed(std::uint64_t ensemble_seed, std::size_t index);
/// Seed for the initial-state draw of the member whose noise seed is path_seed.
std::uint64_t ensemble_init_seed(std::uint64_t path_seed);

/// count paths; member i uses seed ensemble_path_seed(cfg.seed, i) for both
/// its initial state and its noise. threads = 0 uses all hardware threads.
std::vector<Path> simulate_ensemble(const ModelParams& p, const NoiseParams& n,
                                    const InitSampler& init, const SimConfig& cfg,
                                    std::size_t count, unsigned threads = 0);

}  // namespace sftm
