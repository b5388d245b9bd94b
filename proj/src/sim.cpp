#include "sftm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sftm/error.hpp"
#include "sftm/parallel.hpp"
#include "sftm/rng.hpp"

namespace sftm {

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be positive");
  if (!(boundary_epsilon > 0.0 && boundary_epsilon < 1e-3)) {
    throw ConfigError("boundary_epsilon must lie in (0, 1e-3)");
  }
}

std::size_t SimConfig::step_count() const {
  const double ratio = t_end / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) {
    return static_cast<std::size_t>(std::max(1.0, nearest));
  }
  return static_cast<std::size_t>(std::ceil(ratio));
}

double SimConfig::time_at(std::size_t k) const {
  return k >= step_count() ? t_end : static_cast<double>(k) * dt;
}

bool project_to_triangle(LandState& s, double eps) {
  bool moved = false;
  if (!(s.x >= eps)) {
    s.x = eps;
    moved = true;
  }
  if (!(s.y >= eps)) {
    s.y = eps;
    moved = true;
  }
  const double total = s.x + s.y;
  if (total > 1.0 - eps) {
    const double f = (1.0 - eps) / total;
    s.x *= f;
    s.y *= f;
    // Rescaling can push a coordinate just under eps when the other dominates.
    s.x = std::max(s.x, eps);
    s.y = std::max(s.y, eps);
    if (s.x + s.y > 1.0 - eps) {
      if (s.x >= s.y) {
        s.x = 1.0 - eps - s.y;
      } else {
        s.y = 1.0 - eps - s.x;
      }
    }
    moved = true;
  }
  return moved;
}

StepOutcome em_step_detailed(const ModelParams& p, const NoiseParams& n, const LandState& s,
                             double dt, double dw, double eps) {
  const Rates a = drift(p, s);
  const Rates b = diffusion(n, s);
  StepOutcome out;
  out.state = {s.x + a.dx * dt + b.dx * dw, s.y + a.dy * dt + b.dy * dw};
  out.projected = project_to_triangle(out.state, eps);
  return out;
}

LandState em_step(const ModelParams& p, const NoiseParams& n, const LandState& s, double dt,
                  double dw, double eps) {
  return em_step_detailed(p, n, s, dt, dw, eps).state;
}

namespace {

void check_inputs(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                  const SimConfig& cfg) {
  cfg.validate();
  if (auto v = validate_model_params(p); !v) {
    throw ConfigError("invalid model parameters: " + v.message());
  }
  if (!(n.sigma1 >= 0.0) || !(n.sigma2 >= 0.0) || !std::isfinite(n.sigma1) ||
      !std::isfinite(n.sigma2)) {
    throw ConfigError("noise intensities must be finite and non-negative");
  }
  if (!s0.in_triangle()) {
    std::ostringstream msg;
    msg << "initial state (" << s0.x << ", " << s0.y << ") is outside the open triangle";
    throw ConfigError(msg.str());
  }
}

// Visitor receives (grid index, time, state) at every grid point including t = 0.
template <typename Visit>
TerminalOutcome integrate(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                          const SimConfig& cfg, Visit&& visit) {
  check_inputs(p, n, s0, cfg);
  const std::size_t steps = cfg.step_count();
  const double eps = cfg.boundary_epsilon;
  Rng rng(cfg.seed);
  LandState s = s0;
  project_to_triangle(s, eps);
  TerminalOutcome out;
  out.steps = steps;
  visit(std::size_t{0}, 0.0, s);
  double t = 0.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_next = cfg.time_at(k);
    const double h = t_next - t;
    const double dw = std::sqrt(h) * rng.normal();
    const StepOutcome step = em_step_detailed(p, n, s, h, dw, eps);
    s = step.state;
    if (step.projected) ++out.projections;
    t = t_next;
    visit(k, t, s);
  }
  out.state = s;
  return out;
}

std::size_t nearest_index(std::span<const double> times, double t) {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  std::size_t i = static_cast<std::size_t>(it - times.begin());
  if (i > 0 && (t - times[i - 1]) <= (times[i] - t)) --i;
  return i;
}

void check_horizon(std::size_t T, double t_end, double dt) {
  if (T < 2) throw ConfigError("observation horizon T must be at least 2");
  if (static_cast<double>(T) > t_end + 0.5 * dt) {
    std::ostringstream msg;
    msg << "path ends at t=" << t_end << ", before observation horizon T=" << T;
    throw ConfigError(msg.str());
  }
}

}  // namespace

Path simulate_path(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                   const SimConfig& cfg) {
  Path path;
  path.seed = cfg.seed;
  cfg.validate();
  const std::size_t steps = cfg.step_count();
  path.times.reserve(steps + 1);
  path.states.reserve(steps + 1);
  const TerminalOutcome out = integrate(p, n, s0, cfg, [&](std::size_t, double t, const LandState& s) {
    path.times.push_back(t);
    path.states.push_back(s);
  });
  path.projections = out.projections;
  return path;
}

TerminalOutcome simulate_terminal(const ModelParams& p, const NoiseParams& n,
                                  const LandState& s0, const SimConfig& cfg) {
  return integrate(p, n, s0, cfg, [](std::size_t, double, const LandState&) {});
}

LandState integrate_increments(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                               double dt, std::span<const double> increments, double eps) {
  LandState s = s0;
  for (double dw : increments) s = em_step(p, n, s, dt, dw, eps);
  return s;
}

ObservationSeries simulate_observations(const ModelParams& p, const NoiseParams& n,
                                        const LandState& s0, const SimConfig& cfg,
                                        std::size_t T) {
  cfg.validate();
  check_horizon(T, cfg.t_end, cfg.dt);
  // Grid index nearest to each integer time, resolved with the same rule as observe().
  const std::size_t steps = cfg.step_count();
  std::vector<double> times(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) times[k] = cfg.time_at(k);
  std::vector<std::size_t> wanted(T);
  for (std::size_t t = 1; t <= T; ++t) wanted[t - 1] = nearest_index(times, static_cast<double>(t));

  ObservationSeries obs;
  obs.x.resize(T);
  obs.y.resize(T);
  std::size_t cursor = 0;
  integrate(p, n, s0, cfg, [&](std::size_t k, double, const LandState& s) {
    while (cursor < T && wanted[cursor] == k) {
      obs.x[cursor] = s.x;
      obs.y[cursor] = s.y;
      ++cursor;
    }
  });
  obs.initial = {obs.x[0], obs.y[0]};
  return obs;
}

ObservationSeries observe(const Path& path, std::size_t T) {
  if (path.times.empty()) throw ConfigError("cannot observe an empty path");
  const double dt = path.times.size() > 1 ? path.times[1] - path.times[0] : 0.0;
  check_horizon(T, path.times.back(), dt);
  ObservationSeries obs;
  obs.x.reserve(T);
  obs.y.reserve(T);
  for (std::size_t t = 1; t <= T; ++t) {
    const std::size_t i = nearest_index(path.times, static_cast<double>(t));
    obs.x.push_back(path.states[i].x);
    obs.y.push_back(path.states[i].y);
  }
  obs.initial = {obs.x[0], obs.y[0]};
  return obs;
}

LandState InitSampler::draw(std::uint64_t seed) const {
  if (kind == Kind::Fixed) return fixed;
  if (!(margin > 0.0 && margin < 1.0 / 3.0)) {
    throw ConfigError("uniform initial margin must lie in (0, 1/3)");
  }
  Rng rng(seed);
  const double hi = 1.0 - 2.0 * margin;
  for (;;) {
    const double x = rng.uniform(margin, hi);
    const double y = rng.uniform(margin, hi);
    if (x + y <= 1.0 - margin) return {x, y};
  }
}

std::uint64_t ensemble_path_seed(std::uint64_t ensemble_seed, std::size_t index) {
  return derive_seed(ensemble_seed, index);
}

std::uint64_t ensemble_init_seed(std::uint64_t path_seed) { return derive_seed(path_seed, 0x1A17); }

std::vector<Path> simulate_ensemble(const ModelParams& p, const NoiseParams& n,
                                    const InitSampler& init, const SimConfig& cfg,
                                    std::size_t count, unsigned threads) {
  if (count < 1) throw ConfigError("ensemble size must be at least 1");
  std::vector<Path> paths(count);
  parallel_for(count, threads, [&](std::size_t i) {
    SimConfig member = cfg;
    member.seed = ensemble_path_seed(cfg.seed, i);
    const LandState s0 = init.draw(ensemble_init_seed(member.seed));
    paths[i] = simulate_path(p, n, s0, member);
  });
  return paths;
}

}  // namespace sftm
