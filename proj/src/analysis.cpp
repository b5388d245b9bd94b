#include "sftm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sftm/error.hpp"
#include "sftm/parallel.hpp"
#include "sftm/rng.hpp"

namespace sftm {

namespace {

SimConfig make_sim(double T, std::uint64_t seed, const McOptions& opt) {
  SimConfig cfg;
  cfg.dt = opt.dt;
  cfg.t_end = T;
  cfg.seed = seed;
  cfg.boundary_epsilon = opt.boundary_epsilon;
  return cfg;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

std::vector<double> terminal_gains(const ModelParams& p, const NoiseParams& n,
                                   const LandState& s0, double T, std::size_t n_paths,
                                   std::uint64_t seed, const McOptions& opt) {
  if (n_paths < 1) throw ConfigError("n_paths must be at least 1");
  std::vector<double> gains(n_paths);
  parallel_for(n_paths, opt.threads, [&](std::size_t i) {
    const auto out = simulate_terminal(p, n, s0, make_sim(T, ensemble_path_seed(seed, i), opt));
    gains[i] = net_gain(p, out.state.x);
  });
  return gains;
}

GainEstimate summarize(const std::vector<double>& samples) {
  GainEstimate est;
  if (samples.empty()) return est;
  const double count = static_cast<double>(samples.size());
  est.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / count;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double g : samples) ss += (g - est.mean) * (g - est.mean);
    est.std_error = std::sqrt(ss / (count - 1.0) / count);
  }
  return est;
}

GainEstimate expected_gain(const ModelParams& p, const NoiseParams& n, const LandState& s0,
                           double T, std::size_t n_paths, std::uint64_t seed,
                           const McOptions& opt) {
  return summarize(terminal_gains(p, n, s0, T, n_paths, seed, opt));
}

std::string_view to_string(SweepParameter s) {
  switch (s) {
    case SweepParameter::Eta: return "eta";
    case SweepParameter::Delta: return "delta";
    case SweepParameter::Lambda: return "lambda";
    case SweepParameter::Gamma: return "gamma";
    case SweepParameter::Alpha: return "alpha";
    case SweepParameter::Sigma: return "sigma";
  }
  return "?";
}

SweepParameter parse_sweep_parameter(std::string_view text) {
  for (auto s : {SweepParameter::Eta, SweepParameter::Delta, SweepParameter::Lambda,
                 SweepParameter::Gamma, SweepParameter::Alpha, SweepParameter::Sigma}) {
    if (text == to_string(s)) return s;
  }
  throw ConfigError("unknown sweep parameter '" + std::string(text) +
                    "' (expected eta, delta, lambda, gamma, alpha or sigma)");
}

SweepRange default_sweep_range(SweepParameter s) {
  switch (s) {
    case SweepParameter::Lambda: return {0.01, 2.0};
    case SweepParameter::Alpha:
    case SweepParameter::Sigma: return {0.01, 3.0};
    default: return {0.01, 0.99};
  }
}

void SweepSpec::validate() const {
  if (!(lo < hi)) throw ConfigError("sweep range requires lo < hi");
  if (grid_size < 2) throw ConfigError("sweep grid size must be at least 2");
  if (paths_per_point < 1) throw ConfigError("paths per point must be at least 1");
  if (!(horizon > 0.0)) throw ConfigError("sweep horizon must be positive");
  if (!initial.in_triangle()) throw ConfigError("sweep initial state outside the triangle");
}

std::vector<double> SweepSpec::grid() const {
  std::vector<double> g(grid_size);
  const double step = (hi - lo) / static_cast<double>(grid_size - 1);
  for (std::size_t i = 0; i < grid_size; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

std::pair<ModelParams, NoiseParams> SweepSpec::apply(double value) const {
  ModelParams p = base;
  NoiseParams n = base_noise;
  if (parameter == SweepParameter::Sigma) {
    n.sigma1 = value;
    n.sigma2 = value;
  } else {
    p.by_name(to_string(parameter)) = value;
  }
  return {p, n};
}

std::uint64_t SweepSpec::point_seed(std::size_t index) const {
  return common_random_numbers ? seed : derive_seed(seed, index);
}

std::size_t SweepCurve::valid_count() const {
  return static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), false));
}

SweepCurve SweepSamples::curve() const {
  SweepCurve c;
  c.parameter = parameter;
  c.values = values;
  c.skipped = skipped;
  c.mean.resize(values.size(), std::numeric_limits<double>::quiet_NaN());
  c.std_error.resize(values.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (skipped[i]) continue;
    const GainEstimate est = summarize(gains[i]);
    c.mean[i] = est.mean;
    c.std_error[i] = est.std_error;
  }
  return c;
}

SweepSamples sweep_samples(const SweepSpec& spec) {
  spec.validate();
  SweepSamples out;
  out.parameter = std::string(to_string(spec.parameter));
  out.values = spec.grid();
  const std::size_t points = out.values.size();
  out.skipped.assign(points, false);
  out.gains.assign(points, {});
  for (std::size_t i = 0; i < points; ++i) {
    const auto [p, n] = spec.apply(out.values[i]);
    out.skipped[i] = !validate_params(p, n).ok();
  }
  if (std::all_of(out.skipped.begin(), out.skipped.end(), [](bool s) { return s; })) {
    throw ConfigError("invalid sweep: every grid point of " + out.parameter +
                      " violates the parameter constraints");
  }
  // Flatten (point, path) so a single pool covers the whole sweep.
  const std::size_t per_point = spec.paths_per_point;
  for (std::size_t i = 0; i < points; ++i) {
    if (!out.skipped[i]) out.gains[i].resize(per_point);
  }
  McOptions serial = spec.mc;
  serial.threads = 1;
  parallel_for(points * per_point, spec.mc.threads, [&](std::size_t job) {
    const std::size_t i = job / per_point;
    const std::size_t k = job % per_point;
    if (out.skipped[i]) return;
    const auto [p, n] = spec.apply(out.values[i]);
    const SimConfig cfg = make_sim(spec.horizon, ensemble_path_seed(spec.point_seed(i), k), serial);
    out.gains[i][k] = net_gain(p, simulate_terminal(p, n, spec.initial, cfg).state.x);
  });
  return out;
}

SweepCurve sweep(const SweepSpec& spec) { return sweep_samples(spec).curve(); }

std::string_view to_string(CrossingDirection d) {
  return d == CrossingDirection::NegativeToPositive ? "neg_to_pos" : "pos_to_neg";
}

std::vector<Crossing> find_sign_changes(const SweepCurve& curve) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (!curve.skipped[i] && std::isfinite(curve.mean[i])) idx.push_back(i);
  }
  std::vector<Crossing> out;
  std::size_t a = 0;  // position in idx of the last nonzero point
  while (a < idx.size() && sign_of(curve.mean[idx[a]]) == 0) ++a;
  for (std::size_t b = a + 1; b < idx.size(); ++b) {
    const double ma = curve.mean[idx[a]];
    const double mb = curve.mean[idx[b]];
    const int sb = sign_of(mb);
    if (sb == 0) continue;
    if (sb != sign_of(ma)) {
      Crossing c;
      c.direction = sb > 0 ? CrossingDirection::NegativeToPositive
                           : CrossingDirection::PositiveToNegative;
      if (b == a + 1) {
        const double va = curve.values[idx[a]];
        const double vb = curve.values[idx[b]];
        c.location = va + (vb - va) * ma / (ma - mb);
      } else {
        // Exact zeros between a and b; report the middle zero point.
        c.location = curve.values[idx[(a + b) / 2]];
      }
      out.push_back(c);
    }
    a = b;
  }
  return out;
}

std::vector<CrossingInterval> bootstrap_crossings(const SweepSamples& samples,
                                                  std::size_t replicates, std::uint64_t seed) {
  const SweepCurve base = samples.curve();
  const std::vector<Crossing> found = find_sign_changes(base);
  std::vector<CrossingInterval> out;
  if (found.empty() || replicates == 0) {
    for (const auto& c : found) out.push_back({c, c.location, c.location});
    return out;
  }
  std::size_t paths = 0;
  for (std::size_t i = 0; i < samples.values.size(); ++i) {
    if (!samples.skipped[i]) paths = samples.gains[i].size();
  }
  std::vector<std::vector<double>> located(found.size());
  Rng rng(seed);
  std::vector<std::size_t> pick(paths);
  SweepCurve rep = base;
  for (std::size_t r = 0; r < replicates; ++r) {
    for (auto& k : pick) k = rng.below(paths);
    for (std::size_t i = 0; i < samples.values.size(); ++i) {
      if (samples.skipped[i]) continue;
      double sum = 0.0;
      for (std::size_t k : pick) sum += samples.gains[i][k];
      rep.mean[i] = sum / static_cast<double>(paths);
    }
    const auto rc = find_sign_changes(rep);
    for (std::size_t j = 0; j < found.size(); ++j) {
      double best = std::numeric_limits<double>::quiet_NaN();
      double best_dist = std::numeric_limits<double>::infinity();
      for (const auto& c : rc) {
        if (c.direction != found[j].direction) continue;
        const double d = std::abs(c.location - found[j].location);
        if (d < best_dist) {
          best_dist = d;
          best = c.location;
        }
      }
      if (std::isfinite(best)) located[j].push_back(best);
    }
  }
  for (std::size_t j = 0; j < found.size(); ++j) {
    auto& v = located[j];
    CrossingInterval ci{found[j], found[j].location, found[j].location};
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
      };
      ci.lower = quantile(0.025);
      ci.upper = quantile(0.975);
    }
    out.push_back(ci);
  }
  return out;
}

std::vector<LandState> terminal_distribution(const ModelParams& p, const NoiseParams& n,
                                             double T, std::size_t count, std::uint64_t seed,
                                             const McOptions& opt) {
  if (count < 1) throw ConfigError("terminal distribution needs at least one path");
  const InitSampler init = InitSampler::uniform(0.05);
  std::vector<LandState> out(count);
  parallel_for(count, opt.threads, [&](std::size_t i) {
    const std::uint64_t path_seed = ensemble_path_seed(seed, i);
    const LandState s0 = init.draw(ensemble_init_seed(path_seed));
    out[i] = simulate_terminal(p, n, s0, make_sim(T, path_seed, opt)).state;
  });
  return out;
}

}  // namespace sftm
