// Acceptance suite: one PASS/FAIL line per criterion, indented detail lines
// below it. Pass criterion numbers (e.g. "4 8") to run a subset.

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sftm/analysis.hpp"
#include "sftm/dataset.hpp"
#include "sftm/io_util.hpp"
#include "sftm/knn.hpp"
#include "sftm/parallel.hpp"
#include "sftm/rng.hpp"
#include "sftm/scnn.hpp"
#include "sftm/sim.hpp"
#include "sftm/training.hpp"

using namespace sftm;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240611;

struct Outcome {
  std::string id;
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

void report(const Outcome& o) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << o.id << ": " << o.summary << "\n";
  for (const auto& d : o.details) std::cout << "    " << d << "\n";
  std::cout.flush();
}

oracle::Params to_oracle(const ModelParams& m) {
  return {m.mu, m.h, m.eta, m.beta, m.delta, m.lambda, m.gamma, m.alpha, m.hypothesis == Hypothesis::ESH};
}

// 1. Closed-form gain against the linear Bellman system.
Outcome criterion1() {
  Outcome o{"1"};
  Clock clock;
  double worst = 0.0;
  for (Hypothesis hyp : {Hypothesis::FSH, Hypothesis::ESH}) {
    const auto samples = sample_parameters(10000, SamplingRanges::defaults(), hyp, kSeed);
    Rng rng(derive_seed(kSeed, 1));
    for (const auto& s : samples) {
      const double x = rng.uniform(0.0, 1.0);
      worst = std::max(worst, std::abs(net_gain(s.model, x) - oracle::gain(to_oracle(s.model), x)));
    }
  }
  const double t = clock.seconds();
  o.pass = worst < 1e-10 && t < 1.0;
  o.summary = "max |G - (vA - vF)| = " + num(worst) + " (tol 1e-10) over 2x10^4 draws, " + num(t, 3) +
              " s (limit 1 s)";
  return o;
}

// 2. Noiseless Euler path against RK4 at a tenth of the step.
Outcome criterion2() {
  Outcome o{"2"};
  Clock clock;
  double worst_all = 0.0;
  for (Hypothesis hyp : {Hypothesis::FSH, Hypothesis::ESH}) {
    const auto p = preset_paper4(hyp);
    SimConfig cfg;
    cfg.dt = 1.0 / 999.0;
    cfg.t_end = 30.0;
    const Path path = simulate_path(p, {0.0, 0.0}, kPaper4Initial, cfg);
    const auto ref = oracle::rk4(to_oracle(p), {kPaper4Initial.x, kPaper4Initial.y}, cfg.dt / 10.0,
                                 path.steps() * 10);
    double worst = 0.0;
    for (std::size_t k = 0; k < path.states.size(); ++k) {
      worst = std::max({worst, std::abs(path.states[k].x - ref[10 * k][0]),
                        std::abs(path.states[k].y - ref[10 * k][1])});
    }
    worst_all = std::max(worst_all, worst);
    o.details.push_back(std::string(to_string(hyp)) + ": sup-norm " + num(worst));
  }
  const double t = clock.seconds();
  o.pass = worst_all < 1e-3 && t < 1.0;
  o.summary = "sup-norm Euler(dt=1/999) vs RK4(dt/10) = " + num(worst_all) + " (tol 1e-3), " + num(t, 3) +
              " s (limit 1 s)";
  return o;
}

// 3. Paths stay in the shrunk closed triangle and rarely need projection.
Outcome criterion3() {
  Outcome o{"3"};
  Clock clock;
  auto ranges = SamplingRanges::defaults();
  ranges["sigma1"] = {0.001, 1.0};
  ranges["sigma2"] = {0.001, 1.0};
  std::vector<ParameterSample> sets = sample_parameters(500, ranges, Hypothesis::FSH, kSeed);
  const auto esh = sample_parameters(500, ranges, Hypothesis::ESH, derive_seed(kSeed, 3));
  sets.insert(sets.end(), esh.begin(), esh.end());
  const double eps = 1e-9;
  std::vector<std::size_t> projections(sets.size()), steps(sets.size());
  std::vector<char> inside(sets.size(), 1);
  const InitSampler init = InitSampler::uniform();
  parallel_for(sets.size(), 0, [&](std::size_t i) {
    SimConfig cfg;
    cfg.dt = 1.0 / 999.0;
    cfg.t_end = 30.0;
    cfg.seed = derive_seed(kSeed, 1000 + i);
    const Path path = simulate_path(sets[i].model, sets[i].noise, init.draw(ensemble_init_seed(cfg.seed)), cfg);
    for (const auto& s : path.states) {
      if (!s.in_closed_triangle(eps)) inside[i] = 0;
    }
    projections[i] = path.projections;
    steps[i] = path.steps();
  });
  std::size_t total_proj = 0, total_steps = 0, outside = 0;
  double worst_rate = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    total_proj += projections[i];
    total_steps += steps[i];
    outside += inside[i] ? 0 : 1;
    worst_rate = std::max(worst_rate, static_cast<double>(projections[i]) / static_cast<double>(steps[i]));
  }
  const double rate = static_cast<double>(total_proj) / static_cast<double>(total_steps);
  const double t = clock.seconds();
  o.pass = outside == 0 && rate < 0.01 && t < 300.0;
  o.summary = std::to_string(sets.size()) + " parameter sets, " + std::to_string(outside) +
              " paths left the closed triangle; projections on " + num(100.0 * rate, 4) +
              "% of steps (limit 1%), " + num(t, 3) + " s";
  o.details.push_back("worst single-path projection rate " + num(100.0 * worst_rate, 4) + "%");
  return o;
}

// Grid with step 0.02 inside the parameter's figure range.
SweepSpec preset_sweep(Hypothesis hyp, SweepParameter param, double lo, double hi) {
  SweepSpec s;
  s.parameter = param;
  s.lo = lo;
  s.hi = hi;
  s.grid_size = static_cast<std::size_t>(std::llround((hi - lo) / 0.02)) + 1;
  s.paths_per_point = 1000;
  s.horizon = 30.0;
  s.base = preset_paper4(hyp);
  s.base_noise = preset_paper4_noise();
  s.initial = kPaper4Initial;
  s.seed = kSeed;
  s.mc.dt = 1.0 / 99.0;
  return s;
}

SweepSpec preset_sweep(Hypothesis hyp, SweepParameter param) {
  switch (param) {
    case SweepParameter::Lambda: return preset_sweep(hyp, param, 0.02, 2.0);
    case SweepParameter::Alpha:
    case SweepParameter::Sigma: return preset_sweep(hyp, param, 0.02, 3.0);
    default: return preset_sweep(hyp, param, 0.01, 0.99);
  }
}

std::string describe(const std::vector<Crossing>& cs) {
  if (cs.empty()) return "none";
  std::string s;
  for (const auto& c : cs) {
    if (!s.empty()) s += ", ";
    s += num(c.location, 4) + " (" + std::string(to_string(c.direction)) + ")";
  }
  return s;
}

struct TableCheck {
  SweepParameter param;
  double expected;
};

Outcome table_criterion(const std::string& id, Hypothesis hyp, const std::vector<TableCheck>& checks) {
  Outcome o{id};
  o.pass = true;
  Clock clock;
  std::vector<std::string> bad;
  for (const auto& c : checks) {
    const auto cs = find_sign_changes(sweep(preset_sweep(hyp, c.param)));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : cs) best = std::min(best, std::abs(x.location - c.expected));
    const bool ok = best <= 0.05;
    if (!ok) bad.emplace_back(to_string(c.param));
    o.pass = o.pass && ok;
    o.details.push_back(std::string(ok ? "ok   " : "miss ") + std::string(to_string(c.param)) +
                        ": expected " + num(c.expected, 4) + " +-0.05, detected " + describe(cs));
  }
  o.summary = std::string(to_string(hyp)) + " sweeps, 1000 paths/point, grid step 0.02, dt 1/99; " +
              (bad.empty() ? std::string("all crossings within tolerance") : "outside tolerance: ");
  for (std::size_t i = 0; i < bad.size(); ++i) o.summary += (i ? ", " : "") + bad[i];
  o.summary += " (" + num(clock.seconds(), 3) + " s)";
  return o;
}

Outcome criterion4() {
  return table_criterion("4", Hypothesis::FSH,
                         {{SweepParameter::Eta, 0.4381},
                          {SweepParameter::Delta, 0.3713},
                          {SweepParameter::Lambda, 0.1934},
                          {SweepParameter::Alpha, 2.2026}});
}

Outcome criterion5() {
  Outcome o = table_criterion("5", Hypothesis::ESH,
                              {{SweepParameter::Delta, 0.7661},
                               {SweepParameter::Lambda, 0.4081},
                               {SweepParameter::Gamma, 0.2928}});
  const auto cs = find_sign_changes(sweep(preset_sweep(Hypothesis::ESH, SweepParameter::Sigma)));
  const bool ok = cs.empty();
  o.details.push_back(std::string(ok ? "ok   " : "miss ") + "sigma over (0,3]: expected no crossing, detected " +
                      describe(cs));
  o.pass = o.pass && ok;
  o.summary += ok ? "; ESH sigma sweep has no crossing" : "; ESH sigma sweep crosses";
  return o;
}

Outcome criterion6() {
  Outcome o{"6"};
  Clock clock;
  const auto cs = find_sign_changes(sweep(preset_sweep(Hypothesis::FSH, SweepParameter::Sigma, 1.0, 3.0)));
  o.pass = cs.size() == 2 && std::abs(cs[0].location - 1.88) <= 0.15 && std::abs(cs[1].location - 2.10) <= 0.15;
  o.summary = "FSH sigma sweep 1..3: " + std::to_string(cs.size()) +
              " crossings (expected 2 near 1.88 and 2.10 +-0.15), " + num(clock.seconds(), 3) + " s";
  o.details.push_back("detected " + describe(cs));
  return o;
}

// 7. Per-layer finite-difference gradient check.
Outcome criterion7() {
  Outcome o{"7"};
  Clock clock;
  double worst_all = 0.0;
  std::size_t largest = 0;
  for (Pooling pool : {Pooling::Average, Pooling::Flatten}) {
    ScnnConfig cfg;
    cfg.length = 30;
    cfg.conv = {{4, 3, 1}, {4, 3, 2}};
    cfg.dense = {6};
    cfg.pooling = pool;
    cfg.output_dim = pool == Pooling::Average ? 8 : 2;
    cfg.seed = kSeed;
    if (pool == Pooling::Flatten) cfg.dense = {3};
    Scnn net(cfg);
    largest = std::max(largest, net.parameter_count());
    Rng rng(kSeed);
    for (double& v : net.output_scale()) v = rng.uniform(0.5, 2.0);
    SeriesBatch x(4, 2, cfg.length);
    for (double& v : x.data) v = rng.uniform(-1.0, 0.0);
    Matrix y(4, cfg.output_dim);
    for (double& v : y.data()) v = rng.uniform(-1.0, 1.0);
    const auto grads = net.backward(x, y);
    const double h = 1e-5;
    for (std::size_t a = 0; a < net.weights().size(); ++a) {
      double worst = 0.0;
      auto& vals = net.weights()[a].values;
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + h;
        const double up = mse_loss(net.forward(x), y);
        vals[i] = keep - h;
        const double down = mse_loss(net.forward(x), y);
        vals[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(grads[a][i]), 1e-7});
        worst = std::max(worst, std::abs(fd - grads[a][i]) / scale);
      }
      worst_all = std::max(worst_all, worst);
      o.details.push_back(std::string(to_string(pool)) + " " + net.weights()[a].name + ": max rel err " + num(worst, 3));
    }
  }
  const double t = clock.seconds();
  o.pass = worst_all < 1e-4 && largest <= 500 && t < 10.0;
  o.summary = "max relative error " + num(worst_all, 3) + " (tol 1e-4) on models with <= " + std::to_string(largest) +
              " weights, " + num(t, 3) + " s (limit 10 s)";
  return o;
}

struct TaskResult {
  Metrics scnn, mean, knn;
  double normalized = 0.0;  // mean over targets of MSE_j / Var_j(test labels)
};

TaskResult run_task(const Dataset& ds, const Split& split, Target target) {
  const TaskData task = prepare_task(ds, split, target);
  ScnnConfig net;
  net.length = ds.meta.feature_length();
  net.output_dim = target_dim(target);
  net.seed = kSeed;
  TrainConfig tc;
  tc.shuffle_seed = kSeed;
  const TrainedModel m = fit(net, task.train_x, task.train_y, tc);
  TaskResult r;
  r.scnn = evaluate(m.net, task.test_x, task.test_y);
  r.mean = evaluate_predictions(mean_predictor(task.train_y, task.test_y.rows()), task.test_y);
  r.knn = evaluate_predictions(
      knn_predict(flatten_series(task.train_x), task.train_y, flatten_series(task.test_x), 10), task.test_y);
  const auto var = column_variances(task.test_y);
  for (std::size_t j = 0; j < var.size(); ++j) r.normalized += r.scnn.per_target_mse[j] / var[j];
  r.normalized /= static_cast<double>(var.size());
  return r;
}

std::vector<Outcome> criterion8() {
  Outcome a{"8a"}, b{"8b"}, c{"8c"}, d{"8d"};
  a.pass = b.pass = c.pass = d.pass = true;
  Clock clock;
  const double identity = 2.0 * 0.1 * 0.1 / 12.0;
  for (Hypothesis hyp : {Hypothesis::FSH, Hypothesis::ESH}) {
    const std::string h(to_string(hyp));
    BuildOptions opt;
    opt.n2 = 5;
    opt.T = 30;
    opt.seed = kSeed;
    const Dataset ds = build_dataset(sample_parameters(500, SamplingRanges::defaults(), hyp, kSeed), opt);
    const Split split = split_dataset(ds.rows(), 0.2, kSeed);
    const TaskResult p = run_task(ds, split, Target::Params8);
    const TaskResult s = run_task(ds, split, Target::Noise2);

    const double ra = p.scnn.test_mse / p.mean.test_mse;
    a.pass = a.pass && ra < 0.5;
    a.details.push_back(h + ": SCNN " + num(p.scnn.test_mse) + " / mean predictor " + num(p.mean.test_mse) +
                        " = " + num(ra, 4) + " (need < 0.5); kNN " + num(p.knn.test_mse));

    const double rb = s.scnn.test_mse / s.mean.test_mse;
    const double rel = std::abs(s.mean.test_mse - identity) / identity;
    b.pass = b.pass && rb < 0.5 && rel <= 0.3;
    b.details.push_back(h + ": SCNN " + num(s.scnn.test_mse) + " / mean predictor " + num(s.mean.test_mse) +
                        " = " + num(rb, 4) + " (need < 0.5); mean predictor vs 2(0.1)^2/12 = " + num(identity) +
                        " off by " + num(100.0 * rel, 3) + "% (limit 30%)");

    c.pass = c.pass && s.scnn.test_mse < s.knn.test_mse;
    c.details.push_back(h + ": SCNN " + num(s.scnn.test_mse) + " vs kNN(k=10) " + num(s.knn.test_mse));

    d.pass = d.pass && s.normalized < p.normalized;
    d.details.push_back(h + ": normalized noise MSE " + num(s.normalized, 4) + " vs normalized parameter MSE " +
                        num(p.normalized, 4));
  }
  const std::string t = " (" + num(clock.seconds(), 4) + " s for both hypotheses, limit 1200 s)";
  a.summary = "SCNN 8-parameter MSE below half the mean predictor" + t;
  b.summary = "SCNN noise MSE below half the mean predictor, mean predictor near the uniform-variance identity";
  c.summary = "SCNN beats kNN (k=10) on the noise task";
  d.summary = "variance-normalized noise MSE below variance-normalized parameter MSE";
  if (clock.seconds() > 1200.0) a.pass = false;
  return {a, b, c, d};
}

// 9. Byte-identical artifacts when the CLI pipeline is rerun.
int run_cli(const std::string& args) {
  const int status = std::system((std::string(SFTM_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> pipeline_digests(const fs::path& root) {
  fs::remove_all(root);
  fs::create_directories(root);
  const auto data = (root / "data").string();
  const auto model = (root / "model").string();
  const auto metrics = (root / "metrics.json").string();
  const auto sweep_dir = (root / "sweep").string();
  const auto path = (root / "path.csv").string();
  const std::vector<std::string> steps = {
      "simulate --preset paper4 --seed 9 --paths 3 --t-end 5 --out " + path,
      "sweep --preset paper4 --parameter eta --grid 6 --lo 0.3 --hi 0.7 --paths 20 --seed 9 --out-dir " + sweep_dir,
      "gendata --hypothesis esh --n1 40 --n2 3 --seed 9 --out-dir " + data,
      "train --data " + data + " --target params8 --epochs 3 --split-seed 9 --weight-seed 9 --shuffle-seed 9 --out-dir " +
          model,
      "eval --model " + model + " --data " + data + " --baselines --out " + metrics};
  for (const auto& s : steps) {
    if (run_cli(s) != 0) throw std::runtime_error("pipeline step failed: " + s);
  }
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.find("manifest") != std::string::npos) continue;  // holds timings
    out[fs::relative(e.path(), root).string()] = io::sha256_file(e.path());
  }
  return out;
}

Outcome criterion9() {
  Outcome o{"9"};
  const auto base = fs::temp_directory_path() / "sftm_acceptance_determinism";
  try {
    const auto first = pipeline_digests(base / "a");
    const auto second = pipeline_digests(base / "b");
    std::size_t differing = 0;
    for (const auto& [name, digest] : first) {
      const auto it = second.find(name);
      if (it == second.end() || it->second != digest) {
        ++differing;
        o.details.push_back("differs: " + name);
      }
    }
    o.pass = differing == 0 && first.size() == second.size() && !first.empty();
    o.summary = std::to_string(first.size()) + " artifacts (path, sweep, dataset, model, metrics) compared, " +
                std::to_string(differing) + " differ";
  } catch (const std::exception& e) {
    o.pass = false;
    o.summary = e.what();
  }
  fs::remove_all(base);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(argv[i]);
  const auto enabled = [&](const std::string& id) { return wanted.empty() || wanted.count(id) > 0; };

  const std::vector<std::pair<std::string, std::function<std::vector<Outcome>()>>> suite = {
      {"1", [] { return std::vector<Outcome>{criterion1()}; }},
      {"2", [] { return std::vector<Outcome>{criterion2()}; }},
      {"3", [] { return std::vector<Outcome>{criterion3()}; }},
      {"4", [] { return std::vector<Outcome>{criterion4()}; }},
      {"5", [] { return std::vector<Outcome>{criterion5()}; }},
      {"6", [] { return std::vector<Outcome>{criterion6()}; }},
      {"7", [] { return std::vector<Outcome>{criterion7()}; }},
      {"8", criterion8},
      {"9", [] { return std::vector<Outcome>{criterion9()}; }},
  };
  std::size_t passed = 0, failed = 0;
  for (const auto& [id, fn] : suite) {
    if (!enabled(id)) continue;
    std::vector<Outcome> outcomes;
    try {
      outcomes = fn();
    } catch (const std::exception& e) {
      outcomes = {Outcome{id, false, std::string("error: ") + e.what(), {}}};
    }
    for (const auto& o : outcomes) {
      report(o);
      (o.pass ? passed : failed)++;
    }
  }
  std::cout << passed << " passed, " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}
