#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sftm/analysis.hpp"
#include "sftm/dataset.hpp"
#include "sftm/error.hpp"
#include "sftm/io_util.hpp"
#include "sftm/knn.hpp"
#include "sftm/model.hpp"
#include "sftm/model_io.hpp"
#include "sftm/rng.hpp"
#include "sftm/sim.hpp"
#include "sftm/training.hpp"

namespace sftm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Configuration: defaults, then an optional JSON file, then explicit flags.

json load_config_file(const fs::path& file) {
  json j;
  try {
    j = json::parse(io::read_file(file));
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(file.string() + ": configuration must be a JSON object");
  // A manifest from an earlier run carries its resolved configuration.
  if (j.contains("command") && j.contains("config")) return j.at("config");
  return j;
}

class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_file_, "JSON configuration file (flags override it)");
  }

  template <typename T>
  CLI::Option* add(const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(name, *value, help);
    setters_.push_back([opt, value, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  CLI::Option* toggle(const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app_->add_flag(name, *value, help);
    setters_.push_back([opt, value, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  void custom(std::function<void(json&)> fn) { setters_.push_back(std::move(fn)); }
  CLI::App* app() const { return app_; }

  json resolve(json defaults) const {
    if (!config_file_.empty()) defaults.merge_patch(load_config_file(config_file_));
    for (const auto& s : setters_) s(defaults);
    return defaults;
  }

 private:
  CLI::App* app_;
  std::string config_file_;
  std::vector<std::function<void(json&)>> setters_;
};

template <typename T>
T get(const json& cfg, const std::string& pointer) {
  const json::json_pointer ptr(pointer);
  if (!cfg.contains(ptr) || cfg.at(ptr).is_null()) throw ConfigError("missing configuration value " + pointer);
  try {
    return cfg.at(ptr).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("configuration value " + pointer + " has the wrong type: " + cfg.at(ptr).dump());
  }
}

// ---------------------------------------------------------------------------
// Model parameters shared by simulate and sweep.

void add_model_flags(Flags& f) {
  f.add<std::string>("--preset", "/preset", "Parameter bundle: paper4");
  f.add<std::string>("--hypothesis", "/hypothesis", "fsh or esh");
  auto params = std::make_shared<std::vector<std::string>>();
  f.app()->add_option("--param", *params, "Model parameter as name=value (repeatable)");
  f.custom([params](json& j) {
    for (const std::string& kv : *params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--param expects name=value, got '" + kv + "'");
      const std::string name = kv.substr(0, eq);
      ModelParams probe;
      probe.by_name(name);  // rejects unknown names
      j["params"][name] = io::parse_double(kv.substr(eq + 1));
    }
  });
  f.add<double>("--sigma1", "/noise/sigma1", "Forest noise intensity");
  f.add<double>("--sigma2", "/noise/sigma2", "Agriculture noise intensity");
  f.add<double>("--x0", "/initial/x", "Initial forest proportion");
  f.add<double>("--y0", "/initial/y", "Initial agricultural proportion");
}

json model_defaults() {
  return {{"preset", nullptr}, {"hypothesis", "fsh"}, {"params", json::object()},
          {"noise", json::object()}, {"initial", json::object()}};
}

struct ModelSetup {
  ModelParams params;
  NoiseParams noise;
  LandState initial;
};

/// Expands the preset and writes every resolved value back into cfg.
ModelSetup resolve_model(json& cfg) {
  const Hypothesis hyp = parse_hypothesis(get<std::string>(cfg, "/hypothesis"));
  const json& preset = cfg.at("preset");
  ModelSetup m;
  m.params.hypothesis = hyp;
  std::vector<std::string> missing;
  json params = cfg.value("params", json::object());
  json noise = cfg.value("noise", json::object());
  json init = cfg.value("initial", json::object());
  if (!preset.is_null()) {
    if (preset != "paper4") throw ConfigError("unknown preset " + preset.dump() + " (expected paper4)");
    const ModelParams p4 = preset_paper4(hyp);
    const NoiseParams n4 = preset_paper4_noise();
    for (auto name : ModelParams::kNames) {
      if (!params.contains(name)) params[std::string(name)] = p4.by_name(name);
    }
    if (!noise.contains("sigma1")) noise["sigma1"] = n4.sigma1;
    if (!noise.contains("sigma2")) noise["sigma2"] = n4.sigma2;
    if (!init.contains("x")) init["x"] = kPaper4Initial.x;
    if (!init.contains("y")) init["y"] = kPaper4Initial.y;
  }
  for (auto name : ModelParams::kNames) {
    if (!params.contains(name)) missing.emplace_back(name);
  }
  for (const char* k : {"sigma1", "sigma2"}) {
    if (!noise.contains(k)) missing.emplace_back(k);
  }
  for (const char* k : {"x", "y"}) {
    if (!init.contains(k)) missing.push_back(std::string("x0/y0 (") + k + ")");
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw ConfigError("missing model settings: " + list + " (use --preset paper4 or set them)");
  }
  for (auto name : ModelParams::kNames) m.params.by_name(name) = params.at(std::string(name)).get<double>();
  m.noise = {noise.at("sigma1").get<double>(), noise.at("sigma2").get<double>()};
  m.initial = {init.at("x").get<double>(), init.at("y").get<double>()};
  cfg["params"] = params;
  cfg["noise"] = noise;
  cfg["initial"] = init;
  return m;
}

/// validate_params, except that zero noise (the deterministic limit) is allowed.
void require_valid(const ModelSetup& m) {
  ValidationResult v = validate_model_params(m.params);
  if (!(m.noise.sigma1 >= 0.0 && std::isfinite(m.noise.sigma1))) v.violations.push_back("sigma1>=0");
  if (!(m.noise.sigma2 >= 0.0 && std::isfinite(m.noise.sigma2))) v.violations.push_back("sigma2>=0");
  if (!m.initial.in_triangle()) v.violations.push_back("initial state in open triangle");
  if (!v.ok()) throw ConfigError("invalid parameters: " + v.message());
}

// ---------------------------------------------------------------------------
// Outputs and manifests.

struct Run {
  std::string command;
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  json inputs = json::array();
  json outputs = json::array();

  void input(const fs::path& p) { inputs.push_back({{"path", p.string()}, {"sha256", io::sha256_file(p)}}); }
  void output(const fs::path& p) { outputs.push_back({{"path", p.string()}, {"sha256", io::sha256_file(p)}}); }

  void write_manifest(const fs::path& file, const json& cfg, const json& seeds) const {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json m = {{"command", command},   {"tool_version", kToolVersion}, {"argv", argv},
                    {"config", cfg},        {"seeds", seeds},               {"inputs", inputs},
                    {"outputs", outputs},   {"duration_seconds", seconds}};
    io::write_file_atomic(file, m.dump(2) + "\n");
  }
};

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path parent_dir(const fs::path& file) {
  const fs::path p = file.parent_path();
  return prepare_dir(p.empty() ? fs::path(".") : p);
}

fs::path manifest_for(const fs::path& file) {
  fs::path m = file;
  m += ".manifest.json";
  return m;
}

std::string fmt(double v) { return io::format_double(v); }

const std::vector<std::string> kDatasetFiles = {"meta.json", "A.csv", "F.csv", "P.csv", "Sigma.csv"};

// ---------------------------------------------------------------------------
// simulate

void cmd_simulate(const json& resolved, const fs::path& out, Run& run) {
  json cfg = resolved;
  const ModelSetup m = resolve_model(cfg);
  require_valid(m);
  SimConfig sim;
  sim.dt = get<double>(cfg, "/dt");
  sim.t_end = get<double>(cfg, "/t_end");
  sim.seed = get<std::uint64_t>(cfg, "/seed");
  sim.boundary_epsilon = get<double>(cfg, "/boundary_epsilon");
  sim.validate();
  const auto paths = get<std::size_t>(cfg, "/paths");
  const std::string init = get<std::string>(cfg, "/init");
  if (paths < 1) throw ConfigError("paths must be >= 1");
  if (init != "fixed" && init != "uniform") throw ConfigError("init must be fixed or uniform");

  io::DirectoryLock lock(parent_dir(out));
  std::string csv;
  if (paths == 1 && init == "fixed") {
    const Path p = simulate_path(m.params, m.noise, m.initial, sim);
    csv = "t,x,y\n";
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      csv += fmt(p.times[k]) + "," + fmt(p.states[k].x) + "," + fmt(p.states[k].y) + "\n";
    }
  } else {
    const InitSampler sampler = init == "fixed" ? InitSampler::fixed_at(m.initial) : InitSampler::uniform();
    const auto ens = simulate_ensemble(m.params, m.noise, sampler, sim, paths,
                                       get<unsigned>(cfg, "/threads"));
    csv = "path_id,t,x,y\n";
    for (std::size_t i = 0; i < ens.size(); ++i) {
      const std::string id = std::to_string(i) + ",";
      for (std::size_t k = 0; k < ens[i].times.size(); ++k) {
        csv += id + fmt(ens[i].times[k]) + "," + fmt(ens[i].states[k].x) + "," +
               fmt(ens[i].states[k].y) + "\n";
      }
    }
  }
  io::write_file_atomic(out, csv);
  run.output(out);
  run.write_manifest(manifest_for(out), cfg, {{"seed", sim.seed}});
}

// ---------------------------------------------------------------------------
// sweep and threshold

json crossings_json(const std::string& parameter, const std::vector<Crossing>& cs,
                    const std::vector<CrossingInterval>* ci) {
  json list = json::array();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    json e = {{"parameter", parameter},
              {"crossing", cs[i].location},
              {"direction", to_string(cs[i].direction)}};
    if (ci) {
      for (const auto& c : *ci) {
        if (c.crossing.location == cs[i].location) {
          e["ci_lower"] = c.lower;
          e["ci_upper"] = c.upper;
        }
      }
    }
    list.push_back(e);
  }
  return list;
}

void cmd_sweep(const json& resolved, const fs::path& out_dir, Run& run) {
  json cfg = resolved;
  const ModelSetup m = resolve_model(cfg);
  SweepSpec spec;
  spec.parameter = parse_sweep_parameter(get<std::string>(cfg, "/parameter"));
  const SweepRange range = default_sweep_range(spec.parameter);
  if (cfg.at("lo").is_null()) cfg["lo"] = range.lo;
  if (cfg.at("hi").is_null()) cfg["hi"] = range.hi;
  spec.lo = get<double>(cfg, "/lo");
  spec.hi = get<double>(cfg, "/hi");
  spec.grid_size = get<std::size_t>(cfg, "/grid");
  spec.paths_per_point = get<std::size_t>(cfg, "/paths");
  spec.horizon = get<double>(cfg, "/horizon");
  spec.base = m.params;
  spec.base_noise = m.noise;
  spec.initial = m.initial;
  spec.seed = get<std::uint64_t>(cfg, "/seed");
  spec.common_random_numbers = get<bool>(cfg, "/crn");
  spec.mc.dt = get<double>(cfg, "/dt");
  spec.mc.threads = get<unsigned>(cfg, "/threads");
  spec.validate();
  const auto replicates = get<std::size_t>(cfg, "/bootstrap");

  io::DirectoryLock lock(prepare_dir(out_dir));
  const SweepSamples samples = sweep_samples(spec);
  const SweepCurve curve = samples.curve();
  std::string csv = "param_value,mean_G,stderr,skipped\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    csv += fmt(curve.values[i]) + "," + fmt(curve.mean[i]) + "," + fmt(curve.std_error[i]) + "," +
           (curve.skipped[i] ? "1" : "0") + "\n";
  }
  io::write_file_atomic(out_dir / "curve.csv", csv);
  const auto cs = find_sign_changes(curve);
  std::vector<CrossingInterval> ci;
  if (replicates > 0) ci = bootstrap_crossings(samples, replicates, derive_seed(spec.seed, 0xB007));
  const json th = crossings_json(curve.parameter, cs, replicates > 0 ? &ci : nullptr);
  io::write_file_atomic(out_dir / "thresholds.json", th.dump(2) + "\n");
  run.output(out_dir / "curve.csv");
  run.output(out_dir / "thresholds.json");
  run.write_manifest(out_dir / "manifest.json", cfg, {{"seed", spec.seed}});
  for (const auto& c : cs) {
    std::cout << curve.parameter << " crossing at " << fmt(c.location) << " (" << to_string(c.direction)
              << ")\n";
  }
  if (cs.empty()) std::cout << curve.parameter << ": no sign change\n";
}

void cmd_threshold(const std::string& parameter, const fs::path& curve_file, const fs::path& out,
                   Run& run) {
  const io::Table t = io::read_table_csv(curve_file);
  SweepCurve curve;
  curve.parameter = std::string(to_string(parse_sweep_parameter(parameter)));
  curve.values = t.column("param_value");
  curve.mean = t.column("mean_G");
  curve.std_error = t.column("stderr");
  for (double s : t.column("skipped")) curve.skipped.push_back(s != 0.0);
  run.input(curve_file);
  io::DirectoryLock lock(parent_dir(out));
  const json th = crossings_json(curve.parameter, find_sign_changes(curve), nullptr);
  io::write_file_atomic(out, th.dump(2) + "\n");
  run.output(out);
  run.write_manifest(manifest_for(out), {{"parameter", curve.parameter}}, json::object());
}

// ---------------------------------------------------------------------------
// gendata

void cmd_gendata(const json& resolved, const fs::path& out_dir, Run& run) {
  json cfg = resolved;
  if (!cfg.at("preset").is_null()) {
    const std::string p = get<std::string>(cfg, "/preset");
    if (p != "desk" && p != "paper") throw ConfigError("unknown gendata preset '" + p + "' (desk or paper)");
    if (cfg.at("n1").is_null()) cfg["n1"] = p == "desk" ? 500 : 20000;
    if (cfg.at("n2").is_null()) cfg["n2"] = p == "desk" ? 5 : 25;
  }
  if (cfg.at("n1").is_null()) cfg["n1"] = 500;
  if (cfg.at("n2").is_null()) cfg["n2"] = 5;
  const Hypothesis hyp = parse_hypothesis(get<std::string>(cfg, "/hypothesis"));
  SamplingRanges ranges = SamplingRanges::defaults();
  for (auto& [name, b] : cfg.at("ranges").items()) {
    if (!b.is_array() || b.size() != 2) throw ConfigError("range for " + name + " must be [lo, hi]");
    ranges[name] = {b.at(0).get<double>(), b.at(1).get<double>()};
  }
  json full_ranges = json::object();
  for (std::size_t i = 0; i < SamplingRanges::kNames.size(); ++i) {
    full_ranges[std::string(SamplingRanges::kNames[i])] = {ranges.bounds[i].lo, ranges.bounds[i].hi};
  }
  cfg["ranges"] = full_ranges;
  ranges.validate();

  BuildOptions opt;
  opt.n2 = get<std::size_t>(cfg, "/n2");
  opt.T = get<std::size_t>(cfg, "/T");
  opt.sim.dt = get<double>(cfg, "/dt");
  opt.seed = get<std::uint64_t>(cfg, "/seed");
  opt.threads = get<unsigned>(cfg, "/threads");
  opt.initial_policy = parse_initial_policy(get<std::string>(cfg, "/initial_policy"));
  opt.fixed_initial = {get<double>(cfg, "/initial/x"), get<double>(cfg, "/initial/y")};
  opt.sim.validate();
  if (!opt.fixed_initial.in_triangle()) throw ConfigError("fixed initial state must lie in the open triangle");
  const auto n1 = get<std::size_t>(cfg, "/n1");
  if (n1 < 1) throw ConfigError("n1 must be >= 1");

  io::DirectoryLock lock(prepare_dir(out_dir));
  const auto samples = sample_parameters(n1, ranges, hyp, opt.seed);
  const Dataset ds = build_dataset(samples, opt, ranges);
  save_dataset(ds, out_dir);
  for (const auto& f : kDatasetFiles) run.output(out_dir / f);
  run.write_manifest(out_dir / "manifest.json", cfg, {{"seed", opt.seed}});
  std::cout << "wrote " << ds.rows() << " rows to " << out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// train, eval, predict

std::vector<ConvLayerSpec> conv_from_json(const json& j) {
  std::vector<ConvLayerSpec> out;
  for (const auto& l : j) {
    out.push_back({l.at("out_channels").get<std::size_t>(), l.at("kernel").get<std::size_t>(),
                   l.value("stride", std::size_t{1})});
  }
  return out;
}

void cmd_train(const json& resolved, const fs::path& out_dir, Run& run) {
  json cfg = resolved;
  const fs::path data = get<std::string>(cfg, "/data");
  const Target target = parse_target(get<std::string>(cfg, "/target"));
  const double test_fraction = get<double>(cfg, "/test_fraction");
  const auto split_seed = get<std::uint64_t>(cfg, "/split_seed");

  ScnnConfig net;
  net.conv = conv_from_json(cfg.at("scnn").at("conv"));
  net.activation = parse_activation(get<std::string>(cfg, "/scnn/activation"));
  net.pooling = parse_pooling(get<std::string>(cfg, "/scnn/pooling"));
  net.dense = get<std::vector<std::size_t>>(cfg, "/scnn/dense");
  net.seed = get<std::uint64_t>(cfg, "/scnn/seed");
  net.output_dim = target_dim(target);

  TrainConfig tc;
  tc.epochs = get<std::size_t>(cfg, "/train/epochs");
  tc.batch_size = get<std::size_t>(cfg, "/train/batch_size");
  tc.learning_rate = get<double>(cfg, "/train/learning_rate");
  tc.optimizer = parse_optimizer(get<std::string>(cfg, "/train/optimizer"));
  tc.beta1 = get<double>(cfg, "/train/beta1");
  tc.beta2 = get<double>(cfg, "/train/beta2");
  tc.epsilon = get<double>(cfg, "/train/epsilon");
  tc.shuffle_seed = get<std::uint64_t>(cfg, "/train/shuffle_seed");
  tc.validation_fraction = get<double>(cfg, "/train/validation_fraction");
  tc.standardize_targets = get<bool>(cfg, "/train/standardize_targets");
  tc.validate();

  const Dataset ds = load_dataset(data);
  for (const auto& f : kDatasetFiles) run.input(data / f);
  net.length = ds.meta.feature_length();
  net.validate();
  const Split split = split_dataset(ds.rows(), test_fraction, split_seed);
  const TaskData task = prepare_task(ds, split, target);

  io::DirectoryLock lock(prepare_dir(out_dir));
  TrainedModel model = fit(net, task.train_x, task.train_y, tc);
  model.scaling = task.scaling;
  model.target = target;
  model.hypothesis = ds.meta.hypothesis;
  save_model(model, out_dir);
  const json split_json = {{"test_fraction", test_fraction}, {"seed", split_seed},
                           {"rows", ds.rows()},              {"test", split.test}};
  io::write_file_atomic(out_dir / "split.json", split_json.dump(2) + "\n");
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name != "manifest.json" && name != ".lock") run.output(entry.path());
  }
  std::sort(run.outputs.begin(), run.outputs.end(),
            [](const json& a, const json& b) { return a.at("path") < b.at("path"); });
  run.write_manifest(out_dir / "manifest.json", cfg,
                     {{"split_seed", split_seed}, {"weight_seed", net.seed}, {"shuffle_seed", tc.shuffle_seed}});
  const auto& last = model.history.back();
  std::cout << "epoch " << model.history.size() << ": train " << fmt(last.train) << ", val "
            << fmt(last.val) << "\n";
}

Split stored_split(const fs::path& model_dir, std::size_t rows) {
  const fs::path file = model_dir / "split.json";
  if (!fs::exists(file)) throw IoError("model directory has no split.json: " + model_dir.string());
  const json j = json::parse(io::read_file(file));
  if (j.at("rows").get<std::size_t>() != rows) {
    throw ConfigError("dataset has " + std::to_string(rows) + " rows but the model was trained on " +
                      j.at("rows").dump());
  }
  Split s;
  s.test = j.at("test").get<std::vector<std::size_t>>();
  std::vector<bool> is_test(rows, false);
  for (std::size_t r : s.test) {
    if (r >= rows) throw FormatError("split.json: row index out of range");
    is_test[r] = true;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (!is_test[r]) s.train.push_back(r);
  }
  return s;
}

json metrics_json(const Metrics& m) {
  return {{"test_mse", m.test_mse}, {"per_target_mse", m.per_target_mse}};
}

void cmd_eval(const fs::path& model_dir, const fs::path& data, const fs::path& out, bool baselines,
              std::size_t k, Run& run) {
  const TrainedModel model = load_model(model_dir);
  if (!model.scaling) throw ConfigError("model has no stored scaling stats");
  const Dataset ds = load_dataset(data);
  for (const auto& f : kDatasetFiles) run.input(data / f);
  run.input(model_dir / "config.json");
  const Split split = stored_split(model_dir, ds.rows());
  const auto& s = *model.scaling;
  const SeriesBatch test_x = make_series_batch(apply_scaling(ds.A.select_rows(split.test), s.max_A, s.min_A),
                                               apply_scaling(ds.F.select_rows(split.test), s.max_F, s.min_F));
  const Matrix test_y = select_labels(ds, model.target, split.test);
  json j = metrics_json(evaluate(model.net, test_x, test_y));
  if (baselines) {
    const Matrix train_y = select_labels(ds, model.target, split.train);
    const SeriesBatch train_x =
        make_series_batch(apply_scaling(ds.A.select_rows(split.train), s.max_A, s.min_A),
                          apply_scaling(ds.F.select_rows(split.train), s.max_F, s.min_F));
    j["mean_predictor"] = metrics_json(evaluate_predictions(mean_predictor(train_y, test_y.rows()), test_y));
    j["knn"] = metrics_json(evaluate_predictions(
        knn_predict(flatten_series(train_x), train_y, flatten_series(test_x), k), test_y));
    j["knn"]["k"] = k;
  }
  io::DirectoryLock lock(parent_dir(out));
  io::write_file_atomic(out, j.dump(2) + "\n");
  run.output(out);
  run.write_manifest(manifest_for(out), {{"model", model_dir.string()}, {"data", data.string()},
                                         {"baselines", baselines}, {"k", k}},
                     json::object());
  std::cout << "test_mse " << fmt(j.at("test_mse").get<double>()) << "\n";
}

void cmd_predict(const fs::path& model_dir, const fs::path& series, const fs::path& out,
                 const std::string& truth_file, Run& run) {
  const TrainedModel model = load_model(model_dir);
  const io::Table t = io::read_table_csv(series);
  run.input(model_dir / "config.json");
  run.input(series);
  const auto est = predict_series(model, t.column("x"), t.column("y"));
  std::vector<std::string> names;
  if (model.target == Target::Params8) {
    for (auto n : ModelParams::kNames) names.emplace_back(n);
  } else {
    names = {"sigma1", "sigma2"};
  }
  std::optional<json> truth;
  if (!truth_file.empty()) {
    truth = load_config_file(truth_file);
    run.input(truth_file);
  }
  std::string csv = truth ? "name,estimate,truth,abs_error\n" : "name,estimate\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    csv += names[i] + "," + fmt(est[i]);
    if (truth) {
      if (!truth->contains(names[i])) throw ConfigError("truth file lacks " + names[i]);
      const double v = truth->at(names[i]).get<double>();
      csv += "," + fmt(v) + "," + fmt(std::abs(est[i] - v));
    }
    csv += "\n";
  }
  io::DirectoryLock lock(parent_dir(out));
  io::write_file_atomic(out, csv);
  run.output(out);
  run.write_manifest(manifest_for(out), {{"model", model_dir.string()}, {"series", series.string()}},
                     json::object());
  std::cout << csv;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Stochastic forest-transition model: simulation, sweeps, datasets and estimators", "sftm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Run run;
  run.argv.assign(argv, argv + argc);
  std::function<void()> action;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate one path or an ensemble to CSV");
  Flags sim_flags(sim);
  add_model_flags(sim_flags);
  sim_flags.add<double>("--dt", "/dt", "Euler-Maruyama step (default 1/999)");
  sim_flags.add<double>("--t-end", "/t_end", "Final time (default 30)");
  sim_flags.add<std::uint64_t>("--seed", "/seed", "Noise seed (default 0)");
  sim_flags.add<std::size_t>("--paths", "/paths", "Ensemble size (default 1)");
  sim_flags.add<std::string>("--init", "/init", "Initial states: fixed or uniform (default fixed)");
  sim_flags.add<double>("--epsilon", "/boundary_epsilon", "Boundary projection margin (default 1e-9)");
  sim_flags.add<unsigned>("--threads", "/threads", "Worker threads, 0 = all (default 0)");
  std::string sim_out;
  sim->add_option("--out", sim_out, "Output CSV")->required();
  sim->callback([&] {
    action = [&] {
      json d = model_defaults();
      d.update({{"dt", 1.0 / 999.0}, {"t_end", 30.0}, {"seed", 0}, {"paths", 1}, {"init", "fixed"},
                {"boundary_epsilon", 1e-9}, {"threads", 0}});
      cmd_simulate(sim_flags.resolve(d), sim_out, run);
    };
  });

  // sweep
  auto* sw = app.add_subcommand("sweep", "Monte-Carlo sweep of E[G(x_T)] with sign-change detection");
  Flags sw_flags(sw);
  add_model_flags(sw_flags);
  sw_flags.add<std::string>("--parameter", "/parameter", "eta, delta, lambda, gamma, alpha or sigma");
  sw_flags.add<double>("--lo", "/lo", "Lower end of the grid");
  sw_flags.add<double>("--hi", "/hi", "Upper end of the grid");
  sw_flags.add<std::size_t>("--grid", "/grid", "Grid points (default 50)");
  sw_flags.add<std::size_t>("--paths", "/paths", "Paths per grid point (default 100)");
  sw_flags.add<double>("--horizon", "/horizon", "T in E[G(x_T)] (default 30)");
  sw_flags.add<std::uint64_t>("--seed", "/seed", "Seed (default 0)");
  sw_flags.add<double>("--dt", "/dt", "Euler-Maruyama step (default 1/99)");
  sw_flags.toggle("--crn,!--no-crn", "/crn", "Common random numbers across grid points (default on)");
  sw_flags.add<std::size_t>("--bootstrap", "/bootstrap", "Bootstrap replicates for crossing intervals (default 0)");
  sw_flags.add<unsigned>("--threads", "/threads", "Worker threads, 0 = all (default 0)");
  std::string sw_out;
  sw->add_option("--out-dir", sw_out, "Output directory")->required();
  sw->callback([&] {
    action = [&] {
      json d = model_defaults();
      d.update({{"parameter", nullptr}, {"lo", nullptr}, {"hi", nullptr}, {"grid", 50}, {"paths", 100},
                {"horizon", 30.0}, {"seed", 0}, {"dt", 1.0 / 99.0}, {"crn", true}, {"bootstrap", 0},
                {"threads", 0}});
      cmd_sweep(sw_flags.resolve(d), sw_out, run);
    };
  });

  // threshold
  auto* th = app.add_subcommand("threshold", "Extract sign changes from an existing curve CSV");
  std::string th_param, th_curve, th_out;
  th->add_option("--parameter", th_param, "Swept parameter name")->required();
  th->add_option("--curve", th_curve, "curve.csv from sweep")->required();
  th->add_option("--out", th_out, "Output thresholds JSON")->required();
  th->callback([&] { action = [&] { cmd_threshold(th_param, th_curve, th_out, run); }; });

  // gendata
  auto* gd = app.add_subcommand("gendata", "Generate a synthetic training dataset");
  Flags gd_flags(gd);
  gd_flags.add<std::string>("--preset", "/preset", "desk (n1=500, n2=5) or paper (n1=20000, n2=25)");
  gd_flags.add<std::string>("--hypothesis", "/hypothesis", "fsh or esh (default fsh)");
  gd_flags.add<std::size_t>("--n1", "/n1", "Parameter sets (default 500)");
  gd_flags.add<std::size_t>("--n2", "/n2", "Noise replicates per set (default 5)");
  gd_flags.add<std::size_t>("--T", "/T", "Observed series length (default 30)");
  gd_flags.add<double>("--dt", "/dt", "Euler-Maruyama step (default 1/99)");
  gd_flags.add<std::uint64_t>("--seed", "/seed", "Seed (default 0)");
  gd_flags.add<std::string>("--initial-policy", "/initial_policy", "fixed or uniform (default fixed)");
  gd_flags.add<double>("--x0", "/initial/x", "Fixed initial forest proportion (default 0.2)");
  gd_flags.add<double>("--y0", "/initial/y", "Fixed initial agricultural proportion (default 0.3)");
  gd_flags.add<unsigned>("--threads", "/threads", "Worker threads, 0 = all (default 0)");
  std::string gd_out;
  gd->add_option("--out-dir", gd_out, "Dataset directory")->required();
  gd->callback([&] {
    action = [&] {
      json d = {{"preset", nullptr}, {"hypothesis", "fsh"}, {"n1", nullptr}, {"n2", nullptr},
                {"T", 30}, {"dt", 1.0 / 99.0}, {"seed", 0}, {"initial_policy", "fixed"},
                {"initial", {{"x", kPaper4Initial.x}, {"y", kPaper4Initial.y}}},
                {"ranges", json::object()}, {"threads", 0}};
      cmd_gendata(gd_flags.resolve(d), gd_out, run);
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "Train the convolutional estimator on a dataset");
  Flags tr_flags(tr);
  tr_flags.add<std::string>("--data", "/data", "Dataset directory");
  tr_flags.add<std::string>("--target", "/target", "params8 or noise2 (default params8)");
  tr_flags.add<double>("--test-fraction", "/test_fraction", "Held-out test share (default 0.2)");
  tr_flags.add<std::uint64_t>("--split-seed", "/split_seed", "Train/test split seed (default 0)");
  tr_flags.add<std::uint64_t>("--weight-seed", "/scnn/seed", "Weight initialisation seed (default 0)");
  tr_flags.add<std::string>("--activation", "/scnn/activation", "relu or tanh (default relu)");
  tr_flags.add<std::string>("--pooling", "/scnn/pooling", "average or flatten (default average)");
  tr_flags.add<std::vector<std::size_t>>("--dense", "/scnn/dense", "Hidden dense widths (default 64)");
  tr_flags.add<std::size_t>("--epochs", "/train/epochs", "Epochs (default 50)");
  tr_flags.add<std::size_t>("--batch-size", "/train/batch_size", "Mini-batch size (default 64)");
  tr_flags.add<double>("--lr", "/train/learning_rate", "Learning rate (default 1e-3)");
  tr_flags.add<std::string>("--optimizer", "/train/optimizer", "adam or sgd (default adam)");
  tr_flags.add<std::uint64_t>("--shuffle-seed", "/train/shuffle_seed", "Batch order seed (default 0)");
  tr_flags.add<double>("--val-fraction", "/train/validation_fraction", "Validation share of training rows (default 0.1)");
  tr_flags.toggle("--standardize,!--no-standardize", "/train/standardize_targets",
                  "Fit the output affine to the label mean and spread (default on)");
  std::string tr_out;
  tr->add_option("--out-dir", tr_out, "Model directory")->required();
  tr->callback([&] {
    action = [&] {
      const ScnnConfig sc;
      const TrainConfig tc;
      json conv = json::array();
      for (const auto& l : sc.conv) {
        conv.push_back({{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}});
      }
      json d = {{"data", nullptr},
                {"target", "params8"},
                {"test_fraction", 0.2},
                {"split_seed", 0},
                {"scnn",
                 {{"conv", conv}, {"activation", "relu"}, {"pooling", "average"}, {"dense", sc.dense}, {"seed", 0}}},
                {"train",
                 {{"epochs", tc.epochs},
                  {"batch_size", tc.batch_size},
                  {"learning_rate", tc.learning_rate},
                  {"optimizer", "adam"},
                  {"beta1", tc.beta1},
                  {"beta2", tc.beta2},
                  {"epsilon", tc.epsilon},
                  {"shuffle_seed", 0},
                  {"validation_fraction", tc.validation_fraction},
                  {"standardize_targets", tc.standardize_targets}}}};
      cmd_train(tr_flags.resolve(d), tr_out, run);
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Test-set metrics of a trained model");
  std::string ev_model, ev_data, ev_out;
  bool ev_baselines = false;
  std::size_t ev_k = 10;
  ev->add_option("--model", ev_model, "Model directory")->required();
  ev->add_option("--data", ev_data, "Dataset directory the model was trained on")->required();
  ev->add_option("--out", ev_out, "Metrics JSON")->required();
  ev->add_flag("--baselines", ev_baselines, "Also report the mean predictor and kNN");
  ev->add_option("--k", ev_k, "kNN neighbours (default 10)");
  ev->callback([&] { action = [&] { cmd_eval(ev_model, ev_data, ev_out, ev_baselines, ev_k, run); }; });

  // predict
  auto* pr = app.add_subcommand("predict", "Estimate parameters from one observed t,x,y series");
  std::string pr_model, pr_series, pr_out, pr_truth;
  pr->add_option("--model", pr_model, "Model directory")->required();
  pr->add_option("--series", pr_series, "CSV with header t,x,y")->required();
  pr->add_option("--out", pr_out, "Prediction CSV")->required();
  pr->add_option("--truth", pr_truth, "JSON object of true values, adds abs_error");
  pr->callback([&] { action = [&] { cmd_predict(pr_model, pr_series, pr_out, pr_truth, run); }; });

  try {
    app.parse(argc, argv);
    for (auto* sub : app.get_subcommands()) run.command = sub->get_name();
    action();
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sftm::cli
