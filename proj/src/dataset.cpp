#include "sftm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "sftm/error.hpp"
#include "sftm/io_util.hpp"
#include "sftm/parallel.hpp"
#include "sftm/rng.hpp"

namespace sftm {

namespace fs = std::filesystem;
using nlohmann::json;

SamplingRanges SamplingRanges::defaults() {
  SamplingRanges r;
  r.bounds = {{
      {0.01, 0.99},   // mu
      {0.01, 0.99},   // h
      {0.01, 0.99},   // eta
      {0.1, 5.0},     // beta
      {0.01, 0.99},   // delta
      {0.01, 2.0},    // lambda
      {0.01, 0.99},   // gamma
      {0.01, 3.0},    // alpha
      {0.001, 0.1},   // sigma1
      {0.001, 0.1},   // sigma2
  }};
  return r;
}

Interval& SamplingRanges::operator[](std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return bounds[i];
  }
  throw ConfigError("unknown sampling range '" + std::string(name) + "'");
}

const Interval& SamplingRanges::operator[](std::string_view name) const {
  return const_cast<SamplingRanges&>(*this)[name];
}

void SamplingRanges::validate() const {
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    const Interval& b = bounds[i];
    const std::string name(kNames[i]);
    const bool unit = name == "mu" || name == "h" || name == "eta" || name == "delta" ||
                      name == "gamma";
    if (!(b.lo <= b.hi)) problems.push_back(name + ": lo > hi");
    if (!(b.lo > 0.0)) problems.push_back(name + ": lower bound must be > 0");
    if (unit && !(b.hi < 1.0)) problems.push_back(name + ": upper bound must be < 1");
    if (!std::isfinite(b.hi)) problems.push_back(name + ": upper bound must be finite");
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid sampling ranges:";
    for (const auto& p : problems) msg << ' ' << p << ';';
    throw ConfigError(msg.str());
  }
}

std::vector<ParameterSample> sample_parameters(std::size_t n1, const SamplingRanges& ranges,
                                               Hypothesis hyp, std::uint64_t seed) {
  if (n1 < 1) throw ConfigError("n1 must be at least 1");
  ranges.validate();
  Rng rng(seed);
  std::vector<ParameterSample> out;
  out.reserve(n1);
  std::size_t attempts = 0;
  while (out.size() < n1) {
    std::array<double, 10> v{};
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Interval& b = ranges.bounds[i];
      v[i] = b.lo == b.hi ? b.lo : rng.uniform(b.lo, b.hi);
    }
    ++attempts;
    ParameterSample s;
    s.model = ModelParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], hyp};
    s.noise = NoiseParams{v[8], v[9]};
    if (validate_params(s.model, s.noise).ok()) {
      out.push_back(s);
    } else if (attempts >= 1000 &&
               static_cast<double>(out.size()) < 0.01 * static_cast<double>(attempts)) {
      std::ostringstream msg;
      msg << "sampling ranges accept only " << out.size() << " of " << attempts
          << " draws under the joint constraints (below 1%)";
      throw ConfigError(msg.str());
    }
  }
  return out;
}

std::string_view to_string(InitialPolicy p) {
  return p == InitialPolicy::Fixed ? "fixed" : "uniform";
}

InitialPolicy parse_initial_policy(std::string_view text) {
  if (text == "fixed") return InitialPolicy::Fixed;
  if (text == "uniform") return InitialPolicy::Uniform;
  throw ConfigError("unknown initial policy '" + std::string(text) + "' (fixed or uniform)");
}

Dataset build_dataset(const std::vector<ParameterSample>& samples, const BuildOptions& opt,
                      const SamplingRanges& ranges) {
  if (opt.n2 < 1) throw ConfigError("n2 must be at least 1");
  if (samples.empty()) throw ConfigError("no parameter samples to simulate");
  if (opt.T < 2) throw ConfigError("T must be at least 2");
  Dataset ds;
  ds.meta.hypothesis = samples.front().model.hypothesis;
  ds.meta.n1 = samples.size();
  ds.meta.n2 = opt.n2;
  ds.meta.T = opt.T;
  ds.meta.dt = opt.sim.dt;
  ds.meta.seed = opt.seed;
  ds.meta.ranges = ranges;
  ds.meta.initial_policy = opt.initial_policy;
  ds.meta.fixed_initial = opt.fixed_initial;

  const std::size_t n = samples.size() * opt.n2;
  const std::size_t width = ds.meta.feature_length();
  const std::size_t offset = width - opt.T;
  ds.A = Matrix(n, width);
  ds.F = Matrix(n, width);
  ds.P = Matrix(n, ModelParams::kCount);
  ds.Sigma = Matrix(n, 2);

  SimConfig sim = opt.sim;
  sim.t_end = static_cast<double>(opt.T);
  const InitSampler uniform = InitSampler::uniform(0.05);

  parallel_for(n, opt.threads, [&](std::size_t k) {
    const ParameterSample& s = samples[k / opt.n2];
    SimConfig row = sim;
    row.seed = derive_seed(opt.seed, k);
    const LandState s0 = opt.initial_policy == InitialPolicy::Fixed
                             ? opt.fixed_initial
                             : uniform.draw(ensemble_init_seed(row.seed));
    ObservationSeries obs;
    try {
      obs = simulate_observations(s.model, s.noise, s0, row, opt.T);
    } catch (const std::exception& e) {
      throw ConfigError("dataset row " + std::to_string(k) + ": " + e.what());
    }
    if (offset) {
      ds.A(k, 0) = s0.x;
      ds.F(k, 0) = s0.y;
    }
    for (std::size_t t = 0; t < opt.T; ++t) {
      ds.A(k, offset + t) = obs.x[t];
      ds.F(k, offset + t) = obs.y[t];
    }
    const auto labels = s.model.to_array();
    std::copy(labels.begin(), labels.end(), ds.P.row(k).begin());
    ds.Sigma(k, 0) = s.noise.sigma1;
    ds.Sigma(k, 1) = s.noise.sigma2;
  });
  return ds;
}

Split split_dataset(std::size_t rows, double fraction, std::uint64_t seed) {
  if (rows < 5) throw ConfigError("split needs at least 5 rows");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("test fraction must be in (0,1)");
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = rows - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows)));
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

double ScalingStats::apply(double v, double max, double min) {
  return max != min ? (v - max) / (max - min) : 0.0;
}

ScalingStats compute_scaling(const Dataset& ds, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw ConfigError("scaling needs at least one training row");
  ScalingStats st;
  st.max_A = st.max_F = -std::numeric_limits<double>::infinity();
  st.min_A = st.min_F = std::numeric_limits<double>::infinity();
  for (std::size_t r : train_rows) {
    for (double v : ds.A.row(r)) {
      st.max_A = std::max(st.max_A, v);
      st.min_A = std::min(st.min_A, v);
    }
    for (double v : ds.F.row(r)) {
      st.max_F = std::max(st.max_F, v);
      st.min_F = std::min(st.min_F, v);
    }
  }
  return st;
}

Matrix apply_scaling(const Matrix& m, double max, double min) {
  Matrix out = m;
  for (double& v : out.data()) v = ScalingStats::apply(v, max, min);
  return out;
}

ScaledFeatures scale_features(const Dataset& ds, const Split& split) {
  ScaledFeatures out;
  out.stats = compute_scaling(ds, split.train);
  const auto& st = out.stats;
  out.train_A = apply_scaling(ds.A.select_rows(split.train), st.max_A, st.min_A);
  out.train_F = apply_scaling(ds.F.select_rows(split.train), st.max_F, st.min_F);
  out.test_A = apply_scaling(ds.A.select_rows(split.test), st.max_A, st.min_A);
  out.test_F = apply_scaling(ds.F.select_rows(split.test), st.max_F, st.min_F);
  return out;
}

namespace {

json meta_to_json(const DatasetMeta& m) {
  json ranges = json::object();
  for (std::size_t i = 0; i < SamplingRanges::kNames.size(); ++i) {
    ranges[std::string(SamplingRanges::kNames[i])] = {m.ranges.bounds[i].lo, m.ranges.bounds[i].hi};
  }
  return json{{"format_version", m.format_version},
              {"hypothesis", std::string(to_string(m.hypothesis))},
              {"n1", m.n1},
              {"n2", m.n2},
              {"T", m.T},
              {"dt", m.dt},
              {"seed", m.seed},
              {"ranges", ranges},
              {"initial_policy", std::string(to_string(m.initial_policy))},
              {"fixed_initial", {m.fixed_initial.x, m.fixed_initial.y}}};
}

DatasetMeta meta_from_json(const json& j) {
  DatasetMeta m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kDatasetFormatVersion) {
    throw VersionError("dataset format_version " + std::to_string(m.format_version) +
                       " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  m.hypothesis = parse_hypothesis(j.at("hypothesis").get<std::string>());
  m.n1 = j.at("n1").get<std::size_t>();
  m.n2 = j.at("n2").get<std::size_t>();
  m.T = j.at("T").get<std::size_t>();
  m.dt = j.at("dt").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const json& ranges = j.at("ranges");
  for (std::size_t i = 0; i < SamplingRanges::kNames.size(); ++i) {
    const json& b = ranges.at(std::string(SamplingRanges::kNames[i]));
    m.ranges.bounds[i] = {b.at(0).get<double>(), b.at(1).get<double>()};
  }
  m.initial_policy = parse_initial_policy(j.at("initial_policy").get<std::string>());
  const json& init = j.at("fixed_initial");
  m.fixed_initial = {init.at(0).get<double>(), init.at(1).get<double>()};
  return m;
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  io::write_matrix_csv(dir / "A.csv", ds.A);
  io::write_matrix_csv(dir / "F.csv", ds.F);
  io::write_matrix_csv(dir / "P.csv", ds.P);
  io::write_matrix_csv(dir / "Sigma.csv", ds.Sigma);
  // meta.json last: its presence marks a complete dataset.
  io::write_file_atomic(dir / "meta.json", meta_to_json(ds.meta).dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "meta.json")) throw IoError("no dataset at " + dir.string());
  Dataset ds;
  try {
    ds.meta = meta_from_json(json::parse(io::read_file(dir / "meta.json")));
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }
  const std::size_t n = ds.meta.n1 * ds.meta.n2;
  const std::size_t width = ds.meta.feature_length();
  ds.A = io::read_matrix_csv(dir / "A.csv", n, width);
  ds.F = io::read_matrix_csv(dir / "F.csv", n, width);
  ds.P = io::read_matrix_csv(dir / "P.csv", n, ModelParams::kCount);
  ds.Sigma = io::read_matrix_csv(dir / "Sigma.csv", n, 2);
  return ds;
}

}  // namespace sftm
