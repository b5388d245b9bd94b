#include "sftm/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sftm/error.hpp"
#include "sftm/rng.hpp"

namespace sftm {

std::string_view to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(std::string_view text) {
  if (text == "adam") return Optimizer::Adam;
  if (text == "sgd") return Optimizer::SGD;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

std::string_view to_string(Target t) { return t == Target::Params8 ? "params8" : "noise2"; }

Target parse_target(std::string_view text) {
  if (text == "params8") return Target::Params8;
  if (text == "noise2") return Target::Noise2;
  throw ConfigError("unknown target '" + std::string(text) + "' (expected params8 or noise2)");
}

std::size_t target_dim(Target t) { return t == Target::Params8 ? 8 : 2; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam decay constants must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0,1)");
  }
}

Matrix select_labels(const Dataset& ds, Target target, std::span<const std::size_t> rows) {
  return target == Target::Params8 ? ds.P.select_rows(rows) : ds.Sigma.select_rows(rows);
}

TaskData prepare_task(const Dataset& ds, const Split& split, Target target) {
  const ScaledFeatures sf = scale_features(ds, split);
  TaskData t;
  t.train_x = make_series_batch(sf.train_A, sf.train_F);
  t.test_x = make_series_batch(sf.test_A, sf.test_F);
  t.train_y = select_labels(ds, target, split.train);
  t.test_y = select_labels(ds, target, split.test);
  t.scaling = sf.stats;
  return t;
}

namespace {

constexpr std::uint64_t kValidationTag = 0x7A11;

struct Adam {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

double batched_loss(const Scnn& net, const SeriesBatch& x, const Matrix& y, std::size_t batch) {
  if (x.batch == 0) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < x.batch; start += batch) {
    const std::size_t end = std::min(x.batch, start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix pred = net.forward(x.select(idx));
    const Matrix tgt = y.select_rows(idx);
    total += mse_loss(pred, tgt) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(x.batch);
}

}  // namespace

TrainedModel fit(const ScnnConfig& net_cfg, const SeriesBatch& x, const Matrix& y,
                 const TrainConfig& cfg) {
  cfg.validate();
  if (x.batch != y.rows()) throw ShapeError("feature and label row counts differ");
  if (y.cols() != net_cfg.output_dim) throw ShapeError("label width does not match output_dim");
  if (x.batch == 0) throw ShapeError("no training rows");

  std::vector<std::size_t> order(x.batch);
  std::iota(order.begin(), order.end(), std::size_t{0});
  {
    Rng rng(derive_seed(cfg.shuffle_seed, kValidationTag));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  }
  auto n_val = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(x.batch)));
  if (n_val >= x.batch) n_val = x.batch - 1;
  std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(fit_rows.begin(), fit_rows.end());
  const SeriesBatch val_x = x.select(val_rows);
  const Matrix val_y = y.select_rows(val_rows);

  TrainedModel model{Scnn(net_cfg), cfg, {}, std::nullopt, Target::Params8, Hypothesis::FSH};
  Scnn& net = model.net;
  if (cfg.standardize_targets) {
    const Matrix fy = y.select_rows(fit_rows);
    const auto mean = column_means(fy);
    const auto var = column_variances(fy);
    for (std::size_t k = 0; k < y.cols(); ++k) {
      net.output_shift()[k] = mean[k];
      net.output_scale()[k] = var[k] > 0.0 ? std::sqrt(var[k]) : 1.0;
    }
  }

  Adam adam;
  for (const auto& w : net.weights()) {
    adam.m.emplace_back(w.values.size(), 0.0);
    adam.v.emplace_back(w.values.size(), 0.0);
  }

  std::vector<std::size_t> perm = fit_rows;
  std::vector<std::size_t> idx;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.shuffle_seed, epoch + 1));
    perm = fit_rows;
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

    double epoch_total = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
      idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                 perm.begin() + static_cast<std::ptrdiff_t>(end));
      double loss = 0.0;
      const auto grads = net.backward(x.select(idx), y.select_rows(idx), &loss);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss in epoch " << epoch + 1;
        throw NumericalError(msg.str());
      }
      epoch_total += loss * static_cast<double>(idx.size());

      auto& ws = net.weights();
      if (cfg.optimizer == Optimizer::SGD) {
        for (std::size_t a = 0; a < ws.size(); ++a) {
          for (std::size_t i = 0; i < ws[a].values.size(); ++i) {
            ws[a].values[i] -= cfg.learning_rate * grads[a][i];
          }
        }
      } else {
        ++adam.t;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.t));
        for (std::size_t a = 0; a < ws.size(); ++a) {
          auto& m = adam.m[a];
          auto& v = adam.v[a];
          for (std::size_t i = 0; i < ws[a].values.size(); ++i) {
            const double g = grads[a][i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            ws[a].values[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
          }
        }
      }
    }
    EpochLoss e;
    e.train = epoch_total / static_cast<double>(perm.size());
    e.val = batched_loss(net, val_x, val_y, cfg.batch_size);
    if (val_x.batch > 0 && !std::isfinite(e.val)) {
      throw NumericalError("training diverged: non-finite validation loss");
    }
    model.history.push_back(e);
  }
  return model;
}

Metrics evaluate_predictions(const Matrix& pred, const Matrix& y) {
  Metrics m;
  m.per_target_mse = per_target_mse(pred, y);
  m.test_mse = mse_loss(pred, y);
  return m;
}

Metrics evaluate(const Scnn& net, const SeriesBatch& x, const Matrix& y) {
  if (y.cols() != net.config().output_dim) {
    throw ShapeError("label width does not match the model's output dimension");
  }
  return evaluate_predictions(net.forward(x), y);
}

Matrix mean_predictor(const Matrix& train_y, std::size_t queries) {
  if (train_y.rows() == 0) throw ShapeError("mean predictor needs training labels");
  const auto mean = column_means(train_y);
  Matrix out(queries, train_y.cols());
  for (std::size_t r = 0; r < queries; ++r) std::copy(mean.begin(), mean.end(), out.row(r).begin());
  return out;
}

}  // namespace sftm
