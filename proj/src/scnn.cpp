#include "sftm/scnn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sftm/error.hpp"
#include "sftm/rng.hpp"

namespace sftm {

SeriesBatch SeriesBatch::select(std::span<const std::size_t> rows) const {
  SeriesBatch out(rows.size(), channels, length);
  const std::size_t stride = channels * length;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= batch) throw ShapeError("batch row out of range");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

SeriesBatch make_series_batch(const Matrix& forest, const Matrix& agriculture) {
  if (forest.rows() != agriculture.rows() || forest.cols() != agriculture.cols()) {
    throw ShapeError("forest and agriculture matrices differ in shape");
  }
  SeriesBatch b(forest.rows(), 2, forest.cols());
  for (std::size_t r = 0; r < forest.rows(); ++r) {
    for (std::size_t t = 0; t < forest.cols(); ++t) {
      b.at(r, 0, t) = forest(r, t);
      b.at(r, 1, t) = agriculture(r, t);
    }
  }
  return b;
}

std::string_view to_string(Activation a) { return a == Activation::ReLU ? "relu" : "tanh"; }

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::ReLU;
  if (text == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

std::string_view to_string(Pooling p) { return p == Pooling::Average ? "average" : "flatten"; }

Pooling parse_pooling(std::string_view text) {
  if (text == "average") return Pooling::Average;
  if (text == "flatten") return Pooling::Flatten;
  throw ConfigError("unknown pooling '" + std::string(text) + "'");
}

std::size_t ScnnConfig::head_width() const {
  const auto lengths = conv_lengths();
  const std::size_t channels = conv.back().out_channels;
  return pooling == Pooling::Average ? channels : channels * lengths.back();
}

std::vector<std::size_t> ScnnConfig::conv_lengths() const {
  std::vector<std::size_t> out;
  std::size_t len = length;
  for (const auto& c : conv) {
    if (c.kernel == 0 || c.stride == 0 || c.kernel > len) return out;
    len = (len - c.kernel) / c.stride + 1;
    out.push_back(len);
  }
  return out;
}

void ScnnConfig::validate() const {
  if (output_dim != 8 && output_dim != 2) throw ShapeError("output_dim must be 8 or 2");
  if (in_channels == 0 || length == 0) throw ShapeError("input channels and length must be positive");
  if (conv.empty()) throw ShapeError("at least one convolution layer is required");
  for (const auto& c : conv) {
    if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
      throw ShapeError("convolution layers need positive channels, kernel and stride");
    }
  }
  if (conv_lengths().size() != conv.size()) {
    std::ostringstream msg;
    msg << "convolution kernels do not fit a series of length " << length;
    throw ShapeError(msg.str());
  }
  for (std::size_t w : dense) {
    if (w == 0) throw ShapeError("dense widths must be positive");
  }
}

namespace {

double activate(Activation a, double v) { return a == Activation::ReLU ? std::max(v, 0.0) : std::tanh(v); }

// Derivative from the pre-activation and the activation value.
double activate_grad(Activation a, double pre, double post) {
  return a == Activation::ReLU ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

}  // namespace

struct Scnn::Workspace {
  std::vector<std::vector<double>> conv_pre, conv_act;
  std::vector<double> pooled;
  std::vector<std::vector<double>> dense_pre, dense_act;  // last entry is the raw output
};

Scnn::Scnn(ScnnConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  auto add = [&](std::string name, std::vector<std::size_t> shape, std::size_t fan_in, bool bias) {
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    WeightArray w{std::move(name), std::move(shape), std::vector<double>(count, 0.0)};
    if (!bias) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : w.values) v = rng.uniform(-bound, bound);
    }
    weights_.push_back(std::move(w));
  };
  std::size_t channels = cfg_.in_channels;
  for (std::size_t i = 0; i < cfg_.conv.size(); ++i) {
    const auto& c = cfg_.conv[i];
    add("conv" + std::to_string(i) + ".weight", {c.out_channels, channels, c.kernel},
        channels * c.kernel, false);
    add("conv" + std::to_string(i) + ".bias", {c.out_channels}, 0, true);
    channels = c.out_channels;
  }
  std::size_t width = cfg_.head_width();
  std::vector<std::size_t> outs = cfg_.dense;
  outs.push_back(cfg_.output_dim);
  for (std::size_t j = 0; j < outs.size(); ++j) {
    add("dense" + std::to_string(j) + ".weight", {outs[j], width}, width, false);
    add("dense" + std::to_string(j) + ".bias", {outs[j]}, 0, true);
    width = outs[j];
  }
  shift_.assign(cfg_.output_dim, 0.0);
  scale_.assign(cfg_.output_dim, 1.0);
}

std::size_t Scnn::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.values.size();
  return n;
}

void Scnn::check_batch(const SeriesBatch& batch) const {
  if (batch.channels != cfg_.in_channels || batch.length != cfg_.length) {
    std::ostringstream msg;
    msg << "input of " << batch.channels << " channels x " << batch.length
        << " steps does not match model (" << cfg_.in_channels << " x " << cfg_.length << ")";
    throw ShapeError(msg.str());
  }
  if (batch.data.size() != batch.batch * batch.channels * batch.length) {
    throw ShapeError("series batch storage does not match its shape");
  }
}

void Scnn::forward_sample(std::span<const double> input, Workspace& ws, std::span<double> out) const {
  const auto lengths = cfg_.conv_lengths();
  const std::size_t n_conv = cfg_.conv.size();
  ws.conv_pre.resize(n_conv);
  ws.conv_act.resize(n_conv);

  std::span<const double> in = input;
  std::size_t in_ch = cfg_.in_channels;
  std::size_t in_len = cfg_.length;
  for (std::size_t i = 0; i < n_conv; ++i) {
    const auto& spec = cfg_.conv[i];
    const auto& w = weights_[2 * i].values;
    const auto& b = weights_[2 * i + 1].values;
    const std::size_t out_len = lengths[i];
    auto& pre = ws.conv_pre[i];
    auto& act = ws.conv_act[i];
    pre.assign(spec.out_channels * out_len, 0.0);
    act.resize(pre.size());
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t t = 0; t < out_len; ++t) {
        double acc = b[o];
        const std::size_t start = t * spec.stride;
        for (std::size_t c = 0; c < in_ch; ++c) {
          const double* wk = &w[(o * in_ch + c) * spec.kernel];
          const double* xk = &in[c * in_len + start];
          for (std::size_t k = 0; k < spec.kernel; ++k) acc += wk[k] * xk[k];
        }
        pre[o * out_len + t] = acc;
        act[o * out_len + t] = activate(cfg_.activation, acc);
      }
    }
    in = act;
    in_ch = spec.out_channels;
    in_len = out_len;
  }

  if (cfg_.pooling == Pooling::Flatten) {
    ws.pooled.assign(in.begin(), in.end());
  } else {
    ws.pooled.assign(in_ch, 0.0);
  }
  for (std::size_t c = 0; c < in_ch && cfg_.pooling == Pooling::Average; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < in_len; ++t) s += in[c * in_len + t];
    ws.pooled[c] = s / static_cast<double>(in_len);
  }

  const std::size_t n_dense = cfg_.dense.size() + 1;
  ws.dense_pre.resize(n_dense);
  ws.dense_act.resize(n_dense);
  const std::vector<double>* prev = &ws.pooled;
  for (std::size_t j = 0; j < n_dense; ++j) {
    const auto& W = weights_[2 * n_conv + 2 * j];
    const auto& b = weights_[2 * n_conv + 2 * j + 1].values;
    const std::size_t rows = W.shape[0];
    const std::size_t cols = W.shape[1];
    auto& pre = ws.dense_pre[j];
    auto& act = ws.dense_act[j];
    pre.resize(rows);
    act.resize(rows);
    const bool last = j + 1 == n_dense;
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = b[r];
      const double* wr = &W.values[r * cols];
      for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * (*prev)[c];
      pre[r] = acc;
      act[r] = last ? acc : activate(cfg_.activation, acc);
    }
    prev = &act;
  }
  for (std::size_t k = 0; k < cfg_.output_dim; ++k) out[k] = shift_[k] + scale_[k] * (*prev)[k];
}

Matrix Scnn::forward(const SeriesBatch& batch) const {
  check_batch(batch);
  Matrix out(batch.batch, cfg_.output_dim);
  Workspace ws;
  for (std::size_t b = 0; b < batch.batch; ++b) forward_sample(batch.sample(b), ws, out.row(b));
  return out;
}

std::vector<std::vector<double>> Scnn::backward(const SeriesBatch& batch, const Matrix& target,
                                                double* loss) const {
  check_batch(batch);
  if (target.rows() != batch.batch || target.cols() != cfg_.output_dim) {
    throw ShapeError("target shape does not match batch and output dimension");
  }
  if (batch.batch == 0) throw ShapeError("empty batch");
  std::vector<std::vector<double>> grads(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) grads[i].assign(weights_[i].values.size(), 0.0);

  const auto lengths = cfg_.conv_lengths();
  const std::size_t n_conv = cfg_.conv.size();
  const std::size_t n_dense = cfg_.dense.size() + 1;
  const double inv_p = 1.0 / static_cast<double>(batch.batch);
  Workspace ws;
  std::vector<double> pred(cfg_.output_dim);
  std::vector<double> upstream, down;
  double total = 0.0;

  for (std::size_t s = 0; s < batch.batch; ++s) {
    const auto input = batch.sample(s);
    forward_sample(input, ws, pred);

    // Gradient w.r.t. the raw network output.
    upstream.resize(cfg_.output_dim);
    for (std::size_t k = 0; k < cfg_.output_dim; ++k) {
      const double e = pred[k] - target(s, k);
      total += e * e;
      upstream[k] = 2.0 * e * inv_p * scale_[k];
    }

    for (std::size_t jj = n_dense; jj-- > 0;) {
      const std::size_t wi = 2 * n_conv + 2 * jj;
      const auto& W = weights_[wi];
      const std::size_t rows = W.shape[0];
      const std::size_t cols = W.shape[1];
      if (jj + 1 != n_dense) {
        for (std::size_t r = 0; r < rows; ++r) {
          upstream[r] *= activate_grad(cfg_.activation, ws.dense_pre[jj][r], ws.dense_act[jj][r]);
        }
      }
      const std::vector<double>& prev = jj == 0 ? ws.pooled : ws.dense_act[jj - 1];
      auto& gW = grads[wi];
      auto& gb = grads[wi + 1];
      down.assign(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const double u = upstream[r];
        gb[r] += u;
        const double* wr = &W.values[r * cols];
        double* gr = &gW[r * cols];
        for (std::size_t c = 0; c < cols; ++c) {
          gr[c] += u * prev[c];
          down[c] += wr[c] * u;
        }
      }
      std::swap(upstream, down);
    }

    // Average pool spreads evenly over time; flatten passes straight through.
    if (cfg_.pooling == Pooling::Average) {
      const std::size_t last_len = lengths.back();
      const std::size_t last_ch = cfg_.conv.back().out_channels;
      down.assign(last_ch * last_len, 0.0);
      for (std::size_t c = 0; c < last_ch; ++c) {
        const double g = upstream[c] / static_cast<double>(last_len);
        for (std::size_t t = 0; t < last_len; ++t) down[c * last_len + t] = g;
      }
      std::swap(upstream, down);
    }

    for (std::size_t ii = n_conv; ii-- > 0;) {
      const auto& spec = cfg_.conv[ii];
      const std::size_t out_len = lengths[ii];
      const std::size_t in_ch = ii == 0 ? cfg_.in_channels : cfg_.conv[ii - 1].out_channels;
      const std::size_t in_len = ii == 0 ? cfg_.length : lengths[ii - 1];
      std::span<const double> in = ii == 0 ? input : std::span<const double>(ws.conv_act[ii - 1]);
      const auto& w = weights_[2 * ii].values;
      auto& gw = grads[2 * ii];
      auto& gb = grads[2 * ii + 1];
      for (std::size_t q = 0; q < upstream.size(); ++q) {
        upstream[q] *= activate_grad(cfg_.activation, ws.conv_pre[ii][q], ws.conv_act[ii][q]);
      }
      const bool need_input_grad = ii > 0;
      if (need_input_grad) down.assign(in_ch * in_len, 0.0);
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        for (std::size_t t = 0; t < out_len; ++t) {
          const double u = upstream[o * out_len + t];
          if (u == 0.0) continue;
          gb[o] += u;
          const std::size_t start = t * spec.stride;
          for (std::size_t c = 0; c < in_ch; ++c) {
            const std::size_t wbase = (o * in_ch + c) * spec.kernel;
            const std::size_t xbase = c * in_len + start;
            for (std::size_t k = 0; k < spec.kernel; ++k) {
              gw[wbase + k] += u * in[xbase + k];
              if (need_input_grad) down[xbase + k] += w[wbase + k] * u;
            }
          }
        }
      }
      if (need_input_grad) std::swap(upstream, down);
    }
  }
  if (loss) *loss = total * inv_p;
  return grads;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("prediction and target shapes differ");
  }
  if (pred.rows() == 0) throw ShapeError("mse of zero samples");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const double e = pred.data()[i] - target.data()[i];
    total += e * e;
  }
  return total / static_cast<double>(pred.rows());
}

std::vector<double> per_target_mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("prediction and target shapes differ");
  }
  if (pred.rows() == 0) throw ShapeError("mse of zero samples");
  std::vector<double> out(pred.cols(), 0.0);
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double e = pred(r, c) - target(r, c);
      out[c] += e * e;
    }
  }
  for (double& v : out) v /= static_cast<double>(pred.rows());
  return out;
}

}  // namespace sftm
