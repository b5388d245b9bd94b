#pragma once

// Shallow 1-D convolutional regressor over two-channel (forest, agriculture)
// series: conv -> act -> ... -> pool or flatten -> dense -> act -> ... ->
// dense(out_dim), followed by a fixed per-target affine map
// (prediction = shift + scale * network output).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sftm/matrix.hpp"

namespace sftm {

/// (batch, channels, length) row-major.
struct SeriesBatch {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> data;

  SeriesBatch() = default;
  SeriesBatch(std::size_t b, std::size_t c, std::size_t l)
      : batch(b), channels(c), length(l), data(b * c * l, 0.0) {}

  double& at(std::size_t b, std::size_t c, std::size_t t) {
    return data[(b * channels + c) * length + t];
  }
  double at(std::size_t b, std::size_t c, std::size_t t) const {
    return data[(b * channels + c) * length + t];
  }
  std::span<const double> sample(std::size_t b) const {
    return {data.data() + b * channels * length, channels * length};
  }
  SeriesBatch select(std::span<const std::size_t> rows) const;
};

/// Channel 0 from forest rows, channel 1 from agriculture rows.
SeriesBatch make_series_batch(const Matrix& forest, const Matrix& agriculture);

struct ConvLayerSpec {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool operator==(const ConvLayerSpec&) const = default;
};

enum class Activation { ReLU, Tanh };
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

/// How the last conv feature map reaches the dense head: averaged over time
/// (one value per channel) or flattened (channel-major, every time step kept).
enum class Pooling { Average, Flatten };
std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view text);

struct ScnnConfig {
  std::size_t in_channels = 2;
  std::size_t length = 30;
  std::vector<ConvLayerSpec> conv = {{16, 3, 1}, {32, 3, 1}};
  Activation activation = Activation::ReLU;
  Pooling pooling = Pooling::Average;
  std::vector<std::size_t> dense = {64};
  std::size_t output_dim = 8;
  std::uint64_t seed = 0;

  /// Throws ShapeError for output_dim outside {8, 2} or kernels that do not fit.
  void validate() const;
  /// Sequence length after each conv layer.
  std::vector<std::size_t> conv_lengths() const;
  /// Width of the vector fed to the first dense layer.
  std::size_t head_width() const;
  bool operator==(const ScnnConfig&) const = default;
};

/// One named learnable (or fixed, for the output affine) array.
struct WeightArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

class Scnn {
 public:
  /// Weights uniform in +-sqrt(6 / fan_in) from cfg.seed; biases zero;
  /// output shift 0 and scale 1.
  explicit Scnn(ScnnConfig cfg);

  const ScnnConfig& config() const { return cfg_; }
  std::size_t parameter_count() const;  // learnable only

  /// Learnable arrays in a fixed order: conv{i}.weight (out, in, k),
  /// conv{i}.bias, dense{i}.weight (out, in), dense{i}.bias.
  std::vector<WeightArray>& weights() { return weights_; }
  const std::vector<WeightArray>& weights() const { return weights_; }

  std::vector<double>& output_shift() { return shift_; }
  std::vector<double>& output_scale() { return scale_; }
  const std::vector<double>& output_shift() const { return shift_; }
  const std::vector<double>& output_scale() const { return scale_; }

  /// (batch x output_dim) predictions. Throws ShapeError on mismatch.
  Matrix forward(const SeriesBatch& batch) const;

  /// Gradients of mse_loss(forward(batch), target) for every learnable array,
  /// same layout as weights(). Optionally returns the loss.
  std::vector<std::vector<double>> backward(const SeriesBatch& batch, const Matrix& target,
                                            double* loss = nullptr) const;

 private:
  struct Workspace;
  void check_batch(const SeriesBatch& batch) const;
  void forward_sample(std::span<const double> input, Workspace& ws, std::span<double> out) const;

  ScnnConfig cfg_;
  std::vector<WeightArray> weights_;
  std::vector<double> shift_;
  std::vector<double> scale_;
};

/// (1/p) sum_i ||pred_i - target_i||^2. Throws ShapeError on mismatch.
double mse_loss(const Matrix& pred, const Matrix& target);
/// (1/p) sum_i (pred_ij - target_ij)^2 for each column j; sums to mse_loss.
std::vector<double> per_target_mse(const Matrix& pred, const Matrix& target);

}  // namespace sftm
