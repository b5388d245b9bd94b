#include "sftm/knn.hpp"

#include <algorithm>
#include <utility>
#include <vector>

#include "sftm/error.hpp"

namespace sftm {

Matrix flatten_series(const SeriesBatch& batch) {
  const std::size_t width = batch.channels * batch.length;
  Matrix out(batch.batch, width);
  std::copy(batch.data.begin(), batch.data.end(), out.data().begin());
  return out;
}

Matrix knn_predict(const Matrix& train_x, const Matrix& train_y, const Matrix& query_x,
                   std::size_t k) {
  if (train_x.rows() == 0) throw ConfigError("kNN needs a non-empty training set");
  if (train_x.rows() != train_y.rows()) throw ShapeError("kNN feature and label rows differ");
  if (query_x.cols() != train_x.cols()) throw ShapeError("kNN query width differs from training");
  if (k < 1 || k > train_x.rows()) throw ConfigError("kNN k must lie in [1, training rows]");

  Matrix out(query_x.rows(), train_y.cols());
  std::vector<std::pair<double, std::size_t>> dist(train_x.rows());
  for (std::size_t q = 0; q < query_x.rows(); ++q) {
    const auto qr = query_x.row(q);
    for (std::size_t i = 0; i < train_x.rows(); ++i) {
      const auto tr = train_x.row(i);
      double d = 0.0;
      for (std::size_t c = 0; c < qr.size(); ++c) {
        const double e = qr[c] - tr[c];
        d += e * e;
      }
      dist[i] = {d, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    auto o = out.row(q);
    for (std::size_t j = 0; j < k; ++j) {
      const auto lr = train_y.row(dist[j].second);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += lr[c];
    }
    for (double& v : o) v /= static_cast<double>(k);
  }
  return out;
}

}  // namespace sftm
