#pragma once

#include <cstddef>

#include "sftm/matrix.hpp"
#include "sftm/scnn.hpp"

namespace sftm {

/// One row per sample: every channel of the series laid end to end.
Matrix flatten_series(const SeriesBatch& batch);

/// Mean label of the k nearest training rows (squared Euclidean distance,
/// ties broken by lower training index). Throws ConfigError for an empty
/// training set or k outside [1, rows].
Matrix knn_predict(const Matrix& train_x, const Matrix& train_y, const Matrix& query_x,
                   std::size_t k);

}  // namespace sftm
