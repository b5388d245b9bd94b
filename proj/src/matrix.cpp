#include "sftm/matrix.hpp"

#include <algorithm>

#include "sftm/error.hpp"

namespace sftm {

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> indices) const {
  Matrix out(rows_, indices.size());
  for (std::size_t c : indices) {
    if (c >= cols_) throw ShapeError("column index out of range");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t j = 0; j < indices.size(); ++j) out(r, j) = (*this)(r, indices[j]);
  }
  return out;
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  if (m.rows() == 0) return mean;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  }
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

std::vector<double> column_variances(const Matrix& m) {
  const std::vector<double> mean = column_means(m);
  std::vector<double> var(m.cols(), 0.0);
  if (m.rows() == 0) return var;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double d = m(r, c) - mean[c];
      var[c] += d * d;
    }
  }
  for (double& v : var) v /= static_cast<double>(m.rows());
  return var;
}

}  // namespace sftm
