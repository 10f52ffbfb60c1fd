#include "conic/downstream/matrix.h"

#include "conic/core.h"

namespace conic {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch, "matrix data does not match its shape");
  }
}

DenseMatrix DenseMatrix::select(std::span<const std::size_t> rows,
                                std::span<const int> cols) const {
  DenseMatrix out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(i, j) = (*this)(rows[i], static_cast<std::size_t>(cols[j]));
    }
  }
  return out;
}

}  // namespace conic
