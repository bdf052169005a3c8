#include "fat/matrix.hpp"

namespace fat {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_shape(a.cols == b.rows, "matmul: inner dimensions differ");
  DenseMatrix c(a.rows, b.cols);
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * k;
    double* ci = c.data.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_shape(a.rows == b.rows, "matmul_tn: leading dimensions differ");
  DenseMatrix c(a.cols, b.cols);
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * k;
    const double* bi = b.data.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_shape(a.cols == b.cols, "matmul_nt: trailing dimensions differ");
  DenseMatrix c(a.rows, b.rows);
  const std::size_t n = a.rows, k = a.cols, m = b.rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * k;
    double* ci = c.data.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
  return c;
}

DenseMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_shape(rows[i].size() == m.cols, "from_rows: ragged input");
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace fat
