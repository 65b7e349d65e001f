#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace ccsnet::fem {

using Triplet = Eigen::Triplet<double>;

/// Row-compressed symmetric matrix. Storage is an Eigen row-major sparse
/// matrix; entries that cancel to exactly zero during assembly are pruned.
class SparseSymmetric {
 public:
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

  SparseSymmetric() = default;
  SparseSymmetric(std::size_t n, const std::vector<Triplet>& triplets) : m_(static_cast<int>(n), static_cast<int>(n)) {
    m_.setFromTriplets(triplets.begin(), triplets.end());
    m_.prune(0.0, 0.0);
    m_.makeCompressed();
  }
  explicit SparseSymmetric(Storage m) : m_(std::move(m)) {
    m_.prune(0.0, 0.0);
    m_.makeCompressed();
  }

  std::size_t dimension() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t nonzeros() const { return static_cast<std::size_t>(m_.nonZeros()); }
  std::span<const int> row_ptr() const { return {m_.outerIndexPtr(), static_cast<std::size_t>(m_.rows()) + 1}; }
  std::span<const int> col_idx() const { return {m_.innerIndexPtr(), nonzeros()}; }
  std::span<const double> values() const { return {m_.valuePtr(), nonzeros()}; }
  const Storage& storage() const { return m_; }

  double coeff(std::size_t r, std::size_t c) const { return m_.coeff(static_cast<int>(r), static_cast<int>(c)); }

  Eigen::VectorXd operator*(const Eigen::VectorXd& x) const { return m_ * x; }

  /// max |K - K^T| / max |K|.
  double asymmetry() const {
    Storage t = m_.transpose();
    Storage d = m_ - t;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < d.nonZeros(); ++k) num = std::max(num, std::abs(d.valuePtr()[k]));
    for (int k = 0; k < m_.nonZeros(); ++k) den = std::max(den, std::abs(m_.valuePtr()[k]));
    return den > 0.0 ? num / den : 0.0;
  }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(m_); }

 private:
  Storage m_;
};

}  // namespace ccsnet::fem
