#pragma once

// Linear algebra of the increment set {v_0, ..., v_d}: the basis, the affine
// decomposition y = a 1 + v^T z, and linear functionals over the convex hull
// Theta = {v p : p in the simplex}.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lattice_bsde/errors.hpp"

namespace lattice_bsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace tolerance {
inline constexpr double column_sum = 1e-12;
inline constexpr double eigen_ratio = 1e-10;
inline constexpr double simplex = 1e-12;
inline constexpr double interior = 1e-12;
inline constexpr double theta_membership = 1e-10;
}  // namespace tolerance

/// The d x (d+1) increment matrix v = [v_0, ..., v_d] with v_0 = -(v_1 + ... + v_d).
///
/// Immutable after construction. Besides v it caches the Gram matrix v v^T,
/// its inverse, and the projector (v v^T)^{-1} v that maps child values to
/// the slope z of the affine decomposition.
class Basis {
 public:
  /// Builds the basis from v_1..v_d; v_0 is derived.
  static Basis from_vectors(const std::vector<Vector>& generators) {
    require(!generators.empty(), ErrorCode::SingularBasis, "dimension d must be at least 1");
    const auto d = static_cast<Eigen::Index>(generators.size());
    Matrix v(d, d + 1);
    for (Eigen::Index j = 0; j < d; ++j) {
      require(generators[j].size() == d, ErrorCode::SingularBasis,
              "generator " + std::to_string(j + 1) + " has wrong length");
      v.col(j + 1) = generators[j];
    }
    v.col(0) = -v.rightCols(d).rowwise().sum();
    return Basis(std::move(v));
  }

  /// Accepts a full d x (d+1) matrix whose columns must sum to zero.
  static Basis from_matrix(const Matrix& vectors) {
    require(vectors.rows() >= 1 && vectors.cols() == vectors.rows() + 1, ErrorCode::SingularBasis,
            "increment matrix must be d x (d+1) with d >= 1");
    const double scale = std::max(1.0, vectors.cwiseAbs().maxCoeff());
    require(vectors.rowwise().sum().cwiseAbs().maxCoeff() <= tolerance::column_sum * scale,
            ErrorCode::SingularBasis, "columns of the increment matrix must sum to zero");
    return Basis(vectors);
  }

  /// Lattice whose Gram matrix v v^T equals the given covariance.
  ///
  /// Starts from the standard simplex frame vbar = [-1, e_1, ..., e_d], writes
  /// vbar vbar^T = Cbar Cbar^T and sigma = C C^T (Cholesky) and maps
  /// v = C Cbar^{-1} vbar.
  static Basis from_covariance(const Matrix& sigma) {
    require(sigma.rows() >= 1 && sigma.rows() == sigma.cols(), ErrorCode::NotPositiveDefinite,
            "covariance must be a non-empty square matrix");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    require((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            ErrorCode::NotPositiveDefinite, "covariance must be symmetric");
    const Eigen::Index d = sigma.rows();
    Matrix frame(d, d + 1);
    frame.col(0) = -Vector::Ones(d);
    frame.rightCols(d) = Matrix::Identity(d, d);
    Eigen::LLT<Matrix> frame_chol(frame * frame.transpose());
    Eigen::LLT<Matrix> target_chol(sigma);
    require(target_chol.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
            "Cholesky factorisation failed");
    const Matrix c = target_chol.matrixL();
    if ((c.diagonal().array() <= 0.0).any()) fail(ErrorCode::NotPositiveDefinite, "covariance is singular");
    const Matrix cbar = frame_chol.matrixL();
    const Matrix transform = c * cbar.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
    Matrix v = transform * frame;
    // v 1 = 0 holds analytically; remove rounding so the column-sum invariant is exact.
    v.col(0) = -v.rightCols(d).rowwise().sum();
    return Basis(std::move(v));
  }

  int dim() const { return static_cast<int>(vectors_.rows()); }
  int branching() const { return dim() + 1; }

  const Matrix& vectors() const { return vectors_; }
  Vector vertex(int j) const { return vectors_.col(j); }
  const Matrix& gram() const { return gram_; }
  const Matrix& gram_inv() const { return gram_inv_; }
  /// (v v^T)^{-1} v, a d x (d+1) matrix.
  const Matrix& projector() const { return projector_; }

 private:
  explicit Basis(Matrix vectors) : vectors_(std::move(vectors)) {
    gram_ = vectors_ * vectors_.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    require(std::isfinite(lo) && std::isfinite(hi) && hi > 0.0 && lo > tolerance::eigen_ratio * hi,
            ErrorCode::SingularBasis, "generators are linearly dependent");
    gram_inv_ = gram_.ldlt().solve(Matrix::Identity(gram_.rows(), gram_.cols()));
    projector_ = gram_inv_ * vectors_;
  }

  Matrix vectors_;
  Matrix gram_;
  Matrix gram_inv_;
  Matrix projector_;
};

/// y = level * 1 + v^T slope.
struct AffineParts {
  double level = 0.0;
  Vector slope;
};

inline AffineParts affine_decompose(const Basis& basis, const Vector& y) {
  return {y.mean(), basis.projector() * y};
}

inline Vector affine_reconstruct(const Basis& basis, double level, const Vector& slope) {
  return Vector::Constant(basis.branching(), level) + basis.vectors().transpose() * slope;
}

struct ThetaMin {
  double value = 0.0;
  int vertex = 0;
};

/// min over Theta of z^T theta. A linear functional attains its minimum over a
/// polytope at a vertex; ties go to the lowest vertex index.
inline ThetaMin theta_min(const Basis& basis, const Vector& z) {
  const Vector values = basis.vectors().transpose() * z;
  ThetaMin best{values[0], 0};
  for (int j = 1; j < values.size(); ++j) {
    if (values[j] < best.value) best = {values[j], j};
  }
  return best;
}

/// The unique p with 1^T p = 1 and v p = theta. Theta contains theta iff p >= 0.
inline Vector barycentric(const Basis& basis, const Vector& theta) {
  return Vector::Constant(basis.branching(), 1.0 / basis.branching()) +
         basis.vectors().transpose() * (basis.gram_inv() * theta);
}

inline bool in_theta(const Basis& basis, const Vector& theta, double tol = tolerance::theta_membership) {
  return barycentric(basis, theta).minCoeff() >= -tol;
}

inline bool is_simplex(const Vector& p, double tol = tolerance::simplex) {
  return p.size() > 0 && p.minCoeff() >= -tol && std::abs(p.sum() - 1.0) <= tol * p.size();
}

inline bool is_interior_simplex(const Vector& p, double eps = tolerance::interior,
                                double tol = tolerance::simplex) {
  return is_simplex(p, tol) && p.minCoeff() >= eps;
}

}  // namespace lattice_bsde
