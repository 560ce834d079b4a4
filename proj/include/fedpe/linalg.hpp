#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

namespace fedpe::linalg {

// Thrown when a rank-1 update would change the range of the matrix
// (denominator of the downdate formula at or below the safety threshold).
struct SingularUpdateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Default zero threshold for eigen/singular values: dim * eps * spectral norm.
double default_tol(const Eigen::MatrixXd& A);

// Throws std::invalid_argument if A is not symmetric within
// |a_ij - a_ji| <= 1e-10 * max(1, |a_ij|).
void require_symmetric(const Eigen::MatrixXd& A);

// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via
// eigendecomposition. Eigenvalues at or below tol are treated as zero.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& A, std::optional<double> tol = {});

// log of the pseudo-determinant: sum of log eigenvalues above tol.
// Rank-0 input yields 0 (empty product).
double log_pdet(const Eigen::MatrixXd& A, std::optional<double> tol = {});

// Numerical rank of a set of vectors: singular values of the stacked
// matrix above tol. Empty set has rank 0.
int rank_of_set(const std::vector<Eigen::VectorXd>& vectors,
                std::optional<double> tol = {});

struct Rank1Update {
  Eigen::MatrixXd pinv;  // (A + lambda*u*u^T)^+
  double scale_factor;   // pseudo-determinant multiplier 1 + lambda*u^T A^+ u
};

// Low-rank update of a pseudo-inverse, valid when u lies in range(A) and
// the update preserves the range. Throws SingularUpdateError when
// 1 + lambda * u^T A^+ u <= 1e-12.
Rank1Update pinv_rank1_update(const Eigen::MatrixXd& A_pinv,
                              const Eigen::VectorXd& u, double lambda);

// Partition of the input vectors into equivalence classes of the collinear
// relation (two vectors are collinear when some subset S of the remaining
// vectors has x outside span(S) but inside span(S + {y})). Classes are
// returned sorted by smallest member index; members sorted ascending.
// Throws std::invalid_argument on a zero vector.
std::vector<std::vector<int>> collinearity_classes(
    const std::vector<Eigen::VectorXd>& vectors);

}  // namespace fedpe::linalg
