#include "fedpe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedpe::linalg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Union-find over vector indices.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs_of(const Eigen::MatrixXd& A) {
  require_symmetric(A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("eigendecomposition failed");
  }
  return es;
}

}  // namespace

double default_tol(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  // For symmetric input the spectral norm equals max |eigenvalue|; the
  // cheaper infinity-norm bound is within a factor sqrt(n) and only used
  // here to scale the cutoff, so use the exact value via eigenvalues when
  // the matrix is small (all matrices in this project are).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  const double spectral = es.eigenvalues().cwiseAbs().maxCoeff();
  return static_cast<double>(A.rows()) * kEps * spectral;
}

void require_symmetric(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("matrix is not square");
  }
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < A.cols(); ++j) {
      const double diff = std::abs(A(i, j) - A(j, i));
      if (diff > 1e-10 * std::max(1.0, std::abs(A(i, j)))) {
        throw std::invalid_argument("matrix is not symmetric");
      }
    }
  }
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& A, std::optional<double> tol) {
  const auto es = eigs_of(A);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double cut = tol ? *tol : static_cast<double>(A.rows()) * kEps *
                                      lam.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lam.size());
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    if (lam(k) > cut) inv(k) = 1.0 / lam(k);
  }
  Eigen::MatrixXd P = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (P + P.transpose());
}

double log_pdet(const Eigen::MatrixXd& A, std::optional<double> tol) {
  const auto es = eigs_of(A);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double cut = tol ? *tol : static_cast<double>(A.rows()) * kEps *
                                      lam.cwiseAbs().maxCoeff();
  double sum = 0.0;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    if (lam(k) > cut) sum += std::log(lam(k));
  }
  return sum;
}

int rank_of_set(const std::vector<Eigen::VectorXd>& vectors,
                std::optional<double> tol) {
  if (vectors.empty()) return 0;
  const Eigen::Index d = vectors.front().size();
  Eigen::MatrixXd B(d, static_cast<Eigen::Index>(vectors.size()));
  for (size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k].size() != d) {
      throw std::invalid_argument("vectors have mismatched dimensions");
    }
    B.col(static_cast<Eigen::Index>(k)) = vectors[k];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cut =
      tol ? *tol : static_cast<double>(std::max(B.rows(), B.cols())) * kEps * sv(0);
  int r = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > cut) ++r;
  }
  return r;
}

Rank1Update pinv_rank1_update(const Eigen::MatrixXd& A_pinv,
                              const Eigen::VectorXd& u, double lambda) {
  const Eigen::VectorXd w = A_pinv * u;
  const double quad = u.dot(w);
  const double denom = 1.0 + lambda * quad;
  if (denom <= 1e-12) {
    throw SingularUpdateError("rank-1 update denominator below threshold");
  }
  Eigen::MatrixXd P = A_pinv - (lambda / denom) * (w * w.transpose());
  return {0.5 * (P + P.transpose()), denom};
}

std::vector<std::vector<int>> collinearity_classes(
    const std::vector<Eigen::VectorXd>& vectors) {
  if (vectors.empty()) {
    throw std::invalid_argument("empty vector set");
  }
  const int n = static_cast<int>(vectors.size());
  const Eigen::Index d = vectors.front().size();
  std::vector<Eigen::VectorXd> unit(vectors.size());
  for (int k = 0; k < n; ++k) {
    if (vectors[k].size() != d) {
      throw std::invalid_argument("vectors have mismatched dimensions");
    }
    const double nrm = vectors[k].norm();
    if (nrm == 0.0) {
      throw std::invalid_argument("zero vector has no direction");
    }
    unit[k] = vectors[k] / nrm;
  }

  // The collinear relation holds exactly for pairs sharing a circuit of the
  // linear matroid on the vectors, so the classes are the matroid's
  // connected components. A single greedy basis suffices: every dependent
  // vector is merged with the support of its fundamental circuit.
  UnionFind uf(n);
  std::vector<int> basis_ids;
  Eigen::MatrixXd Q(d, 0);  // orthonormal basis of the picked vectors
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd r = unit[k];
    if (Q.cols() > 0) r -= Q * (Q.transpose() * unit[k]);
    if (r.norm() > 1e-8) {
      // independent: extend the basis (re-orthogonalize once for stability)
      if (Q.cols() > 0) r -= Q * (Q.transpose() * r);
      Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
      Q.col(Q.cols() - 1) = r.normalized();
      basis_ids.push_back(k);
    } else {
      // dependent: unique coefficients over the basis vectors give the
      // fundamental circuit's support
      Eigen::MatrixXd B(d, static_cast<Eigen::Index>(basis_ids.size()));
      for (size_t j = 0; j < basis_ids.size(); ++j) {
        B.col(static_cast<Eigen::Index>(j)) = unit[basis_ids[j]];
      }
      const Eigen::VectorXd c = B.colPivHouseholderQr().solve(unit[k]);
      for (Eigen::Index j = 0; j < c.size(); ++j) {
        if (std::abs(c(j)) > 1e-8) {
          uf.unite(k, basis_ids[static_cast<size_t>(j)]);
        }
      }
    }
  }

  std::vector<std::vector<int>> by_root(n);
  for (int k = 0; k < n; ++k) by_root[uf.find(k)].push_back(k);
  std::vector<std::vector<int>> classes;
  for (auto& members : by_root) {
    if (!members.empty()) classes.push_back(std::move(members));
  }
  std::sort(classes.begin(), classes.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return classes;
}

}  // namespace fedpe::linalg
