#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace testutil {

inline Eigen::MatrixXd random_orthogonal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) A(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  return Q;
}

// Random PSD matrix with the given rank and eigenvalues in [0.1, 10].
inline Eigen::MatrixXd random_psd(int d, int rank, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.1, 10.0);
  const Eigen::MatrixXd Q = random_orthogonal(d, rng);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < rank; ++k) lam(k) = unif(rng);
  Eigen::MatrixXd A = Q * lam.asDiagonal() * Q.transpose();
  return 0.5 * (A + A.transpose());
}

inline Eigen::VectorXd random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int k = 0; k < d; ++k) v(k) = gauss(rng);
  return v / v.norm();
}

// Independent rank oracle (column-pivoted QR instead of SVD).
inline int rank_qr(const std::vector<Eigen::VectorXd>& vecs) {
  if (vecs.empty()) return 0;
  Eigen::MatrixXd B(vecs.front().size(), static_cast<Eigen::Index>(vecs.size()));
  for (size_t k = 0; k < vecs.size(); ++k) B.col(static_cast<Eigen::Index>(k)) = vecs[k];
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
  qr.setThreshold(1e-9);
  return static_cast<int>(qr.rank());
}

// Literal definition of the collinear relation: x ~ y iff some subset S of
// the other vectors has x outside span(S) and inside span(S + {y}).
// Exhaustive over all subsets; use only for small sets.
inline bool collinear_exhaustive(const std::vector<Eigen::VectorXd>& vecs, int x,
                                 int y) {
  if (x == y) return true;
  std::vector<int> others;
  for (int k = 0; k < static_cast<int>(vecs.size()); ++k) {
    if (k != x && k != y) others.push_back(k);
  }
  const int m = static_cast<int>(others.size());
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<Eigen::VectorXd> S;
    for (int b = 0; b < m; ++b) {
      if (mask & (1 << b)) S.push_back(vecs[static_cast<size_t>(others[b])]);
    }
    auto with_x = S;
    with_x.push_back(vecs[static_cast<size_t>(x)]);
    if (rank_qr(with_x) == rank_qr(S)) continue;  // x in span(S)
    auto with_y = S;
    with_y.push_back(vecs[static_cast<size_t>(y)]);
    auto with_xy = with_y;
    with_xy.push_back(vecs[static_cast<size_t>(x)]);
    if (rank_qr(with_xy) == rank_qr(with_y)) return true;  // x in span(S + y)
  }
  return false;
}

inline std::vector<std::vector<int>> collinearity_oracle(
    const std::vector<Eigen::VectorXd>& vecs) {
  const int n = static_cast<int>(vecs.size());
  std::vector<int> parent(n);
  for (int k = 0; k < n; ++k) parent[k] = k;
  const auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (collinear_exhaustive(vecs, i, j)) parent[find(i)] = find(j);
    }
  }
  std::vector<std::vector<int>> by_root(n);
  for (int k = 0; k < n; ++k) by_root[static_cast<size_t>(find(k))].push_back(k);
  std::vector<std::vector<int>> classes;
  for (auto& c : by_root) {
    if (!c.empty()) classes.push_back(std::move(c));
  }
  std::sort(classes.begin(), classes.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return classes;
}

}  // namespace testutil
