#pragma once

// Dense symmetric eigensolver (Householder tridiagonalization followed by the
// implicit-shift QL iteration) and the symmetric-definite pencil (L, D) with
// positive diagonal D, reduced to the symmetric matrix D^-1/2 L D^-1/2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "gsc/detail/csv.hpp"
#include "gsc/error.hpp"

namespace gsc {

struct EigenSolution {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

namespace detail {

// Reduces the symmetric matrix held in V to tridiagonal form by Householder
// reflections, accumulating the transformations in V. On return d holds the
// diagonal and e the subdiagonal in e[1..n-1] (e[0] = 0).
inline void householder_tridiagonalize(Eigen::MatrixXd& V, Eigen::VectorXd& d, Eigen::VectorXd& e) {
  const Eigen::Index n = V.rows();
  for (Eigen::Index j = 0; j < n; ++j) d[j] = V(n - 1, j);

  for (Eigen::Index i = n - 1; i > 0; --i) {
    double scale = 0.0, h = 0.0;
    for (Eigen::Index k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (Eigen::Index j = 0; j < i; ++j) {
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
        V(j, i) = 0.0;
      }
    } else {
      for (Eigen::Index k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (Eigen::Index j = 0; j < i; ++j) e[j] = 0.0;

      for (Eigen::Index j = 0; j < i; ++j) {
        f = d[j];
        V(j, i) = f;
        g = e[j] + V(j, j) * f;
        for (Eigen::Index k = j + 1; k <= i - 1; ++k) {
          g += V(k, j) * d[k];
          e[k] += V(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (Eigen::Index j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (Eigen::Index j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (Eigen::Index k = j; k <= i - 1; ++k) V(k, j) -= (f * e[k] + g * d[k]);
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  // accumulate transformations
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    V(n - 1, i) = V(i, i);
    V(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (Eigen::Index k = 0; k <= i; ++k) d[k] = V(k, i + 1) / h;
      for (Eigen::Index j = 0; j <= i; ++j) {
        double g = 0.0;
        for (Eigen::Index k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
        for (Eigen::Index k = 0; k <= i; ++k) V(k, j) -= g * d[k];
      }
    }
    for (Eigen::Index k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    d[j] = V(n - 1, j);
    V(n - 1, j) = 0.0;
  }
  V(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal (d, e), rotating the columns of V.
inline void tridiagonal_ql(Eigen::MatrixXd& V, Eigen::VectorXd& d, Eigen::VectorXd& e) {
  const Eigen::Index n = V.rows();
  for (Eigen::Index i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  const double eps = std::numeric_limits<double>::epsilon();
  const int max_sweeps = 60;
  double f = 0.0, tst1 = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    Eigen::Index m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > max_sweeps) throw NumericalError("QL iteration did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (Eigen::Index i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (Eigen::Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (Eigen::Index k = 0; k < n; ++k) {
            h = V(k, i + 1);
            V(k, i + 1) = s * V(k, i) + c * h;
            V(k, i) = c * V(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

// Largest-magnitude entry of every column made positive (ties: lowest index).
inline void fix_signs(Eigen::MatrixXd& V) {
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
      if (std::abs(V(r, c)) > best) {
        best = std::abs(V(r, c));
        arg = r;
      }
    }
    if (V(arg, c) < 0) V.col(c) = -V.col(c);
  }
}

inline EigenSolution sorted(const Eigen::VectorXd& d, const Eigen::MatrixXd& V) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a] < d[b]; });
  EigenSolution out;
  out.values.resize(d.size());
  out.vectors.resize(V.rows(), V.cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.values[kk] = d[order[k]];
    out.vectors.col(kk) = V.col(order[k]);
  }
  return out;
}

}  // namespace detail

/// Full spectrum of a symmetric matrix with orthonormal eigenvectors.
inline EigenSolution symmetric_eig(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("symmetric_eig: matrix is not square");
  const Eigen::Index n = S.rows();
  if (n == 0) return {};
  if (!S.allFinite()) throw NumericalError("symmetric_eig: non-finite entry");
  const double amax = S.cwiseAbs().maxCoeff();
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * amax)
    throw std::invalid_argument("symmetric_eig: matrix is not symmetric");

  Eigen::MatrixXd V = 0.5 * (S + S.transpose());
  Eigen::VectorXd d(n), e(n);
  detail::householder_tridiagonalize(V, d, e);
  detail::tridiagonal_ql(V, d, e);
  auto sol = detail::sorted(d, V);
  detail::fix_signs(sol.vectors);
  return sol;
}

/// Solves L x = lambda D x for diagonal D > 0 through S = D^-1/2 L D^-1/2,
/// x = D^-1/2 u. Eigenvectors are D-orthonormal.
inline EigenSolution generalized_eig(const Eigen::MatrixXd& L, const Eigen::VectorXd& damping) {
  const Eigen::Index n = L.rows();
  if (L.cols() != n || damping.size() != n)
    throw std::invalid_argument("generalized_eig: dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(damping[i] > 0.0)) throw std::invalid_argument("generalized_eig: damping must be > 0");

  const Eigen::VectorXd inv_sqrt = damping.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd S(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) S(i, j) = L(i, j) / std::sqrt(damping[i] * damping[j]);

  auto sol = symmetric_eig(S);
  sol.vectors = inv_sqrt.asDiagonal() * sol.vectors;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double dn = std::sqrt(sol.vectors.col(c).cwiseAbs2().dot(damping));
    sol.vectors.col(c) /= dn;
  }
  detail::fix_signs(sol.vectors);
  return sol;
}

/// Eigenvalues with |lambda| <= 1e-9 * max(1, lambda_max) count as zero.
inline double zero_eigenvalue_threshold(const Eigen::VectorXd& values) {
  const double top = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  return 1e-9 * std::max(1.0, top);
}

inline std::size_t count_zero_eigenvalues(const Eigen::VectorXd& values) {
  const double tol = zero_eigenvalue_threshold(values);
  return static_cast<std::size_t>((values.array().abs() <= tol).count());
}

/// max_i ||L x_i - lambda_i D x_i||_2
inline double eig_residual(const Eigen::MatrixXd& L, const Eigen::VectorXd& damping, const EigenSolution& sol) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sol.values.size(); ++i) {
    const auto x = sol.vectors.col(i);
    const Eigen::VectorXd r = L * x - sol.values[i] * damping.cwiseProduct(x);
    worst = std::max(worst, r.norm());
  }
  return worst;
}

/// Spectrum CSV: index (1-based), eigenvalue.
inline void write_spectrum_csv(std::ostream& os, const Eigen::VectorXd& values) {
  os << "index,eigenvalue\n";
  for (Eigen::Index i = 0; i < values.size(); ++i) os << i + 1 << ',' << detail::fmt17(values[i]) << '\n';
}

}  // namespace gsc
