#pragma once

// Generalized spectral clustering of the pair (L, D):
//   1. first k generalized eigenvectors X of (L, D)
//   2. columns scaled to unit D-norm, rows projected onto the unit sphere
//   3. k-means on the rows
// plus the partition quality measures (boundary, total damping, phi, rho_hat),
// the relative-spectral-gap choice of k, and an exhaustive solver for the
// min-max-phi partition problem on small graphs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gsc/detail/csv.hpp"
#include "gsc/dyngraph.hpp"
#include "gsc/error.hpp"
#include "gsc/geig.hpp"

namespace gsc {

// ---------------------------------------------------------------------------
// Partition

/// Relabels so that labels appear in order of first occurrence (equivalently,
/// clusters are numbered by ascending lowest member index).
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::vector<int> map;
  std::vector<int> out(labels.size());
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0) throw std::invalid_argument("negative cluster label");
    if (static_cast<std::size_t>(l) >= map.size()) map.resize(static_cast<std::size_t>(l) + 1, -1);
    auto& m = map[static_cast<std::size_t>(l)];
    if (m < 0) m = next++;
    out[i] = m;
  }
  return out;
}

struct Partition {
  std::size_t k = 0;
  std::vector<int> assignment;  // per bus index, labels 0..k-1

  static Partition from_labels(const std::vector<int>& labels) {
    Partition p;
    p.assignment = canonical_labels(labels);
    p.k = static_cast<std::size_t>(detail::count_labels(p.assignment));
    return p;
  }

  std::vector<std::size_t> members(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == label) out.push_back(i);
    return out;
  }

  std::vector<std::vector<std::size_t>> sets() const {
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t i = 0; i < assignment.size(); ++i)
      out[static_cast<std::size_t>(assignment[i])].push_back(i);
    return out;
  }

  bool operator==(const Partition&) const = default;
};

// ---------------------------------------------------------------------------
// Quality measures

namespace detail {

inline std::vector<char> indicator(std::span<const std::size_t> members, std::size_t n) {
  std::vector<char> in(n, 0);
  for (auto m : members) {
    if (m >= n) throw std::invalid_argument("set member out of range");
    in[m] = 1;
  }
  return in;
}

}  // namespace detail

/// Total edge weight leaving the set.
inline double boundary(std::span<const std::size_t> members, const DynamicGraph& g) {
  const auto in = detail::indicator(members, g.n);
  double b = 0.0;
  for (const auto& e : g.edges)
    if (in[e.from] != in[e.to]) b += e.weight;
  return b;
}

inline double total_damping(std::span<const std::size_t> members, const Eigen::VectorXd& damping) {
  double s = 0.0;
  for (auto m : members) s += damping[static_cast<Eigen::Index>(m)];
  return s;
}

/// chi' L chi / chi' D chi for the characteristic vector chi of the set.
inline double phi(std::span<const std::size_t> members, const Eigen::MatrixXd& L, const Eigen::VectorXd& damping) {
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(L.rows());
  for (auto m : members) chi[static_cast<Eigen::Index>(m)] = 1.0;
  return chi.dot(L * chi) / chi.dot(damping.cwiseProduct(chi));
}

/// Same quantity as a cut sum over the graph's edges.
inline double phi(std::span<const std::size_t> members, const DynamicGraph& g) {
  return boundary(members, g) / total_damping(members, g.node_weights);
}

inline double rho_hat(const Partition& p, const Eigen::MatrixXd& L, const Eigen::VectorXd& damping) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& s : p.sets()) worst = std::max(worst, phi(s, L, damping));
  return worst;
}

/// Whether the subgraph induced by the set is connected (all graph edges
/// count, whatever their weight).
inline bool induced_connected(std::span<const std::size_t> members, const DynamicGraph& g) {
  if (members.empty()) return false;
  const auto in = detail::indicator(members, g.n);
  detail::DisjointSets ds(g.n);
  for (const auto& e : g.edges)
    if (in[e.from] && in[e.to]) ds.unite(e.from, e.to);
  const auto root = ds.find(members.front());
  return std::all_of(members.begin(), members.end(), [&](auto m) { return ds.find(m) == root; });
}

struct ClusterQuality {
  std::size_t size = 0;
  double boundary = 0.0;
  double total_damping = 0.0;
  double phi = 0.0;
  bool connected = true;
};

struct PartitionQuality {
  std::vector<ClusterQuality> clusters;
  double rho_hat = 0.0;
  bool all_connected = true;
};

inline PartitionQuality evaluate_partition(const Partition& p, const DynamicGraph& g) {
  PartitionQuality q;
  q.rho_hat = -std::numeric_limits<double>::infinity();
  for (const auto& s : p.sets()) {
    ClusterQuality c;
    c.size = s.size();
    c.boundary = boundary(s, g);
    c.total_damping = total_damping(s, g.node_weights);
    c.phi = c.boundary / c.total_damping;
    c.connected = induced_connected(s, g);
    q.rho_hat = std::max(q.rho_hat, c.phi);
    q.all_connected = q.all_connected && c.connected;
    q.clusters.push_back(c);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Spectral embedding

struct Embedding {
  Eigen::MatrixXd coords;  // n x k, unit rows
};

inline Embedding spectral_embedding(const EigenSolution& sol, const Eigen::VectorXd& damping, std::size_t k) {
  const Eigen::Index n = sol.vectors.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  if (k < 2 || kk > n) throw std::invalid_argument("embedding dimension k must satisfy 2 <= k <= n");
  if (sol.vectors.cols() < kk) throw std::invalid_argument("fewer than k eigenvectors available");
  if (damping.size() != n) throw std::invalid_argument("damping dimension mismatch");

  Embedding emb;
  emb.coords = sol.vectors.leftCols(kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    const double dn = std::sqrt(emb.coords.col(c).cwiseAbs2().dot(damping));
    if (!(dn > 0.0)) throw NumericalError("embedding: eigenvector with zero D-norm");
    emb.coords.col(c) /= dn;
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const double s = emb.coords.row(r).norm();
    if (s < 1e-12)
      throw NumericalError("degenerate embedding: row " + std::to_string(r) + " has near-zero norm");
    emb.coords.row(r) /= s;
  }
  return emb;
}

/// Embedding CSV: bus,coord_1..coord_k (bus ids taken from `bus_ids`).
inline void write_embedding_csv(std::ostream& os, const Embedding& emb, const std::vector<int>& bus_ids) {
  os << "bus";
  for (Eigen::Index c = 0; c < emb.coords.cols(); ++c) os << ",coord_" << c + 1;
  os << '\n';
  for (Eigen::Index r = 0; r < emb.coords.rows(); ++r) {
    os << bus_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < emb.coords.cols(); ++c) os << ',' << detail::fmt17(emb.coords(r, c));
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// k-means (Lloyd with k-means++ seeding)

struct KMeansResult {
  Partition partition;
  Eigen::MatrixXd centroids;  // k x dim, rows follow the canonical labels
  double wcss = 0.0;
};

namespace detail {

struct KMeansRun {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double wcss = 0.0;
};

inline KMeansRun kmeans_once(const Eigen::MatrixXd& X, std::size_t k, std::mt19937_64& rng, int max_iter) {
  const Eigen::Index n = X.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd C(kk, X.cols());

  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::Index chosen = pick(rng);
  for (Eigen::Index c = 0; c < kk; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total > 0.0) {
        const double u = std::generate_canonical<double, 53>(rng) * total;
        double acc = 0.0;
        chosen = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double w = d2[static_cast<std::size_t>(i)];
          if (w <= 0.0) continue;
          acc += w;
          chosen = i;
          if (acc > u) break;
        }
      } else {
        chosen = pick(rng);
      }
    }
    C.row(c) = X.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (X.row(i) - C.row(c)).squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < kk; ++c) {
        const double d = (X.row(i) - C.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      auto& l = labels[static_cast<std::size_t>(i)];
      if (l != best) changed = true;
      l = best;
      dist[static_cast<std::size_t>(i)] = bd;
    }

    // empty clusters take the point farthest from its centroid
    std::vector<int> counts(k, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index far = -1;
      double fd = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (counts[static_cast<std::size_t>(labels[ii])] > 1 && dist[ii] > fd) {
          fd = dist[ii];
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      dist[static_cast<std::size_t>(far)] = 0.0;
      counts[c] = 1;
      changed = true;
    }

    C.setZero();
    for (Eigen::Index i = 0; i < n; ++i) C.row(labels[static_cast<std::size_t>(i)]) += X.row(i);
    for (Eigen::Index c = 0; c < kk; ++c) C.row(c) /= counts[static_cast<std::size_t>(c)];
    if (!changed) break;
  }

  KMeansRun run;
  run.labels = std::move(labels);
  run.centroids = std::move(C);
  for (Eigen::Index i = 0; i < n; ++i)
    run.wcss += (X.row(i) - run.centroids.row(run.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return run;
}

}  // namespace detail

/// Best of `restarts` Lloyd runs by within-cluster sum of squares. Run r is
/// seeded with seed + r; exact WCSS ties go to the lexicographically smaller
/// canonical assignment, so the result does not depend on run order.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, int restarts = 20,
                           int max_iter = 300) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k > n) throw std::invalid_argument("k-means needs 1 <= k <= number of points");
  if (restarts < 1) throw std::invalid_argument("k-means needs at least one restart");

  std::optional<KMeansResult> best;
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r));
    auto run = detail::kmeans_once(points, k, rng, max_iter);
    KMeansResult cand;
    cand.partition = Partition::from_labels(run.labels);
    cand.wcss = run.wcss;
    cand.centroids.resize(run.centroids.rows(), run.centroids.cols());
    for (std::size_t i = 0; i < n; ++i)
      cand.centroids.row(cand.partition.assignment[i]) = run.centroids.row(run.labels[i]);
    if (!best || cand.wcss < best->wcss ||
        (cand.wcss == best->wcss && cand.partition.assignment < best->partition.assignment))
      best = std::move(cand);
  }
  return std::move(*best);
}

// ---------------------------------------------------------------------------
// Choice of k

struct SpectralGap {
  std::size_t k = 0;
  double gap = 0.0;  // (lambda_{k+1} - lambda_k) / lambda_k, 1-based indices
};

inline std::size_t default_k_max(std::size_t n) { return std::min<std::size_t>(n - 1, 10); }

inline std::vector<SpectralGap> relative_spectral_gaps(const Eigen::VectorXd& eigenvalues, std::size_t k_max) {
  const auto n = static_cast<std::size_t>(eigenvalues.size());
  if (n < 3) throw std::invalid_argument("relative spectral gaps need at least 3 eigenvalues");
  if (k_max < 2 || k_max > n - 1) throw std::invalid_argument("k_max must satisfy 2 <= k_max <= n - 1");
  if (eigenvalues[1] <= zero_eigenvalue_threshold(eigenvalues))
    throw ValidationError(
        "second eigenvalue is numerically zero: the dynamic graph has several islands; "
        "inspect connected_components before choosing k");
  std::vector<SpectralGap> out;
  for (std::size_t k = 2; k <= k_max; ++k) {
    const double lk = eigenvalues[static_cast<Eigen::Index>(k - 1)];
    const double lk1 = eigenvalues[static_cast<Eigen::Index>(k)];
    out.push_back({k, (lk1 - lk) / lk});
  }
  return out;
}

/// argmax of the gaps; ties resolve to the smallest k.
inline std::size_t select_k(const std::vector<SpectralGap>& gaps) {
  if (gaps.empty()) throw std::invalid_argument("no spectral gaps");
  auto best = gaps.front();
  for (const auto& g : gaps)
    if (g.gap > best.gap) best = g;
  return best.k;
}

// ---------------------------------------------------------------------------
// Exhaustive min-max-phi partition

struct BruteForceResult {
  Partition partition;
  double rho_star = 0.0;
  std::uint64_t evaluated = 0;
};

inline constexpr std::size_t kBruteForceMaxNodes = 14;

/// Enumerates every partition of the nodes into exactly k non-empty blocks
/// (restricted growth strings, so label permutations are skipped) and
/// returns the one minimizing the largest phi. Ties keep the first in
/// lexicographic order.
inline BruteForceResult brute_force_partition(const Eigen::MatrixXd& L, const Eigen::VectorXd& damping, std::size_t k) {
  const auto n = static_cast<std::size_t>(L.rows());
  if (n > kBruteForceMaxNodes)
    throw std::invalid_argument("brute force is limited to n <= " + std::to_string(kBruteForceMaxNodes));
  if (k < 2 || k > n) throw std::invalid_argument("brute force needs 2 <= k <= n");
  if (damping.size() != L.rows()) throw std::invalid_argument("damping dimension mismatch");

  // lower-index neighbours with weights, read off the Laplacian
  std::vector<std::vector<std::pair<std::size_t, double>>> lower(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double w = -L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (w != 0.0) lower[i].emplace_back(j, w);
    }

  std::vector<int> label(n, -1);
  std::vector<double> bnd(k, 0.0), damp(k, 0.0);
  BruteForceResult best;
  best.rho_star = std::numeric_limits<double>::infinity();

  auto place = [&](auto&& self, std::size_t v, std::size_t used) -> void {
    if (v == n) {
      if (used != k) return;
      ++best.evaluated;
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) worst = std::max(worst, bnd[c] / damp[c]);
      if (worst < best.rho_star) {
        best.rho_star = worst;
        best.partition.assignment = label;
      }
      return;
    }
    const std::size_t remaining = n - v;
    const std::size_t top = std::min(used, k - 1);
    for (std::size_t c = 0; c <= top; ++c) {
      const std::size_t now_used = c == used ? used + 1 : used;
      if (k - now_used > remaining - 1) continue;  // not enough nodes left to open the other blocks
      label[v] = static_cast<int>(c);
      damp[c] += damping[static_cast<Eigen::Index>(v)];
      for (const auto& [u, w] : lower[v]) {
        const auto cu = static_cast<std::size_t>(label[u]);
        if (cu != c) {
          bnd[c] += w;
          bnd[cu] += w;
        }
      }
      self(self, v + 1, now_used);
      for (const auto& [u, w] : lower[v]) {
        const auto cu = static_cast<std::size_t>(label[u]);
        if (cu != c) {
          bnd[c] -= w;
          bnd[cu] -= w;
        }
      }
      damp[c] -= damping[static_cast<Eigen::Index>(v)];
      label[v] = -1;
    }
  };
  place(place, 0, 0);
  best.partition.k = k;
  return best;
}

// ---------------------------------------------------------------------------
// End-to-end

struct ClusterOptions {
  std::uint64_t seed = 0;
  int restarts = 20;
};

struct ClusterResult {
  EigenSolution eig;
  Embedding embedding;
  Partition partition;
  PartitionQuality quality;
  double wcss = 0.0;
};

/// Clusters with an already computed eigen-solution of (L, D).
inline ClusterResult cluster_with_eigs(const DynamicGraph& g, EigenSolution eig, std::size_t k,
                                       const ClusterOptions& opt = {}) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  if (k > g.n) throw std::invalid_argument("k must not exceed the number of buses");
  ClusterResult out;
  out.eig = std::move(eig);
  out.embedding = spectral_embedding(out.eig, g.node_weights, k);
  auto km = kmeans(out.embedding.coords, k, opt.seed, opt.restarts);
  out.partition = std::move(km.partition);
  out.wcss = km.wcss;
  out.quality = evaluate_partition(out.partition, g);
  return out;
}

inline ClusterResult cluster_graph(const DynamicGraph& g, std::size_t k, const ClusterOptions& opt = {}) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  return cluster_with_eigs(g, generalized_eig(laplacian(g), g.node_weights), k, opt);
}

inline ClusterResult cluster_network(const Network& net, const OperatingPoint& op, std::size_t k,
                                     const ClusterOptions& opt = {}) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  return cluster_graph(build_dynamic_graph(net, op), k, opt);
}

}  // namespace gsc
