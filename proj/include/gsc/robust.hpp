#pragma once

// Perturbation bounds for the definite pair (L, D) and the randomized
// operating-point study of the cluster count.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsc/cluster.hpp"
#include "gsc/detail/parallel.hpp"
#include "gsc/dyngraph.hpp"
#include "gsc/error.hpp"
#include "gsc/geig.hpp"
#include "gsc/netmodel.hpp"
#include "gsc/powerflow.hpp"

namespace gsc {

/// Homogeneous eigenvalue <alpha, beta>, standing for alpha / beta.
struct Homogeneous {
  double alpha = 0.0;
  double beta = 1.0;
};

inline double chordal_distance(const Homogeneous& a, const Homogeneous& b) {
  const double na = std::hypot(a.alpha, a.beta), nb = std::hypot(b.alpha, b.beta);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("chordal distance: <0, 0> is not an eigenvalue");
  return std::abs(b.beta * a.alpha - b.alpha * a.beta) / (na * nb);
}

inline double chordal_distance(double lambda, double lambda_tilde) {
  return chordal_distance(Homogeneous{lambda, 1.0}, Homogeneous{lambda_tilde, 1.0});
}

/// D_min, a lower bound of mu(L, D) for symmetric L and diagonal D > 0.
inline double mu_lower_bound(const Eigen::VectorXd& damping) {
  if (damping.size() == 0) throw std::invalid_argument("empty damping vector");
  const double m = damping.minCoeff();
  if (!(m > 0.0)) throw std::invalid_argument("damping must be > 0");
  return m;
}

/// Random-sphere estimate of min_|x|=1 sqrt((x'Lx)^2 + (x'Dx)^2). Diagnostic only;
/// the estimate is an upper bound of the true minimum.
inline double estimate_mu(const Eigen::MatrixXd& L, const Eigen::VectorXd& damping, std::size_t samples,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x(L.rows());
  for (std::size_t s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = g(rng);
    x.normalize();
    best = std::min(best, std::hypot(x.dot(L * x), x.dot(damping.cwiseProduct(x))));
  }
  return best;
}

inline double spectral_norm(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues()(0);
}

/// Largest |eigenvalue| of a symmetric matrix.
inline double spectral_radius_symmetric(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return symmetric_eig(A).values.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Eigenvalue bound

struct PencilPerturbationReport {
  double mu_lower_bound = 0.0;
  double spectral_radius_dL = 0.0;
  double bound = 0.0;  // spectral_radius_dL / mu_lower_bound
  double observed_max_chordal = 0.0;
  bool applicable = false;  // |dL|_2 < D_min
  bool holds = false;       // applicable and observed <= bound + 1e-12
};

/// Eigenvalues of (L, D) and (L + dL, D), paired in sorted order, against the
/// bound rho(dL) / D_min on their chordal distances.
inline PencilPerturbationReport eigenvalue_bound_check(const Eigen::MatrixXd& L, const Eigen::VectorXd& damping,
                                                       const Eigen::MatrixXd& dL) {
  const auto n = L.rows();
  if (L.cols() != n || dL.rows() != n || dL.cols() != n || damping.size() != n)
    throw std::invalid_argument("eigenvalue_bound_check: dimension mismatch");
  if ((dL - dL.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, dL.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("eigenvalue_bound_check: dL must be symmetric");

  PencilPerturbationReport rep;
  rep.mu_lower_bound = mu_lower_bound(damping);
  rep.spectral_radius_dL = spectral_radius_symmetric(dL);
  rep.bound = rep.spectral_radius_dL / rep.mu_lower_bound;
  rep.applicable = rep.spectral_radius_dL < rep.mu_lower_bound;

  const auto a = generalized_eig(L, damping).values;
  const auto b = generalized_eig(L + dL, damping).values;
  for (Eigen::Index j = 0; j < n; ++j)
    rep.observed_max_chordal = std::max(rep.observed_max_chordal, chordal_distance(a[j], b[j]));
  rep.holds = rep.applicable && rep.observed_max_chordal <= rep.bound + 1e-12;
  return rep;
}

// ---------------------------------------------------------------------------
// Eigenspace bound

struct SinThetaReport {
  double observed = 0.0;  // |sin Theta_1|_F
  double bound = 0.0;     // upper estimate: mu replaced by D_min
  double delta = 0.0;     // min chordal gap between the retained and the perturbed complementary spectrum
  double pair_norm = 0.0;  // |(L, D)|_2 = sqrt(|L^2 + D^2|_2)
  double mu_lower = 0.0;
  double mu_lower_perturbed = 0.0;
  double residual = 0.0;  // |(dL Z_1, dD Z_1)|_F
};

/// Chordal separations at or below this count as zero (rounding of repeated eigenvalues).
inline constexpr double kSeparationFloor = 1e-12;

namespace detail {

inline Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& Z) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
  return qr.householderQ() * Eigen::MatrixXd::Identity(Z.rows(), Z.cols());
}

}  // namespace detail

/// Compares the span of the first `ell` generalized eigenvectors of (L, D)
/// with that of (L + dL, D + dD).
inline SinThetaReport sin_theta_check(const Eigen::MatrixXd& L, const Eigen::VectorXd& damping,
                                      const Eigen::MatrixXd& dL, const Eigen::VectorXd& dD, std::size_t ell) {
  const auto n = L.rows();
  if (L.cols() != n || dL.rows() != n || dL.cols() != n || damping.size() != n || dD.size() != n)
    throw std::invalid_argument("sin_theta_check: dimension mismatch");
  const auto l = static_cast<Eigen::Index>(ell);
  if (ell < 1 || l > n) throw std::invalid_argument("sin_theta_check: need 1 <= ell <= n");

  const Eigen::VectorXd dt = damping + dD;
  const auto e = generalized_eig(L, damping);
  const auto et = generalized_eig(L + dL, dt);

  SinThetaReport rep;
  rep.delta = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index j = l; j < n; ++j) rep.delta = std::min(rep.delta, chordal_distance(e.values[i], et.values[j]));
  if (!(rep.delta > kSeparationFloor))
    throw ValidationError("sin_theta_check: eigenvalue clusters overlap (delta = " + std::to_string(rep.delta) + ")");

  const Eigen::MatrixXd Q = detail::orthonormal_basis(e.vectors.leftCols(l));
  const Eigen::MatrixXd Qt = detail::orthonormal_basis(et.vectors.leftCols(l));
  const Eigen::MatrixXd outside = Qt - Q * (Q.transpose() * Qt);
  rep.observed = outside.norm();

  const Eigen::MatrixXd D = damping.asDiagonal();
  rep.pair_norm = std::sqrt(spectral_radius_symmetric(L * L + D * D));
  rep.mu_lower = mu_lower_bound(damping);
  rep.mu_lower_perturbed = mu_lower_bound(dt);
  rep.residual = std::sqrt((dL * Q).squaredNorm() + (dD.asDiagonal() * Q).squaredNorm());
  rep.bound = l == n ? 0.0 : rep.pair_norm / (rep.mu_lower * rep.mu_lower_perturbed) * rep.residual / rep.delta;
  return rep;
}

// ---------------------------------------------------------------------------
// Scenario study

struct ScenarioOptions {
  std::size_t n_scenarios = 1000;
  double sigma_mw = 2.2360679774997898;  // standard deviation of the load noise, MW
  std::uint64_t base_seed = 42;
  std::optional<std::size_t> k_max;  // default_k_max(n) when empty
  unsigned jobs = 0;
  std::uint64_t cluster_seed = 42;
  int restarts = 20;
};

struct ScenarioRecord {
  std::uint64_t seed = 0;
  bool converged = false;
  std::size_t selected_k = 0;
  double gap = 0.0;  // largest relative gap
  std::vector<int> assignment;  // aligned to the nominal partition at the modal k
  std::string failure;
};

struct RobustnessStudy {
  std::size_t n_scenarios = 0;
  std::size_t failures = 0;
  std::map<std::size_t, std::size_t> k_histogram;
  std::size_t modal_k = 0;
  double gap_mean = 0.0;
  double gap_variance = 0.0;  // unbiased sample variance
  Partition nominal;          // nominal clustering at the modal k
  Eigen::MatrixXd frequencies;  // n x modal_k, share of successes placing bus i in cluster c
  std::vector<ScenarioRecord> scenarios;

  /// Share of buses whose most frequent cluster reaches `threshold`.
  double stable_bus_fraction(double threshold) const {
    if (frequencies.rows() == 0) return 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < frequencies.rows(); ++i)
      if (frequencies.row(i).maxCoeff() >= threshold) ++count;
    return static_cast<double>(count) / static_cast<double>(frequencies.rows());
  }
};

namespace detail {

/// Relabels `labels` (k clusters) by the permutation that maximizes the number
/// of buses sharing their label with `reference`.
inline std::vector<int> align_labels(const std::vector<int>& labels, const std::vector<int>& reference, std::size_t k) {
  std::vector<std::vector<int>> overlap(k, std::vector<int>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++overlap[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(reference[i])];

  // best[mask]: max overlap assigning the first popcount(mask) labels to the targets in mask
  const std::size_t full = std::size_t{1} << k;
  std::vector<int> best(full, -1);
  std::vector<int> choice(full, -1);
  best[0] = 0;
  for (std::size_t mask = 0; mask < full; ++mask) {
    if (best[mask] < 0) continue;
    const auto src = static_cast<std::size_t>(std::popcount(mask));
    if (src == k) continue;
    for (std::size_t t = 0; t < k; ++t) {
      if (mask & (std::size_t{1} << t)) continue;
      const std::size_t next = mask | (std::size_t{1} << t);
      const int v = best[mask] + overlap[src][t];
      if (v > best[next]) {
        best[next] = v;
        choice[next] = static_cast<int>(t);
      }
    }
  }
  std::vector<int> map(k);
  for (std::size_t mask = full - 1, src = k; src > 0; --src) {
    const auto t = static_cast<std::size_t>(choice[mask]);
    map[src - 1] = static_cast<int>(t);
    mask &= ~(std::size_t{1} << t);
  }
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = map[static_cast<std::size_t>(labels[i])];
  return out;
}

}  // namespace detail

/// Randomized steady states: every load injection receives Gaussian noise
/// (standard deviation sigma_mw MW), generation is rescaled to balance, the
/// angles are re-solved and the cluster count re-selected. Scenario s draws
/// from seed base_seed + s.
inline RobustnessStudy scenario_study(const Network& net, const ScenarioOptions& opt = {}) {
  if (!(opt.sigma_mw >= 0.0) || !std::isfinite(opt.sigma_mw)) throw std::invalid_argument("sigma_mw must be >= 0");
  if (opt.n_scenarios == 0) throw std::invalid_argument("n_scenarios must be > 0");
  if (std::none_of(net.buses.begin(), net.buses.end(), [](const Bus& b) { return is_source(b.kind); }))
    throw ValidationError("scenario study needs at least one generator bus");

  const auto nominal = solve_steady_state(net);
  const std::size_t n = net.size();
  const std::size_t k_max = opt.k_max.value_or(default_k_max(n));

  // load buses in ascending id order
  std::vector<std::size_t> loads;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_source(nominal.network.buses[i].kind)) loads.push_back(i);
  std::sort(loads.begin(), loads.end(),
            [&](auto a, auto b) { return nominal.network.buses[a].id < nominal.network.buses[b].id; });

  struct Slot {
    ScenarioRecord rec;
    std::optional<DynamicGraph> graph;
    std::optional<EigenSolution> eig;
  };
  std::vector<Slot> slots(opt.n_scenarios);
  const Eigen::VectorXd warm = operating_point_of(nominal.network).v_ang;

  detail::parallel_for(opt.n_scenarios, opt.jobs, [&](std::size_t s) {
    auto& slot = slots[s];
    slot.rec.seed = opt.base_seed + s;
    std::mt19937_64 rng(slot.rec.seed);
    std::normal_distribution<double> zeta(0.0, opt.sigma_mw / nominal.network.base_mva);
    std::vector<double> inj(n);
    for (std::size_t i = 0; i < n; ++i) inj[i] = nominal.network.buses[i].p_inject;
    for (auto i : loads) inj[i] += zeta(rng);
    try {
      const auto perturbed = rebalance_injections(nominal.network, inj);
      PowerFlowOptions pf;
      pf.warm_start = warm;
      const auto rep = solve_angles(perturbed, pf);
      if (!rep.converged) {
        slot.rec.failure = "power flow did not converge";
        return;
      }
      auto g = build_dynamic_graph(perturbed, rep.operating_point);
      auto eig = generalized_eig(laplacian(g), g.node_weights);
      const auto gaps = relative_spectral_gaps(eig.values, k_max);
      slot.rec.selected_k = select_k(gaps);
      slot.rec.gap = std::max_element(gaps.begin(), gaps.end(), [](auto& a, auto& b) { return a.gap < b.gap; })->gap;
      slot.rec.converged = true;
      slot.graph = std::move(g);
      slot.eig = std::move(eig);
    } catch (const NumericalError& e) {
      slot.rec.failure = e.what();
    } catch (const ValidationError& e) {
      slot.rec.failure = e.what();
    }
  });

  RobustnessStudy st;
  st.n_scenarios = opt.n_scenarios;
  std::vector<double> gap_samples;
  for (const auto& slot : slots) {
    if (!slot.rec.converged) {
      ++st.failures;
      continue;
    }
    ++st.k_histogram[slot.rec.selected_k];
    gap_samples.push_back(slot.rec.gap);
  }
  if (gap_samples.empty()) throw NumericalError("scenario study: every scenario failed");

  std::size_t top = 0;
  for (const auto& [k, c] : st.k_histogram)
    if (c > top) {
      top = c;
      st.modal_k = k;
    }
  double mean = 0.0;
  for (double g : gap_samples) mean += g;
  mean /= static_cast<double>(gap_samples.size());
  double var = 0.0;
  for (double g : gap_samples) var += (g - mean) * (g - mean);
  st.gap_mean = mean;
  st.gap_variance = gap_samples.size() > 1 ? var / static_cast<double>(gap_samples.size() - 1) : 0.0;

  ClusterOptions copt{opt.cluster_seed, opt.restarts};
  st.nominal = cluster_network(nominal.network, operating_point_of(nominal.network), st.modal_k, copt).partition;

  const std::size_t k = st.modal_k;
  detail::parallel_for(opt.n_scenarios, opt.jobs, [&](std::size_t s) {
    auto& slot = slots[s];
    if (!slot.rec.converged) return;
    const auto res = cluster_with_eigs(*slot.graph, std::move(*slot.eig), k, copt);
    slot.rec.assignment = detail::align_labels(res.partition.assignment, st.nominal.assignment, k);
    slot.graph.reset();
    slot.eig.reset();
  });

  st.frequencies = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (auto& slot : slots) {
    for (std::size_t i = 0; i < slot.rec.assignment.size(); ++i)
      st.frequencies(static_cast<Eigen::Index>(i), slot.rec.assignment[i]) += 1.0;
    st.scenarios.push_back(std::move(slot.rec));
  }
  st.frequencies /= static_cast<double>(opt.n_scenarios - st.failures);
  return st;
}

}  // namespace gsc
