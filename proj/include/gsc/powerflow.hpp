#pragma once

// Lossless, fixed-|V| steady state. Bus angles solve
//
//   omega_i = sum_j |V_i||V_j| b_ij sin(delta_i - delta_j)
//
// by Newton's method. The Jacobian of the flow map is exactly the dynamic
// graph Laplacian at the current iterate; the reference bus row/column is
// removed to take out its span{1} nullspace.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsc/dyngraph.hpp"
#include "gsc/error.hpp"
#include "gsc/netmodel.hpp"

namespace gsc {

/// Allowed |sum of injections| for a lossless balance, p.u.
inline constexpr double kBalanceTolerance = 1e-9;

struct PowerFlowOptions {
  std::optional<std::size_t> reference;  // bus index; default_reference() when empty
  double tolerance = 1e-10;
  int max_iter = 50;
  std::optional<Eigen::VectorXd> warm_start;  // angles; flat start when empty
};

struct PowerFlowReport {
  OperatingPoint operating_point;
  int iterations = 0;
  double final_residual_inf_norm = 0.0;
  bool converged = false;
  bool secure = true;  // all line angles strictly inside (-pi/2, pi/2)
  double max_line_angle = 0.0;
  std::vector<double> residual_history;  // inf-norm at every iterate, first to last
};

/// r_i = omega_i - sum_j (|V_i||V_j| / x_ij) sin(delta_i - delta_j), using the
/// operating point's magnitudes, angles and injections.
inline Eigen::VectorXd power_flow_residual(const Network& net, const OperatingPoint& op) {
  check_dimensions(net, op);
  const auto idx = net.bus_index();
  Eigen::VectorXd r = op.p_inject;
  for (const auto& br : net.branches) {
    const auto i = static_cast<Eigen::Index>(idx.at(br.from_bus));
    const auto j = static_cast<Eigen::Index>(idx.at(br.to_bus));
    const double p = op.v_mag[i] * op.v_mag[j] * br.susceptance() * std::sin(op.v_ang[i] - op.v_ang[j]);
    r[i] -= p;
    r[j] += p;
  }
  return r;
}

inline double omega_sync(const Network& net) {
  double w = 0.0, d = 0.0;
  for (const auto& b : net.buses) {
    w += b.p_inject;
    d += b.damping;
  }
  return w / d;
}

inline double injection_imbalance(const Network& net) {
  double s = 0.0;
  for (const auto& b : net.buses) s += b.p_inject;
  return s;
}

inline PowerFlowReport solve_angles(const Network& net, const PowerFlowOptions& opt = {}) {
  const std::size_t n = net.size();
  if (n == 0) throw ValidationError("empty network");
  if (const double s = injection_imbalance(net); std::abs(s) > kBalanceTolerance)
    throw ValidationError("injection imbalance " + std::to_string(s) +
                          " p.u.; lossless balance requires sum of injections = 0");
  {
    detail::DisjointSets ds(n);
    const auto idx = net.bus_index();
    for (const auto& br : net.branches) ds.unite(idx.at(br.from_bus), idx.at(br.to_bus));
    if (detail::count_labels(ds.labels()) != 1) throw ValidationError("network disconnected");
  }

  PowerFlowReport rep;
  auto& op = rep.operating_point;
  op = operating_point_of(net);
  op.reference = opt.reference.value_or(default_reference(net));
  if (op.reference >= n) throw std::invalid_argument("reference bus index out of range");
  const auto ref = static_cast<Eigen::Index>(op.reference);
  if (opt.warm_start) {
    if (opt.warm_start->size() != static_cast<Eigen::Index>(n))
      throw std::invalid_argument("warm start has wrong dimension");
    op.v_ang = *opt.warm_start;
    op.v_ang.array() -= op.v_ang[ref];
  } else {
    op.v_ang.setZero();
  }

  const auto nn = static_cast<Eigen::Index>(n);
  auto reduce = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(nn - 1);
    for (Eigen::Index i = 0, k = 0; i < nn; ++i)
      if (i != ref) out[k++] = v[i];
    return out;
  };

  for (int it = 0;; ++it) {
    const Eigen::VectorXd r = power_flow_residual(net, op);
    const double norm = r.lpNorm<Eigen::Infinity>();
    rep.residual_history.push_back(norm);
    rep.final_residual_inf_norm = norm;
    if (!std::isfinite(norm)) break;
    if (norm <= opt.tolerance) {
      rep.converged = true;
      break;
    }
    if (it == opt.max_iter || nn == 1) break;

    const LaplacianMatrix L = laplacian(build_dynamic_graph(net, op));
    Eigen::MatrixXd J(nn - 1, nn - 1);
    for (Eigen::Index i = 0, a = 0; i < nn; ++i) {
      if (i == ref) continue;
      for (Eigen::Index j = 0, b = 0; j < nn; ++j) {
        if (j == ref) continue;
        J(a, b++) = L(i, j);
      }
      ++a;
    }
    const Eigen::VectorXd step = J.fullPivLu().solve(reduce(r));
    if (!step.allFinite()) break;
    for (Eigen::Index i = 0, k = 0; i < nn; ++i)
      if (i != ref) op.v_ang[i] += step[k++];
    ++rep.iterations;
  }

  const auto margin = security_margin(net, op.v_ang);
  rep.max_line_angle = margin.max_abs_line_angle;
  rep.secure = margin.inside;
  return rep;
}

/// Replaces load-bus injections with `load_injections` (indexed like
/// Network::buses; entries at source buses are ignored) and scales every
/// generator/inverter injection by one common factor so that the total is 0.
inline Network rebalance_injections(Network net, std::span<const double> load_injections) {
  if (load_injections.size() != net.size())
    throw std::invalid_argument("load injection vector has wrong dimension");
  double gen = 0.0, load = 0.0;
  bool has_source = false;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& b = net.buses[i];
    if (is_source(b.kind)) {
      has_source = true;
      gen += b.p_inject;
    } else {
      b.p_inject = load_injections[i];
      load += b.p_inject;
    }
  }
  if (!has_source) throw std::invalid_argument("rebalancing needs at least one generator bus");
  if (gen == 0.0) throw std::invalid_argument("total generation is zero; cannot rebalance");
  const double factor = -load / gen;
  for (auto& b : net.buses)
    if (is_source(b.kind)) b.p_inject *= factor;
  return net;
}

struct SteadyState {
  Network network;  // balanced injections, solved angles stored on the buses
  PowerFlowReport report;
  bool rebalanced = false;
};

/// Balances the injections when needed, solves the angles (warm-started from
/// the buses' stored angles when every bus has one) and writes them back.
/// Throws NumericalError when Newton does not converge.
inline SteadyState solve_steady_state(Network net, PowerFlowOptions opt = {}) {
  SteadyState ss;
  if (std::abs(injection_imbalance(net)) > kBalanceTolerance) {
    std::vector<double> loads(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) loads[i] = net.buses[i].p_inject;
    net = rebalance_injections(std::move(net), loads);
    ss.rebalanced = true;
  }
  if (!opt.warm_start &&
      std::all_of(net.buses.begin(), net.buses.end(), [](const Bus& b) { return b.v_ang.has_value(); }))
    opt.warm_start = operating_point_of(net).v_ang;
  ss.report = solve_angles(net, opt);
  if (!ss.report.converged)
    throw NumericalError("power flow did not converge in " + std::to_string(ss.report.iterations) +
                         " iterations (residual " + std::to_string(ss.report.final_residual_inf_norm) + ")");
  ss.network = with_angles(std::move(net), ss.report.operating_point);
  return ss;
}

}  // namespace gsc
