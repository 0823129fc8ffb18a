#pragma once

// The dynamic graph of a network at an operating point. Edge weights are the
// synchronizing coefficients
//
//   w_ij = |V_i| |V_j| b_ij cos(delta_i - delta_j),   b_ij = 1 / x_ij,
//
// i.e. the sensitivity of the line's real power flow to its angle. Node
// weights are the bus dampings. Its Laplacian drives the linearized angle
// dynamics D d(Delta delta)/dt = -L Delta delta.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "gsc/detail/components.hpp"
#include "gsc/detail/csv.hpp"
#include "gsc/netmodel.hpp"

namespace gsc {

/// |w| below this is flushed to 0 so line angles at pi/2 do not leave sign noise.
inline constexpr double kWeightFloor = 1e-14;

struct WeightedEdge {
  std::size_t from = 0;  // bus index (not id)
  std::size_t to = 0;
  double weight = 0.0;
};

struct DynamicGraph {
  std::size_t n = 0;
  std::vector<WeightedEdge> edges;
  Eigen::VectorXd node_weights;
};

using LaplacianMatrix = Eigen::MatrixXd;
using IncidenceMatrix = Eigen::MatrixXd;

inline void check_dimensions(const Network& net, const OperatingPoint& op) {
  const auto n = static_cast<Eigen::Index>(net.size());
  if (op.v_mag.size() != n || op.v_ang.size() != n || op.p_inject.size() != n)
    throw std::invalid_argument("operating point dimension does not match the network");
}

inline DynamicGraph build_dynamic_graph(const Network& net, const OperatingPoint& op) {
  check_dimensions(net, op);
  const auto idx = net.bus_index();
  DynamicGraph g;
  g.n = net.size();
  g.node_weights = net.damping();
  g.edges.reserve(net.branches.size());
  for (const auto& br : net.branches) {
    const auto i = idx.at(br.from_bus);
    const auto j = idx.at(br.to_bus);
    const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
    double w = op.v_mag[ii] * op.v_mag[jj] * br.susceptance() * std::cos(op.v_ang[ii] - op.v_ang[jj]);
    if (std::abs(w) < kWeightFloor) w = 0.0;
    g.edges.push_back({i, j, w});
  }
  return g;
}

/// Weighted Laplacian: L_ii = sum_j w_ij, L_ij = -w_ij.
inline LaplacianMatrix laplacian(const DynamicGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n);
  LaplacianMatrix L = LaplacianMatrix::Zero(n, n);
  for (const auto& e : g.edges) {
    const auto i = static_cast<Eigen::Index>(e.from), j = static_cast<Eigen::Index>(e.to);
    L(i, i) += e.weight;
    L(j, j) += e.weight;
    L(i, j) -= e.weight;
    L(j, i) -= e.weight;
  }
  return L;
}

/// Oriented incidence matrix, n x m: +1 at the sink (to_bus), -1 at the
/// source (from_bus). Column order follows Network::branches.
inline IncidenceMatrix incidence_matrix(const Network& net) {
  const auto idx = net.bus_index();
  IncidenceMatrix B = IncidenceMatrix::Zero(static_cast<Eigen::Index>(net.size()),
                                            static_cast<Eigen::Index>(net.branches.size()));
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const auto& br = net.branches[l];
    const auto col = static_cast<Eigen::Index>(l);
    B(static_cast<Eigen::Index>(idx.at(br.from_bus)), col) = -1.0;
    B(static_cast<Eigen::Index>(idx.at(br.to_bus)), col) = 1.0;
  }
  return B;
}

struct SecurityMargin {
  double max_abs_line_angle = 0.0;
  bool inside = true;  // max_abs_line_angle < pi/2
};

inline SecurityMargin security_margin(const Network& net, const Eigen::VectorXd& angles) {
  const auto idx = net.bus_index();
  SecurityMargin m;
  for (const auto& br : net.branches) {
    const double th = angles[static_cast<Eigen::Index>(idx.at(br.to_bus))] -
                      angles[static_cast<Eigen::Index>(idx.at(br.from_bus))];
    m.max_abs_line_angle = std::max(m.max_abs_line_angle, std::abs(th));
  }
  m.inside = m.max_abs_line_angle < std::numbers::pi / 2;
  return m;
}

inline SecurityMargin security_margin(const Network& net, const OperatingPoint& op) {
  check_dimensions(net, op);
  return security_margin(net, op.v_ang);
}

/// Component label per node, traversing only edges with weight > threshold.
/// Labels are numbered in order of each component's lowest node index.
inline std::vector<int> connected_components(const DynamicGraph& g, double weight_threshold = 0.0) {
  detail::DisjointSets ds(g.n);
  for (const auto& e : g.edges)
    if (e.weight > weight_threshold) ds.unite(e.from, e.to);
  return ds.labels();
}

inline int component_count(const DynamicGraph& g, double weight_threshold = 0.0) {
  return detail::count_labels(connected_components(g, weight_threshold));
}

/// Edge list CSV: i,j,weight (bus ids).
inline void write_edge_csv(std::ostream& os, const DynamicGraph& g, const Network& net) {
  os << "i,j,weight\n";
  for (const auto& e : g.edges)
    os << net.buses[e.from].id << ',' << net.buses[e.to].id << ',' << detail::fmt17(e.weight) << '\n';
}

/// Node CSV: id,damping.
inline void write_node_csv(std::ostream& os, const DynamicGraph& g, const Network& net) {
  os << "id,damping\n";
  for (std::size_t i = 0; i < g.n; ++i)
    os << net.buses[i].id << ',' << detail::fmt17(g.node_weights[static_cast<Eigen::Index>(i)]) << '\n';
}

}  // namespace gsc
