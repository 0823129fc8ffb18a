#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gsc/gsc.hpp"

namespace testing {

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string data_path(const std::string& name) { return std::string(GSC_DATA_DIR) + "/" + name; }

inline gsc::Network load_fixture() { return gsc::parse_network_json(read_text(data_path("case30_fixture.json"))); }

struct EdgeSpec {
  int from, to;
  double x;
};

/// Buses 1..n, unit voltages, given injections (p.u.) and dampings; kinds from
/// the sign of the injection unless listed as generators.
inline gsc::Network make_network(const std::vector<double>& p, const std::vector<double>& damping,
                                 const std::vector<EdgeSpec>& edges, const std::vector<int>& generators = {}) {
  gsc::Network net;
  for (std::size_t i = 0; i < p.size(); ++i) {
    gsc::Bus b;
    b.id = static_cast<int>(i) + 1;
    b.p_inject = p[i];
    b.damping = damping[i];
    b.kind = gsc::BusKind::Load;
    for (int g : generators)
      if (g == b.id) b.kind = gsc::BusKind::SynchronousGenerator;
    net.buses.push_back(b);
  }
  int id = 1;
  for (const auto& e : edges) net.branches.push_back({id++, e.from, e.to, e.x});
  return net;
}

/// Graph with explicit edge weights and node weights (bus indices 0..n-1).
inline gsc::DynamicGraph make_graph(std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
                                    Eigen::VectorXd damping = {}) {
  gsc::DynamicGraph g;
  g.n = n;
  for (const auto& [i, j, w] : edges) g.edges.push_back({i, j, w});
  g.node_weights = damping.size() ? damping : Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  return g;
}

/// Two unit-weight triangles {0,1,2}, {3,4,5} joined by a 2-3 bridge.
inline gsc::DynamicGraph two_triangles(double bridge) {
  return make_graph(6, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}, {3, 4, 1.0}, {4, 5, 1.0}, {3, 5, 1.0}, {2, 3, bridge}});
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `density`; weights Uniform(0.1, 2), damping Uniform(d_lo, d_hi).
inline gsc::DynamicGraph random_connected_graph(std::mt19937_64& rng, std::size_t n, double density = 0.3,
                                                double d_lo = 0.5, double d_hi = 3.0) {
  std::uniform_real_distribution<double> w(0.1, 2.0), d(d_lo, d_hi), u(0.0, 1.0);
  gsc::DynamicGraph g;
  g.n = n;
  std::vector<std::vector<char>> used(n, std::vector<char>(n, 0));
  for (std::size_t v = 1; v < n; ++v) {
    std::uniform_int_distribution<std::size_t> pick(0, v - 1);
    const auto p = pick(rng);
    g.edges.push_back({p, v, w(rng)});
    used[p][v] = used[v][p] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!used[i][j] && u(rng) < density) g.edges.push_back({i, j, w(rng)});
  g.node_weights.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.node_weights.size(); ++i) g.node_weights[i] = d(rng);
  return g;
}

/// Largest principal-angle sine between the column spans of A and B.
inline double subspace_distance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd Qa = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ() *
                             Eigen::MatrixXd::Identity(A.rows(), A.cols());
  const Eigen::MatrixXd Qb = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ() *
                             Eigen::MatrixXd::Identity(B.rows(), B.cols());
  const Eigen::MatrixXd R = Qb - Qa * (Qa.transpose() * Qb);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(R).singularValues()(0);
}

}  // namespace testing
