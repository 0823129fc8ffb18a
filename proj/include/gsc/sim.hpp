#pragma once

// Time-domain simulation of the coupled oscillator model
//
//   M_i dd(delta_i) + D_i d(delta_i) = omega_i + xi_i(t) - sum_j p_ij   (generators with M_i > 0)
//                     D_i d(delta_i) = omega_i + xi_i(t) - sum_j p_ij   (all other buses)
//
// with p_ij = |V_i||V_j| / x_ij sin(delta_i - delta_j), integrated by fixed-step
// RK4 in the static frame, and the coherence analytics built on top of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsc/cluster.hpp"
#include "gsc/detail/csv.hpp"
#include "gsc/detail/parallel.hpp"
#include "gsc/dyngraph.hpp"
#include "gsc/error.hpp"
#include "gsc/netmodel.hpp"
#include "gsc/powerflow.hpp"

namespace gsc {

enum class DisturbanceKind { RandomPiecewise, Step };

inline const char* to_string(DisturbanceKind k) {
  return k == DisturbanceKind::Step ? "step" : "random";
}

struct Disturbance {
  int bus_id = 0;
  double start_time = 3.0;
  double duration = 0.5;
  double amplitude = 0.5;  // p.u.
  std::uint64_t seed = 0;
  DisturbanceKind kind = DisturbanceKind::RandomPiecewise;
  double hold = 0.01;  // redraw interval of the random kind
};

struct SimulationOptions {
  double t_end = 10.0;
  double dt = 1e-3;
  // Initial d(delta)/dt of the second-order buses, indexed like Network::buses.
  // Defaults to omega_sync at every bus.
  std::optional<Eigen::VectorXd> initial_frequency;
};

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd angles;       // steps x n
  Eigen::MatrixXd frequencies;  // steps x n, d(delta)/dt
};

inline bool is_second_order(const Bus& b) {
  return b.kind == BusKind::SynchronousGenerator && b.inertia > 0.0;
}

namespace detail {

class DisturbanceSignal {
 public:
  DisturbanceSignal(const Disturbance& d, std::size_t bus_index, double dt)
      : d_(d), index_(bus_index) {
    if (!(d.duration > 0.0)) throw std::invalid_argument("disturbance duration must be > 0");
    if (!(d.start_time >= 0.0)) throw std::invalid_argument("disturbance start_time must be >= 0");
    if (!std::isfinite(d.amplitude)) throw std::invalid_argument("disturbance amplitude must be finite");
    if (d.kind == DisturbanceKind::RandomPiecewise) {
      if (!(d.hold > 0.0)) throw std::invalid_argument("disturbance hold interval must be > 0");
      if (d.hold < dt) throw std::invalid_argument("dt_hold must be >= dt");
      const auto count = static_cast<std::size_t>(std::ceil(d.duration / d.hold - 1e-9));
      std::mt19937_64 rng(d.seed);
      levels_.resize(std::max<std::size_t>(count, 1));
      for (auto& v : levels_) v = -d.amplitude + 2.0 * d.amplitude * std::generate_canonical<double, 53>(rng);
    }
    eps_ = 1e-9 * dt;
  }

  std::size_t bus_index() const { return index_; }

  double operator()(double t) const {
    const double s = t - d_.start_time;
    if (s < -eps_ || s >= d_.duration - eps_) return 0.0;
    if (d_.kind == DisturbanceKind::Step) return d_.amplitude;
    auto slot = static_cast<std::size_t>(std::max(0.0, std::floor((s + eps_) / d_.hold)));
    return levels_[std::min(slot, levels_.size() - 1)];
  }

 private:
  Disturbance d_;
  std::size_t index_;
  std::vector<double> levels_;
  double eps_ = 0.0;
};

struct Line {
  Eigen::Index i, j;
  double a;  // |V_i||V_j| / x
};

}  // namespace detail

inline Trajectory simulate(const Network& net, const OperatingPoint& op, const std::vector<Disturbance>& disturbances,
                           const SimulationOptions& opt = {}) {
  check_dimensions(net, op);
  if (!(opt.dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(opt.t_end > 0.0)) throw std::invalid_argument("t_end must be > 0");
  const auto n = static_cast<Eigen::Index>(net.size());
  const auto idx = net.bus_index();

  std::vector<detail::DisturbanceSignal> signals;
  for (const auto& d : disturbances) signals.emplace_back(d, net.index_of(d.bus_id), opt.dt);

  std::vector<detail::Line> lines;
  for (const auto& br : net.branches) {
    const auto i = static_cast<Eigen::Index>(idx.at(br.from_bus));
    const auto j = static_cast<Eigen::Index>(idx.at(br.to_bus));
    lines.push_back({i, j, op.v_mag[i] * op.v_mag[j] * br.susceptance()});
  }

  // state = [delta (n) ; velocity of second-order buses (m)]
  std::vector<Eigen::Index> second;  // bus index of each velocity slot
  Eigen::VectorXd omega(n), damp(n), inertia(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    if (!(b.damping > 0.0)) throw std::invalid_argument("bus " + std::to_string(b.id) + ": damping must be > 0");
    omega[i] = b.p_inject;
    damp[i] = b.damping;
    inertia[i] = b.inertia;
    if (is_second_order(b)) second.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(second.size());

  auto net_power = [&](double t, const Eigen::VectorXd& delta) {
    Eigen::VectorXd p = omega;
    for (const auto& s : signals) p[static_cast<Eigen::Index>(s.bus_index())] += s(t);
    for (const auto& l : lines) {
      const double f = l.a * std::sin(delta[l.i] - delta[l.j]);
      p[l.i] -= f;
      p[l.j] += f;
    }
    return p;
  };

  // derivative of the state plus the full d(delta)/dt vector
  Eigen::VectorXd freq(n);
  auto rhs = [&](double t, const Eigen::VectorXd& x) {
    const Eigen::VectorXd p = net_power(t, x.head(n));
    Eigen::VectorXd dx(n + m);
    for (Eigen::Index i = 0; i < n; ++i) freq[i] = p[i] / damp[i];
    for (Eigen::Index s = 0; s < m; ++s) {
      const auto i = second[static_cast<std::size_t>(s)];
      const double v = x[n + s];
      freq[i] = v;
      dx[n + s] = (p[i] - damp[i] * v) / inertia[i];
    }
    dx.head(n) = freq;
    return dx;
  };

  Eigen::VectorXd x(n + m);
  x.head(n) = op.v_ang;
  {
    Eigen::VectorXd v0;
    if (opt.initial_frequency) {
      if (opt.initial_frequency->size() != n) throw std::invalid_argument("initial_frequency has wrong dimension");
      v0 = *opt.initial_frequency;
    } else {
      v0 = Eigen::VectorXd::Constant(n, omega_sync(net));
    }
    for (Eigen::Index s = 0; s < m; ++s) x[n + s] = v0[second[static_cast<std::size_t>(s)]];
  }

  const auto steps = static_cast<std::size_t>(std::ceil(opt.t_end / opt.dt - 1e-9));
  Trajectory tr;
  tr.times.resize(steps + 1);
  tr.angles.resize(static_cast<Eigen::Index>(steps + 1), n);
  tr.frequencies.resize(static_cast<Eigen::Index>(steps + 1), n);

  const double h = opt.dt;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * h;
    rhs(t, x);  // fills freq at the grid point
    const auto row = static_cast<Eigen::Index>(k);
    tr.times[k] = t;
    tr.angles.row(row) = x.head(n).transpose();
    tr.frequencies.row(row) = freq.transpose();
    if (!x.allFinite() || !freq.allFinite())
      throw NumericalError("integration failure at step " + std::to_string(k) + " (t = " + std::to_string(t) +
                           "): non-finite state");
    if (k == steps) break;

    const Eigen::VectorXd k1 = rhs(t, x);
    const Eigen::VectorXd k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = rhs(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Frequency deviation and coherence

struct Window {
  double t0 = 0.0;
  double tf = 0.0;
};

struct FrequencyDeviation {
  std::vector<double> times;
  Eigen::MatrixXd e;  // samples x n, d(delta)/dt - omega_sync
  double dt = 0.0;
};

/// Samples of e_i(t) = d(delta_i)/dt - omega_sync on the grid points inside the window.
inline FrequencyDeviation frequency_deviation(const Trajectory& tr, const Network& net, const Window& w) {
  if (tr.times.size() < 2) throw ValidationError("trajectory has fewer than two samples");
  if (static_cast<std::size_t>(tr.frequencies.cols()) != net.size())
    throw std::invalid_argument("trajectory does not match the network");
  const double dt = tr.times[1] - tr.times[0];
  const double eps = 1e-9 * dt;
  if (!(w.tf > w.t0)) throw ValidationError("window must satisfy t0 < tf");
  if (w.t0 < tr.times.front() - eps || w.tf > tr.times.back() + eps)
    throw ValidationError("window [" + std::to_string(w.t0) + ", " + std::to_string(w.tf) +
                          "] lies outside the simulated grid [" + std::to_string(tr.times.front()) + ", " +
                          std::to_string(tr.times.back()) + "]");
  std::size_t first = 0;
  while (tr.times[first] < w.t0 - eps) ++first;
  std::size_t last = first;
  while (last + 1 < tr.times.size() && tr.times[last + 1] <= w.tf + eps) ++last;
  if (last == first) throw ValidationError("window contains fewer than two grid points");

  FrequencyDeviation out;
  out.dt = dt;
  out.times.assign(tr.times.begin() + static_cast<std::ptrdiff_t>(first),
                   tr.times.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  const double ws = omega_sync(net);
  out.e = tr.frequencies.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(last - first + 1));
  out.e.array() -= ws;
  return out;
}

inline constexpr double kQuiescentTolerance = 1e-10;

namespace detail {

inline double trapezoid_dot(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                            double dt) {
  const Eigen::Index n = a.size();
  if (n < 2) return 0.0;
  double s = a.dot(b) - 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]);
  return s * dt;
}

}  // namespace detail

/// L2 norm of a uniformly sampled signal (trapezoidal rule).
inline double signal_norm(const Eigen::Ref<const Eigen::VectorXd>& e, double dt) {
  return std::sqrt(std::max(0.0, detail::trapezoid_dot(e, e, dt)));
}

/// <e_i, e_j> / (|e_i| |e_j|) with trapezoidal L2 inner products.
inline double coherence(const Eigen::Ref<const Eigen::VectorXd>& ei, const Eigen::Ref<const Eigen::VectorXd>& ej,
                        double dt) {
  if (ei.size() != ej.size()) throw std::invalid_argument("coherence: signals differ in length");
  if (!(dt > 0.0)) throw std::invalid_argument("coherence: dt must be > 0");
  const double ni = signal_norm(ei, dt), nj = signal_norm(ej, dt);
  if (ni < kQuiescentTolerance || nj < kQuiescentTolerance)
    throw NumericalError("coherence undefined for a quiescent signal");
  return std::clamp(detail::trapezoid_dot(ei, ej, dt) / (ni * nj), -1.0, 1.0);
}

struct CoherenceConfig {
  Disturbance disturbance;  // bus_id and seed are set per simulation
  std::uint64_t base_seed = 42;
  SimulationOptions sim;
  std::optional<Window> window;  // default [start_time, t_end]
  unsigned jobs = 0;             // 0: hardware concurrency
};

struct CoherenceMatrix {
  Eigen::MatrixXd values;          // bus index order; row i = disturbance at bus i
  std::vector<std::size_t> order;  // display row r shows bus index order[r]
  std::vector<int> labels;         // cluster label per bus index

  Eigen::MatrixXd permuted() const {
    const auto n = static_cast<Eigen::Index>(order.size());
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c)
        out(r, c) = values(static_cast<Eigen::Index>(order[static_cast<std::size_t>(r)]),
                           static_cast<Eigen::Index>(order[static_cast<std::size_t>(c)]));
    return out;
  }
};

/// Bus indices sorted by cluster label, then by index.
inline std::vector<std::size_t> cluster_order(const std::vector<int>& labels) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  return order;
}

/// One simulation per bus with the disturbance moved to that bus (seed =
/// base_seed + bus id). Entry (i, j) is the coherence of bus j's frequency
/// deviation with bus i's. Buses whose response stays quiescent get 0.
inline CoherenceMatrix coherence_matrix(const Network& net, const OperatingPoint& op, const Partition& partition,
                                        const CoherenceConfig& cfg = {}) {
  const std::size_t n = net.size();
  if (partition.assignment.size() != n) throw std::invalid_argument("partition does not match the network");
  const Window w = cfg.window.value_or(Window{cfg.disturbance.start_time, cfg.sim.t_end});

  CoherenceMatrix cm;
  cm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  cm.labels = partition.assignment;
  cm.order = cluster_order(partition.assignment);

  std::vector<Eigen::RowVectorXd> rows(n);
  detail::parallel_for(n, cfg.jobs, [&](std::size_t i) {
    Disturbance d = cfg.disturbance;
    d.bus_id = net.buses[i].id;
    d.seed = cfg.base_seed + static_cast<std::uint64_t>(static_cast<std::int64_t>(d.bus_id));
    const auto tr = simulate(net, op, {d}, cfg.sim);
    const auto dev = frequency_deviation(tr, net, w);
    const auto ii = static_cast<Eigen::Index>(i);
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (signal_norm(dev.e.col(j), dev.dt) < kQuiescentTolerance && j != ii)
        row[j] = 0.0;
      else
        row[j] = coherence(dev.e.col(ii), dev.e.col(j), dev.dt);
    }
    rows[i] = std::move(row);
  });
  for (std::size_t i = 0; i < n; ++i) cm.values.row(static_cast<Eigen::Index>(i)) = rows[i];
  return cm;
}

struct CoherenceSummary {
  double intra_mean = 0.0;  // same cluster, off-diagonal
  double inter_mean = 0.0;
  std::size_t intra_pairs = 0;
  std::size_t inter_pairs = 0;
};

inline CoherenceSummary summarize_coherence(const CoherenceMatrix& cm) {
  CoherenceSummary s;
  const auto n = cm.values.rows();
  double intra = 0.0, inter = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (cm.labels[static_cast<std::size_t>(i)] == cm.labels[static_cast<std::size_t>(j)]) {
        intra += cm.values(i, j);
        ++s.intra_pairs;
      } else {
        inter += cm.values(i, j);
        ++s.inter_pairs;
      }
    }
  if (s.intra_pairs) s.intra_mean = intra / static_cast<double>(s.intra_pairs);
  if (s.inter_pairs) s.inter_mean = inter / static_cast<double>(s.inter_pairs);
  return s;
}

/// Trajectory CSV: t, delta_<id>..., freq_<id>...
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, const Network& net) {
  os << 't';
  for (const auto& b : net.buses) os << ",delta_" << b.id;
  for (const auto& b : net.buses) os << ",freq_" << b.id;
  os << '\n';
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    os << detail::fmt17(tr.times[k]);
    for (Eigen::Index i = 0; i < tr.angles.cols(); ++i) os << ',' << detail::fmt17(tr.angles(r, i));
    for (Eigen::Index i = 0; i < tr.frequencies.cols(); ++i) os << ',' << detail::fmt17(tr.frequencies(r, i));
    os << '\n';
  }
}

/// Coherence CSV in cluster order: bus,<bus ids...>; each row starts with the disturbed bus id.
inline void write_coherence_csv(std::ostream& os, const CoherenceMatrix& cm, const Network& net) {
  const auto p = cm.permuted();
  os << "bus";
  for (auto i : cm.order) os << ',' << net.buses[i].id;
  os << '\n';
  for (std::size_t r = 0; r < cm.order.size(); ++r) {
    os << net.buses[cm.order[r]].id;
    for (Eigen::Index c = 0; c < p.cols(); ++c) os << ',' << detail::fmt17(p(static_cast<Eigen::Index>(r), c));
    os << '\n';
  }
}

}  // namespace gsc
