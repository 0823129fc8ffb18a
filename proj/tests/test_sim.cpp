#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "support.hpp"

using Catch::Approx;
using namespace gsc;

namespace {

// Two triangles joined by a bridge, one generator per triangle.
Network twin(double bridge_x) {
  std::vector<testing::EdgeSpec> e{{1, 2, 0.2}, {2, 3, 0.2}, {1, 3, 0.2}, {4, 5, 0.2}, {5, 6, 0.2}, {4, 6, 0.2}};
  if (bridge_x > 0) e.push_back({3, 4, bridge_x});
  auto net = testing::make_network({0.3, -0.1, -0.2, 0.2, -0.1, -0.1}, {26, 1.2, 1.4, 28, 1.1, 1.3}, e, {1, 4});
  net.buses[0].inertia = 1.0;
  net.buses[3].inertia = 1.5;
  return net;
}

Trajectory run(const Network& net, const OperatingPoint& op, const std::vector<Disturbance>& d, double t_end,
               double dt = 1e-3) {
  SimulationOptions o;
  o.t_end = t_end;
  o.dt = dt;
  return simulate(net, op, d, o);
}

}  // namespace

TEST_CASE("equilibrium is preserved", "[sim]") {
  const auto net = testing::load_fixture();
  const auto op = operating_point_of(net);
  const auto tr = run(net, op, {}, 10.0);
  REQUIRE(tr.times.size() == 10001);
  CHECK(tr.times.back() == Approx(10.0).margin(1e-12));
  const double ws = omega_sync(net);
  CHECK((tr.frequencies.array() - ws).abs().maxCoeff() <= 1e-8);
  CHECK((tr.angles.rowwise() - op.v_ang.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("re-synchronization after a disturbance at bus 1", "[sim]") {
  const auto net = testing::load_fixture();
  Disturbance d;
  d.bus_id = 1;
  d.seed = 43;
  const auto tr = run(net, operating_point_of(net), {d}, 10.0);
  const Eigen::MatrixXd e = tr.frequencies.array() - omega_sync(net);
  const double peak = e.cwiseAbs().maxCoeff();
  CHECK(peak > 1e-4);
  CHECK(e.row(e.rows() - 1).cwiseAbs().maxCoeff() < peak / 10);
  // before the onset nothing moves
  const auto before = static_cast<Eigen::Index>(2999);
  CHECK(e.topRows(before).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("isolated second-order bus decays exponentially", "[sim]") {
  Network net;
  Bus b;
  b.id = 1;
  b.kind = BusKind::SynchronousGenerator;
  b.inertia = 1.0;
  b.damping = 2.0;
  net.buses.push_back(b);
  const auto op = operating_point_of(net);
  SimulationOptions o;
  o.t_end = 1.0;
  o.initial_frequency = Eigen::VectorXd::Constant(1, 0.7);
  const auto tr = simulate(net, op, {}, o);
  CHECK(tr.frequencies(tr.frequencies.rows() - 1, 0) == Approx(0.7 * std::exp(-2.0)).margin(1e-6));
  // angle is the integral of the velocity
  CHECK(tr.angles(tr.angles.rows() - 1, 0) == Approx(0.35 * (1 - std::exp(-2.0))).margin(1e-6));
}

TEST_CASE("fourth-order convergence", "[sim]") {
  const auto net = testing::load_fixture();
  auto op = operating_point_of(net);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& v : op.v_ang) v += u(rng);
  SimulationOptions o;
  o.t_end = 0.4;
  o.initial_frequency = Eigen::VectorXd::Zero(Eigen::Index(net.size()));
  for (Eigen::Index i = 0; i < o.initial_frequency->size(); ++i) (*o.initial_frequency)[i] = u(rng);

  auto end_state = [&](double dt) {
    o.dt = dt;
    const auto tr = simulate(net, op, {}, o);
    Eigen::VectorXd s(2 * tr.angles.cols());
    s << tr.angles.bottomRows(1).transpose(), tr.frequencies.bottomRows(1).transpose();
    return s;
  };
  const double h = 4e-3;
  const auto ref = end_state(h / 16);
  const double e1 = (end_state(h) - ref).cwiseAbs().maxCoeff();
  const double e2 = (end_state(h / 2) - ref).cwiseAbs().maxCoeff();
  INFO("errors " << e1 << " " << e2);
  CHECK(e1 / e2 >= 8.0);
  CHECK(e1 / e2 <= 32.0);
}

TEST_CASE("disturbance signal", "[sim]") {
  const auto net = twin(0.3);
  const auto op = operating_point_of(solve_steady_state(net).network);
  Disturbance d;
  d.bus_id = 2;
  d.start_time = 0.1;
  d.duration = 0.05;
  d.seed = 9;
  SECTION("same seed, same trajectory") {
    const auto a = run(net, op, {d}, 0.3);
    const auto b = run(net, op, {d}, 0.3);
    CHECK(a.frequencies == b.frequencies);
    d.seed = 10;
    CHECK_FALSE(run(net, op, {d}, 0.3).frequencies == a.frequencies);
  }
  SECTION("first-order frequency shows the injected level") {
    d.kind = DisturbanceKind::Step;
    d.amplitude = 0.25;
    const auto tr = run(net, op, {d}, 0.3);
    // at the onset grid point only the injection has changed
    const auto k = Eigen::Index(100);
    CHECK(tr.frequencies(k, 1) - tr.frequencies(k - 1, 1) == Approx(0.25 / 1.2).margin(1e-3));
  }
  SECTION("invalid settings") {
    d.hold = 5e-4;
    CHECK_THROWS_AS(run(net, op, {d}, 0.3), std::invalid_argument);
    d.hold = 0.01;
    d.duration = 0.0;
    CHECK_THROWS_AS(run(net, op, {d}, 0.3), std::invalid_argument);
    d.duration = 0.1;
    d.start_time = -1.0;
    CHECK_THROWS_AS(run(net, op, {d}, 0.3), std::invalid_argument);
  }
}

TEST_CASE("integration failure names the step", "[sim]") {
  auto net = twin(0.3);
  auto op = operating_point_of(net);
  op.v_ang[2] = std::numeric_limits<double>::quiet_NaN();
  try {
    run(net, op, {}, 0.1);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("frequency deviation", "[sim]") {
  const auto net = testing::make_network({0.0, 0.0}, {1, 1}, {{1, 2, 0.5}});
  Trajectory tr;
  tr.times = {0.0, 0.5, 1.0, 1.5, 2.0};
  tr.angles = Eigen::MatrixXd::Zero(5, 2);
  tr.frequencies = Eigen::MatrixXd::Random(5, 2);

  const auto dev = frequency_deviation(tr, net, {0.5, 1.5});
  CHECK(dev.times == std::vector<double>{0.5, 1.0, 1.5});
  CHECK(dev.dt == 0.5);
  CHECK(dev.e == tr.frequencies.middleRows(1, 3));  // omega_sync = 0

  auto shifted = testing::make_network({0.2, 0.2}, {1, 1}, {{1, 2, 0.5}});
  tr.frequencies.setConstant(omega_sync(shifted));
  CHECK(frequency_deviation(tr, shifted, {0.0, 2.0}).e.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(frequency_deviation(tr, net, {1.0, 3.0}), ValidationError);
  CHECK_THROWS_AS(frequency_deviation(tr, net, {-1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(frequency_deviation(tr, net, {1.0, 1.0}), ValidationError);
}

TEST_CASE("coherence of signals", "[sim]") {
  const double dt = 1e-3;
  const auto n = Eigen::Index(std::lround(2 * std::numbers::pi / dt)) + 1;
  Eigen::VectorXd s(n), c(n), e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = double(i) * dt;
    s[i] = std::sin(t);
    c[i] = std::cos(t);
    e[i] = std::exp(-t) * std::sin(3 * t) + 0.1;
  }
  CHECK(coherence(e, 2.0 * e, dt) == Approx(1.0).margin(1e-12));
  CHECK(coherence(e, -e, dt) == Approx(-1.0).margin(1e-12));
  CHECK(std::abs(coherence(s, c, dt)) <= 1e-3);
  CHECK(coherence(s, e, dt) == Approx(coherence(e, s, dt)).margin(1e-15));
  CHECK(coherence(3.0 * s, 0.5 * e, dt) == Approx(coherence(s, e, dt)).margin(1e-12));
  CHECK_THROWS_AS(coherence(e, Eigen::VectorXd::Zero(n), dt), NumericalError);
  CHECK_THROWS_AS(coherence(Eigen::VectorXd::Constant(n, 1e-14), e, dt), NumericalError);

  // trapezoid weights: ends count half
  const Eigen::Vector3d a(1, 1, 1);
  CHECK(detail::trapezoid_dot(a, a, 0.5) == Approx(1.0));
}

TEST_CASE("coherence matrix structure", "[sim]") {
  CoherenceConfig cfg;
  cfg.sim.t_end = 4.0;
  cfg.disturbance.start_time = 1.0;

  SECTION("diagonal and bounds") {
    const auto ss = solve_steady_state(twin(0.3));
    const auto cm = coherence_matrix(ss.network, operating_point_of(ss.network),
                                     Partition::from_labels({0, 0, 0, 1, 1, 1}), cfg);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(cm.values(i, i) == Approx(1.0).margin(1e-9));
    CHECK(cm.values.maxCoeff() <= 1.0 + 1e-12);
    CHECK(cm.values.minCoeff() >= -1.0 - 1e-12);
    CHECK_FALSE(cm.values.isApprox(cm.values.transpose()));
  }
  SECTION("islands give a block-diagonal matrix") {
    auto net = twin(0.0);
    for (auto& b : net.buses) b.p_inject = 0.0;
    const auto cm = coherence_matrix(net, operating_point_of(net), Partition::from_labels({0, 0, 0, 1, 1, 1}), cfg);
    CHECK(cm.values.topRightCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cm.values.bottomLeftCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cm.values.topLeftCorner(3, 3).cwiseAbs().minCoeff() > 0.0);
  }
  SECTION("cluster ordering") {
    CHECK(cluster_order({1, 0, 1, 0}) == std::vector<std::size_t>{1, 3, 0, 2});
    CoherenceMatrix cm;
    cm.values = Eigen::Matrix2d{{1, 2}, {3, 4}};
    cm.order = {1, 0};
    CHECK(cm.permuted() == Eigen::Matrix2d{{4, 3}, {2, 1}});
  }
}

TEST_CASE("coherence matrix is invariant under a rotating frame", "[sim]") {
  const auto ss = solve_steady_state(twin(0.3));
  const auto p = Partition::from_labels({0, 0, 0, 1, 1, 1});
  CoherenceConfig cfg;
  cfg.sim.t_end = 6.0;
  const auto a = coherence_matrix(ss.network, operating_point_of(ss.network), p, cfg);

  auto rot = ss.network;
  const double c = 0.3;
  for (auto& b : rot.buses) b.p_inject += c * b.damping;
  REQUIRE(omega_sync(rot) == Approx(omega_sync(ss.network) + c));
  auto op = operating_point_of(rot);
  const auto b = coherence_matrix(rot, op, p, cfg);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("case30 fixture coherence is block dominant", "[sim]") {
  const auto net = testing::load_fixture();
  const auto op = operating_point_of(net);
  const auto part = cluster_network(net, op, 5, {42, 20}).partition;
  const auto cm = coherence_matrix(net, op, part, {});
  const auto s = summarize_coherence(cm);
  CHECK(s.intra_pairs + s.inter_pairs == 30 * 29);
  CHECK(s.intra_mean > s.inter_mean);
  for (Eigen::Index i = 0; i < 30; ++i) CHECK(cm.values(i, i) == Approx(1.0).margin(1e-9));
  CHECK(cm.values.maxCoeff() <= 1.0 + 1e-12);
  CHECK(cm.values.minCoeff() >= -1.0 - 1e-12);
}

TEST_CASE("CSV writers", "[sim]") {
  const auto net = testing::make_network({0.0, 0.0}, {1, 1}, {{1, 2, 0.5}});
  Trajectory tr;
  tr.times = {0.0, 0.5};
  tr.angles = Eigen::Matrix2d{{0, 1}, {2, 3}};
  tr.frequencies = Eigen::Matrix2d{{4, 5}, {6, 7}};
  std::ostringstream os;
  write_trajectory_csv(os, tr, net);
  CHECK(os.str() == "t,delta_1,delta_2,freq_1,freq_2\n0,0,1,4,5\n0.5,2,3,6,7\n");

  CoherenceMatrix cm;
  cm.values = Eigen::Matrix2d{{1, 0.5}, {0.25, 1}};
  cm.labels = {1, 0};
  cm.order = cluster_order(cm.labels);
  std::ostringstream cs;
  write_coherence_csv(cs, cm, net);
  CHECK(cs.str() == "bus,2,1\n2,1,0.25\n1,0.5,1\n");
}
