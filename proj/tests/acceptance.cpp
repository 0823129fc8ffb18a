// Acceptance checks: one PASS/FAIL line per criterion.
//
//   acceptance [--only N[,N...]] [--allow-fail N[,N...]]
//
// Exit status is 0 when every failing criterion is listed in --allow-fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "gsc/io.hpp"
#include "support.hpp"

using namespace gsc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.insert(std::stoi(tok));
  return out;
}

Network fixture() { return testing::load_fixture(); }

// ---------------------------------------------------------------------------

Outcome c1_eigensolver() {
  Stopwatch sw;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(2, 30);
  double worst_res = 0.0, worst_orth = 0.0, worst_l1 = 0.0;
  int bad = 0;
  for (int t = 0; t < 200; ++t) {
    const auto g = testing::random_connected_graph(rng, size(rng), 0.2, 0.1, 30.0);
    const auto L = laplacian(g);
    const auto s = generalized_eig(L, g.node_weights);
    const auto n = L.rows();
    const double res = eig_residual(L, g.node_weights, s) / L.norm();
    const double orth = (s.vectors.transpose() * g.node_weights.asDiagonal() * s.vectors -
                         Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    const double l1 = std::abs(s.values[0]);
    worst_res = std::max(worst_res, res);
    worst_orth = std::max(worst_orth, orth);
    worst_l1 = std::max(worst_l1, l1);
    if (res > 1e-8 || orth > 1e-8 || l1 > 1e-9) ++bad;
  }
  const double secs = sw.seconds();
  return {bad == 0 && secs < 5.0,
          fmt("200 graphs, max residual/|L|_F %.2e, max D-orth err %.2e, max |lambda_1| %.2e, %.2f s", worst_res,
              worst_orth, worst_l1, secs)};
}

Outcome c2_pencil_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(2, 8);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto g = testing::random_connected_graph(rng, size(rng), 0.4, 0.1, 30.0);
    const auto L = laplacian(g);
    const auto s = generalized_eig(L, g.node_weights);
    const Eigen::MatrixXd J = -(g.node_weights.cwiseInverse().asDiagonal() * L);
    Eigen::VectorXd ref = -Eigen::EigenSolver<Eigen::MatrixXd>(J).eigenvalues().real();
    std::sort(ref.begin(), ref.end());
    worst = std::max(worst, (ref - s.values).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, fmt("200 pencils n <= 8, max |diff| %.2e", worst)};
}

Outcome c3_sandwich() {
  Stopwatch sw;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> size(4, 10);
  int lower = 0, upper = 0, relaxed = 0, checks = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = testing::random_connected_graph(rng, size(rng));
    const auto L = laplacian(g);
    const auto eig = generalized_eig(L, g.node_weights);
    for (std::size_t k : {2u, 3u}) {
      const auto bf = brute_force_partition(L, g.node_weights, k);
      const auto sc = cluster_with_eigs(g, eig, k, {42, 20});
      const double lk = eig.values[static_cast<Eigen::Index>(k) - 1];
      if (lk > bf.rho_star + 1e-10) ++lower;
      if (bf.rho_star > sc.quality.rho_hat + 1e-12) ++upper;
      if (lk > 2.0 * bf.rho_star + 1e-10) ++relaxed;
      ++checks;
    }
  }
  const double secs = sw.seconds();
  return {lower == 0 && upper == 0 && secs < 60.0,
          fmt("%d checks: lambda_k > rho* in %d, rho* > rho_hat in %d (lambda_k > 2 rho* in %d), %.2f s", checks,
              lower, upper, relaxed, secs)};
}

Outcome c4_two_triangles() {
  bool ok = true;
  std::string worst;
  for (double b : {0.01, 0.1, 0.5}) {
    // unit weights inside each triangle, bridge weight b, D = I, zero angles
    auto net = testing::make_network(std::vector<double>(6, 0.0), std::vector<double>(6, 1.0),
                                     {{1, 2, 1.0}, {2, 3, 1.0}, {1, 3, 1.0}, {4, 5, 1.0}, {5, 6, 1.0}, {4, 6, 1.0},
                                      {3, 4, 1.0 / b}},
                                     {1, 4});
    auto op = operating_point_of(net);
    op.v_ang.setZero();
    const auto res = cluster_network(net, op, 2, {42, 20});
    const auto g = build_dynamic_graph(net, op);
    const auto bf = brute_force_partition(laplacian(g), g.node_weights, 2);
    const double target = b / 3.0;
    const bool same = res.partition == bf.partition;
    const bool this_ok = same && std::abs(res.quality.rho_hat - target) <= 1e-10 &&
                         std::abs(bf.rho_star - target) <= 1e-10;
    ok = ok && this_ok;
    worst += fmt("b=%g: rho_hat %.12g rho* %.12g%s; ", b, res.quality.rho_hat, bf.rho_star,
                 same ? "" : " (partition differs)");
  }
  return {ok, worst};
}

Outcome c5_dc() {
  const auto net = fixture();
  auto op = operating_point_of(net);
  op.v_ang.setZero();
  op.v_mag.setOnes();
  const auto g = build_dynamic_graph(net, op);
  std::size_t exact = 0;
  for (std::size_t l = 0; l < net.branches.size(); ++l)
    if (g.edges[l].weight == 1.0 / net.branches[l].reactance) ++exact;
  return {exact == net.branches.size(), fmt("%zu of %zu weights equal 1/x exactly", exact, net.branches.size())};
}

Outcome c6_uniform_damping() {
  std::mt19937_64 rng(6);
  std::vector<DynamicGraph> graphs;
  {
    const auto net = fixture();
    graphs.push_back(build_dynamic_graph(net, operating_point_of(net)));
  }
  for (int t = 0; t < 5; ++t) graphs.push_back(testing::random_connected_graph(rng, 20));
  bool ok = true;
  double worst_gap = 0.0;
  int mismatches = 0;
  for (auto g : graphs) {
    g.node_weights.setOnes();
    const auto base_eig = generalized_eig(laplacian(g), g.node_weights);
    const auto km = default_k_max(g.n);
    const auto base_gaps = relative_spectral_gaps(base_eig.values, km);
    const auto k = select_k(base_gaps);
    const auto base = cluster_with_eigs(g, base_eig, k, {42, 20});
    for (double alpha : {0.5, 10.0}) {
      auto h = g;
      h.node_weights.setConstant(alpha);
      const auto eig = generalized_eig(laplacian(h), h.node_weights);
      const auto gaps = relative_spectral_gaps(eig.values, km);
      for (std::size_t i = 0; i < gaps.size(); ++i) worst_gap = std::max(worst_gap, std::abs(gaps[i].gap - base_gaps[i].gap));
      if (!(cluster_with_eigs(h, eig, k, {42, 20}).partition == base.partition)) ++mismatches;
    }
  }
  ok = mismatches == 0 && worst_gap <= 1e-12;
  return {ok, fmt("%zu graphs x alpha {0.5, 10}: %d assignment mismatches, max gap diff %.2e", graphs.size(),
                  mismatches, worst_gap)};
}

Outcome c7_simulator() {
  const auto net = fixture();
  const auto op = operating_point_of(net);
  SimulationOptions o;  // 10 s at 1 ms
  const auto tr = simulate(net, op, {}, o);
  const double drift = (tr.frequencies.array() - omega_sync(net)).abs().maxCoeff();

  auto start = op;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& v : start.v_ang) v += u(rng);
  SimulationOptions s;
  s.t_end = 0.4;
  s.initial_frequency = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.size()));
  for (auto& v : *s.initial_frequency) v = u(rng);
  auto end_state = [&](double dt) {
    s.dt = dt;
    const auto r = simulate(net, start, {}, s);
    Eigen::VectorXd x(2 * r.angles.cols());
    x << r.angles.bottomRows(1).transpose(), r.frequencies.bottomRows(1).transpose();
    return x;
  };
  const double h = 4e-3;
  const auto ref = end_state(h / 16);
  const double e1 = (end_state(h) - ref).cwiseAbs().maxCoeff();
  const double e2 = (end_state(h / 2) - ref).cwiseAbs().maxCoeff();
  const double factor = e1 / e2;
  return {drift <= 1e-8 && factor >= 8.0 && factor <= 32.0,
          fmt("equilibrium drift %.2e over 10 s, RK4 halving factor %.2f", drift, factor)};
}

Outcome c8_coherence() {
  const auto net = fixture();
  const auto op = operating_point_of(net);
  const auto g = build_dynamic_graph(net, op);
  const auto eig = generalized_eig(laplacian(g), g.node_weights);
  const auto k = select_k(relative_spectral_gaps(eig.values, default_k_max(net.size())));
  const auto part = cluster_with_eigs(g, eig, k, {42, 20}).partition;

  CoherenceConfig cfg;  // random disturbance, 0.5 p.u., 10 ms hold, onset 3 s for 0.5 s; 10 s at 1 ms
  cfg.base_seed = 42;
  Stopwatch sw;
  const auto cm = coherence_matrix(net, op, part, cfg);
  const double secs = sw.seconds();
  const auto s = summarize_coherence(cm);
  const double margin = s.intra_mean - s.inter_mean;

  // not counted: same check with a constant step disturbance
  cfg.disturbance.kind = DisturbanceKind::Step;
  const auto step = summarize_coherence(coherence_matrix(net, op, part, cfg));

  return {margin >= 0.2 && secs < 60.0,
          fmt("k=%zu, intra %.4f, inter %.4f, margin %.4f (need >= 0.2), %.2f s; step-disturbance margin %.4f "
              "(diagnostic)",
              k, s.intra_mean, s.inter_mean, margin, secs, step.intra_mean - step.inter_mean)};
}

Outcome c9_select_k() {
  const auto net = fixture();
  const auto g = build_dynamic_graph(net, operating_point_of(net));
  const auto eig = generalized_eig(laplacian(g), g.node_weights);
  const auto gaps = relative_spectral_gaps(eig.values, default_k_max(net.size()));
  const auto k = select_k(gaps);
  if (k == 5) return {true, fmt("selected k = 5, gap %.4f", gaps[3].gap)};

  // fallback: modal k across 20 damping seeds must be unique
  const auto raw = parse_matpower_case(testing::read_text(testing::data_path("case30.m"))).network;
  std::map<std::size_t, int> hist;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ss = solve_steady_state(sample_dynamic_parameters(raw, seed));
    const auto gs = build_dynamic_graph(ss.network, operating_point_of(ss.network));
    const auto e = generalized_eig(laplacian(gs), gs.node_weights);
    ++hist[select_k(relative_spectral_gaps(e.values, default_k_max(net.size())))];
  }
  int top = 0, ties = 0;
  for (const auto& [kk, c] : hist) top = std::max(top, c);
  for (const auto& [kk, c] : hist) ties += c == top;
  return {ties == 1, fmt("selected k = %zu (not 5); modal k unique across 20 seeds: %s", k, ties == 1 ? "yes" : "no")};
}

Outcome c10_eigenvalue_bound() {
  const auto L2 = laplacian(testing::make_graph(2, {{0, 1, 1.0}}));
  const auto dL2 = laplacian(testing::make_graph(2, {{0, 1, 0.1}}));
  const auto ex = eigenvalue_bound_check(L2, Eigen::Vector2d::Ones(), dL2);
  const bool example_ok = std::abs(ex.observed_max_chordal - 0.03701) <= 1e-5 && std::abs(ex.bound - 0.2) <= 1e-12 &&
                          ex.holds;

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> frac(0.01, 0.99);
  std::normal_distribution<double> nd;
  int violations = 0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto g = testing::random_connected_graph(rng, 8);
    const double dmin = g.node_weights.minCoeff();
    Eigen::MatrixXd dL;
    if (t % 2 == 0) {
      dL = laplacian(testing::random_connected_graph(rng, 8));
    } else {
      dL.resize(8, 8);
      for (auto& v : dL.reshaped()) v = nd(rng);
      dL = (0.5 * (dL + dL.transpose())).eval();
    }
    dL *= frac(rng) * dmin / spectral_norm(dL);
    const auto rep = eigenvalue_bound_check(laplacian(g), g.node_weights, dL);
    if (!rep.applicable || !rep.holds) ++violations;
    if (rep.bound > 0) worst_ratio = std::max(worst_ratio, rep.observed_max_chordal / rep.bound);
  }
  return {example_ok && violations == 0,
          fmt("2-node example observed %.5f <= bound %.3f; 100 trials: %d violations, max observed/bound %.3f",
              ex.observed_max_chordal, ex.bound, violations, worst_ratio)};
}

Outcome c11_sin_theta() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(0.8, 1.5), d(0.8, 2.0), eps(1e-4, 0.05), dd(-0.05, 0.05);
  std::normal_distribution<double> nd;
  int violations = 0, trials = 0, skipped = 0;
  double worst_ratio = 0.0;
  while (trials < 100) {
    DynamicGraph g;
    g.n = 8;
    for (std::size_t base : {0u, 4u})
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) g.edges.push_back({base + i, base + j, w(rng)});
    g.edges.push_back({3, 4, 0.05});
    g.node_weights.resize(8);
    for (auto& v : g.node_weights) v = d(rng);
    Eigen::MatrixXd dL(8, 8);
    for (auto& v : dL.reshaped()) v = nd(rng);
    dL = (0.5 * (dL + dL.transpose())).eval();
    dL *= eps(rng) / spectral_norm(dL);
    Eigen::VectorXd dD(8);
    for (auto& v : dD) v = dd(rng);
    const auto rep = sin_theta_check(laplacian(g), g.node_weights, dL, dD, 2);
    if (!(rep.delta > 0.1)) {
      ++skipped;
      continue;
    }
    ++trials;
    if (rep.observed > rep.bound) ++violations;
    worst_ratio = std::max(worst_ratio, rep.observed / rep.bound);
  }
  return {violations == 0, fmt("100 trials (delta > 0.1, %d draws skipped): %d violations, max observed/bound %.3f",
                               skipped, violations, worst_ratio)};
}

Outcome c12_study_determinism() {
  const auto net = fixture();
  ScenarioOptions o;
  o.n_scenarios = 100;
  o.jobs = 1;
  const auto a = study_json(net, scenario_study(net, o), o);  // the CLI adds generated_at on top of this
  o.jobs = 4;
  const auto b = study_json(net, scenario_study(net, o), o);
  const bool same = a.dump(2) == b.dump(2);
  return {same, fmt("100 scenarios, jobs 1 vs 4: study.json %s", same ? "identical" : "differs")};
}

Outcome c13_study() {
  const auto net = fixture();
  ScenarioOptions o;
  o.n_scenarios = 200;
  Stopwatch sw;
  const auto st = scenario_study(net, o);
  const double secs = sw.seconds();
  const double frac = st.stable_bus_fraction(0.95);
  std::string hist;
  for (const auto& [k, c] : st.k_histogram) hist += fmt("%zu:%zu ", k, c);
  return {st.modal_k == 5 && frac >= 0.9 && secs < 120.0,
          fmt("200 scenarios, sigma %.4f MW: modal k %zu (histogram %sfailures %zu), stable buses %.1f%%, gap "
              "mean %.4f var %.4f, %.2f s",
              o.sigma_mw, st.modal_k, hist.c_str(), st.failures, 100.0 * frac, st.gap_mean, st.gap_variance, secs)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, allow;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc)
      only = parse_list(argv[++i]);
    else if (a == "--allow-fail" && i + 1 < argc)
      allow = parse_list(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--only N,...] [--allow-fail N,...]\n";
      return 2;
    }
  }

  const std::vector<Criterion> all{
      {1, "eigensolver correctness", c1_eigensolver},
      {2, "pencil vs unsymmetric oracle", c2_pencil_oracle},
      {3, "lambda_k <= rho* <= rho_hat", c3_sandwich},
      {4, "two-triangle benchmark", c4_two_triangles},
      {5, "DC reduction", c5_dc},
      {6, "uniform damping equivalence", c6_uniform_damping},
      {7, "simulator equilibrium and order", c7_simulator},
      {8, "coherence block dominance", c8_coherence},
      {9, "k selection on the fixture", c9_select_k},
      {10, "eigenvalue perturbation bound", c10_eigenvalue_bound},
      {11, "eigenspace perturbation bound", c11_sin_theta},
      {12, "robustness study determinism", c12_study_determinism},
      {13, "robustness study on the fixture", c13_study},
  };

  int unexpected = 0, failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " -- " << r.detail
              << std::endl;
    if (!r.pass) {
      ++failed;
      if (!allow.count(c.id)) ++unexpected;
    }
  }
  std::cout << failed << " failing, " << unexpected << " not in the allowed list" << std::endl;
  return unexpected == 0 ? 0 : 1;
}
