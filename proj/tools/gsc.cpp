// gsc: command-line front end. Exit codes: 0 success, 2 input/validation
// error, 3 numerical failure.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gsc/gsc.hpp"
#include "gsc/io.hpp"

namespace fs = std::filesystem;
using namespace gsc;

namespace {

struct Common {
  std::string case_path;
  std::string format = "auto";
  std::uint64_t seed = 42;
  std::string damping_gen = "25,30";
  std::string damping_load = "1,1.5";
  std::string inertia = "0.5,2";
  bool resample = false;
  std::string out = ".";
  std::string emit = "csv";
  unsigned jobs = 0;
  bool no_timestamp = false;
};

struct KChoice {
  std::size_t k = 0;
  bool auto_k = false;
  std::size_t k_max = 0;
  int restarts = 20;
};

struct SimFlags {
  int disturb_bus = 0;  // 0: lowest bus id
  double amplitude = 0.5;
  double onset = 3.0;
  double duration = 0.5;
  double dt_hold = 0.01;
  std::string kind = "random";
  double t_end = 10.0;
  double dt = 1e-3;
};

Range parse_range(const std::string& text, const char* flag) {
  const auto comma = text.find(',');
  auto num = [&](std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ValidationError(std::string(flag) + ": expected LO,HI, got '" + text + "'");
    return v;
  };
  if (comma == std::string::npos) throw ValidationError(std::string(flag) + ": expected LO,HI, got '" + text + "'");
  const std::string_view sv(text);
  return {num(sv.substr(0, comma)), num(sv.substr(comma + 1))};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open case file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Loaded {
  SteadyState steady;
  bool sampled = false;
};

Loaded load_case(const Common& c) {
  std::string fmt = c.format;
  if (fmt == "auto") fmt = fs::path(c.case_path).extension() == ".json" ? "json" : "matpower";
  if (fmt != "json" && fmt != "matpower") throw ValidationError("--format must be matpower, json or auto");
  const std::string text = read_file(c.case_path);

  Network net;
  bool sample = c.resample;
  if (fmt == "matpower") {
    auto parsed = parse_matpower_case(text);
    for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
    net = std::move(parsed.network);
    sample = true;
  } else {
    net = parse_network_json(text);
  }
  if (sample) {
    DynamicRanges r;
    r.gen_damping = parse_range(c.damping_gen, "--damping-gen");
    r.load_damping = parse_range(c.damping_load, "--damping-load");
    r.gen_inertia = parse_range(c.inertia, "--inertia");
    net = sample_dynamic_parameters(std::move(net), c.seed, r);
  }
  Loaded out;
  out.sampled = sample;
  out.steady = solve_steady_state(std::move(net));
  if (out.steady.rebalanced) std::cerr << "note: injections rebalanced to a lossless balance\n";
  if (!out.steady.report.secure)
    std::cerr << "warning: operating point outside the security region (max line angle "
              << out.steady.report.max_line_angle << " rad)\n";
  return out;
}

fs::path out_dir(const Common& c) {
  fs::path dir(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + c.out + "': " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw ValidationError("write failed for '" + path.string() + "'");
}

// Writes a table as <stem>.csv, or as <stem>.json when --emit json.
void write_table(const Common& c, const fs::path& dir, const std::string& stem, const std::string& csv) {
  if (c.emit == "json")
    write_text(dir / (stem + ".json"), csv_to_json(csv).dump(2) + "\n");
  else
    write_text(dir / (stem + ".csv"), csv);
}

void write_json(const Common& c, const fs::path& path, ojson j, const std::string& command) {
  ojson doc;
  doc["command"] = command;
  doc["case"] = fs::path(c.case_path).filename().string();
  doc["seed"] = c.seed;
  if (!c.no_timestamp) doc["generated_at"] = utc_timestamp();
  for (auto& [k, v] : j.items()) doc[k] = v;
  write_text(path, doc.dump(2) + "\n");
}

template <class Fn>
std::string to_csv(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

void write_gaps_csv(std::ostream& os, const std::vector<SpectralGap>& gaps) {
  os << "k,gap\n";
  for (const auto& g : gaps) os << g.k << ',' << detail::fmt17(g.gap) << '\n';
}

std::size_t resolve_k_max(const KChoice& kc, std::size_t n) {
  const std::size_t k_max = kc.k_max ? kc.k_max : default_k_max(n);
  if (k_max < 2 || k_max > n - 1) throw ValidationError("--kmax must satisfy 2 <= kmax <= n - 1");
  return k_max;
}

struct Clustered {
  ClusterResult result;
  std::vector<SpectralGap> gaps;
  bool auto_k = false;
};

Clustered run_cluster(const Network& net, const Common& c, const KChoice& kc) {
  const auto op = operating_point_of(net);
  const auto g = build_dynamic_graph(net, op);
  auto eig = generalized_eig(laplacian(g), g.node_weights);
  Clustered out;
  out.auto_k = kc.auto_k || kc.k == 0;
  if (net.size() >= 3) out.gaps = relative_spectral_gaps(eig.values, resolve_k_max(kc, net.size()));
  std::size_t k = kc.k;
  if (out.auto_k) {
    if (out.gaps.empty()) throw ValidationError("--auto-k needs at least 3 buses");
    k = select_k(out.gaps);
  }
  if (k < 2 || k > net.size()) throw ValidationError("--k must satisfy 2 <= k <= n");
  out.result = cluster_with_eigs(g, std::move(eig), k, ClusterOptions{c.seed, kc.restarts});
  return out;
}

int cmd_cluster(const Common& c, const KChoice& kc) {
  const auto loaded = load_case(c);
  const auto& net = loaded.steady.network;
  const auto cl = run_cluster(net, c, kc);
  const auto dir = out_dir(c);
  std::vector<int> ids;
  for (const auto& b : net.buses) ids.push_back(b.id);
  const auto g = build_dynamic_graph(net, operating_point_of(net));

  write_json(c, dir / "partition.json", partition_json(net, cl.result, cl.gaps, cl.auto_k), "cluster");
  write_table(c, dir, "eigenvalues", to_csv([&](auto& os) { write_spectrum_csv(os, cl.result.eig.values); }));
  write_table(c, dir, "gaps", to_csv([&](auto& os) { write_gaps_csv(os, cl.gaps); }));
  write_table(c, dir, "embedding", to_csv([&](auto& os) { write_embedding_csv(os, cl.result.embedding, ids); }));
  write_table(c, dir, "graph_edges", to_csv([&](auto& os) { write_edge_csv(os, g, net); }));
  write_table(c, dir, "graph_nodes", to_csv([&](auto& os) { write_node_csv(os, g, net); }));
  std::cout << "k = " << cl.result.partition.k << ", rho_hat = " << cl.result.quality.rho_hat << '\n';
  return 0;
}

int cmd_eigs(const Common& c, const KChoice& kc) {
  const auto loaded = load_case(c);
  const auto& net = loaded.steady.network;
  const auto g = build_dynamic_graph(net, operating_point_of(net));
  const auto eig = generalized_eig(laplacian(g), g.node_weights);
  const auto dir = out_dir(c);
  write_table(c, dir, "spectrum", to_csv([&](auto& os) { write_spectrum_csv(os, eig.values); }));
  if (net.size() >= 3) {
    const auto gaps = relative_spectral_gaps(eig.values, resolve_k_max(kc, net.size()));
    write_table(c, dir, "gaps", to_csv([&](auto& os) { write_gaps_csv(os, gaps); }));
    std::cout << "selected k = " << select_k(gaps) << '\n';
  }
  return 0;
}

SimulationOptions sim_options(const SimFlags& s) {
  SimulationOptions o;
  o.t_end = s.t_end;
  o.dt = s.dt;
  return o;
}

Disturbance disturbance_of(const SimFlags& s, const Network& net) {
  Disturbance d;
  d.bus_id = s.disturb_bus;
  if (d.bus_id == 0) {
    d.bus_id = net.buses.front().id;
    for (const auto& b : net.buses) d.bus_id = std::min(d.bus_id, b.id);
  }
  d.amplitude = s.amplitude;
  d.start_time = s.onset;
  d.duration = s.duration;
  d.hold = s.dt_hold;
  if (s.kind == "random")
    d.kind = DisturbanceKind::RandomPiecewise;
  else if (s.kind == "step")
    d.kind = DisturbanceKind::Step;
  else
    throw ValidationError("--disturb-kind must be random or step");
  if (!(s.dt > 0.0)) throw ValidationError("--dt must be > 0");
  if (d.kind == DisturbanceKind::RandomPiecewise && s.dt_hold < s.dt)
    throw ValidationError("--dt-hold must be >= --dt");
  return d;
}

int cmd_simulate(const Common& c, const SimFlags& s) {
  const auto loaded = load_case(c);
  const auto& net = loaded.steady.network;
  auto d = disturbance_of(s, net);
  d.seed = c.seed + static_cast<std::uint64_t>(static_cast<std::int64_t>(d.bus_id));
  const auto tr = simulate(net, operating_point_of(net), {d}, sim_options(s));
  const auto dir = out_dir(c);
  write_table(c, dir, "trajectory", to_csv([&](auto& os) { write_trajectory_csv(os, tr, net); }));
  return 0;
}

int cmd_coherence(const Common& c, const KChoice& kc, const SimFlags& s) {
  const auto loaded = load_case(c);
  const auto& net = loaded.steady.network;
  const auto cl = run_cluster(net, c, kc);
  CoherenceConfig cfg;
  cfg.disturbance = disturbance_of(s, net);
  cfg.base_seed = c.seed;
  cfg.sim = sim_options(s);
  cfg.jobs = c.jobs;
  const auto cm = coherence_matrix(net, operating_point_of(net), cl.result.partition, cfg);
  const auto summary = summarize_coherence(cm);
  const auto dir = out_dir(c);
  write_table(c, dir, "coherence", to_csv([&](auto& os) { write_coherence_csv(os, cm, net); }));
  write_json(c, dir / "coherence_clusters.json", coherence_sidecar_json(net, cm, summary), "coherence");
  std::cout << "intra-cluster mean " << summary.intra_mean << ", inter-cluster mean " << summary.inter_mean << '\n';
  return 0;
}

int cmd_oracle(const Common& c, const KChoice& kc) {
  const auto loaded = load_case(c);
  const auto& net = loaded.steady.network;
  if (net.size() > kBruteForceMaxNodes)
    throw ValidationError("oracle is limited to n <= " + std::to_string(kBruteForceMaxNodes) + " buses");
  if (net.size() < 3) throw ValidationError("oracle needs at least 3 buses");
  const auto g = build_dynamic_graph(net, operating_point_of(net));
  const auto L = laplacian(g);
  const auto eig = generalized_eig(L, g.node_weights);
  const std::size_t k_max = kc.k_max ? kc.k_max : std::min<std::size_t>(4, net.size() - 1);
  if (k_max < 2 || k_max > net.size()) throw ValidationError("--kmax must satisfy 2 <= kmax <= n");
  std::ostringstream os;
  os << "k,lambda_k,rho_star,rho_hat\n";
  for (std::size_t k = 2; k <= k_max; ++k) {
    const auto bf = brute_force_partition(L, g.node_weights, k);
    const auto res = cluster_with_eigs(g, eig, k, ClusterOptions{c.seed, kc.restarts});
    // both columns scored by the same routine so equal partitions print equal values
    const double rho_star = evaluate_partition(bf.partition, g).rho_hat;
    os << k << ',' << detail::fmt17(eig.values[static_cast<Eigen::Index>(k - 1)]) << ','
       << detail::fmt17(rho_star) << ',' << detail::fmt17(res.quality.rho_hat) << '\n';
  }
  write_table(c, out_dir(c), "rho_comparison", os.str());
  return 0;
}

int cmd_robustness(const Common& c, const KChoice& kc, std::size_t scenarios, double sigma_mw) {
  const auto loaded = load_case(c);
  const auto& net = loaded.steady.network;
  ScenarioOptions opt;
  opt.n_scenarios = scenarios;
  opt.sigma_mw = sigma_mw;
  opt.base_seed = c.seed;
  opt.cluster_seed = c.seed;
  opt.jobs = c.jobs;
  opt.restarts = kc.restarts;
  if (kc.k_max) opt.k_max = resolve_k_max(kc, net.size());
  if (scenarios == 0) throw ValidationError("--scenarios must be > 0");
  if (!(sigma_mw >= 0.0)) throw ValidationError("--sigma-mw must be >= 0");
  const auto st = scenario_study(net, opt);
  const auto dir = out_dir(c);
  write_json(c, dir / "study.json", study_json(net, st, opt), "robustness");
  write_table(c, dir, "scenarios", to_csv([&](auto& os) { write_scenarios_csv(os, st); }));
  std::cout << "modal k = " << st.modal_k << ", failures = " << st.failures << '\n';
  return 0;
}

int cmd_sample(const Common& c, const std::string& file) {
  const auto loaded = load_case(c);
  const fs::path path = file.empty() ? out_dir(c) / "network.json" : fs::path(file);
  write_text(path, serialize_network_json(loaded.steady.network));
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--case", c.case_path, "Case file (MATPOWER .m or network JSON)")->required();
  sub->add_option("--format", c.format, "matpower, json or auto (by extension)");
  sub->add_option("--seed", c.seed, "Seed for dynamic parameters, k-means and disturbances");
  sub->add_option("--damping-gen", c.damping_gen, "Generator damping range LO,HI");
  sub->add_option("--damping-load", c.damping_load, "Load damping range LO,HI");
  sub->add_option("--inertia", c.inertia, "Generator inertia range LO,HI");
  sub->add_flag("--resample", c.resample, "Resample dynamic parameters of a JSON case");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--emit", c.emit, "Table format: csv or json")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--jobs", c.jobs, "Worker threads (0: all cores)");
  sub->add_flag("--no-timestamp", c.no_timestamp, "Omit generated_at from JSON output");
}

void add_k(CLI::App* sub, KChoice& kc, bool with_k) {
  if (with_k) {
    auto* k = sub->add_option("--k", kc.k, "Number of clusters");
    auto* a = sub->add_flag("--auto-k", kc.auto_k, "Choose k by the largest relative spectral gap");
    k->excludes(a);
  }
  sub->add_option("--kmax", kc.k_max, "Largest k considered");
  sub->add_option("--restarts", kc.restarts, "k-means restarts");
}

void add_sim(CLI::App* sub, SimFlags& s) {
  sub->add_option("--disturb-bus", s.disturb_bus, "Disturbed bus id (default: lowest id)");
  sub->add_option("--disturb-amp", s.amplitude, "Disturbance amplitude, p.u.");
  sub->add_option("--disturb-kind", s.kind, "random or step");
  sub->add_option("--onset", s.onset, "Disturbance onset, s");
  sub->add_option("--duration", s.duration, "Disturbance duration, s");
  sub->add_option("--dt-hold", s.dt_hold, "Hold interval of the random disturbance, s");
  sub->add_option("--t-end", s.t_end, "Simulated time, s");
  sub->add_option("--dt", s.dt, "RK4 step, s");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized spectral clustering of power networks"};
  app.require_subcommand(1);

  Common common;
  KChoice kc;
  SimFlags sim;
  std::size_t scenarios = 1000;
  double sigma_mw = std::sqrt(5.0);
  std::string sample_file;

  auto* cluster = app.add_subcommand("cluster", "Cluster the dynamic graph");
  add_common(cluster, common);
  add_k(cluster, kc, true);

  auto* eigs = app.add_subcommand("eigs", "Spectrum of (L, D) and relative gaps");
  add_common(eigs, common);
  add_k(eigs, kc, false);

  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a disturbance");
  add_common(simulate_cmd, common);
  add_sim(simulate_cmd, sim);

  auto* coherence_cmd = app.add_subcommand("coherence", "Coherence matrix over all disturbance locations");
  add_common(coherence_cmd, common);
  add_k(coherence_cmd, kc, true);
  add_sim(coherence_cmd, sim);

  auto* oracle = app.add_subcommand("oracle", "Compare rho_hat with the exhaustive optimum (n <= 14)");
  add_common(oracle, common);
  add_k(oracle, kc, false);

  auto* robustness = app.add_subcommand("robustness", "Randomized operating-point study");
  add_common(robustness, common);
  add_k(robustness, kc, false);
  robustness->add_option("--scenarios", scenarios, "Number of scenarios");
  robustness->add_option("--sigma-mw", sigma_mw, "Standard deviation of the load noise, MW");

  auto* sample = app.add_subcommand("sample", "Sample dynamic parameters, solve and write network JSON");
  add_common(sample, common);
  sample->add_option("--file", sample_file, "Output file (default: <out>/network.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cluster) return cmd_cluster(common, kc);
    if (*eigs) return cmd_eigs(common, kc);
    if (*simulate_cmd) return cmd_simulate(common, sim);
    if (*coherence_cmd) return cmd_coherence(common, kc, sim);
    if (*oracle) return cmd_oracle(common, kc);
    if (*robustness) return cmd_robustness(common, kc, scenarios, sigma_mw);
    if (*sample) return cmd_sample(common, sample_file);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
