#pragma once

// JSON artifacts written by the command-line tool.

#include <chrono>
#include <cstddef>
#include <ctime>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsc/cluster.hpp"
#include "gsc/detail/csv.hpp"
#include "gsc/netmodel.hpp"
#include "gsc/robust.hpp"
#include "gsc/sim.hpp"

namespace gsc {

using ojson = nlohmann::ordered_json;

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline ojson gaps_json(const std::vector<SpectralGap>& gaps) {
  ojson arr = ojson::array();
  for (const auto& g : gaps) arr.push_back({{"k", g.k}, {"gap", g.gap}});
  return arr;
}

/// { k, assignment: {bus id: label}, quality, rho_hat, selected_k_gaps }
inline ojson partition_json(const Network& net, const ClusterResult& res, const std::vector<SpectralGap>& gaps,
                            bool auto_k) {
  ojson j;
  j["k"] = res.partition.k;
  j["auto_k"] = auto_k;
  ojson assign = ojson::array();
  for (std::size_t i = 0; i < net.size(); ++i)
    assign.push_back({{"bus", net.buses[i].id}, {"label", res.partition.assignment[i]}});
  j["assignment"] = assign;
  ojson q = ojson::array();
  for (std::size_t c = 0; c < res.quality.clusters.size(); ++c) {
    const auto& cq = res.quality.clusters[c];
    ojson buses = ojson::array();
    for (auto i : res.partition.members(static_cast<int>(c))) buses.push_back(net.buses[i].id);
    q.push_back({{"label", c},
                 {"size", cq.size},
                 {"buses", buses},
                 {"boundary", cq.boundary},
                 {"total_damping", cq.total_damping},
                 {"phi", cq.phi},
                 {"connected", cq.connected}});
  }
  j["quality"] = q;
  j["rho_hat"] = res.quality.rho_hat;
  j["all_connected"] = res.quality.all_connected;
  j["wcss"] = res.wcss;
  j["selected_k_gaps"] = gaps_json(gaps);
  return j;
}

/// Maps display row -> bus id -> cluster for the coherence CSV.
inline ojson coherence_sidecar_json(const Network& net, const CoherenceMatrix& cm, const CoherenceSummary& s) {
  ojson rows = ojson::array();
  for (std::size_t r = 0; r < cm.order.size(); ++r)
    rows.push_back({{"row", r}, {"bus", net.buses[cm.order[r]].id}, {"cluster", cm.labels[cm.order[r]]}});
  ojson j;
  j["rows"] = rows;
  j["intra_cluster_mean"] = s.intra_mean;
  j["inter_cluster_mean"] = s.inter_mean;
  return j;
}

inline ojson study_json(const Network& net, const RobustnessStudy& st, const ScenarioOptions& opt) {
  ojson j;
  j["n_scenarios"] = st.n_scenarios;
  j["sigma_mw"] = opt.sigma_mw;
  j["base_seed"] = opt.base_seed;
  j["failures"] = st.failures;
  ojson hist = ojson::array();
  for (const auto& [k, c] : st.k_histogram) hist.push_back({{"k", k}, {"count", c}});
  j["selected_k_histogram"] = hist;
  j["modal_k"] = st.modal_k;
  j["gap"] = {{"mean", st.gap_mean}, {"variance", st.gap_variance}};
  ojson freq = ojson::array();
  for (std::size_t i = 0; i < net.size(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < st.frequencies.cols(); ++c)
      row.push_back(st.frequencies(static_cast<Eigen::Index>(i), c));
    freq.push_back({{"bus", net.buses[i].id}, {"nominal_cluster", st.nominal.assignment[i]}, {"frequencies", row}});
  }
  j["assignment_frequencies"] = freq;
  j["stable_bus_fraction_095"] = st.stable_bus_fraction(0.95);
  return j;
}

/// Scenario CSV: seed,selected_k,gap,converged
inline void write_scenarios_csv(std::ostream& os, const RobustnessStudy& st) {
  os << "seed,selected_k,gap,converged\n";
  for (const auto& r : st.scenarios)
    os << r.seed << ',' << r.selected_k << ',' << detail::fmt17(r.gap) << ',' << (r.converged ? 1 : 0) << '\n';
}

/// Converts a header-plus-rows CSV produced by this library into an array of
/// objects, one per row. Cells that parse as numbers become numbers.
inline ojson csv_to_json(const std::string& csv) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::istringstream in(csv);
  std::string line;
  ojson out = ojson::array();
  if (!std::getline(in, line)) return out;
  const auto header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    ojson row;
    for (std::size_t c = 0; c < header.size() && c < cells.size(); ++c) {
      const auto& s = cells[c];
      std::size_t used = 0;
      try {
        const double v = std::stod(s, &used);
        if (used == s.size()) {
          row[header[c]] = v;
          continue;
        }
      } catch (const std::exception&) {
      }
      row[header[c]] = s;
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace gsc
