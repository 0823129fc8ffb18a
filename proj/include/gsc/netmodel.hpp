#pragma once

// Network data model: buses, lossless branches, operating points, the
// MATPOWER case subset and native JSON readers, validation, and random
// sampling of the per-bus dynamic parameters (inertia, damping).
//
// Units are per unit throughout. MW only appears at the file boundary and is
// divided by base_mva on the way in.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gsc/detail/components.hpp"
#include "gsc/error.hpp"

namespace gsc {

enum class BusKind { SynchronousGenerator, InverterSource, Load };

inline const char* to_string(BusKind k) {
  switch (k) {
    case BusKind::SynchronousGenerator: return "generator";
    case BusKind::InverterSource: return "inverter";
    case BusKind::Load: return "load";
  }
  return "load";
}

inline bool is_source(BusKind k) { return k != BusKind::Load; }

struct Bus {
  int id = 0;
  BusKind kind = BusKind::Load;
  double v_mag = 1.0;
  std::optional<double> v_ang;  // radians; absent until an operating point exists
  double p_inject = 0.0;        // positive = generation
  double inertia = 0.0;         // zero for first-order buses
  double damping = 1.0;

  bool operator==(const Bus&) const = default;
};

/// Lossless branch. Resistance is not part of the model.
struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;

  double susceptance() const { return 1.0 / reactance; }
  bool operator==(const Branch&) const = default;
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  double base_mva = 100.0;

  std::size_t size() const { return buses.size(); }

  std::unordered_map<int, std::size_t> bus_index() const {
    std::unordered_map<int, std::size_t> idx;
    idx.reserve(buses.size());
    for (std::size_t i = 0; i < buses.size(); ++i) idx.emplace(buses[i].id, i);
    return idx;
  }

  std::size_t index_of(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == bus_id) return i;
    throw std::invalid_argument("unknown bus id " + std::to_string(bus_id));
  }

  Eigen::VectorXd damping() const {
    Eigen::VectorXd d(buses.size());
    for (std::size_t i = 0; i < buses.size(); ++i) d[i] = buses[i].damping;
    return d;
  }

  Eigen::VectorXd injections() const {
    Eigen::VectorXd w(buses.size());
    for (std::size_t i = 0; i < buses.size(); ++i) w[i] = buses[i].p_inject;
    return w;
  }

  bool operator==(const Network&) const = default;
};

/// Steady-state bus quantities; vectors are indexed like Network::buses.
struct OperatingPoint {
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;
  Eigen::VectorXd p_inject;
  std::size_t reference = 0;  // index of the bus whose angle is pinned to 0
};

/// Lowest-id generator (or inverter) bus; lowest-id bus when there is none.
inline std::size_t default_reference(const Network& net) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (!is_source(net.buses[i].kind)) continue;
    if (!best || net.buses[i].id < net.buses[*best].id) best = i;
  }
  if (best) return *best;
  std::size_t lo = 0;
  for (std::size_t i = 1; i < net.size(); ++i)
    if (net.buses[i].id < net.buses[lo].id) lo = i;
  return lo;
}

/// Operating point read straight off the network (missing angles become 0).
inline OperatingPoint operating_point_of(const Network& net) {
  OperatingPoint op;
  const auto n = static_cast<Eigen::Index>(net.size());
  op.v_mag.resize(n);
  op.v_ang.resize(n);
  op.p_inject.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    op.v_mag[i] = b.v_mag;
    op.v_ang[i] = b.v_ang.value_or(0.0);
    op.p_inject[i] = b.p_inject;
  }
  op.reference = net.size() ? default_reference(net) : 0;
  return op;
}

/// Copies the operating point's angles into the buses.
inline Network with_angles(Network net, const OperatingPoint& op) {
  for (std::size_t i = 0; i < net.size(); ++i)
    net.buses[i].v_ang = op.v_ang[static_cast<Eigen::Index>(i)];
  return net;
}

// ---------------------------------------------------------------------------
// Validation

inline std::vector<std::string> validate_network(const Network& net) {
  std::vector<std::string> out;
  auto bus_msg = [&](int id, const std::string& m) {
    out.push_back("bus " + std::to_string(id) + ": " + m);
  };
  auto branch_msg = [&](int id, const std::string& m) {
    out.push_back("branch " + std::to_string(id) + ": " + m);
  };

  if (!(net.base_mva > 0.0) || !std::isfinite(net.base_mva))
    out.push_back("base_mva must be > 0");
  if (net.size() < 2) out.push_back("network must have at least 2 buses");

  std::unordered_map<int, std::size_t> idx;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& b = net.buses[i];
    if (b.id < 1) bus_msg(b.id, "id must be >= 1");
    if (!idx.emplace(b.id, i).second) bus_msg(b.id, "duplicate id");
    if (!(b.v_mag > 0.0) || !std::isfinite(b.v_mag)) bus_msg(b.id, "v_mag must be > 0");
    if (b.v_ang && !std::isfinite(*b.v_ang)) bus_msg(b.id, "v_ang must be finite");
    if (!std::isfinite(b.p_inject)) bus_msg(b.id, "p_inject must be finite");
    if (!(b.damping > 0.0) || !std::isfinite(b.damping)) bus_msg(b.id, "damping must be > 0");
    if (!(b.inertia >= 0.0) || !std::isfinite(b.inertia)) {
      bus_msg(b.id, "inertia must be >= 0");
    } else if (b.inertia > 0.0 && b.kind != BusKind::SynchronousGenerator) {
      bus_msg(b.id, "inertia > 0 requires a synchronous generator");
    }
  }

  std::map<std::pair<int, int>, int> pairs;
  bool endpoints_ok = true;
  for (const auto& br : net.branches) {
    if (!(br.reactance > 0.0) || !std::isfinite(br.reactance))
      branch_msg(br.id, "reactance must be > 0");
    if (br.from_bus == br.to_bus) branch_msg(br.id, "from_bus equals to_bus");
    for (int end : {br.from_bus, br.to_bus}) {
      if (!idx.count(end)) {
        branch_msg(br.id, "unknown bus " + std::to_string(end));
        endpoints_ok = false;
      }
    }
    auto key = std::minmax(br.from_bus, br.to_bus);
    auto [it, fresh] = pairs.emplace(key, br.id);
    if (!fresh && br.from_bus != br.to_bus)
      branch_msg(br.id, "parallel to branch " + std::to_string(it->second));
  }

  if (endpoints_ok && net.size() >= 1) {
    detail::DisjointSets ds(net.size());
    for (const auto& br : net.branches) ds.unite(idx.at(br.from_bus), idx.at(br.to_bus));
    const int comps = detail::count_labels(ds.labels());
    if (comps > 1) out.push_back("network disconnected: " + std::to_string(comps) + " components");
  }
  return out;
}

inline void require_valid(const Network& net) {
  auto v = validate_network(net);
  if (v.empty()) return;
  std::string msg = "invalid network:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// MATPOWER case subset

struct ParsedCase {
  Network network;
  std::vector<std::string> warnings;
};

namespace detail {

struct MatrixTable {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> lines;  // source line per row
  std::size_t start_line = 0;
};

inline std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_number(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line);
  return v;
}

// Consumes one line of matrix body; returns true when the closing ']' was seen.
inline bool consume_matrix_line(std::string_view body, std::size_t line, MatrixTable& table,
                                std::vector<double>& row) {
  bool closed = false;
  std::size_t i = 0;
  auto flush = [&] {
    if (row.empty()) return;
    if (!table.rows.empty() && table.rows.front().size() != row.size())
      throw ParseError("row has " + std::to_string(row.size()) + " columns, expected " +
                           std::to_string(table.rows.front().size()),
                       line);
    table.rows.push_back(std::move(row));
    table.lines.push_back(line);
    row.clear();
  };
  while (i < body.size() && !closed) {
    char c = body[i];
    if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
      ++i;
    } else if (c == ';') {
      flush();
      ++i;
    } else if (c == ']') {
      flush();
      closed = true;
      ++i;
    } else {
      auto j = body.find_first_of(" \t,;]\r", i);
      if (j == std::string_view::npos) j = body.size();
      row.push_back(parse_number(body.substr(i, j - i), line));
      i = j;
    }
  }
  if (closed) {
    auto rest = trim(body.substr(i));
    if (!rest.empty() && rest != ";") throw ParseError("unexpected text after ']'", line);
  } else {
    flush();  // newline also terminates a row
  }
  return closed;
}

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace detail

/// Reads the mpc.baseMVA / mpc.bus / mpc.gen / mpc.branch subset of a
/// MATPOWER case. Everything outside the lossless angle model (resistance,
/// shunts, line charging, phase shift) is dropped with a warning.
inline ParsedCase parse_matpower_case(std::string_view text) {
  std::map<std::string, detail::MatrixTable> tables;
  std::optional<double> base_mva;

  std::size_t line_no = 0;
  std::string current;  // table being read, empty when outside
  std::vector<double> pending_row;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (auto pct = line.find('%'); pct != std::string_view::npos) line = line.substr(0, pct);
    line = detail::trim(line);

    if (!current.empty()) {
      if (detail::consume_matrix_line(line, line_no, tables[current], pending_row))
        current.clear();
      continue;
    }
    if (line.empty()) continue;

    if (line.rfind("mpc.", 0) != 0) {
      if (line.rfind("function", 0) == 0) continue;
      throw ParseError("unrecognized statement", line_no);
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected '='", line_no);
    std::string name(detail::trim(line.substr(4, eq - 4)));
    std::string_view rhs = detail::trim(line.substr(eq + 1));

    if (!rhs.empty() && rhs.front() == '[') {
      if (tables.count(name)) throw ParseError("table mpc." + name + " defined twice", line_no);
      auto& t = tables[name];
      t.start_line = line_no;
      current = name;
      pending_row.clear();
      if (detail::consume_matrix_line(rhs.substr(1), line_no, t, pending_row)) current.clear();
    } else if (name == "baseMVA") {
      if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
      base_mva = detail::parse_number(detail::trim(rhs), line_no);
    }
    // other scalars (version, ...) are not part of the model
  }
  if (!current.empty()) throw ParseError("unterminated table mpc." + current, line_no);
  if (!base_mva) throw ParseError("missing mpc.baseMVA", 0);
  for (const char* req : {"bus", "gen", "branch"})
    if (!tables.count(req)) throw ParseError(std::string("missing table mpc.") + req, 0);

  ParsedCase out;
  auto& net = out.network;
  auto& warn = out.warnings;
  net.base_mva = *base_mva;
  if (!(net.base_mva > 0.0)) throw ValidationError("baseMVA must be > 0");

  const auto& bus_t = tables["bus"];
  const auto& gen_t = tables["gen"];
  const auto& br_t = tables["branch"];
  auto need_cols = [](const detail::MatrixTable& t, std::size_t cols, const char* name) {
    if (!t.rows.empty() && t.rows.front().size() < cols)
      throw ParseError(std::string("mpc.") + name + " needs at least " + std::to_string(cols) +
                           " columns",
                       t.lines.front());
  };
  need_cols(bus_t, 8, "bus");
  need_cols(gen_t, 2, "gen");
  need_cols(br_t, 4, "branch");

  std::unordered_map<int, std::size_t> idx;
  for (std::size_t r = 0; r < bus_t.rows.size(); ++r) {
    const auto& row = bus_t.rows[r];
    const double raw_id = row[0];
    if (raw_id < 1 || raw_id != std::floor(raw_id))
      throw ParseError("bus id must be a positive integer", bus_t.lines[r]);
    Bus b;
    b.id = static_cast<int>(raw_id);
    b.p_inject = -row[2] / net.base_mva;
    b.v_mag = row[7];
    if (row.size() >= 9) b.v_ang = row[8] * std::numbers::pi / 180.0;
    if (row[4] != 0.0) warn.push_back("bus " + std::to_string(b.id) + ": shunt conductance GS ignored");
    if (row[5] != 0.0) warn.push_back("bus " + std::to_string(b.id) + ": shunt susceptance BS ignored");
    if (!idx.emplace(b.id, net.buses.size()).second)
      throw ParseError("duplicate bus id " + std::to_string(b.id), bus_t.lines[r]);
    net.buses.push_back(b);
  }

  for (std::size_t r = 0; r < gen_t.rows.size(); ++r) {
    const auto& row = gen_t.rows[r];
    const int bus_id = static_cast<int>(row[0]);
    auto it = idx.find(bus_id);
    if (it == idx.end() || row[0] != std::floor(row[0]))
      throw ParseError("generator at unknown bus " + detail::fmt_num(row[0]), gen_t.lines[r]);
    if (row.size() >= 8 && row[7] <= 0.0) {
      warn.push_back("generator row " + std::to_string(r + 1) + " out of service; dropped");
      continue;
    }
    auto& b = net.buses[it->second];
    b.kind = BusKind::SynchronousGenerator;
    b.p_inject += row[1] / net.base_mva;
  }

  std::map<std::pair<int, int>, std::size_t> pair_slot;
  for (std::size_t r = 0; r < br_t.rows.size(); ++r) {
    const auto& row = br_t.rows[r];
    const int id = static_cast<int>(r + 1);
    const auto line = br_t.lines[r];
    if (row.size() >= 11 && row[10] <= 0.0) {
      warn.push_back("branch " + std::to_string(id) + ": out of service; dropped");
      continue;
    }
    Branch br{id, static_cast<int>(row[0]), static_cast<int>(row[1]), row[3]};
    if (!idx.count(br.from_bus) || !idx.count(br.to_bus))
      throw ParseError("branch " + std::to_string(id) + " references an unknown bus", line);
    if (!(br.reactance > 0.0))
      throw ValidationError("line " + std::to_string(line) + ": branch " + std::to_string(id) +
                            ": reactance must be > 0");
    if (br.from_bus == br.to_bus)
      throw ValidationError("line " + std::to_string(line) + ": branch " + std::to_string(id) +
                            ": from_bus equals to_bus");
    if (row[2] != 0.0)
      warn.push_back("branch " + std::to_string(id) + ": resistance " + detail::fmt_num(row[2]) +
                     " discarded (lossless model)");
    if (row.size() >= 5 && row[4] != 0.0)
      warn.push_back("branch " + std::to_string(id) + ": line charging ignored");
    if (row.size() >= 9 && row[8] != 0.0 && row[8] != 1.0)
      warn.push_back("branch " + std::to_string(id) + ": tap ratio " + detail::fmt_num(row[8]) +
                     " treated as 1");
    if (row.size() >= 10 && row[9] != 0.0)
      warn.push_back("branch " + std::to_string(id) + ": phase shift ignored");

    auto key = std::minmax(br.from_bus, br.to_bus);
    if (auto it = pair_slot.find(key); it != pair_slot.end()) {
      auto& kept = net.branches[it->second];
      kept.reactance = 1.0 / (1.0 / kept.reactance + 1.0 / br.reactance);
      warn.push_back("branch " + std::to_string(id) + ": merged in parallel into branch " +
                     std::to_string(kept.id));
      continue;
    }
    pair_slot.emplace(key, net.branches.size());
    net.branches.push_back(br);
  }

  require_valid(net);
  return out;
}

// ---------------------------------------------------------------------------
// Native JSON

namespace detail {

using json = nlohmann::json;

inline const json& require_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + "." + key + ": missing");
  return *it;
}

inline double require_number(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number()) throw ValidationError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline int require_int(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number_integer()) throw ValidationError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline BusKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "generator") return BusKind::SynchronousGenerator;
  if (s == "inverter") return BusKind::InverterSource;
  if (s == "load") return BusKind::Load;
  throw ValidationError(where + ".kind: expected \"generator\", \"inverter\" or \"load\", got \"" +
                        s + "\"");
}

}  // namespace detail

inline Network parse_network_json(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), 0);
  }
  Network net;
  net.base_mva = detail::require_number(doc, "base_mva", "network");

  const auto& buses = detail::require_field(doc, "buses", "network");
  if (!buses.is_array()) throw ValidationError("network.buses: expected an array");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto& jb = buses[i];
    const std::string where = "buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = detail::require_int(jb, "id", where);
    const auto& kind = detail::require_field(jb, "kind", where);
    if (!kind.is_string()) throw ValidationError(where + ".kind: expected a string");
    b.kind = detail::parse_kind(kind.get<std::string>(), where);
    b.v_mag = detail::require_number(jb, "v_mag", where);
    if (auto it = jb.find("v_ang"); it != jb.end() && !it->is_null()) {
      if (!it->is_number()) throw ValidationError(where + ".v_ang: expected a number");
      b.v_ang = it->get<double>();
    }
    b.p_inject = detail::require_number(jb, "p_inject_pu", where);
    b.inertia = detail::require_number(jb, "inertia", where);
    b.damping = detail::require_number(jb, "damping", where);
    net.buses.push_back(b);
  }

  const auto& branches = detail::require_field(doc, "branches", "network");
  if (!branches.is_array()) throw ValidationError("network.branches: expected an array");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& jb = branches[i];
    const std::string where = "branches[" + std::to_string(i) + "]";
    Branch br;
    br.id = detail::require_int(jb, "id", where);
    br.from_bus = detail::require_int(jb, "from", where);
    br.to_bus = detail::require_int(jb, "to", where);
    br.reactance = detail::require_number(jb, "x", where);
    net.branches.push_back(br);
  }
  require_valid(net);
  return net;
}

inline nlohmann::ordered_json network_to_json(const Network& net) {
  nlohmann::ordered_json doc;
  doc["base_mva"] = net.base_mva;
  auto& buses = doc["buses"] = nlohmann::ordered_json::array();
  for (const auto& b : net.buses) {
    nlohmann::ordered_json jb;
    jb["id"] = b.id;
    jb["kind"] = to_string(b.kind);
    jb["v_mag"] = b.v_mag;
    if (b.v_ang) jb["v_ang"] = *b.v_ang;
    jb["p_inject_pu"] = b.p_inject;
    jb["inertia"] = b.inertia;
    jb["damping"] = b.damping;
    buses.push_back(std::move(jb));
  }
  auto& branches = doc["branches"] = nlohmann::ordered_json::array();
  for (const auto& br : net.branches)
    branches.push_back({{"id", br.id}, {"from", br.from_bus}, {"to", br.to_bus}, {"x", br.reactance}});
  return doc;
}

inline std::string serialize_network_json(const Network& net) {
  return network_to_json(net).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Dynamic parameter sampling

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct DynamicRanges {
  Range gen_inertia{0.5, 2.0};
  Range gen_damping{25.0, 30.0};
  Range load_damping{1.0, 1.5};
};

/// Draws inertia and damping per bus in ascending bus id order from a
/// 64-bit Mersenne twister seeded with `seed`. Synchronous generators draw
/// inertia then damping; inverter buses draw damping from the generator range
/// and stay first-order; load buses draw damping only.
inline Network sample_dynamic_parameters(Network net, std::uint64_t seed,
                                         const DynamicRanges& ranges = {}) {
  for (const auto& [name, r] : {std::pair{"gen_inertia", ranges.gen_inertia},
                                {"gen_damping", ranges.gen_damping},
                                {"load_damping", ranges.load_damping}}) {
    if (!(r.lo > 0.0) || !(r.lo <= r.hi) || !std::isfinite(r.hi))
      throw std::invalid_argument(std::string(name) + " range must satisfy 0 < lo <= hi");
  }
  std::vector<std::size_t> order(net.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return net.buses[a].id < net.buses[b].id; });

  std::mt19937_64 rng(seed);
  auto draw = [&](Range r) { return r.lo + (r.hi - r.lo) * std::generate_canonical<double, 53>(rng); };
  for (auto i : order) {
    auto& b = net.buses[i];
    switch (b.kind) {
      case BusKind::SynchronousGenerator:
        b.inertia = draw(ranges.gen_inertia);
        b.damping = draw(ranges.gen_damping);
        break;
      case BusKind::InverterSource:
        b.inertia = 0.0;
        b.damping = draw(ranges.gen_damping);
        break;
      case BusKind::Load:
        b.inertia = 0.0;
        b.damping = draw(ranges.load_damping);
        break;
    }
  }
  return net;
}

}  // namespace gsc
