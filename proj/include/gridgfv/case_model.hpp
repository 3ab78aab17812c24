#pragma once

// Grid data model: buses, branches and generators at a common MVA base,
// plus the JSON case-file reader/writer and structural validation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridgfv/error.hpp"

namespace gridgfv {

using BusId = int;

enum class BusKind { slack, pv, pq };

inline std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
  }
  return "pq";
}

struct Bus {
  BusId id = 0;
  BusKind kind = BusKind::pq;
  double p_load = 0.0;
  double q_load = 0.0;
  double g_shunt = 0.0;
  double b_shunt = 0.0;
  double v_set = 1.0;
};

struct Branch {
  BusId from_bus = 0;
  BusId to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_ch = 0.0;
  bool in_service = true;
};

/// Machine data. `h`, `d` and `xd_p` are held on the system base; `mva_base`
/// keeps the machine rating so the case can be written back out.
struct Generator {
  int id = 0;
  BusId bus = 0;
  double p_gen = 0.0;
  double h = 0.0;
  std::optional<double> d;
  double xd_p = 0.0;
  double mva_base = 0.0;
};

struct NetworkCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;

  std::size_t bus_count() const { return buses.size(); }
  std::size_t generator_count() const { return generators.size(); }

  /// Position of a bus in `buses`, or nullopt.
  std::optional<std::size_t> bus_index(BusId id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
      if (buses[i].id == id) return i;
    }
    return std::nullopt;
  }

  std::size_t require_bus_index(BusId id) const {
    auto idx = bus_index(id);
    if (!idx) throw DataError("unknown bus id " + std::to_string(id));
    return *idx;
  }
};

struct Violation {
  std::string entity;  // e.g. "bus 7", "branch[3]", "generator 2", "case"
  std::string rule;    // short machine-readable rule name
  std::string message;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text,
                                                    std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

class FieldReader {
 public:
  FieldReader(const nlohmann::json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw DataError(path_ + ": expected an object");
  }

  double number(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw DataError(path_ + "." + key + ": missing required field");
    return as_number(*it, key);
  }

  double number_or(const char* key, double fallback) const {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return fallback;
    return as_number(*it, key);
  }

  std::optional<double> optional_number(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return std::nullopt;
    return as_number(*it, key);
  }

  int integer(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw DataError(path_ + "." + key + ": missing required field");
    return as_integer(*it, key);
  }

  std::optional<int> optional_integer(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return std::nullopt;
    return as_integer(*it, key);
  }

  std::string string(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw DataError(path_ + "." + key + ": missing required field");
    if (!it->is_string()) throw DataError(path_ + "." + key + ": expected a string");
    return it->get<std::string>();
  }

  bool status_or(const char* key, bool fallback) const {
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return fallback;
    if (it->is_boolean()) return it->get<bool>();
    if (it->is_number_integer()) {
      auto v = it->get<long long>();
      if (v == 0 || v == 1) return v == 1;
    }
    throw DataError(path_ + "." + key + ": expected 0, 1, true or false");
  }

 private:
  double as_number(const nlohmann::json& v, const char* key) const {
    if (!v.is_number()) throw DataError(path_ + "." + key + ": expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw DataError(path_ + "." + key + ": not finite");
    return d;
  }

  int as_integer(const nlohmann::json& v, const char* key) const {
    if (!v.is_number_integer()) throw DataError(path_ + "." + key + ": expected an integer");
    return v.get<int>();
  }

  const nlohmann::json& obj_;
  std::string path_;
};

inline const nlohmann::json& require_array(const nlohmann::json& root, const char* key) {
  auto it = root.find(key);
  if (it == root.end()) throw DataError(std::string("missing required section '") + key + "'");
  if (!it->is_array()) throw DataError(std::string("section '") + key + "' must be an array");
  return *it;
}

}  // namespace detail

/// Parses a JSON case file. Generator `h`, `d` and `xd_p` are read on the
/// machine base (`mva_base`, defaulting to the system base) and converted.
inline NetworkCase parse_case(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw DataError("syntax error at line " + std::to_string(line) + ", column " +
                    std::to_string(col) + ": " + e.what());
  }
  if (!root.is_object()) throw DataError("case file must contain a JSON object");

  NetworkCase net;
  {
    auto it = root.find("base_mva");
    if (it == root.end()) throw DataError("missing required section 'base_mva'");
    if (!it->is_number()) throw DataError("base_mva: expected a number");
    net.base_mva = it->get<double>();
    if (!(net.base_mva > 0.0) || !std::isfinite(net.base_mva))
      throw DataError("base_mva: must be positive");
  }

  const auto& buses = detail::require_array(root, "buses");
  const auto& branches = detail::require_array(root, "branches");
  const auto& gens = detail::require_array(root, "generators");

  std::map<BusId, std::size_t> seen;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    std::string path = "buses[" + std::to_string(i) + "]";
    detail::FieldReader f(buses[i], path);
    Bus b;
    b.id = f.integer("id");
    auto kind = f.string("kind");
    if (kind == "slack") {
      b.kind = BusKind::slack;
    } else if (kind == "pv") {
      b.kind = BusKind::pv;
    } else if (kind == "pq") {
      b.kind = BusKind::pq;
    } else {
      throw DataError(path + ".kind: expected \"slack\", \"pv\" or \"pq\", got \"" + kind + "\"");
    }
    b.p_load = f.number_or("p_load", 0.0);
    b.q_load = f.number_or("q_load", 0.0);
    b.g_shunt = f.number_or("g_shunt", 0.0);
    b.b_shunt = f.number_or("b_shunt", 0.0);
    b.v_set = f.number_or("v_set", 1.0);
    if (!seen.emplace(b.id, i).second)
      throw DataError(path + ".id: duplicate bus id " + std::to_string(b.id));
    net.buses.push_back(b);
  }

  for (std::size_t i = 0; i < branches.size(); ++i) {
    std::string path = "branches[" + std::to_string(i) + "]";
    detail::FieldReader f(branches[i], path);
    Branch br;
    br.from_bus = f.integer("from_bus");
    br.to_bus = f.integer("to_bus");
    br.r = f.number_or("r", 0.0);
    br.x = f.number("x");
    br.b_ch = f.number_or("b_ch", 0.0);
    br.in_service = f.status_or("status", true);
    if (!seen.count(br.from_bus))
      throw DataError(path + ".from_bus: dangling endpoint, bus " +
                      std::to_string(br.from_bus) + " does not exist");
    if (!seen.count(br.to_bus))
      throw DataError(path + ".to_bus: dangling endpoint, bus " +
                      std::to_string(br.to_bus) + " does not exist");
    net.branches.push_back(br);
  }

  for (std::size_t i = 0; i < gens.size(); ++i) {
    std::string path = "generators[" + std::to_string(i) + "]";
    detail::FieldReader f(gens[i], path);
    Generator g;
    g.id = f.optional_integer("id").value_or(static_cast<int>(i) + 1);
    g.bus = f.integer("bus");
    g.p_gen = f.number_or("p_gen", 0.0);
    g.mva_base = f.number_or("mva_base", net.base_mva);
    if (!(g.mva_base > 0.0)) throw DataError(path + ".mva_base: must be positive");
    double scale = g.mva_base / net.base_mva;
    g.h = f.number("h") * scale;
    g.xd_p = f.number("xd_p") / scale;
    if (auto d = f.optional_number("d")) g.d = *d * scale;
    if (!seen.count(g.bus))
      throw DataError(path + ".bus: dangling reference, bus " + std::to_string(g.bus) +
                      " does not exist");
    net.generators.push_back(g);
  }
  return net;
}

/// Writes a case back in the file schema (machine-base generator data).
inline nlohmann::json case_to_json(const NetworkCase& net) {
  nlohmann::json root;
  root["base_mva"] = net.base_mva;
  auto& buses = root["buses"] = nlohmann::json::array();
  for (const auto& b : net.buses) {
    buses.push_back({{"id", b.id},
                     {"kind", std::string(to_string(b.kind))},
                     {"p_load", b.p_load},
                     {"q_load", b.q_load},
                     {"g_shunt", b.g_shunt},
                     {"b_shunt", b.b_shunt},
                     {"v_set", b.v_set}});
  }
  auto& branches = root["branches"] = nlohmann::json::array();
  for (const auto& br : net.branches) {
    branches.push_back({{"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_ch", br.b_ch},
                        {"status", br.in_service ? 1 : 0}});
  }
  auto& gens = root["generators"] = nlohmann::json::array();
  for (const auto& g : net.generators) {
    double scale = g.mva_base / net.base_mva;
    nlohmann::json j = {{"id", g.id},
                        {"bus", g.bus},
                        {"p_gen", g.p_gen},
                        {"h", g.h / scale},
                        {"xd_p", g.xd_p * scale},
                        {"mva_base", g.mva_base}};
    if (g.d) j["d"] = *g.d / scale;
    gens.push_back(std::move(j));
  }
  return root;
}

inline std::string serialize_case(const NetworkCase& net) { return case_to_json(net).dump(2); }

/// Buses grouped by reachability over in-service branches. Groups are listed
/// in order of their first bus in `net.buses`; members keep case order.
inline std::vector<std::vector<BusId>> connected_components(const NetworkCase& net) {
  const std::size_t n = net.buses.size();
  std::unordered_map<BusId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(net.buses[i].id, i);

  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    auto f = index.find(br.from_bus);
    auto t = index.find(br.to_bus);
    if (f == index.end() || t == index.end()) continue;
    adj[f->second].push_back(t->second);
    adj[t->second].push_back(f->second);
  }

  std::vector<int> label(n, -1);
  std::vector<std::vector<BusId>> groups;
  for (std::size_t start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    int comp = static_cast<int>(groups.size());
    std::vector<std::size_t> members;
    std::queue<std::size_t> frontier;
    frontier.push(start);
    label[start] = comp;
    while (!frontier.empty()) {
      auto u = frontier.front();
      frontier.pop();
      members.push_back(u);
      for (auto v : adj[u]) {
        if (label[v] < 0) {
          label[v] = comp;
          frontier.push(v);
        }
      }
    }
    std::sort(members.begin(), members.end());
    std::vector<BusId> ids;
    ids.reserve(members.size());
    for (auto m : members) ids.push_back(net.buses[m].id);
    groups.push_back(std::move(ids));
  }
  return groups;
}

inline std::vector<Violation> validate_case(const NetworkCase& net) {
  std::vector<Violation> out;
  auto add = [&out](std::string entity, std::string rule, std::string msg) {
    out.push_back({std::move(entity), std::move(rule), std::move(msg)});
  };

  if (!(net.base_mva > 0.0) || !std::isfinite(net.base_mva))
    add("case", "positive-base-mva", "base_mva must be a positive finite number");

  std::map<BusId, const Bus*> by_id;
  int slack_count = 0;
  for (const auto& b : net.buses) {
    std::string ent = "bus " + std::to_string(b.id);
    if (!by_id.emplace(b.id, &b).second) add(ent, "duplicate-bus-id", "bus id appears more than once");
    if (b.kind == BusKind::slack) ++slack_count;
    if (!std::isfinite(b.p_load) || !std::isfinite(b.q_load))
      add(ent, "finite-load", "p_load and q_load must be finite");
    if (!std::isfinite(b.g_shunt) || !std::isfinite(b.b_shunt))
      add(ent, "finite-shunt", "shunt values must be finite");
    if (b.kind != BusKind::pq && !(b.v_set > 0.0))
      add(ent, "positive-v-set", "voltage setpoint must be positive");
  }
  if (slack_count == 0) add("case", "missing-slack", "no slack bus");
  if (slack_count > 1)
    add("case", "duplicate-slack", std::to_string(slack_count) + " slack buses, expected exactly one");

  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    const auto& br = net.branches[i];
    std::string ent = "branch[" + std::to_string(i) + "] " + std::to_string(br.from_bus) + "-" +
                      std::to_string(br.to_bus);
    if (!by_id.count(br.from_bus) || !by_id.count(br.to_bus))
      add(ent, "dangling-endpoint", "branch endpoint refers to a missing bus");
    if (br.from_bus == br.to_bus) add(ent, "self-loop", "from_bus equals to_bus");
    if (br.x == 0.0 || !std::isfinite(br.x)) add(ent, "nonzero-reactance", "series reactance must be nonzero");
    if (!std::isfinite(br.r) || !std::isfinite(br.b_ch))
      add(ent, "finite-parameters", "r and b_ch must be finite");
  }

  if (net.generators.empty()) add("case", "no-generator", "at least one generator is required");
  for (const auto& g : net.generators) {
    std::string ent = "generator " + std::to_string(g.id);
    auto it = by_id.find(g.bus);
    if (it == by_id.end()) {
      add(ent, "dangling-bus", "generator bus " + std::to_string(g.bus) + " does not exist");
    } else if (it->second->kind == BusKind::pq) {
      add(ent, "generator-on-pq-bus", "generator bus " + std::to_string(g.bus) + " is a pq bus");
    }
    if (!(g.h > 0.0)) add(ent, "positive-inertia", "inertia constant h must be positive");
    if (!(g.xd_p > 0.0)) add(ent, "positive-reactance", "transient reactance xd_p must be positive");
    if (g.d && (*g.d < 0.0 || !std::isfinite(*g.d)))
      add(ent, "nonnegative-damping", "damping must be non-negative");
  }

  if (!net.buses.empty()) {
    auto comps = connected_components(net);
    if (comps.size() > 1) {
      std::string msg = std::to_string(comps.size()) + " islands over in-service branches:";
      for (const auto& c : comps) {
        msg += " {";
        for (std::size_t k = 0; k < c.size(); ++k) msg += (k ? "," : "") + std::to_string(c[k]);
        msg += "}";
      }
      add("case", "disconnected-graph", msg);
    }
  }
  return out;
}

}  // namespace gridgfv
