// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucmip/milp.hpp"

namespace ucmip {

// JSON has no literal for infinities, so unbounded entries are written as the
// strings "inf" / "-inf".
inline nlohmann::json bound_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

inline double bound_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ConfigError("bound_from_json: unknown bound literal '" + s + "'");
  }
  return j.get<double>();
}

// Sparse-triplet problem format:
// {"n":…, "m":…, "c":[…], "b":[…], "l":[…], "u":[…], "is_integer":[0|1…],
//  "A": {"rows":[…], "cols":[…], "vals":[…]}}
inline nlohmann::json milp_to_json(const MilpProblem& p) {
  nlohmann::json j;
  j["n"] = p.num_vars();
  j["m"] = p.num_rows();
  j["c"] = p.c;
  j["b"] = p.b;
  j["l"] = nlohmann::json::array();
  j["u"] = nlohmann::json::array();
  for (double v : p.l) j["l"].push_back(bound_to_json(v));
  for (double v : p.u) j["u"].push_back(bound_to_json(v));
  j["is_integer"] = nlohmann::json::array();
  for (auto f : p.is_integer) j["is_integer"].push_back(f ? 1 : 0);
  std::vector<int> ti, tj;
  std::vector<double> tv;
  p.A->to_triplets(ti, tj, tv);
  j["A"] = {{"rows", ti}, {"cols", tj}, {"vals", tv}};
  return j;
}

inline MilpProblem milp_from_json(const nlohmann::json& j) {
  MilpProblem p;
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  p.c = j.at("c").get<std::vector<double>>();
  p.b = j.at("b").get<std::vector<double>>();
  for (const auto& v : j.at("l")) p.l.push_back(bound_from_json(v));
  for (const auto& v : j.at("u")) p.u.push_back(bound_from_json(v));
  for (const auto& v : j.at("is_integer")) p.is_integer.push_back(v.get<int>() ? 1 : 0);
  const auto& a = j.at("A");
  p.A = std::make_shared<SparseMatrix>(m, n, a.at("rows").get<std::vector<int>>(),
                                       a.at("cols").get<std::vector<int>>(),
                                       a.at("vals").get<std::vector<double>>());
  p.validate();
  return p;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

inline void save_json_file(const std::string& path, const nlohmann::json& j, int indent = 1) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(indent) << "\n";
}

}  // namespace ucmip
