#include "qsp/config.hpp"

#include <fstream>
#include <set>

#include "qsp/errors.hpp"

namespace qsp {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

double number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

}  // namespace

json params_to_json(const ModelParams& p) {
  json motility = {{"D_star", p.motility.D_star},
                   {"D_inf", p.motility.D_inf},
                   {"D_prime_star", p.motility.D_prime_star}};
  motility["u_star_ref"] = p.motility.u_star_ref ? json(*p.motility.u_star_ref) : json(nullptr);
  return json{{"D_c", p.D_c},
              {"beta", p.beta},
              {"alpha0", p.alpha0},
              {"lambda", p.lambda},
              {"epsilon", p.epsilon},
              {"L", p.L},
              {"rho_star", p.rho_star},
              {"motility", motility},
              {"production", {{"a", p.production.a}, {"V", p.production.V}, {"K", p.production.K}}},
              {"epsilon_bound_factor", p.epsilon_bound_factor}};
}

ModelParams params_from_json(const json& j) {
  check_keys(j,
             {"D_c", "beta", "alpha0", "lambda", "epsilon", "L", "rho_star", "motility", "production",
              "epsilon_bound_factor", "comment"},
             "params");
  ModelParams p;
  p.D_c = number(j, "D_c", "params");
  p.beta = number(j, "beta", "params");
  p.alpha0 = number(j, "alpha0", "params");
  p.lambda = number(j, "lambda", "params");
  p.epsilon = number(j, "epsilon", "params");
  p.L = number(j, "L", "params");
  p.rho_star = number(j, "rho_star", "params");
  p.epsilon_bound_factor = number_or(j, "epsilon_bound_factor", 1.0, "params");

  if (!j.contains("motility")) throw ConfigError("params: missing field 'motility'");
  const auto& m = j.at("motility");
  check_keys(m, {"D_star", "D_inf", "D_prime_star", "u_star_ref"}, "motility");
  p.motility.D_star = number(m, "D_star", "motility");
  p.motility.D_inf = number(m, "D_inf", "motility");
  p.motility.D_prime_star = number(m, "D_prime_star", "motility");
  if (m.contains("u_star_ref") && !m.at("u_star_ref").is_null()) {
    p.motility.u_star_ref = number(m, "u_star_ref", "motility");
  }

  if (!j.contains("production")) throw ConfigError("params: missing field 'production'");
  const auto& g = j.at("production");
  check_keys(g, {"a", "V", "K"}, "production");
  p.production.a = number(g, "a", "production");
  p.production.V = number(g, "V", "production");
  p.production.K = number(g, "K", "production");

  p.validate();
  return p;
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed parameter file " + path + ": " + e.what());
  }
  return params_from_json(j);
}

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write parameter file: " + path);
  out << params_to_json(params).dump(2) << '\n';
}

}  // namespace qsp
