#include "subspace/config.hpp"

#include <cmath>
#include <fstream>

namespace subspace::config {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  return j;
}

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  std::string pointer = "/";
  for (char c : key) pointer += c == '.' ? '/' : c;
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }
  cfg[json::json_pointer(pointer)] = value;
}

namespace {

json defaults() {
  return json{
      {"model",
       {{"n", 2000}, {"d", 1}, {"lambdas", json::array({5.0})}, {"sigma", 1.0}, {"alpha", 0.5}}},
      {"algo",
       {{"name", "grouse"},
        {"tau", 0.5},
        {"tau_schedule", nullptr},
        {"mu", 5.0},
        {"delta", 10.0},
        {"eps", nullptr},  // null -> alpha / 2
        {"eps_prime", 0.1},
        {"reorth_every", 1000}}},
      {"init", {{"q0", 0.5}}},
      {"run",
       {{"T", 1.0},
        {"record_times", nullptr},
        {"record_every", 0.25},
        {"n_trials", 1},
        {"seed", 42},
        {"workers", 0},
        {"store_q", false}}},
      {"ode", {{"h", 1e-3}, {"quad_steps", 400}}},
  };
}

void deep_merge(json& base, const json& user) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
      deep_merge(base[it.key()], *it);
    else
      base[it.key()] = *it;
  }
}

double require_number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + " must be a number");
  return j.get<double>();
}

}  // namespace

json resolve(const json& user) {
  json cfg = defaults();
  deep_merge(cfg, user);

  // materialize the record grid so the echoed config is self-contained
  auto& run = cfg["run"];
  const double horizon = require_number(run["T"], "run.T");
  if (run["record_times"].is_null()) {
    const double every = require_number(run["record_every"], "run.record_every");
    if (!(every > 0.0)) throw ConfigError("run.record_every must be positive");
    json times = json::array();
    const long count = static_cast<long>(std::floor(horizon / every + 1e-9));
    for (long i = 0; i <= count; ++i) {
      const double t = std::min(horizon, i * every);
      times.push_back(t);
    }
    run["record_times"] = times;
  }
  if (cfg["algo"]["eps"].is_null())
    cfg["algo"]["eps"] = cfg["model"]["alpha"].get<double>() / 2.0;
  return cfg;
}

std::string experiment_id(const json& resolved) {
  json hashed = resolved;
  if (hashed.contains("run")) hashed["run"].erase("workers");  // no effect on results
  const std::string dump = hashed.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[13];
  std::snprintf(buf, sizeof(buf), "%012llx",
                static_cast<unsigned long long>(h & 0xffffffffffffULL));
  return std::string(buf);
}

StepSchedule schedule_from(const json& algo) {
  const json sched = algo.contains("tau_schedule") ? algo["tau_schedule"] : json();
  if (sched.is_object()) {
    const std::string type = sched.value("type", "constant");
    if (type == "constant")
      return StepSchedule::constant(require_number(sched.at("value"), "tau value"));
    if (type == "inverse_time") {
      const double tau0 = require_number(sched.at("tau0"), "tau0");
      const double t0 = sched.contains("t0") ? require_number(sched["t0"], "t0") : 1.0;
      if (!(t0 > 0.0)) throw ConfigError("tau_schedule.t0 must be positive");
      return StepSchedule::from_function(
          [tau0, t0](double t) { return tau0 / (1.0 + t / t0); });
    }
    throw ConfigError("unknown tau_schedule.type: " + type);
  }
  return StepSchedule::constant(require_number(algo.at("tau"), "algo.tau"));
}

harness::ExperimentConfig experiment_from(const json& cfg) {
  harness::ExperimentConfig out;
  const auto& model = cfg.at("model");
  out.n = model.at("n").get<int>();
  out.d = model.at("d").get<int>();
  const auto& lam = model.at("lambdas");
  if (!lam.is_array() || static_cast<int>(lam.size()) != out.d)
    throw ConfigError("model.lambdas must be an array of d numbers");
  out.lambdas.resize(out.d);
  for (int i = 0; i < out.d; ++i) out.lambdas(i) = require_number(lam[i], "lambda");
  out.sigma = require_number(model.at("sigma"), "model.sigma");
  out.alpha = require_number(model.at("alpha"), "model.alpha");

  const auto& algo = cfg.at("algo");
  const std::string name = algo.at("name").get<std::string>();
  if (name == "oja") out.algo = Algo::kOja;
  else if (name == "grouse") out.algo = Algo::kGrouse;
  else if (name == "petrels") out.algo = Algo::kPetrels;
  else throw ConfigError("algo.name must be oja, grouse or petrels");
  out.tracker.tau = schedule_from(algo);
  out.tracker.mu = require_number(algo.at("mu"), "algo.mu");
  out.tracker.delta = require_number(algo.at("delta"), "algo.delta");
  out.tracker.alpha = out.alpha;
  out.tracker.eps = require_number(algo.at("eps"), "algo.eps");
  out.tracker.eps_prime = require_number(algo.at("eps_prime"), "algo.eps_prime");
  out.tracker.reorth_every = algo.at("reorth_every").get<int>();

  out.q0 = require_number(cfg.at("init").at("q0"), "init.q0");

  const auto& run = cfg.at("run");
  out.horizon = require_number(run.at("T"), "run.T");
  for (const auto& t : run.at("record_times"))
    out.record_times.push_back(require_number(t, "record time"));
  out.n_trials = run.at("n_trials").get<int>();
  out.seed = run.at("seed").get<std::uint64_t>();
  out.workers = run.at("workers").get<int>();
  out.store_q = run.at("store_q").get<bool>();

  try {
    out.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return out;
}

}  // namespace subspace::config
