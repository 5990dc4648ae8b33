#include "posctl/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "posctl/errors.hpp"
#include "posctl/hum_control.hpp"
#include "posctl/minimal_time.hpp"
#include "posctl/staircase.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace posctl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_error(const std::string& source, int line, const std::string& key,
                         const std::string& what) {
  std::string out = source;
  if (line > 0) out += ":" + std::to_string(line);
  if (!key.empty()) out += ": key '" + key + "'";
  return out + ": " + what;
}

// ---------------------------------------------------------------------------
// schema

enum class Kind { integer, real, boolean, list, text };

struct KeyRule {
  Kind kind;
  bool required = false;
};

using Rules = std::map<std::string, KeyRule>;

const Rules& system_rules() {
  static const Rules r = {
      {"n", {Kind::integer, true}}, {"m", {Kind::integer, true}},
      {"D", {Kind::list, true}},    {"A", {Kind::list, true}},
      {"B", {Kind::list, true}},    {"omega", {Kind::list, true}},
      {"bc", {Kind::text}},
  };
  return r;
}

const Rules& data_rules() {
  static const Rules r = {
      {"kind", {Kind::text, true}}, {"values", {Kind::list}},     {"amplitude", {Kind::list}},
      {"mode", {Kind::integer}},    {"coeff", {Kind::list}},      {"active_modes", {Kind::integer}},
  };
  return r;
}

const Rules& run_rules() {
  static const Rules r = {
      {"modes", {Kind::integer}},
      {"steps", {Kind::integer}},
      {"seed", {Kind::integer}},
      {"output", {Kind::text}},
  };
  return r;
}

const std::map<std::string, Rules>& task_rules() {
  static const Rules staircase_common = {
      {"type", {Kind::text, true}},       {"tau", {Kind::real}},
      {"control_modes", {Kind::integer}}, {"steps", {Kind::integer}},
      {"control_fraction", {Kind::real}}, {"safety_factor", {Kind::real}},
      {"max_steps", {Kind::integer}},     {"envelope", {Kind::boolean}},
      {"csv_every", {Kind::integer}},
  };
  static const std::map<std::string, Rules> r = [] {
    std::map<std::string, Rules> t;
    t["validate"] = {{"type", {Kind::text, true}}, {"tol", {Kind::real}}};
    t["kalman"] = {{"type", {Kind::text, true}}, {"p_max", {Kind::integer}}, {"tol", {Kind::real}}};
    t["free"] = {{"type", {Kind::text, true}},
                 {"T", {Kind::real, true}},
                 {"steps", {Kind::integer}},
                 {"csv_every", {Kind::integer}}};
    t["steer"] = {{"type", {Kind::text, true}},       {"tau", {Kind::real, true}},
                  {"t0", {Kind::real}},               {"control_modes", {Kind::integer}},
                  {"steps", {Kind::integer}},         {"envelope", {Kind::boolean}}};
    t["cost_sweep"] = {{"type", {Kind::text, true}},  {"taus", {Kind::list, true}},
                       {"control_modes", {Kind::integer}}, {"steps", {Kind::integer}},
                       {"envelope", {Kind::boolean}}};
    Rules id = staircase_common;
    id["convergence_tol"] = {Kind::real};
    id["wait_cap"] = {Kind::real};
    t["staircase_identity"] = id;
    Rules gen = staircase_common;
    gen["epsilon"] = {Kind::real, true};
    gen["floor"] = {Kind::text};
    gen["shift_margin"] = {Kind::real};
    gen["zeta_horizon"] = {Kind::real};
    t["staircase_general"] = gen;
    t["minimal_time"] = {{"type", {Kind::text, true}},      {"M", {Kind::real, true}},
                         {"T_lo", {Kind::real, true}},      {"T_hi", {Kind::real, true}},
                         {"iterations", {Kind::integer}},   {"knots", {Kind::integer}},
                         {"control_modes", {Kind::integer}}, {"constraint_points", {Kind::integer}},
                         {"audit_factor", {Kind::integer}}, {"steer_tol", {Kind::real}},
                         {"ball_center", {Kind::real}},     {"ball_radius", {Kind::real}},
                         {"sl_modes", {Kind::integer}},     {"gamma_tol", {Kind::real}}};
    t["obstruction"] = {{"type", {Kind::text, true}}, {"T", {Kind::real, true}}};
    return t;
  }();
  return r;
}

double parse_real(const std::string& text, bool* ok) {
  const std::string s = trim(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  *ok = !s.empty() && end == s.c_str() + s.size();
  return v;
}

std::vector<double> parse_numbers(const std::string& text, bool* ok) {
  std::string s = text;
  for (char& c : s) {
    if (c == ',' || c == ';' || c == '[' || c == ']') c = ' ';
  }
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  *ok = true;
  while (in >> tok) {
    bool good = false;
    out.push_back(parse_real(tok, &good));
    if (!good) *ok = false;
  }
  return out;
}

bool parse_bool(const std::string& text, bool* ok) {
  const std::string s = trim(text);
  *ok = true;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  *ok = false;
  return false;
}

void check_kind(const std::string& source, const std::string& key, const ConfigEntry& e,
                Kind kind) {
  bool ok = true;
  switch (kind) {
    case Kind::integer: {
      const double v = parse_real(e.value, &ok);
      ok = ok && std::isfinite(v) && v == std::floor(v);
      if (!ok) throw ConfigError(source, e.line, key, "expected an integer, got '" + e.value + "'");
      return;
    }
    case Kind::real:
      parse_real(e.value, &ok);
      if (!ok) throw ConfigError(source, e.line, key, "expected a number, got '" + e.value + "'");
      return;
    case Kind::boolean:
      parse_bool(e.value, &ok);
      if (!ok) throw ConfigError(source, e.line, key, "expected true or false, got '" + e.value + "'");
      return;
    case Kind::list:
      parse_numbers(e.value, &ok);
      if (!ok) throw ConfigError(source, e.line, key, "expected a list of numbers, got '" + e.value + "'");
      return;
    case Kind::text:
      if (trim(e.value).empty()) throw ConfigError(source, e.line, key, "empty value");
      return;
  }
}

void check_section(const std::string& source, const ConfigSection& s, const Rules& rules) {
  for (const auto& [key, entry] : s.entries) {
    const auto it = rules.find(key);
    if (it == rules.end()) {
      throw ConfigError(source, entry.line, key, "unknown key in section [" + s.name + "]");
    }
    check_kind(source, key, entry, it->second.kind);
  }
  for (const auto& [key, rule] : rules) {
    if (rule.required && s.find(key) == nullptr) {
      throw ConfigError(source, s.line, key, "required key missing in section [" + s.name + "]");
    }
  }
}

// typed access with context

struct Reader {
  const std::string& source;
  const ConfigSection* section;

  const ConfigEntry* entry(const std::string& key) const { return section ? section->find(key) : nullptr; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const ConfigEntry* e = entry(key);
    throw ConfigError(source, e ? e->line : (section ? section->line : 0), key, what);
  }

  double real(const std::string& key, double fallback) const {
    const ConfigEntry* e = entry(key);
    if (!e) return fallback;
    bool ok = false;
    return parse_real(e->value, &ok);
  }
  int integer(const std::string& key, int fallback) const {
    return static_cast<int>(real(key, fallback));
  }
  std::vector<double> list(const std::string& key) const {
    const ConfigEntry* e = entry(key);
    if (!e) return {};
    bool ok = false;
    return parse_numbers(e->value, &ok);
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    const ConfigEntry* e = entry(key);
    return e ? trim(e->value) : fallback;
  }

  Eigen::MatrixXd matrix(const std::string& key, int rows, int cols) const {
    const auto v = list(key);
    if (static_cast<int>(v.size()) != rows * cols) {
      fail(key, "expected " + std::to_string(rows * cols) + " entries (" + std::to_string(rows) +
                    "x" + std::to_string(cols) + " row-major), got " + std::to_string(v.size()));
    }
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
    }
    return m;
  }

  Eigen::VectorXd vector(const std::string& key, int n, bool broadcast) const {
    const auto v = list(key);
    if (broadcast && v.size() == 1) return Eigen::VectorXd::Constant(n, v[0]);
    if (static_cast<int>(v.size()) != n) {
      fail(key, "expected " + std::to_string(n) + " values, got " + std::to_string(v.size()));
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
  }
};

DataSpec load_data(const std::string& source, const ConfigSection* s, int n) {
  if (s == nullptr) throw ConfigError(source, 0, "", "missing data section");
  check_section(source, *s, data_rules());
  const Reader r{source, s};
  DataSpec d;
  const std::string kind = r.text("kind", "constant");
  if (kind == "constant") {
    d.kind = DataKind::constant;
    d.values = r.vector("values", n, true);
  } else if (kind == "cosine_bump") {
    d.kind = DataKind::cosine_bump;
    d.values = r.vector("values", n, true);
    d.amplitude = r.vector("amplitude", n, true);
    d.mode = r.integer("mode", 1);
    if (d.mode < 1) r.fail("mode", "bump mode must be at least 1");
  } else if (kind == "modes") {
    d.kind = DataKind::modes;
    const auto v = r.list("coeff");
    if (v.empty() || v.size() % static_cast<std::size_t>(n) != 0) {
      r.fail("coeff", "expected n rows of mode coefficients");
    }
    const int cols = static_cast<int>(v.size()) / n;
    d.coeff.resize(n, cols);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < cols; ++j) d.coeff(i, j) = v[static_cast<std::size_t>(i * cols + j)];
    }
  } else if (kind == "random") {
    d.kind = DataKind::random;
    d.values = r.vector("values", n, true);
    d.amplitude = r.entry("amplitude") ? r.vector("amplitude", n, true) : Eigen::VectorXd::Constant(n, 0.5);
    d.active_modes = r.integer("active_modes", 4);
    if (d.active_modes < 1) r.fail("active_modes", "must be at least 1");
  } else {
    r.fail("kind", "unknown data kind '" + kind + "' (constant, cosine_bump, modes, random)");
  }
  for (const char* key : {"values", "amplitude"}) {
    if (r.entry(key) && !r.list(key).empty()) {
      for (double x : r.list(key)) {
        if (!std::isfinite(x)) r.fail(key, "non-finite value");
      }
    }
  }
  return d;
}

void check_task(const std::string& source, const TaskSpec& t, int modes) {
  ConfigSection s;
  s.name = "task." + t.name;
  s.line = t.line;
  for (const auto& [k, e] : t.params) s.entries.emplace_back(k, e);
  const Reader r{source, &s};
  auto positive = [&](const std::string& key) {
    if (r.entry(key) && !(r.real(key, 1.0) > 0.0)) r.fail(key, "must be positive");
  };
  for (const char* key : {"tau", "T", "steps", "control_modes", "knots", "iterations", "p_max",
                          "csv_every", "max_steps", "constraint_points", "audit_factor",
                          "sl_modes", "epsilon", "convergence_tol", "safety_factor", "wait_cap",
                          "steer_tol", "ball_radius", "zeta_horizon"}) {
    positive(key);
  }
  if (r.entry("control_modes") && r.integer("control_modes", 0) > modes) {
    r.fail("control_modes", "exceeds the state truncation run.modes = " + std::to_string(modes));
  }
  if (r.entry("control_fraction")) {
    const double f = r.real("control_fraction", 0.5);
    if (!(f > 0.0 && f <= 1.0)) r.fail("control_fraction", "must lie in (0, 1]");
  }
  if (r.entry("M") && !(r.real("M", 1.0) >= 0.0)) r.fail("M", "must be nonnegative");
  if (r.entry("floor")) {
    const auto f = r.text("floor", "");
    if (f != "approximate" && f != "zeta_shifted" && f != "exact") {
      r.fail("floor", "expected approximate, zeta_shifted or exact");
    }
  }
  if (r.entry("taus")) {
    const auto v = r.list("taus");
    if (v.empty()) r.fail("taus", "empty list");
    for (double x : v) {
      if (!(x > 0.0)) r.fail("taus", "horizons must be positive");
    }
  }
}

// ---------------------------------------------------------------------------
// output helpers

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json jopt(const std::optional<double>& v) { return v ? jnum(*v) : json(nullptr); }

json jvec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(jnum(v(i)));
  return a;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, 0, "", "cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string default_output(const std::string& config_path) {
  return (fs::path("out") / fs::path(config_path).stem()).string();
}

// ---------------------------------------------------------------------------
// task execution

struct Context {
  const ScenarioConfig& config;
  ModalSystem system;
  SpectralState y0;
  SpectralState yf0;
  fs::path root;
};

class TaskRunner {
 public:
  TaskRunner(const Context& ctx, const TaskSpec& task, TaskOutcome& outcome)
      : ctx_(ctx), task_(task), out_(outcome), dir_(ctx.root / task.name) {
    section_.name = "task." + task.name;
    section_.line = task.line;
    for (const auto& [k, e] : task.params) section_.entries.emplace_back(k, e);
    fs::create_directories(dir_);
  }

  void run() {
    const auto& type = task_.type;
    if (type == "validate") validate();
    else if (type == "kalman") kalman();
    else if (type == "free") free_run();
    else if (type == "steer") steer_run();
    else if (type == "cost_sweep") cost();
    else if (type == "staircase_identity") staircase(false);
    else if (type == "staircase_general") staircase(true);
    else if (type == "minimal_time") minimal_time();
    else if (type == "obstruction") obstruction();
    write_report();
  }

 private:
  Reader reader() const { return Reader{ctx_.config.source, &section_}; }
  int steps(int fallback) const {
    return reader().integer("steps", ctx_.config.steps.value_or(fallback));
  }

  std::string artifact(const std::string& file) {
    const std::string rel = task_.name + "/" + file;
    out_.artifacts.push_back(rel);
    return (dir_ / file).string();
  }

  void set_status(int code, const std::string& message = "") {
    out_.exit_code = code;
    out_.message = message;
    switch (code) {
      case exit_ok: out_.status = "ok"; break;
      case exit_infeasible: out_.status = "infeasible"; break;
      case exit_nonconvergence: out_.status = "nonconvergent"; break;
      case exit_validation: out_.status = "invalid"; break;
      default: out_.status = "error"; break;
    }
  }

  void write_report() {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["task"] = task_.name;
    j["type"] = task_.type;
    j["status"] = out_.status;
    j["message"] = out_.message;
    j["metrics"] = out_.metrics;
    j["detail"] = detail_;
    write_json(artifact("report.json"), j);
  }

  void validate() {
    const auto rep = validate_structure(ctx_.config.spec, reader().real("tol", 1e-10));
    auto& m = out_.metrics;
    m["is_elliptic"] = rep.is_elliptic;
    m["alpha"] = jnum(rep.alpha);
    m["is_diagonal_D"] = rep.is_diagonal_D;
    m["is_scalar_D"] = rep.is_scalar_D;
    m["is_quasipositive_A"] = rep.is_quasipositive_A;
    m["eigenvalues_nonneg_real"] = rep.eigenvalues_nonneg_real;
    m["max_symmetric_A"] = jnum(rep.max_symmetric_A);
    json spectrum = json::array();
    for (const auto& z : rep.A_spectrum) spectrum.push_back({jnum(z.real()), jnum(z.imag())});
    detail_["A_spectrum"] = spectrum;
    set_status(exit_ok);
  }

  void kalman() {
    const int p_max = reader().integer("p_max", 200);
    const double tol = reader().real("tol", 1e-10);
    const auto v = kalman_condition_all_modes(ctx_.config.spec, p_max, tol);
    auto& m = out_.metrics;
    m["satisfied_up_to_p_max"] = v.satisfied_up_to_p_max;
    m["failed_at"] = v.failed_at ? json(*v.failed_at) : json(nullptr);
    m["p_max"] = v.p_max;
    m["reduced_rank"] = v.reduced_rank ? json(*v.reduced_rank) : json(nullptr);
    m["all_modes_certified"] = v.all_modes_certified;
    std::ofstream csv(artifact("kalman.csv"));
    csv << "p,lambda,rank\n";
    for (int p = 0; p <= p_max; ++p) {
      const double lambda = NeumannBasis::eigenvalue(p);
      csv << p << ',' << num(lambda) << ',' << kalman_rank(ctx_.config.spec, lambda, tol) << '\n';
    }
    set_status(exit_ok, v.satisfied_up_to_p_max ? "" : "Kalman condition fails at some mode");
  }

  void free_run() {
    const double T = reader().real("T", 1.0);
    const auto traj = free_evolve(ctx_.system, ctx_.y0, T, steps(200));
    write_trajectory_csv(artifact("trajectory.csv"), traj, reader().integer("csv_every", 1));
    const auto c = monitor_constraint(traj, 0.0);
    auto& m = out_.metrics;
    m["T"] = jnum(T);
    m["min_state"] = jnum(c.worst_min);
    m["min_time"] = jnum(c.worst_time);
    m["final_l2"] = jnum(traj.final_state().l2_norm());
    detail_["final_mean"] = jvec(traj.final_state().mean());
    set_status(exit_ok);
  }

  SteerOptions steer_options() const {
    SteerOptions o;
    o.control_highest_mode = reader().integer("control_modes", 8);
    o.steps = steps(200);
    bool ok = false;
    const auto* e = reader().entry("envelope");
    o.envelope = e ? parse_bool(e->value, &ok) : false;
    return o;
  }

  void steer_run() {
    const double tau = reader().real("tau", 0.5);
    const double t0 = reader().real("t0", 0.0);
    const auto o = steer_options();
    const auto target = propagate_free(ctx_.system, ctx_.yf0, t0 + tau);
    const auto r = steer(ctx_.system, ctx_.y0, target, t0, tau, o);
    const auto traj = evolve(ctx_.system, ctx_.y0, r.control);
    write_trajectory_csv(artifact("trajectory.csv"), traj);
    write_control_csv(artifact("control.csv"), r.control);
    auto& m = out_.metrics;
    m["tau"] = jnum(tau);
    m["control_norm"] = jnum(r.cost.control_norm);
    m["defect_norm"] = jnum(r.cost.defect_norm);
    m["endpoint_defect"] = jnum(r.cost.endpoint_defect);
    m["tail_norm"] = jnum(r.cost.tail_norm);
    m["gramian_min_eigenvalue"] = jnum(r.cost.gramian_min_eigenvalue);
    m["min_state"] = jnum(monitor_constraint(traj, 0.0).worst_min);
    set_status(r.cost.endpoint_defect <= kSteerTol ? exit_ok : exit_nonconvergence,
               r.cost.endpoint_defect <= kSteerTol ? "" : "endpoint defect above tolerance");
  }

  void cost() {
    const auto taus = reader().list("taus");
    const auto s = cost_sweep(ctx_.system, ctx_.y0, ctx_.yf0, taus, steer_options());
    std::ofstream csv(artifact("cost.csv"));
    csv << "tau,control_norm,defect_norm,ratio,endpoint_defect,tail_norm,gramian_min_eigenvalue\n";
    for (const auto& r : s.reports) {
      csv << num(r.tau) << ',' << num(r.control_norm) << ',' << num(r.defect_norm) << ','
          << num(r.ratio) << ',' << num(r.endpoint_defect) << ',' << num(r.tail_norm) << ','
          << num(r.gramian_min_eigenvalue) << '\n';
    }
    out_.metrics["slope"] = jnum(s.slope);
    out_.metrics["strictly_decreasing"] = s.strictly_decreasing;
    set_status(exit_ok);
  }

  StaircaseOptions staircase_options() const {
    const Reader r = reader();
    StaircaseOptions o;
    o.modes = ctx_.config.modes;
    o.control_highest_mode = r.integer("control_modes", o.control_highest_mode);
    o.steps_per_tau = steps(o.steps_per_tau);
    o.control_fraction = r.real("control_fraction", o.control_fraction);
    o.safety_factor = r.real("safety_factor", o.safety_factor);
    o.max_steps = r.integer("max_steps", o.max_steps);
    o.wait_cap = r.real("wait_cap", o.wait_cap);
    o.shift_margin = r.real("shift_margin", o.shift_margin);
    o.zeta_horizon = r.real("zeta_horizon", o.zeta_horizon);
    bool ok = false;
    if (const auto* e = r.entry("envelope")) o.envelope = parse_bool(e->value, &ok);
    const auto f = r.text("floor", "approximate");
    o.floor_mode = f == "exact" ? FloorMode::exact
                   : f == "zeta_shifted" ? FloorMode::zeta_shifted
                                         : FloorMode::approximate;
    return o;
  }

  void staircase(bool general) {
    const Reader r = reader();
    const auto o = staircase_options();
    const double tau = r.real("tau", 0.5);
    const auto& spec = ctx_.config.spec;
    const StaircasePlan plan =
        general ? plan_general(spec, ctx_.y0, ctx_.yf0, tau, r.real("epsilon", 0.1), o)
                : plan_identity(spec, ctx_.y0, ctx_.yf0, tau, r.real("convergence_tol", 1.0), o);
    const StaircaseResult res =
        general ? run_general(spec, plan, ctx_.y0, ctx_.yf0) : run_identity(spec, plan, ctx_.y0, ctx_.yf0);

    const int every = r.integer("csv_every", 1);
    if (!res.trajectory.empty()) write_trajectory_csv(artifact("trajectory.csv"), res.trajectory, every);
    if (!res.control.empty()) write_control_csv(artifact("control.csv"), res.control, every);
    {
      std::ofstream csv(artifact("steps.csv"));
      csv << "index,phase,t_start,t_end,defect,control_norm,min_state,tracking\n";
      for (const auto& s : res.steps) {
        csv << s.index << ',' << s.phase << ',' << num(s.t_start) << ',' << num(s.t_end) << ','
            << num(s.defect) << ',' << num(s.control_norm) << ',' << num(s.min_state) << ','
            << num(s.tracking) << '\n';
      }
    }

    auto& m = out_.metrics;
    m["status"] = to_string(res.status);
    m["tau"] = jnum(plan.tau);
    m["N"] = plan.N;
    m["delta"] = jnum(plan.delta);
    m["C_tau"] = jnum(plan.C_tau);
    m["zeta"] = jnum(plan.zeta);
    m["total_time"] = jnum(plan.total_time());
    m["capped"] = plan.capped;
    m["certifiable"] = plan.certifiable;
    m["terminal_error"] = jnum(res.terminal_error);
    m["min_state"] = jnum(res.min_state);
    m["control_norm"] = res.control.empty() ? json(0.0) : jnum(res.control.l2_norm(ctx_.system.coupling));
    if (general) {
      m["epsilon"] = jnum(plan.epsilon);
      m["floor_mode"] = to_string(plan.floor_mode);
      m["floor"] = jnum(plan.floor);
      m["lambda_shift"] = jnum(plan.lambda_shift);
      m["rescaling_gap"] = jopt(res.rescaling_gap);
      if (res.obstruction) {
        m["obstruction"] = to_string(res.obstruction->verdict);
        detail_["obstruction"] = {{"controlled_lower", jnum(res.obstruction->controlled_lower)},
                                  {"target_upper", jnum(res.obstruction->target_upper)},
                                  {"target_mass", jnum(res.obstruction->target_mass)},
                                  {"reason", res.obstruction->reason}};
      }
    } else {
      m["T0"] = jnum(plan.T0);
      m["T0_gap_estimate"] = jnum(plan.T0_gap_estimate);
      m["min_z"] = jopt(res.min_z);
      m["z_bound"] = jopt(res.z_bound);
    }
    detail_["constraint"] = {{"floor", jnum(res.constraint.floor)},
                             {"violated", res.constraint.violated},
                             {"first_violation_time", jopt(res.constraint.first_violation_time)},
                             {"worst_min", jnum(res.constraint.worst_min)},
                             {"worst_time", jnum(res.constraint.worst_time)},
                             {"worst_component", res.constraint.worst_component}};
    detail_["plan_note"] = plan.note;

    switch (res.status) {
      case StaircaseStatus::success: set_status(exit_ok, res.message); break;
      case StaircaseStatus::constraint_violated:
      case StaircaseStatus::obstructed: set_status(exit_infeasible, res.message); break;
      case StaircaseStatus::terminal_mismatch: set_status(exit_nonconvergence, res.message); break;
    }
  }

  static double field_value(const SpectralState& s, double x) {
    double v = 0.0;
    for (int p = 0; p < s.mode_count(); ++p) v += s.coeff(p, 0) * NeumannBasis::eval(p, x);
    return v;
  }

  void minimal_time() {
    const Reader r = reader();
    const auto& spec = ctx_.config.spec;
    FeasibilityProblem prob;
    prob.spec = spec;
    prob.y0 = ctx_.y0;
    prob.target_seed = ctx_.yf0;
    prob.M = r.real("M", 0.5);
    prob.control_highest_mode = r.integer("control_modes", prob.control_highest_mode);
    prob.knots = r.integer("knots", prob.knots);
    prob.state_modes = ctx_.config.modes;
    prob.constraint_points = r.integer("constraint_points", prob.constraint_points);
    prob.audit_factor = r.integer("audit_factor", prob.audit_factor);
    prob.steer_tol = r.real("steer_tol", prob.steer_tol);
    const auto b = bisect_minimal_time(prob, r.real("T_lo", 0.01), r.real("T_hi", 2.0),
                                       r.integer("iterations", 10));
    {
      std::ofstream csv(artifact("bisection.csv"));
      csv << "T,verdict,min_state\n";
      for (const auto& e : b.evaluations) {
        csv << num(e.T) << ',' << to_string(e.verdict) << ',' << num(e.min_state) << '\n';
      }
    }
    auto& m = out_.metrics;
    m["M"] = jnum(prob.M);
    m["T_bar_estimate"] = jnum(b.T_bar_estimate);
    m["lo"] = jnum(b.lo);
    m["hi"] = jnum(b.hi);
    m["evaluations"] = static_cast<int>(b.evaluations.size());
    m["monotone_consistent"] = b.monotone_consistent;

    // certificate on a ball outside the control window
    const Interval w = spec.omega;
    std::optional<ProbeBall> ball;
    if (r.entry("ball_center") || r.entry("ball_radius")) {
      ball = ProbeBall{r.real("ball_center", 0.5), r.real("ball_radius", 0.1)};
      const double lo = ball->center - ball->radius;
      const double hi = ball->center + ball->radius;
      const bool inside = lo >= 0.0 && hi <= 1.0 && (hi <= w.a || lo >= w.b);
      if (!inside) r.fail("ball_center", "probe ball must lie in (0,1) outside the control window");
    } else if (w.has_uncontrolled_region()) {
      const bool right = (1.0 - w.b) >= w.a;
      const double a = right ? w.b : 0.0;
      const double len = right ? 1.0 - w.b : w.a;
      ball = ProbeBall{a + 0.5 * len, 0.45 * len};
    }
    if (ball) {
      const auto basis = sl_basis(ball_potential(spec, *ball), r.integer("sl_modes", 20));
      const auto& y0 = ctx_.y0;
      const auto& yf = ctx_.yf0;
      const auto g = gamma_certificate([&](double x) { return field_value(y0, x); },
                                       [&](double x) { return field_value(yf, x); }, *ball, basis,
                                       r.real("gamma_tol", 1e-9));
      m["gamma_spread"] = jnum(g.spread);
      m["gamma_constant"] = g.is_constant;
      m["gamma_certifies_positive_time"] = g.certifies_positive_time;
      m["sl_identity_error"] = jnum(basis.max_identity_error());
      json cands = json::array();
      for (double c : g.gamma_candidates) cands.push_back(jnum(c));
      detail_["ball"] = {{"center", ball->center}, {"radius", ball->radius}};
      detail_["gamma_candidates"] = cands;
    } else {
      detail_["ball"] = nullptr;
    }
    set_status(exit_ok, b.monotone_consistent ? "" : "feasibility verdicts not monotone in T");
  }

  void obstruction() {
    const double T = reader().real("T", 1.0);
    const auto o = mass_obstruction(ctx_.config.spec, ctx_.y0, ctx_.yf0, T);
    auto& m = out_.metrics;
    m["verdict"] = to_string(o.verdict);
    m["controlled_lower"] = jnum(o.controlled_lower);
    m["target_upper"] = jnum(o.target_upper);
    m["target_mass"] = jnum(o.target_mass);
    detail_["reason"] = o.reason;
    if (o.verdict == ObstructionVerdict::obstructed) set_status(exit_infeasible, o.reason);
    else set_status(exit_ok, o.reason);
  }

  const Context& ctx_;
  const TaskSpec& task_;
  TaskOutcome& out_;
  fs::path dir_;
  ConfigSection section_;
  json detail_ = json::object();
};

int classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const StructuralError*>(&e) ||
      dynamic_cast<const ResolutionError*>(&e) || dynamic_cast<const ConfigurationError*>(&e) ||
      dynamic_cast<const HypothesisError*>(&e) || dynamic_cast<const SetupError*>(&e)) {
    return exit_validation;
  }
  if (dynamic_cast<const PlanningError*>(&e) || dynamic_cast<const ControllabilityError*>(&e)) {
    return exit_nonconvergence;
  }
  return exit_software;
}

std::string status_name(int code) {
  switch (code) {
    case exit_ok: return "ok";
    case exit_infeasible: return "infeasible";
    case exit_nonconvergence: return "nonconvergent";
    case exit_validation: return "invalid";
    default: return "error";
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------

ConfigError::ConfigError(const std::string& source, int line, const std::string& key,
                         const std::string& what)
    : std::invalid_argument(format_error(source, line, key, what)), line_(line), key_(key) {}

const ConfigEntry* ConfigSection::find(const std::string& key) const {
  for (const auto& [k, e] : entries) {
    if (k == key) return &e;
  }
  return nullptr;
}

ConfigSection* RawConfig::find(const std::string& name) {
  for (auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const ConfigSection* RawConfig::find(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void RawConfig::set(const std::string& dotted, const std::string& value) {
  const auto dot = dotted.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size()) {
    throw ConfigError(source, 0, dotted, "parameter must be written section.key");
  }
  const std::string name = dotted.substr(0, dot);
  const std::string key = dotted.substr(dot + 1);
  ConfigSection* s = find(name);
  if (s == nullptr) throw ConfigError(source, 0, dotted, "no section [" + name + "] in config");
  for (auto& [k, e] : s->entries) {
    if (k == key) {
      e.value = value;
      return;
    }
  }
  s->entries.emplace_back(key, ConfigEntry{value, s->line});
}

RawConfig parse_config_text(const std::string& text, const std::string& source) {
  RawConfig cfg;
  cfg.source = source;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string l = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError(source, line, "", "unterminated section header");
      const std::string name = trim(l.substr(1, l.size() - 2));
      if (name.empty()) throw ConfigError(source, line, "", "empty section name");
      if (cfg.find(name)) throw ConfigError(source, line, "", "duplicate section [" + name + "]");
      cfg.sections.push_back(ConfigSection{name, line, {}});
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "", "expected 'key = value'");
    const std::string key = trim(l.substr(0, eq));
    const std::string value = trim(l.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line, "", "empty key");
    if (cfg.sections.empty()) throw ConfigError(source, line, key, "key outside any section");
    auto& s = cfg.sections.back();
    if (s.find(key)) throw ConfigError(source, line, key, "duplicate key in [" + s.name + "]");
    s.entries.emplace_back(key, ConfigEntry{value, line});
  }
  return cfg;
}

RawConfig parse_config_file(const std::string& path) { return parse_config_text(read_file(path), path); }

SpectralState build_data(const DataSpec& data, int components, int highest_mode,
                         std::uint64_t seed) {
  SpectralState s = SpectralState::zero(highest_mode, components);
  switch (data.kind) {
    case DataKind::constant:
      s.coeff.row(0) = data.values.transpose();
      break;
    case DataKind::cosine_bump:
      s.coeff.row(0) = data.values.transpose();
      if (data.mode > highest_mode) {
        throw ConfigurationError("bump mode " + std::to_string(data.mode) + " exceeds the truncation");
      }
      s.coeff.row(data.mode) += data.amplitude.transpose();
      break;
    case DataKind::modes:
      if (data.coeff.cols() > highest_mode + 1) {
        throw ConfigurationError("data has more modes than the truncation");
      }
      s.coeff.topRows(data.coeff.cols()) = data.coeff.transpose();
      break;
    case DataKind::random: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      s.coeff.row(0) = data.values.transpose();
      const int top = std::min(data.active_modes, highest_mode);
      for (int p = 1; p <= top; ++p) {
        for (int i = 0; i < components; ++i) s.coeff(p, i) = data.amplitude(i) * u(rng) / p;
      }
      const Eigen::VectorXd mins = min_on_grid(s, default_grid_points(highest_mode));
      for (int i = 0; i < components; ++i) {
        if (mins(i) < 0.0) s.coeff(0, i) -= mins(i);
      }
      break;
    }
  }
  return s;
}

ScenarioConfig load_scenario(const RawConfig& raw) {
  const std::string& src = raw.source;
  ScenarioConfig cfg;
  cfg.source = src;

  for (const auto& s : raw.sections) {
    const bool known = s.name == "system" || s.name == "initial" || s.name == "target" ||
                       s.name == "run" || s.name.rfind("task.", 0) == 0;
    if (!known) throw ConfigError(src, s.line, "", "unknown section [" + s.name + "]");
  }

  const ConfigSection* sys = raw.find("system");
  if (sys == nullptr) throw ConfigError(src, 0, "", "missing section [system]");
  check_section(src, *sys, system_rules());
  const Reader rs{src, sys};
  const int n = rs.integer("n", 0);
  const int m = rs.integer("m", 0);
  if (n < 1) rs.fail("n", "must be at least 1");
  if (m < 1) rs.fail("m", "must be at least 1");
  cfg.spec.D = rs.matrix("D", n, n);
  cfg.spec.A = rs.matrix("A", n, n);
  cfg.spec.B = rs.matrix("B", n, m);
  const auto om = rs.list("omega");
  if (om.size() != 2) rs.fail("omega", "expected two endpoints a b");
  if (!(om[0] >= 0.0 && om[0] < om[1] && om[1] <= 1.0)) {
    rs.fail("omega", "need 0 <= a < b <= 1");
  }
  cfg.spec.omega = Interval{om[0], om[1]};
  const std::string bc = rs.text("bc", "neumann");
  if (bc == "dirichlet") rs.fail("bc", "only neumann boundary conditions are supported");
  if (bc != "neumann") rs.fail("bc", "expected neumann");
  try {
    cfg.spec.check_dimensions();
  } catch (const StructuralError& e) {
    throw ConfigError(src, sys->line, "", e.what());
  }

  if (const ConfigSection* run = raw.find("run")) {
    check_section(src, *run, run_rules());
    const Reader rr{src, run};
    cfg.modes = rr.integer("modes", kDefaultModes);
    if (cfg.modes < 1) rr.fail("modes", "must be at least 1");
    if (rr.entry("steps")) {
      cfg.steps = rr.integer("steps", 0);
      if (*cfg.steps < 1) rr.fail("steps", "must be at least 1");
    }
    const int seed = rr.integer("seed", 0);
    if (seed < 0) rr.fail("seed", "must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.output = rr.text("output", "");
  }

  cfg.initial = load_data(src, raw.find("initial"), n);
  cfg.target = load_data(src, raw.find("target"), n);

  const auto& rules = task_rules();
  for (const auto& s : raw.sections) {
    if (s.name.rfind("task.", 0) != 0) continue;
    TaskSpec t;
    t.name = s.name.substr(5);
    t.line = s.line;
    if (t.name.empty() || t.name.find_first_of("/\\ ") != std::string::npos) {
      throw ConfigError(src, s.line, "", "invalid task name '" + t.name + "'");
    }
    const ConfigEntry* type = s.find("type");
    if (type == nullptr) throw ConfigError(src, s.line, "type", "required key missing in [" + s.name + "]");
    t.type = trim(type->value);
    const auto it = rules.find(t.type);
    if (it == rules.end()) throw ConfigError(src, type->line, "type", "unknown task type '" + t.type + "'");
    check_section(src, s, it->second);
    for (const auto& [k, e] : s.entries) t.params[k] = e;
    check_task(src, t, cfg.modes);
    cfg.tasks.push_back(std::move(t));
  }
  return cfg;
}

std::string RunOverrides::describe() const {
  std::string s;
  if (out) s += "out=" + *out + ";";
  if (modes) s += "modes=" + std::to_string(*modes) + ";";
  if (steps) s += "steps=" + std::to_string(*steps) + ";";
  if (seed) s += "seed=" + std::to_string(*seed) + ";";
  return s;
}

void apply_overrides(ScenarioConfig& config, const RunOverrides& overrides) {
  if (overrides.out) config.output = *overrides.out;
  if (overrides.modes) {
    if (*overrides.modes < 1) throw ConfigError(config.source, 0, "--modes", "must be at least 1");
    config.modes = *overrides.modes;
  }
  if (overrides.steps) {
    if (*overrides.steps < 1) throw ConfigError(config.source, 0, "--steps", "must be at least 1");
    config.steps = *overrides.steps;
    for (auto& t : config.tasks) t.params.erase("steps");
  }
  if (overrides.seed) config.seed = *overrides.seed;
  for (const auto& t : config.tasks) check_task(config.source, t, config.modes);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int combine_exit_codes(const std::vector<int>& codes) {
  for (int c : {int(exit_software), int(exit_validation), int(exit_nonconvergence),
                int(exit_infeasible)}) {
    if (std::find(codes.begin(), codes.end(), c) != codes.end()) return c;
  }
  for (int c : codes) {
    if (c != exit_ok) return exit_software;
  }
  return exit_ok;
}

json RunManifest::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["tool"] = "posctl";
  j["version"] = kToolVersion;
  j["config_path"] = config_path;
  j["config_hash"] = config_hash;
  j["overrides"] = overrides;
  j["output_dir"] = output_dir;
  j["started_at"] = utc_now();
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["exit_code"] = exit_code;
  j["status"] = status_name(exit_code);
  if (!error.empty()) j["error"] = error;
  json tasks_json = json::array();
  for (const auto& t : tasks) {
    tasks_json.push_back({{"name", t.name},
                          {"type", t.type},
                          {"status", t.status},
                          {"exit_code", t.exit_code},
                          {"message", t.message},
                          {"seconds", t.seconds},
                          {"metrics", t.metrics},
                          {"artifacts", t.artifacts}});
  }
  j["tasks"] = tasks_json;
  j["artifacts"] = artifacts;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

void RunManifest::write() const {
  fs::create_directories(output_dir);
  write_json(fs::path(output_dir) / "manifest.json", to_json());
}

void write_trajectory_csv(const std::string& path, const TrajectoryRecord& trajectory, int every) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int n = trajectory.empty() ? 0 : static_cast<int>(trajectory.minima.front().size());
  out << "time";
  for (int i = 0; i < n; ++i) out << ",min_y" << i + 1;
  out << ",l2_norm\n";
  const std::size_t count = trajectory.times.size();
  const std::size_t step = static_cast<std::size_t>(std::max(1, every));
  for (std::size_t k = 0; k < count; ++k) {
    if (k % step != 0 && k + 1 != count) continue;
    out << num(trajectory.times[k]);
    for (int i = 0; i < n; ++i) out << ',' << num(trajectory.minima[k](i));
    out << ',' << num(trajectory.l2_norms[k]) << '\n';
  }
}

void write_control_csv(const std::string& path, const ControlSignal& control, int every) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int modes = control.control_modes();
  const int channels = control.channels();
  out << "time";
  for (int c = 0; c < channels; ++c) {
    for (int q = 0; q < modes; ++q) out << ",u" << c + 1 << '_' << q;
  }
  out << '\n';
  const int step = std::max(1, every);
  long row = 0;
  for (const auto& seg : control.segments()) {
    for (int k = 0; k < seg.steps; ++k, ++row) {
      if (row % step != 0) continue;
      out << num(seg.midpoint(k));
      for (int c = 0; c < channels; ++c) {
        for (int q = 0; q < modes; ++q) out << ',' << num(seg.is_zero() ? 0.0 : seg.values[k](q, c));
      }
      out << '\n';
    }
  }
}

RunManifest run_scenario(const ScenarioConfig& config, const std::string& output_dir) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest man;
  man.output_dir = output_dir;
  fs::create_directories(output_dir);

  Context ctx{config, ModalSystem::neumann(config.spec, config.modes), {}, {}, fs::path(output_dir)};
  std::vector<int> codes;
  try {
    const int n = config.spec.n();
    ctx.y0 = build_data(config.initial, n, config.modes, config.seed * 2 + 1);
    ctx.yf0 = build_data(config.target, n, config.modes, config.seed * 2 + 2);
  } catch (const std::exception& e) {
    man.exit_code = classify(e);
    man.error = e.what();
    man.wall_clock_seconds = seconds_since(start);
    return man;
  }
  {
    json data;
    data["schema_version"] = kSchemaVersion;
    data["modes"] = config.modes;
    data["initial_mean"] = jvec(ctx.y0.mean());
    data["target_seed_mean"] = jvec(ctx.yf0.mean());
    write_json(fs::path(output_dir) / "data.json", data);
    man.artifacts.push_back("data.json");
  }

  for (const auto& task : config.tasks) {
    TaskOutcome out;
    out.name = task.name;
    out.type = task.type;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      TaskRunner(ctx, task, out).run();
    } catch (const std::exception& e) {
      out.exit_code = classify(e);
      out.status = status_name(out.exit_code);
      out.message = e.what();
    }
    out.seconds = seconds_since(t0);
    codes.push_back(out.exit_code);
    for (const auto& a : out.artifacts) man.artifacts.push_back(a);
    man.tasks.push_back(std::move(out));
  }
  man.exit_code = combine_exit_codes(codes);
  man.wall_clock_seconds = seconds_since(start);
  return man;
}

RunManifest run_config(const std::string& config_path, const RunOverrides& overrides) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest man;
  man.config_path = config_path;
  man.overrides = overrides.describe();
  man.output_dir = overrides.out.value_or(default_output(config_path));
  ScenarioConfig cfg;
  try {
    const std::string text = read_file(config_path);
    man.config_hash = fnv1a_hex(text + "\n" + man.overrides);
    cfg = load_scenario(parse_config_text(text, config_path));
    apply_overrides(cfg, overrides);
  } catch (const std::exception& e) {
    man.exit_code = classify(e);
    man.error = e.what();
    man.wall_clock_seconds = seconds_since(start);
    man.write();
    return man;
  }
  if (!overrides.out && !cfg.output.empty()) man.output_dir = cfg.output;
  RunManifest run = run_scenario(cfg, man.output_dir);
  run.config_path = man.config_path;
  run.config_hash = man.config_hash;
  run.overrides = man.overrides;
  run.wall_clock_seconds = seconds_since(start);
  run.write();
  return run;
}

RunManifest sweep_config(const std::string& config_path, const std::string& parameter,
                         const std::vector<std::string>& values, const RunOverrides& overrides) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest man;
  man.config_path = config_path;
  man.overrides = overrides.describe();
  man.output_dir = overrides.out.value_or(default_output(config_path));
  man.extra["parameter"] = parameter;
  man.extra["values"] = values;

  RawConfig raw;
  try {
    const std::string text = read_file(config_path);
    man.config_hash = fnv1a_hex(text + "\n" + man.overrides + "\nsweep " + parameter);
    raw = parse_config_text(text, config_path);
    ScenarioConfig base = load_scenario(raw);
    apply_overrides(base, overrides);
    if (!overrides.out && !base.output.empty()) man.output_dir = base.output;
    // the parameter must address an existing section and a known key
    RawConfig probe = raw;
    const auto dot = parameter.rfind('.');
    const std::string section = dot == std::string::npos ? parameter : parameter.substr(0, dot);
    const ConfigSection* s = raw.find(section);
    const ConfigEntry* current = s ? s->find(parameter.substr(dot + 1)) : nullptr;
    probe.set(parameter, current ? current->value : (values.empty() ? "1" : values.front()));
    load_scenario(probe);
  } catch (const std::exception& e) {
    man.exit_code = classify(e);
    man.error = e.what();
    man.wall_clock_seconds = seconds_since(start);
    man.write();
    return man;
  }

  fs::create_directories(man.output_dir);
  json runs = json::array();
  std::vector<int> codes;
  std::vector<std::string> columns;
  std::vector<std::vector<std::pair<std::string, std::string>>> rows;
  std::vector<std::string> row_prefix;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string sub = "run_" + std::to_string(i);
    const std::string dir = (fs::path(man.output_dir) / sub).string();
    RunManifest run;
    run.config_path = config_path;
    run.overrides = man.overrides + parameter + "=" + values[i] + ";";
    run.config_hash = fnv1a_hex(man.config_hash + "\n" + run.overrides);
    run.output_dir = dir;
    try {
      RawConfig variant = raw;
      variant.set(parameter, values[i]);
      ScenarioConfig cfg = load_scenario(variant);
      RunOverrides o = overrides;
      o.out.reset();
      apply_overrides(cfg, o);
      RunManifest done = run_scenario(cfg, dir);
      done.config_path = run.config_path;
      done.overrides = run.overrides;
      done.config_hash = run.config_hash;
      run = std::move(done);
    } catch (const std::exception& e) {
      run.exit_code = classify(e);
      run.error = e.what();
    }
    run.write();
    codes.push_back(run.exit_code);
    man.artifacts.push_back(sub + "/manifest.json");
    runs.push_back({{"index", i}, {"value", values[i]}, {"output_dir", sub}, {"exit_code", run.exit_code}});
    for (const auto& t : run.tasks) {
      std::vector<std::pair<std::string, std::string>> cells;
      for (const auto& [k, v] : t.metrics.items()) {
        std::string cell;
        if (v.is_number()) cell = num(v.get<double>());
        else if (v.is_boolean()) cell = v.get<bool>() ? "1" : "0";
        else if (v.is_string()) cell = v.get<std::string>();
        else if (v.is_null()) cell = "";
        else continue;
        if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
        cells.emplace_back(k, cell);
      }
      row_prefix.push_back(std::to_string(i) + "," + values[i] + "," + t.name + "," + t.type + "," +
                           t.status + "," + std::to_string(t.exit_code));
      rows.push_back(std::move(cells));
    }
  }

  {
    std::ofstream csv(fs::path(man.output_dir) / "sweep.csv");
    csv << "index,value,task,type,status,exit_code";
    for (const auto& c : columns) csv << ',' << c;
    csv << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
      csv << row_prefix[r];
      for (const auto& c : columns) {
        csv << ',';
        for (const auto& [k, v] : rows[r]) {
          if (k == c) csv << v;
        }
      }
      csv << '\n';
    }
    man.artifacts.insert(man.artifacts.begin(), "sweep.csv");
  }
  man.extra["runs"] = runs;
  man.exit_code = combine_exit_codes(codes);
  man.wall_clock_seconds = seconds_since(start);
  man.write();
  return man;
}

}  // namespace posctl
