#include "multilift/scenario.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"

#include "multilift/error.hpp"

namespace multilift {

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& what,
                             const toml::node* node = nullptr) {
  std::string msg = where + ": " + what;
  if (node != nullptr && node->source().begin.line > 0) {
    msg += " (line " + std::to_string(node->source().begin.line) + ")";
  }
  throw Error(Errc::parse_error, msg);
}

void invalid(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::validation_error, what);
}

std::string join(const std::string& where, std::string_view key) {
  return where.empty() ? std::string(key) : where + "." + std::string(key);
}

void check_keys(const toml::table& t, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> ok(allowed);
  for (auto&& [k, v] : t) {
    if (!ok.contains(k.str())) parse_fail(join(where, k.str()), "unknown key", &v);
  }
}

double as_number(const toml::node& n, const std::string& where) {
  if (const auto* f = n.as_floating_point()) return f->get();
  if (const auto* i = n.as_integer()) return static_cast<double>(i->get());
  parse_fail(where, "expected a number", &n);
}

const toml::table* sub_table(const toml::table& t, std::string_view key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return nullptr;
  const toml::table* s = n->as_table();
  if (s == nullptr) parse_fail(join(where, key), "expected a table", n);
  return s;
}

void read(const toml::table& t, std::string_view key, const std::string& where, double& out) {
  if (const toml::node* n = t.get(key)) out = as_number(*n, join(where, key));
}

void read(const toml::table& t, std::string_view key, const std::string& where, bool& out) {
  if (const toml::node* n = t.get(key)) {
    const auto* b = n->as_boolean();
    if (b == nullptr) parse_fail(join(where, key), "expected a boolean", n);
    out = b->get();
  }
}

void read(const toml::table& t, std::string_view key, const std::string& where, std::string& out) {
  if (const toml::node* n = t.get(key)) {
    const auto* s = n->as_string();
    if (s == nullptr) parse_fail(join(where, key), "expected a string", n);
    out = s->get();
  }
}

std::int64_t read_integer(const toml::node& n, const std::string& where) {
  const auto* i = n.as_integer();
  if (i == nullptr) parse_fail(where, "expected an integer", &n);
  return i->get();
}

Vec3 as_vec3(const toml::node& n, const std::string& where) {
  const toml::array* a = n.as_array();
  if (a == nullptr || a->size() != 3) parse_fail(where, "expected an array of 3 numbers", &n);
  Vec3 v;
  for (int k = 0; k < 3; ++k) v(k) = as_number(*a->get(static_cast<std::size_t>(k)), where);
  return v;
}

void read(const toml::table& t, std::string_view key, const std::string& where, Vec3& out) {
  if (const toml::node* n = t.get(key)) out = as_vec3(*n, join(where, key));
}

// Either three diagonal entries or three rows of three.
Mat3 as_mat3(const toml::node& n, const std::string& where) {
  const toml::array* a = n.as_array();
  if (a == nullptr || a->size() != 3) parse_fail(where, "expected 3 numbers or a 3x3 array", &n);
  if (a->get(0)->is_array()) {
    Mat3 m;
    for (int r = 0; r < 3; ++r) m.row(r) = as_vec3(*a->get(static_cast<std::size_t>(r)), where).transpose();
    return m;
  }
  return as_vec3(n, where).asDiagonal();
}

void read(const toml::table& t, std::string_view key, const std::string& where, Mat3& out) {
  if (const toml::node* n = t.get(key)) out = as_mat3(*n, join(where, key));
}

AxisSignal read_axis(const toml::table& t, const std::string& where) {
  check_keys(t, where, {"offset", "terms"});
  AxisSignal s;
  read(t, "offset", where, s.offset);
  if (const toml::node* n = t.get("terms")) {
    const toml::array* arr = n->as_array();
    if (arr == nullptr) parse_fail(where + ".terms", "expected an array of tables", n);
    for (std::size_t k = 0; k < arr->size(); ++k) {
      const std::string w = where + ".terms." + std::to_string(k);
      const toml::table* term = arr->get(k)->as_table();
      if (term == nullptr) parse_fail(w, "expected a table", arr->get(k));
      check_keys(*term, w, {"amplitude", "frequency", "phase"});
      SinusoidTerm st;
      read(*term, "amplitude", w, st.amplitude);
      read(*term, "frequency", w, st.frequency);
      read(*term, "phase", w, st.phase);
      s.terms.push_back(st);
    }
  }
  return s;
}

Scenario from_table(const toml::table& root) {
  Scenario s;
  check_keys(root, "", {"schema_version", "name", "world", "payload", "agents", "initial",
                        "command", "gains", "sim", "domain", "output"});
  if (const toml::node* v = root.get("schema_version")) {
    s.schema_version = static_cast<int>(read_integer(*v, "schema_version"));
    if (s.schema_version != kScenarioSchemaVersion) {
      parse_fail("schema_version", "unsupported version " + std::to_string(s.schema_version), v);
    }
  }
  read(root, "name", "", s.name);

  if (const toml::table* w = sub_table(root, "world", "")) {
    check_keys(*w, "world", {"gravity"});
    read(*w, "gravity", "world", s.params.gravity);
  }

  const toml::table* payload = sub_table(root, "payload", "");
  if (payload == nullptr) parse_fail("payload", "missing table");
  check_keys(*payload, "payload", {"mass", "box", "inertia"});
  if (payload->get("mass") == nullptr) parse_fail("payload.mass", "missing key", payload);
  read(*payload, "mass", "payload", s.params.payload_mass);
  if (payload->contains("box") && payload->contains("inertia")) {
    parse_fail("payload", "give either box or inertia, not both", payload);
  }
  if (const toml::node* b = payload->get("box")) {
    s.payload_box = as_vec3(*b, "payload.box");
    s.params.payload_inertia = box_inertia(s.params.payload_mass, *s.payload_box);
  } else if (payload->contains("inertia")) {
    read(*payload, "inertia", "payload", s.params.payload_inertia);
  } else {
    parse_fail("payload", "missing box or inertia", payload);
  }

  const toml::node* agents_node = root.get("agents");
  if (agents_node == nullptr) parse_fail("agents", "missing array of tables");
  const toml::array* agents = agents_node->as_array();
  if (agents == nullptr) parse_fail("agents", "expected an array of tables", agents_node);
  for (std::size_t i = 0; i < agents->size(); ++i) {
    const std::string w = "agents." + std::to_string(i);
    const toml::table* a = agents->get(i)->as_table();
    if (a == nullptr) parse_fail(w, "expected a table", agents->get(i));
    check_keys(*a, w, {"mass", "inertia", "link_length", "attachment", "q", "omega", "R", "Omega",
                       "heading"});
    AgentParams p;
    AgentState st;
    read(*a, "mass", w, p.mass);
    read(*a, "inertia", w, p.inertia);
    read(*a, "link_length", w, p.link_length);
    read(*a, "attachment", w, p.attachment);
    read(*a, "q", w, st.q);
    read(*a, "omega", w, st.omega);
    read(*a, "R", w, st.R);
    read(*a, "Omega", w, st.Omega);
    HeadingPolynomial h;
    if (const toml::node* hn = a->get("heading")) {
      const toml::array* arr = hn->as_array();
      if (arr == nullptr || arr->empty()) parse_fail(w + ".heading", "expected an array of 3-vectors", hn);
      h.coefficients.clear();
      for (std::size_t k = 0; k < arr->size(); ++k) {
        h.coefficients.push_back(as_vec3(*arr->get(k), w + ".heading." + std::to_string(k)));
      }
    }
    s.params.agents.push_back(p);
    s.initial.agents.push_back(st);
    s.headings.push_back(h);
  }

  if (const toml::table* init = sub_table(root, "initial", "")) {
    check_keys(*init, "initial", {"x0", "v0", "R0", "Omega0"});
    read(*init, "x0", "initial", s.initial.x0);
    read(*init, "v0", "initial", s.initial.v0);
    read(*init, "R0", "initial", s.initial.R0);
    read(*init, "Omega0", "initial", s.initial.Omega0);
  }

  if (const toml::table* cmd = sub_table(root, "command", "")) {
    check_keys(*cmd, "command", {"attitude", "reference", "rate", "x", "y", "z"});
    std::string mode = "tangent";
    read(*cmd, "attitude", "command", mode);
    if (mode == "tangent") {
      s.command.attitude = AttitudeMode::tangent;
    } else if (mode == "constant") {
      s.command.attitude = AttitudeMode::constant;
    } else if (mode == "explicit_rate") {
      s.command.attitude = AttitudeMode::explicit_rate;
    } else {
      parse_fail("command.attitude", "expected tangent, constant or explicit_rate", cmd->get("attitude"));
    }
    read(*cmd, "reference", "command", s.command.attitude_reference);
    read(*cmd, "rate", "command", s.command.attitude_rate);
    const char* axes[3] = {"x", "y", "z"};
    for (int k = 0; k < 3; ++k) {
      if (const toml::table* ax = sub_table(*cmd, axes[k], "command")) {
        s.command.position[static_cast<std::size_t>(k)] = read_axis(*ax, std::string("command.") + axes[k]);
      }
    }
  }

  if (const toml::table* g = sub_table(root, "gains", "")) {
    check_keys(*g, "gains", {"k_x0", "k_v0", "k_R0", "k_Omega0", "k_q", "k_omega", "k_R", "k_Omega",
                             "epsilon"});
    read(*g, "k_x0", "gains", s.gains.k_x0);
    read(*g, "k_v0", "gains", s.gains.k_v0);
    read(*g, "k_R0", "gains", s.gains.k_R0);
    read(*g, "k_Omega0", "gains", s.gains.k_Omega0);
    read(*g, "k_q", "gains", s.gains.k_q);
    read(*g, "k_omega", "gains", s.gains.k_omega);
    read(*g, "k_R", "gains", s.gains.k_R);
    read(*g, "k_Omega", "gains", s.gains.k_Omega);
    read(*g, "epsilon", "gains", s.gains.epsilon);
  }

  if (const toml::table* sim = sub_table(root, "sim", "")) {
    check_keys(*sim, "sim", {"dt", "t_final", "control_divisor", "log_interval", "model", "seed",
                             "clamp_thrust"});
    read(*sim, "dt", "sim", s.sim.dt);
    read(*sim, "t_final", "sim", s.sim.t_final);
    read(*sim, "log_interval", "sim", s.sim.log_interval);
    read(*sim, "clamp_thrust", "sim", s.sim.clamp_thrust);
    if (const toml::node* n = sim->get("control_divisor")) {
      s.sim.control_divisor = static_cast<int>(read_integer(*n, "sim.control_divisor"));
    }
    if (const toml::node* n = sim->get("seed")) {
      s.sim.seed = static_cast<std::uint64_t>(read_integer(*n, "sim.seed"));
    }
    std::string model = "full";
    read(*sim, "model", "sim", model);
    if (model == "full") {
      s.sim.model = Model::full;
    } else if (model == "simplified") {
      s.sim.model = Model::simplified;
    } else {
      parse_fail("sim.model", "expected simplified or full", sim->get("model"));
    }
  }

  if (const toml::table* d = sub_table(root, "domain", "")) {
    check_keys(*d, "domain", {"e_x_max", "psi_R0", "psi_q"});
    read(*d, "e_x_max", "domain", s.domain.e_x_max);
    read(*d, "psi_R0", "domain", s.domain.psi_R0);
    read(*d, "psi_q", "domain", s.domain.psi_q);
  }

  if (const toml::table* o = sub_table(root, "output", "")) {
    check_keys(*o, "output", {"svg", "path"});
    read(*o, "svg", "output", s.output.svg);
    read(*o, "path", "output", s.output.path);
  }
  return s;
}

toml::table json_to_table(const nlohmann::json& j, const std::string& where);

toml::array json_to_array(const nlohmann::json& j, const std::string& where);

void json_insert(const nlohmann::json& v, const std::string& where, auto&& emplace) {
  if (v.is_object()) {
    emplace(json_to_table(v, where));
  } else if (v.is_array()) {
    emplace(json_to_array(v, where));
  } else if (v.is_boolean()) {
    emplace(v.get<bool>());
  } else if (v.is_number_integer()) {
    emplace(v.get<std::int64_t>());
  } else if (v.is_number()) {
    emplace(v.get<double>());
  } else if (v.is_string()) {
    emplace(v.get<std::string>());
  } else {
    parse_fail(where, "null is not allowed");
  }
}

toml::table json_to_table(const nlohmann::json& j, const std::string& where) {
  toml::table t;
  for (const auto& [k, v] : j.items()) {
    json_insert(v, join(where, k), [&](auto&& x) { t.insert(k, std::forward<decltype(x)>(x)); });
  }
  return t;
}

toml::array json_to_array(const nlohmann::json& j, const std::string& where) {
  toml::array a;
  std::size_t k = 0;
  for (const auto& v : j) {
    json_insert(v, where + "." + std::to_string(k++), [&](auto&& x) {
      a.push_back(std::forward<decltype(x)>(x));
    });
  }
  return a;
}

toml::table parse_table(const std::string& text, bool json) {
  if (json) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::parse_error, std::string("json: ") + e.what());
    }
    if (!j.is_object()) throw Error(Errc::parse_error, "json: top level must be an object");
    return json_to_table(j, "");
  }
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "toml: " << e.description() << " (line " << e.source().begin.line << ", column "
        << e.source().begin.column << ")";
    throw Error(Errc::parse_error, msg.str());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_json(const std::filesystem::path& path) { return path.extension() == ".json"; }

void apply_override(toml::table& root, const std::string& key, const std::string& literal) {
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + literal);
  } catch (const toml::parse_error& e) {
    throw Error(Errc::parse_error, key + ": bad value '" + literal + "': " + std::string(e.description()));
  }
  toml::node* cur = &root;
  std::string seg;
  std::vector<std::string> parts;
  std::istringstream ss(key);
  while (std::getline(ss, seg, '.')) parts.push_back(seg);
  if (parts.empty()) throw Error(Errc::parse_error, "empty override key");
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (toml::table* t = cur->as_table()) {
      toml::node* next = t->get(parts[k]);
      if (next == nullptr) {
        t->insert(parts[k], toml::table{});
        next = t->get(parts[k]);
      }
      cur = next;
    } else if (toml::array* a = cur->as_array()) {
      const std::size_t idx = std::stoul(parts[k]);
      if (idx >= a->size()) throw Error(Errc::parse_error, key + ": index out of range");
      cur = a->get(idx);
    } else {
      throw Error(Errc::parse_error, key + ": '" + parts[k - 1] + "' is not a table or array");
    }
  }
  const toml::node* value = parsed.get("v");
  if (toml::table* t = cur->as_table()) {
    value->visit([&](auto&& v) { t->insert_or_assign(parts.back(), v); });
  } else if (toml::array* a = cur->as_array()) {
    const std::size_t idx = std::stoul(parts.back());
    if (idx >= a->size()) throw Error(Errc::parse_error, key + ": index out of range");
    value->visit([&](auto&& v) { a->replace(a->begin() + static_cast<std::ptrdiff_t>(idx), v); });
  } else {
    throw Error(Errc::parse_error, key + ": parent is not a table or array");
  }
}

toml::array vec_array(const Vec3& v) { return toml::array{v(0), v(1), v(2)}; }

toml::array mat_array(const Mat3& m) {
  return toml::array{vec_array(m.row(0)), vec_array(m.row(1)), vec_array(m.row(2))};
}

const char* attitude_name(AttitudeMode m) {
  switch (m) {
    case AttitudeMode::tangent: return "tangent";
    case AttitudeMode::constant: return "constant";
    case AttitudeMode::explicit_rate: return "explicit_rate";
  }
  return "tangent";
}

Scenario finish(Scenario s) {
  s.validate();
  return s;
}

}  // namespace

Vec3 HeadingPolynomial::at(double t) const {
  Vec3 b = Vec3::Zero();
  double p = 1.0;
  for (const Vec3& c : coefficients) {
    b += p * c;
    p *= t;
  }
  const double nb = b.norm();
  if (!(nb > 0.0)) throw Error(Errc::collinear_heading, "heading b1(t) vanishes");
  return b / nb;
}

Mat3 box_inertia(double mass, const Vec3& d) {
  const double k = mass / 12.0;
  return Vec3(k * (d(1) * d(1) + d(2) * d(2)), k * (d(0) * d(0) + d(2) * d(2)),
              k * (d(0) * d(0) + d(1) * d(1)))
      .asDiagonal();
}

void Scenario::validate() const {
  invalid(schema_version == kScenarioSchemaVersion, "schema_version == 1");
  params.validate();
  if (payload_box) invalid(payload_box->minCoeff() > 0.0, "payload box dimensions > 0");
  invalid(initial.agents.size() == params.n(), "one initial state per agent");
  invalid(headings.size() == params.n(), "one heading per agent");
  invalid(initial.all_finite(), "initial state finite");
  invalid(is_rotation(initial.R0, 1e-9), "initial R0 in SO(3)");
  for (std::size_t i = 0; i < params.n(); ++i) {
    const std::string tag = "agent " + std::to_string(i + 1) + ": ";
    const AgentState& a = initial.agents[i];
    invalid(std::abs(a.q.norm() - 1.0) <= 1e-9, tag + "|q_i| = 1");
    invalid(std::abs(a.omega.dot(a.q)) <= 1e-8, tag + "omega_i . q_i = 0");
    invalid(is_rotation(a.R, 1e-9), tag + "R_i in SO(3)");
    invalid(!headings[i].coefficients.empty(), tag + "heading has coefficients");
  }
  const double gs[] = {gains.k_x0, gains.k_v0, gains.k_R0, gains.k_Omega0, gains.k_q,
                       gains.k_omega, gains.k_R, gains.k_Omega};
  for (double g : gs) invalid(std::isfinite(g) && g >= 0.0, "gains >= 0");
  invalid(std::isfinite(gains.epsilon) && gains.epsilon > 0.0 && gains.epsilon <= 1.0,
          "epsilon in (0, 1]");
  invalid(sim.dt > 0.0 && sim.dt <= kMaxStep, "dt in (0, 0.05]");
  invalid(std::isfinite(sim.t_final) && sim.t_final >= 0.0, "t_final >= 0");
  invalid(sim.control_divisor >= 1, "control_divisor >= 1");
  invalid(sim.log_interval >= sim.dt, "log_interval >= dt");
  domain.validate();
  check_command(command, sim.t_final);
}

void check_command(const CommandSpec& spec, double t_final, double step) {
  const SinusoidCommand cmd(spec);
  const int samples = static_cast<int>(std::ceil(t_final / step));
  for (int k = 0; k <= samples; ++k) {
    const double t = std::min(k * step, t_final);
    CommandSample c;
    try {
      c = cmd.at(t);
    } catch (const Error& e) {
      throw Error(Errc::validation_error, "command at t=" + std::to_string(t) + ": " + e.what());
    }
    invalid(orthogonality_error(c.R) <= 1e-9 && c.R.determinant() > 0.0,
            "commanded payload attitude in SO(3) at t=" + std::to_string(t));
  }
}

Scenario parse_scenario(const std::string& text, bool json) {
  return finish(from_table(parse_table(text, json)));
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), is_json(path));
}

Scenario load_scenario(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  toml::table root = parse_table(read_file(path), is_json(path));
  for (const auto& [k, v] : overrides) apply_override(root, k, v);
  return finish(from_table(root));
}

std::string serialize_scenario(const Scenario& s) {
  toml::table root;
  root.insert("schema_version", s.schema_version);
  root.insert("name", s.name);
  root.insert("world", toml::table{{"gravity", s.params.gravity}});

  toml::table payload{{"mass", s.params.payload_mass}};
  if (s.payload_box) {
    payload.insert("box", vec_array(*s.payload_box));
  } else {
    payload.insert("inertia", mat_array(s.params.payload_inertia));
  }
  root.insert("payload", payload);

  toml::array agents;
  for (std::size_t i = 0; i < s.params.n(); ++i) {
    const AgentParams& p = s.params.agents[i];
    const AgentState& a = s.initial.agents[i];
    toml::array heading;
    for (const Vec3& c : s.headings[i].coefficients) heading.push_back(vec_array(c));
    agents.push_back(toml::table{{"mass", p.mass},
                                 {"inertia", mat_array(p.inertia)},
                                 {"link_length", p.link_length},
                                 {"attachment", vec_array(p.attachment)},
                                 {"q", vec_array(a.q)},
                                 {"omega", vec_array(a.omega)},
                                 {"R", mat_array(a.R)},
                                 {"Omega", vec_array(a.Omega)},
                                 {"heading", heading}});
  }
  root.insert("agents", agents);

  root.insert("initial", toml::table{{"x0", vec_array(s.initial.x0)},
                                     {"v0", vec_array(s.initial.v0)},
                                     {"R0", mat_array(s.initial.R0)},
                                     {"Omega0", vec_array(s.initial.Omega0)}});

  toml::table command{{"attitude", attitude_name(s.command.attitude)},
                      {"reference", mat_array(s.command.attitude_reference)},
                      {"rate", vec_array(s.command.attitude_rate)}};
  const char* axes[3] = {"x", "y", "z"};
  for (std::size_t k = 0; k < 3; ++k) {
    const AxisSignal& ax = s.command.position[k];
    toml::array terms;
    for (const SinusoidTerm& t : ax.terms) {
      terms.push_back(toml::table{{"amplitude", t.amplitude}, {"frequency", t.frequency}, {"phase", t.phase}});
    }
    command.insert(axes[k], toml::table{{"offset", ax.offset}, {"terms", terms}});
  }
  root.insert("command", command);

  const GainSet& g = s.gains;
  root.insert("gains", toml::table{{"k_x0", g.k_x0},     {"k_v0", g.k_v0},   {"k_R0", g.k_R0},
                                   {"k_Omega0", g.k_Omega0}, {"k_q", g.k_q}, {"k_omega", g.k_omega},
                                   {"k_R", g.k_R},       {"k_Omega", g.k_Omega},
                                   {"epsilon", g.epsilon}});
  root.insert("sim", toml::table{{"dt", s.sim.dt},
                                 {"t_final", s.sim.t_final},
                                 {"control_divisor", s.sim.control_divisor},
                                 {"log_interval", s.sim.log_interval},
                                 {"model", s.sim.model == Model::full ? "full" : "simplified"},
                                 {"seed", static_cast<std::int64_t>(s.sim.seed)},
                                 {"clamp_thrust", s.sim.clamp_thrust}});
  root.insert("domain", toml::table{{"e_x_max", s.domain.e_x_max},
                                    {"psi_R0", s.domain.psi_R0},
                                    {"psi_q", s.domain.psi_q}});
  root.insert("output", toml::table{{"svg", s.output.svg}, {"path", s.output.path}});

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

}  // namespace multilift
