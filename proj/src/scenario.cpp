#include "formation/scenario.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "formation/averaging.hpp"
#include "formation/errors.hpp"

namespace formation {

using nlohmann::json;

namespace {

constexpr int kScenarioSchemaVersion = 1;

std::vector<double> broadcast(const json& value, int count, const std::string& field) {
  if (value.is_number()) return std::vector<double>(count, value.get<double>());
  if (!value.is_array() || static_cast<int>(value.size()) != count) {
    throw DimensionError("'" + field + "' must be a number or a list of " +
                         std::to_string(count) + " numbers");
  }
  return value.get<std::vector<double>>();
}

Eigen::MatrixXd table(const json& value, int rows, int cols, const std::string& field) {
  Eigen::MatrixXd out(rows, cols);
  if (value.is_number()) {
    out.setConstant(value.get<double>());
    return out;
  }
  if (!value.is_array() || static_cast<int>(value.size()) != rows) {
    throw DimensionError("'" + field + "' must have one row per agent");
  }
  for (int i = 0; i < rows; ++i) {
    if (!value[i].is_array() || static_cast<int>(value[i].size()) != cols) {
      throw DimensionError("'" + field + "' rows must have one entry per axis");
    }
    for (int k = 0; k < cols; ++k) out(i, k) = value[i][k].get<double>();
  }
  return out;
}

json table_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd stacked(const json& value, int agents, int n, const std::string& field) {
  const Eigen::MatrixXd t = table(value, agents, n, field);
  Eigen::VectorXd out(static_cast<Eigen::Index>(agents) * n);
  for (int i = 0; i < agents; ++i) agent_block(out, i, n) = t.row(i).transpose();
  return out;
}

json stacked_to_json(const Eigen::VectorXd& x, int n) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < x.size() / n; ++i) {
    json row = json::array();
    for (int k = 0; k < n; ++k) row.push_back(x[i * n + k]);
    rows.push_back(row);
  }
  return rows;
}

// omega_{i,k} = n (i - 1) + k, phi = -pi/2, rho = 1, omega = 10.
DistanceOnlyConfig default_dither(int agents, int n, const std::vector<double>& damping) {
  DistanceOnlyConfig cfg;
  cfg.damping = damping;
  cfg.offsets.assign(agents, 1.0);
  cfg.omega = 10.0;
  cfg.frequencies.resize(agents, n);
  for (int i = 0; i < agents; ++i) {
    for (int k = 0; k < n; ++k) cfg.frequencies(i, k) = n * i + k + 1;
  }
  cfg.phases = Eigen::MatrixXd::Constant(agents, n, -std::numbers::pi / 2.0);
  return cfg;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t bits) {
  // (0, 1]
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

ScenarioConfig rectangle_scenario(std::string name, ControllerKind kind, double rho) {
  const int N = 4;
  const int n = 2;
  FormationSpec spec = FormationSpec::from_edges(
      N, n, {{0, 1, 3.0}, {2, 3, 3.0}, {1, 2, 4.0}, {0, 3, 4.0}, {0, 2, 5.0}, {1, 3, 5.0}});
  std::vector<double> angles;
  for (int i = 1; i <= N; ++i) angles.push_back(i * std::numbers::pi / 3.0);

  Configuration p0(N * n);
  p0 << 0.0, 0.0, -1.0, 4.0, 5.0, 3.0, 3.0, 0.0;
  Configuration reference(N * n);
  reference << 0.0, 0.0, 3.0, 0.0, 3.0, 4.0, 0.0, 4.0;

  const std::vector<double> damping(N, 50.0);
  DistanceOnlyConfig dither = default_dither(N, n, damping);
  dither.offsets.assign(N, rho);

  IntegratorConfig integ;
  integ.step = 1e-3;
  integ.horizon = kind == ControllerKind::kGradient ? 10.0 : 20.0;
  integ.record_every = 1;
  integ.samples_per_period = 20;

  return ScenarioConfig{std::move(name),
                        std::move(spec),
                        BodyFrames::planar(angles),
                        p0,
                        Eigen::VectorXd::Zero(N * n),
                        0.0,
                        reference,
                        kind,
                        damping,
                        std::move(dither),
                        integ,
                        1,
                        0.0,
                        AnalysisSettings{}};
}

ScenarioConfig collinear_scenario() {
  // Complete graph on four points of a line; the only realizations are collinear.
  ScenarioConfig s = rectangle_scenario("collinear", ControllerKind::kGradient, 1.0);
  s.spec = FormationSpec::from_edges(
      4, 2, {{0, 1, 1.0}, {0, 2, 2.0}, {0, 3, 3.0}, {1, 2, 1.0}, {1, 3, 2.0}, {2, 3, 1.0}});
  Configuration reference(8);
  reference << 0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0;
  s.reference_positions = reference;
  return s;
}

}  // namespace

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kGradient: return "gradient";
    case ControllerKind::kDistanceOnly: return "distance-only";
    case ControllerKind::kAveraged: return "averaged";
    case ControllerKind::kTransformed: return "transformed";
  }
  return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "gradient") return ControllerKind::kGradient;
  if (name == "distance-only") return ControllerKind::kDistanceOnly;
  if (name == "averaged") return ControllerKind::kAveraged;
  if (name == "transformed") return ControllerKind::kTransformed;
  throw ValidationError("unknown controller kind '" + name + "'");
}

void validate(const ScenarioConfig& s) {
  const FormationSpec& spec = s.spec;
  require_frames(s.frames, spec);
  require_configuration(spec, s.initial_positions);
  if (s.initial_velocities.size() != s.initial_positions.size()) {
    throw DimensionError("initial velocities do not match positions");
  }
  if (!s.initial_positions.allFinite() || !s.initial_velocities.allFinite()) {
    throw ValidationError("initial state must be finite");
  }
  if (s.reference_positions) require_configuration(spec, *s.reference_positions);
  validate(GradientControllerConfig{s.damping}, spec.agent_count());
  validate(s.dither, spec.agent_count(), spec.dimension());
  validate(s.integrator);
  if (s.kind == ControllerKind::kAveraged || s.kind == ControllerKind::kTransformed) {
    for (double rho : s.dither.offsets) {
      if (!(rho > 0.0)) {
        throw ValidationError(to_string(s.kind) + " dynamics need positive offsets rho_i");
      }
    }
  }
  if (!(s.distance_noise_stddev >= 0.0)) {
    throw ValidationError("distance noise stddev must be nonnegative");
  }
  if (!(s.analysis.sublevel_bound > 0.0)) throw ValidationError("sublevel bound must be positive");
  if (s.analysis.sublevel_samples <= 0) throw ValidationError("sublevel samples must be positive");
  if (!(s.analysis.sweep_horizon > 0.0)) throw ValidationError("sweep horizon must be positive");
}

ScenarioConfig scenario_from_json(const json& doc) {
  try {
    if (doc.contains("schema_version") && doc.at("schema_version").get<int>() != kScenarioSchemaVersion) {
      throw ValidationError("unsupported scenario schema_version");
    }
    const int N = doc.at("agents").get<int>();
    const int n = doc.at("dimension").get<int>();
    if (N <= 0 || n <= 0) throw ValidationError("agents and dimension must be positive");

    std::vector<EdgeLength> edges;
    for (const json& e : doc.at("edges")) {
      edges.push_back({e.at("i").get<int>() - 1, e.at("j").get<int>() - 1,
                       e.at("distance").get<double>()});
    }
    FormationSpec spec = FormationSpec::from_edges(N, n, edges);

    std::vector<Eigen::MatrixXd> bases;
    const json frames = doc.value("frames", json::object());
    if (frames.contains("angles")) {
      if (n != 2) throw ValidationError("frame angles are only meaningful in the plane");
      BodyFrames planar = BodyFrames::planar(broadcast(frames.at("angles"), N, "frames.angles"));
      for (int i = 0; i < N; ++i) bases.push_back(planar.basis(i));
    } else if (frames.contains("bases")) {
      const json& b = frames.at("bases");
      if (!b.is_array() || static_cast<int>(b.size()) != N) {
        throw DimensionError("'frames.bases' needs one basis per agent");
      }
      for (int i = 0; i < N; ++i) {
        // Listed as basis vectors b_{i,1..n}; stored as columns.
        bases.push_back(table(b[i], n, n, "frames.bases").transpose());
      }
    } else {
      bases.assign(N, Eigen::MatrixXd::Identity(n, n));
    }

    const Configuration p0 = stacked(doc.at("initial_positions"), N, n, "initial_positions");
    const Eigen::VectorXd v0 = doc.contains("initial_velocities")
                                   ? stacked(doc.at("initial_velocities"), N, n, "initial_velocities")
                                   : Eigen::VectorXd::Zero(N * n);
    std::optional<Configuration> reference;
    if (doc.contains("reference_positions")) {
      reference = stacked(doc.at("reference_positions"), N, n, "reference_positions");
    }

    const json ctrl = doc.at("controller");
    const ControllerKind kind = controller_kind_from_string(ctrl.at("kind").get<std::string>());
    const std::vector<double> damping = broadcast(ctrl.at("damping"), N, "controller.damping");
    DistanceOnlyConfig dither = default_dither(N, n, damping);
    if (ctrl.contains("offsets")) dither.offsets = broadcast(ctrl.at("offsets"), N, "controller.offsets");
    if (ctrl.contains("omega")) dither.omega = ctrl.at("omega").get<double>();
    if (ctrl.contains("frequencies")) {
      dither.frequencies = table(ctrl.at("frequencies"), N, n, "controller.frequencies");
    }
    if (ctrl.contains("phases")) dither.phases = table(ctrl.at("phases"), N, n, "controller.phases");

    IntegratorConfig integ;
    if (doc.contains("integrator")) {
      const json& j = doc.at("integrator");
      integ.step = j.value("step", integ.step);
      integ.horizon = j.value("horizon", integ.horizon);
      integ.record_every = j.value("record_every", integ.record_every);
      integ.samples_per_period = j.value("samples_per_period", integ.samples_per_period);
    }

    AnalysisSettings analysis;
    if (doc.contains("analysis")) {
      const json& a = doc.at("analysis");
      analysis.sublevel_bound = a.value("sublevel_bound", analysis.sublevel_bound);
      analysis.sublevel_samples = a.value("sublevel_samples", analysis.sublevel_samples);
      if (a.contains("omega_list")) analysis.omega_list = a.at("omega_list").get<std::vector<double>>();
      analysis.sweep_horizon = a.value("sweep_horizon", analysis.sweep_horizon);
    }

    ScenarioConfig s{doc.value("name", std::string("unnamed")),
                     std::move(spec),
                     BodyFrames(std::move(bases)),
                     p0,
                     v0,
                     doc.value("initial_time", 0.0),
                     reference,
                     kind,
                     damping,
                     std::move(dither),
                     integ,
                     doc.value("seed", std::uint64_t{1}),
                     doc.value("distance_noise_stddev", 0.0),
                     analysis};
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scenario: ") + e.what());
  }
}

json scenario_to_json(const ScenarioConfig& s) {
  const int n = s.spec.dimension();
  json doc;
  doc["schema_version"] = kScenarioSchemaVersion;
  doc["name"] = s.name;
  doc["agents"] = s.spec.agent_count();
  doc["dimension"] = n;
  json edges = json::array();
  for (int k = 0; k < s.spec.edge_count(); ++k) {
    const Edge& e = s.spec.graph().edges()[k];
    edges.push_back({{"i", e.i + 1}, {"j", e.j + 1}, {"distance", s.spec.distances()[k]}});
  }
  doc["edges"] = edges;
  json bases = json::array();
  for (int i = 0; i < s.frames.agent_count(); ++i) {
    bases.push_back(table_to_json(s.frames.basis(i).transpose()));
  }
  doc["frames"] = {{"bases", bases}};
  doc["initial_positions"] = stacked_to_json(s.initial_positions, n);
  doc["initial_velocities"] = stacked_to_json(s.initial_velocities, n);
  doc["initial_time"] = s.initial_time;
  if (s.reference_positions) doc["reference_positions"] = stacked_to_json(*s.reference_positions, n);
  doc["controller"] = {{"kind", to_string(s.kind)},
                       {"damping", s.damping},
                       {"offsets", s.dither.offsets},
                       {"omega", s.dither.omega},
                       {"frequencies", table_to_json(s.dither.frequencies)},
                       {"phases", table_to_json(s.dither.phases)}};
  doc["integrator"] = {{"step", s.integrator.step},
                       {"horizon", s.integrator.horizon},
                       {"record_every", s.integrator.record_every},
                       {"samples_per_period", s.integrator.samples_per_period}};
  doc["seed"] = s.seed;
  doc["distance_noise_stddev"] = s.distance_noise_stddev;
  doc["analysis"] = {{"sublevel_bound", s.analysis.sublevel_bound},
                     {"sublevel_samples", s.analysis.sublevel_samples},
                     {"omega_list", s.analysis.omega_list},
                     {"sweep_horizon", s.analysis.sweep_horizon}};
  return doc;
}

std::string config_hash(const ScenarioConfig& s) {
  const std::string text = scenario_to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> builtin_scenario_names() {
  return {"paper-fig1", "paper-fig2", "paper-fig2-rho0", "collinear"};
}

ScenarioConfig builtin_scenario(const std::string& name) {
  if (name == "paper-fig1") return rectangle_scenario(name, ControllerKind::kGradient, 1.0);
  if (name == "paper-fig2") return rectangle_scenario(name, ControllerKind::kDistanceOnly, 1.0);
  if (name == "paper-fig2-rho0") {
    return rectangle_scenario(name, ControllerKind::kDistanceOnly, 0.0);
  }
  if (name == "collinear") return collinear_scenario();
  throw ValidationError("unknown builtin scenario '" + name + "'");
}

ScenarioConfig load_scenario(const std::string& name_or_path) {
  for (const std::string& builtin : builtin_scenario_names()) {
    if (builtin == name_or_path) return builtin_scenario(name_or_path);
  }
  std::ifstream in(name_or_path);
  if (!in) {
    throw ValidationError("'" + name_or_path + "' is neither a builtin scenario nor a readable file");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse '" + name_or_path + "': " + e.what());
  }
  return scenario_from_json(doc);
}

MeasurementModel gaussian_distance_noise(double stddev, std::uint64_t seed) {
  return [stddev, seed](DistanceMeasurements& m, double t) {
    const std::uint64_t tbits = std::bit_cast<std::uint64_t>(t);
    for (std::size_t k = 0; k < m.lengths.size(); ++k) {
      const std::uint64_t a = splitmix64(seed ^ splitmix64(tbits ^ splitmix64(k)));
      const std::uint64_t b = splitmix64(a);
      const double z = std::sqrt(-2.0 * std::log(to_unit(a))) *
                       std::cos(2.0 * std::numbers::pi * to_unit(b));
      m.lengths[k] = std::abs(m.lengths[k] + stddev * z);
    }
  };
}

RightHandSide make_rhs(const ScenarioConfig& s) {
  switch (s.kind) {
    case ControllerKind::kGradient:
      return [&s](const SystemState& x) {
        return rhs_gradient(s.spec, s.frames, s.gradient_config(), x);
      };
    case ControllerKind::kDistanceOnly: {
      MeasurementModel noise;
      if (s.distance_noise_stddev > 0.0) {
        noise = gaussian_distance_noise(s.distance_noise_stddev, s.seed);
      }
      return [&s, noise](const SystemState& x) {
        return rhs_distance_only(s.spec, s.frames, s.dither, x, noise);
      };
    }
    case ControllerKind::kAveraged:
      return [&s](const SystemState& x) { return rhs_averaged(s.spec, s.frames, s.dither, x); };
    case ControllerKind::kTransformed:
      return [&s](const SystemState& x) {
        return rhs_transformed(s.spec, s.frames, s.dither, x);
      };
  }
  throw ValidationError("unknown controller kind");
}

Trajectory simulate(const ScenarioConfig& s) {
  validate(s);
  const RightHandSide rhs = make_rhs(s);
  const bool dithered =
      s.kind == ControllerKind::kDistanceOnly || s.kind == ControllerKind::kTransformed;
  const double fastest = dithered ? s.dither.fastest_angular_frequency() : 0.0;

  Trajectory traj;
  if (s.kind == ControllerKind::kTransformed) {
    traj = integrate(rhs, l_transform(s.spec, s.frames, s.dither, s.initial_state()),
                     s.integrator, fastest);
    for (SystemState& x : traj.samples) x = inverse_l_transform(s.spec, s.frames, s.dither, x);
  } else {
    traj = integrate(rhs, s.initial_state(), s.integrator, fastest);
  }
  traj.metadata.scenario_id = s.name;
  traj.metadata.controller = to_string(s.kind);
  if (s.kind != ControllerKind::kGradient) traj.metadata.omega = s.dither.omega;
  return traj;
}

}  // namespace formation
