#include "formation/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "formation/averaging.hpp"
#include "formation/errors.hpp"

namespace formation {

namespace {

using json = nlohmann::json;

constexpr double kGradientCheckStep = 1e-5;
constexpr double kGradientCheckTolerance = 1e-6;
constexpr int kGradientCheckPoints = 20;
constexpr double kSymmetricProductTolerance = 1e-10;
constexpr int kSymmetricProductPoints = 100;
constexpr double kTransformHorizon = 2.0;
constexpr int kTransformSamplesPerPeriod = 160;
constexpr double kTransformTolerance = 1e-6;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kGradientHorizon = 10.0;
constexpr double kMinRSquared = 0.98;
constexpr double kChetaevSlack = 1e-9;
constexpr double kChetaevPassFraction = 0.99;
constexpr double kLemmaHorizon = 2.0;
constexpr double kLemmaBatchRatio = 2.0;

json vector_to_json(const Eigen::VectorXd& x) { return std::vector<double>(x.begin(), x.end()); }

json fit_to_json(const DecayFit& fit) {
  return {{"lambda", fit.lambda},
          {"mu", fit.mu},
          {"r_squared", fit.r_squared},
          {"window", {fit.window.t_begin, fit.window.t_end}}};
}

json constants_to_json(const SublevelConstants& c) {
  return {{"L", c.L},
          {"alpha0", c.alpha0},
          {"alpha1", c.alpha1},
          {"alpha2", c.alpha2},
          {"sample_count", c.sample_count}};
}

json chetaev_to_json(const ChetaevParams& c) {
  auto mat = [](const Eigen::Matrix2d& m) {
    return json::array({{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}});
  };
  return {{"epsilon", c.epsilon}, {"gamma0", c.gamma0}, {"gamma1", c.gamma1},
          {"gamma2", c.gamma2},   {"r_min", c.r_min},   {"r_max", c.r_max},
          {"O", mat(c.O)},        {"P", mat(c.P)},      {"Q", mat(c.Q)}};
}

double min_eigenvalue(const Eigen::Matrix2d& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m).eigenvalues().minCoeff();
}

std::string csv_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

template <typename Writer>
std::string render(Writer&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

Configuration target_configuration(const ScenarioConfig& s) {
  return s.reference_positions ? *s.reference_positions
                               : find_target_configuration(s.spec, s.seed);
}

ScenarioConfig as_gradient(const ScenarioConfig& s, double horizon) {
  ScenarioConfig g = s;
  g.kind = ControllerKind::kGradient;
  g.integrator.horizon = horizon;
  return g;
}

std::pair<double, double> damping_range(const std::vector<double>& damping) {
  const auto [lo, hi] = std::minmax_element(damping.begin(), damping.end());
  return {*lo, *hi};
}

// Checks -------------------------------------------------------------------

void check_gradient(const ScenarioConfig& s, const Configuration& target, ReportBuilder& report) {
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> gauss;
  double worst = 0.0;
  for (int k = 0; k < kGradientCheckPoints; ++k) {
    Configuration p = target;
    for (Eigen::Index j = 0; j < p.size(); ++j) p[j] += gauss(rng);
    const Eigen::VectorXd g = potential_gradient(s.spec, p);
    const Eigen::VectorXd fd = finite_difference_gradient(s.spec, p, kGradientCheckStep);
    worst = std::max(worst, (g - fd).norm() / g.norm());
  }
  report.add_check("gradient_vs_finite_difference", worst <= kGradientCheckTolerance,
                   {{"max_relative_error", worst},
                    {"tolerance", kGradientCheckTolerance},
                    {"points", kGradientCheckPoints},
                    {"step", kGradientCheckStep}});
}

void check_symmetric_product(const ScenarioConfig& s, const Configuration& target,
                             ReportBuilder& report) {
  DistanceOnlyConfig second = s.dither;
  second.omega *= 7.3;
  for (double& rho : second.offsets) rho = 0.5 * rho + 0.25;

  const std::vector<Configuration> points = sample_sublevel_points(
      s.spec, target, s.analysis.sublevel_bound, kSymmetricProductPoints, s.seed + 1);
  json settings = json::array();
  double worst = 0.0;
  const std::array<const DistanceOnlyConfig*, 2> configs{&s.dither, &second};
  for (const DistanceOnlyConfig* cfg : configs) {
    double setting_worst = 0.0;
    for (const Configuration& p : points) {
      const Eigen::VectorXd g = potential_gradient(s.spec, p);
      if (!(g.norm() > 0.0)) continue;
      const Eigen::VectorXd sym = symmetric_product_sum(s.spec, *cfg, s.frames, p);
      setting_worst = std::max(setting_worst, (sym - g).norm() / g.norm());
    }
    settings.push_back({{"omega", cfg->omega},
                        {"offsets", cfg->offsets},
                        {"max_relative_error", setting_worst}});
    worst = std::max(worst, setting_worst);
  }
  report.add_check("symmetric_product_identity", worst <= kSymmetricProductTolerance,
                   {{"max_relative_error", worst},
                    {"tolerance", kSymmetricProductTolerance},
                    {"points", static_cast<int>(points.size())},
                    {"settings", settings}});
}

void check_transform(const ScenarioConfig& s, ReportBuilder& report) {
  const bool smooth = std::all_of(s.dither.offsets.begin(), s.dither.offsets.end(),
                                  [](double rho) { return rho > 0.0; });
  if (!smooth) {
    report.add_check("transform_consistency", true,
                     {{"skipped", "transformed dynamics need every rho_i > 0"}});
    return;
  }
  const TransformConsistency c = transform_consistency(
      s.spec, s.frames, s.dither, s.initial_state(), kTransformHorizon, kTransformSamplesPerPeriod);
  report.add_check("transform_consistency", c.rms <= kTransformTolerance,
                   {{"rms", c.rms},
                    {"max_abs", c.max_abs},
                    {"tolerance", kTransformTolerance},
                    {"step", c.step},
                    {"horizon", kTransformHorizon},
                    {"samples", c.sample_count}});
}

void check_lemma(const ScenarioConfig& s, ReportBuilder& report) {
  ScenarioConfig run = s;
  run.kind = ControllerKind::kDistanceOnly;
  run.integrator.horizon = kLemmaHorizon;
  const Trajectory traj = simulate(run);
  std::vector<SystemState> even, odd;
  for (std::size_t k = 0; k < traj.samples.size(); ++k) {
    (k % 2 == 0 ? even : odd).push_back(traj.samples[k]);
  }
  const LemmaBounds all = check_lemma_energy_bounds(s.spec, s.frames, s.dither, traj.samples);
  const LemmaBounds a = check_lemma_energy_bounds(s.spec, s.frames, s.dither, even);
  const LemmaBounds b = check_lemma_energy_bounds(s.spec, s.frames, s.dither, odd);
  auto ratio = [](double x, double y) { return std::max(x, y) / std::min(x, y); };
  const double r1 = ratio(a.kappa1_raw, b.kappa1_raw);
  const double r2 = ratio(a.kappa2_raw, b.kappa2_raw);
  const bool finite = std::isfinite(all.kappa1) && std::isfinite(all.kappa2);
  report.add_check("lemma_energy_bounds",
                   finite && r1 <= kLemmaBatchRatio && r2 <= kLemmaBatchRatio,
                   {{"kappa1", all.kappa1},
                    {"kappa2", all.kappa2},
                    {"kappa1_raw", all.kappa1_raw},
                    {"kappa2_raw", all.kappa2_raw},
                    {"batch_ratio_kappa1", r1},
                    {"batch_ratio_kappa2", r2},
                    {"max_batch_ratio", kLemmaBatchRatio},
                    {"samples", all.sample_count}});
}

}  // namespace

// ReportBuilder ----------------------------------------------------------------

ReportBuilder::ReportBuilder(std::string command, const ScenarioConfig& scenario)
    : hash_(config_hash(scenario)) {
  doc_ = {{"schema_version", kReportSchemaVersion},
          {"command", std::move(command)},
          {"scenario", scenario.name},
          {"config_hash", hash_},
          {"entries", json::array()},
          {"checks", json::array()}};
}

void ReportBuilder::add(const std::string& operation, json value) {
  doc_["entries"].push_back(
      {{"operation", operation}, {"config_hash", hash_}, {"value", std::move(value)}});
}

void ReportBuilder::add_check(const std::string& name, bool passed, json detail) {
  all_passed_ = all_passed_ && passed;
  doc_["checks"].push_back({{"name", name},
                            {"passed", passed},
                            {"config_hash", hash_},
                            {"detail", std::move(detail)}});
}

json ReportBuilder::finish() const {
  json out = doc_;
  out["passed"] = all_passed_;
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormationError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw FormationError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// Commands ---------------------------------------------------------------------

CommandResult cmd_rigidity(const ScenarioConfig& scenario, std::ostream& log) {
  validate(scenario);
  ReportBuilder report("rigidity", scenario);
  const int N = scenario.spec.agent_count();
  const int n = scenario.spec.dimension();
  if (N < n) {
    log << "unsupported: infinitesimal rigidity is defined for N >= n (N = " << N
        << ", n = " << n << ")\n";
    report.add("is_infinitesimally_rigid",
               {{"supported", false}, {"agents", N}, {"dimension", n}});
    return {kExitUnsupported, report.finish()};
  }
  const Configuration p = target_configuration(scenario);
  const RigidityVerdict v = is_infinitesimally_rigid(scenario.spec.graph(), n, p);
  const bool realized = is_target_formation(scenario.spec, p, 1e-6);
  report.add("is_infinitesimally_rigid", {{"supported", true},
                                          {"rigid", v.rigid},
                                          {"rank", v.rank},
                                          {"required_rank", v.required_rank},
                                          {"singular_values", vector_to_json(v.singular_values)},
                                          {"configuration", vector_to_json(p)},
                                          {"configuration_realizes_distances", realized}});
  log << scenario.name << ": " << (v.rigid ? "infinitesimally rigid" : "not infinitesimally rigid")
      << ", rank " << v.rank << " of required " << v.required_rank << "\n";
  return {kExitOk, report.finish()};
}

CommandResult cmd_simulate(const ScenarioConfig& scenario, const std::filesystem::path& out_dir,
                           std::ostream& log) {
  validate(scenario);
  ReportBuilder report("simulate", scenario);
  const Trajectory traj = simulate(scenario);
  const EnergyTrace trace = energy_trace(scenario.spec, traj);

  write_file_atomic(out_dir / "trajectory.csv",
                    render([&](std::ostream& o) { write_trajectory_csv(o, scenario.spec, traj); }));
  write_file_atomic(out_dir / "energy.csv",
                    render([&](std::ostream& o) { write_energy_csv(o, trace); }));

  json run = {{"controller", traj.metadata.controller},
              {"step", traj.metadata.step},
              {"samples", traj.samples.size()},
              {"initial_energy", trace.front().total},
              {"terminal_energy", trace.back().total},
              {"tail_mean_energy", tail_mean_energy(trace)},
              {"max_relative_energy_increase", max_relative_energy_increase(trace)}};
  if (traj.metadata.omega) run["omega"] = *traj.metadata.omega;
  report.add("simulate", run);

  try {
    const DecayFit fit = fit_exponential(trace, default_fit_window(trace));
    report.add("fit_exponential", fit_to_json(fit));
    log << "fit on [" << fit.window.t_begin << ", " << fit.window.t_end << "]: mu = " << fit.mu
        << ", lambda = " << fit.lambda << ", R^2 = " << fit.r_squared << "\n";
  } catch (const ValidationError& e) {
    report.add("fit_exponential", {{"error", e.what()}});
    log << "no decay fit: " << e.what() << "\n";
  }

  const json summary = report.finish();
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  log << scenario.name << " (" << traj.metadata.controller << "): E " << trace.front().total
      << " -> " << trace.back().total << ", tail mean " << tail_mean_energy(trace) << "\n"
      << "wrote " << (out_dir / "trajectory.csv").string() << ", "
      << (out_dir / "energy.csv").string() << ", " << (out_dir / "summary.json").string() << "\n";
  return {kExitOk, summary};
}

CommandResult cmd_sweep(const ScenarioConfig& scenario, std::vector<double> omegas,
                        const std::filesystem::path& out_dir, std::ostream& log) {
  validate(scenario);
  if (omegas.empty()) omegas = scenario.analysis.omega_list;
  ReportBuilder report("sweep", scenario);
  const SweepSetup setup{scenario.spec, scenario.frames, scenario.dither,
                         scenario.initial_state(), scenario.integrator};
  const SweepResult result = sweep_omega(setup, omegas, scenario.analysis.sweep_horizon);

  json entries = json::array();
  std::ostringstream csv;
  csv << "omega,diverged,settled,step,terminal_energy,tail_residual,residual_floor\n";
  for (const SweepEntry& e : result.entries) {
    json entry = {{"omega", e.omega},       {"diverged", e.diverged},
                  {"settled", e.settled},   {"failed", e.diverged || !e.settled},
                  {"step", e.step}};
    if (!e.diverged) {
      entry["terminal_energy"] = e.terminal_energy;
      entry["tail_residual"] = e.tail_residual;
      entry["residual_floor"] = e.residual_floor;
    }
    if (!e.error.empty()) entry["error"] = e.error;
    entries.push_back(entry);
    csv << csv_number(e.omega) << ',' << (e.diverged ? 1 : 0) << ',' << (e.settled ? 1 : 0)
        << ',' << csv_number(e.step) << ',' << csv_number(e.terminal_energy) << ','
        << csv_number(e.tail_residual) << ',' << csv_number(e.residual_floor) << '\n';
    log << "omega " << e.omega << ": ";
    if (e.diverged) {
      log << "FAILED (" << e.error << ")\n";
    } else {
      log << "tail residual " << e.tail_residual << ", residual floor " << e.residual_floor
          << (e.settled ? "" : " (did not settle)") << "\n";
    }
  }
  json value = {{"horizon", result.horizon}, {"entries", entries}};
  value["slope"] = result.slope ? json(*result.slope) : json(nullptr);
  report.add("sweep_omega", value);
  if (result.slope) {
    log << "log-log slope of tail residual vs omega: " << *result.slope << "\n";
  } else {
    log << "slope undefined (fewer than two settled entries)\n";
  }

  const json doc = report.finish();
  write_file_atomic(out_dir / "sweep.json", doc.dump(2) + "\n");
  write_file_atomic(out_dir / "sweep.csv", csv.str());
  log << "wrote " << (out_dir / "sweep.json").string() << ", " << (out_dir / "sweep.csv").string()
      << "\n";
  return {kExitOk, doc};
}

CommandResult cmd_verify(const ScenarioConfig& scenario, const std::filesystem::path& out_dir,
                         std::ostream& log) {
  validate(scenario);
  ReportBuilder report("verify", scenario);
  const FormationSpec& spec = scenario.spec;

  const Configuration target = target_configuration(scenario);
  try {
    const RigidityVerdict v = is_infinitesimally_rigid(spec.graph(), spec.dimension(), target);
    report.add("is_infinitesimally_rigid",
               {{"rigid", v.rigid}, {"rank", v.rank}, {"required_rank", v.required_rank}});
    if (!v.rigid) {
      log << "note: target shape is not infinitesimally rigid (rank " << v.rank << " of "
          << v.required_rank << "); decay guarantees do not apply\n";
    }
  } catch (const UnsupportedCase& e) {
    report.add("is_infinitesimally_rigid", {{"supported", false}, {"message", e.what()}});
  }

  check_gradient(scenario, target, report);
  check_symmetric_product(scenario, target, report);
  check_transform(scenario, report);

  // Damped gradient system: monotone energy and exponential decay.
  const ScenarioConfig gradient = as_gradient(scenario, kGradientHorizon);
  const Trajectory gtraj = simulate(gradient);
  const EnergyTrace gtrace = energy_trace(spec, gtraj);
  const double increase = max_relative_energy_increase(gtrace);
  report.add_check("monotone_energy", increase <= kMonotoneSlack,
                   {{"max_relative_increase", increase},
                    {"slack", kMonotoneSlack},
                    {"horizon", kGradientHorizon},
                    {"samples", gtrace.size()}});
  DecayFit gfit;
  bool fit_ok = false;
  try {
    gfit = fit_exponential(gtrace, default_fit_window(gtrace));
    fit_ok = gfit.mu > 0.0 && gfit.r_squared >= kMinRSquared;
    report.add("fit_exponential", fit_to_json(gfit));
  } catch (const ValidationError& e) {
    report.add("fit_exponential", {{"error", e.what()}});
  }
  report.add_check("exponential_decay", fit_ok,
                   {{"mu", gfit.mu}, {"r_squared", gfit.r_squared}, {"min_r_squared", kMinRSquared}});

  // Chetaev function along the gradient trajectory.
  {
    json detail;
    bool passed = false;
    try {
      const SublevelConstants c = estimate_sublevel_constants(
          spec, target, scenario.analysis.sublevel_bound, scenario.analysis.sublevel_samples,
          scenario.seed);
      report.add("estimate_sublevel_constants", constants_to_json(c));
      const auto [r_min, r_max] = damping_range(scenario.damping);
      const ChetaevParams cp = find_chetaev_epsilon(c, r_min, r_max);
      report.add("find_chetaev_epsilon", chetaev_to_json(cp));
      const double pd = std::min({min_eigenvalue(cp.O), min_eigenvalue(cp.P), min_eigenvalue(cp.Q)});
      const Eigen::VectorXd r = damping_diagonal(scenario.damping, spec.dimension());
      int inside = 0;
      int holds = 0;
      json shortfall = json::array();
      for (const SystemState& x : gtraj.samples) {
        if (potential(spec, x.p) > c.L) continue;
        ++inside;
        const double value = chetaev_value(spec, x, cp.epsilon);
        const double rate = chetaev_derivative(spec, x, cp.epsilon, r);
        if (rate <= -cp.gamma2 * value + kChetaevSlack) {
          ++holds;
        } else if (shortfall.size() < 20) {
          shortfall.push_back({{"t", x.t}, {"excess", rate + cp.gamma2 * value}});
        }
      }
      const double fraction = inside > 0 ? static_cast<double>(holds) / inside : 0.0;
      passed = cp.epsilon > 0.0 && pd > 0.0 && inside > 0 && fraction >= kChetaevPassFraction;
      detail = {{"epsilon", cp.epsilon},        {"min_eigenvalue", pd},
                {"states_in_sublevel_set", inside}, {"states_satisfying", holds},
                {"fraction", fraction},         {"required_fraction", kChetaevPassFraction},
                {"shortfall_states", shortfall}};
    } catch (const FormationError& e) {
      detail = {{"error", e.what()}};
    }
    report.add_check("chetaev_decay", passed, detail);
  }

  check_lemma(scenario, report);

  // Practical bound constants for the dithered loop, reported only.
  if (scenario.kind == ControllerKind::kDistanceOnly) {
    try {
      ScenarioConfig run = scenario;
      run.integrator.horizon = scenario.analysis.sweep_horizon;
      const EnergyTrace dtrace = energy_trace(spec, simulate(run));
      const PracticalBound pb = calibrate_practical_bound(gtrace, dtrace, scenario.dither.omega);
      const double e0 = dtrace.front().total;
      const double t0 = dtrace.front().t;
      report.add("calibrate_practical_bound",
                 {{"rho", pb.rho},
                  {"lambda", pb.lambda},
                  {"mu", pb.mu},
                  {"omega", scenario.dither.omega},
                  {"calibration_run_passes",
                   check_practical_bound(dtrace, e0, pb.rho, scenario.dither.omega, pb.lambda,
                                         pb.mu, t0)},
                  {"tail_mean_energy", tail_mean_energy(dtrace)}});
    } catch (const FormationError& e) {
      report.add("calibrate_practical_bound", {{"error", e.what()}});
    }
  }

  const json doc = report.finish();
  write_file_atomic(out_dir / "report.json", doc.dump(2) + "\n");
  for (const json& check : doc["checks"]) {
    const bool skipped = check["detail"].contains("skipped");
    log << (skipped ? "SKIP " : check["passed"].get<bool>() ? "PASS " : "FAIL ")
        << check["name"].get<std::string>() << "\n";
  }
  log << (report.all_passed() ? "all checks passed" : "some checks failed") << "; wrote "
      << (out_dir / "report.json").string() << "\n";
  return {report.all_passed() ? kExitOk : kExitCheckFailed, doc};
}

}  // namespace formation
