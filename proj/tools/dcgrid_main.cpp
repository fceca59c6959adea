// Command-line front end: scenario analysis, closed-loop simulation and
// the two design helpers (trade-off factor and omega range).

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "dcgrid/analysis.hpp"
#include "dcgrid/scenario.hpp"
#include "dcgrid/sim.hpp"

namespace {

using nlohmann::json;

constexpr int kExitSchema = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

struct CommonOptions {
  std::string scenario_path;
  std::string format = "text";
};

json analyze_report(const dcgrid::ScenarioSpec& spec, double gamma_v,
                    std::vector<double> thetas, std::vector<double> omegas) {
  using namespace dcgrid;
  const MicrogridModel& model = spec.model;
  json report;
  report["scenario"] = spec.name;
  report["mode"] = model.mode == SharingMode::Uniform ? "uniform" : "critical";
  report["gamma_v"] = gamma_v;

  const ConflictCheck conflict = conflict_check(model.net, model.ratings);
  report["conflict"] = {{"compatible", conflict.compatible},
                        {"ratios_ohm_ampere", vec_to_json(conflict.ratios)}};

  if (thetas.empty()) thetas = {0.0, 0.5, 1.0};

  if (model.mode == SharingMode::Uniform) {
    const UniformSteadyState ss = uniform_steady(model.net, model.ratings);
    report["mu"] = ss.mu;
    report["psi_inf"] = ss.psi.lpNorm<Eigen::Infinity>();
    report["mvdr_at_theta_1"] = uniform_delta_v(ss, 1.0).lpNorm<Eigen::Infinity>();
    report["mcdr_at_theta_0"] = uniform_delta_i(ss, 0.0).lpNorm<Eigen::Infinity>();
    report["theta_d"] = design_theta_uniform(ss, gamma_v);
    json grid = json::array();
    for (double th : thetas) {
      const Eigen::VectorXd dv = uniform_delta_v(ss, th);
      const Eigen::VectorXd di = uniform_delta_i(ss, th);
      const double alpha = uniform_alpha(ss, th);
      grid.push_back({{"theta", th},
                      {"alpha", alpha},
                      {"mvdr", dv.lpNorm<Eigen::Infinity>()},
                      {"mcdr", di.lpNorm<Eigen::Infinity>()},
                      {"v_bus", vec_to_json(model.ratings.rated_voltage *
                                            (dv.array() + 1.0).matrix())},
                      {"delta_v", vec_to_json(dv)},
                      {"delta_i", vec_to_json(di)}});
    }
    report["grid"] = grid;
  } else {
    const PartitionedAdmittance pa =
        partitioned_admittance(model.net, model.partition);
    if (omegas.empty()) omegas = {spec.omega0};
    json per_omega = json::array();
    for (double om : omegas) {
      const CriticalSteadyState css = critical_steady(pa, model.ratings, om);
      json block;
      block["omega"] = om;
      block["mu"] = css.mu;
      block["psi1_inf"] = css.psi1.lpNorm<Eigen::Infinity>();
      block["critical_mvdr_at_theta_1"] =
          critical_delta_v(css, 1.0).lpNorm<Eigen::Infinity>();
      block["theta_d"] = design_theta_critical(css, gamma_v);
      json grid = json::array();
      for (double th : thetas) {
        const Eigen::VectorXd dv1 = critical_delta_v(css, th);
        const Eigen::VectorXd ipu1 = critical_ipu1(css, th);
        const Eigen::VectorXd v2 = ordinary_voltages(css, th);
        grid.push_back({{"theta", th},
                        {"alpha", critical_alpha(css, th)},
                        {"critical_mvdr", dv1.lpNorm<Eigen::Infinity>()},
                        {"critical_delta_v", vec_to_json(dv1)},
                        {"critical_i_pu", vec_to_json(ipu1)},
                        {"ordinary_v_bus", vec_to_json(v2)}});
      }
      block["grid"] = grid;
      const OmegaRange range = omega_range(css, 0.0);
      block["omega_min_at_theta_0"] = range.omega_min;
      block["monotonicity_condition"] = range.monotonicity_condition;
      per_omega.push_back(block);
    }
    report["per_omega"] = per_omega;
  }
  return report;
}

void print_text(const json& j, std::ostream& out, int indent = 0) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_structured()) {
      out << pad << it.key() << ":\n";
      if (it->is_array()) {
        bool scalars = true;
        for (const auto& e : *it)
          if (e.is_structured()) scalars = false;
        if (scalars) {
          out << pad << "  " << it->dump() << "\n";
        } else {
          for (const auto& e : *it) {
            out << pad << "  -\n";
            print_text(e, out, indent + 4);
          }
        }
      } else {
        print_text(*it, out, indent + 2);
      }
    } else {
      out << pad << it.key() << ": " << it->dump() << "\n";
    }
  }
}

void emit(const json& report, const std::string& format) {
  if (format == "json") {
    std::cout << report.dump(2) << "\n";
  } else {
    print_text(report, std::cout);
  }
}

int run_analyze(const CommonOptions& opts, double gamma_v, bool gamma_set,
                const std::vector<double>& thetas,
                const std::vector<double>& omegas) {
  dcgrid::ScenarioSpec spec = dcgrid::parse_scenario(opts.scenario_path);
  const double g = gamma_set ? gamma_v : spec.gamma_v;
  emit(analyze_report(spec, g, thetas, omegas), opts.format);
  return 0;
}

int run_simulate(const CommonOptions& opts, const std::string& out_dir,
                 double dt, bool dt_set) {
  dcgrid::ScenarioSpec spec = dcgrid::parse_scenario(opts.scenario_path);
  if (dt_set) spec.run.dt = dt;
  const dcgrid::SimulationTrace trace = dcgrid::run(spec);

  std::filesystem::create_directories(out_dir);
  const auto trace_path = std::filesystem::path(out_dir) / (spec.name + "_trace.csv");
  std::ofstream csv(trace_path);
  dcgrid::write_trace_csv(trace, spec.model.net.n_bus, csv);

  json summary;
  summary["scenario"] = spec.name;
  bool all_settled = true;
  json phases = json::array();
  for (const auto& ph : trace.phase_summaries) {
    all_settled = all_settled && ph.settled;
    phases.push_back({{"index", ph.index},
                      {"t_start", ph.t_start},
                      {"t_end", ph.t_end},
                      {"theta", ph.theta},
                      {"omega", ph.omega},
                      {"settled", ph.settled},
                      {"mvdr", ph.report.mvdr},
                      {"mcdr", ph.report.mcdr},
                      {"alpha", ph.alpha_estimate},
                      {"v_bus", vec_to_json(ph.v_bus)},
                      {"i_pu", vec_to_json(ph.i_pu)},
                      {"delta_v", vec_to_json(ph.report.delta_v)},
                      {"delta_i", vec_to_json(ph.report.delta_i)}});
  }
  summary["phases"] = phases;
  summary["all_settled"] = all_settled;
  const auto summary_path =
      std::filesystem::path(out_dir) / (spec.name + "_summary.json");
  std::ofstream(summary_path) << summary.dump(2) << "\n";

  emit(summary, opts.format);
  if (!all_settled) {
    std::cerr << "error: some phases did not settle\n";
    return kExitRuntime;
  }
  return 0;
}

int run_design_theta(const CommonOptions& opts, double gamma_v) {
  using namespace dcgrid;
  ScenarioSpec spec = parse_scenario(opts.scenario_path);
  json report;
  report["gamma_v"] = gamma_v;
  if (spec.model.mode == SharingMode::Uniform) {
    const UniformSteadyState ss = uniform_steady(spec.model.net, spec.model.ratings);
    report["mode"] = "uniform";
    report["mu"] = ss.mu;
    report["psi_inf"] = ss.psi.lpNorm<Eigen::Infinity>();
    report["mvdr_at_theta_1"] = uniform_delta_v(ss, 1.0).lpNorm<Eigen::Infinity>();
    report["theta_d"] = design_theta_uniform(ss, gamma_v);
  } else {
    const PartitionedAdmittance pa =
        partitioned_admittance(spec.model.net, spec.model.partition);
    const CriticalSteadyState css =
        critical_steady(pa, spec.model.ratings, spec.omega0);
    report["mode"] = "critical";
    report["omega"] = spec.omega0;
    report["mu"] = css.mu;
    report["psi1_inf"] = css.psi1.lpNorm<Eigen::Infinity>();
    report["critical_mvdr_at_theta_1"] =
        critical_delta_v(css, 1.0).lpNorm<Eigen::Infinity>();
    report["theta_d"] = design_theta_critical(css, gamma_v);
  }
  emit(report, opts.format);
  return 0;
}

int run_omega_range(const CommonOptions& opts, double theta) {
  using namespace dcgrid;
  ScenarioSpec spec = parse_scenario(opts.scenario_path);
  if (spec.model.mode != SharingMode::Critical)
    throw ValidationError("omega-range applies to critical-mode scenarios");
  const PartitionedAdmittance pa =
      partitioned_admittance(spec.model.net, spec.model.partition);
  const CriticalSteadyState css =
      critical_steady(pa, spec.model.ratings, spec.omega0);
  const OmegaRange range = omega_range(css, theta);
  json report;
  report["mode"] = "critical";
  report["theta"] = theta;
  report["mu"] = css.mu;
  report["omega_min"] = range.omega_min;
  report["xi1"] = vec_to_json(range.xi1);
  report["upsilon1"] = vec_to_json(range.upsilon1);
  report["monotonicity_condition"] = range.monotonicity_condition;
  emit(report, opts.format);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DC microgrid compromised-control toolkit"};
  app.require_subcommand(1);

  CommonOptions opts;
  double gamma_v = 0.0;
  double theta = 0.0;
  double dt = 1e-6;
  std::string out_dir = ".";
  std::vector<double> theta_grid, omega_grid;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", opts.scenario_path, "scenario file path")
        ->required();
    cmd->add_option("--format", opts.format, "output format")
        ->check(CLI::IsMember({"text", "json"}));
  };

  CLI::App* analyze = app.add_subcommand("analyze", "closed-form steady-state report");
  add_common(analyze);
  auto* gopt_a = analyze->add_option("--gamma-v", gamma_v, "admissible MVDR");
  analyze->add_option("--theta", theta_grid, "theta grid points");
  analyze->add_option("--omega", omega_grid, "omega grid points (critical mode)");

  CLI::App* simulate = app.add_subcommand("simulate", "run the scenario timeline");
  add_common(simulate);
  simulate->add_option("--out", out_dir, "output directory");
  auto* dtopt = simulate->add_option("--dt", dt, "integrator step override (s)");

  CLI::App* design = app.add_subcommand("design-theta", "largest admissible trade-off factor");
  add_common(design);
  design->add_option("--gamma-v", gamma_v, "admissible MVDR")->required();

  CLI::App* orange = app.add_subcommand("omega-range", "admissible omega interval");
  add_common(orange);
  orange->add_option("--theta", theta, "trade-off factor")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(analyze))
      return run_analyze(opts, gamma_v, gopt_a->count() > 0, theta_grid, omega_grid);
    if (app.got_subcommand(simulate))
      return run_simulate(opts, out_dir, dt, dtopt->count() > 0);
    if (app.got_subcommand(design)) return run_design_theta(opts, gamma_v);
    if (app.got_subcommand(orange)) return run_omega_range(opts, theta);
  } catch (const dcgrid::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const dcgrid::NumericalBlowup& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const dcgrid::NotSettled& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const dcgrid::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
