#ifndef DCGRID_SIM_HPP
#define DCGRID_SIM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "dcgrid/analysis.hpp"
#include "dcgrid/control.hpp"
#include "dcgrid/errors.hpp"
#include "dcgrid/plant.hpp"

namespace dcgrid {

/// Full static description: electrical network, communication graph,
/// ratings and the sharing mode with its partition.
struct MicrogridModel {
  ElectricalNetwork net;
  CommGraph graph;
  DGRatings ratings;
  SharingMode mode = SharingMode::Uniform;
  NodePartition partition;  // critical mode only
  double current_gain = 200.0;  // see ControllerConfig
  double voltage_gain = 10.0;

  void validate() const {
    net.validate();
    graph.validate();
    ratings.validate(net.n_bus);
    if (graph.n != net.n_bus)
      throw ValidationError("graph and network node counts differ");
    if (!is_connected(graph))
      throw DisconnectedGraph("communication graph is disconnected");
    if (mode == SharingMode::Critical && partition.m() == 0)
      throw ValidationError("critical mode requires a critical set");
  }
};

struct RunSettings {
  double duration = 10.0;
  double dt = 1e-6;
  double sample_interval = 1e-3;
};

struct ScenarioSpec {
  std::string name;
  std::string description;
  MicrogridModel model;
  double theta0 = 1.0;
  double omega0 = 1.0;
  std::vector<Event> timeline;
  RunSettings run;
  double gamma_v = 0.05;

  void validate() const {
    model.validate();
    detail::check_theta(theta0);
    if (model.mode == SharingMode::Critical) detail::check_omega(omega0);
    if (!(run.duration > 0.0) || !(run.dt > 0.0))
      throw ValidationError("duration and dt must be positive");
    if (run.dt > run.sample_interval)
      throw ValidationError("dt must not exceed the sample interval");
    double prev = 0.0;
    for (const auto& ev : timeline) {
      if (ev.time <= prev)
        throw ValidationError("event times must be strictly increasing and positive");
      if (ev.time >= run.duration)
        throw ValidationError("event time beyond scenario duration");
      prev = ev.time;
    }
    if (gamma_v < 0.0) throw ValidationError("gamma_v must be nonnegative");
  }
};

struct Sample {
  double t = 0.0;
  Eigen::VectorXd v_bus;
  Eigen::VectorXd i_conv;
  Eigen::VectorXd i_pu;   // I / I*
  Eigen::VectorXd est;
  double theta = 0.0;
  double omega = 0.0;
};

struct PhaseSummary {
  int index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double theta = 0.0;
  double omega = 0.0;
  bool settled = false;
  DeviationReport report;
  Eigen::VectorXd v_bus;
  Eigen::VectorXd i_pu;
  double alpha_estimate = 0.0;
};

struct SimulationTrace {
  std::vector<Sample> samples;
  std::vector<PhaseSummary> phase_summaries;
};

inline constexpr double kBlowupLimit = 1e9;
inline constexpr double kSettleTolerance = 1e-6;   // of the state scale
inline constexpr double kSettleWindow = 0.2;       // seconds

/// Fixed-step RK4 integrator over the combined plant + controller state.
/// Deterministic: two runs of the same spec are bit-identical.
class Simulator {
  // state layout: [i_line | i_conv | v_bus | delta_i | delta_v | v_est]
  template <typename V> auto il_seg(V&& x) const { return x.segment(0, m_lines_); }
  template <typename V> auto i_seg(V&& x) const { return x.segment(m_lines_, n_); }
  template <typename V> auto v_seg(V&& x) const { return x.segment(m_lines_ + n_, n_); }
  template <typename V> auto di_seg(V&& x) const { return x.segment(m_lines_ + 2 * n_, n_); }
  template <typename V> auto dv_seg(V&& x) const { return x.segment(m_lines_ + 3 * n_, n_reg_); }
  template <typename V> auto est_seg(V&& x) const {
    return x.segment(m_lines_ + 3 * n_ + n_reg_, n_reg_);
  }

 public:
  Simulator(const MicrogridModel& model, double theta0, double omega0)
      : law_(model.net, model.graph, model.ratings,
             ControllerConfig{model.mode, model.partition, theta0, omega0,
                              model.current_gain, model.voltage_gain}),
        n_(model.net.n_bus), m_lines_(model.net.n_line) {
    model.validate();
    n_reg_ = law_.n_regulators();
    dim_ = m_lines_ + 3 * n_ + 2 * n_reg_;
    x_ = Eigen::VectorXd::Zero(dim_);
    // cold start: V = Vrat, currents and integrators zero, observers at V(0)
    v_seg(x_).setConstant(model.ratings.rated_voltage);
    est_seg(x_).setConstant(model.ratings.rated_voltage);
    k1_.resize(dim_); k2_.resize(dim_); k3_.resize(dim_); k4_.resize(dim_);
    xtmp_.resize(dim_);
    u_buf_.resize(n_);
    ctrl_scratch_ = law_.initial_state(v_seg(x_));
    dctrl_scratch_ = ctrl_scratch_;
    refresh_cache();
  }

  double time() const { return t_; }
  const Eigen::VectorXd& state() const { return x_; }
  Eigen::VectorXd& mutable_state() { return x_; }
  ControlLaw& law() { return law_; }
  const ControlLaw& law() const { return law_; }

  Eigen::VectorXd bus_voltages() const { return v_seg(x_); }
  Eigen::VectorXd converter_currents() const { return i_seg(x_); }

  /// One RK4 step of size dt.
  void step(double dt) {
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    deriv(x_, k1_);
    xtmp_ = x_ + 0.5 * dt * k1_;
    deriv(xtmp_, k2_);
    xtmp_ = x_ + 0.5 * dt * k2_;
    deriv(xtmp_, k3_);
    xtmp_ = x_ + dt * k3_;
    deriv(xtmp_, k4_);
    x_ += (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
    t_ += dt;
  }

  /// Derivative of the combined field at the current state; used by the
  /// settling detector.
  double derivative_inf_norm() {
    deriv(x_, k1_);
    return k1_.lpNorm<Eigen::Infinity>();
  }

  void apply_event(const Event& ev) {
    ControllerState cs = extract_controller(x_);
    law_.apply_event(ev, cs, v_seg(x_));
    if (ev.type == Event::Type::UnplugDg) i_seg(x_)(ev.node) = 0.0;
    store_controller(cs, x_);
    refresh_cache();
  }

  void set_time(double t) { t_ = t; }

  Sample sample() const {
    Sample s;
    s.t = t_;
    s.v_bus = v_seg(x_);
    s.i_conv = i_seg(x_);
    s.i_pu = s.i_conv.cwiseQuotient(law_.ratings().current_capacity);
    s.est = law_.full_estimates(extract_controller(x_));
    s.theta = law_.config().theta;
    s.omega = law_.config().omega;
    return s;
  }

  DeviationReport deviation_report() const {
    return DeviationReport::from_state(v_seg(x_), i_seg(x_),
                                       law_.ratings().current_capacity,
                                       law_.ratings().rated_voltage);
  }

  /// Mean of I_i / I_r,i over plugged DGs.
  double alpha_estimate() const {
    const Eigen::VectorXd i = i_seg(x_);
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < n_; ++k) {
      if (!law_.plugged()[static_cast<std::size_t>(k)]) continue;
      sum += i(k) / law_.references()(k);
      ++count;
    }
    return count > 0 ? sum / count : 0.0;
  }

  ControllerState extract_controller(const Eigen::VectorXd& x) const {
    ControllerState cs;
    cs.delta_i = di_seg(x);
    cs.delta_v = dv_seg(x);
    cs.v_est = est_seg(x);
    return cs;
  }

 private:
  void store_controller(const ControllerState& cs, Eigen::VectorXd& x) const {
    di_seg(x) = cs.delta_i;
    dv_seg(x) = cs.delta_v;
    est_seg(x) = cs.v_est;
  }

  void refresh_cache() {
    const ElectricalNetwork& net = law_.network();
    incidence_ = net.incidence;
    ll_inv_ = net.line_inductance.cwiseInverse();
    rl_ = net.line_resistance;
    lt_inv_ = net.filter_inductance.cwiseInverse();
    ct_inv_ = net.filter_capacitance.cwiseInverse();
    yl_ = net.load_conductance;
  }

  void deriv(const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
    ctrl_scratch_.delta_i = di_seg(x);
    ctrl_scratch_.delta_v = dv_seg(x);
    ctrl_scratch_.v_est = est_seg(x);

    law_.output_into(ctrl_scratch_, i_seg(x), u_buf_);

    // plant field
    il_seg(dx) = ll_inv_.cwiseProduct(incidence_.transpose() * v_seg(x) -
                                      rl_.cwiseProduct(il_seg(x)));
    i_seg(dx) = lt_inv_.cwiseProduct(u_buf_ - v_seg(x));
    v_seg(dx) = ct_inv_.cwiseProduct(i_seg(x) - yl_.cwiseProduct(v_seg(x)) -
                                     incidence_ * il_seg(x));
    for (int k = 0; k < n_; ++k)
      if (!law_.plugged()[static_cast<std::size_t>(k)]) i_seg(dx)(k) = 0.0;

    law_.derivatives(ctrl_scratch_, i_seg(x), v_seg(dx), dctrl_scratch_);
    di_seg(dx) = dctrl_scratch_.delta_i;
    dv_seg(dx) = dctrl_scratch_.delta_v;
    est_seg(dx) = dctrl_scratch_.v_est;
  }

  ControlLaw law_;
  int n_ = 0, m_lines_ = 0, n_reg_ = 0, dim_ = 0;
  double t_ = 0.0;
  Eigen::VectorXd x_, k1_, k2_, k3_, k4_, xtmp_, u_buf_;
  Eigen::MatrixXd incidence_;
  Eigen::VectorXd ll_inv_, rl_, lt_inv_, ct_inv_, yl_;
  ControllerState ctrl_scratch_, dctrl_scratch_;
};

namespace detail {

/// Sliding settling detector: settled once every sampled derivative norm
/// across the trailing window stays below tolerance * state scale.
class SettleDetector {
 public:
  explicit SettleDetector(double window) : window_(window) {}

  void reset() { history_.clear(); }

  bool update(double t, double deriv_norm, double state_scale) {
    history_.emplace_back(t, deriv_norm / std::max(state_scale, 1.0));
    while (!history_.empty() && history_.front().first < t - window_ - 1e-12)
      history_.pop_front();
    if (history_.empty() || history_.back().first - history_.front().first <
                                window_ - 1e-9)
      return false;
    for (const auto& [ts, r] : history_)
      if (r >= kSettleTolerance) return false;
    return true;
  }

 private:
  double window_;
  std::deque<std::pair<double, double>> history_;
};

}  // namespace detail

/// Runs a scripted scenario: advances phase by phase with the step grid
/// cut at event and sample times, emits samples, and summarizes each
/// phase from its terminal state.
inline SimulationTrace run(const ScenarioSpec& spec) {
  spec.validate();
  Simulator sim(spec.model, spec.theta0, spec.omega0);
  SimulationTrace trace;

  std::vector<double> boundaries;
  for (const auto& ev : spec.timeline) boundaries.push_back(ev.time);
  boundaries.push_back(spec.run.duration);

  detail::SettleDetector detector(kSettleWindow);
  bool settled = false;

  auto take_sample = [&](double t) {
    sim.set_time(t);
    trace.samples.push_back(sim.sample());
    if (sim.state().lpNorm<Eigen::Infinity>() > kBlowupLimit)
      throw NumericalBlowup("state diverged at t = " + std::to_string(t) + " s");
    const double dn = sim.derivative_inf_norm();
    settled = detector.update(t, dn, sim.state().lpNorm<Eigen::Infinity>());
  };

  double phase_start = 0.0;
  take_sample(0.0);
  for (std::size_t phase = 0; phase < boundaries.size(); ++phase) {
    const double phase_end = boundaries[phase];
    const double span = phase_end - phase_start;
    const auto n_samples = static_cast<std::int64_t>(
        std::ceil(span / spec.run.sample_interval - 1e-9));
    for (std::int64_t s = 1; s <= n_samples; ++s) {
      const double target =
          std::min(phase_start + s * spec.run.sample_interval, phase_end);
      double t = trace.samples.back().t;
      const double chunk = target - t;
      const auto n_steps =
          std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                        std::ceil(chunk / spec.run.dt - 1e-9)));
      const double dt = chunk / static_cast<double>(n_steps);
      for (std::int64_t k = 0; k < n_steps; ++k) sim.step(dt);
      take_sample(target);
    }

    PhaseSummary summary;
    summary.index = static_cast<int>(phase);
    summary.t_start = phase_start;
    summary.t_end = phase_end;
    summary.theta = sim.law().config().theta;
    summary.omega = sim.law().config().omega;
    summary.settled = settled;
    summary.report = sim.deviation_report();
    summary.v_bus = sim.bus_voltages();
    summary.i_pu = sim.converter_currents().cwiseQuotient(
        spec.model.ratings.current_capacity);
    summary.alpha_estimate = sim.alpha_estimate();
    trace.phase_summaries.push_back(std::move(summary));

    if (phase < spec.timeline.size()) {
      const std::string at = " (at t = " + std::to_string(phase_end) + " s)";
      try {
        sim.apply_event(spec.timeline[phase]);
      } catch (const DisconnectedGraph& e) {
        throw DisconnectedGraph(e.what() + at);
      } catch (const NonpositiveReference& e) {
        throw NonpositiveReference(e.what() + at);
      }
      detector.reset();
      settled = false;
    }
    phase_start = phase_end;
  }
  return trace;
}

/// Simulates the closed loop at fixed (theta, omega) from a cold start
/// until the settling criterion is met, then reports the deviations.
inline DeviationReport settle(const MicrogridModel& model, double theta,
                              double omega, double horizon = 20.0,
                              double dt = 1e-6) {
  model.validate();
  Simulator sim(model, theta, omega);
  detail::SettleDetector detector(kSettleWindow);
  const double check_interval = 1e-3;
  double t = 0.0;
  while (t < horizon) {
    const auto n_steps = static_cast<std::int64_t>(std::llround(check_interval / dt));
    for (std::int64_t k = 0; k < n_steps; ++k) sim.step(dt);
    t += check_interval;
    if (sim.state().lpNorm<Eigen::Infinity>() > kBlowupLimit)
      throw NumericalBlowup("state diverged at t = " + std::to_string(t) + " s");
    if (detector.update(t, sim.derivative_inf_norm(),
                        sim.state().lpNorm<Eigen::Infinity>()))
      return sim.deviation_report();
  }
  throw NotSettled("settling criterion unmet within " + std::to_string(horizon) +
                   " s simulated");
}

}  // namespace dcgrid

#endif
