#ifndef DCGRID_CONTROL_HPP
#define DCGRID_CONTROL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dcgrid/analysis.hpp"
#include "dcgrid/errors.hpp"
#include "dcgrid/plant.hpp"
#include "dcgrid/topology.hpp"

namespace dcgrid {

/// Timed scenario event.
struct Event {
  enum class Type { SetTheta, SetOmega, UnplugDg, PlugDg, SetLoad };
  double time = 0.0;
  Type type = Type::SetTheta;
  int node = -1;        // UnplugDg / PlugDg / SetLoad
  double value = 0.0;   // theta, omega, or load resistance in ohm
  bool relay_while_unplugged = true;  // UnplugDg only
};

struct ControllerConfig {
  SharingMode mode = SharingMode::Uniform;
  NodePartition partition;  // critical mode only
  double theta = 1.0;
  double omega = 1.0;
  // Integral gains of the two correction loops. They scale the transient
  // speed only; every equilibrium is gain-independent. The defaults place
  // the slowest closed-loop mode of networks in the hundreds-of-volts,
  // tens-of-amperes class around -3 1/s, so a cold start settles within
  // a few seconds.
  double current_gain = 200.0;
  double voltage_gain = 10.0;
};

/// Integrator and observer states. delta_v and v_est cover all nodes in
/// uniform mode and only the critical nodes in split mode; ordinary-node
/// estimates in split mode are algebraic relays with no state.
struct ControllerState {
  Eigen::VectorXd delta_i;  // V, per DG
  Eigen::VectorXd delta_v;  // V, per voltage-regulating node
  Eigen::VectorXd v_est;    // V, per observer node
};

/// Compromised reference currents. Uniform mode blends capacity with the
/// load-proportional base at every node; split mode blends only at
/// critical nodes and leaves ordinary nodes on their capacities.
inline Eigen::VectorXd reference_currents(const ControllerConfig& cfg,
                                          const DGRatings& ratings,
                                          const Eigen::VectorXd& i_b_or_i_b1,
                                          const std::vector<bool>* plugged = nullptr) {
  detail::check_theta(cfg.theta);
  const int n = static_cast<int>(ratings.current_capacity.size());
  Eigen::VectorXd i_r(n);
  if (cfg.mode == SharingMode::Uniform) {
    if (i_b_or_i_b1.size() != n)
      throw ValidationError("base current dimension mismatch");
    i_r = cfg.theta * ratings.current_capacity + (1.0 - cfg.theta) * i_b_or_i_b1;
  } else {
    if (i_b_or_i_b1.size() != cfg.partition.m())
      throw ValidationError("base current dimension mismatch");
    i_r = ratings.current_capacity;
    for (int k = 0; k < cfg.partition.m(); ++k) {
      const int node = cfg.partition.critical[static_cast<std::size_t>(k)];
      i_r(node) = cfg.theta * ratings.current_capacity(node) +
                  (1.0 - cfg.theta) * i_b_or_i_b1(k);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (plugged && !(*plugged)[static_cast<std::size_t>(i)]) continue;
    if (!(i_r(i) > 0.0))
      throw NonpositiveReference("reference current at node " + std::to_string(i + 1) +
                                 " is nonpositive");
  }
  return i_r;
}

/// The distributed control law with its communication structure compiled
/// into reduced Laplacians. Unplugged DGs leave the consensus as
/// participants; when their communication node stays active it keeps
/// relaying, which is exactly a Kron reduction of the coupling onto the
/// remaining participants.
class ControlLaw {
 public:
  ControlLaw(const ElectricalNetwork& net, const CommGraph& graph,
             const DGRatings& ratings, ControllerConfig cfg)
      : net_(net), graph_(graph), ratings_(ratings), cfg_(std::move(cfg)),
        plugged_(static_cast<std::size_t>(net.n_bus), true) {
    ratings_.validate(net_.n_bus);
    graph_.validate();
    if (!(cfg_.current_gain > 0.0) || !(cfg_.voltage_gain > 0.0))
      throw ValidationError("integral gains must be positive");
    if (cfg_.mode == SharingMode::Uniform) {
      for (int i = 0; i < net_.n_bus; ++i)
        if (net_.load_conductance(i) <= 0.0)
          throw AssumptionViolation("uniform mode requires a load at every bus");
    }
    rebuild();
  }

  const ControllerConfig& config() const { return cfg_; }
  const ElectricalNetwork& network() const { return net_; }
  const CommGraph& graph() const { return graph_; }
  const DGRatings& ratings() const { return ratings_; }
  const std::vector<bool>& plugged() const { return plugged_; }
  const Eigen::VectorXd& references() const { return i_r_; }
  int n_regulators() const { return static_cast<int>(regulators_.size()); }

  ControllerState initial_state(const Eigen::VectorXd& v_bus) const {
    ControllerState s;
    s.delta_i = Eigen::VectorXd::Zero(net_.n_bus);
    s.delta_v = Eigen::VectorXd::Zero(n_regulators());
    s.v_est.resize(n_regulators());
    for (std::size_t k = 0; k < regulators_.size(); ++k)
      s.v_est(static_cast<Eigen::Index>(k)) = v_bus(regulators_[k]);
    return s;
  }

  /// Converter voltage commands u = Vrat - r I + delta_i (+ delta_v on
  /// voltage-regulating nodes).
  Eigen::VectorXd output(const ControllerState& state,
                         const Eigen::VectorXd& i_conv) const {
    Eigen::VectorXd u =
        Eigen::VectorXd::Constant(net_.n_bus, ratings_.rated_voltage) -
        ratings_.droop_coefficient.cwiseProduct(i_conv) + state.delta_i;
    for (std::size_t k = 0; k < regulators_.size(); ++k)
      u(regulators_[k]) += state.delta_v(static_cast<Eigen::Index>(k));
    return u;
  }

  /// Allocation-free variant for the integrator hot loop.
  void output_into(const ControllerState& state, const Eigen::VectorXd& i_conv,
                   Eigen::VectorXd& u) const {
    u = state.delta_i - ratings_.droop_coefficient.cwiseProduct(i_conv);
    u.array() += ratings_.rated_voltage;
    for (std::size_t k = 0; k < regulators_.size(); ++k)
      u(regulators_[k]) += state.delta_v(static_cast<Eigen::Index>(k));
  }

  /// Integrator derivatives given plant measurements. dv_bus must be the
  /// plant-model voltage derivative evaluated at the same state (exact
  /// co-simulation, not a numerical difference).
  void derivatives(const ControllerState& state, const Eigen::VectorXd& i_conv,
                   const Eigen::VectorXd& dv_bus, ControllerState& d) const {
    d.delta_i.setZero(net_.n_bus);
    d.delta_v.setZero(n_regulators());
    d.v_est.setZero(n_regulators());

    if (!participants_.empty()) {
      pu_buf_.resize(static_cast<Eigen::Index>(participants_.size()));
      for (std::size_t k = 0; k < participants_.size(); ++k) {
        const int i = participants_[k];
        pu_buf_(static_cast<Eigen::Index>(k)) = i_conv(i) / i_r_(i);
      }
      cons_buf_.resize(pu_buf_.size());
      cons_buf_.noalias() = lap_cons_ * pu_buf_;
      for (std::size_t k = 0; k < participants_.size(); ++k)
        d.delta_i(participants_[k]) =
            -cfg_.current_gain * cons_buf_(static_cast<Eigen::Index>(k));
    }

    if (!active_observers_.empty()) {
      obs_buf_.resize(static_cast<Eigen::Index>(active_observers_.size()));
      for (std::size_t k = 0; k < active_observers_.size(); ++k)
        obs_buf_(static_cast<Eigen::Index>(k)) =
            state.v_est(active_observer_slots_[k]);
      est_buf_.resize(obs_buf_.size());
      est_buf_.noalias() = lap_obs_ * obs_buf_;
      for (std::size_t k = 0; k < active_observers_.size(); ++k) {
        const int slot = active_observer_slots_[k];
        d.v_est(slot) = dv_bus(regulators_[static_cast<std::size_t>(slot)]) -
                        est_buf_(static_cast<Eigen::Index>(k));
        d.delta_v(slot) =
            cfg_.voltage_gain * (ratings_.rated_voltage - state.v_est(slot));
      }
    }
  }

  /// Estimates for every node: observer states where they exist, relayed
  /// values elsewhere. Frozen (non-relaying) nodes report their last
  /// observer state or the rated voltage.
  Eigen::VectorXd full_estimates(const ControllerState& state) const {
    Eigen::VectorXd est =
        Eigen::VectorXd::Constant(net_.n_bus, ratings_.rated_voltage);
    for (std::size_t k = 0; k < regulators_.size(); ++k)
      est(regulators_[k]) = state.v_est(static_cast<Eigen::Index>(k));
    if (relay_targets_.empty() || active_observers_.empty()) return est;
    obs_buf_.resize(static_cast<Eigen::Index>(active_observers_.size()));
    for (std::size_t k = 0; k < active_observers_.size(); ++k)
      obs_buf_(static_cast<Eigen::Index>(k)) = state.v_est(active_observer_slots_[k]);
    const Eigen::VectorXd relayed = relay_map_ * obs_buf_;
    for (std::size_t k = 0; k < relay_targets_.size(); ++k)
      est(relay_targets_[k]) = relayed(static_cast<Eigen::Index>(k));
    return est;
  }

  /// Applies a timed event. Plug/unplug resets every observer state to
  /// the present bus voltage, restoring the zero-sum condition the
  /// dynamic-average estimator needs; integrators of unplugged DGs stay
  /// frozen at their last values.
  void apply_event(const Event& ev, ControllerState& state,
                   const Eigen::VectorXd& v_bus) {
    switch (ev.type) {
      case Event::Type::SetTheta:
        detail::check_theta(ev.value);
        cfg_.theta = ev.value;
        break;
      case Event::Type::SetOmega:
        detail::check_omega(ev.value);
        cfg_.omega = ev.value;
        break;
      case Event::Type::UnplugDg: {
        check_node(ev.node);
        plugged_[static_cast<std::size_t>(ev.node)] = false;
        if (!ev.relay_while_unplugged)
          graph_.active[static_cast<std::size_t>(ev.node)] = false;
        reset_observers(state, v_bus);
        break;
      }
      case Event::Type::PlugDg:
        check_node(ev.node);
        plugged_[static_cast<std::size_t>(ev.node)] = true;
        graph_.active[static_cast<std::size_t>(ev.node)] = true;
        reset_observers(state, v_bus);
        break;
      case Event::Type::SetLoad:
        check_node(ev.node);
        if (!(ev.value > 0.0)) throw ValidationError("load resistance must be positive");
        net_.load_conductance(ev.node) = 1.0 / ev.value;
        break;
    }
    rebuild();
  }

  /// Recompiles references and reduced Laplacians from the current
  /// theta/omega, plug state and communication activity.
  void rebuild() {
    const int n = net_.n_bus;

    if (!is_connected(graph_))
      throw DisconnectedGraph("active communication graph is disconnected");

    if (cfg_.mode == SharingMode::Uniform) {
      const Eigen::VectorXd i_b =
          ratings_.rated_voltage * net_.load_conductance;
      i_r_ = reference_currents(cfg_, ratings_, i_b, &plugged_);
      regulators_.clear();
      for (int i = 0; i < n; ++i) regulators_.push_back(i);
    } else {
      const PartitionedAdmittance pa = partitioned_admittance(net_, cfg_.partition);
      const Eigen::VectorXd ib1 = i_b1(pa, ratings_, cfg_.omega);
      i_r_ = reference_currents(cfg_, ratings_, ib1, &plugged_);
      regulators_ = cfg_.partition.critical;
    }

    std::vector<int> comm_active;
    for (int i = 0; i < n; ++i)
      if (graph_.active[static_cast<std::size_t>(i)]) comm_active.push_back(i);
    std::vector<int> pos_in_active(static_cast<std::size_t>(n), -1);
    for (std::size_t k = 0; k < comm_active.size(); ++k)
      pos_in_active[static_cast<std::size_t>(comm_active[k])] = static_cast<int>(k);

    const Eigen::MatrixXd lap_full = laplacian(graph_);
    const Eigen::MatrixXd lap_act =
        detail::submatrix(lap_full, comm_active, comm_active);

    participants_.clear();
    std::vector<int> part_pos;
    for (int i = 0; i < n; ++i) {
      if (!plugged_[static_cast<std::size_t>(i)]) continue;
      if (pos_in_active[static_cast<std::size_t>(i)] < 0)
        throw DisconnectedGraph("plugged DG at node " + std::to_string(i + 1) +
                                " has no active communication");
      participants_.push_back(i);
      part_pos.push_back(pos_in_active[static_cast<std::size_t>(i)]);
    }
    lap_cons_ = participants_.empty() ? Eigen::MatrixXd()
                                      : kron_reduce(lap_act, part_pos);

    active_observers_.clear();
    active_observer_slots_.clear();
    std::vector<int> obs_pos;
    for (std::size_t k = 0; k < regulators_.size(); ++k) {
      const int i = regulators_[k];
      if (!plugged_[static_cast<std::size_t>(i)]) continue;
      active_observers_.push_back(i);
      active_observer_slots_.push_back(static_cast<int>(k));
      obs_pos.push_back(pos_in_active[static_cast<std::size_t>(i)]);
    }
    if (!active_observers_.empty()) {
      lap_obs_ = kron_reduce(lap_act, obs_pos);
      // relay for every comm-active node that carries no observer state
      relay_targets_.clear();
      std::vector<int> relay_pos;
      std::vector<bool> is_obs(static_cast<std::size_t>(n), false);
      for (int i : active_observers_) is_obs[static_cast<std::size_t>(i)] = true;
      for (int i : comm_active) {
        if (is_obs[static_cast<std::size_t>(i)]) continue;
        relay_targets_.push_back(i);
        relay_pos.push_back(pos_in_active[static_cast<std::size_t>(i)]);
      }
      if (relay_targets_.empty()) {
        relay_map_.resize(0, 0);
      } else {
        const Eigen::MatrixXd l21 =
            detail::submatrix(lap_act, relay_pos, obs_pos);
        const Eigen::MatrixXd l22 =
            detail::submatrix(lap_act, relay_pos, relay_pos);
        auto lu = detail::checked_lu(l22, "relay Laplacian");
        relay_map_ = -lu.solve(l21);
      }
    } else {
      lap_obs_.resize(0, 0);
      relay_map_.resize(0, 0);
      relay_targets_.clear();
    }
  }

 private:
  void check_node(int node) const {
    if (node < 0 || node >= net_.n_bus)
      throw ValidationError("event references node out of range");
  }

  void reset_observers(ControllerState& state, const Eigen::VectorXd& v_bus) const {
    for (std::size_t k = 0; k < regulators_.size(); ++k)
      state.v_est(static_cast<Eigen::Index>(k)) = v_bus(regulators_[k]);
  }

  ElectricalNetwork net_;
  CommGraph graph_;
  DGRatings ratings_;
  ControllerConfig cfg_;
  std::vector<bool> plugged_;

  Eigen::VectorXd i_r_;
  std::vector<int> regulators_;        // nodes carrying delta_v / v_est slots
  std::vector<int> participants_;      // plugged DGs in the current-consensus
  std::vector<int> active_observers_;  // regulators that are plugged
  std::vector<int> active_observer_slots_;
  std::vector<int> relay_targets_;
  Eigen::MatrixXd lap_cons_;  // consensus coupling, reduced to participants
  Eigen::MatrixXd lap_obs_;   // observer coupling, reduced to active observers
  Eigen::MatrixXd relay_map_;

  mutable Eigen::VectorXd pu_buf_, cons_buf_, obs_buf_, est_buf_;
};

}  // namespace dcgrid

#endif
