#ifndef DCGRID_PLANT_HPP
#define DCGRID_PLANT_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dcgrid/errors.hpp"
#include "dcgrid/topology.hpp"

namespace dcgrid {

/// Static electrical description of the microgrid: lines, LC filters
/// and constant-impedance loads. All units SI.
struct ElectricalNetwork {
  int n_bus = 0;
  int n_line = 0;
  Eigen::MatrixXd incidence;        // n_bus x n_line, entries in {-1,0,+1}
  Eigen::VectorXd line_resistance;  // ohm, > 0
  Eigen::VectorXd line_inductance;  // henry, > 0
  Eigen::VectorXd load_conductance; // siemens, >= 0
  Eigen::VectorXd filter_inductance;   // henry, > 0
  Eigen::VectorXd filter_capacitance;  // farad, > 0

  void validate() const {
    if (n_bus < 2) throw ValidationError("network needs at least two buses");
    if (incidence.rows() != n_bus || incidence.cols() != n_line)
      throw ValidationError("incidence matrix dimension mismatch");
    if (line_resistance.size() != n_line || line_inductance.size() != n_line)
      throw ValidationError("line parameter dimension mismatch");
    if (load_conductance.size() != n_bus || filter_inductance.size() != n_bus ||
        filter_capacitance.size() != n_bus)
      throw ValidationError("bus parameter dimension mismatch");
    for (int k = 0; k < n_line; ++k) {
      if (line_resistance(k) <= 0.0) throw ValidationError("nonpositive line resistance");
      if (line_inductance(k) <= 0.0) throw ValidationError("nonpositive line inductance");
      int plus = 0, minus = 0;
      for (int i = 0; i < n_bus; ++i) {
        const double b = incidence(i, k);
        if (b == 1.0) ++plus;
        else if (b == -1.0) ++minus;
        else if (b != 0.0) throw ValidationError("incidence entry not in {-1,0,+1}");
      }
      if (plus != 1 || minus != 1)
        throw ValidationError("each line needs exactly one source and one sink bus");
    }
    for (int i = 0; i < n_bus; ++i) {
      if (load_conductance(i) < 0.0) throw ValidationError("negative load conductance");
      if (filter_inductance(i) <= 0.0) throw ValidationError("nonpositive filter inductance");
      if (filter_capacitance(i) <= 0.0) throw ValidationError("nonpositive filter capacitance");
    }
    if (!electrically_connected())
      throw ValidationError("electrical network is not connected");
  }

  bool electrically_connected() const {
    CommGraph g = CommGraph::complete_inactive(n_bus);
    for (int k = 0; k < n_line; ++k) {
      int a = -1, b = -1;
      for (int i = 0; i < n_bus; ++i) {
        if (incidence(i, k) == 1.0) a = i;
        if (incidence(i, k) == -1.0) b = i;
      }
      if (a >= 0 && b >= 0) g.weights(a, b) = g.weights(b, a) = 1.0;
    }
    return is_connected(g);
  }
};

/// Per-DG ratings plus the network-wide rated voltage.
struct DGRatings {
  Eigen::VectorXd current_capacity;  // ampere, > 0
  Eigen::VectorXd droop_coefficient; // ohm, > 0
  double rated_voltage = 0.0;        // volt

  void validate(int n_bus) const {
    if (current_capacity.size() != n_bus || droop_coefficient.size() != n_bus)
      throw ValidationError("rating dimension mismatch");
    if (rated_voltage <= 0.0) throw ValidationError("nonpositive rated voltage");
    for (int i = 0; i < n_bus; ++i) {
      if (current_capacity(i) <= 0.0) throw ValidationError("nonpositive current capacity");
      if (droop_coefficient(i) <= 0.0) throw ValidationError("nonpositive droop coefficient");
    }
  }
};

/// Bus admittance matrix Y = B Rl^-1 B^T. Symmetric, Y*1 = 0.
inline Eigen::MatrixXd bus_admittance(const ElectricalNetwork& net) {
  return net.incidence * net.line_resistance.cwiseInverse().asDiagonal() *
         net.incidence.transpose();
}

/// Load-augmented admittance with the partition blocks and both Schur
/// complements used by the split-mode steady-state formulas.
struct PartitionedAdmittance {
  Eigen::MatrixXd y_bus;    // Y
  Eigen::MatrixXd y_bar;    // Y + Y_L
  Eigen::MatrixXd y11_bar;  // critical block of y_bar
  Eigen::MatrixXd y12;
  Eigen::MatrixXd y21;
  Eigen::MatrixXd y22_bar;  // ordinary block of y_bar
  Eigen::MatrixXd schur_ord;  // y11_bar - y12 y22_bar^-1 y21 (ordinary eliminated)
  Eigen::MatrixXd schur_cri;  // y22_bar - y21 y11_bar^-1 y12 (critical eliminated)
  NodePartition partition;
};

inline PartitionedAdmittance partitioned_admittance(const ElectricalNetwork& net,
                                                    const NodePartition& part) {
  PartitionedAdmittance pa;
  pa.partition = part;
  pa.y_bus = bus_admittance(net);
  pa.y_bar = pa.y_bus;
  pa.y_bar.diagonal() += net.load_conductance;
  pa.y11_bar = detail::submatrix(pa.y_bar, part.critical, part.critical);
  pa.y12 = detail::submatrix(pa.y_bar, part.critical, part.ordinary);
  pa.y21 = detail::submatrix(pa.y_bar, part.ordinary, part.critical);
  pa.y22_bar = detail::submatrix(pa.y_bar, part.ordinary, part.ordinary);
  if (part.ordinary.empty()) {
    pa.schur_ord = pa.y11_bar;
    pa.schur_cri.resize(0, 0);
  } else {
    auto lu22 = detail::checked_lu(pa.y22_bar, "ordinary admittance");
    pa.schur_ord = pa.y11_bar - pa.y12 * lu22.solve(pa.y21);
    auto lu11 = detail::checked_lu(pa.y11_bar, "critical admittance");
    pa.schur_cri = pa.y22_bar - pa.y21 * lu11.solve(pa.y12);
  }
  return pa;
}

/// Dynamic state of the electrical plant.
struct PlantState {
  Eigen::VectorXd i_line;  // per line, A
  Eigen::VectorXd i_conv;  // per DG converter, A
  Eigen::VectorXd v_bus;   // per bus, V

  static PlantState zero(const ElectricalNetwork& net) {
    PlantState s;
    s.i_line = Eigen::VectorXd::Zero(net.n_line);
    s.i_conv = Eigen::VectorXd::Zero(net.n_bus);
    s.v_bus = Eigen::VectorXd::Zero(net.n_bus);
    return s;
  }
};

/// Time derivatives of line currents, converter currents and bus
/// voltages. Unplugged DGs (plugged[i] == false) hold I_i at zero and
/// skip the converter-branch equation; their bus, load and lines stay.
inline PlantState plant_derivatives(const ElectricalNetwork& net,
                                    const PlantState& state,
                                    const Eigen::VectorXd& v_t,
                                    const std::vector<bool>* plugged = nullptr) {
  PlantState d;
  d.i_line = net.line_inductance.cwiseInverse().cwiseProduct(
      net.incidence.transpose() * state.v_bus -
      net.line_resistance.cwiseProduct(state.i_line));
  d.i_conv = net.filter_inductance.cwiseInverse().cwiseProduct(v_t - state.v_bus);
  d.v_bus = net.filter_capacitance.cwiseInverse().cwiseProduct(
      state.i_conv - net.load_conductance.cwiseProduct(state.v_bus) -
      net.incidence * state.i_line);
  if (plugged) {
    for (int i = 0; i < net.n_bus; ++i)
      if (!(*plugged)[static_cast<std::size_t>(i)]) d.i_conv(i) = 0.0;
  }
  return d;
}

enum class SharingMode { Uniform, Critical };

struct SteadyStateSolution {
  Eigen::VectorXd v_bus;   // V
  Eigen::VectorXd i_conv;  // A
  double alpha = 0.0;
};

/// Brute-force steady state: solves { I = alpha * I_ref, I = Ybar V,
/// balancing constraint } as one augmented linear system in (V, alpha).
/// Takes no shortcut through the closed-form expressions, so it serves
/// as the independent oracle for them. In Uniform mode the constraint
/// is sum(V) = N * Vrat; in Critical mode it is the same sum over the
/// critical set only.
inline SteadyStateSolution steady_state_oracle(const ElectricalNetwork& net,
                                               const DGRatings& ratings,
                                               const Eigen::VectorXd& reference_currents,
                                               SharingMode mode,
                                               const std::vector<int>* critical = nullptr) {
  const int n = net.n_bus;
  if (reference_currents.size() != n)
    throw ValidationError("reference current dimension mismatch");
  std::vector<int> balance_set;
  if (mode == SharingMode::Uniform) {
    for (int i = 0; i < n; ++i) balance_set.push_back(i);
  } else {
    if (!critical || critical->empty())
      throw ValidationError("critical mode needs a critical set");
    balance_set = *critical;
  }

  Eigen::MatrixXd ybar = bus_admittance(net);
  ybar.diagonal() += net.load_conductance;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  a.topLeftCorner(n, n) = ybar;
  a.topRightCorner(n, 1) = -reference_currents;
  for (int i : balance_set) a(n, i) = 1.0;
  rhs(n) = static_cast<double>(balance_set.size()) * ratings.rated_voltage;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (lu.rcond() < kSingularRcond)
    throw SingularSystem("augmented steady-state system is rank deficient");
  const Eigen::VectorXd x = lu.solve(rhs);
  SteadyStateSolution sol;
  sol.v_bus = x.head(n);
  sol.alpha = x(n);
  sol.i_conv = sol.alpha * reference_currents;
  return sol;
}

}  // namespace dcgrid

#endif
