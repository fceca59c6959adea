#ifndef DCGRID_ANALYSIS_HPP
#define DCGRID_ANALYSIS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "dcgrid/errors.hpp"
#include "dcgrid/plant.hpp"

namespace dcgrid {

namespace detail {
inline void check_theta(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw ValidationError("theta must lie in [0, 1]");
}
inline void check_omega(double omega) {
  if (!(omega > 0.0)) throw ValidationError("omega must be positive");
}
}  // namespace detail

/// Per-node voltage and current deviation ratios plus their infinity
/// norms. delta_i is relative to the mean per-unit current, so it sums
/// to zero by construction.
struct DeviationReport {
  Eigen::VectorXd delta_v;
  Eigen::VectorXd delta_i;
  double mvdr = 0.0;
  double mcdr = 0.0;

  static DeviationReport from_state(const Eigen::VectorXd& v_bus,
                                    const Eigen::VectorXd& i_conv,
                                    const Eigen::VectorXd& current_capacity,
                                    double rated_voltage) {
    DeviationReport r;
    r.delta_v = (v_bus.array() - rated_voltage) / rated_voltage;
    const Eigen::VectorXd i_pu = i_conv.cwiseQuotient(current_capacity);
    const double avg = i_pu.mean();
    if (avg == 0.0)
      throw DegenerateLoadProfile("mean per-unit current is zero");
    r.delta_i = (i_pu.array() - avg) / avg;
    r.mvdr = r.delta_v.lpNorm<Eigen::Infinity>();
    r.mcdr = r.delta_i.lpNorm<Eigen::Infinity>();
    return r;
  }
};

struct ConflictCheck {
  bool compatible = false;
  Eigen::VectorXd ratios;  // I*_i / Y_L,i, ohm * ampere
};

/// Accurate sharing and voltage consensus coexist iff every bus has a
/// load and all capacity-to-load ratios coincide.
inline ConflictCheck conflict_check(const ElectricalNetwork& net,
                                    const DGRatings& ratings) {
  ConflictCheck out;
  out.ratios.resize(net.n_bus);
  bool all_loaded = true;
  for (int i = 0; i < net.n_bus; ++i) {
    if (net.load_conductance(i) > 0.0) {
      out.ratios(i) = ratings.current_capacity(i) / net.load_conductance(i);
    } else {
      out.ratios(i) = std::numeric_limits<double>::infinity();
      all_loaded = false;
    }
  }
  if (!all_loaded) return out;
  const double r0 = out.ratios(0);
  out.compatible = true;
  for (int i = 1; i < net.n_bus; ++i)
    if (std::abs(out.ratios(i) - r0) > 1e-9 * std::abs(r0)) out.compatible = false;
  return out;
}

/// Closed-form steady-state quantities of the all-nodes compromised
/// controller.
struct UniformSteadyState {
  int n = 0;
  double rated_voltage = 0.0;
  double mu = 0.0;
  Eigen::VectorXd psi;          // sums to zero
  Eigen::VectorXd i_b;          // Vrat * Y_L * 1
  Eigen::VectorXd i_pu_b;       // diag(I*)^-1 I_b
  double i_pu_b_mean = 0.0;
  Eigen::VectorXd delta_i_b;
};

inline UniformSteadyState uniform_steady(const ElectricalNetwork& net,
                                         const DGRatings& ratings) {
  for (int i = 0; i < net.n_bus; ++i)
    if (net.load_conductance(i) <= 0.0)
      throw AssumptionViolation("uniform mode requires a load at every bus");
  UniformSteadyState ss;
  ss.n = net.n_bus;
  ss.rated_voltage = ratings.rated_voltage;
  Eigen::MatrixXd ybar = bus_admittance(net);
  ybar.diagonal() += net.load_conductance;
  auto lu = detail::checked_lu(ybar, "load-augmented admittance");
  const Eigen::VectorXd x = lu.solve(ratings.current_capacity);
  ss.mu = x.sum() / (net.n_bus * ratings.rated_voltage);
  ss.psi = x / ratings.rated_voltage - ss.mu * Eigen::VectorXd::Ones(net.n_bus);
  ss.i_b = ratings.rated_voltage * net.load_conductance;
  ss.i_pu_b = ss.i_b.cwiseQuotient(ratings.current_capacity);
  ss.i_pu_b_mean = ss.i_pu_b.mean();
  ss.delta_i_b = (ss.i_pu_b.array() - ss.i_pu_b_mean) / ss.i_pu_b_mean;
  return ss;
}

/// VDR profile theta / ((mu-1) theta + 1) * Psi.
inline Eigen::VectorXd uniform_delta_v(const UniformSteadyState& ss, double theta) {
  detail::check_theta(theta);
  return (theta / ((ss.mu - 1.0) * theta + 1.0)) * ss.psi;
}

/// CDR profile (1-theta) / (theta (1/Ib_mean - 1) + 1) * Delta_b.
inline Eigen::VectorXd uniform_delta_i(const UniformSteadyState& ss, double theta) {
  detail::check_theta(theta);
  if (ss.i_pu_b_mean <= 0.0)
    throw DegenerateLoadProfile("mean per-unit base current is nonpositive");
  return ((1.0 - theta) / (theta * (1.0 / ss.i_pu_b_mean - 1.0) + 1.0)) * ss.delta_i_b;
}

inline double uniform_alpha(const UniformSteadyState& ss, double theta) {
  detail::check_theta(theta);
  return 1.0 / (ss.mu * theta + 1.0 - theta);
}

/// Largest trade-off factor keeping the MVDR within gamma_v.
inline double design_theta_uniform(const UniformSteadyState& ss, double gamma_v) {
  if (gamma_v < 0.0) throw ValidationError("gamma_v must be nonnegative");
  if (gamma_v == 0.0) return 0.0;
  const double psi_inf = ss.psi.lpNorm<Eigen::Infinity>();
  const double endpoint = psi_inf / ss.mu;  // ||Delta^V(1)||_inf
  if (gamma_v > endpoint) return 1.0;
  return gamma_v / (psi_inf - gamma_v * (ss.mu - 1.0));
}

/// Critical-node reference offset I_b1 = omega Vrat (Y22|Ybar) 1 + Y12 Y22^-1 I*_2.
inline Eigen::VectorXd i_b1(const PartitionedAdmittance& pa,
                            const DGRatings& ratings, double omega) {
  detail::check_omega(omega);
  const int m = pa.partition.m();
  Eigen::VectorXd i2(pa.partition.ordinary.size());
  for (std::size_t k = 0; k < pa.partition.ordinary.size(); ++k)
    i2(static_cast<Eigen::Index>(k)) = ratings.current_capacity(pa.partition.ordinary[k]);
  Eigen::VectorXd coupling = Eigen::VectorXd::Zero(m);
  if (!pa.partition.ordinary.empty()) {
    auto lu22 = detail::checked_lu(pa.y22_bar, "ordinary admittance");
    coupling = pa.y12 * lu22.solve(i2);
  }
  return omega * ratings.rated_voltage * (pa.schur_ord * Eigen::VectorXd::Ones(m)) +
         coupling;
}

/// Closed-form steady-state quantities of the split critical/ordinary
/// controller.
struct CriticalSteadyState {
  int m = 0;
  double rated_voltage = 0.0;
  double omega = 0.0;
  double mu = 0.0;
  Eigen::VectorXd psi1;         // sums to zero over critical nodes
  Eigen::VectorXd i_b1;
  Eigen::VectorXd omega1;       // ordinary-voltage profile, theta part
  Eigen::VectorXd omega2;       // ordinary-voltage profile, constant part
  Eigen::VectorXd upsilon1;     // Vrat (Y22|Ybar) 1
  Eigen::VectorXd coupling12;   // Y12 Y22^-1 I*_2
  Eigen::VectorXd i_star1;
  Eigen::VectorXd i_pu_b1;
  double i_pu_b1_mean = 0.0;
  Eigen::VectorXd delta_i_b1;
};

inline CriticalSteadyState critical_steady(const PartitionedAdmittance& pa,
                                           const DGRatings& ratings, double omega) {
  detail::check_omega(omega);
  CriticalSteadyState css;
  const int m = pa.partition.m();
  css.m = m;
  css.rated_voltage = ratings.rated_voltage;
  css.omega = omega;
  css.i_star1.resize(m);
  for (int k = 0; k < m; ++k)
    css.i_star1(k) = ratings.current_capacity(pa.partition.critical[static_cast<std::size_t>(k)]);
  Eigen::VectorXd i2(pa.partition.ordinary.size());
  for (std::size_t k = 0; k < pa.partition.ordinary.size(); ++k)
    i2(static_cast<Eigen::Index>(k)) = ratings.current_capacity(pa.partition.ordinary[k]);

  css.coupling12 = Eigen::VectorXd::Zero(m);
  if (!pa.partition.ordinary.empty()) {
    auto lu22 = detail::checked_lu(pa.y22_bar, "ordinary admittance");
    css.coupling12 = pa.y12 * lu22.solve(i2);
  }

  auto lu_schur = detail::checked_lu(pa.schur_ord, "reduced admittance");
  const Eigen::VectorXd x = lu_schur.solve(css.i_star1 - css.coupling12);
  css.mu = x.sum() / (m * ratings.rated_voltage);
  css.psi1 = x / ratings.rated_voltage - css.mu * Eigen::VectorXd::Ones(m);
  css.upsilon1 = ratings.rated_voltage * (pa.schur_ord * Eigen::VectorXd::Ones(m));
  css.i_b1 = omega * css.upsilon1 + css.coupling12;

  if (!pa.partition.ordinary.empty()) {
    auto lu11 = detail::checked_lu(pa.y11_bar, "critical admittance");
    auto lu_cri = detail::checked_lu(pa.schur_cri, "critical-eliminated admittance");
    css.omega1 = -lu_cri.solve(pa.y21 * lu11.solve(css.i_star1 - css.i_b1));
    css.omega2 = lu_cri.solve(i2 - pa.y21 * lu11.solve(css.i_b1));
  } else {
    css.omega1.resize(0);
    css.omega2.resize(0);
  }

  css.i_pu_b1 = css.i_b1.cwiseQuotient(css.i_star1);
  css.i_pu_b1_mean = css.i_pu_b1.mean();
  css.delta_i_b1 = (css.i_pu_b1.array() - css.i_pu_b1_mean) / css.i_pu_b1_mean;
  return css;
}

inline Eigen::VectorXd critical_delta_v(const CriticalSteadyState& css, double theta) {
  detail::check_theta(theta);
  const double denom = (css.mu - css.omega) * theta + css.omega;
  if (!(denom > 0.0)) throw ValidationError("mu theta + omega (1-theta) must be positive");
  return (theta / denom) * css.psi1;
}

inline double critical_alpha(const CriticalSteadyState& css, double theta) {
  detail::check_theta(theta);
  return 1.0 / (css.mu * theta + css.omega * (1.0 - theta));
}

/// Per-unit currents of critical DGs: alpha (theta 1 + (1-theta) diag(I*_1)^-1 I_b1).
inline Eigen::VectorXd critical_ipu1(const CriticalSteadyState& css, double theta) {
  const double alpha = critical_alpha(css, theta);
  return alpha * (theta * Eigen::VectorXd::Ones(css.m) +
                  (1.0 - theta) * css.i_pu_b1);
}

inline Eigen::VectorXd critical_delta_i(const CriticalSteadyState& css, double theta) {
  detail::check_theta(theta);
  if (css.i_pu_b1_mean <= 0.0)
    throw DegenerateLoadProfile("mean per-unit base current is nonpositive");
  return ((1.0 - theta) / (theta * (1.0 / css.i_pu_b1_mean - 1.0) + 1.0)) *
         css.delta_i_b1;
}

/// Ordinary-node voltages alpha (theta Omega1 + Omega2). This form stays
/// finite at mu == omega; the split into a (mu - omega) denominator does
/// not.
inline Eigen::VectorXd ordinary_voltages(const CriticalSteadyState& css, double theta) {
  const double alpha = critical_alpha(css, theta);
  if (css.omega1.size() == 0) return Eigen::VectorXd();
  return alpha * (theta * css.omega1 + css.omega2);
}

/// Largest trade-off factor keeping the critical MVDR within gamma_v:
/// omega gamma_v / (||Psi1||_inf - gamma_v (mu - omega)), obtained by
/// solving the VDR profile for theta at the bound.
inline double design_theta_critical(const CriticalSteadyState& css, double gamma_v) {
  if (gamma_v < 0.0) throw ValidationError("gamma_v must be nonnegative");
  if (gamma_v == 0.0) return 0.0;
  const double psi_inf = css.psi1.lpNorm<Eigen::Infinity>();
  const double endpoint = psi_inf / css.mu;
  if (gamma_v > endpoint) return 1.0;
  return css.omega * gamma_v / (psi_inf - gamma_v * (css.mu - css.omega));
}

struct OmegaRange {
  double omega_min = 0.0;             // interval is [omega_min, +inf)
  Eigen::VectorXd xi1;                // numerators zeta_i
  Eigen::VectorXd upsilon1;           // denominators nu_i
  double monotonicity_condition = 0.0; // sum condition value; < 0 is the
                                       // sufficient case for increasing 1^T I_1
};

/// Admissible range of omega for a given theta: all DG currents stay
/// nonnegative iff omega >= max_i zeta_i / nu_i.
inline OmegaRange omega_range(const CriticalSteadyState& css, double theta) {
  if (!(theta >= 0.0 && theta < 1.0))
    throw ValidationError("theta must lie in [0, 1)");
  OmegaRange out;
  out.upsilon1 = css.upsilon1;
  for (int i = 0; i < css.m; ++i)
    if (!(out.upsilon1(i) > 0.0))
      throw NonpositiveNu("current-bound denominator nu_i is nonpositive");
  out.xi1 = (-theta / (1.0 - theta)) * css.i_star1 - css.coupling12;
  out.omega_min = (out.xi1.cwiseQuotient(out.upsilon1)).maxCoeff();
  out.monotonicity_condition =
      theta * css.i_star1.sum() + (1.0 - theta) * css.coupling12.sum();
  return out;
}

}  // namespace dcgrid

#endif
