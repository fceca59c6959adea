#ifndef DCGRID_TOPOLOGY_HPP
#define DCGRID_TOPOLOGY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "dcgrid/errors.hpp"

namespace dcgrid {

inline constexpr double kSingularRcond = 1e-12;

/// Undirected weighted communication graph. Nodes may be deactivated
/// (unplugged relays); an inactive node's incident weights are treated
/// as zero.
struct CommGraph {
  int n = 0;
  Eigen::MatrixXd weights;          // symmetric, nonnegative, zero diagonal
  std::vector<bool> active;         // participates in communication

  static CommGraph complete_inactive(int n) {
    CommGraph g;
    g.n = n;
    g.weights = Eigen::MatrixXd::Zero(n, n);
    g.active.assign(static_cast<std::size_t>(n), true);
    return g;
  }

  void add_edge(int i, int j, double w) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw ValidationError("graph edge references node out of range");
    if (i == j) throw ValidationError("self-loop in communication graph");
    if (w < 0.0) throw ValidationError("negative edge weight");
    weights(i, j) = w;
    weights(j, i) = w;
  }

  void validate() const {
    if (n <= 0) throw ValidationError("empty communication graph");
    if (weights.rows() != n || weights.cols() != n)
      throw ValidationError("weight matrix dimension mismatch");
    if (static_cast<int>(active.size()) != n)
      throw ValidationError("active flag dimension mismatch");
    for (int i = 0; i < n; ++i) {
      if (weights(i, i) != 0.0) throw ValidationError("nonzero diagonal weight");
      for (int j = 0; j < n; ++j) {
        if (weights(i, j) < 0.0) throw ValidationError("negative weight");
        if (weights(i, j) != weights(j, i))
          throw ValidationError("asymmetric weight matrix");
      }
    }
  }

  /// Effective weight after masking inactive endpoints.
  double effective_weight(int i, int j) const {
    if (!active[static_cast<std::size_t>(i)] || !active[static_cast<std::size_t>(j)]) return 0.0;
    return weights(i, j);
  }
};

/// Split of node indices into critical {0..m-1 positions} and ordinary nodes.
/// Indices are shared between the electrical and communication descriptions.
struct NodePartition {
  std::vector<int> critical;
  std::vector<int> ordinary;

  static NodePartition from_critical(const std::vector<int>& critical, int n) {
    NodePartition p;
    p.critical = critical;
    std::sort(p.critical.begin(), p.critical.end());
    if (p.critical.empty()) throw ValidationError("critical set is empty");
    for (std::size_t k = 0; k < p.critical.size(); ++k) {
      if (p.critical[k] < 0 || p.critical[k] >= n)
        throw ValidationError("critical node index out of range");
      if (k > 0 && p.critical[k] == p.critical[k - 1])
        throw ValidationError("duplicate critical node");
    }
    std::vector<bool> is_cri(static_cast<std::size_t>(n), false);
    for (int i : p.critical) is_cri[static_cast<std::size_t>(i)] = true;
    for (int i = 0; i < n; ++i)
      if (!is_cri[static_cast<std::size_t>(i)]) p.ordinary.push_back(i);
    return p;
  }

  int m() const { return static_cast<int>(critical.size()); }
  int n() const { return static_cast<int>(critical.size() + ordinary.size()); }
};

/// Graph Laplacian over all n nodes. Inactive nodes contribute zero
/// rows and columns.
inline Eigen::MatrixXd laplacian(const CommGraph& g) {
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.n, g.n);
  for (int i = 0; i < g.n; ++i) {
    double degree = 0.0;
    for (int j = 0; j < g.n; ++j) {
      if (j == i) continue;
      const double w = g.effective_weight(i, j);
      lap(i, j) = -w;
      degree += w;
    }
    lap(i, i) = degree;
  }
  return lap;
}

/// True iff every pair of active nodes is joined by a path of
/// positive-weight edges among active nodes. Deterministic graph search,
/// no spectral tolerance involved.
inline bool is_connected(const CommGraph& g) {
  int start = -1;
  int n_active = 0;
  for (int i = 0; i < g.n; ++i) {
    if (g.active[static_cast<std::size_t>(i)]) {
      if (start < 0) start = i;
      ++n_active;
    }
  }
  if (n_active <= 1) return true;
  std::vector<bool> seen(static_cast<std::size_t>(g.n), false);
  std::vector<int> stack{start};
  seen[static_cast<std::size_t>(start)] = true;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < g.n; ++v) {
      if (!seen[static_cast<std::size_t>(v)] && g.effective_weight(u, v) > 0.0) {
        seen[static_cast<std::size_t>(v)] = true;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == n_active;
}

namespace detail {

inline Eigen::MatrixXd submatrix(const Eigen::MatrixXd& a,
                                 const std::vector<int>& rows,
                                 const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a(rows[r], cols[c]);
  return out;
}

/// Pivoted LU with a reciprocal-condition guard.
inline Eigen::PartialPivLU<Eigen::MatrixXd> checked_lu(const Eigen::MatrixXd& a,
                                                       const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (a.rows() > 0 && lu.rcond() < kSingularRcond)
    throw SingularBlock(std::string(what) + " block is numerically singular");
  return lu;
}

}  // namespace detail

/// Schur-complement (Kron) reduction of a Laplacian onto a retained
/// index set: L11 - L12 L22^-1 L21. The eliminated block must be
/// nonsingular, which holds whenever the underlying graph is connected.
inline Eigen::MatrixXd kron_reduce(const Eigen::MatrixXd& lap,
                                   const std::vector<int>& retained) {
  const int n = static_cast<int>(lap.rows());
  if (retained.empty()) throw ValidationError("retained set is empty");
  std::vector<bool> keep(static_cast<std::size_t>(n), false);
  for (int i : retained) {
    if (i < 0 || i >= n) throw ValidationError("retained index out of range");
    keep[static_cast<std::size_t>(i)] = true;
  }
  std::vector<int> eliminated;
  for (int i = 0; i < n; ++i)
    if (!keep[static_cast<std::size_t>(i)]) eliminated.push_back(i);
  if (eliminated.empty()) return lap;

  const Eigen::MatrixXd l11 = detail::submatrix(lap, retained, retained);
  const Eigen::MatrixXd l12 = detail::submatrix(lap, retained, eliminated);
  const Eigen::MatrixXd l21 = detail::submatrix(lap, eliminated, retained);
  const Eigen::MatrixXd l22 = detail::submatrix(lap, eliminated, eliminated);
  auto lu = detail::checked_lu(l22, "eliminated Laplacian");
  return l11 - l12 * lu.solve(l21);
}

/// Map from critical-node estimates to the algebraically relayed
/// ordinary-node estimates: -L22^-1 L21. Rows are nonnegative and sum
/// to one, so relayed nodes always carry a convex combination of the
/// critical estimates.
inline Eigen::MatrixXd ordinary_relay_map(const Eigen::MatrixXd& lap,
                                          const NodePartition& part) {
  const Eigen::MatrixXd l21 = detail::submatrix(lap, part.ordinary, part.critical);
  const Eigen::MatrixXd l22 = detail::submatrix(lap, part.ordinary, part.ordinary);
  auto lu = detail::checked_lu(l22, "ordinary Laplacian");
  return -lu.solve(l21);
}

}  // namespace dcgrid

#endif
