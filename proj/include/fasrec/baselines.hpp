#pragma once

// Classical comparison estimators: orthogonal matching pursuit over an
// angular steering dictionary, and shrinkage of the observed ports.

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fasrec/channel_model.hpp"
#include "fasrec/errors.hpp"
#include "fasrec/pilot_system.hpp"

namespace fasrec {

struct AngularDictionary {
  Eigen::VectorXd grid_cosines;  // G spatial frequencies cos(theta_g)
  Eigen::VectorXd grid_angles;   // theta_g = acos(cos(theta_g)), in [0, pi]
  Eigen::MatrixXcd full_atoms;   // N x G, column g = a(theta_g)
  Eigen::MatrixXcd atoms;        // PM x G, rows of full_atoms at the scheduled ports
  Eigen::VectorXd atom_norms;    // column norms of `atoms`

  Eigen::Index size() const { return full_atoms.cols(); }
};

// Grid uniform in cos(theta): u_g = -1 + 2g/G, g = 0..G-1.
inline AngularDictionary build_dictionary(const ArrayGeometry& geom, const SwitchSchedule& sched,
                                          Eigen::Index grid_size) {
  if (grid_size < 1) throw ConfigError("omp_grid_size", "must be >= 1");
  if (static_cast<std::size_t>(geom.num_ports()) != sched.num_ports())
    throw ShapeError("build_dictionary: schedule and geometry port counts differ");
  AngularDictionary d;
  d.grid_cosines.resize(grid_size);
  d.grid_angles.resize(grid_size);
  d.full_atoms.resize(geom.num_ports(), grid_size);
  for (Eigen::Index g = 0; g < grid_size; ++g) {
    const double u = -1.0 + 2.0 * static_cast<double>(g) / static_cast<double>(grid_size);
    d.grid_cosines[g] = u;
    d.grid_angles[g] = std::acos(u);
    d.full_atoms.col(g) = steering_vector_from_cosine(u, geom);
  }
  d.atoms.resize(static_cast<Eigen::Index>(sched.num_observations()), grid_size);
  for (std::size_t k = 0; k < sched.num_observations(); ++k)
    d.atoms.row(static_cast<Eigen::Index>(k)) =
        d.full_atoms.row(static_cast<Eigen::Index>(sched.port_of(k)));
  d.atom_norms = d.atoms.colwise().norm().transpose();
  return d;
}

struct OmpResult {
  ComplexVector estimate;                 // length N
  std::vector<Eigen::Index> support;      // in selection order
  Eigen::VectorXcd coefficients;          // one per support atom
  std::vector<double> residual_norms;     // before iteration 1, then after each
  std::vector<Eigen::Index> dropped;      // atoms rejected as linearly dependent
  std::vector<std::string> warnings;
};

// Greedy sparse recovery. Each iteration picks the atom with the largest
// |<residual, atom>| / ||atom|| (norms over the observed entries), re-fits all
// support coefficients by least squares and updates the residual. The
// least-squares system is kept as an incrementally grown Gram-Schmidt QR with
// one reorthogonalization pass. Atoms that are dependent on the current
// support (relative residual below 1e-10) are dropped with a warning and the
// next best atom is tried.
inline OmpResult omp_estimate(const ComplexVector& y, const AngularDictionary& dict,
                              Eigen::Index sparsity) {
  constexpr double kRankTol = 1e-10;
  const Eigen::Index obs = dict.atoms.rows();
  const Eigen::Index grid = dict.size();
  if (y.size() != obs)
    throw ShapeError("omp_estimate: observation length " + std::to_string(y.size()) +
                     " does not match dictionary rows " + std::to_string(obs));
  if (sparsity < 0 || sparsity > grid || sparsity > obs)
    throw ConfigError("omp_sparsity", "must satisfy 0 <= L <= min(G, PM)");

  OmpResult res;
  std::vector<bool> excluded(static_cast<std::size_t>(grid), false);
  Eigen::MatrixXcd q(obs, 0);
  Eigen::MatrixXcd r(0, 0);
  Eigen::VectorXcd residual = y;
  res.residual_norms.push_back(residual.norm());

  for (Eigen::Index it = 0; it < sparsity; ++it) {
    if (residual.norm() == 0.0) break;
    const Eigen::VectorXcd corr = dict.atoms.adjoint() * residual;
    bool added = false;
    while (!added) {
      Eigen::Index best = -1;
      double best_score = -1.0;
      for (Eigen::Index g = 0; g < grid; ++g) {
        if (excluded[static_cast<std::size_t>(g)] || dict.atom_norms[g] == 0.0) continue;
        const double score = std::abs(corr[g]) / dict.atom_norms[g];
        if (score > best_score) {
          best_score = score;
          best = g;
        }
      }
      if (best < 0) break;  // dictionary exhausted
      excluded[static_cast<std::size_t>(best)] = true;

      const Eigen::VectorXcd atom = dict.atoms.col(best);
      Eigen::VectorXcd proj = q.adjoint() * atom;
      Eigen::VectorXcd v = atom - q * proj;
      const Eigen::VectorXcd again = q.adjoint() * v;
      v -= q * again;
      proj += again;
      const double vnorm = v.norm();
      if (vnorm <= kRankTol * atom.norm()) {
        res.dropped.push_back(best);
        res.warnings.push_back("omp: atom " + std::to_string(best) +
                               " is linearly dependent on the support; dropped");
        continue;
      }
      const Eigen::Index k = q.cols();
      q.conservativeResize(Eigen::NoChange, k + 1);
      q.col(k) = v / vnorm;
      r.conservativeResize(k + 1, k + 1);
      r.row(k).setZero();
      r.col(k).head(k) = proj;
      r(k, k) = vnorm;
      res.support.push_back(best);
      added = true;
    }
    if (!added) break;
    residual = y - q * (q.adjoint() * y);
    res.residual_norms.push_back(residual.norm());
  }

  const Eigen::Index k = q.cols();
  res.coefficients = Eigen::VectorXcd::Zero(k);
  if (k > 0)
    res.coefficients = r.triangularView<Eigen::Upper>().solve(q.adjoint() * y);
  res.estimate = ComplexVector::Zero(dict.full_atoms.rows());
  for (Eigen::Index i = 0; i < k; ++i)
    res.estimate += res.coefficients[i] * dict.full_atoms.col(res.support[static_cast<std::size_t>(i)]);
  return res;
}

// Per-port linear MMSE on observed ports under a unit-power prior: a port
// seen k times with sample mean ybar gets ybar / (1 + sigma2 / k). Unobserved
// ports stay at the prior mean 0.
inline ComplexVector ls_observed_estimate(const ComplexVector& y, const SwitchSchedule& sched,
                                          double sigma2) {
  if (static_cast<std::size_t>(y.size()) != sched.num_observations())
    throw ShapeError("ls_observed_estimate: observation length does not match schedule");
  if (!(sigma2 >= 0.0)) throw ConfigError("noise_variance", "must be >= 0");
  const auto n = static_cast<Eigen::Index>(sched.num_ports());
  ComplexVector sum = ComplexVector::Zero(n);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < sched.num_observations(); ++k) {
    const auto port = static_cast<Eigen::Index>(sched.port_of(k));
    sum[port] += y[static_cast<Eigen::Index>(k)];
    count[port] += 1.0;
  }
  ComplexVector est = ComplexVector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (count[i] > 0) est[i] = sum[i] / count[i] / (1.0 + sigma2 / count[i]);
  return est;
}

}  // namespace fasrec
