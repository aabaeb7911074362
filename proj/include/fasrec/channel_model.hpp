#pragma once

// Clustered-scattering channel over a linear fluid-antenna aperture.

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

#include "fasrec/errors.hpp"
#include "fasrec/random.hpp"

namespace fasrec {

using ComplexVector = Eigen::VectorXcd;

// N ports spread uniformly over W wavelengths, end to end.
class ArrayGeometry {
 public:
  ArrayGeometry(Eigen::Index num_ports, double aperture_wavelengths)
      : num_ports_(num_ports), aperture_(aperture_wavelengths) {
    if (num_ports < 2) throw ConfigError("num_ports", "need at least 2 ports");
    if (!(aperture_wavelengths > 0.0) || !std::isfinite(aperture_wavelengths))
      throw ConfigError("aperture_wavelengths", "must be positive and finite");
  }

  Eigen::Index num_ports() const { return num_ports_; }
  double aperture_wavelengths() const { return aperture_; }
  // d / lambda.
  double spacing_ratio() const { return aperture_ / static_cast<double>(num_ports_ - 1); }

 private:
  Eigen::Index num_ports_;
  double aperture_;
};

struct ScatteringConfig {
  int num_clusters = 2;
  int rays_per_cluster = 10;
  double max_angle_spread = 5.0 * std::numbers::pi / 180.0;  // radians, full width

  void validate() const {
    if (num_clusters < 1) throw ConfigError("num_clusters", "must be >= 1");
    if (rays_per_cluster < 1) throw ConfigError("rays_per_cluster", "must be >= 1");
    if (!(max_angle_spread >= 0.0)) throw ConfigError("max_angle_spread", "must be >= 0");
  }
};

// Steering vector for spatial frequency u = cos(theta).
inline ComplexVector steering_vector_from_cosine(double cosine, const ArrayGeometry& geom) {
  const Eigen::Index n_ports = geom.num_ports();
  const double amp = 1.0 / std::sqrt(static_cast<double>(n_ports));
  const double step = 2.0 * std::numbers::pi * geom.spacing_ratio() * cosine;
  ComplexVector a(n_ports);
  for (Eigen::Index n = 0; n < n_ports; ++n) {
    const double phase = step * static_cast<double>(n);
    a[n] = {amp * std::cos(phase), amp * std::sin(phase)};
  }
  return a;
}

// a(theta)[n] = exp(j 2 pi (d/lambda) n cos(theta)) / sqrt(N).
inline ComplexVector steering_vector(double theta, const ArrayGeometry& geom) {
  return steering_vector_from_cosine(std::cos(theta), geom);
}

// C x R angles of arrival: cluster centres on (-pi, pi), rays spread
// uniformly over a window of width max_angle_spread around each centre.
// Draw order: centre of cluster c, then its R offsets.
inline Eigen::MatrixXd draw_angles(const ScatteringConfig& cfg, Rng& rng) {
  cfg.validate();
  const double half = cfg.max_angle_spread / 2.0;
  Eigen::MatrixXd angles(cfg.num_clusters, cfg.rays_per_cluster);
  for (int c = 0; c < cfg.num_clusters; ++c) {
    const double centre = rng.uniform(-std::numbers::pi, std::numbers::pi);
    for (int r = 0; r < cfg.rays_per_cluster; ++r) {
      angles(c, r) = centre + rng.uniform(-half, half);
    }
  }
  return angles;
}

// Unit-variance complex Gaussian path gains, row-major draw order.
inline Eigen::MatrixXcd draw_gains(const ScatteringConfig& cfg, Rng& rng) {
  Eigen::MatrixXcd gains(cfg.num_clusters, cfg.rays_per_cluster);
  for (int c = 0; c < cfg.num_clusters; ++c)
    for (int r = 0; r < cfg.rays_per_cluster; ++r) gains(c, r) = rng.complex_normal(1.0);
  return gains;
}

// h = sqrt(N / (C R)) sum_{c,r} g_{c,r} a(theta_{c,r}).
inline ComplexVector channel_from_rays(const Eigen::MatrixXd& angles,
                                       const Eigen::MatrixXcd& gains,
                                       const ArrayGeometry& geom) {
  if (angles.rows() != gains.rows() || angles.cols() != gains.cols())
    throw ShapeError("channel_from_rays: angle and gain grids differ in shape");
  const double rays = static_cast<double>(angles.size());
  ComplexVector h = ComplexVector::Zero(geom.num_ports());
  for (Eigen::Index c = 0; c < angles.rows(); ++c)
    for (Eigen::Index r = 0; r < angles.cols(); ++r)
      h += gains(c, r) * steering_vector(angles(c, r), geom);
  h *= std::sqrt(static_cast<double>(geom.num_ports()) / rays);
  return h;
}

inline ComplexVector draw_channel(const ScatteringConfig& cfg, const ArrayGeometry& geom,
                                  Rng& rng) {
  const Eigen::MatrixXd angles = draw_angles(cfg, rng);
  const Eigen::MatrixXcd gains = draw_gains(cfg, rng);
  return channel_from_rays(angles, gains, geom);
}

}  // namespace fasrec
