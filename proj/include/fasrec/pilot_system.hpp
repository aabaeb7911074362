#pragma once

// Port-switching schedules and the stacked noisy pilot observation.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fasrec/channel_model.hpp"
#include "fasrec/errors.hpp"
#include "fasrec/random.hpp"

namespace fasrec {

namespace detail {

inline void check_port_row(std::span<const std::size_t> row, std::size_t num_ports) {
  for (std::size_t m = 0; m < row.size(); ++m) {
    if (row[m] >= num_ports)
      throw BoundsError("port index " + std::to_string(row[m]) + " outside [0, " +
                        std::to_string(num_ports) + ")");
    for (std::size_t k = 0; k < m; ++k)
      if (row[k] == row[m])
        throw ScheduleError("port " + std::to_string(row[m]) +
                            " selected by two antennas in one slot");
  }
}

}  // namespace detail

// P slots, each listing the M distinct ports occupied by the fluid antennas.
// Stored as a flat slot-major index array; the dense N x M switching matrix
// is only materialized by build_switch_matrix.
class SwitchSchedule {
 public:
  SwitchSchedule(std::size_t num_ports, std::size_t num_antennas,
                 std::vector<std::size_t> port_indices)
      : num_ports_(num_ports), num_antennas_(num_antennas), ports_(std::move(port_indices)) {
    if (num_antennas_ == 0) throw ScheduleError("schedule needs at least one antenna");
    if (num_antennas_ > num_ports_)
      throw ScheduleError("more antennas than ports (M > N)");
    if (ports_.size() % num_antennas_ != 0)
      throw ShapeError("port index list is not a whole number of slots");
    for (std::size_t p = 0; p < num_slots(); ++p) detail::check_port_row(slot(p), num_ports_);
  }

  std::size_t num_ports() const { return num_ports_; }
  std::size_t num_antennas() const { return num_antennas_; }
  std::size_t num_slots() const { return ports_.size() / num_antennas_; }
  // Total observations P * M.
  std::size_t num_observations() const { return ports_.size(); }

  std::span<const std::size_t> slot(std::size_t p) const {
    return std::span<const std::size_t>(ports_).subspan(p * num_antennas_, num_antennas_);
  }
  // Port observed by stacked sample k (slot-major).
  std::size_t port_of(std::size_t k) const { return ports_[k]; }
  const std::vector<std::size_t>& port_indices() const { return ports_; }

  friend bool operator==(const SwitchSchedule&, const SwitchSchedule&) = default;

 private:
  std::size_t num_ports_;
  std::size_t num_antennas_;
  std::vector<std::size_t> ports_;
};

// Dense binary N x M selector: entry (n, m) is 1 iff antenna m sits on port n.
inline Eigen::MatrixXi build_switch_matrix(std::span<const std::size_t> row,
                                           std::size_t num_ports) {
  detail::check_port_row(row, num_ports);
  Eigen::MatrixXi s = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(num_ports),
                                            static_cast<Eigen::Index>(row.size()));
  for (std::size_t m = 0; m < row.size(); ++m)
    s(static_cast<Eigen::Index>(row[m]), static_cast<Eigen::Index>(m)) = 1;
  return s;
}

// Slot p takes ports pM .. pM+M-1 (mod N). Requires PM <= N, or PM a
// multiple of N so that wrap-around visits every port equally often.
inline SwitchSchedule sequential_schedule(std::size_t num_ports, std::size_t num_antennas,
                                          std::size_t num_slots) {
  if (num_antennas == 0 || num_antennas > num_ports)
    throw ScheduleError("sequential schedule needs 1 <= M <= N");
  const std::size_t total = num_antennas * num_slots;
  if (total > num_ports && total % num_ports != 0)
    throw ScheduleError("sequential schedule with P*M > N needs P*M to be a multiple of N");
  std::vector<std::size_t> ports(total);
  for (std::size_t k = 0; k < total; ++k) ports[k] = k % num_ports;
  return SwitchSchedule(num_ports, num_antennas, std::move(ports));
}

// Each slot draws M distinct ports uniformly without replacement.
inline SwitchSchedule random_schedule(std::size_t num_ports, std::size_t num_antennas,
                                      std::size_t num_slots, Rng& rng) {
  if (num_antennas == 0 || num_antennas > num_ports)
    throw ScheduleError("random schedule needs 1 <= M <= N");
  std::vector<std::size_t> pool(num_ports);
  std::vector<std::size_t> ports;
  ports.reserve(num_antennas * num_slots);
  for (std::size_t p = 0; p < num_slots; ++p) {
    for (std::size_t n = 0; n < num_ports; ++n) pool[n] = n;
    // Partial Fisher-Yates: the first M positions become the draw.
    for (std::size_t m = 0; m < num_antennas; ++m) {
      const auto j = m + static_cast<std::size_t>(rng.below(num_ports - m));
      std::swap(pool[m], pool[j]);
      ports.push_back(pool[m]);
    }
  }
  return SwitchSchedule(num_ports, num_antennas, std::move(ports));
}

struct PilotObservation {
  ComplexVector samples;  // length P*M, slot-major
  double noise_variance = 0.0;
};

// Noiseless selection S^H h for the stacked schedule.
inline ComplexVector select_ports(const ComplexVector& h, const SwitchSchedule& sched) {
  if (static_cast<std::size_t>(h.size()) != sched.num_ports())
    throw ShapeError("channel length " + std::to_string(h.size()) +
                     " does not match schedule port count " +
                     std::to_string(sched.num_ports()));
  ComplexVector y(static_cast<Eigen::Index>(sched.num_observations()));
  for (std::size_t k = 0; k < sched.num_observations(); ++k)
    y[static_cast<Eigen::Index>(k)] = h[static_cast<Eigen::Index>(sched.port_of(k))];
  return y;
}

// y = S^H h + z with unit pilots and z ~ CN(0, sigma2 I). One complex draw is
// consumed per sample even when sigma2 is zero.
inline PilotObservation observe(const ComplexVector& h, const SwitchSchedule& sched,
                                double sigma2, Rng& rng) {
  if (!(sigma2 >= 0.0)) throw ConfigError("noise_variance", "must be >= 0");
  PilotObservation obs{select_ports(h, sched), sigma2};
  for (Eigen::Index k = 0; k < obs.samples.size(); ++k) obs.samples[k] += rng.complex_normal(sigma2);
  return obs;
}

// Per-port channel power is 1 on average, so sigma^2 = 10^(-snr/10).
inline double noise_variance_for_snr(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

}  // namespace fasrec
