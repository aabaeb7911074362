#pragma once

// Supervised (pilot, channel) datasets: real packing, generation, splitting,
// standard-score normalization and the FASD binary file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fasrec/binary_io.hpp"
#include "fasrec/channel_model.hpp"
#include "fasrec/errors.hpp"
#include "fasrec/pilot_system.hpp"
#include "fasrec/random.hpp"

namespace fasrec {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// [Re(v); Im(v)].
inline Eigen::VectorXd pack_complex(const ComplexVector& v) {
  Eigen::VectorXd out(2 * v.size());
  out.head(v.size()) = v.real();
  out.tail(v.size()) = v.imag();
  return out;
}

template <typename Derived>
ComplexVector unpack_complex(const Eigen::MatrixBase<Derived>& r) {
  if (r.size() % 2 != 0)
    throw ShapeError("unpack_complex: odd length " + std::to_string(r.size()));
  const Eigen::Index k = r.size() / 2;
  ComplexVector v(k);
  for (Eigen::Index i = 0; i < k; ++i)
    v[i] = {static_cast<double>(r(i)), static_cast<double>(r(k + i))};
  return v;
}

struct Dataset {
  std::uint64_t num_ports = 0;
  std::uint64_t num_antennas = 0;
  std::uint64_t num_slots = 0;
  RowMatrixF features;  // n x 2PM
  RowMatrixF targets;   // n x 2N
  Digest config_fingerprint{};

  Eigen::Index size() const { return features.rows(); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.num_ports == b.num_ports && a.num_antennas == b.num_antennas &&
           a.num_slots == b.num_slots && a.config_fingerprint == b.config_fingerprint &&
           a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.targets.rows() == b.targets.rows() && a.targets.cols() == b.targets.cols() &&
           std::equal(a.features.data(), a.features.data() + a.features.size(),
                      b.features.data()) &&
           std::equal(a.targets.data(), a.targets.data() + a.targets.size(), b.targets.data());
  }
};

// Everything needed to simulate one dataset.
struct GenerationSpec {
  ArrayGeometry geometry;
  ScatteringConfig scattering;
  SwitchSchedule schedule;
  // One entry: fixed noise level. Several: each sample picks one uniformly.
  std::vector<double> noise_variances;
  Digest fingerprint{};
};

namespace detail {

inline void generate_rows(const GenerationSpec& spec, std::uint64_t seed, Eigen::Index begin,
                          Eigen::Index end, Dataset& ds) {
  for (Eigen::Index i = begin; i < end; ++i) {
    Rng rng(derive_seed(seed, 0, static_cast<std::uint64_t>(i)));
    const ComplexVector h = draw_channel(spec.scattering, spec.geometry, rng);
    double sigma2 = spec.noise_variances.front();
    if (spec.noise_variances.size() > 1)
      sigma2 = spec.noise_variances[rng.below(spec.noise_variances.size())];
    const PilotObservation y = observe(h, spec.schedule, sigma2, rng);
    ds.features.row(i) = pack_complex(y.samples).cast<float>().transpose();
    ds.targets.row(i) = pack_complex(h).cast<float>().transpose();
  }
}

}  // namespace detail

// Sample i uses its own stream derive_seed(seed, 0, i): channel draw first,
// then (mixed mode only) the noise-level pick, then the observation noise.
// The result does not depend on `threads`.
inline Dataset generate_dataset(const GenerationSpec& spec, Eigen::Index n_samples,
                                std::uint64_t seed, unsigned threads = 1) {
  spec.scattering.validate();
  if (spec.noise_variances.empty())
    throw ConfigError("snr_db_list", "at least one noise level is required");
  if (static_cast<std::size_t>(spec.geometry.num_ports()) != spec.schedule.num_ports())
    throw ShapeError("schedule port count differs from array geometry");
  if (n_samples < 0) throw ConfigError("n_samples", "must be >= 0");

  Dataset ds;
  ds.num_ports = spec.schedule.num_ports();
  ds.num_antennas = spec.schedule.num_antennas();
  ds.num_slots = spec.schedule.num_slots();
  ds.features.resize(n_samples, static_cast<Eigen::Index>(2 * spec.schedule.num_observations()));
  ds.targets.resize(n_samples, 2 * spec.geometry.num_ports());
  ds.config_fingerprint = spec.fingerprint;

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<Eigen::Index>(n_samples, 1))));
  if (threads == 1) {
    detail::generate_rows(spec, seed, 0, n_samples, ds);
    return ds;
  }
  {
    std::vector<std::jthread> workers;
    const Eigen::Index chunk = (n_samples + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const Eigen::Index begin = std::min<Eigen::Index>(t * chunk, n_samples);
      const Eigen::Index end = std::min<Eigen::Index>(begin + chunk, n_samples);
      workers.emplace_back([&, begin, end] { detail::generate_rows(spec, seed, begin, end, ds); });
    }
  }  // joins
  return ds;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.num_ports = ds.num_ports;
  out.num_antennas = ds.num_antennas;
  out.num_slots = ds.num_slots;
  out.config_fingerprint = ds.config_fingerprint;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), ds.targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
    out.targets.row(static_cast<Eigen::Index>(i)) = ds.targets.row(rows[i]);
  }
  return out;
}

struct DatasetSplit {
  Dataset train;
  Dataset validation;
};

// Random permutation, then the first round(rho * n) rows become validation.
inline DatasetSplit split(const Dataset& ds, double rho, Rng& rng) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho", "must lie in (0, 1)");
  const Eigen::Index n = ds.size();
  const auto n_val = static_cast<Eigen::Index>(std::llround(rho * static_cast<double>(n)));
  if (n_val < 1 || n - n_val < 1)
    throw ShapeError("split of " + std::to_string(n) + " rows with rho=" + std::to_string(rho) +
                     " leaves an empty side");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  rng.shuffle(std::span<Eigen::Index>(perm));
  std::vector<Eigen::Index> val(perm.begin(), perm.begin() + n_val);
  std::vector<Eigen::Index> train(perm.begin() + n_val, perm.end());
  return {take_rows(ds, train), take_rows(ds, val)};
}

// Per-dimension standard score. Zero-variance dimensions divide by epsilon.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  double epsilon = 1e-8;

  Eigen::Index width() const { return mean.size(); }

  Eigen::VectorXd scale() const { return stddev.cwiseMax(epsilon); }

  // Rows are samples.
  template <typename Derived>
  Eigen::MatrixXd apply(const Eigen::MatrixBase<Derived>& x) const {
    check(x.cols());
    const Eigen::RowVectorXd inv = scale().cwiseInverse().transpose();
    Eigen::MatrixXd out = x.template cast<double>();
    out.rowwise() -= mean.transpose();
    out.array().rowwise() *= inv.array();
    return out;
  }

  template <typename Derived>
  Eigen::MatrixXd invert(const Eigen::MatrixBase<Derived>& z) const {
    check(z.cols());
    Eigen::MatrixXd out = z.template cast<double>();
    out.array().rowwise() *= scale().transpose().array();
    out.rowwise() += mean.transpose();
    return out;
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;

 private:
  void check(Eigen::Index cols) const {
    if (cols != width())
      throw ShapeError("normalizer fitted on width " + std::to_string(width()) +
                       ", given " + std::to_string(cols));
  }
};

// Mean and population standard deviation per column, two-pass in double.
template <typename Derived>
Normalizer fit_normalizer(const Eigen::MatrixBase<Derived>& train, double epsilon = 1e-8) {
  if (train.rows() < 2) throw ShapeError("fit_normalizer needs at least 2 rows");
  const Eigen::MatrixXd x = train.template cast<double>();
  Normalizer nrm;
  nrm.epsilon = epsilon;
  nrm.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - nrm.mean.transpose();
  nrm.stddev = (centred.array().square().colwise().sum() / static_cast<double>(x.rows()))
                   .sqrt()
                   .transpose();
  return nrm;
}

// FASD layout, all little-endian:
//   "FASD" | u16 version | u64 N, M, P, n_samples, feature_width, target_width
//   | 32-byte config fingerprint | 32-byte SHA-256 of the payload
//   | payload: features then targets, f32, row-major
inline constexpr char kDatasetMagic[4] = {'F', 'A', 'S', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter payload;
  payload.buffer().reserve(4 * static_cast<std::size_t>(ds.features.size() + ds.targets.size()));
  for (Eigen::Index i = 0; i < ds.features.size(); ++i) payload.f32(ds.features.data()[i]);
  for (Eigen::Index i = 0; i < ds.targets.size(); ++i) payload.f32(ds.targets.data()[i]);
  const Digest checksum = sha256(payload.buffer().data(), payload.buffer().size());

  ByteWriter w;
  w.bytes(kDatasetMagic, 4);
  w.u16(kDatasetVersion);
  w.u64(ds.num_ports);
  w.u64(ds.num_antennas);
  w.u64(ds.num_slots);
  w.u64(static_cast<std::uint64_t>(ds.features.rows()));
  w.u64(static_cast<std::uint64_t>(ds.features.cols()));
  w.u64(static_cast<std::uint64_t>(ds.targets.cols()));
  w.bytes(ds.config_fingerprint.data(), ds.config_fingerprint.size());
  w.bytes(checksum.data(), checksum.size());
  w.bytes(payload.buffer().data(), payload.buffer().size());
  return std::move(w.buffer());
}

inline Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kDatasetMagic)) throw FormatError("not a FASD dataset file");
  if (const auto v = r.u16(); v != kDatasetVersion)
    throw FormatError("unsupported FASD version " + std::to_string(v));
  Dataset ds;
  ds.num_ports = r.u64();
  ds.num_antennas = r.u64();
  ds.num_slots = r.u64();
  const std::uint64_t n = r.u64();
  const std::uint64_t fw = r.u64();
  const std::uint64_t tw = r.u64();
  r.bytes(ds.config_fingerprint.data(), ds.config_fingerprint.size());
  Digest stored{};
  r.bytes(stored.data(), stored.size());
  if (fw != 2 * ds.num_antennas * ds.num_slots || tw != 2 * ds.num_ports)
    throw FormatError("FASD widths inconsistent with N, M, P");

  const std::uint64_t expected = 4 * n * (fw + tw);
  const std::size_t body = r.remaining();
  if (sha256(bytes.data() + r.position(), body) != stored || body != expected)
    throw ChecksumError("FASD payload checksum mismatch (corrupt or truncated file)");

  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(fw));
  ds.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(tw));
  for (Eigen::Index i = 0; i < ds.features.size(); ++i) ds.features.data()[i] = r.f32();
  for (Eigen::Index i = 0; i < ds.targets.size(); ++i) ds.targets.data()[i] = r.f32();
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file_bytes(path));
}

}  // namespace fasrec
