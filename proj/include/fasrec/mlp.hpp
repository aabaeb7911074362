#pragma once

// Two-hidden-layer ReLU perceptron mapping packed pilots to packed channels,
// written out by hand: forward pass, reverse-mode gradients, Adam, an
// early-stopped training loop, prediction, the NMSE metric and multiply
// counters for the cost model.
//
// Batches are stored column-wise: a D x B matrix holds B samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fasrec/binary_io.hpp"
#include "fasrec/dataset.hpp"
#include "fasrec/errors.hpp"
#include "fasrec/random.hpp"

namespace fasrec {

struct MlpParams {
  Eigen::MatrixXd w1;  // H x D_in
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // H x H
  Eigen::VectorXd b2;
  Eigen::MatrixXd w3;  // D_out x H
  Eigen::VectorXd b3;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_width() const { return w1.rows(); }
  Eigen::Index output_dim() const { return w3.rows(); }

  static MlpParams zeros(Eigen::Index d_in, Eigen::Index hidden, Eigen::Index d_out) {
    return {Eigen::MatrixXd::Zero(hidden, d_in), Eigen::VectorXd::Zero(hidden),
            Eigen::MatrixXd::Zero(hidden, hidden), Eigen::VectorXd::Zero(hidden),
            Eigen::MatrixXd::Zero(d_out, hidden), Eigen::VectorXd::Zero(d_out)};
  }

  MlpParams zeros_like() const { return zeros(input_dim(), hidden_width(), output_dim()); }

  // Visits the six tensors in storage order w1, b1, w2, b2, w3, b3.
  template <typename F>
  void for_each(F&& f) {
    f(w1); f(b1); f(w2); f(b2); f(w3); f(b3);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(w1); f(b1); f(w2); f(b2); f(w3); f(b3);
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  bool same_shape(const MlpParams& o) const {
    return input_dim() == o.input_dim() && hidden_width() == o.hidden_width() &&
           output_dim() == o.output_dim() && b1.size() == o.b1.size() &&
           w2.rows() == o.w2.rows() && w2.cols() == o.w2.cols() && b2.size() == o.b2.size() &&
           w3.cols() == o.w3.cols() && b3.size() == o.b3.size();
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.same_shape(b) && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2 &&
           a.w3 == b.w3 && a.b3 == b.b3;
  }
};

// Applies f(a_tensor, b_tensor) to matching tensors of two parameter sets.
template <typename F>
void zip_params(MlpParams& a, const MlpParams& b, F&& f) {
  f(a.w1, b.w1); f(a.b1, b.b1); f(a.w2, b.w2); f(a.b2, b.b2); f(a.w3, b.w3); f(a.b3, b.b3);
}

// Weights uniform on +-sqrt(6 / fan_in), biases zero. Draw order w1, w2, w3,
// each column-major.
inline MlpParams init_params(Eigen::Index d_in, Eigen::Index hidden, Eigen::Index d_out,
                             Rng& rng) {
  if (d_in < 1 || hidden < 1 || d_out < 1)
    throw ShapeError("init_params: dimensions must be positive");
  MlpParams p = MlpParams::zeros(d_in, hidden, d_out);
  auto fill = [&](Eigen::MatrixXd& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w3);
  return p;
}

struct ForwardCache {
  Eigen::MatrixXd input;  // D_in x B
  Eigen::MatrixXd z1, a1;  // H x B pre/post activation
  Eigen::MatrixXd z2, a2;
  Eigen::MatrixXd output;  // D_out x B
};

inline ForwardCache forward_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
  if (x.rows() != p.input_dim())
    throw ShapeError("forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(p.input_dim()));
  ForwardCache c;
  c.input = x;
  c.z1.noalias() = p.w1 * x;
  c.z1.colwise() += p.b1;
  c.a1 = c.z1.cwiseMax(0.0);
  c.z2.noalias() = p.w2 * c.a1;
  c.z2.colwise() += p.b2;
  c.a2 = c.z2.cwiseMax(0.0);
  c.output.noalias() = p.w3 * c.a2;
  c.output.colwise() += p.b3;
  return c;
}

struct ForwardResult {
  Eigen::VectorXd output;
  ForwardCache cache;
};

// y = W3 relu(W2 relu(W1 x + b1) + b2) + b3.
inline ForwardResult forward(const MlpParams& p, const Eigen::VectorXd& x) {
  ForwardCache c = forward_batch(p, x);
  Eigen::VectorXd y = c.output.col(0);
  return {std::move(y), std::move(c)};
}

// Plain triple-loop forward pass that tallies every real multiplication.
inline Eigen::VectorXd forward_counted(const MlpParams& p, const Eigen::VectorXd& x,
                                       std::uint64_t& multiplies) {
  if (x.size() != p.input_dim()) throw ShapeError("forward_counted: input width mismatch");
  auto layer = [&](const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const Eigen::VectorXd& in,
                   bool relu) {
    Eigen::VectorXd out(w.rows());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double acc = b[i];
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        acc += w(i, j) * in[j];
        ++multiplies;
      }
      out[i] = relu ? std::max(acc, 0.0) : acc;
    }
    return out;
  };
  return layer(p.w3, p.b3, layer(p.w2, p.b2, layer(p.w1, p.b1, x, true), true), false);
}

struct LossGrad {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // d loss / d pred
};

// Mean of squared differences over every entry.
inline LossGrad mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("mse_loss: prediction and target shapes differ");
  const auto count = static_cast<double>(pred.size());
  if (count == 0) return {0.0, Eigen::MatrixXd::Zero(pred.rows(), pred.cols())};
  Eigen::MatrixXd diff = pred - target;
  const double loss = diff.squaredNorm() / count;
  return {loss, (2.0 / count) * diff};
}

// Reverse-mode gradients of a scalar loss given d loss / d output. The ReLU
// derivative at exactly zero is taken as zero.
inline MlpParams backward(const MlpParams& p, const ForwardCache& c, const Eigen::MatrixXd& d_out) {
  const Eigen::Index batch = c.input.cols();
  if (c.input.rows() != p.input_dim() || c.z1.rows() != p.hidden_width() ||
      c.output.rows() != p.output_dim() || c.z1.cols() != batch || c.output.cols() != batch)
    throw ShapeError("backward: cache does not come from a forward pass of these parameters");
  if (d_out.rows() != p.output_dim() || d_out.cols() != batch)
    throw ShapeError("backward: upstream gradient shape does not match cached output");

  MlpParams g;
  g.w3.noalias() = d_out * c.a2.transpose();
  g.b3 = d_out.rowwise().sum();
  Eigen::MatrixXd d_z2 = p.w3.transpose() * d_out;
  d_z2.array() *= (c.z2.array() > 0.0).cast<double>();
  g.w2.noalias() = d_z2 * c.a1.transpose();
  g.b2 = d_z2.rowwise().sum();
  Eigen::MatrixXd d_z1 = p.w2.transpose() * d_z2;
  d_z1.array() *= (c.z1.array() > 0.0).cast<double>();
  g.w1.noalias() = d_z1 * c.input.transpose();
  g.b1 = d_z1.rowwise().sum();
  return g;
}

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  static AdamState for_params(const MlpParams& p, double lr) {
    AdamState s;
    s.first_moment = p.zeros_like();
    s.second_moment = p.zeros_like();
    s.learning_rate = lr;
    return s;
  }
};

// Bias-corrected Adam update.
inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment))
    throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
  if (!grads.all_finite()) throw Error("adam_step: non-finite gradient");

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, lr = state.learning_rate, eps = state.eps_hat;

  zip_params(state.first_moment, grads, [&](auto& m, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
  });
  zip_params(state.second_moment, grads, [&](auto& v, const auto& g) {
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
  });

  auto update = [&](auto& theta, const auto& m, const auto& v) {
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  update(params.w1, state.first_moment.w1, state.second_moment.w1);
  update(params.b1, state.first_moment.b1, state.second_moment.b1);
  update(params.w2, state.first_moment.w2, state.second_moment.w2);
  update(params.b2, state.first_moment.b2, state.second_moment.b2);
  update(params.w3, state.first_moment.w3, state.second_moment.w3);
  update(params.b3, state.first_moment.b3, state.second_moment.b3);
}

// ||h_hat - h||^2 / ||h||^2.
template <typename A, typename B>
double nmse(const Eigen::MatrixBase<A>& h_hat, const Eigen::MatrixBase<B>& h) {
  if (h_hat.size() != h.size()) throw ShapeError("nmse: length mismatch");
  const double ref = h.squaredNorm();
  if (!(ref > 0.0)) throw Error("nmse: reference channel has zero norm");
  return (h_hat - h).squaredNorm() / ref;
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

template <typename A, typename B>
double nmse_db(const Eigen::MatrixBase<A>& h_hat, const Eigen::MatrixBase<B>& h) {
  return to_db(nmse(h_hat, h));
}

// Ensemble NMSE over many channels: total error energy over total channel
// energy.
class NmseAccumulator {
 public:
  template <typename A, typename B>
  void add(const Eigen::MatrixBase<A>& h_hat, const Eigen::MatrixBase<B>& h) {
    if (h_hat.size() != h.size()) throw ShapeError("nmse: length mismatch");
    error_ += (h_hat - h).squaredNorm();
    reference_ += h.squaredNorm();
    ++count_;
  }
  double value() const {
    if (!(reference_ > 0.0)) throw Error("nmse: reference channels have zero energy");
    return error_ / reference_;
  }
  double value_db() const { return to_db(value()); }
  std::size_t count() const { return count_; }

 private:
  double error_ = 0.0;
  double reference_ = 0.0;
  std::size_t count_ = 0;
};

// Leading-order real multiplies of one forward pass: D_in H + H^2 + H D_out.
constexpr std::uint64_t count_forward_multiplies(std::uint64_t d_in, std::uint64_t hidden,
                                                 std::uint64_t d_out) {
  return d_in * hidden + hidden * hidden + hidden * d_out;
}

// Whole training run: 3 E N_tr H (D_in + H + D_out).
constexpr std::uint64_t count_training_cost(std::uint64_t epochs, std::uint64_t n_train,
                                            std::uint64_t d_in, std::uint64_t hidden,
                                            std::uint64_t d_out) {
  return 3 * epochs * n_train * hidden * (d_in + hidden + d_out);
}

// Trained network plus the training-set statistics needed at inference.
struct EstimatorModel {
  MlpParams params;
  Normalizer feature_norm;
  Normalizer target_norm;

  // Rows are packed pilot vectors; returns packed channel rows.
  template <typename Derived>
  Eigen::MatrixXd predict_packed(const Eigen::MatrixBase<Derived>& features) const {
    const Eigen::MatrixXd x = feature_norm.apply(features).transpose();
    const ForwardCache c = forward_batch(params, x);
    return target_norm.invert(c.output.transpose());
  }

  // pack -> standardize -> forward -> de-standardize -> unpack.
  ComplexVector predict(const ComplexVector& pilots) const {
    if (2 * pilots.size() != params.input_dim())
      throw ShapeError("predict: expected " + std::to_string(params.input_dim() / 2) +
                       " pilot samples, got " + std::to_string(pilots.size()));
    const Eigen::RowVectorXd row = pack_complex(pilots).transpose();
    const Eigen::MatrixXd out = predict_packed(row);
    return unpack_complex(out.row(0).transpose());
  }

  friend bool operator==(const EstimatorModel&, const EstimatorModel&) = default;
};

struct TrainOptions {
  Eigen::Index hidden_width = 512;
  double learning_rate = 1e-4;
  Eigen::Index batch_size = 256;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
};

struct TrainReport {
  std::vector<double> train_loss;      // per epoch, MSE on standardized targets
  std::vector<double> val_nmse;        // per epoch, linear, channel domain
  std::vector<double> val_nmse_db;
  std::size_t best_epoch = 0;          // 0-based index into the vectors above
  bool stopped_early = false;
  std::size_t epochs_run = 0;

  double best_val_nmse() const { return val_nmse.at(best_epoch); }

  // "epoch,train_loss,val_nmse_db" with 1-based epochs, 6 significant digits.
  std::string to_csv() const {
    std::string out = "epoch,train_loss,val_nmse_db\n";
    char line[96];
    for (std::size_t e = 0; e < epochs_run; ++e) {
      std::snprintf(line, sizeof line, "%zu,%.6g,%.6g\n", e + 1, train_loss[e], val_nmse_db[e]);
      out += line;
    }
    return out;
  }

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct TrainResult {
  EstimatorModel model;
  TrainReport report;
};

// Ensemble NMSE of a model on a dataset, in the channel domain.
inline double evaluate_nmse(const EstimatorModel& model, const Dataset& ds,
                            Eigen::Index chunk = 1024) {
  NmseAccumulator acc;
  for (Eigen::Index start = 0; start < ds.size(); start += chunk) {
    const Eigen::Index rows = std::min(chunk, ds.size() - start);
    const Eigen::MatrixXd pred = model.predict_packed(ds.features.middleRows(start, rows));
    const Eigen::MatrixXd truth = ds.targets.middleRows(start, rows).cast<double>();
    for (Eigen::Index i = 0; i < rows; ++i) acc.add(pred.row(i), truth.row(i));
  }
  return acc.value();
}

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double val_nmse_db)>;

// Mini-batch Adam on standardized data, reshuffling every epoch and keeping
// the final partial batch. After each epoch the validation NMSE is measured
// on de-standardized outputs; training stops once it has failed to improve
// for `patience` consecutive epochs and the best epoch's parameters are
// returned.
inline TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const TrainOptions& opt,
                         const EpochCallback& on_epoch = {}) {
  if (train_ds.size() < 2 || val_ds.size() < 1)
    throw ShapeError("train: need at least 2 training rows and 1 validation row");
  if (train_ds.features.cols() != val_ds.features.cols() ||
      train_ds.targets.cols() != val_ds.targets.cols())
    throw ShapeError("train: training and validation widths differ");
  if (opt.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(opt.learning_rate >= 0.0)) throw ConfigError("learning_rate", "must be >= 0");

  TrainResult result;
  EstimatorModel& model = result.model;
  TrainReport& report = result.report;
  model.feature_norm = fit_normalizer(train_ds.features);
  model.target_norm = fit_normalizer(train_ds.targets);
  const Eigen::MatrixXd x = model.feature_norm.apply(train_ds.features).transpose();
  const Eigen::MatrixXd y = model.target_norm.apply(train_ds.targets).transpose();

  Rng init_rng(opt.init_seed);
  model.params = init_params(x.rows(), opt.hidden_width, y.rows(), init_rng);
  MlpParams best = model.params;
  AdamState adam = AdamState::for_params(model.params, opt.learning_rate);

  Rng shuffle_rng(opt.shuffle_seed);
  const Eigen::Index n = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  double best_nmse = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<Eigen::Index>(order));
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += opt.batch_size) {
      const Eigen::Index b = std::min(opt.batch_size, n - start);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + b);
      const ForwardCache cache = forward_batch(model.params, x(Eigen::all, idx));
      const LossGrad lg = mse_loss(cache.output, y(Eigen::all, idx));
      if (!std::isfinite(lg.loss))
        throw DivergenceError("training diverged (non-finite loss) in epoch " +
                                  std::to_string(epoch + 1),
                              epoch);
      loss_sum += lg.loss * static_cast<double>(b);
      adam_step(model.params, backward(model.params, cache, lg.grad), adam);
    }

    const double val = evaluate_nmse(model, val_ds);
    if (!std::isfinite(val))
      throw DivergenceError("validation NMSE is non-finite in epoch " + std::to_string(epoch + 1),
                            epoch);
    report.train_loss.push_back(loss_sum / static_cast<double>(n));
    report.val_nmse.push_back(val);
    report.val_nmse_db.push_back(to_db(val));
    report.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(epoch + 1, report.train_loss.back(), report.val_nmse_db.back());

    if (val < best_nmse) {
      best_nmse = val;
      best = model.params;
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= opt.patience) {
      report.stopped_early = true;
      break;
    }
  }
  model.params = std::move(best);
  return result;
}

// FASM layout, all little-endian:
//   "FASM" | u16 version | u64 D_in, H, D_out
//   | feature normalizer: f64 epsilon, D_in means, D_in stddevs
//   | target normalizer:  f64 epsilon, D_out means, D_out stddevs
//   | f64 weights w1, b1, w2, b2, w3, b3 (matrices row-major)
//   | 32-byte SHA-256 of everything before it
inline constexpr char kModelMagic[4] = {'F', 'A', 'S', 'M'};
inline constexpr std::uint16_t kModelVersion = 1;

inline std::vector<std::uint8_t> encode_model(const EstimatorModel& m) {
  ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.u16(kModelVersion);
  w.u64(static_cast<std::uint64_t>(m.params.input_dim()));
  w.u64(static_cast<std::uint64_t>(m.params.hidden_width()));
  w.u64(static_cast<std::uint64_t>(m.params.output_dim()));
  for (const Normalizer* nrm : {&m.feature_norm, &m.target_norm}) {
    w.f64(nrm->epsilon);
    for (double v : nrm->mean) w.f64(v);
    for (double v : nrm->stddev) w.f64(v);
  }
  m.params.for_each([&](const auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) w.f64(t(i, j));
  });
  const Digest d = sha256(w.buffer().data(), w.buffer().size());
  w.bytes(d.data(), d.size());
  return std::move(w.buffer());
}

inline EstimatorModel decode_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kModelMagic)) throw FormatError("not a FASM model file");
  if (const auto v = r.u16(); v != kModelVersion)
    throw FormatError("unsupported FASM version " + std::to_string(v));
  const auto d_in = static_cast<Eigen::Index>(r.u64());
  const auto hidden = static_cast<Eigen::Index>(r.u64());
  const auto d_out = static_cast<Eigen::Index>(r.u64());
  if (d_in < 1 || hidden < 1 || d_out < 1) throw FormatError("FASM: invalid dimensions");

  const auto body_size = static_cast<std::uint64_t>(
      8 * (2 + 2 * d_in + 2 * d_out + hidden * d_in + hidden + hidden * hidden + hidden +
           d_out * hidden + d_out));
  Digest stored{};
  if (bytes.size() >= 32) std::copy(bytes.end() - 32, bytes.end(), stored.begin());
  if (bytes.size() != 4 + 2 + 24 + body_size + 32 ||
      sha256(bytes.data(), bytes.size() - 32) != stored)
    throw ChecksumError("FASM checksum mismatch (corrupt or truncated file)");

  EstimatorModel m;
  for (auto [nrm, width] : {std::pair{&m.feature_norm, d_in}, std::pair{&m.target_norm, d_out}}) {
    nrm->epsilon = r.f64();
    nrm->mean.resize(width);
    nrm->stddev.resize(width);
    for (auto& v : nrm->mean) v = r.f64();
    for (auto& v : nrm->stddev) v = r.f64();
  }
  m.params = MlpParams::zeros(d_in, hidden, d_out);
  m.params.for_each([&](auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = r.f64();
  });
  return m;
}

inline void save_model(const EstimatorModel& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(m));
}

inline EstimatorModel load_model(const std::filesystem::path& path) {
  return decode_model(read_file_bytes(path));
}

}  // namespace fasrec
