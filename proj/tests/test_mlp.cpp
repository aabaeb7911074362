#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "fasrec/mlp.hpp"
#include "oracles.hpp"

using namespace fasrec;
namespace fs = std::filesystem;

namespace {

MlpParams random_net(Eigen::Index d_in, Eigen::Index h, Eigen::Index d_out, Rng& rng) {
  MlpParams p = MlpParams::zeros(d_in, h, d_out);
  p.for_each([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  });
  return p;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (auto& v : m.reshaped()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Samples of one fixed noisy linear map, small enough for quick training.
Dataset linear_dataset(Eigen::Index n, std::uint64_t seed) {
  Rng map_rng(99);
  const Eigen::MatrixXd a = random_matrix(6, 4, map_rng);
  Rng rng(seed);
  Dataset ds;
  ds.num_ports = 3;
  ds.num_antennas = 1;
  ds.num_slots = 2;
  ds.features.resize(n, 4);
  ds.targets.resize(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x(4);
    for (auto& v : x) v = rng.normal();
    ds.features.row(i) = x.cast<float>().transpose();
    ds.targets.row(i) = (a * x).cast<float>().transpose();
    for (Eigen::Index j = 0; j < 6; ++j) ds.targets(i, j) += static_cast<float>(0.05 * rng.normal());
  }
  return ds;
}

}  // namespace

TEST(Init, BiasesZeroWeightsBounded) {
  Rng rng(1);
  const MlpParams p = init_params(12, 9, 5, rng);
  EXPECT_TRUE(p.b1.isZero(0.0) && p.b2.isZero(0.0) && p.b3.isZero(0.0));
  EXPECT_LE(p.w1.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 12));
  EXPECT_LE(p.w2.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 9));
  EXPECT_LE(p.w3.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 9));
  EXPECT_GT(p.w1.cwiseAbs().maxCoeff(), 0.5 * std::sqrt(6.0 / 12));
  Rng again(1);
  EXPECT_EQ(init_params(12, 9, 5, again), p);
  EXPECT_THROW(init_params(0, 3, 3, rng), ShapeError);
}

TEST(Forward, ZeroNetworkOutputsZero) {
  const MlpParams p = MlpParams::zeros(3, 4, 2);
  EXPECT_TRUE(forward(p, Eigen::Vector3d(1, -5, 2)).output.isZero(0.0));
}

TEST(Forward, HandTracedScalarNet) {
  MlpParams p = MlpParams::zeros(1, 1, 1);
  p.w1(0, 0) = p.w2(0, 0) = p.w3(0, 0) = 1.0;
  EXPECT_EQ(forward(p, Eigen::VectorXd::Constant(1, -2.0)).output[0], 0.0);
  EXPECT_EQ(forward(p, Eigen::VectorXd::Constant(1, 3.0)).output[0], 3.0);
}

TEST(Forward, BatchedMatchesPerSampleReference) {
  Rng rng(2);
  const MlpParams p = random_net(6, 10, 4, rng);
  const Eigen::MatrixXd x = random_matrix(6, 17, rng);
  const ForwardCache c = forward_batch(p, x);
  for (Eigen::Index i = 0; i < 17; ++i)
    EXPECT_LT((c.output.col(i) - oracle::reference_forward(p, x.col(i))).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(forward_batch(p, Eigen::MatrixXd::Zero(5, 2)), ShapeError);
}

TEST(Forward, AffineInsideAnActivationRegion) {
  Rng rng(3);
  const MlpParams p = random_net(5, 8, 3, rng);
  const Eigen::VectorXd x = random_matrix(5, 1, rng);
  const Eigen::VectorXd dir = random_matrix(5, 1, rng);
  const double t = 1e-6;
  auto pattern = [&](const Eigen::VectorXd& in) {
    const ForwardCache c = forward_batch(p, in);
    return std::make_pair(Eigen::ArrayXi((c.z1.array() > 0).cast<int>()),
                          Eigen::ArrayXi((c.z2.array() > 0).cast<int>()));
  };
  const auto p0 = pattern(x), p2 = pattern(x + 2 * t * dir);
  ASSERT_TRUE((p0.first == p2.first).all() && (p0.second == p2.second).all());
  const Eigen::VectorXd f0 = forward(p, x).output;
  const Eigen::VectorXd f1 = forward(p, x + t * dir).output;
  const Eigen::VectorXd f2 = forward(p, x + 2 * t * dir).output;
  EXPECT_LT((f2 - 2 * f1 + f0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MseLoss, ValuesAndGradient) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(2, 1);
  EXPECT_EQ(mse_loss(a, a).loss, 0.0);
  EXPECT_EQ(mse_loss(a, Eigen::MatrixXd::Zero(2, 1)).loss, 1.0);
  EXPECT_THROW(mse_loss(a, Eigen::MatrixXd::Zero(1, 2)), ShapeError);

  Rng rng(4);
  Eigen::MatrixXd pred = random_matrix(3, 4, rng);
  const Eigen::MatrixXd target = random_matrix(3, 4, rng);
  const Eigen::MatrixXd grad = mse_loss(pred, target).grad;
  const double step = 1e-6;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double saved = pred.data()[i];
    pred.data()[i] = saved + step;
    const double up = mse_loss(pred, target).loss;
    pred.data()[i] = saved - step;
    const double down = mse_loss(pred, target).loss;
    pred.data()[i] = saved;
    const double fd = (up - down) / (2 * step);
    EXPECT_NEAR(grad.data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  const MlpParams p = random_net(4, 6, 2, rng);
  const ForwardCache c = forward_batch(p, random_matrix(4, 3, rng));
  const MlpParams g = backward(p, c, Eigen::MatrixXd::Zero(2, 3));
  g.for_each([](const auto& t) { EXPECT_TRUE(t.isZero(0.0)); });
}

TEST(Backward, OutputBiasGradientIsUpstreamSum) {
  Rng rng(6);
  const MlpParams p = random_net(4, 6, 2, rng);
  const ForwardCache c = forward_batch(p, random_matrix(4, 5, rng));
  const Eigen::MatrixXd up = random_matrix(2, 5, rng);
  EXPECT_LT((backward(p, c, up).b3 - up.rowwise().sum()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, MatchesCentralDifferences) {
  Rng rng(7);
  for (int net = 0; net < 10; ++net) {
    const MlpParams p = random_net(5, 7, 3, rng);
    Eigen::MatrixXd x, t;
    do {
      x = random_matrix(5, 2, rng);
    } while (oracle::kink_margin(p, x) < 1e-2);
    t = random_matrix(3, 2, rng);
    const ForwardCache c = forward_batch(p, x);
    const MlpParams analytic = backward(p, c, mse_loss(c.output, t).grad);
    const MlpParams numeric = oracle::finite_difference_gradient(
        p, [&](const MlpParams& q) { return oracle::reference_mse(q, x, t); });
    EXPECT_EQ(oracle::gradient_mismatches(analytic, numeric, 1e-4, 1e-6), 0) << "net " << net;
  }
}

TEST(Backward, RejectsMismatchedCache) {
  Rng rng(8);
  const MlpParams p = random_net(4, 6, 2, rng);
  const MlpParams other = random_net(4, 5, 2, rng);
  const ForwardCache c = forward_batch(other, random_matrix(4, 3, rng));
  EXPECT_THROW(backward(p, c, Eigen::MatrixXd::Zero(2, 3)), ShapeError);
  const ForwardCache own = forward_batch(p, random_matrix(4, 3, rng));
  EXPECT_THROW(backward(p, own, Eigen::MatrixXd::Zero(2, 4)), ShapeError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Rng rng(9);
  MlpParams p = random_net(3, 4, 2, rng);
  const MlpParams start = p;
  MlpParams g = random_net(3, 4, 2, rng);
  g.w1(0, 0) = 1e-3;
  g.w1(1, 0) = -250.0;
  AdamState s = AdamState::for_params(p, 1e-4);
  adam_step(p, g, s);
  EXPECT_EQ(s.step_count, 1u);
  auto check = [&](const auto& after, const auto& before, const auto& grad) {
    for (Eigen::Index i = 0; i < after.size(); ++i) {
      if (std::abs(grad.data()[i]) < 1e-3) continue;
      const double delta = std::abs(after.data()[i] - before.data()[i]);
      EXPECT_GE(delta, 0.99 * 1e-4);
      EXPECT_LE(delta, 1e-4 * (1 + 1e-12));
      EXPECT_EQ(std::signbit(after.data()[i] - before.data()[i]), !std::signbit(grad.data()[i]));
    }
  };
  check(p.w1, start.w1, g.w1);
  check(p.b2, start.b2, g.b2);
  check(p.w3, start.w3, g.w3);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(10);
  MlpParams p = random_net(3, 4, 2, rng);
  const MlpParams start = p;
  AdamState s = AdamState::for_params(p, 1e-2);
  for (int i = 0; i < 20; ++i) adam_step(p, p.zeros_like(), s);
  EXPECT_EQ(p, start);
  EXPECT_EQ(s.step_count, 20u);
}

TEST(Adam, TwoScalarStepsMatchTextbookUpdate) {
  MlpParams p = MlpParams::zeros(1, 1, 1);
  p.w1(0, 0) = 0.5;
  AdamState s = AdamState::for_params(p, 1e-3);
  oracle::ScalarAdam ref{1e-3};
  double theta = 0.5;
  for (double g : {1.0, -1.0}) {
    MlpParams grad = p.zeros_like();
    grad.w1(0, 0) = g;
    adam_step(p, grad, s);
    theta = ref.step(theta, g);
    EXPECT_NEAR(p.w1(0, 0), theta, 1e-10);
  }
  EXPECT_GT(s.second_moment.w1(0, 0), 0.0);
}

TEST(Adam, RejectsNonFiniteGradient) {
  MlpParams p = MlpParams::zeros(1, 1, 1);
  AdamState s = AdamState::for_params(p, 1e-3);
  MlpParams g = p.zeros_like();
  g.b2[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(p, g, s), Error);
}

TEST(Nmse, BasicValues) {
  Eigen::VectorXcd h(3);
  h << std::complex<double>(1, 2), std::complex<double>(-0.5, 0), std::complex<double>(0, 3);
  EXPECT_EQ(nmse(h, h), 0.0);
  EXPECT_EQ(nmse(Eigen::VectorXcd::Zero(3), h), 1.0);
  EXPECT_EQ(nmse_db(Eigen::VectorXcd::Zero(3), h), 0.0);
  EXPECT_DOUBLE_EQ(nmse(Eigen::VectorXcd(2.0 * h), h), 1.0);
  EXPECT_THROW(nmse(h, Eigen::VectorXcd::Zero(3)), Error);
  EXPECT_THROW(nmse(Eigen::VectorXcd::Zero(2), h), ShapeError);
}

TEST(Nmse, ScaleErrorIsSquaredDistanceToOne) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXcd h(8);
    for (auto& v : h) v = rng.complex_normal();
    const std::complex<double> c = rng.complex_normal(4.0);
    EXPECT_NEAR(nmse(Eigen::VectorXcd(c * h), h), std::norm(c - 1.0), 1e-12);
  }
}

TEST(CostModel, ForwardMultiplyCounts) {
  EXPECT_EQ(count_forward_multiplies(512, 512, 512), 786432u);
  EXPECT_EQ(count_forward_multiplies(512, 0, 512), 0u);
  EXPECT_EQ(count_training_cost(2, 10, 5, 7, 3), 3u * 2 * 10 * 7 * 15);

  Rng rng(12);
  const MlpParams p = random_net(5, 7, 3, rng);
  const Eigen::VectorXd x = random_matrix(5, 1, rng);
  std::uint64_t counted = 0;
  const Eigen::VectorXd y = forward_counted(p, x, counted);
  EXPECT_EQ(counted, count_forward_multiplies(5, 7, 3));
  EXPECT_LT((y - forward(p, x).output).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Train, FrozenValidationStopsAfterPatience) {
  const Dataset tr = linear_dataset(64, 1), val = linear_dataset(16, 2);
  TrainOptions o;
  o.hidden_width = 8;
  o.learning_rate = 0.0;
  o.batch_size = 10;
  o.max_epochs = 50;
  o.patience = 4;
  const TrainResult r = train(tr, val, o);
  EXPECT_EQ(r.report.epochs_run, o.patience + 1);
  EXPECT_TRUE(r.report.stopped_early);
  EXPECT_EQ(r.report.best_epoch, 0u);
}

TEST(Train, LearnsAndReturnsBestEpoch) {
  const Dataset tr = linear_dataset(400, 3), val = linear_dataset(60, 4);
  TrainOptions o;
  o.hidden_width = 32;
  o.learning_rate = 3e-3;
  o.batch_size = 32;
  o.max_epochs = 40;
  o.patience = 5;
  const TrainResult r = train(tr, val, o);
  const TrainReport& rep = r.report;
  ASSERT_GE(rep.epochs_run, 2u);
  EXPECT_LT(rep.best_val_nmse(), rep.val_nmse.front());
  EXPECT_EQ(rep.best_val_nmse(), *std::min_element(rep.val_nmse.begin(), rep.val_nmse.end()));
  EXPECT_EQ(evaluate_nmse(r.model, val), rep.best_val_nmse());
  EXPECT_LT(rep.best_val_nmse(), 0.1);
}

TEST(Train, DeterministicForFixedSeeds) {
  const Dataset tr = linear_dataset(150, 5), val = linear_dataset(30, 6);
  TrainOptions o;
  o.hidden_width = 16;
  o.learning_rate = 1e-3;
  o.batch_size = 16;
  o.max_epochs = 6;
  const TrainResult a = train(tr, val, o), b = train(tr, val, o);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.model, b.model);
  o.shuffle_seed = 77;
  EXPECT_FALSE(train(tr, val, o).report == a.report);
}

TEST(Train, ReportsDivergence) {
  const Dataset tr = linear_dataset(64, 7), val = linear_dataset(16, 8);
  TrainOptions o;
  o.hidden_width = 8;
  o.learning_rate = 1e200;
  o.batch_size = 8;
  o.max_epochs = 5;
  try {
    train(tr, val, o);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.epoch, 5u);
  }
}

TEST(Train, RejectsInconsistentWidths) {
  Dataset val = linear_dataset(16, 9);
  val.targets.conservativeResize(Eigen::NoChange, 5);
  EXPECT_THROW(train(linear_dataset(32, 10), val, TrainOptions{}), ShapeError);
}

TEST(Predict, WiringUsesFeatureThenTargetStatistics) {
  EstimatorModel m;
  m.params = MlpParams::zeros(2, 2, 2);
  m.params.w1.setIdentity();
  m.params.w2.setIdentity();
  m.params.w3.setIdentity();
  m.feature_norm.mean = Eigen::Vector2d(1.0, -3.0);
  m.feature_norm.stddev = Eigen::Vector2d(2.0, 0.5);
  m.target_norm.mean = Eigen::Vector2d(10.0, 20.0);
  m.target_norm.stddev = Eigen::Vector2d(4.0, 8.0);
  ComplexVector y(1);
  y[0] = {5.0, -1.0};  // standardized: (2, 4), stays positive through ReLU
  const ComplexVector h = m.predict(y);
  ASSERT_EQ(h.size(), 1);
  EXPECT_DOUBLE_EQ(h[0].real(), 10.0 + 4.0 * 2.0);
  EXPECT_DOUBLE_EQ(h[0].imag(), 20.0 + 8.0 * 4.0);
  EXPECT_THROW(m.predict(ComplexVector::Zero(2)), ShapeError);
}

TEST(Predict, FiniteRepeatableOutput) {
  const Dataset tr = linear_dataset(100, 11), val = linear_dataset(20, 12);
  TrainOptions o;
  o.hidden_width = 8;
  o.max_epochs = 2;
  const EstimatorModel m = train(tr, val, o).model;
  const ComplexVector y = unpack_complex(tr.features.row(0).transpose());
  const ComplexVector a = m.predict(y), b = m.predict(y);
  EXPECT_EQ(a.size(), 3);
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(a, b);
}

TEST(ModelFile, SaveLoadIsBitExact) {
  const Dataset tr = linear_dataset(100, 13), val = linear_dataset(20, 14);
  TrainOptions o;
  o.hidden_width = 8;
  o.max_epochs = 2;
  const EstimatorModel m = train(tr, val, o).model;
  const fs::path p = fs::temp_directory_path() / "fasrec_model_test.fasm";
  save_model(m, p);
  EXPECT_EQ(load_model(p), m);
  EXPECT_EQ(encode_model(load_model(p)), read_file_bytes(p));

  auto bytes = encode_model(m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FASM");
  auto corrupt = bytes;
  corrupt[100] ^= 0x40;
  EXPECT_THROW(decode_model(corrupt), ChecksumError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  EXPECT_THROW(decode_model(truncated), ChecksumError);
  auto magic = bytes;
  magic[3] = 'D';
  EXPECT_THROW(decode_model(magic), FormatError);
}

TEST(TrainReport, CsvLayout) {
  TrainReport r;
  r.train_loss = {1.5, 0.25};
  r.val_nmse = {0.5, 0.1};
  r.val_nmse_db = {-3.0103, -10.0};
  r.epochs_run = 2;
  EXPECT_EQ(r.to_csv(), "epoch,train_loss,val_nmse_db\n1,1.5,-3.0103\n2,0.25,-10\n");
}
