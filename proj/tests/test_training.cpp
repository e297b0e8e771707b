#include <gtest/gtest.h>

#include <fstream>

#include "gradcheck.hpp"
#include "support.hpp"

using namespace pandas;
using namespace pandas::testing;

namespace {

TrainConfig tiny_train(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learningRate = 1e-3;
  cfg.model = tiny_config();
  cfg.seed = 7;
  return cfg;
}

PoseDataset tiny_dataset(int count, std::uint64_t seed) {
  SynthOptions opt;
  opt.bar.nx = 6;
  opt.bar.ny = 2;
  opt.bar.nz = 2;
  return synth_dataset(SynthKind::BendBar, count, seed, opt);
}

}  // namespace

TEST(Loss, Reconstruction) {
  Mesh m = small_bar();
  EXPECT_EQ(reconstruction_loss(m, m), 0.0);
  Vertices v = m.vertices();
  v(3, 0) += 1.0;
  EXPECT_NEAR(reconstruction_loss(m, m.with_vertices(v)), 1.0 / m.num_vertices(), 1e-15);

  Mesh a = jittered(m, 0.1, 1), b = jittered(m, 0.1, 2);
  double naive = 0.0;
  for (int i = 0; i < m.num_vertices(); ++i)
    for (int k = 0; k < 3; ++k) naive += std::pow(a.vertices()(i, k) - b.vertices()(i, k), 2);
  EXPECT_NEAR(reconstruction_loss(a, b), naive / m.num_vertices(), 1e-12);
  EXPECT_THROW(reconstruction_loss(m, unit_square()), Error);
}

TEST(Loss, NormalIdentityAndRotation) {
  Mesh m = jittered(small_bar(), 0.01, 3);
  JacobianField P = tangent_projectors(m);
  EXPECT_LE(std::abs(normal_loss(m, P, m).value), 1e-12);

  Mesh sheet = small_sheet(3);
  JacobianField R(sheet.num_faces(), 9);  // 90 degrees about x: (x, y, z) -> (x, -z, y)
  for (int t = 0; t < sheet.num_faces(); ++t) R.row(t) << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_NEAR(normal_loss(sheet, R, sheet).value, 1.0, 1e-12);
}

TEST(Loss, NormalMatchesNaiveOracle) {
  Mesh src = jittered(small_bar(), 0.01, 4), tgt = jittered(src, 0.05, 5);
  JacobianField J = Matrix(tangent_projectors(src)) + random_matrix(src.num_faces(), 9, 6, 0.3);
  double naive = 0.0;
  for (int t = 0; t < src.num_faces(); ++t) {
    Eigen::Matrix3d Jt;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) Jt(r, c) = J(t, 3 * r + c);
    Eigen::Vector3d a = src.vertex(src.faces()(t, 0)), b = src.vertex(src.faces()(t, 1)), c = src.vertex(src.faces()(t, 2));
    Eigen::Vector3d nj = (Jt * (b - a)).cross(Jt * (c - a)).normalized();
    Eigen::Vector3d ta = tgt.vertex(tgt.faces()(t, 0)), tb = tgt.vertex(tgt.faces()(t, 1)), tc = tgt.vertex(tgt.faces()(t, 2));
    Eigen::Vector3d ny = (tb - ta).cross(tc - ta).normalized();
    naive += 1.0 - ny.dot(nj);
  }
  naive /= src.num_faces();
  NormalLossResult r = normal_loss(tgt, J, src);
  EXPECT_NEAR(r.value, naive, 1e-12);
  EXPECT_EQ(r.skippedFaces, 0);
  EXPECT_GE(r.value, 0.0);
  EXPECT_LE(r.value, 2.0);
}

TEST(Loss, NormalSkipsCollapsedFaces) {
  Mesh m = small_bar();
  JacobianField J = tangent_projectors(m);
  J.row(0).setZero();
  NormalLossResult r = normal_loss(m, J, m);
  EXPECT_EQ(r.skippedFaces, 1);
  EXPECT_LE(std::abs(r.value), 1e-12);
}

TEST(Loss, Total) {
  EXPECT_EQ(total_loss(0.3, 0.7, 0.0), 0.3);
  EXPECT_EQ(total_loss(0.0, 0.0, 1e-5), 0.0);
  EXPECT_NEAR(total_loss(0.5, 0.2, 1e-5), 0.500002, 1e-15);
  EXPECT_EQ(TrainConfig{}.lambdaN, 1e-5);
  EXPECT_EQ(TrainConfig{}.learningRate, 1e-4);
}

TEST(Synth, ZeroBendIsNeutral) {
  Mesh bar = make_bar(BarShape{});
  Mesh posed = apply_pose(bar, SynthKind::BendBar, 0.0, 2.0, "flat");
  EXPECT_LE((posed.vertices() - bar.vertices()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Synth, BendTipMatchesArcFormula) {
  BarShape s;
  Mesh bar = make_bar(s);
  const double theta = 1.1, L = s.length, R = L / theta;
  Mesh posed = apply_pose(bar, SynthKind::BendBar, theta, L, "bent");
  // Gauge shifts cancel in differences between two vertices.
  int tip = -1, tail = -1;
  for (int i = 0; i < bar.num_vertices(); ++i) {
    const auto p = bar.vertices().row(i);
    if (std::abs(p.x() - L / 2) < 1e-12 && std::abs(p.z() - s.thickness / 2) < 1e-12) tip = i;
    if (std::abs(p.x() + L / 2) < 1e-12 && std::abs(p.z() - s.thickness / 2) < 1e-12) tail = i;
  }
  ASSERT_GE(tip, 0);
  ASSERT_GE(tail, 0);
  const double h = s.thickness / 2, a = theta / 2;
  Eigen::RowVector3d tipArc((R - h) * std::sin(a), bar.vertices()(tip, 1), R - (R - h) * std::cos(a));
  Eigen::RowVector3d tailArc(-(R - h) * std::sin(a), bar.vertices()(tail, 1), R - (R - h) * std::cos(a));
  Eigen::RowVector3d got = posed.vertices().row(tip) - posed.vertices().row(tail);
  EXPECT_LE((got - (tipArc - tailArc)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(measure_bend_angle(bar, posed), theta, 1e-9);
}

TEST(Synth, DeterministicRegisteredAndSplit) {
  PoseDataset a = synth_dataset(SynthKind::BendBar, 20, 11), b = synth_dataset(SynthKind::BendBar, 20, 11);
  ASSERT_EQ(a.poses.size(), 20u);
  EXPECT_EQ(a.train.size(), 15u);
  EXPECT_EQ(a.test.size(), 5u);
  for (std::size_t k = 0; k < a.poses.size(); ++k) {
    EXPECT_EQ(std::memcmp(a.poses[k].vertices().data(), b.poses[k].vertices().data(), sizeof(double) * a.poses[k].vertices().size()), 0);
    EXPECT_TRUE(a.poses[k].faces() == a.neutral.faces());
    EXPECT_LE(std::abs(a.parameters[k]), std::numbers::pi / 2);
  }
  EXPECT_GT(a.neutral.num_vertices(), 500);
  EXPECT_LT(a.neutral.num_vertices(), 700);
  PoseDataset c = synth_dataset(SynthKind::BendBar, 20, 12);
  EXPECT_NE(c.parameters, a.parameters);
}

TEST(Synth, OtherFamilies) {
  PoseDataset twist = synth_dataset(SynthKind::TwistBar, 4, 1);
  PoseDataset bump = synth_dataset(SynthKind::BumpSheet, 4, 1);
  EXPECT_EQ(twist.test.size(), 1u);
  EXPECT_EQ(bump.neutral.num_vertices(), 25 * 25);
  Eigen::VectorXd mass = lumped_mass_diagonal(bump.neutral);
  for (const auto& p : bump.poses)
    EXPECT_LE((mass.transpose() * (p.vertices() - bump.neutral.vertices())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(parse_synth_kind("twist-bar"), SynthKind::TwistBar);
  EXPECT_EQ(to_string(SynthKind::BumpSheet), "bump-sheet");
  EXPECT_THROW(parse_synth_kind("spiral"), Error);
  EXPECT_THROW(synth_dataset(SynthKind::BendBar, 1, 0), Error);
}

TEST(Synth, DatasetDirectoryRoundTrip) {
  PoseDataset ds = tiny_dataset(4, 3);
  auto dir = temp_dir("dataset");
  write_dataset(dir.string(), ds, 3);
  PoseDataset back = read_dataset(dir.string());
  EXPECT_EQ(back.train, ds.train);
  EXPECT_EQ(back.test, ds.test);
  EXPECT_EQ(back.parameters, ds.parameters);
  for (std::size_t k = 0; k < ds.poses.size(); ++k)
    EXPECT_TRUE((back.poses[k].vertices().array() == ds.poses[k].vertices().array()).all());
  EXPECT_THROW(read_dataset((dir / "nothing").string()), Error);
}

TEST(Config, JsonAndValidation) {
  auto dir = temp_dir("train_config");
  {
    std::ofstream out(dir / "cfg.json");
    out << R"({"epochs": 3, "learningRate": 0.01, "model": {"width": 16, "blocks": 1}})";
  }
  TrainConfig c = load_train_config((dir / "cfg.json").string());
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.model.width, 16);
  EXPECT_EQ(c.lambdaN, 1e-5);
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"learningRate": -1})";
  }
  EXPECT_THROW(load_train_config((dir / "bad.json").string()), Error);
  {
    std::ofstream out(dir / "broken.json");
    out << "{";
  }
  EXPECT_THROW(load_train_config((dir / "broken.json").string()), Error);
  nlohmann::json j = c;
  EXPECT_EQ(j.get<TrainConfig>().model, c.model);
}

TEST(EndToEnd, LossGradcheckOnToyMesh) {
  PoseDataset ds = tiny_dataset(2, 5);
  ASSERT_LE(ds.neutral.num_faces(), 200);
  ModelParams p = random_model(3, 0.2);
  const Mesh& target = ds.poses[0];
  auto loss = [&](const Bind& bind) { return pair_loss(bind, p.config, ds.neutral, target, 0.1).total; };
  auto r = gradcheck_params(p.store, loss, 4);
  EXPECT_TRUE(r.ok) << "worst " << r.worst << " over " << r.checked;
}

TEST(Train, LowersLossAndLogs) {
  PoseDataset ds = tiny_dataset(4, 2);
  std::vector<EpochLog> seen;
  TrainResult r = train(ds, tiny_train(15), std::nullopt, [&](const EpochLog& e) { seen.push_back(e); });
  ASSERT_EQ(r.log.size(), 15u);
  EXPECT_EQ(seen.size(), 15u);
  EXPECT_FALSE(r.diverged);
  for (const auto& e : r.log) {
    EXPECT_TRUE(std::isfinite(e.total));
    EXPECT_GE(e.reconstruction, 0.0);
    EXPECT_GE(e.normal, 0.0);
    EXPECT_LE(e.normal, 2.0);
  }
  EXPECT_LT(r.log.back().total, r.initialLoss);
  auto j = nlohmann::json::parse(to_json_line(r.log.front()));
  for (const char* key : {"epoch", "L_rec", "L_n", "total", "wall_time"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Train, SameSeedBitIdentical) {
  PoseDataset ds = tiny_dataset(4, 2);
  TrainConfig cfg = tiny_train(100);
  cfg.maxSteps = 10;
  TrainResult a = train(ds, cfg), b = train(ds, cfg);
  EXPECT_EQ(a.params.store.step(), 10);
  for (const auto& [name, p] : a.params.store.items()) {
    const auto& q = b.params.store.at(name);
    EXPECT_EQ(std::memcmp(p.value.data(), q.value.data(), sizeof(double) * p.value.size()), 0) << name;
  }
  cfg.seed = 8;
  TrainResult c = train(ds, cfg);
  EXPECT_FALSE((c.params.store.at("G.0.W").value.array() == a.params.store.at("G.0.W").value.array()).all());
}

TEST(Train, OverfitsSinglePose) {
  PoseDataset ds = tiny_dataset(2, 9);
  ds.train = {0};
  TrainConfig cfg = tiny_train(200);
  TrainResult r = train(ds, cfg);
  Eigen::RowVector3d extent = ds.neutral.vertices().colwise().maxCoeff() - ds.neutral.vertices().colwise().minCoeff();
  double bbox2 = extent.squaredNorm();
  EXPECT_LE(evaluate_mse(ds, {0}, r.params), 1e-4 * bbox2);
}

TEST(Train, LambdaZeroAlsoRunsAndSerializes) {
  PoseDataset ds = tiny_dataset(3, 4);
  TrainConfig cfg = tiny_train(2);
  cfg.lambdaN = 0.0;
  TrainResult r = train(ds, cfg);
  std::stringstream ss;
  save_model(ss, r.params);
  EXPECT_NO_THROW(load_model(ss));
}

TEST(Train, DivergenceRestoresLastGoodWeights) {
  PoseDataset ds = tiny_dataset(3, 4);
  TrainConfig cfg = tiny_train(3);
  cfg.learningRate = 1e12;
  TrainResult r = train(ds, cfg);
  if (r.diverged) {
    EXPECT_NE(r.message.find("non-finite"), std::string::npos);
    for (const auto& [name, p] : r.params.store.items()) EXPECT_TRUE(p.value.allFinite()) << name;
  } else {
    for (const auto& e : r.log) EXPECT_TRUE(std::isfinite(e.total));
  }
}

TEST(Train, CheckpointsWritten) {
  PoseDataset ds = tiny_dataset(3, 4);
  TrainConfig cfg = tiny_train(2);
  auto dir = temp_dir("checkpoints");
  cfg.checkpointDir = dir.string();
  cfg.checkpointEvery = 1;
  train(ds, cfg);
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_1.pnds"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_2.pnds"));
  EXPECT_TRUE(std::filesystem::exists(dir / "best.pnds"));
}

TEST(Train, EmptySplitRejected) {
  PoseDataset ds = tiny_dataset(2, 4);
  ds.train.clear();
  EXPECT_THROW(train(ds, tiny_train(1)), Error);
}
