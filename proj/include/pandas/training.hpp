#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "pandas/model.hpp"

namespace pandas {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// (1/n) sum_i |y_i - yhat_i|^2.
inline double reconstruction_loss(const Mesh& target, const Mesh& predicted) {
  return mean_squared_distance(target.vertices(), predicted.vertices());
}

struct NormalLossResult {
  double value = 0.0;
  int skippedFaces = 0;
};

/// (1/m) sum_t [1 - n_t(target) . n_t(J)] with n_t(J) the normalized cross product of the Jacobian
/// images of the source edges. Faces whose cross product is below 1e-12 are skipped and counted.
inline NormalLossResult normal_loss(const Mesh& target, const JacobianField& J, const Mesh& source) {
  if (J.rows() != source.num_faces() || target.num_faces() != source.num_faces())
    throw Error(ErrorKind::Shape, "normal_loss: face counts differ");
  MeshGeometry geom;
  geom.edges.resize(source.num_faces(), 6);
  for (int t = 0; t < source.num_faces(); ++t) {
    Eigen::Vector3d a = source.vertex(source.faces()(t, 0));
    geom.edges.row(t).head<3>() = (source.vertex(source.faces()(t, 1)) - a).transpose();
    geom.edges.row(t).tail<3>() = (source.vertex(source.faces()(t, 2)) - a).transpose();
  }
  nn::JacobianNormals jn = nn::jacobian_normals(J, geom);
  FaceVectors targetNormals = face_normals(target);
  NormalLossResult r;
  for (int t = 0; t < source.num_faces(); ++t)
    if (!jn.skipped[t]) r.value += 1.0 - targetNormals.row(t).dot(jn.normals.row(t));
  r.value /= source.num_faces();
  r.skippedFaces = jn.skippedCount;
  if (r.skippedFaces > 0)
    std::cerr << "warning: normal loss skipped " << r.skippedFaces << " faces with vanishing Jacobian normals\n";
  return r;
}

inline double total_loss(double reconstruction, double normal, double lambdaN) {
  return reconstruction + lambdaN * normal;
}

// ---------------------------------------------------------------------------
// Synthetic registered pose families
// ---------------------------------------------------------------------------

enum class SynthKind { BendBar, TwistBar, BumpSheet };

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "bend-bar") return SynthKind::BendBar;
  if (s == "twist-bar") return SynthKind::TwistBar;
  if (s == "bump-sheet") return SynthKind::BumpSheet;
  throw Error(ErrorKind::Config, "unknown dataset kind '" + s + "' (expected bend-bar, twist-bar or bump-sheet)");
}

inline std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::BendBar: return "bend-bar";
    case SynthKind::TwistBar: return "twist-bar";
    case SynthKind::BumpSheet: return "bump-sheet";
  }
  return "";
}

/// Box-surface bar along x, centered at the origin. The y extent tapers linearly from `width` at
/// x = -length/2 to `taper * width` at +length/2; the taper keeps the low Laplacian modes free of
/// end-to-end symmetry so eigenvector signs are stable across poses.
struct BarShape {
  double length = 2.0;
  double width = 0.24;
  double thickness = 0.16;
  double taper = 0.8;
  int nx = 36, ny = 4, nz = 4;
};

struct SheetShape {
  double size = 2.0;
  int n = 24;  // (n + 1)^2 vertices
};

inline Mesh make_bar(const BarShape& s, const std::string& id = "bar") {
  const int NX = s.nx, NY = s.ny, NZ = s.nz;
  auto lattice = [&](int i, int j, int k) { return (i * (NY + 1) + j) * (NZ + 1) + k; };
  std::vector<int> index((NX + 1) * (NY + 1) * (NZ + 1), -1);
  std::vector<Eigen::RowVector3d> pts;
  for (int i = 0; i <= NX; ++i)
    for (int j = 0; j <= NY; ++j)
      for (int k = 0; k <= NZ; ++k) {
        if (i != 0 && i != NX && j != 0 && j != NY && k != 0 && k != NZ) continue;
        double u = static_cast<double>(i) / NX;
        double w = s.width * (1.0 + (s.taper - 1.0) * u);
        index[lattice(i, j, k)] = static_cast<int>(pts.size());
        pts.emplace_back(-0.5 * s.length + s.length * u, (static_cast<double>(j) / NY - 0.5) * w,
                         (static_cast<double>(k) / NZ - 0.5) * s.thickness);
      }
  Vertices V(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) V.row(i) = pts[i];

  std::vector<std::array<int, 3>> tris;
  // Emit a quad as two triangles oriented along `outward`.
  auto quad = [&](int a, int b, int c, int d, const Eigen::RowVector3d& outward) {
    std::array<int, 3> t1{a, b, c}, t2{a, c, d};
    Eigen::RowVector3d n = (V.row(b) - V.row(a)).cross(V.row(c) - V.row(a));
    if (n.dot(outward) < 0) std::swap(t1[1], t1[2]), std::swap(t2[1], t2[2]);
    tris.push_back(t1);
    tris.push_back(t2);
  };
  auto at = [&](int i, int j, int k) { return index[lattice(i, j, k)]; };
  for (int j = 0; j < NY; ++j)
    for (int k = 0; k < NZ; ++k) {
      quad(at(0, j, k), at(0, j + 1, k), at(0, j + 1, k + 1), at(0, j, k + 1), {-1, 0, 0});
      quad(at(NX, j, k), at(NX, j + 1, k), at(NX, j + 1, k + 1), at(NX, j, k + 1), {1, 0, 0});
    }
  for (int i = 0; i < NX; ++i) {
    for (int k = 0; k < NZ; ++k) {
      quad(at(i, 0, k), at(i + 1, 0, k), at(i + 1, 0, k + 1), at(i, 0, k + 1), {0, -1, 0});
      quad(at(i, NY, k), at(i + 1, NY, k), at(i + 1, NY, k + 1), at(i, NY, k + 1), {0, 1, 0});
    }
    for (int j = 0; j < NY; ++j) {
      quad(at(i, j, 0), at(i + 1, j, 0), at(i + 1, j + 1, 0), at(i, j + 1, 0), {0, 0, -1});
      quad(at(i, j, NZ), at(i + 1, j, NZ), at(i + 1, j + 1, NZ), at(i, j + 1, NZ), {0, 0, 1});
    }
  }
  Faces F(tris.size(), 3);
  for (std::size_t t = 0; t < tris.size(); ++t) F.row(t) << tris[t][0], tris[t][1], tris[t][2];
  return Mesh(std::move(V), std::move(F), id);
}

inline Mesh make_sheet(const SheetShape& s, const std::string& id = "sheet") {
  const int n = s.n;
  Vertices V((n + 1) * (n + 1), 3);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      V.row(i * (n + 1) + j) << -0.5 * s.size + s.size * i / n, -0.5 * s.size + s.size * j / n, 0.0;
  Faces F(2 * n * n, 3);
  int t = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      int a = i * (n + 1) + j, b = (i + 1) * (n + 1) + j, c = b + 1, d = a + 1;
      F.row(t++) << a, b, c;
      F.row(t++) << a, c, d;
    }
  return Mesh(std::move(V), std::move(F), id);
}

/// Circular-arc bend in the x-z plane: the centerline z = 0 maps onto an arc of total angle `theta`
/// over `length`, symmetric about x = 0. Point (x, y, z) -> ((R - z) sin(x/R), y, R - (R - z) cos(x/R)).
inline Eigen::RowVector3d bend_point(const Eigen::RowVector3d& p, double theta, double length) {
  if (std::abs(theta) < 1e-12) return p;
  const double R = length / theta;
  const double phi = p.x() / R;
  return {(R - p.z()) * std::sin(phi), p.y(), R - (R - p.z()) * std::cos(phi)};
}

/// Rotation of the cross-section about x by tau * x / length.
inline Eigen::RowVector3d twist_point(const Eigen::RowVector3d& p, double tau, double length) {
  const double a = tau * p.x() / length;
  return {p.x(), std::cos(a) * p.y() - std::sin(a) * p.z(), std::sin(a) * p.y() + std::cos(a) * p.z()};
}

inline Eigen::RowVector3d bump_point(const Eigen::RowVector3d& p, double height) {
  const double dx = p.x() - 0.3, dy = p.y() + 0.2;
  return {p.x(), p.y(), p.z() + height * std::exp(-(dx * dx + dy * dy) / 0.25)};
}

/// Removes the lumped-mass-weighted mean displacement relative to `neutral`, matching the gauge of
/// the Poisson reconstruction.
inline Vertices gauge_center(const Mesh& neutral, Vertices posed) {
  Eigen::VectorXd mass = lumped_mass_diagonal(neutral);
  Eigen::RowVector3d shift = (mass.transpose() * (posed - neutral.vertices())) / mass.sum();
  posed.rowwise() -= shift;
  return posed;
}

inline Mesh apply_pose(const Mesh& neutral, SynthKind kind, double param, double length, const std::string& id) {
  Vertices V = neutral.vertices();
  for (int i = 0; i < V.rows(); ++i) {
    Eigen::RowVector3d p = V.row(i);
    switch (kind) {
      case SynthKind::BendBar: V.row(i) = bend_point(p, param, length); break;
      case SynthKind::TwistBar: V.row(i) = twist_point(p, param, length); break;
      case SynthKind::BumpSheet: V.row(i) = bump_point(p, param); break;
    }
  }
  return neutral.with_vertices(gauge_center(neutral, std::move(V)), id);
}

struct PoseDataset {
  SynthKind kind = SynthKind::BendBar;
  Mesh neutral;
  std::vector<Mesh> poses;
  std::vector<double> parameters;  // generator parameter of each pose
  std::vector<int> train;
  std::vector<int> test;
};

struct SynthOptions {
  BarShape bar;
  SheetShape sheet;
  double range = std::numbers::pi / 2;  // parameters sampled uniformly in [-range, range]
  double bumpRange = 0.4;
  std::string prefix;                   // prepended to mesh ids
};

/// `count` poses with parameters drawn from `seed`; the last max(1, count/4) form the test split.
inline PoseDataset synth_dataset(SynthKind kind, int count, std::uint64_t seed, const SynthOptions& opt = {}) {
  if (count < 2) throw Error(ErrorKind::Config, "synth_dataset: count must be at least 2");
  PoseDataset ds;
  ds.kind = kind;
  const bool sheet = kind == SynthKind::BumpSheet;
  ds.neutral = sheet ? make_sheet(opt.sheet, opt.prefix + "neutral") : make_bar(opt.bar, opt.prefix + "neutral");
  const double length = sheet ? opt.sheet.size : opt.bar.length;
  const double range = sheet ? opt.bumpRange : opt.range;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-range, range);
  char buf[32];
  for (int k = 0; k < count; ++k) {
    double param = unif(rng);
    std::snprintf(buf, sizeof buf, "pose_%03d", k);
    ds.poses.push_back(apply_pose(ds.neutral, kind, param, length, opt.prefix + buf));
    ds.parameters.push_back(param);
  }
  const int test = std::max(1, count / 4);
  for (int k = 0; k < count; ++k) (k < count - test ? ds.train : ds.test).push_back(k);
  return ds;
}

/// Mean direction of the cap faces at each end of a bar and the signed angle between them in the x-z
/// plane. On a bend with parameter theta this recovers theta.
inline double measure_bend_angle(const Mesh& neutral, const Mesh& posed) {
  FaceVectors n0 = face_normals(neutral);
  FaceVectors n1 = face_normals(posed);
  FaceScalars a1 = face_areas(posed);
  Eigen::RowVector3d left = Eigen::RowVector3d::Zero(), right = Eigen::RowVector3d::Zero();
  for (int t = 0; t < neutral.num_faces(); ++t) {
    if (n0(t, 0) < -0.99) left += a1[t] * n1.row(t);
    if (n0(t, 0) > 0.99) right += a1[t] * n1.row(t);
  }
  Eigen::RowVector3d a = -left.normalized(), b = right.normalized();
  // Right cap normal rotates by -theta/2 about y (toward +z for positive theta), left by +theta/2.
  double angle_a = std::atan2(a.z(), a.x());
  double angle_b = std::atan2(b.z(), b.x());
  return angle_b - angle_a;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 1000;
  double learningRate = 1e-4;
  double lambdaN = 1e-5;
  int batchSize = 1;  // gradient accumulation: pairs per Adam step
  std::uint64_t seed = 0;
  ModelConfig model;
  int checkpointEvery = 0;  // 0 disables periodic checkpoints
  std::string checkpointDir;
  long maxSteps = -1;  // stop after this many optimizer steps when >= 0
  bool restPair = true;  // also train on (neutral, neutral) so that a zero code decodes to the rest shape
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},       {"learningRate", c.learningRate}, {"lambdaN", c.lambdaN},
       {"batchSize", c.batchSize}, {"seed", c.seed},                 {"model", c.model},
       {"checkpointEvery", c.checkpointEvery}, {"checkpointDir", c.checkpointDir}, {"maxSteps", c.maxSteps},
       {"restPair", c.restPair}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.learningRate = j.value("learningRate", d.learningRate);
  c.lambdaN = j.value("lambdaN", d.lambdaN);
  c.batchSize = j.value("batchSize", d.batchSize);
  c.seed = j.value("seed", d.seed);
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.checkpointEvery = j.value("checkpointEvery", d.checkpointEvery);
  c.checkpointDir = j.value("checkpointDir", d.checkpointDir);
  c.maxSteps = j.value("maxSteps", d.maxSteps);
  c.restPair = j.value("restPair", d.restPair);
  if (!(c.learningRate > 0)) throw Error(ErrorKind::Config, "learningRate must be positive");
  if (!(c.lambdaN >= 0)) throw Error(ErrorKind::Config, "lambdaN must be non-negative");
  if (c.batchSize < 1 || c.epochs < 0) throw Error(ErrorKind::Config, "batchSize must be >= 1 and epochs >= 0");
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("bad training config: ") + e.what());
  }
}

struct EpochLog {
  int epoch = 0;
  double reconstruction = 0.0;
  double normal = 0.0;
  double total = 0.0;
  double wallTime = 0.0;  // seconds since training start
};

inline std::string to_json_line(const EpochLog& e) {
  return nlohmann::json{{"epoch", e.epoch}, {"L_rec", e.reconstruction}, {"L_n", e.normal}, {"total", e.total},
                        {"wall_time", e.wallTime}}
      .dump();
}

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  double initialLoss = 0.0;  // mean total loss over the train pairs before the first step
  bool diverged = false;
  std::string message;
};

struct PairLoss {
  double reconstruction = 0.0;
  double normal = 0.0;
  double total = 0.0;
};

/// One forward pass on (source, target); when `bind` is trainable, also backpropagates `weight`
/// times the total loss into the parameter gradients.
inline PairLoss pair_loss(const Bind& bind, const ModelConfig& c, const Mesh& source, const Mesh& target,
                          double lambdaN, double weight = 1.0) {
  ad::Tape tape;
  auto gx = geometry_for(source, c);
  auto gy = geometry_for(target, c);
  ad::Var f = features_on_tape(tape, bind, c, gx);
  ad::Var z = ad::sub(encode_on_tape(tape, bind, c, gy), encode_on_tape(tape, bind, c, gx));
  ad::Var code = ad::matmul(tape.constant(Matrix::Ones(source.num_faces(), 1)), z);
  DecodeVars d = decode_on_tape(tape, bind, gx, ad::concat_cols(f, code));
  ad::Var pred = ad::add_constant(d.displacement, source.vertices());
  ad::Var rec = ad::mean_squared_rows(pred, target.vertices());
  ad::Var nrm = nn::normal_loss(d.jacobians, gx, gy->normals);
  ad::Var total = ad::add(rec, ad::scale(nrm, lambdaN));
  if (bind.trainable()) tape.backward(ad::scale(total, weight));
  return {rec.scalar(), nrm.scalar(), total.scalar()};
}

namespace training_detail {

struct Pair {
  const Mesh* source;
  const Mesh* target;
};

inline std::vector<Pair> train_pairs(const std::vector<PoseDataset>& data, bool restPair) {
  std::vector<Pair> pairs;
  for (const auto& ds : data) {
    if (restPair && !ds.train.empty()) pairs.push_back({&ds.neutral, &ds.neutral});
    for (int k : ds.train) pairs.push_back({&ds.neutral, &ds.poses[k]});
  }
  return pairs;
}

}  // namespace training_detail

/// End-to-end Adam training over every (neutral, train pose) pair of every dataset, plus the rest
/// pair when enabled, one pair per
/// forward pass in a per-epoch shuffled order. Deterministic for a fixed seed.
inline TrainResult train(const std::vector<PoseDataset>& data, const TrainConfig& cfg,
                         std::optional<ModelParams> init = std::nullopt,
                         const std::function<void(const EpochLog&)>& onEpoch = {}) {
  auto pairs = training_detail::train_pairs(data, cfg.restPair);
  if (pairs.empty()) throw Error(ErrorKind::Config, "train: empty train split");
  TrainResult result;
  result.params = init ? std::move(*init)
                       : init_model(cfg.model, cfg.seed, mean_squared_edge_length(data.front().neutral));
  ModelParams& params = result.params;
  const ModelConfig& c = params.config;

  {
    const ParamStore& frozen = params.store;
    double sum = 0.0;
    for (const auto& p : pairs) sum += pair_loss(Bind(frozen), c, *p.source, *p.target, cfg.lambdaN).total;
    result.initialLoss = sum / pairs.size();
  }

  nn::AdamOptions adam;
  adam.learningRate = cfg.learningRate;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto start = std::chrono::steady_clock::now();
  double best = std::numeric_limits<double>::infinity();
  if (!cfg.checkpointDir.empty()) std::filesystem::create_directories(cfg.checkpointDir);

  long steps = 0;
  params.store.zero_grad();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ModelParams last_good = params;
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    int pending = 0;
    std::size_t seen = 0;
    bool stop = false;
    for (std::size_t idx : order) {
      const auto& p = pairs[idx];
      PairLoss loss =
          pair_loss(Bind(params.store), c, *p.source, *p.target, cfg.lambdaN, 1.0 / static_cast<double>(cfg.batchSize));
      if (!std::isfinite(loss.total)) {
        result.diverged = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch) + ", optimizer step " + std::to_string(steps);
        params = std::move(last_good);
        return result;
      }
      log.reconstruction += loss.reconstruction;
      log.normal += loss.normal;
      log.total += loss.total;
      ++seen;
      if (++pending == cfg.batchSize) {
        params.store.adam_step(adam);
        pending = 0;
        if (cfg.maxSteps >= 0 && ++steps >= cfg.maxSteps) {
          stop = true;
          break;
        }
      }
    }
    if (pending > 0) {
      params.store.adam_step(adam);
      ++steps;
    }
    log.reconstruction /= seen;
    log.normal /= seen;
    log.total /= seen;
    log.wallTime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(log);
    if (onEpoch) onEpoch(log);
    if (!cfg.checkpointDir.empty()) {
      if (cfg.checkpointEvery > 0 && epoch % cfg.checkpointEvery == 0)
        save_model(cfg.checkpointDir + "/epoch_" + std::to_string(epoch) + ".pnds", params);
      if (log.total < best) save_model(cfg.checkpointDir + "/best.pnds", params);
    }
    best = std::min(best, log.total);
    if (stop || (cfg.maxSteps >= 0 && steps >= cfg.maxSteps)) break;
  }
  return result;
}

inline TrainResult train(const PoseDataset& data, const TrainConfig& cfg, std::optional<ModelParams> init = std::nullopt,
                         const std::function<void(const EpochLog&)>& onEpoch = {}) {
  return train(std::vector<PoseDataset>{data}, cfg, std::move(init), onEpoch);
}

/// Mean reconstruction MSE of predict() over the given pose indices.
inline double evaluate_mse(const PoseDataset& ds, const std::vector<int>& indices, const ModelParams& params) {
  double sum = 0.0;
  for (int k : indices) sum += reconstruction_loss(ds.poses[k], predict(ds.neutral, ds.poses[k], params));
  return sum / static_cast<double>(indices.size());
}

/// MSE of the identity map (source returned unchanged) over the given poses.
inline double identity_mse(const PoseDataset& ds, const std::vector<int>& indices) {
  double sum = 0.0;
  for (int k : indices) sum += reconstruction_loss(ds.poses[k], ds.neutral);
  return sum / static_cast<double>(indices.size());
}

// ---------------------------------------------------------------------------
// Dataset directories: neutral.obj, pose_XXX.obj, manifest.json
// ---------------------------------------------------------------------------

inline void write_dataset(const std::string& dir, const PoseDataset& ds, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  save_mesh(dir + "/neutral.obj", ds.neutral);
  nlohmann::json poses = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.poses.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "pose_%03zu", k);
    save_mesh(dir + "/" + name + ".obj", ds.poses[k]);
    poses.push_back({{"id", name}, {"file", std::string(name) + ".obj"}, {"parameter", ds.parameters[k]}});
  }
  nlohmann::json manifest = {{"kind", to_string(ds.kind)},
                             {"seed", seed},
                             {"count", ds.poses.size()},
                             {"neutral", "neutral.obj"},
                             {"poses", poses},
                             {"split", {{"train", ds.train}, {"test", ds.test}}}};
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
}

inline PoseDataset read_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw Error(ErrorKind::Io, "missing manifest.json in '" + dir + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Parse, std::string("bad manifest: ") + e.what());
  }
  PoseDataset ds;
  ds.kind = parse_synth_kind(manifest.value("kind", std::string("bend-bar")));
  ds.neutral = load_mesh(dir + "/" + manifest.value("neutral", std::string("neutral.obj")));
  for (const auto& p : manifest.at("poses")) {
    Mesh m = load_mesh(dir + "/" + p.at("file").get<std::string>());
    if (m.faces() != ds.neutral.faces())
      throw Error(ErrorKind::Mesh, "pose '" + p.at("file").get<std::string>() + "' is not registered to the neutral mesh");
    ds.poses.push_back(std::move(m));
    ds.parameters.push_back(p.value("parameter", 0.0));
  }
  ds.train = manifest.at("split").at("train").get<std::vector<int>>();
  ds.test = manifest.at("split").at("test").get<std::vector<int>>();
  return ds;
}

}  // namespace pandas
