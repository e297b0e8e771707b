#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pandas/nn.hpp"

namespace pandas {

using nn::Bind;
using nn::ParamStore;

struct ModelConfig {
  int localDim = 64;        // l
  int codeDim = 64;         // r
  int frequencies = 4;      // s
  int blocks = 4;           // diffusion blocks in F and Enc_D
  int width = 128;          // diffusion block width
  int encoderChannels = 64;
  int generatorHidden = 128;
  int eigenCount = 32;      // K

  static constexpr int kInputChannels = 6;  // vertex position + vertex normal
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"localDim", c.localDim},       {"codeDim", c.codeDim},
       {"frequencies", c.frequencies}, {"blocks", c.blocks},
       {"width", c.width},             {"encoderChannels", c.encoderChannels},
       {"generatorHidden", c.generatorHidden}, {"eigenCount", c.eigenCount}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.localDim = j.value("localDim", d.localDim);
  c.codeDim = j.value("codeDim", d.codeDim);
  c.frequencies = j.value("frequencies", d.frequencies);
  c.blocks = j.value("blocks", d.blocks);
  c.width = j.value("width", d.width);
  c.encoderChannels = j.value("encoderChannels", d.encoderChannels);
  c.generatorHidden = j.value("generatorHidden", d.generatorHidden);
  c.eigenCount = j.value("eigenCount", d.eigenCount);
  if (c.localDim < 1 || c.codeDim < 1 || c.blocks < 0 || c.width < 1 || c.encoderChannels < 1 ||
      c.generatorHidden < 1 || c.frequencies < 1 || c.eigenCount < c.frequencies)
    throw Error(ErrorKind::Config, "invalid model configuration");
}

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return nlohmann::json(a) == nlohmann::json(b);
}

/// Weights of F, Enc_D and G with their optimizer state.
struct ModelParams {
  ModelConfig config;
  ParamStore store;
};

struct FeatureField {
  std::string meshId;
  Matrix local;                // m x l
  std::optional<Matrix> code;  // m x r, present once assembled

  bool assembled() const { return code.has_value(); }
  Eigen::Index faces() const { return local.rows(); }
  /// m x (l + r) rows (f_t, code_t).
  Matrix rows() const {
    if (!code) throw Error(ErrorKind::Shape, "feature field is not assembled");
    Matrix out(local.rows(), local.cols() + code->cols());
    out << local, *code;
    return out;
  }
};

struct LatentCode {
  Eigen::RowVectorXd z;
  Eigen::Index size() const { return z.size(); }
};

namespace model_detail {

inline void add_diffusion_net(ParamStore& store, const std::string& prefix, int in, int out, const ModelConfig& c,
                              double initTime, std::mt19937_64& rng) {
  nn::add_linear(store, prefix + ".in", in, c.width, rng);
  for (int b = 0; b < c.blocks; ++b) {
    const std::string block = prefix + ".block" + std::to_string(b);
    store.add(block + ".logTime", Matrix::Constant(1, c.width, std::log(initTime)), {c.width});
    nn::add_mlp(store, block + ".mlp", {2 * c.width, c.width, c.width}, rng);
  }
  nn::add_linear(store, prefix + ".out", c.width, out, rng);
}

/// Per-vertex lift, B residual blocks of (diffuse, concat, MLP), per-vertex projection, then the
/// incident-vertex mean onto faces.
inline ad::Var diffusion_net_faces(ad::Tape& tape, const Bind& bind, const std::string& prefix, const ModelConfig& c,
                                   const std::shared_ptr<const MeshGeometry>& geom) {
  Matrix input(geom->mesh.num_vertices(), ModelConfig::kInputChannels);
  input << geom->mesh.vertices(), geom->vertexNormals;
  ad::Var x = nn::linear(tape, tape.constant(std::move(input)), bind, prefix + ".in");
  for (int b = 0; b < c.blocks; ++b) {
    const std::string block = prefix + ".block" + std::to_string(b);
    ad::Var diffused = nn::diffusion(x, bind(tape, block + ".logTime"), geom);
    ad::Var y = nn::mlp_forward(tape, ad::concat_cols(x, diffused), bind, block + ".mlp", 2);
    x = ad::add(x, y);
  }
  x = nn::linear(tape, x, bind, prefix + ".out");
  return ad::sparse_matmul(geom->faceAverage, x, geom);
}

inline const JacobianField& identity_rows(Eigen::Index m) {
  thread_local JacobianField cache;
  if (cache.rows() != m) {
    cache.resize(m, 9);
    for (Eigen::Index t = 0; t < m; ++t) cache.row(t) << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  }
  return cache;
}

}  // namespace model_detail

/// Random-initialized model. `initTime` seeds every diffusion time (mean squared edge length of the
/// training mesh is the natural scale). The generator's last layer is zero so the untrained model is
/// the identity deformation.
inline ModelParams init_model(const ModelConfig& c, std::uint64_t seed, double initTime) {
  if (!(initTime > 0)) throw Error(ErrorKind::Config, "diffusion init time must be positive");
  ModelParams p;
  p.config = c;
  std::mt19937_64 rng(seed);
  model_detail::add_diffusion_net(p.store, "F", ModelConfig::kInputChannels, c.localDim, c, initTime, rng);
  model_detail::add_diffusion_net(p.store, "E", ModelConfig::kInputChannels, c.encoderChannels, c, initTime, rng);
  nn::add_linear(p.store, "E.lin", c.frequencies * c.encoderChannels, c.codeDim, rng);
  nn::add_mlp(p.store, "G", {c.localDim + c.codeDim, c.generatorHidden, 9}, rng, /*zeroLast=*/true);
  return p;
}

inline double mean_squared_edge_length(const Mesh& mesh) {
  double sum = 0.0;
  for (int t = 0; t < mesh.num_faces(); ++t)
    for (int k = 0; k < 3; ++k)
      sum += (mesh.vertex(mesh.faces()(t, k)) - mesh.vertex(mesh.faces()(t, (k + 1) % 3))).squaredNorm();
  return sum / (3.0 * mesh.num_faces());
}

inline std::shared_ptr<const MeshGeometry> geometry_for(const Mesh& mesh, const ModelConfig& c) {
  return geometry_cache().get(mesh, c.eigenCount);
}

// ---------------------------------------------------------------------------
// Tape-level building blocks (shared by inference and training)
// ---------------------------------------------------------------------------

inline ad::Var features_on_tape(ad::Tape& tape, const Bind& bind, const ModelConfig& c,
                                const std::shared_ptr<const MeshGeometry>& geom) {
  return model_detail::diffusion_net_faces(tape, bind, "F", c, geom);
}

/// s x m matrix with rows Area(t) e^k_t / Area(mesh).
inline Matrix spectral_weights(const MeshGeometry& geom, int s) {
  if (s > geom.basis.count())
    throw Error(ErrorKind::Shape, "aggregate_spectral: " + std::to_string(s) + " frequencies requested, " +
                                      std::to_string(geom.basis.count()) + " eigenpairs available");
  Matrix w(s, geom.mesh.num_faces());
  for (int k = 0; k < s; ++k)
    w.row(k) = (geom.basis.faceVectors.col(k).array() * geom.areas.array()).matrix().transpose() / geom.totalArea;
  return w;
}

/// Enc_D(Y) = Lin(p_1, ..., p_s) as a 1 x r row.
inline ad::Var encode_on_tape(ad::Tape& tape, const Bind& bind, const ModelConfig& c,
                              const std::shared_ptr<const MeshGeometry>& geom) {
  ad::Var g = model_detail::diffusion_net_faces(tape, bind, "E", c, geom);
  ad::Var p = ad::const_matmul(spectral_weights(*geom, c.frequencies), g);
  return nn::linear(tape, ad::reshape(p, 1, p.value().size()), bind, "E.lin");
}

struct DecodeVars {
  ad::Var raw;        // m x 9, generator output plus identity
  ad::Var jacobians;  // restricted
  ad::Var displacement;
};

/// G: per-face MLP, identity added, tangent restriction, Poisson solve for the displacement.
inline DecodeVars decode_on_tape(ad::Tape& tape, const Bind& bind, const std::shared_ptr<const MeshGeometry>& geom,
                                 const ad::Var& field) {
  DecodeVars out;
  ad::Var offset = nn::mlp_forward(tape, field, bind, "G", 2);
  out.raw = ad::add_constant(offset, model_detail::identity_rows(offset.rows()));
  out.jacobians = nn::restrict_jacobian(out.raw, geom);
  ad::Var relative = ad::add_constant(out.jacobians, -geom->projectors);
  out.displacement = nn::poisson_solve(relative, geom);
  return out;
}

// ---------------------------------------------------------------------------
// Public inference API
// ---------------------------------------------------------------------------

inline FeatureField extract_features(const Mesh& mesh, const ModelParams& params) {
  const auto& w = params.store.at("F.out.W");
  if (w.value.cols() != params.config.localDim)
    throw Error(ErrorKind::Config, "weights produce " + std::to_string(w.value.cols()) + " local features, config asks " +
                                       std::to_string(params.config.localDim));
  ad::Tape tape;
  Bind bind(params.store);
  ad::Var f = features_on_tape(tape, bind, params.config, geometry_for(mesh, params.config));
  return FeatureField{mesh.id(), f.value(), std::nullopt};
}

/// p_k = (1/Area) sum_t Area(t) g_t e^k_t for k = 1..s, one row per frequency.
inline Matrix aggregate_spectral(const Matrix& faceFeatures, const MeshGeometry& geom, int s) {
  if (faceFeatures.rows() != geom.mesh.num_faces()) throw Error(ErrorKind::Shape, "aggregate_spectral: not per-face");
  return spectral_weights(geom, s) * faceFeatures;
}

inline LatentCode encode_mesh(const Mesh& mesh, const ModelParams& params) {
  const auto& lin = params.store.at("E.lin.W");
  if (lin.value.cols() != params.config.codeDim ||
      lin.value.rows() != params.config.frequencies * params.config.encoderChannels)
    throw Error(ErrorKind::Config, "encoder weights do not match config sizes");
  ad::Tape tape;
  Bind bind(params.store);
  ad::Var z = encode_on_tape(tape, bind, params.config, geometry_for(mesh, params.config));
  return LatentCode{z.value().row(0)};
}

/// z = Enc_D(target) - Enc_D(source). Identical meshes give exactly zero.
inline LatentCode encode_deformation(const Mesh& source, const Mesh& target, const ModelParams& params) {
  LatentCode zs = encode_mesh(source, params);
  LatentCode zt = encode_mesh(target, params);
  return LatentCode{zt.z - zs.z};
}

/// Rows (f_t, M_t * z); M_t = 1 everywhere when no mask is given. A +0.0 keeps masked-out rows at
/// positive zero.
inline FeatureField assemble(const FeatureField& local, const LatentCode& z,
                             const std::optional<Eigen::VectorXd>& mask = std::nullopt) {
  const Eigen::Index m = local.faces();
  if (mask && mask->size() != m) throw Error(ErrorKind::Shape, "assemble: mask length does not match face count");
  Matrix code(m, z.size());
  for (Eigen::Index t = 0; t < m; ++t) {
    const double w = mask ? (*mask)[t] : 1.0;
    code.row(t) = (w * z.z).array() + 0.0;
  }
  return FeatureField{local.meshId, local.local, std::move(code)};
}

struct Generated {
  Mesh mesh;
  JacobianField jacobians;     // restricted, pre-Poisson
  Matrix displacement;         // n x 3
};

inline Generated generate(const Mesh& source, const FeatureField& field, const ModelParams& params) {
  if (field.faces() != source.num_faces()) throw Error(ErrorKind::Shape, "generate: field not aligned with source");
  const int in = params.config.localDim + params.config.codeDim;
  Matrix rows = field.rows();
  if (rows.cols() != in) throw Error(ErrorKind::Config, "generate: feature width does not match generator input");
  ad::Tape tape;
  Bind bind(params.store);
  auto geom = geometry_for(source, params.config);
  DecodeVars d = decode_on_tape(tape, bind, geom, tape.constant(std::move(rows)));
  Vertices out = source.vertices() + d.displacement.value();
  return Generated{source.with_vertices(std::move(out), source.id() + "_deformed"), d.jacobians.value(),
                   d.displacement.value()};
}

inline Mesh predict(const Mesh& source, const Mesh& target, const ModelParams& params) {
  FeatureField local = extract_features(source, params);
  LatentCode z = encode_deformation(source, target, params);
  return generate(source, assemble(local, z), params).mesh;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void save_model(std::ostream& out, const ModelParams& params) {
  nlohmann::json header = {{"format", "pandas-model"}, {"config", params.config}, {"adamStep", params.store.step()}};
  std::vector<nn::TensorRecord> records;
  for (const auto& [name, p] : params.store.items()) {
    records.push_back(nn::to_record(name, p.shape, p.value));
    records.push_back(nn::to_record("adam.m:" + name, p.shape, p.moment1));
    records.push_back(nn::to_record("adam.v:" + name, p.shape, p.moment2));
  }
  nn::write_container(out, header.dump(), records);
}

inline void save_model(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write model '" + path + "'");
  save_model(out, params);
}

inline ModelParams load_model(std::istream& in) {
  auto [header_text, records] = nn::read_container(in);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model header is not JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != "pandas-model" || !header.contains("config"))
    throw Error(ErrorKind::Parse, "weight file does not hold a pandas model");
  ModelParams p;
  try {
    p.config = header.at("config").get<ModelConfig>();
    // Build the expected layout, then overwrite values from the file.
    p = init_model(p.config, 0, 1.0);
    p.store.set_step(header.value("adamStep", 0L));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("bad model header: ") + e.what());
  }
  std::size_t seen = 0;
  for (auto& r : records) {
    std::string name = r.name;
    Matrix* slot = nullptr;
    std::string base = name;
    int which = 0;
    if (name.rfind("adam.m:", 0) == 0) base = name.substr(7), which = 1;
    else if (name.rfind("adam.v:", 0) == 0) base = name.substr(7), which = 2;
    if (!p.store.contains(base)) throw Error(ErrorKind::Parse, "unexpected tensor '" + name + "' in model file");
    auto& param = p.store.at(base);
    slot = which == 0 ? &param.value : which == 1 ? &param.moment1 : &param.moment2;
    if (static_cast<std::size_t>(slot->size()) != r.data.size())
      throw Error(ErrorKind::Parse, "tensor '" + name + "' has wrong size");
    std::copy(r.data.begin(), r.data.end(), slot->data());
    if (which == 0) ++seen;
  }
  if (seen != p.store.size()) throw Error(ErrorKind::Parse, "model file is missing parameters");
  return p;
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace pandas
