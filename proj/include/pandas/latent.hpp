#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pandas/model.hpp"

namespace pandas {

/// Per-face weights aligned with the source faces; binary in normal use.
struct Mask {
  Eigen::VectorXd weights;
  std::string name;

  Eigen::Index size() const { return weights.size(); }
  std::vector<int> face_indices() const {
    std::vector<int> out;
    for (Eigen::Index t = 0; t < weights.size(); ++t)
      if (weights[t] != 0.0) out.push_back(static_cast<int>(t));
    return out;
  }
  static Mask full(Eigen::Index m, std::string name = "all") { return {Eigen::VectorXd::Ones(m), std::move(name)}; }
  static Mask empty(Eigen::Index m, std::string name = "none") { return {Eigen::VectorXd::Zero(m), std::move(name)}; }
};

inline Mask mask_from_faces(int faceCount, const std::vector<int>& faces, std::string name = {}) {
  Mask mask{Eigen::VectorXd::Zero(faceCount), std::move(name)};
  for (int f : faces) {
    if (f < 0 || f >= faceCount)
      throw Error(ErrorKind::Shape, "mask face index " + std::to_string(f) + " out of range [0, " +
                                        std::to_string(faceCount) + ")");
    mask.weights[f] = 1.0;
  }
  return mask;
}

/// JSON form: {"name": ..., "faceIndices": [...]}.
inline nlohmann::json mask_to_json(const Mask& mask) {
  return {{"name", mask.name}, {"faceIndices", mask.face_indices()}};
}

inline Mask mask_from_json(const nlohmann::json& j, int faceCount) {
  if (!j.is_object() || !j.contains("faceIndices") || !j.at("faceIndices").is_array())
    throw Error(ErrorKind::Parse, "mask JSON needs a faceIndices array");
  return mask_from_faces(faceCount, j.at("faceIndices").get<std::vector<int>>(), j.value("name", std::string()));
}

/// Reads either the JSON schema or a text column of per-face 0/1 values.
inline Mask load_mask(const std::string& path, int faceCount) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open mask '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return mask_from_json(nlohmann::json::parse(text), faceCount);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, std::string("bad mask JSON: ") + e.what());
    }
  }
  std::istringstream ls(text);
  std::vector<double> values;
  double v;
  while (ls >> v) values.push_back(v);
  if (static_cast<int>(values.size()) != faceCount)
    throw Error(ErrorKind::Shape, "mask column has " + std::to_string(values.size()) + " entries, mesh has " +
                                      std::to_string(faceCount) + " faces");
  Mask mask{Eigen::Map<Eigen::VectorXd>(values.data(), faceCount), path};
  return mask;
}

inline void save_mask(const std::string& path, const Mask& mask) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write mask '" + path + "'");
  out << mask_to_json(mask).dump() << '\n';
}

/// One contribution to a mixed field: a code restricted to a face mask.
struct MixPart {
  LatentCode code;
  Mask mask;
};

/// Precomputed codes of a collection of poses against one neutral mesh.
struct PoseBank {
  std::string neutralId;
  std::vector<std::string> ids;
  std::vector<LatentCode> codes;
  std::optional<FeatureField> neutralFeatures;

  const LatentCode* find(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    return it == ids.end() ? nullptr : &codes[it - ids.begin()];
  }
};

inline PoseBank build_pose_bank(const Mesh& neutral, const std::vector<Mesh>& poses, const ModelParams& params) {
  PoseBank bank;
  bank.neutralId = neutral.id();
  LatentCode base = encode_mesh(neutral, params);
  for (const auto& p : poses) {
    bank.ids.push_back(p.id());
    bank.codes.push_back(LatentCode{encode_mesh(p, params).z - base.z});
  }
  bank.neutralFeatures = extract_features(neutral, params);
  return bank;
}

// ---------------------------------------------------------------------------
// Field construction
// ---------------------------------------------------------------------------

/// Rows (f_t, alpha * sum_j M^j_t z^j). The sum runs in part order before scaling, so code algebra on
/// parts sharing a mask is exact.
inline FeatureField mix_field(const FeatureField& local, const std::vector<MixPart>& parts, double alpha, int codeDim) {
  const Eigen::Index m = local.faces();
  Matrix code = Matrix::Zero(m, codeDim);
  for (const auto& part : parts) {
    if (part.mask.size() != m) throw Error(ErrorKind::Shape, "mix: mask length does not match face count");
    if (part.code.size() != codeDim) throw Error(ErrorKind::Shape, "mix: code length does not match model");
    for (Eigen::Index t = 0; t < m; ++t) code.row(t) += part.mask.weights[t] * part.code.z;
  }
  code = (alpha * code).array() + 0.0;
  return FeatureField{local.meshId, local.local, std::move(code)};
}

inline LatentCode zero_code(const ModelParams& params) {
  return LatentCode{Eigen::RowVectorXd::Zero(params.config.codeDim)};
}

inline LatentCode scaled(const LatentCode& z, double alpha) { return LatentCode{alpha * z.z}; }

/// Decodes (f_t, 0): the model's reconstruction of the source from its own features.
inline Mesh zero_decode(const Mesh& source, const ModelParams& params) {
  return generate(source, assemble(extract_features(source, params), zero_code(params)), params).mesh;
}

// ---------------------------------------------------------------------------
// Manipulations
// ---------------------------------------------------------------------------

inline Mesh interpolate(const Mesh& source, const Mesh& target, const ModelParams& params, double alpha) {
  FeatureField local = extract_features(source, params);
  LatentCode z = encode_deformation(source, target, params);
  return generate(source, assemble(local, scaled(z, alpha)), params).mesh;
}

/// Frames at alpha = k / (steps - 1); local features and the code are computed once.
inline std::vector<Mesh> interpolation_sequence(const Mesh& source, const Mesh& target, const ModelParams& params,
                                                int steps) {
  if (steps < 2) throw Error(ErrorKind::Config, "interpolation_sequence: steps must be at least 2");
  FeatureField local = extract_features(source, params);
  LatentCode z = encode_deformation(source, target, params);
  std::vector<Mesh> frames;
  for (int k = 0; k < steps; ++k) {
    double alpha = static_cast<double>(k) / (steps - 1);
    frames.push_back(generate(source, assemble(local, scaled(z, alpha)), params).mesh);
  }
  return frames;
}

inline Mesh partial_deform(const Mesh& source, const Mesh& target, const Mask& mask, const ModelParams& params,
                           double alpha) {
  FeatureField local = extract_features(source, params);
  LatentCode z = encode_deformation(source, target, params);
  return generate(source, assemble(local, scaled(z, alpha), mask.weights), params).mesh;
}

inline MixPart part_from_target(const Mesh& source, const Mesh& target, Mask mask, const ModelParams& params) {
  return MixPart{encode_deformation(source, target, params), std::move(mask)};
}

inline Mesh mix(const Mesh& source, const std::vector<MixPart>& parts, const ModelParams& params, double alpha) {
  FeatureField local = extract_features(source, params);
  return generate(source, mix_field(local, parts, alpha, params.config.codeDim), params).mesh;
}

inline LatentCode mean_code(const std::vector<LatentCode>& codes) {
  if (codes.empty()) throw Error(ErrorKind::Config, "mean of an empty code list");
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(codes.front().size());
  for (const auto& c : codes) sum += c.z;
  return LatentCode{sum / static_cast<double>(codes.size())};
}

inline Mesh mean_pose(const Mesh& source, const std::vector<Mesh>& targets, const std::optional<Mask>& mask,
                      const ModelParams& params) {
  if (targets.empty()) throw Error(ErrorKind::Config, "mean_pose: empty target list");
  std::vector<LatentCode> codes;
  for (const auto& t : targets) codes.push_back(encode_deformation(source, t, params));
  LatentCode zbar = mean_code(codes);
  FeatureField local = extract_features(source, params);
  std::optional<Eigen::VectorXd> w;
  if (mask) w = mask->weights;
  return generate(source, assemble(local, zbar, w), params).mesh;
}

struct PrincipalComponent {
  double variance = 0.0;
  LatentCode direction;  // unit norm
};

/// Principal directions of the centered code matrix (plain mean, 1/J normalization), descending
/// variance. All-equal codes give zero variances and the coordinate axes as directions.
inline std::vector<PrincipalComponent> pca_codes(const std::vector<LatentCode>& codes, int components) {
  if (codes.empty()) throw Error(ErrorKind::Config, "pca: no codes");
  const int J = static_cast<int>(codes.size());
  const int r = static_cast<int>(codes.front().size());
  if (components < 1 || components > std::min(J, r))
    throw Error(ErrorKind::Config, "pca: components must be in [1, min(#codes, code size)]");
  Eigen::MatrixXd X(J, r);
  for (int j = 0; j < J; ++j) X.row(j) = codes[j].z;
  X.rowwise() -= X.colwise().mean();
  std::vector<PrincipalComponent> out;
  if (X.cwiseAbs().maxCoeff() == 0.0) {
    for (int k = 0; k < components; ++k)
      out.push_back({0.0, LatentCode{Eigen::RowVectorXd::Unit(r, k)}});
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  for (int k = 0; k < components; ++k) {
    double s = k < svd.singularValues().size() ? svd.singularValues()[k] : 0.0;
    Eigen::RowVectorXd dir = svd.matrixV().col(k).transpose();
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir[arg] < 0) dir = -dir;
    out.push_back({s * s / J, LatentCode{dir}});
  }
  return out;
}

inline std::vector<PrincipalComponent> pca_poses(const Mesh& source, const std::vector<Mesh>& targets,
                                                 const ModelParams& params, int components) {
  if (static_cast<int>(targets.size()) < components)
    throw Error(ErrorKind::Config, "pca_poses: fewer targets than components");
  std::vector<LatentCode> codes;
  for (const auto& t : targets) codes.push_back(encode_deformation(source, t, params));
  return pca_codes(codes, components);
}

/// Applies the deformation neutralB -> poseB to sourceA (same connectivity required).
inline Mesh transfer(const Mesh& sourceA, const Mesh& neutralB, const Mesh& poseB, const ModelParams& params,
                     const std::optional<Mask>& mask, double alpha) {
  if (sourceA.faces() != neutralB.faces() || neutralB.faces() != poseB.faces())
    throw Error(ErrorKind::Mesh, "transfer: meshes do not share connectivity");
  LatentCode z = encode_deformation(neutralB, poseB, params);
  FeatureField local = extract_features(sourceA, params);
  std::optional<Eigen::VectorXd> w;
  if (mask) w = mask->weights;
  return generate(sourceA, assemble(local, scaled(z, alpha), w), params).mesh;
}

// ---------------------------------------------------------------------------
// Locality diagnostic
// ---------------------------------------------------------------------------

struct LocalityBucket {
  int distance = 0;  // -1 collects every face when the mask is empty
  int faces = 0;
  double jacobianDeviation = 0.0;  // mean |J_t - Pi_t|_F of the restricted predicted Jacobians
  double gradientDeviation = 0.0;  // mean |grad_t v|_F of the reconstructed displacement
};

/// Per-face |J_t - Pi_t|_F and |grad_t v|_F of a generated deformation.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> deformation_deviation(const MeshGeometry& geom, const Generated& g) {
  JacobianField dj = g.jacobians - geom.projectors;
  JacobianField gv = geom.poisson->gradient_of(g.displacement);
  return {dj.rowwise().norm(), gv.rowwise().norm()};
}

inline std::vector<LocalityBucket> locality_profile(const Mesh& source, const Mesh& target, const Mask& mask,
                                                    const ModelParams& params, double alpha = 1.0) {
  FeatureField local = extract_features(source, params);
  LatentCode z = encode_deformation(source, target, params);
  Generated g = generate(source, assemble(local, scaled(z, alpha), mask.weights), params);
  auto geom = geometry_for(source, params.config);
  auto [dj, gv] = deformation_deviation(*geom, g);

  std::vector<int> seeds = mask.face_indices();
  std::vector<int> dist = seeds.empty() ? std::vector<int>(source.num_faces(), -1) : face_graph_distance(source, seeds);
  std::map<int, LocalityBucket> buckets;
  for (int t = 0; t < source.num_faces(); ++t) {
    auto& b = buckets[dist[t]];
    b.distance = dist[t];
    ++b.faces;
    b.jacobianDeviation += dj[t];
    b.gradientDeviation += gv[t];
  }
  std::vector<LocalityBucket> out;
  for (auto& [d, b] : buckets) {
    b.jacobianDeviation /= b.faces;
    b.gradientDeviation /= b.faces;
    out.push_back(b);
  }
  return out;
}

}  // namespace pandas
