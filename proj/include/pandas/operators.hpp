#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "pandas/mesh.hpp"

namespace pandas {

using SparseOperator = Eigen::SparseMatrix<double>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// One row per face, the 3x3 Jacobian stored row-major: J_t(r, c) = row(t)[3 * r + c].
using JacobianField = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;

namespace detail {

inline SparseOperator from_triplets(int rows, int cols, const std::vector<Eigen::Triplet<double>>& trips) {
  SparseOperator op(rows, cols);
  op.setFromTriplets(trips.begin(), trips.end());
  op.prune([](Eigen::Index, Eigen::Index, double v) { return std::abs(v) >= 1e-300; });
  op.makeCompressed();
  return op;
}

inline double cot(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return a.dot(b) / a.cross(b).norm(); }

}  // namespace detail

/// Cotangent Laplacian, positive semi-definite convention: L_ij = -(cot a_ij + cot b_ij) / 2.
inline SparseOperator cotangent_laplacian(const Mesh& mesh) {
  const auto& F = mesh.faces();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(12 * F.rows());
  for (int t = 0; t < F.rows(); ++t) {
    for (int k = 0; k < 3; ++k) {
      int i = F(t, k), j = F(t, (k + 1) % 3), o = F(t, (k + 2) % 3);
      Eigen::Vector3d po = mesh.vertex(o);
      double w = 0.5 * detail::cot(mesh.vertex(i) - po, mesh.vertex(j) - po);
      trips.emplace_back(i, j, -w);
      trips.emplace_back(j, i, -w);
      trips.emplace_back(i, i, w);
      trips.emplace_back(j, j, w);
    }
  }
  return detail::from_triplets(mesh.num_vertices(), mesh.num_vertices(), trips);
}

/// Barycentric lumped mass: each vertex receives a third of its incident face areas.
inline Eigen::VectorXd lumped_mass_diagonal(const Mesh& mesh) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(mesh.num_vertices());
  FaceScalars areas = face_areas(mesh);
  for (int t = 0; t < mesh.num_faces(); ++t)
    for (int k = 0; k < 3; ++k) mass[mesh.faces()(t, k)] += areas[t] / 3.0;
  return mass;
}

inline SparseOperator lumped_mass(const Mesh& mesh) {
  Eigen::VectorXd d = lumped_mass_diagonal(mesh);
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < d.size(); ++i) trips.emplace_back(i, i, d[i]);
  return detail::from_triplets(mesh.num_vertices(), mesh.num_vertices(), trips);
}

/// 3m x n operator; rows 3t..3t+2 give the gradient of the piecewise-linear interpolant on face t.
/// Uses grad(phi_i) = n x e_i / (2A) with e_i the CCW edge opposite vertex i.
inline SparseOperator face_gradient(const Mesh& mesh) {
  const auto& F = mesh.faces();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * F.rows());
  for (int t = 0; t < F.rows(); ++t) {
    Eigen::Vector3d p[3] = {mesh.vertex(F(t, 0)), mesh.vertex(F(t, 1)), mesh.vertex(F(t, 2))};
    Eigen::Vector3d c = (p[1] - p[0]).cross(p[2] - p[0]);
    double twice_area = c.norm();
    Eigen::Vector3d n = c / twice_area;
    Eigen::Vector3d g[3];
    for (int k = 1; k < 3; ++k) g[k] = n.cross(p[(k + 2) % 3] - p[(k + 1) % 3]) / twice_area;
    g[0] = -(g[1] + g[2]);
    for (int k = 0; k < 3; ++k)
      for (int d = 0; d < 3; ++d) trips.emplace_back(3 * t + d, F(t, k), g[k][d]);
  }
  return detail::from_triplets(3 * mesh.num_faces(), mesh.num_vertices(), trips);
}

/// Face areas repeated three times (the 3m x 3m weight matching face_gradient rows).
inline Eigen::VectorXd gradient_weights(const Mesh& mesh) {
  FaceScalars a = face_areas(mesh);
  Eigen::VectorXd w(3 * a.size());
  for (int t = 0; t < a.size(); ++t) w.segment<3>(3 * t).setConstant(a[t]);
  return w;
}

/// m x n incident-vertex averaging.
inline SparseOperator vertex_to_face_average(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int t = 0; t < mesh.num_faces(); ++t)
    for (int k = 0; k < 3; ++k) trips.emplace_back(t, mesh.faces()(t, k), 1.0 / 3.0);
  return detail::from_triplets(mesh.num_faces(), mesh.num_vertices(), trips);
}

inline void write_triplets(const std::string& path, const SparseOperator& op) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out.precision(17);
  out << op.rows() << ' ' << op.cols() << '\n';
  for (int k = 0; k < op.outerSize(); ++k)
    for (SparseOperator::InnerIterator it(op, k); it; ++it) out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

// ---------------------------------------------------------------------------
// Generalized eigenbasis L e = lambda M e
// ---------------------------------------------------------------------------

struct EigenBasis {
  Eigen::VectorXd values;       // ascending, values[0] == 0
  Eigen::MatrixXd vectors;      // n x K; column 0 is the constant 1, the rest M-orthonormal
  Eigen::MatrixXd faceVectors;  // m x K, incident-vertex mean of `vectors`
  Eigen::VectorXd massNorms2;   // e_k^T M e_k per column
  int count() const { return static_cast<int>(values.size()); }
};

struct EigenOptions {
  int denseThreshold = 600;
  double tolerance = 1e-10;
  int maxIterations = 500;
};

namespace detail {

inline void fix_signs(Eigen::MatrixXd& vectors) {
  for (int k = 0; k < vectors.cols(); ++k) {
    Eigen::Index arg = 0;
    vectors.col(k).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, k) < 0) vectors.col(k) *= -1.0;
  }
}

inline double inf_norm(const SparseOperator& A) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseOperator::InnerIterator it(A, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return rows.maxCoeff();
}

inline double max_residual(const SparseOperator& L, const Eigen::VectorXd& mass, const Eigen::VectorXd& values,
                           const Eigen::MatrixXd& vectors, int count) {
  Eigen::MatrixXd R = L * vectors.leftCols(count) - mass.asDiagonal() * vectors.leftCols(count) * values.head(count).asDiagonal();
  return R.cwiseAbs().maxCoeff();
}

/// Shift-invert block iteration with Rayleigh-Ritz on (L, M).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> iterative_eigen(const SparseOperator& L, const Eigen::VectorXd& mass,
                                                                   int K, const EigenOptions& opts) {
  const int n = static_cast<int>(L.rows());
  const int p = std::min(n, 2 * K + 8);
  const double shift = 1e-6 * L.diagonal().sum() / mass.sum();
  SparseOperator A = L;
  for (int i = 0; i < n; ++i) A.coeffRef(i, i) += shift * mass[i];
  Eigen::SimplicialLDLT<SparseOperator> solver(A);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::Solver, "eigenbasis: shifted factorization failed");

  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::MatrixXd X(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = unif(rng);
  X.col(0).setOnes();

  const double scale = inf_norm(L);
  Eigen::VectorXd values;
  double residual = 0.0;
  for (int iter = 0; iter < opts.maxIterations; ++iter) {
    Eigen::MatrixXd Y = solver.solve(mass.asDiagonal() * X);
    // M-orthonormalize through a QR of M^{1/2} Y.
    Eigen::VectorXd sqrt_mass = mass.cwiseSqrt();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(sqrt_mass.asDiagonal() * Y);
    Y = sqrt_mass.cwiseInverse().asDiagonal() * (qr.householderQ() * Eigen::MatrixXd::Identity(n, p));
    Eigen::MatrixXd Lr = Y.transpose() * (L * Y);
    Lr = 0.5 * (Lr + Lr.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(Lr);
    if (ritz.info() != Eigen::Success) throw Error(ErrorKind::Solver, "eigenbasis: Rayleigh-Ritz step failed");
    X = Y * ritz.eigenvectors();
    values = ritz.eigenvalues();
    residual = max_residual(L, mass, values, X, K);
    if (residual <= opts.tolerance * scale) return {values.head(K), X.leftCols(K)};
  }
  throw Error(ErrorKind::Solver, "eigenbasis did not converge: residual " + std::to_string(residual) + " after " +
                                     std::to_string(opts.maxIterations) + " iterations");
}

}  // namespace detail

inline EigenBasis eigenbasis(const Mesh& mesh, int K, const EigenOptions& opts = {}) {
  const int n = mesh.num_vertices();
  if (K < 1 || K > n) throw Error(ErrorKind::Shape, "eigenbasis: K must be in [1, n]");
  SparseOperator L = cotangent_laplacian(mesh);
  Eigen::VectorXd mass = lumped_mass_diagonal(mesh);

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  if (n <= opts.denseThreshold) {
    Eigen::MatrixXd Ld = Eigen::MatrixXd(L);
    Eigen::MatrixXd Md = mass.asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Ld, Md);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::Solver, "eigenbasis: dense solver failed");
    values = es.eigenvalues().head(K);
    vectors = es.eigenvectors().leftCols(K);
  } else {
    std::tie(values, vectors) = detail::iterative_eigen(L, mass, K, opts);
  }
  // Kernel convention: exact constant column, zero eigenvalue.
  values[0] = 0.0;
  vectors.col(0).setOnes();
  for (int k = 1; k < K; ++k) {
    double norm2 = vectors.col(k).dot(mass.asDiagonal() * vectors.col(k));
    vectors.col(k) /= std::sqrt(norm2);
  }
  detail::fix_signs(vectors);

  EigenBasis basis;
  basis.values = values;
  basis.vectors = std::move(vectors);
  basis.faceVectors = vertex_to_face_average(mesh) * basis.vectors;
  basis.massNorms2.resize(K);
  for (int k = 0; k < K; ++k) basis.massNorms2[k] = basis.vectors.col(k).dot(mass.asDiagonal() * basis.vectors.col(k));
  return basis;
}

// ---------------------------------------------------------------------------
// Jacobian restriction and Poisson reconstruction
// ---------------------------------------------------------------------------

/// Tangent-plane projectors I - n n^T, one per face, same layout as JacobianField.
inline JacobianField tangent_projectors(const Mesh& mesh) {
  FaceVectors normals = face_normals(mesh);
  JacobianField P(mesh.num_faces(), 9);
  for (int t = 0; t < mesh.num_faces(); ++t) {
    Eigen::Vector3d n = normals.row(t).transpose();
    Eigen::Matrix<double, 3, 3, Eigen::RowMajor> proj = Eigen::Matrix3d::Identity() - n * n.transpose();
    P.row(t) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(proj.data());
  }
  return P;
}

inline JacobianField restrict_jacobian(const JacobianField& projectors, const JacobianField& raw) {
  if (raw.rows() != projectors.rows()) throw Error(ErrorKind::Shape, "restrict_jacobian: face count mismatch");
  using M3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
  JacobianField out(raw.rows(), 9);
  for (int t = 0; t < raw.rows(); ++t) {
    Eigen::Map<const M3> J(raw.row(t).data());
    Eigen::Map<const M3> P(projectors.row(t).data());
    M3 r = J * P;
    out.row(t) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(r.data());
  }
  return out;
}

inline JacobianField restrict_jacobian(const Mesh& mesh, const JacobianField& raw) {
  return restrict_jacobian(tangent_projectors(mesh), raw);
}

/// Least-squares reconstruction of a displacement field from a per-face Jacobian field:
/// minimizes sum_t Area(t) |grad_t v - J_t|_F^2 under the gauge sum_i M_ii v_i = 0.
/// The factorization is built once; solve() is const and safe for concurrent use.
class PoissonSolver {
 public:
  explicit PoissonSolver(const Mesh& mesh)
      : gradient_(face_gradient(mesh)), weights_(gradient_weights(mesh)), mass_(lumped_mass_diagonal(mesh)) {
    SparseOperator L = cotangent_laplacian(mesh);
    const int n = static_cast<int>(L.rows());
    // Pin vertex 0 to remove the constant nullspace; the gauge is applied afterwards.
    reduced_ = L.bottomRightCorner(n - 1, n - 1);
    if (n > 1) {
      solver_.compute(reduced_);
      if (solver_.info() != Eigen::Success)
        throw Error(ErrorKind::Solver, "poisson: factorization failed (singular system, disconnected mesh?)");
    }
  }

  int num_vertices() const { return static_cast<int>(mass_.size()); }
  int num_faces() const { return static_cast<int>(gradient_.rows() / 3); }
  const SparseOperator& gradient() const { return gradient_; }
  const Eigen::VectorXd& mass() const { return mass_; }

  /// n x 3 displacement.
  Matrix solve(const JacobianField& J) const {
    check(J.rows());
    Matrix rhs = gradient_.transpose() * (weights_.asDiagonal() * stack(J));
    return gauge(pinned_solve(rhs));
  }

  /// Adjoint of solve(): maps dLoss/dv (n x 3) to dLoss/dJ (m x 9).
  JacobianField solve_adjoint(const Matrix& v_bar) const {
    Eigen::RowVector3d total = v_bar.colwise().sum();
    Matrix projected = v_bar - (mass_ / mass_.sum()) * total;
    Matrix w = pinned_solve(projected);
    return unstack(weights_.asDiagonal() * (gradient_ * w));
  }

  /// grad_t of each coordinate of v, as a Jacobian field (row c of J_t is grad v^c).
  JacobianField gradient_of(const Matrix& v) const { return unstack(gradient_ * v); }

 private:
  void check(Eigen::Index faces) const {
    if (faces != num_faces()) throw Error(ErrorKind::Shape, "poisson: Jacobian field not aligned with mesh faces");
  }

  // 3m x 3 layout: entry (3t + d, c) = J_t(c, d).
  static Matrix stack(const JacobianField& J) {
    Matrix S(3 * J.rows(), 3);
    for (Eigen::Index t = 0; t < J.rows(); ++t)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) S(3 * t + d, c) = J(t, 3 * c + d);
    return S;
  }

  static JacobianField unstack(const Matrix& S) {
    JacobianField J(S.rows() / 3, 9);
    for (Eigen::Index t = 0; t < J.rows(); ++t)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) J(t, 3 * c + d) = S(3 * t + d, c);
    return J;
  }

  Matrix pinned_solve(const Matrix& rhs) const {
    const Eigen::Index n = rhs.rows();
    Matrix out = Matrix::Zero(n, 3);
    if (n > 1) {
      Eigen::MatrixXd sol = solver_.solve(Eigen::MatrixXd(rhs.bottomRows(n - 1)));
      if (solver_.info() != Eigen::Success) throw Error(ErrorKind::Solver, "poisson: back-substitution failed");
      out.bottomRows(n - 1) = sol;
    }
    return out;
  }

  Matrix gauge(Matrix v) const {
    Eigen::RowVector3d mean = (mass_.transpose() * v) / mass_.sum();
    v.rowwise() -= mean;
    return v;
  }

  SparseOperator gradient_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd mass_;
  SparseOperator reduced_;
  Eigen::SimplicialLDLT<SparseOperator> solver_;
};

// ---------------------------------------------------------------------------
// Per-mesh cache
// ---------------------------------------------------------------------------

/// Every derived quantity the model needs for one mesh. Immutable once built.
struct MeshGeometry {
  Mesh mesh;
  FaceScalars areas;
  double totalArea = 0.0;
  FaceVectors normals;
  Vertices vertexNormals;
  JacobianField projectors;
  SparseOperator faceAverage;
  Eigen::VectorXd mass;
  EigenBasis basis;
  std::shared_ptr<const PoissonSolver> poisson;
  /// E1, E2 edge vectors of each face, row t = (v1 - v0, v2 - v0).
  Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor> edges;
};

inline std::shared_ptr<const MeshGeometry> build_geometry(const Mesh& mesh, int K, const EigenOptions& opts = {}) {
  auto g = std::make_shared<MeshGeometry>();
  g->mesh = mesh;
  g->areas = face_areas(mesh);
  g->totalArea = g->areas.sum();
  g->normals = face_normals(mesh);
  g->vertexNormals = vertex_normals(mesh);
  g->projectors = tangent_projectors(mesh);
  g->faceAverage = vertex_to_face_average(mesh);
  g->mass = lumped_mass_diagonal(mesh);
  g->basis = eigenbasis(mesh, std::min(K, mesh.num_vertices()), opts);
  g->poisson = std::make_shared<PoissonSolver>(mesh);
  g->edges.resize(mesh.num_faces(), 6);
  for (int t = 0; t < mesh.num_faces(); ++t) {
    Eigen::Vector3d a = mesh.vertex(mesh.faces()(t, 0));
    g->edges.row(t).head<3>() = (mesh.vertex(mesh.faces()(t, 1)) - a).transpose();
    g->edges.row(t).tail<3>() = (mesh.vertex(mesh.faces()(t, 2)) - a).transpose();
  }
  return g;
}

/// Keyed by (mesh id, content hash, K). Entries are immutable; lookups are mutex-guarded so the cache
/// may be shared by concurrent readers.
class GeometryCache {
 public:
  std::shared_ptr<const MeshGeometry> get(const Mesh& mesh, int K) {
    Key key{mesh.id(), mesh.content_hash(), K};
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    auto built = build_geometry(mesh, K);
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.emplace(key, std::move(built)).first->second;
  }

  void clear() {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.clear();
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  using Key = std::tuple<std::string, std::uint64_t, int>;
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const MeshGeometry>> entries_;
};

inline GeometryCache& geometry_cache() {
  static GeometryCache cache;
  return cache;
}

}  // namespace pandas
