#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pandas/autodiff.hpp"
#include "pandas/operators.hpp"

namespace pandas::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

struct AdamOptions {
  double learningRate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Named parameters plus shared Adam step count. std::map keeps references stable and
/// iteration order deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Matrix value, std::vector<int> shape = {}) {
    if (params_.count(name)) throw Error(ErrorKind::Config, "duplicate parameter '" + name + "'");
    Parameter p;
    p.shape = shape.empty() ? std::vector<int>{static_cast<int>(value.rows()), static_cast<int>(value.cols())} : shape;
    p.value = std::move(value);
    p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.moment1 = Matrix::Zero(p.value.rows(), p.value.cols());
    p.moment2 = Matrix::Zero(p.value.rows(), p.value.cols());
    return params_.emplace(name, std::move(p)).first->second;
  }

  Parameter& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorKind::Config, "missing parameter '" + name + "'");
    return it->second;
  }
  const Parameter& at(const std::string& name) const { return const_cast<ParamStore*>(this)->at(name); }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter>& items() { return params_; }
  const std::map<std::string, Parameter>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  long step() const { return step_; }
  void set_step(long s) { step_ = s; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  /// Bias-corrected Adam update over every parameter; clears gradients afterwards.
  /// Parameters that received no gradient since the last step are an error.
  void adam_step(const AdamOptions& opt) {
    for (const auto& [name, p] : params_)
      if (!p.hasGrad) throw Error(ErrorKind::Training, "adam_step: missing gradient for '" + name + "'");
    ++step_;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_));
    for (auto& [_, p] : params_) {
      p.moment1 = opt.beta1 * p.moment1 + (1.0 - opt.beta1) * p.grad;
      p.moment2 = opt.beta2 * p.moment2 + (1.0 - opt.beta2) * p.grad.cwiseAbs2();
      p.value.array() -= opt.learningRate * (p.moment1.array() / c1) / ((p.moment2.array() / c2).sqrt() + opt.epsilon);
    }
    zero_grad();
  }

 private:
  std::map<std::string, Parameter> params_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

inline Matrix xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> unif(-bound, bound);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = unif(rng);
  return w;
}

inline void add_linear(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                       bool zero = false) {
  store.add(name + ".W", zero ? Matrix(Matrix::Zero(in, out)) : xavier_uniform(in, out, rng));
  store.add(name + ".b", Matrix::Zero(1, out), {out});
}

/// Binds parameters onto a tape: as gradient-tracked leaves when built from a mutable store,
/// as constants when built from a const one (inference never touches the store).
class Bind {
 public:
  explicit Bind(ParamStore& store) : mutable_(&store), store_(&store) {}
  explicit Bind(const ParamStore& store) : store_(&store) {}

  Var operator()(Tape& tape, const std::string& name) const {
    if (mutable_) return tape.param(mutable_->at(name));
    return tape.constant(store_->at(name).value);
  }
  const Parameter& at(const std::string& name) const { return store_->at(name); }
  bool trainable() const { return mutable_ != nullptr; }

 private:
  ParamStore* mutable_ = nullptr;
  const ParamStore* store_;
};

inline Var linear(Tape& tape, const Var& x, const Bind& bind, const std::string& name) {
  return ad::add(ad::matmul(x, bind(tape, name + ".W")), bind(tape, name + ".b"));
}

/// widths = {in, h1, ..., out}; layers named prefix.0, prefix.1, ...
inline void add_mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& widths, std::mt19937_64& rng,
                    bool zeroLast = false) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    add_linear(store, prefix + "." + std::to_string(i), widths[i], widths[i + 1], rng,
               zeroLast && i + 2 == widths.size());
}

/// Affine layers with tanh between them; the last layer stays affine.
inline Var mlp_forward(Tape& tape, Var x, const Bind& bind, const std::string& prefix, int layers) {
  for (int i = 0; i < layers; ++i) {
    const std::string name = prefix + "." + std::to_string(i);
    const Parameter& w = bind.at(name + ".W");
    if (w.value.rows() != x.cols())
      throw Error(ErrorKind::Shape, "mlp '" + name + "': expects width " + std::to_string(w.value.rows()) + ", got " +
                                        std::to_string(x.cols()));
    x = linear(tape, x, bind, name);
    if (i + 1 < layers) x = ad::tanh(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Spectral heat diffusion
// ---------------------------------------------------------------------------

/// out_j = Phi diag(w_k exp(-lambda_k t_j)) Phi^T M x_j with t_j = exp(logTimes_j) and w_k = 1 / |e_k|_M^2,
/// so t -> 0 is the M-orthogonal projection onto span(Phi).
inline Var diffusion(const Var& x, const Var& logTimes, std::shared_ptr<const MeshGeometry> geom) {
  const EigenBasis& basis = geom->basis;
  if (x.rows() != basis.vectors.rows()) throw Error(ErrorKind::Shape, "diffusion: field is not per-vertex");
  if (logTimes.rows() != 1 || logTimes.cols() != x.cols())
    throw Error(ErrorKind::Shape, "diffusion: one time per channel required");
  Tape& t = *x.tape();
  const Eigen::MatrixXd& phi = basis.vectors;
  const Eigen::ArrayXd& lambda = basis.values.array();
  Eigen::ArrayXd wk = basis.massNorms2.array().inverse();

  Eigen::MatrixXd spectral = phi.transpose() * (geom->mass.asDiagonal() * x.value());  // K x c
  Eigen::ArrayXd times = logTimes.value().row(0).transpose().array().exp();
  Eigen::MatrixXd decay = (-(lambda.matrix() * times.matrix().transpose()).array()).exp().matrix();  // K x c
  Eigen::MatrixXd coeff = (decay.array() * spectral.array()).colwise() * wk;
  Matrix out = phi * coeff;

  return t.push(std::move(out), t.needs(x) || t.needs(logTimes),
                [ix = x.id(), it = logTimes.id(), geom, spectral, decay, times, wk](Tape& t, int self) {
                  const Eigen::MatrixXd& phi = geom->basis.vectors;
                  Eigen::MatrixXd projected = phi.transpose() * t.node(self).grad;  // K x c
                  Eigen::MatrixXd coeff_bar = projected.array().colwise() * wk;
                  if (t.node(ix).requiresGrad)
                    t.grad_of(ix).noalias() += geom->mass.asDiagonal() * (phi * (decay.array() * coeff_bar.array()).matrix());
                  if (t.node(it).requiresGrad) {
                    // d decay_kj / d t_j = -lambda_k decay_kj; d t_j / d logt_j = t_j.
                    Eigen::ArrayXd dt = ((coeff_bar.array() * spectral.array() * decay.array()).colwise() *
                                         (-geom->basis.values.array()))
                                            .colwise()
                                            .sum()
                                            .transpose();
                    t.grad_of(it).row(0) += (dt * times).matrix().transpose();
                  }
                });
}

// ---------------------------------------------------------------------------
// Geometry ops
// ---------------------------------------------------------------------------

/// Per-face J_t * Pi_t with the source tangent projectors.
inline Var restrict_jacobian(const Var& raw, std::shared_ptr<const MeshGeometry> geom) {
  Tape& t = *raw.tape();
  Matrix out = pandas::restrict_jacobian(geom->projectors, raw.value());
  return t.push(std::move(out), t.needs(raw), [ir = raw.id(), geom](Tape& t, int self) {
    // Pi_t is symmetric, so the adjoint of right-multiplication is right-multiplication.
    JacobianField g = t.node(self).grad;
    t.grad_of(ir) += pandas::restrict_jacobian(geom->projectors, g);
  });
}

/// Differentiable Poisson reconstruction: forward matches PoissonSolver::solve, backward runs the
/// adjoint system.
inline Var poisson_solve(const Var& J, std::shared_ptr<const MeshGeometry> geom) {
  if (J.cols() != 9) throw Error(ErrorKind::Shape, "poisson_solve: Jacobian field must be m x 9");
  Tape& t = *J.tape();
  Matrix v = geom->poisson->solve(J.value());
  return t.push(std::move(v), t.needs(J), [ij = J.id(), geom](Tape& t, int self) {
    t.grad_of(ij) += geom->poisson->solve_adjoint(t.node(self).grad);
  });
}

/// Per-face normals from the Jacobian images of the source edges, and the counts of faces skipped
/// because the cross product vanished.
struct JacobianNormals {
  Vertices normals;
  Eigen::VectorXd crossNorms;
  std::vector<char> skipped;
  int skippedCount = 0;
};

inline JacobianNormals jacobian_normals(const JacobianField& J, const MeshGeometry& source) {
  using M3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
  const Eigen::Index m = J.rows();
  JacobianNormals out;
  out.normals = Vertices::Zero(m, 3);
  out.crossNorms.resize(m);
  out.skipped.assign(m, 0);
  for (Eigen::Index f = 0; f < m; ++f) {
    Eigen::Map<const M3> Jt(J.row(f).data());
    Eigen::Vector3d u = Jt * source.edges.row(f).head<3>().transpose();
    Eigen::Vector3d w = Jt * source.edges.row(f).tail<3>().transpose();
    Eigen::Vector3d c = u.cross(w);
    double len = c.norm();
    out.crossNorms[f] = len;
    if (len < 1e-12) {
      out.skipped[f] = 1;
      ++out.skippedCount;
      continue;
    }
    out.normals.row(f) = (c / len).transpose();
  }
  return out;
}

/// (1/m) sum_t [1 - n_target_t . normalize(J_t E1 x J_t E2)]; faces with a vanishing cross product
/// contribute nothing. `skipped` receives their count when non-null.
inline Var normal_loss(const Var& J, std::shared_ptr<const MeshGeometry> source, const Vertices& targetNormals,
                       int* skipped = nullptr) {
  if (J.rows() != targetNormals.rows()) throw Error(ErrorKind::Shape, "normal_loss: face count mismatch");
  Tape& t = *J.tape();
  JacobianNormals jn = jacobian_normals(J.value(), *source);
  if (skipped) *skipped = jn.skippedCount;
  const Eigen::Index m = J.rows();
  double loss = 0.0;
  for (Eigen::Index f = 0; f < m; ++f)
    if (!jn.skipped[f]) loss += 1.0 - targetNormals.row(f).dot(jn.normals.row(f));
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(m);
  return t.push(std::move(out), t.needs(J), [ij = J.id(), source, targetNormals, jn = std::move(jn)](Tape& t, int self) {
    using M3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
    const Matrix& Jv = t.node(ij).value;
    const Eigen::Index m = Jv.rows();
    const double scale = t.node(self).grad(0, 0) / static_cast<double>(m);
    Matrix& g = t.grad_of(ij);
    for (Eigen::Index f = 0; f < m; ++f) {
      if (jn.skipped[f]) continue;
      Eigen::Map<const M3> Jt(Jv.row(f).data());
      Eigen::Vector3d e1 = source->edges.row(f).head<3>().transpose();
      Eigen::Vector3d e2 = source->edges.row(f).tail<3>().transpose();
      Eigen::Vector3d u = Jt * e1, w = Jt * e2;
      Eigen::Vector3d n = jn.normals.row(f).transpose();
      Eigen::Vector3d a = targetNormals.row(f).transpose();
      // d(-a.n)/dc with n = c/|c|.
      Eigen::Vector3d c_bar = -scale * (a - a.dot(n) * n) / jn.crossNorms[f];
      Eigen::Vector3d u_bar = w.cross(c_bar);
      Eigen::Vector3d w_bar = c_bar.cross(u);
      M3 dJ = u_bar * e1.transpose() + w_bar * e2.transpose();
      g.row(f) += Eigen::Map<const Eigen::Matrix<double, 1, 9>>(dJ.data());
    }
  });
}

// ---------------------------------------------------------------------------
// "PNDS" weight container
// ---------------------------------------------------------------------------

inline constexpr char kMagic[4] = {'P', 'N', 'D', 'S'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error(ErrorKind::Parse, "weight file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

/// Layout: magic, u32 version, u32 header length, header bytes (JSON), then records of
/// (u32 name length, name, u32 rank, u64 dims[rank], f64 data[prod dims]) until end of file.
/// All integers and reals little-endian.
inline void write_container(std::ostream& out, const std::string& header, const std::vector<TensorRecord>& records) {
  out.write(kMagic, 4);
  detail::write_le<std::uint32_t>(out, kFormatVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& r : records) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) detail::write_le<std::uint64_t>(out, d);
    for (double x : r.data) detail::write_le<double>(out, x);
  }
}

inline std::pair<std::string, std::vector<TensorRecord>> read_container(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorKind::Parse, "not a PNDS weight file");
  auto version = detail::read_le<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw Error(ErrorKind::Parse, "unsupported PNDS format version " + std::to_string(version));
  auto header_len = detail::read_le<std::uint32_t>(in);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) throw Error(ErrorKind::Parse, "weight file truncated");
  std::vector<TensorRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    TensorRecord r;
    auto name_len = detail::read_le<std::uint32_t>(in);
    r.name.resize(name_len);
    if (!in.read(r.name.data(), name_len)) throw Error(ErrorKind::Parse, "weight file truncated");
    auto rank = detail::read_le<std::uint32_t>(in);
    if (rank > 8) throw Error(ErrorKind::Parse, "implausible tensor rank in weight file");
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.dims.push_back(detail::read_le<std::uint64_t>(in));
      count *= r.dims.back();
    }
    r.data.resize(count);
    for (auto& x : r.data) x = detail::read_le<double>(in);
    records.push_back(std::move(r));
  }
  return {header, records};
}

inline TensorRecord to_record(const std::string& name, const std::vector<int>& shape, const Matrix& m) {
  TensorRecord r;
  r.name = name;
  for (int d : shape) r.dims.push_back(static_cast<std::uint64_t>(d));
  r.data.assign(m.data(), m.data() + m.size());
  return r;
}

}  // namespace pandas::nn
