#pragma once

#include <filesystem>
#include <numeric>
#include <random>
#include <string>

#include "pandas/training.hpp"

namespace pandas::testing {

inline Mesh unit_right_triangle() {
  Vertices v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  Faces f(1, 3);
  f << 0, 1, 2;
  return Mesh(v, f, "tri");
}

inline Mesh equilateral_triangle() {
  Vertices v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0.5, std::sqrt(3.0) / 2, 0;
  Faces f(1, 3);
  f << 0, 1, 2;
  return Mesh(v, f, "equilateral");
}

inline Mesh unit_square() {
  Vertices v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
  Faces f(2, 3);
  f << 0, 1, 2, 0, 2, 3;
  return Mesh(v, f, "square");
}

/// Closed tapered box bar at reduced resolution.
inline Mesh small_bar(int nx = 8, int ny = 2, int nz = 2) {
  BarShape s;
  s.nx = nx;
  s.ny = ny;
  s.nz = nz;
  return make_bar(s, "small_bar");
}

inline Mesh small_sheet(int n = 6) {
  SheetShape s;
  s.n = n;
  return make_sheet(s, "small_sheet");
}

/// Vertex positions perturbed by uniform noise of the given amplitude.
inline Mesh jittered(const Mesh& m, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Vertices v = m.vertices();
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += u(rng);
  return m.with_vertices(v);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = u(rng);
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pandas_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rms(const Matrix& a) { return std::sqrt(a.squaredNorm() / static_cast<double>(a.size())); }

}  // namespace pandas::testing

namespace pandas::testing {

/// A model small enough for exhaustive tests.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.localDim = 6;
  c.codeDim = 5;
  c.frequencies = 4;
  c.blocks = 1;
  c.width = 8;
  c.encoderChannels = 4;
  c.generatorHidden = 10;
  c.eigenCount = 12;
  return c;
}

/// Tiny model with every weight, including the zero-initialized generator layer, randomized.
inline ModelParams random_model(std::uint64_t seed, double scale = 0.3) {
  ModelParams p = init_model(tiny_config(), seed, 0.01);
  std::uint64_t k = seed * 1000;
  for (auto& [name, param] : p.store.items())
    if (name.find("logTime") == std::string::npos)
      param.value += random_matrix(param.value.rows(), param.value.cols(), ++k, scale);
  return p;
}

/// Same mesh with vertices and faces relabeled; `vertexPerm[new] = old`, `facePerm[new] = old`.
struct Relabeled {
  Mesh mesh;
  std::vector<int> vertexPerm;
  std::vector<int> facePerm;
};

inline Relabeled relabel(const Mesh& m, std::uint64_t seed) {
  Relabeled r;
  const int n = m.num_vertices(), f = m.num_faces();
  r.vertexPerm.resize(n);
  r.facePerm.resize(f);
  std::iota(r.vertexPerm.begin(), r.vertexPerm.end(), 0);
  std::iota(r.facePerm.begin(), r.facePerm.end(), 0);
  std::mt19937 rng(static_cast<unsigned>(seed));
  std::shuffle(r.vertexPerm.begin(), r.vertexPerm.end(), rng);
  std::shuffle(r.facePerm.begin(), r.facePerm.end(), rng);
  std::vector<int> inv(n);
  for (int i = 0; i < n; ++i) inv[r.vertexPerm[i]] = i;
  Vertices v(n, 3);
  for (int i = 0; i < n; ++i) v.row(i) = m.vertices().row(r.vertexPerm[i]);
  Faces faces(f, 3);
  for (int t = 0; t < f; ++t)
    for (int k = 0; k < 3; ++k) faces(t, k) = inv[m.faces()(r.facePerm[t], k)];
  r.mesh = Mesh(std::move(v), std::move(faces), m.id() + "_relabeled");
  return r;
}

}  // namespace pandas::testing
