#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pandas/error.hpp"

namespace pandas {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using FaceScalars = Eigen::VectorXd;
using FaceVectors = Vertices;

/// Faces with area at or below this are rejected at construction.
inline constexpr double kAreaEpsilon = 1e-12;

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace detail

/// Immutable registered triangle surface. Construction validates indices, face areas and
/// connectivity; every other module may assume these hold.
class Mesh {
 public:
  Mesh() = default;

  Mesh(Vertices vertices, Faces faces, std::string id = {})
      : vertices_(std::move(vertices)), faces_(std::move(faces)), id_(std::move(id)) {
    validate();
    hash_ = detail::fnv1a(vertices_.data(), sizeof(double) * vertices_.size());
    hash_ = detail::fnv1a(faces_.data(), sizeof(int) * faces_.size(), hash_);
  }

  const Vertices& vertices() const { return vertices_; }
  const Faces& faces() const { return faces_; }
  const std::string& id() const { return id_; }
  int num_vertices() const { return static_cast<int>(vertices_.rows()); }
  int num_faces() const { return static_cast<int>(faces_.rows()); }
  Eigen::Vector3d vertex(int i) const { return vertices_.row(i).transpose(); }

  /// Hash of vertex and face data; keys the per-mesh operator cache.
  std::uint64_t content_hash() const { return hash_; }

  /// Same connectivity, new positions.
  Mesh with_vertices(Vertices vertices, std::string id = {}) const {
    if (vertices.rows() != vertices_.rows())
      throw Error(ErrorKind::Shape, "with_vertices: vertex count mismatch");
    return Mesh(std::move(vertices), faces_, id.empty() ? id_ : std::move(id));
  }

 private:
  void validate() const;

  Vertices vertices_;
  Faces faces_;
  std::string id_;
  std::uint64_t hash_ = 0;
};

/// Edge-adjacent face lists (shared edge = two common vertices).
inline std::vector<std::vector<int>> face_adjacency(const Faces& faces) {
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int t = 0; t < faces.rows(); ++t) {
    for (int k = 0; k < 3; ++k) {
      int a = faces(t, k), b = faces(t, (k + 1) % 3);
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(t);
    }
  }
  std::vector<std::vector<int>> adj(faces.rows());
  for (const auto& [edge, list] : edge_faces)
    for (int f : list)
      for (int g : list)
        if (f != g) adj[f].push_back(g);
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

inline void Mesh::validate() const {
  const int n = num_vertices();
  if (faces_.rows() == 0) throw Error(ErrorKind::Mesh, "mesh has no faces");
  for (int t = 0; t < faces_.rows(); ++t) {
    for (int k = 0; k < 3; ++k)
      if (faces_(t, k) < 0 || faces_(t, k) >= n)
        throw Error(ErrorKind::Mesh, "face " + std::to_string(t) + " has out-of-range vertex index");
    if (faces_(t, 0) == faces_(t, 1) || faces_(t, 1) == faces_(t, 2) || faces_(t, 0) == faces_(t, 2))
      throw Error(ErrorKind::Mesh, "degenerate face " + std::to_string(t) + " (repeated index)");
    double area = detail::triangle_area(vertex(faces_(t, 0)), vertex(faces_(t, 1)), vertex(faces_(t, 2)));
    if (!(area > kAreaEpsilon))
      throw Error(ErrorKind::Mesh, "degenerate face " + std::to_string(t) + " (zero area)");
  }
  // Connectivity over vertices via union-find; isolated vertices count as components too.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int t = 0; t < faces_.rows(); ++t)
    for (int k = 1; k < 3; ++k) parent[find(faces_(t, k))] = find(faces_(t, 0));
  int root = find(0);
  for (int i = 1; i < n; ++i)
    if (find(i) != root) throw Error(ErrorKind::Mesh, "mesh has multiple connected components");
}

// ---------------------------------------------------------------------------
// OBJ I/O
// ---------------------------------------------------------------------------

inline Mesh parse_obj(std::istream& in, std::string id = {}) {
  std::vector<double> coords;
  std::vector<int> indices;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": malformed vertex");
      coords.insert(coords.end(), {x, y, z});
    } else if (tag == "f") {
      std::vector<int> face;
      std::string tok;
      while (ls >> tok) {
        auto slash = tok.find('/');
        std::string head = tok.substr(0, slash);
        int idx = 0;
        try {
          std::size_t used = 0;
          idx = std::stoi(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad face index '" + tok + "'");
        }
        int nv = static_cast<int>(coords.size() / 3);
        face.push_back(idx > 0 ? idx - 1 : nv + idx);
      }
      if (face.size() != 3)
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": non-triangular face");
      indices.insert(indices.end(), face.begin(), face.end());
    }
  }
  Vertices v(coords.size() / 3, 3);
  std::copy(coords.begin(), coords.end(), v.data());
  Faces f(indices.size() / 3, 3);
  std::copy(indices.begin(), indices.end(), f.data());
  return Mesh(std::move(v), std::move(f), std::move(id));
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open mesh file '" + path + "'");
  std::string id = path.substr(path.find_last_of('/') + 1);
  if (auto dot = id.rfind('.'); dot != std::string::npos) id.resize(dot);
  return parse_obj(in, id);
}

/// Writes `v`/`f` records with round-trip precision.
inline void write_obj(std::ostream& out, const Mesh& mesh) {
  char buf[128];
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", mesh.vertices()(i, 0), mesh.vertices()(i, 1),
                  mesh.vertices()(i, 2));
    out << buf;
  }
  for (int t = 0; t < mesh.num_faces(); ++t)
    out << "f " << mesh.faces()(t, 0) + 1 << ' ' << mesh.faces()(t, 1) + 1 << ' ' << mesh.faces()(t, 2) + 1 << '\n';
}

inline void save_mesh(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write mesh file '" + path + "'");
  write_obj(out, mesh);
}

// ---------------------------------------------------------------------------
// Per-face geometry
// ---------------------------------------------------------------------------

inline FaceScalars face_areas(const Mesh& mesh) {
  FaceScalars areas(mesh.num_faces());
  const auto& F = mesh.faces();
  for (int t = 0; t < mesh.num_faces(); ++t)
    areas[t] = detail::triangle_area(mesh.vertex(F(t, 0)), mesh.vertex(F(t, 1)), mesh.vertex(F(t, 2)));
  return areas;
}

/// Unit normals of the CCW edge pair (v1 - v0) x (v2 - v0).
inline FaceVectors face_normals(const Mesh& mesh) {
  FaceVectors normals(mesh.num_faces(), 3);
  const auto& F = mesh.faces();
  for (int t = 0; t < mesh.num_faces(); ++t) {
    Eigen::Vector3d a = mesh.vertex(F(t, 0));
    Eigen::Vector3d c = (mesh.vertex(F(t, 1)) - a).cross(mesh.vertex(F(t, 2)) - a);
    normals.row(t) = c.normalized().transpose();
  }
  return normals;
}

/// Area-weighted average of incident face normals, normalized.
inline Vertices vertex_normals(const Mesh& mesh) {
  Vertices normals = Vertices::Zero(mesh.num_vertices(), 3);
  const auto& F = mesh.faces();
  for (int t = 0; t < mesh.num_faces(); ++t) {
    Eigen::Vector3d a = mesh.vertex(F(t, 0));
    Eigen::RowVector3d c = (mesh.vertex(F(t, 1)) - a).cross(mesh.vertex(F(t, 2)) - a).transpose();
    for (int k = 0; k < 3; ++k) normals.row(F(t, k)) += c;
  }
  for (int i = 0; i < normals.rows(); ++i) {
    double len = normals.row(i).norm();
    if (len > 0) normals.row(i) /= len;
  }
  return normals;
}

/// Rigid (rotation + translation) alignment of `moving` onto `fixed` minimizing the sum of
/// squared vertex distances. No scaling.
inline Mesh procrustes_align(const Mesh& moving, const Mesh& fixed) {
  if (moving.num_vertices() != fixed.num_vertices())
    throw Error(ErrorKind::Shape, "procrustes_align: vertex count mismatch");
  const Vertices& P = moving.vertices();
  const Vertices& Q = fixed.vertices();
  Eigen::RowVector3d pc = P.colwise().mean();
  Eigen::RowVector3d qc = Q.colwise().mean();
  Eigen::Matrix3d H = (P.rowwise() - pc).transpose() * (Q.rowwise() - qc);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) D(2, 2) = -1;
  Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();
  Vertices out = ((P.rowwise() - pc) * R.transpose()).rowwise() + qc;
  return moving.with_vertices(std::move(out));
}

/// Hop distance over edge-adjacent faces from a seed set; unreachable faces get -1
/// (cannot happen on a connected mesh).
inline std::vector<int> face_graph_distance(const Mesh& mesh, const std::vector<int>& seeds) {
  if (seeds.empty()) throw Error(ErrorKind::Shape, "face_graph_distance: empty seed set");
  const int m = mesh.num_faces();
  std::vector<int> dist(m, -1);
  std::queue<int> q;
  for (int s : seeds) {
    if (s < 0 || s >= m) throw Error(ErrorKind::Shape, "face_graph_distance: seed index out of range");
    if (dist[s] != 0) {
      dist[s] = 0;
      q.push(s);
    }
  }
  auto adj = face_adjacency(mesh.faces());
  while (!q.empty()) {
    int f = q.front();
    q.pop();
    for (int g : adj[f])
      if (dist[g] < 0) {
        dist[g] = dist[f] + 1;
        q.push(g);
      }
  }
  return dist;
}

/// Sum of squared vertex distances divided by n.
inline double mean_squared_distance(const Vertices& a, const Vertices& b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::Shape, "vertex count mismatch");
  return (a - b).rowwise().squaredNorm().sum() / static_cast<double>(a.rows());
}

}  // namespace pandas
