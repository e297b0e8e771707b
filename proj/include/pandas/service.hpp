#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "pandas/latent.hpp"
#include "pandas/training.hpp"

namespace pandas {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

inline double round_to(double x, int digits) {
  const double s = std::pow(10.0, digits);
  return std::round(x * s) / s;
}

inline nlohmann::json vertices_json(const Vertices& V, int precision = -1) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    if (precision >= 0)
      out.push_back({round_to(V(i, 0), precision), round_to(V(i, 1), precision), round_to(V(i, 2), precision)});
    else
      out.push_back({V(i, 0), V(i, 1), V(i, 2)});
  }
  return out;
}

inline nlohmann::json mesh_json(const Mesh& mesh, int precision = -1) {
  nlohmann::json faces = nlohmann::json::array();
  for (int t = 0; t < mesh.num_faces(); ++t)
    faces.push_back({mesh.faces()(t, 0), mesh.faces()(t, 1), mesh.faces()(t, 2)});
  return {{"vertices", vertices_json(mesh.vertices(), precision)}, {"faces", faces}};
}

/// Request handling for the deformation service, independent of the transport so it can be driven
/// directly. Holds only immutable state after construction; handlers may run concurrently.
class DeformService {
 public:
  DeformService(ModelParams params, Mesh neutral, std::vector<Mesh> poses)
      : params_(std::move(params)), neutral_(std::move(neutral)), poses_(std::move(poses)) {
    bank_ = build_pose_bank(neutral_, poses_, params_);
  }

  static DeformService from_dataset(ModelParams params, const PoseDataset& ds) {
    return DeformService(std::move(params), ds.neutral, ds.poses);
  }

  HttpReply poses() const {
    nlohmann::json ids = bank_.ids;
    return {200, ids};
  }

  HttpReply mesh(const std::string& id, int precision = -1) const {
    if (id == neutral_.id() || id == "neutral") return {200, mesh_json(neutral_, precision)};
    for (const auto& p : poses_)
      if (p.id() == id) return {200, mesh_json(p, precision)};
    return error(404, "id", "unknown mesh '" + id + "'");
  }

  HttpReply encode(const std::string& body) const {
    nlohmann::json req;
    if (!parse(body, req)) return error(400, "body", "not valid JSON");
    if (!req.is_object() || !req.contains("poseId") || !req.at("poseId").is_string())
      return error(400, "poseId", "required string");
    const LatentCode* z = bank_.find(req.at("poseId").get<std::string>());
    if (!z) return error(404, "poseId", "unknown pose '" + req.at("poseId").get<std::string>() + "'");
    return {200, {{"z", std::vector<double>(z->z.data(), z->z.data() + z->z.size())}}};
  }

  HttpReply deform(const std::string& body, int precision = -1) const {
    nlohmann::json req;
    if (!parse(body, req)) return error(400, "body", "not valid JSON");
    if (!req.is_object()) return error(400, "body", "expected an object");
    if (!req.contains("parts") || !req.at("parts").is_array()) return error(400, "parts", "required array");
    double alpha = 1.0;
    if (req.contains("alpha")) {
      if (!req.at("alpha").is_number()) return error(400, "alpha", "must be a number");
      alpha = req.at("alpha").get<double>();
      if (!std::isfinite(alpha)) return error(400, "alpha", "must be finite");
    }
    const int m = neutral_.num_faces();
    std::vector<MixPart> parts;
    for (std::size_t k = 0; k < req.at("parts").size(); ++k) {
      const auto& p = req.at("parts")[k];
      const std::string where = "parts[" + std::to_string(k) + "]";
      if (!p.is_object() || !p.contains("poseId") || !p.at("poseId").is_string())
        return error(400, where + ".poseId", "required string");
      if (!p.contains("faceIndices") || !p.at("faceIndices").is_array())
        return error(400, where + ".faceIndices", "required array");
      const LatentCode* z = bank_.find(p.at("poseId").get<std::string>());
      if (!z) return error(404, where + ".poseId", "unknown pose '" + p.at("poseId").get<std::string>() + "'");
      Mask mask = Mask::empty(m, where);
      for (const auto& f : p.at("faceIndices")) {
        if (!f.is_number_integer()) return error(400, where + ".faceIndices", "entries must be integers");
        long long idx = f.get<long long>();
        if (idx < 0 || idx >= m)
          return error(422, where + ".faceIndices", "face index " + std::to_string(idx) + " out of range [0, " +
                                                        std::to_string(m) + ")");
        mask.weights[idx] = 1.0;
      }
      parts.push_back({*z, std::move(mask)});
    }
    Mesh out = generate(neutral_, mix_field(*bank_.neutralFeatures, parts, alpha, params_.config.codeDim), params_).mesh;
    return {200, {{"vertices", vertices_json(out.vertices(), precision)}}};
  }

  const Mesh& neutral() const { return neutral_; }
  const ModelParams& params() const { return params_; }
  const PoseBank& bank() const { return bank_; }

  void register_routes(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const HttpReply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto precision = [](const httplib::Request& req) {
      if (!req.has_param("precision")) return -1;
      try {
        return std::clamp(std::stoi(req.get_param_value("precision")), 0, 17);
      } catch (const std::exception&) {
        return -1;
      }
    };
    server.Get("/health", [send](const httplib::Request&, httplib::Response& res) {
      send(res, {200, {{"status", "ok"}}});
    });
    server.Get("/poses", [this, send](const httplib::Request&, httplib::Response& res) { send(res, poses()); });
    server.Get(R"(/mesh/([^/]+))", [this, send, precision](const httplib::Request& req, httplib::Response& res) {
      send(res, mesh(req.matches[1], precision(req)));
    });
    server.Post("/deform", [this, send, precision](const httplib::Request& req, httplib::Response& res) {
      send(res, guarded([&] { return deform(req.body, precision(req)); }));
    });
    server.Post("/encode", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, guarded([&] { return encode(req.body); }));
    });
  }

 private:
  static bool parse(const std::string& body, nlohmann::json& out) {
    try {
      out = nlohmann::json::parse(body);
      return true;
    } catch (const nlohmann::json::exception&) {
      return false;
    }
  }

  static HttpReply error(int status, const std::string& field, const std::string& message) {
    return {status, {{"error", message}, {"field", field}}};
  }

  template <class F>
  static HttpReply guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error(500, "engine", std::string(error_prefix(e.kind())) + ": " + e.what());
    }
  }

  ModelParams params_;
  Mesh neutral_;
  std::vector<Mesh> poses_;
  PoseBank bank_;
};

}  // namespace pandas
