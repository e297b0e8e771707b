#pragma once

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pandas/latent.hpp"
#include "pandas/service.hpp"
#include "pandas/training.hpp"

namespace pandas::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline void write_sequence(const std::string& dir, const std::vector<Mesh>& frames) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"frames", nlohmann::json::array()}};
  for (std::size_t k = 0; k < frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.obj", k);
    save_mesh(dir + "/" + name, frames[k]);
    double alpha = frames.size() > 1 ? static_cast<double>(k) / (frames.size() - 1) : 0.0;
    manifest["frames"].push_back({{"file", name}, {"alpha", alpha}});
  }
  write_json(dir + "/manifest.json", manifest);
}

inline std::optional<Mask> optional_mask(const std::string& path, int faces) {
  if (path.empty()) return std::nullopt;
  return load_mask(path, faces);
}

}  // namespace detail

/// Parses and dispatches one command. Usage errors return 2, runtime errors 1 with a categorized
/// message on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Localized non-rigid mesh deformation engine"};
  app.require_subcommand(1, 1);
  std::string model, source, target, outPath, maskPath, configPath, dataDir, kind = "bend-bar", logPath;
  std::vector<std::string> dataDirs, targets, parts;
  int count = 20, steps = 10, components = 3, port = 8080;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  std::string neutralB, poseB, meanOut;
  bool seedGiven = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic registered pose family");
  synth->add_option("--kind", kind, "bend-bar | twist-bar | bump-sheet");
  synth->add_option("--count", count, "Number of poses")->check(CLI::Range(2, 100000));
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", outPath, "Output directory")->required();

  auto* trainCmd = app.add_subcommand("train", "Train a model on one or more dataset directories");
  trainCmd->add_option("--data", dataDirs, "Dataset directory (repeatable)")->required();
  trainCmd->add_option("--config", configPath, "TrainConfig JSON");
  trainCmd->add_option("--seed", seed, "Override config seed")->each([&](const std::string&) { seedGiven = true; });
  trainCmd->add_option("--out", outPath, "Output weight file")->required();
  trainCmd->add_option("--log", logPath, "Loss log (JSON lines); default <out>.loss.jsonl");

  auto add_model = [&](CLI::App* c) { c->add_option("--model", model, "Weight file")->required(); };
  auto add_pair = [&](CLI::App* c) {
    add_model(c);
    c->add_option("--source", source, "Source (neutral) OBJ")->required();
    c->add_option("--target", target, "Target OBJ")->required();
  };

  auto* predictCmd = app.add_subcommand("predict", "Reconstruct the target from the source");
  add_pair(predictCmd);
  predictCmd->add_option("--out", outPath, "Output OBJ")->required();

  auto* interp = app.add_subcommand("interp", "Latent interpolation sequence");
  add_pair(interp);
  interp->add_option("--steps", steps, "Frame count")->check(CLI::Range(2, 100000));
  interp->add_option("--out", outPath, "Output directory")->required();

  auto* maskDeform = app.add_subcommand("mask-deform", "Partial deformation restricted to a face mask");
  add_pair(maskDeform);
  maskDeform->add_option("--mask", maskPath, "Mask JSON or 0/1 column")->required();
  maskDeform->add_option("--alpha", alpha, "Code scale");
  maskDeform->add_option("--out", outPath, "Output OBJ")->required();

  auto* mixCmd = app.add_subcommand("mix", "Mix masked codes of several poses");
  add_model(mixCmd);
  mixCmd->add_option("--source", source, "Source OBJ")->required();
  mixCmd->add_option("--part", parts, "target.obj:mask.json (repeatable)")->required();
  mixCmd->add_option("--alpha", alpha, "Code scale");
  mixCmd->add_option("--out", outPath, "Output OBJ")->required();

  auto* stats = app.add_subcommand("stats", "Mean pose and principal components of codes");
  add_model(stats);
  stats->add_option("--source", source, "Source OBJ")->required();
  stats->add_option("--targets", targets, "Target OBJs")->required();
  stats->add_option("--components", components, "Principal components");
  stats->add_option("--mask", maskPath, "Mask for the mean pose");
  stats->add_option("--mean-out", meanOut, "Mean pose OBJ");
  stats->add_option("--out", outPath, "Statistics JSON")->required();

  auto* transferCmd = app.add_subcommand("transfer", "Transfer a pose of identity B onto identity A");
  add_model(transferCmd);
  transferCmd->add_option("--source", source, "Identity A neutral OBJ")->required();
  transferCmd->add_option("--neutral", neutralB, "Identity B neutral OBJ")->required();
  transferCmd->add_option("--pose", poseB, "Identity B posed OBJ")->required();
  transferCmd->add_option("--mask", maskPath, "Optional mask");
  transferCmd->add_option("--alpha", alpha, "Code scale");
  transferCmd->add_option("--out", outPath, "Output OBJ")->required();

  auto* locality = app.add_subcommand("locality", "Per-distance deformation profile of a partial deformation");
  add_pair(locality);
  locality->add_option("--mask", maskPath, "Mask")->required();
  locality->add_option("--out", outPath, "Profile JSON")->required();

  auto* serve = app.add_subcommand("serve", "HTTP deformation service");
  add_model(serve);
  serve->add_option("--data", dataDir, "Dataset directory")->required();
  serve->add_option("--port", port, "Port (PANDAS_PORT overrides)");
  serve->add_option("--config", configPath, "Service JSON config {host, port}");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) {
      PoseDataset ds = synth_dataset(parse_synth_kind(kind), count, seed);
      write_dataset(outPath, ds, seed);
      out << "wrote " << ds.poses.size() << " poses to " << outPath << "\n";
    } else if (*trainCmd) {
      TrainConfig cfg = configPath.empty() ? TrainConfig{} : load_train_config(configPath);
      if (seedGiven) cfg.seed = seed;
      std::vector<PoseDataset> data;
      for (const auto& d : dataDirs) data.push_back(read_dataset(d));
      if (logPath.empty()) logPath = outPath + ".loss.jsonl";
      std::ofstream log(logPath);
      if (!log) throw Error(ErrorKind::Io, "cannot write loss log '" + logPath + "'");
      TrainResult r = train(data, cfg, std::nullopt, [&](const EpochLog& e) { log << to_json_line(e) << '\n' << std::flush; });
      save_model(outPath, r.params);
      if (r.diverged) throw Error(ErrorKind::Training, r.message + " (last good weights saved to " + outPath + ")");
      out << "trained " << r.log.size() << " epochs, final loss " << (r.log.empty() ? r.initialLoss : r.log.back().total)
          << "\n";
    } else if (*predictCmd) {
      ModelParams p = load_model(model);
      save_mesh(outPath, predict(load_mesh(source), load_mesh(target), p));
    } else if (*interp) {
      ModelParams p = load_model(model);
      detail::write_sequence(outPath, interpolation_sequence(load_mesh(source), load_mesh(target), p, steps));
    } else if (*maskDeform) {
      ModelParams p = load_model(model);
      Mesh s = load_mesh(source);
      save_mesh(outPath, partial_deform(s, load_mesh(target), load_mask(maskPath, s.num_faces()), p, alpha));
    } else if (*mixCmd) {
      ModelParams p = load_model(model);
      Mesh s = load_mesh(source);
      std::vector<MixPart> mixParts;
      for (const auto& partArg : parts) {
        auto colon = partArg.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorKind::Config, "--part expects target.obj:mask.json, got '" + partArg + "'");
        mixParts.push_back(part_from_target(s, load_mesh(partArg.substr(0, colon)),
                                            load_mask(partArg.substr(colon + 1), s.num_faces()), p));
      }
      save_mesh(outPath, mix(s, mixParts, p, alpha));
    } else if (*stats) {
      ModelParams p = load_model(model);
      Mesh s = load_mesh(source);
      std::vector<Mesh> ts;
      for (const auto& t : targets) ts.push_back(load_mesh(t));
      auto pcs = pca_poses(s, ts, p, components);
      nlohmann::json j = {{"components", nlohmann::json::array()}};
      for (const auto& pc : pcs)
        j["components"].push_back(
            {{"variance", pc.variance},
             {"direction", std::vector<double>(pc.direction.z.data(), pc.direction.z.data() + pc.direction.size())}});
      detail::write_json(outPath, j);
      if (!meanOut.empty()) save_mesh(meanOut, mean_pose(s, ts, detail::optional_mask(maskPath, s.num_faces()), p));
    } else if (*transferCmd) {
      ModelParams p = load_model(model);
      Mesh a = load_mesh(source);
      save_mesh(outPath, transfer(a, load_mesh(neutralB), load_mesh(poseB), p,
                                  detail::optional_mask(maskPath, a.num_faces()), alpha));
    } else if (*locality) {
      ModelParams p = load_model(model);
      Mesh s = load_mesh(source);
      auto profile = locality_profile(s, load_mesh(target), load_mask(maskPath, s.num_faces()), p);
      nlohmann::json j = nlohmann::json::array();
      for (const auto& b : profile)
        j.push_back({{"distance", b.distance},
                     {"faces", b.faces},
                     {"jacobianDeviation", b.jacobianDeviation},
                     {"gradientDeviation", b.gradientDeviation}});
      detail::write_json(outPath, j);
    } else if (*serve) {
      std::string host = "127.0.0.1";
      if (!configPath.empty()) {
        std::ifstream in(configPath);
        if (!in) throw Error(ErrorKind::Io, "cannot open config '" + configPath + "'");
        try {
          auto j = nlohmann::json::parse(in);
          host = j.value("host", host);
          port = j.value("port", port);
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorKind::Config, std::string("bad service config: ") + e.what());
        }
      }
      if (const char* env = std::getenv("PANDAS_PORT")) port = std::atoi(env);
      DeformService service = DeformService::from_dataset(load_model(model), read_dataset(dataDir));
      httplib::Server server;
      service.register_routes(server);
      out << "serving on http://" << host << ":" << port << "\n" << std::flush;
      if (!server.listen(host, port)) throw Error(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const Error& e) {
    err << "error: " << error_prefix(e.kind()) << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace pandas::cli
