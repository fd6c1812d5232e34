#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <fmt/format.h>

#include "auedit/core/kv.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/core/types.hpp"
#include "auedit/predictor/mlp.hpp"

namespace auedit::predictor {

// FNV-1a over the serialized layer tensors in manifest order.
inline std::string weights_hash(const PredictorWeights& p) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  p.for_each_layer([&](const std::string&, const Dense& d) {
    for (const auto& t : {to_tensor(d.W), to_tensor(Eigen::MatrixXd(d.b))}) {
      for (auto byte : encode_tensor(t)) {
        h ^= byte;
        h *= 0x100000001b3ull;
      }
    }
  });
  return fmt::format("{:016x}", h);
}

inline void save_weights(const PredictorWeights& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  KeyValues kv;
  kv.set("d", static_cast<std::uint64_t>(p.arch.latent_dim));
  kv.set("S", static_cast<std::uint64_t>(p.arch.au_count));
  kv.set("shared1", static_cast<std::uint64_t>(p.arch.shared1));
  kv.set("shared2", static_cast<std::uint64_t>(p.arch.shared2));
  kv.set("branch1", static_cast<std::uint64_t>(p.arch.branch1));
  kv.set("branch2", static_cast<std::uint64_t>(p.arch.branch2));
  kv.set("seed", p.seed);
  std::string layers;
  p.for_each_layer([&](const std::string& name, const Dense& d) {
    save_tensor(to_tensor(d.W), dir / (name + ".W.aued"));
    save_tensor(to_tensor(Eigen::MatrixXd(d.b)), dir / (name + ".b.aued"));
    layers += (layers.empty() ? "" : ",") + name;
    kv.set("layer." + name, fmt::format("{}x{}", d.out(), d.in()));
  });
  kv.set("layers", layers);
  kv.set("hash", weights_hash(p));
  kv.save(dir / "manifest.txt");
}

// Values are stored as f32; the loaded copy holds those rounded values.
inline PredictorWeights load_weights(const std::filesystem::path& dir) {
  require(std::filesystem::exists(dir / "manifest.txt"), ErrorKind::missing_artifact,
          "predictor weights not found in " + dir.string() + " (run `train` first)");
  const auto kv = KeyValues::load(dir / "manifest.txt");
  Architecture a;
  a.latent_dim = kv.get_u64("d");
  a.au_count = kv.get_u64("S");
  a.shared1 = kv.get_u64("shared1");
  a.shared2 = kv.get_u64("shared2");
  a.branch1 = kv.get_u64("branch1");
  a.branch2 = kv.get_u64("branch2");
  PredictorWeights p(a);
  p.seed = kv.get_u64("seed");
  p.for_each_layer([&](const std::string& name, Dense& d) {
    const auto W = matrix_from_tensor(load_tensor(dir / (name + ".W.aued")));
    const auto b = matrix_from_tensor(load_tensor(dir / (name + ".b.aued")));
    require(W.rows() == d.W.rows() && W.cols() == d.W.cols() && b.rows() == d.b.size() && b.cols() == 1,
            ErrorKind::format, "layer " + name + " has unexpected shape");
    d.W = W;
    d.b = b.col(0);
  });
  return p;
}

// Same network with every parameter rounded through f32, as a save/load
// cycle would leave it.
inline PredictorWeights rounded_to_f32(PredictorWeights p) {
  p.for_each_layer([](const std::string&, Dense& d) {
    d.W = d.W.cast<float>().cast<double>();
    d.b = d.b.cast<float>().cast<double>();
  });
  return p;
}

}  // namespace auedit::predictor
