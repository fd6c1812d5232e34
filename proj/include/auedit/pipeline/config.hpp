#pragma once

// Flat key=value pipeline configuration.  Every key is optional; the
// resolved values (including derived seeds) are what effective-config.txt
// records.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/directions/directions.hpp"
#include "auedit/localedit/localedit.hpp"
#include "auedit/predictor/mlp.hpp"
#include "auedit/predictor/train.hpp"
#include "auedit/synthgen/generator.hpp"
#include "auedit/synthgen/sampler.hpp"

namespace auedit::pipeline {

enum class GlobalMode { linear, optimize };
enum class LocalMode { none, local_opt, multiplex };

inline std::string to_string(GlobalMode m) { return m == GlobalMode::linear ? "linear" : "optimize"; }
inline std::string to_string(LocalMode m) {
  switch (m) {
    case LocalMode::none: return "none";
    case LocalMode::local_opt: return "local-opt";
    case LocalMode::multiplex: return "multiplex";
  }
  return "none";
}

inline GlobalMode global_mode_from_string(const std::string& s) {
  if (s == "linear") return GlobalMode::linear;
  if (s == "optimize") return GlobalMode::optimize;
  fail(ErrorKind::invalid_argument, "edit.mode must be linear or optimize, got '" + s + "'");
}

inline LocalMode local_mode_from_string(const std::string& s) {
  if (s == "none") return LocalMode::none;
  if (s == "local-opt") return LocalMode::local_opt;
  if (s == "multiplex") return LocalMode::multiplex;
  fail(ErrorKind::invalid_argument, "edit.local must be none, local-opt or multiplex, got '" + s + "'");
}

struct EditRecipe {
  std::string name;
  std::vector<std::pair<std::size_t, double>> aus;
};

// "0:2,5:-1.5" -> {(0, 2), (5, -1.5)}
inline std::vector<std::pair<std::size_t, double>> parse_au_list(const std::string& key, const std::string& text) {
  std::vector<std::pair<std::size_t, double>> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const auto item = KeyValues::trim(text.substr(pos, comma - pos));
    pos = comma + 1;
    if (item.empty()) continue;
    const auto colon = item.find(':');
    require(colon != std::string::npos, ErrorKind::format, key + ": expected au:lambda, got '" + item + "'");
    out.emplace_back(KeyValues::parse_u64(key, KeyValues::trim(item.substr(0, colon))),
                     KeyValues::parse_double(key, KeyValues::trim(item.substr(colon + 1))));
  }
  return out;
}

inline std::string format_au_list(const std::vector<std::pair<std::size_t, double>>& aus) {
  std::string s;
  for (const auto& [au, lambda] : aus) s += fmt::format("{}{}:{}", s.empty() ? "" : ",", au, lambda);
  return s;
}

inline std::vector<EditRecipe> bundled_recipes() {
  return {{"smile-analog", {{5, 2.0}, {6, 2.0}}}, {"surprise-analog", {{0, 2.0}, {1, 2.0}}}};
}

struct PipelineConfig {
  std::uint64_t seed = 1;

  synth::GeneratorConfig gen;
  std::uint64_t oracle_seed = 0;

  std::size_t data_n = 2000;
  std::string data_preset = "correlated";  // identity | correlated
  double data_rho = 0.8;
  std::size_t data_au_a = 0;
  std::size_t data_au_b = 5;
  std::uint64_t data_seed = 0;
  std::size_t data_grid = 16;
  synth::SamplerConfig sampler;

  predictor::TrainConfig train;
  predictor::Architecture arch;

  cluster::KMeansConfig kmeans;
  std::size_t cluster_images = 100;
  std::size_t cluster_top = 4;
  double cluster_lambda = 1.0;
  double face_threshold = 0.5;

  GlobalMode edit_mode = GlobalMode::linear;
  LocalMode edit_local = LocalMode::multiplex;
  std::string edit_request = "0:2";
  std::string edit_latent;  // AUED file; empty -> sample with edit_latent_seed
  std::uint64_t edit_latent_seed = 0;
  std::string edit_name = "edit";
  double baseline_strength = 1.0;
  double cluster_ratio = 0.5;  // mask clusters: score >= ratio * AU's top score
  directions::OptimizeConfig edit_opt;
  local::LocalEditConfig local;

  directions::OptimizeConfig transfer_opt{0.1, 2000, 1e-4};
  std::string transfer_source, transfer_target;
  std::uint64_t transfer_source_seed = 0, transfer_target_seed = 0;

  std::vector<EditRecipe> recipes = bundled_recipes();
  std::string recipe_name = "smile-analog";
  double recipe_scale = 1.0;

  // Seeds that were not set explicitly derive from `seed`.
  static PipelineConfig from_kv(const KeyValues& kv) {
    PipelineConfig c;
    c.seed = kv.get_u64_or("seed", c.seed);
    auto sub_seed = [&](const std::string& key, std::uint64_t tag) {
      return kv.has(key) ? kv.get_u64(key) : derive_seed(c.seed, tag);
    };

    c.gen.seed = sub_seed("gen.seed", 1);
    c.gen.latent_dim = kv.get_u64_or("gen.latent_dim", c.gen.latent_dim);
    c.gen.channels = kv.get_u64_or("gen.channels", c.gen.channels);
    c.gen.height = kv.get_u64_or("gen.height", c.gen.height);
    c.gen.width = kv.get_u64_or("gen.width", c.gen.width);
    c.gen.image_size = kv.get_u64_or("gen.image_size", c.gen.image_size);
    c.gen.coupled_a = kv.get_or("gen.coupled_a", c.gen.coupled_a);
    c.gen.coupled_b = kv.get_or("gen.coupled_b", c.gen.coupled_b);
    c.gen.coupling = kv.get_double_or("gen.coupling", c.gen.coupling);
    c.oracle_seed = sub_seed("oracle.seed", 2);

    c.data_n = kv.get_u64_or("data.n", c.data_n);
    c.data_preset = kv.get_or("data.preset", c.data_preset);
    require(c.data_preset == "identity" || c.data_preset == "correlated", ErrorKind::invalid_argument,
            "data.preset must be identity or correlated, got '" + c.data_preset + "'");
    c.data_rho = kv.get_double_or("data.rho", c.data_rho);
    c.data_au_a = kv.get_u64_or("data.au_a", c.data_au_a);
    c.data_au_b = kv.get_u64_or("data.au_b", c.data_au_b);
    c.data_seed = sub_seed("data.seed", 3);
    c.data_grid = kv.get_u64_or("data.grid", c.data_grid);
    c.sampler.control_scale = kv.get_double_or("data.control_scale", c.sampler.control_scale);
    c.sampler.nuisance_scale = kv.get_double_or("data.nuisance_scale", c.sampler.nuisance_scale);
    c.sampler.null_scale = kv.get_double_or("data.null_scale", c.sampler.null_scale);

    c.train.learning_rate = kv.get_double_or("train.lr", c.train.learning_rate);
    c.train.epochs = kv.get_u64_or("train.epochs", c.train.epochs);
    c.train.batch_size = kv.get_u64_or("train.batch", c.train.batch_size);
    c.train.seed = sub_seed("train.seed", 4);
    c.train.init_scale = kv.get_double_or("train.init_scale", c.train.init_scale);
    c.train.val_fraction = kv.get_double_or("train.val_fraction", c.train.val_fraction);
    c.arch.shared1 = kv.get_u64_or("train.shared1", c.arch.shared1);
    c.arch.shared2 = kv.get_u64_or("train.shared2", c.arch.shared2);
    c.arch.branch1 = kv.get_u64_or("train.branch1", c.arch.branch1);
    c.arch.branch2 = kv.get_u64_or("train.branch2", c.arch.branch2);

    c.kmeans.k = kv.get_u64_or("cluster.k", c.kmeans.k);
    c.kmeans.seed = sub_seed("cluster.seed", 5);
    c.kmeans.max_iters = kv.get_u64_or("cluster.max_iters", c.kmeans.max_iters);
    c.kmeans.restarts = kv.get_u64_or("cluster.restarts", c.kmeans.restarts);
    c.cluster_images = kv.get_u64_or("cluster.images", c.cluster_images);
    c.cluster_top = kv.get_u64_or("cluster.top", c.cluster_top);
    c.cluster_lambda = kv.get_double_or("cluster.lambda", c.cluster_lambda);
    c.face_threshold = kv.get_double_or("cluster.face_threshold", c.face_threshold);

    c.edit_mode = global_mode_from_string(kv.get_or("edit.mode", to_string(c.edit_mode)));
    c.edit_local = local_mode_from_string(kv.get_or("edit.local", to_string(c.edit_local)));
    c.edit_request = kv.get_or("edit.request", c.edit_request);
    parse_au_list("edit.request", c.edit_request);
    c.edit_latent = kv.get_or("edit.latent", c.edit_latent);
    c.edit_latent_seed = sub_seed("edit.latent_seed", 6);
    c.edit_name = kv.get_or("edit.name", c.edit_name);
    c.baseline_strength = kv.get_double_or("edit.baseline_strength", c.baseline_strength);
    c.cluster_ratio = kv.get_double_or("edit.cluster_ratio", c.cluster_ratio);
    c.edit_opt.learning_rate = kv.get_double_or("edit.lr", c.edit_opt.learning_rate);
    c.edit_opt.iterations = kv.get_u64_or("edit.iterations", c.edit_opt.iterations);
    c.edit_opt.tolerance = kv.get_double_or("edit.tolerance", c.edit_opt.tolerance);

    c.local.alpha = kv.get_double_or("local.alpha", c.local.alpha);
    c.local.beta = kv.get_double_or("local.beta", c.local.beta);
    c.local.learning_rate = kv.get_double_or("local.lr", c.local.learning_rate);
    c.local.iterations = kv.get_u64_or("local.iterations", c.local.iterations);
    c.local.tolerance = kv.get_double_or("local.tolerance", c.local.tolerance);
    c.local.adaptive = parse_bool("local.adaptive", kv.get_or("local.adaptive", c.local.adaptive ? "true" : "false"));

    c.transfer_opt.learning_rate = kv.get_double_or("transfer.lr", c.transfer_opt.learning_rate);
    c.transfer_opt.iterations = kv.get_u64_or("transfer.iterations", c.transfer_opt.iterations);
    c.transfer_opt.tolerance = kv.get_double_or("transfer.tolerance", c.transfer_opt.tolerance);
    c.transfer_source = kv.get_or("transfer.source", c.transfer_source);
    c.transfer_target = kv.get_or("transfer.target", c.transfer_target);
    c.transfer_source_seed = sub_seed("transfer.source_seed", 7);
    c.transfer_target_seed = sub_seed("transfer.target_seed", 8);

    for (const auto& [key, value] : kv.entries()) {
      if (key.rfind("recipe.", 0) != 0 || key == "recipe.name" || key == "recipe.scale") continue;
      EditRecipe r{key.substr(7), parse_au_list(key, value)};
      require(!r.name.empty(), ErrorKind::format, "recipe key needs a name: " + key);
      auto it = std::find_if(c.recipes.begin(), c.recipes.end(), [&](const EditRecipe& e) { return e.name == r.name; });
      if (it != c.recipes.end()) *it = std::move(r);
      else c.recipes.push_back(std::move(r));
    }
    c.recipe_name = kv.get_or("recipe.name", c.recipe_name);
    c.recipe_scale = kv.get_double_or("recipe.scale", c.recipe_scale);
    return c;
  }

  static PipelineConfig load(const std::filesystem::path& path) { return from_kv(KeyValues::load(path)); }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("seed", seed);
    kv.set("gen.seed", gen.seed);
    kv.set("gen.latent_dim", static_cast<std::uint64_t>(gen.latent_dim));
    kv.set("gen.channels", static_cast<std::uint64_t>(gen.channels));
    kv.set("gen.height", static_cast<std::uint64_t>(gen.height));
    kv.set("gen.width", static_cast<std::uint64_t>(gen.width));
    kv.set("gen.image_size", static_cast<std::uint64_t>(gen.image_size));
    kv.set("gen.coupled_a", gen.coupled_a);
    kv.set("gen.coupled_b", gen.coupled_b);
    kv.set("gen.coupling", gen.coupling);
    kv.set("oracle.seed", oracle_seed);

    kv.set("data.n", static_cast<std::uint64_t>(data_n));
    kv.set("data.preset", data_preset);
    kv.set("data.rho", data_rho);
    kv.set("data.au_a", static_cast<std::uint64_t>(data_au_a));
    kv.set("data.au_b", static_cast<std::uint64_t>(data_au_b));
    kv.set("data.seed", data_seed);
    kv.set("data.grid", static_cast<std::uint64_t>(data_grid));
    kv.set("data.control_scale", sampler.control_scale);
    kv.set("data.nuisance_scale", sampler.nuisance_scale);
    kv.set("data.null_scale", sampler.null_scale);

    kv.set("train.lr", train.learning_rate);
    kv.set("train.epochs", static_cast<std::uint64_t>(train.epochs));
    kv.set("train.batch", static_cast<std::uint64_t>(train.batch_size));
    kv.set("train.seed", train.seed);
    kv.set("train.init_scale", train.init_scale);
    kv.set("train.val_fraction", train.val_fraction);
    kv.set("train.shared1", static_cast<std::uint64_t>(arch.shared1));
    kv.set("train.shared2", static_cast<std::uint64_t>(arch.shared2));
    kv.set("train.branch1", static_cast<std::uint64_t>(arch.branch1));
    kv.set("train.branch2", static_cast<std::uint64_t>(arch.branch2));

    kv.set("cluster.k", static_cast<std::uint64_t>(kmeans.k));
    kv.set("cluster.seed", kmeans.seed);
    kv.set("cluster.max_iters", static_cast<std::uint64_t>(kmeans.max_iters));
    kv.set("cluster.restarts", static_cast<std::uint64_t>(kmeans.restarts));
    kv.set("cluster.images", static_cast<std::uint64_t>(cluster_images));
    kv.set("cluster.top", static_cast<std::uint64_t>(cluster_top));
    kv.set("cluster.lambda", cluster_lambda);
    kv.set("cluster.face_threshold", face_threshold);

    kv.set("edit.mode", to_string(edit_mode));
    kv.set("edit.local", to_string(edit_local));
    kv.set("edit.request", edit_request);
    kv.set("edit.latent", edit_latent);
    kv.set("edit.latent_seed", edit_latent_seed);
    kv.set("edit.name", edit_name);
    kv.set("edit.baseline_strength", baseline_strength);
    kv.set("edit.cluster_ratio", cluster_ratio);
    kv.set("edit.lr", edit_opt.learning_rate);
    kv.set("edit.iterations", static_cast<std::uint64_t>(edit_opt.iterations));
    kv.set("edit.tolerance", edit_opt.tolerance);

    kv.set("local.alpha", local.alpha);
    kv.set("local.beta", local.beta);
    kv.set("local.lr", local.learning_rate);
    kv.set("local.iterations", static_cast<std::uint64_t>(local.iterations));
    kv.set("local.tolerance", local.tolerance);
    kv.set("local.adaptive", local.adaptive ? "true" : "false");

    kv.set("transfer.lr", transfer_opt.learning_rate);
    kv.set("transfer.iterations", static_cast<std::uint64_t>(transfer_opt.iterations));
    kv.set("transfer.tolerance", transfer_opt.tolerance);
    kv.set("transfer.source", transfer_source);
    kv.set("transfer.target", transfer_target);
    kv.set("transfer.source_seed", transfer_source_seed);
    kv.set("transfer.target_seed", transfer_target_seed);

    for (const auto& r : recipes) kv.set("recipe." + r.name, format_au_list(r.aus));
    kv.set("recipe.name", recipe_name);
    kv.set("recipe.scale", recipe_scale);
    return kv;
  }

  Eigen::MatrixXd au_correlation(std::size_t au_count) const {
    if (data_preset == "identity")
      return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(au_count), static_cast<Eigen::Index>(au_count));
    require(data_au_a < au_count && data_au_b < au_count && data_au_a != data_au_b, ErrorKind::invalid_argument,
            "data.au_a and data.au_b must be distinct AU indices");
    return synth::pair_correlation(au_count, data_au_a, data_au_b, data_rho);
  }

  const EditRecipe& recipe(const std::string& name) const {
    for (const auto& r : recipes)
      if (r.name == name) return r;
    std::string known;
    for (const auto& r : recipes) known += (known.empty() ? "" : ", ") + r.name;
    fail(ErrorKind::invalid_argument, "unknown recipe '" + name + "' (known: " + known + ")");
  }

 private:
  static bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(ErrorKind::format, key + ": expected true or false, got '" + s + "'");
  }
};

}  // namespace auedit::pipeline
