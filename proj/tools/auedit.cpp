// auedit command-line front end.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "auedit/pipeline/commands.hpp"

namespace {

using namespace auedit;
using namespace auedit::pipeline;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output root shared by all commands")->capture_default_str();
  cmd->add_option("--seed", c.seed, "master seed; unset component seeds derive from it");
  cmd->add_option("--set", c.sets, "extra key=value override (repeatable)");
}

// Layers: config file, then --set, then the command's own flags.
PipelineConfig resolve(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  KeyValues kv = c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_argument, "--set expects key=value, got '" + s + "'");
    kv.set(KeyValues::trim(s.substr(0, eq)), KeyValues::trim(s.substr(eq + 1)));
  }
  if (c.seed) kv.set("seed", *c.seed);
  for (const auto& [k, v] : flags)
    if (!v.empty()) kv.set(k, v);
  return PipelineConfig::from_kv(kv);
}

int exit_code(ErrorKind k) { return 10 + static_cast<int>(k); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic facial action-unit editing pipeline"};
  app.require_subcommand(1);
  Common common;
  std::string latent, latent_seed, request, mode, local_mode, name;
  std::string source, target, source_seed, target_seed;
  std::string recipe, scale;

  auto* synth = app.add_subcommand("synth-dataset", "sample latents and oracle AU labels");
  auto* train = app.add_subcommand("train", "fit the AU predictor");
  auto* analyze = app.add_subcommand("analyze", "directions, clusters, relations and the AU dictionary");
  auto* edit = app.add_subcommand("edit", "global plus local edit of one latent");
  auto* transfer = app.add_subcommand("transfer", "move a source latent's predicted AUs onto a target's");
  auto* rec = app.add_subcommand("recipe", "apply a named multi-AU recipe");
  for (auto* c : {synth, train, analyze, edit, transfer, rec}) add_common(c, common);

  for (auto* c : {edit, rec}) {
    c->add_option("--latent", latent, "AUED latent file (default: sample with --latent-seed)");
    c->add_option("--latent-seed", latent_seed, "seed for a sampled latent");
    c->add_option("--mode", mode, "global edit: linear | optimize");
    c->add_option("--local", local_mode, "local edit: none | local-opt | multiplex");
  }
  edit->add_option("--au", request, "requested AU deltas, e.g. 0:2,5:1");
  edit->add_option("--name", name, "output subdirectory");
  transfer->add_option("--source", source, "AUED source latent");
  transfer->add_option("--target", target, "AUED target latent");
  transfer->add_option("--source-seed", source_seed, "seed for a sampled source latent");
  transfer->add_option("--target-seed", target_seed, "seed for a sampled target latent");
  rec->add_option("--name", recipe, "recipe name");
  rec->add_option("--scale", scale, "intensity scale for every lambda");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = common.out;
    if (synth->parsed()) {
      const auto res = cmd_synth_dataset(resolve(common, {}), out);
      fmt::print("wrote {} samples to {}\n", res.dataset.size(), (out / "dataset").string());
    } else if (train->parsed()) {
      const auto res = cmd_train(resolve(common, {}), out);
      if (!res.report.val_r2.empty())
        fmt::print("median validation R^2 {:.4f} after {} epochs ({:.1f} s)\n",
                   predictor::median(res.report.val_r2.back()), res.report.val_r2.size(), res.seconds);
      else
        fmt::print("wrote initial weights (0 epochs)\n");
    } else if (analyze->parsed()) {
      const auto res = cmd_analyze(resolve(common, {}), out);
      fmt::print("{} face clusters; top-1 IoU per AU:", res.catalog.face_clusters.size());
      for (double v : res.top1_iou) fmt::print(" {:.2f}", v);
      fmt::print("\n");
    } else if (edit->parsed()) {
      cmd_edit(resolve(common, {{"edit.latent", latent},
                                {"edit.latent_seed", latent_seed},
                                {"edit.request", request},
                                {"edit.mode", mode},
                                {"edit.local", local_mode},
                                {"edit.name", name}}),
               out);
      fmt::print("wrote {}\n", (out / (name.empty() ? "edit" : name)).string());
    } else if (transfer->parsed()) {
      const auto res = cmd_transfer(resolve(common, {{"transfer.source", source},
                                                     {"transfer.target", target},
                                                     {"transfer.source_seed", source_seed},
                                                     {"transfer.target_seed", target_seed}}),
                                    out);
      fmt::print("max prediction gap {:.4f}; {} of {} oracle AUs moved toward the target\n", res.max_gap, res.toward,
                 res.pred_target.size());
    } else if (rec->parsed()) {
      const auto cfg = resolve(common, {{"edit.latent", latent},
                                        {"edit.latent_seed", latent_seed},
                                        {"edit.mode", mode},
                                        {"edit.local", local_mode},
                                        {"recipe.name", recipe},
                                        {"recipe.scale", scale}});
      cmd_recipe(cfg, out);
      fmt::print("wrote {}\n", (out / ("recipe-" + cfg.recipe_name)).string());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "auedit: error [%s]: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "auedit: error [internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
