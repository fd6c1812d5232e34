#pragma once

// The six pipeline commands.  Each one reads upstream artifacts from the
// shared output root, writes its own subdirectory atomically and returns the
// values it wrote so callers can inspect them without reparsing files.
//
//   <out>/dataset     synth-dataset
//   <out>/predictor   train
//   <out>/analysis    analyze
//   <out>/<name>      edit (edit.name), transfer, recipe-<recipe>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "auedit/clustering/relations.hpp"
#include "auedit/clustering/spherical_kmeans.hpp"
#include "auedit/core/dataset.hpp"
#include "auedit/core/png.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/directions/directions.hpp"
#include "auedit/localedit/localedit.hpp"
#include "auedit/pipeline/config.hpp"
#include "auedit/pipeline/report.hpp"
#include "auedit/pipeline/workspace.hpp"
#include "auedit/predictor/io.hpp"
#include "auedit/predictor/train.hpp"
#include "auedit/synthgen/generator.hpp"
#include "auedit/synthgen/oracle.hpp"
#include "auedit/synthgen/sampler.hpp"

namespace auedit::pipeline {

// Generator and oracle as recorded by synth-dataset.
struct World {
  synth::SynthGenerator gen;
  synth::AUOracle oracle;

  std::size_t au_count() const { return oracle.au_count(); }
  std::string au_name(std::size_t s) const { return oracle.definitions()[s].name; }
  std::vector<std::string> au_names() const {
    std::vector<std::string> n;
    for (std::size_t s = 0; s < au_count(); ++s) n.push_back(au_name(s));
    return n;
  }
  // Window of the AU's part on the edit-layer grid.
  BinaryMask part_mask(std::size_t s) const {
    const auto& w = gen.parts()[oracle.part_of(s)].window;
    BinaryMask m(gen.config().height, gen.config().width);
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = w.contains(r, c) ? 1 : 0;
    return m;
  }
};

inline World load_world(const fs::path& out) {
  require_artifact(out / "dataset" / "generator.txt", "synth-dataset");
  require_artifact(out / "dataset" / "oracle.txt", "synth-dataset");
  synth::SynthGenerator gen(synth::GeneratorConfig::from_kv(KeyValues::load(out / "dataset" / "generator.txt")));
  auto oracle = synth::AUOracle::from_kv(gen, KeyValues::load(out / "dataset" / "oracle.txt"));
  return {std::move(gen), std::move(oracle)};
}

inline DenseTensor latent_tensor(const LatentVector& w) {
  return DenseTensor::f32({w.size()}, to_f32(std::span<const double>(w.values().data(), w.size())));
}

inline LatentVector load_latent(const fs::path& path, std::size_t d) {
  require(fs::exists(path), ErrorKind::missing_artifact, "latent file not found: " + path.string());
  const auto t = load_tensor(path);
  require(t.dtype() == DType::f32, ErrorKind::format, "latent file must hold f32 values");
  require(t.size() == d && (t.rank() == 1 || (t.rank() == 2 && t.dim(0) == 1)), ErrorKind::dimension,
          fmt::format("latent file {} must hold {} values as a vector", path.string(), d));
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  auto data = t.f32_data();
  for (std::size_t i = 0; i < d; ++i) v[static_cast<Eigen::Index>(i)] = data[i];
  return LatentVector(std::move(v));
}

// A fresh latent drawn the way dataset rows are, with independent AUs.
inline LatentVector sample_latent(const World& world, const PipelineConfig& cfg, std::uint64_t seed) {
  const auto S = static_cast<Eigen::Index>(world.au_count());
  return synth::sample_dataset(world.gen, world.oracle, 1, Eigen::MatrixXd::Identity(S, S), seed, cfg.sampler)
      .latents.front();
}

inline LatentVector resolve_latent(const World& world, const PipelineConfig& cfg, const std::string& file,
                                   std::uint64_t seed) {
  return file.empty() ? sample_latent(world, cfg, seed) : load_latent(file, world.gen.latent_dim());
}

inline void write_effective_config(const PipelineConfig& cfg, const StagedDir& stage) {
  cfg.to_kv().save(stage / "effective-config.txt");
}

// ---- synth-dataset ------------------------------------------------------------------

struct DatasetOutcome {
  LatentDataset dataset;
  Eigen::MatrixXd label_correlation;  // empty when n < 2
};

// Pearson correlation of label columns; constant columns give NaN.
inline Eigen::MatrixXd label_correlation(const LatentDataset& ds) {
  const auto S = static_cast<Eigen::Index>(ds.au_count);
  const auto n = ds.size();
  if (n < 2) return {};
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), S);
  for (std::size_t i = 0; i < n; ++i) y.row(static_cast<Eigen::Index>(i)) = ds.labels[i].values().transpose();
  const Eigen::RowVectorXd mean = y.colwise().mean();
  y.rowwise() -= mean;
  const Eigen::MatrixXd cov = y.transpose() * y;
  Eigen::MatrixXd c(S, S);
  for (Eigen::Index a = 0; a < S; ++a)
    for (Eigen::Index b = 0; b < S; ++b) {
      const double den = std::sqrt(cov(a, a) * cov(b, b));
      c(a, b) = den > 0.0 ? cov(a, b) / den : std::numeric_limits<double>::quiet_NaN();
    }
  return c;
}

inline DatasetOutcome cmd_synth_dataset(const PipelineConfig& cfg, const fs::path& out) {
  OutputLock lock(out);
  synth::SynthGenerator gen(cfg.gen);
  synth::AUOracle oracle(gen, synth::default_au_definitions(), cfg.oracle_seed);
  DatasetOutcome res;
  res.dataset = synth::sample_dataset(gen, oracle, cfg.data_n, cfg.au_correlation(oracle.au_count()), cfg.data_seed,
                                      cfg.sampler);
  StagedDir stage(out, "dataset");
  dataset_save(res.dataset, stage.path());
  gen.to_kv().save(stage / "generator.txt");
  oracle.to_kv().save(stage / "oracle.txt");
  if (!res.dataset.empty()) {
    std::vector<ImageTensor> images;
    for (std::size_t i = 0; i < std::min(cfg.data_grid, res.dataset.size()); ++i)
      images.push_back(gen.generate(res.dataset.latents[i]).image);
    if (!images.empty()) write_png(stage / "samples.png", image_grid(images, 4));
    res.label_correlation = label_correlation(res.dataset);
    if (res.label_correlation.size() > 0) {
      std::vector<std::string> names;
      for (const auto& d : oracle.definitions()) names.push_back(d.name);
      matrix_csv(res.label_correlation, "au", names, names).save(stage / "label_correlation.csv");
    }
  }
  write_effective_config(cfg, stage);
  stage.commit();
  return res;
}

// ---- train ---------------------------------------------------------------------------------

struct TrainOutcome {
  predictor::PredictorWeights weights;  // as stored (f32-rounded)
  predictor::TrainReport report;
  double seconds = 0.0;
};

inline TrainOutcome cmd_train(const PipelineConfig& cfg, const fs::path& out) {
  OutputLock lock(out);
  require_artifact(out / "dataset" / "meta.txt", "synth-dataset");
  const auto world = load_world(out);
  const auto ds = dataset_load(out / "dataset");
  require(ds.latent_dim == world.gen.latent_dim() && ds.au_count == world.au_count(), ErrorKind::dimension,
          "dataset shape does not match its generator record");
  const auto t0 = std::chrono::steady_clock::now();
  auto trained = predictor::train(ds, cfg.train, cfg.arch);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  StagedDir stage(out, "predictor");
  predictor::save_weights(trained.weights, stage / "weights");
  std::vector<std::string> header{"epoch", "train_mse", "val_mse", "val_r2_median"};
  for (const auto& n : world.au_names()) header.push_back("val_r2_" + n);
  CsvTable table(header);
  const auto& rep = trained.report;
  for (std::size_t e = 0; e < rep.train_mse.size(); ++e) {
    std::vector<std::string> cells{CsvTable::cell(e + 1), CsvTable::cell(rep.train_mse[e]), CsvTable::cell(rep.val_mse[e])};
    const bool have_val = std::all_of(rep.val_r2[e].begin(), rep.val_r2[e].end(), [](double v) { return !std::isnan(v); });
    cells.push_back(CsvTable::cell(have_val ? predictor::median(rep.val_r2[e]) : std::numeric_limits<double>::quiet_NaN()));
    for (double v : rep.val_r2[e]) cells.push_back(CsvTable::cell(v));
    table.push(std::move(cells));
  }
  table.save(stage / "train_report.csv");
  write_png(stage / "loss_curve.png", line_plot({rep.train_mse, rep.val_mse}));
  write_effective_config(cfg, stage);
  stage.commit();
  return {predictor::load_weights(out / "predictor" / "weights"), trained.report, seconds};
}

// ---- analyze -------------------------------------------------------------------------------

struct AnalysisOutcome {
  directions::DirectionSet directions;
  Eigen::MatrixXd correlation;
  cluster::ClusterCatalog catalog;
  cluster::KMeansReport kmeans;
  cluster::Relation3 r_aukc;
  Eigen::MatrixXd r_auk, r_kc;
  cluster::AUClusterDictionary dictionary;
  std::vector<double> top1_iou;  // per AU, against the part window
};

// Channel ids of row k sorted by relation value, descending, ties by id.
inline std::vector<std::size_t> top_channels(const Eigen::MatrixXd& r_kc, std::size_t k, std::size_t n) {
  std::vector<std::size_t> ids(static_cast<std::size_t>(r_kc.cols()));
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto row = r_kc.row(static_cast<Eigen::Index>(k));
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return row(static_cast<Eigen::Index>(a)) > row(static_cast<Eigen::Index>(b));
  });
  ids.resize(std::min(n, ids.size()));
  return ids;
}

inline ImageTensor channel_image(const ActivationTensor& a, std::size_t c) {
  ImageTensor im(a.height, a.width);
  for (std::size_t i = 0; i < a.plane(); ++i) im.data[i] = a.data[c * a.plane() + i];
  return im;
}

inline AnalysisOutcome cmd_analyze(const PipelineConfig& cfg, const fs::path& out) {
  OutputLock lock(out);
  require_artifact(out / "predictor" / "weights" / "manifest.txt", "train");
  require_artifact(out / "dataset" / "meta.txt", "synth-dataset");
  const auto world = load_world(out);
  const auto& gen = world.gen;
  const auto weights = predictor::load_weights(out / "predictor" / "weights");
  const auto ds = dataset_load(out / "dataset");
  require(!ds.empty(), ErrorKind::invalid_argument, "analysis needs a non-empty dataset");
  require(weights.arch.latent_dim == gen.latent_dim() && weights.arch.au_count == world.au_count(), ErrorKind::dimension,
          "predictor shape does not match the dataset's generator");
  require(cfg.cluster_images >= 1, ErrorKind::invalid_argument, "cluster.images must be >= 1");

  AnalysisOutcome res;
  res.directions = directions::collapse_directions(weights);
  res.correlation = directions::correlation(res.directions);

  const auto n = std::min(cfg.cluster_images, ds.size());
  const auto S = world.au_count();
  std::vector<std::vector<ActivationTensor>> acts(S + 1);
  for (std::size_t i = 0; i < n; ++i) acts[0].push_back(gen.generate(ds.latents[i]).activations);
  res.catalog = cluster::fit_spherical_kmeans(acts[0], cfg.kmeans, &res.kmeans);
  res.catalog = cluster::filter_face_clusters(res.catalog, acts[0], std::vector<BinaryMask>(n, gen.foreground()),
                                              cfg.face_threshold);

  std::vector<std::vector<cluster::Membership>> members(S + 1);
  for (std::size_t i = 0; i < n; ++i) members[0].push_back(cluster::assign(res.catalog, acts[0][i]));
  for (std::size_t s = 0; s < S; ++s) {
    const Eigen::VectorXd step = res.directions.defined[s] ? Eigen::VectorXd(cfg.cluster_lambda * res.directions.unit_of(s))
                                                           : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(gen.latent_dim()));
    for (std::size_t i = 0; i < n; ++i) {
      auto a = gen.generate(directions::global_edit_linear(ds.latents[i], step)).activations;
      members[s + 1].push_back(cluster::assign(res.catalog, a));
      acts[s + 1].push_back(std::move(a));
    }
  }
  res.r_aukc = cluster::relation_au_cluster_channel(acts, members);
  res.r_auk = cluster::relation_au_cluster(res.r_aukc);
  res.r_kc = cluster::relation_region_channel(acts[0], members[0]);
  res.dictionary = cluster::build_au_dictionary(res.r_auk, res.catalog.face_clusters, cfg.cluster_top);
  for (std::size_t s = 0; s < S; ++s)
    res.top1_iou.push_back(cluster::iou(cluster::cluster_footprint(members[0], res.dictionary[s][0].cluster),
                                        world.part_mask(s)));

  StagedDir stage(out, "analysis");
  const auto names = world.au_names();
  directions::save_directions(res.directions, stage / "directions");
  matrix_csv(res.correlation, "au", names, names).save(stage / "correlation.csv");
  write_png(stage / "correlation.png", heatmap(res.correlation, 0.0, 1.0));

  cluster::save_catalog(res.catalog, stage / "catalog");
  CsvTable km({"restart", "chosen", "iteration", "objective"});
  for (std::size_t r = 0; r < res.kmeans.restart_histories.size(); ++r)
    for (std::size_t i = 0; i < res.kmeans.restart_histories[r].size(); ++i)
      km.row(r, r == res.kmeans.chosen_restart ? 1 : 0, i + 1, res.kmeans.restart_histories[r][i]);
  km.save(stage / "kmeans.csv");

  std::vector<std::string> cluster_names, channel_names;
  for (std::size_t k = 0; k < res.catalog.k(); ++k) cluster_names.push_back("k" + std::to_string(k));
  for (std::size_t c = 0; c < gen.config().channels; ++c) channel_names.push_back("c" + std::to_string(c));
  save_tensor(cluster::to_tensor(res.r_aukc), stage / "r_aukc.aued");
  save_tensor(to_tensor(res.r_auk), stage / "r_auk.aued");
  save_tensor(to_tensor(res.r_kc), stage / "r_kc.aued");
  matrix_csv(res.r_auk, "au", names, cluster_names).save(stage / "r_auk.csv");
  matrix_csv(res.r_kc, "cluster", cluster_names, channel_names).save(stage / "r_kc.csv");

  CsvTable dict({"au", "name", "rank", "cluster", "score"});
  std::string table = fmt::format("{:<4} {:<14}", "AU", "name");
  for (std::size_t r = 0; r < cfg.cluster_top; ++r) table += fmt::format(" {:>18}", fmt::format("top-{}", r + 1));
  table += "\n";
  for (std::size_t s = 0; s < S; ++s) {
    table += fmt::format("{:<4} {:<14}", s, names[s]);
    for (std::size_t r = 0; r < res.dictionary[s].size(); ++r) {
      const auto& rc = res.dictionary[s][r];
      dict.row(s, names[s], r + 1, rc.cluster, rc.score);
      table += fmt::format(" {:>18}", fmt::format("k{} ({:.4g})", rc.cluster, rc.score));
    }
    table += "\n";
  }
  dict.save(stage / "dictionary.csv");
  auedit::detail::write_text_atomic(stage / "dictionary.txt", table);

  CsvTable ious({"au", "name", "top_cluster", "iou"});
  for (std::size_t s = 0; s < S; ++s) ious.row(s, names[s], res.dictionary[s][0].cluster, res.top1_iou[s]);
  ious.save(stage / "cluster_parts.csv");

  std::vector<std::vector<ImageTensor>> rows;
  std::vector<std::string> labels;
  for (auto k : res.catalog.face_clusters) {
    std::vector<ImageTensor> tiles;
    for (auto c : top_channels(res.r_kc, k, 4)) tiles.push_back(channel_image(acts[0][0], c));
    rows.push_back(std::move(tiles));
    labels.push_back("k" + std::to_string(k));
  }
  write_png(stage / "region_channels.png", channel_montage(rows, labels));
  ImageTensor label_map(gen.config().height, gen.config().width);
  for (std::size_t h = 0; h < label_map.rows; ++h)
    for (std::size_t w = 0; w < label_map.cols; ++w)
      label_map.at(h, w) = static_cast<double>(members[0][0].label(h, w)) / static_cast<double>(std::max<std::size_t>(1, res.catalog.k() - 1));
  write_png(stage / "cluster_map.png", label_map, 4);

  write_effective_config(cfg, stage);
  stage.commit();
  return res;
}

// ---- edit and recipe -----------------------------------------------------------------------

struct EditContext {
  World world;
  predictor::PredictorWeights weights;
  directions::DirectionSet directions;
  cluster::ClusterCatalog catalog;
  cluster::AUClusterDictionary dictionary;
  Eigen::MatrixXd r_kc;
};

inline cluster::AUClusterDictionary load_dictionary(const fs::path& csv, std::size_t S) {
  std::ifstream in(csv);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read " + csv.string());
  cluster::AUClusterDictionary dict(S);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    require(cells.size() == 5, ErrorKind::format, "malformed dictionary row in " + csv.string());
    const auto au = KeyValues::parse_u64("au", cells[0]);
    require(au < S, ErrorKind::format, "dictionary names AU " + cells[0] + " beyond the AU count");
    require(KeyValues::parse_u64("rank", cells[2]) == dict[au].size() + 1, ErrorKind::format,
            "dictionary ranks out of order for AU " + cells[0]);
    dict[au].push_back({KeyValues::parse_u64("cluster", cells[3]), KeyValues::parse_double("score", cells[4])});
  }
  for (std::size_t s = 0; s < S; ++s)
    require(!dict[s].empty(), ErrorKind::format, "dictionary has no clusters for AU " + std::to_string(s));
  return dict;
}

inline EditContext load_edit_context(const fs::path& out) {
  require_artifact(out / "predictor" / "weights" / "manifest.txt", "train");
  require_artifact(out / "analysis" / "directions" / "manifest.txt", "analyze");
  require_artifact(out / "analysis" / "catalog" / "manifest.txt", "analyze");
  require_artifact(out / "analysis" / "dictionary.csv", "analyze");
  require_artifact(out / "analysis" / "r_kc.aued", "analyze");
  EditContext ctx{load_world(out), predictor::load_weights(out / "predictor" / "weights"),
                  directions::load_directions(out / "analysis" / "directions"),
                  cluster::load_catalog(out / "analysis" / "catalog"), {}, {}};
  ctx.dictionary = load_dictionary(out / "analysis" / "dictionary.csv", ctx.world.au_count());
  ctx.r_kc = matrix_from_tensor(load_tensor(out / "analysis" / "r_kc.aued"));
  return ctx;
}

inline directions::EditRequest make_request(const std::vector<std::pair<std::size_t, double>>& aus, std::size_t S,
                                            double scale = 1.0) {
  directions::EditRequest req;
  for (const auto& [au, lambda] : aus) {
    require(au < S, ErrorKind::invalid_argument, fmt::format("unknown AU {} (valid: 0..{})", au, S - 1));
    req[au] += scale * lambda;
  }
  return req;
}

struct EditOutcome {
  LatentVector w_orig, w_global;
  std::optional<LatentVector> w_local;
  ImageTensor i_orig, i_global, i_local, i_baseline;
  local::EditMask mask;
  AUVector pred_orig, pred_global;
  AUVector oracle_orig, oracle_global, oracle_local;
};

inline EditOutcome run_edit(const EditContext& ctx, const PipelineConfig& cfg, const LatentVector& w,
                            const directions::EditRequest& req, const StagedDir& stage) {
  const auto& gen = ctx.world.gen;
  const auto& oracle = ctx.world.oracle;
  const auto S = ctx.world.au_count();
  EditOutcome res;
  res.w_orig = w;
  std::vector<std::pair<std::string, directions::OptimizeResult>> traces;
  if (cfg.edit_mode == GlobalMode::linear) {
    res.w_global = directions::global_edit_linear(w, directions::combine(ctx.directions, req));
  } else {
    auto target = predictor::forward(ctx.weights, w);
    std::set<std::size_t> frozen;
    for (std::size_t s = 0; s < S; ++s) {
      if (auto it = req.find(s); it != req.end()) target[s] += it->second;
      else frozen.insert(s);
    }
    auto opt = directions::global_edit_optimize(ctx.weights, w, target, frozen, cfg.edit_opt);
    res.w_global = opt.latent;
    traces.emplace_back("global", std::move(opt));
  }
  const auto o = gen.generate(res.w_orig);
  const auto g = gen.generate(res.w_global);
  res.i_orig = o.image;
  res.i_global = g.image;

  std::vector<std::size_t> selected;
  for (const auto& [au, lambda] : req)
    for (auto k : cluster::associated_clusters(ctx.dictionary, au, cfg.cluster_ratio)) selected.push_back(k);
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  res.mask = local::build_mask(cluster::assign(ctx.catalog, g.activations), selected, gen.upsample_y());

  std::vector<double> local_losses;
  switch (cfg.edit_local) {
    case LocalMode::none:
      res.i_local = res.i_global;
      break;
    case LocalMode::local_opt: {
      auto le = local::local_edit_optimize(gen, res.w_orig, res.w_global, res.mask, cfg.local);
      res.w_local = le.latent;
      res.i_local = std::move(le.image);
      local_losses = std::move(le.losses);
      break;
    }
    case LocalMode::multiplex:
      res.i_local = gen.render(local::multiplex(o.activations, g.activations, res.mask.low));
      break;
  }
  res.i_baseline = selected.empty()
                       ? res.i_orig
                       : gen.render(local::baseline_channel_interpolation(o.activations, g.activations, ctx.r_kc,
                                                                          ctx.dictionary[req.begin()->first][0].cluster,
                                                                          cfg.baseline_strength));
  res.pred_orig = predictor::forward(ctx.weights, res.w_orig);
  res.pred_global = predictor::forward(ctx.weights, res.w_global);
  res.oracle_orig = oracle.measure(res.i_orig);
  res.oracle_global = oracle.measure(res.i_global);
  res.oracle_local = oracle.measure(res.i_local);

  write_png(stage / "triptych.png",
            labeled_row({res.i_orig, res.i_global, res.i_local}, {"original", "global", "local " + to_string(cfg.edit_local)}));
  write_png(stage / "baseline.png", res.i_baseline, 2);
  write_png(stage / "mask.png", mask_image(res.mask.high));
  save_tensor(to_tensor(res.mask.low), stage / "mask_low.aued");
  save_tensor(to_tensor(res.mask.high), stage / "mask_high.aued");
  save_tensor(latent_tensor(res.w_orig), stage / "w_orig.aued");
  save_tensor(latent_tensor(res.w_global), stage / "w_global.aued");
  if (res.w_local) save_tensor(latent_tensor(*res.w_local), stage / "w_local.aued");
  save_tensor(to_tensor(res.i_orig), stage / "i_orig.aued");
  save_tensor(to_tensor(res.i_global), stage / "i_global.aued");
  save_tensor(to_tensor(res.i_local), stage / "i_local.aued");

  CsvTable regions({"region", "pixels", "global_mean_abs", "local_mean_abs", "baseline_mean_abs"});
  auto region_row = [&](const std::string& name, const BinaryMask& m) {
    regions.row(name, m.count(), local::masked_mean_abs(res.i_global, res.i_orig, m, true),
                local::masked_mean_abs(res.i_local, res.i_orig, m, true),
                local::masked_mean_abs(res.i_baseline, res.i_orig, m, true));
  };
  for (const auto& part : gen.parts()) {
    const auto win = part.window.scaled(gen.upsample_y(), gen.upsample_x());
    BinaryMask m(res.i_orig.rows, res.i_orig.cols);
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = win.contains(r, c) ? 1 : 0;
    region_row(part.name, m);
  }
  BinaryMask outside = res.mask.high;
  for (auto& v : outside.data) v = v ? 0 : 1;
  region_row("mask-inside", res.mask.high);
  region_row("mask-outside", outside);
  region_row("all", BinaryMask(res.i_orig.rows, res.i_orig.cols, 1));
  regions.save(stage / "metrics.csv");

  CsvTable aus({"au", "name", "requested", "pred_orig", "pred_global", "pred_local", "oracle_orig", "oracle_global",
                "oracle_local"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool has_local = res.w_local.has_value();
  const auto pred_local = has_local ? predictor::forward(ctx.weights, *res.w_local) : AUVector(S);
  for (std::size_t s = 0; s < S; ++s) {
    const auto it = req.find(s);
    aus.row(s, ctx.world.au_name(s), it == req.end() ? 0.0 : it->second, res.pred_orig[s], res.pred_global[s],
            has_local ? pred_local[s] : nan, res.oracle_orig[s], res.oracle_global[s], res.oracle_local[s]);
  }
  aus.save(stage / "aus.csv");

  CsvTable losses({"stage", "iteration", "loss"});
  for (const auto& [name, t] : traces)
    for (std::size_t i = 0; i < t.losses.size(); ++i) losses.row(name, i, t.losses[i]);
  for (std::size_t i = 0; i < local_losses.size(); ++i) losses.row("local", i, local_losses[i]);
  losses.save(stage / "losses.csv");
  return res;
}

inline EditOutcome cmd_edit(const PipelineConfig& cfg, const fs::path& out) {
  OutputLock lock(out);
  const auto ctx = load_edit_context(out);
  const auto req = make_request(parse_au_list("edit.request", cfg.edit_request), ctx.world.au_count());
  const auto w = resolve_latent(ctx.world, cfg, cfg.edit_latent, cfg.edit_latent_seed);
  require(!cfg.edit_name.empty() && cfg.edit_name.find('/') == std::string::npos && cfg.edit_name[0] != '.',
          ErrorKind::invalid_argument, "edit.name must be a plain directory name");
  StagedDir stage(out, cfg.edit_name);
  auto res = run_edit(ctx, cfg, w, req, stage);
  write_effective_config(cfg, stage);
  stage.commit();
  return res;
}

inline EditOutcome cmd_recipe(const PipelineConfig& cfg, const fs::path& out) {
  OutputLock lock(out);
  const auto& recipe = cfg.recipe(cfg.recipe_name);
  const auto ctx = load_edit_context(out);
  const auto req = make_request(recipe.aus, ctx.world.au_count(), cfg.recipe_scale);
  const auto w = resolve_latent(ctx.world, cfg, cfg.edit_latent, cfg.edit_latent_seed);
  StagedDir stage(out, "recipe-" + recipe.name);
  auto res = run_edit(ctx, cfg, w, req, stage);
  write_effective_config(cfg, stage);
  stage.commit();
  return res;
}

// ---- transfer ------------------------------------------------------------------------------

struct TransferOutcome {
  LatentVector w_source, w_target, w_result;
  AUVector pred_source, pred_target, pred_result;
  AUVector oracle_source, oracle_target, oracle_result;
  double max_gap = 0.0;
  std::size_t toward = 0;  // AUs whose oracle value moved closer to the target
  directions::OptimizeResult optimization;
};

inline TransferOutcome transfer_latent(const World& world, const predictor::PredictorWeights& weights,
                                       const LatentVector& source, const LatentVector& target,
                                       const directions::OptimizeConfig& opt) {
  TransferOutcome res;
  res.w_source = source;
  res.w_target = target;
  res.pred_target = predictor::forward(weights, target);
  res.optimization = directions::global_edit_optimize(weights, source, res.pred_target, {}, opt);
  res.w_result = res.optimization.latent;
  res.pred_source = predictor::forward(weights, source);
  res.pred_result = predictor::forward(weights, res.w_result);
  res.oracle_source = world.oracle.measure(world.gen.generate(source).image);
  res.oracle_target = world.oracle.measure(world.gen.generate(target).image);
  res.oracle_result = world.oracle.measure(world.gen.generate(res.w_result).image);
  for (std::size_t s = 0; s < world.au_count(); ++s) {
    res.max_gap = std::max(res.max_gap, std::abs(res.pred_result[s] - res.pred_target[s]));
    res.toward += std::abs(res.oracle_result[s] - res.oracle_target[s]) < std::abs(res.oracle_source[s] - res.oracle_target[s]);
  }
  return res;
}

inline TransferOutcome cmd_transfer(const PipelineConfig& cfg, const fs::path& out) {
  OutputLock lock(out);
  require_artifact(out / "predictor" / "weights" / "manifest.txt", "train");
  const auto world = load_world(out);
  const auto weights = predictor::load_weights(out / "predictor" / "weights");
  const auto source = resolve_latent(world, cfg, cfg.transfer_source, cfg.transfer_source_seed);
  const auto target = resolve_latent(world, cfg, cfg.transfer_target, cfg.transfer_target_seed);
  auto res = transfer_latent(world, weights, source, target, cfg.transfer_opt);

  StagedDir stage(out, "transfer");
  const auto& gen = world.gen;
  write_png(stage / "triptych.png", labeled_row({gen.generate(source).image, gen.generate(target).image,
                                                 gen.generate(res.w_result).image},
                                                {"source", "target", "result"}));
  save_tensor(latent_tensor(source), stage / "w_source.aued");
  save_tensor(latent_tensor(target), stage / "w_target.aued");
  save_tensor(latent_tensor(res.w_result), stage / "w_result.aued");
  CsvTable aus({"au", "name", "pred_source", "pred_target", "pred_result", "gap", "oracle_source", "oracle_target",
                "oracle_result", "toward"});
  for (std::size_t s = 0; s < world.au_count(); ++s) {
    const bool toward = std::abs(res.oracle_result[s] - res.oracle_target[s]) <
                        std::abs(res.oracle_source[s] - res.oracle_target[s]);
    aus.row(s, world.au_name(s), res.pred_source[s], res.pred_target[s], res.pred_result[s],
            std::abs(res.pred_result[s] - res.pred_target[s]), res.oracle_source[s], res.oracle_target[s],
            res.oracle_result[s], toward ? 1 : 0);
  }
  aus.save(stage / "aus.csv");
  CsvTable losses({"iteration", "loss"});
  for (std::size_t i = 0; i < res.optimization.losses.size(); ++i) losses.row(i, res.optimization.losses[i]);
  losses.save(stage / "losses.csv");
  write_effective_config(cfg, stage);
  stage.commit();
  return res;
}

}  // namespace auedit::pipeline
