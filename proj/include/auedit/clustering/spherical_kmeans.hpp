#pragma once

// Spherical k-means over edit-layer activations. Each spatial location's
// channel column is one sample; similarity is cosine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/core/types.hpp"

namespace auedit::cluster {

// K x H x W one-hot memberships for one image.
struct Membership {
  std::size_t clusters = 0, height = 0, width = 0;
  std::vector<std::uint8_t> data;

  Membership() = default;
  Membership(std::size_t k, std::size_t h, std::size_t w) : clusters(k), height(h), width(w), data(k * h * w, 0) {}

  std::uint8_t at(std::size_t k, std::size_t h, std::size_t w) const { return data[(k * height + h) * width + w]; }
  std::uint8_t& at(std::size_t k, std::size_t h, std::size_t w) { return data[(k * height + h) * width + w]; }
  std::size_t label(std::size_t h, std::size_t w) const {
    for (std::size_t k = 0; k < clusters; ++k)
      if (at(k, h, w)) return k;
    return clusters;
  }
  std::size_t count(std::size_t k) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < height * width; ++i) n += data[k * height * width + i];
    return n;
  }
  friend bool operator==(const Membership&, const Membership&) = default;
};

struct ClusterCatalog {
  Eigen::MatrixXd centroids;  // K x C, unit rows
  std::vector<std::size_t> face_clusters;
  std::uint64_t seed = 0;

  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(centroids.cols()); }
  bool is_face(std::size_t cluster) const {
    return std::find(face_clusters.begin(), face_clusters.end(), cluster) != face_clusters.end();
  }
};

struct KMeansConfig {
  std::size_t k = 9;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  std::size_t restarts = 8;
};

struct KMeansReport {
  // Sum of sample-to-centroid cosines after each assignment step.
  std::vector<double> objective;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t reseeds = 0;
  std::vector<std::vector<double>> restart_histories;  // objective trace of every run
  std::size_t chosen_restart = 0;
};

namespace detail {

// Samples as unit rows; zero-norm rows stay zero and are flagged.
struct Samples {
  Eigen::MatrixXd x;  // n x C
  std::vector<bool> zero;
};

inline Samples gather(const std::vector<ActivationTensor>& batch) {
  require(!batch.empty(), ErrorKind::invalid_argument, "no activation maps to cluster");
  const auto c = batch.front().channels;
  const auto plane = batch.front().plane();
  Samples s;
  s.x.resize(static_cast<Eigen::Index>(batch.size() * plane), static_cast<Eigen::Index>(c));
  s.zero.assign(batch.size() * plane, false);
  std::size_t row = 0;
  for (const auto& a : batch) {
    require(a.channels == c && a.plane() == plane, ErrorKind::dimension, "activation maps differ in shape");
    for (std::size_t i = 0; i < plane; ++i, ++row) {
      double norm2 = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = a.data[ch * plane + i];
        require(std::isfinite(v), ErrorKind::numerical, "non-finite activation");
        s.x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(ch)) = v;
        norm2 += v * v;
      }
      if (norm2 > 0.0) {
        s.x.row(static_cast<Eigen::Index>(row)) /= std::sqrt(norm2);
      } else {
        s.zero[row] = true;
      }
    }
  }
  return s;
}

// Argmax cosine per sample, lowest cluster id on ties; zero samples -> 0.
inline std::vector<std::size_t> nearest(const Samples& s, const Eigen::MatrixXd& centroids, std::vector<double>* best) {
  const Eigen::MatrixXd sim = s.x * centroids.transpose();
  std::vector<std::size_t> labels(static_cast<std::size_t>(sim.rows()), 0);
  if (best) best->assign(labels.size(), 0.0);
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    std::size_t arg = 0;
    double top = sim(i, 0);
    if (!s.zero[static_cast<std::size_t>(i)]) {
      for (Eigen::Index k = 1; k < sim.cols(); ++k)
        if (sim(i, k) > top) {
          top = sim(i, k);
          arg = static_cast<std::size_t>(k);
        }
    } else {
      top = 0.0;
    }
    labels[static_cast<std::size_t>(i)] = arg;
    if (best) (*best)[static_cast<std::size_t>(i)] = top;
  }
  return labels;
}

}  // namespace detail

namespace detail {

// One seeded run: k-means++ seeding on the sphere (distance 1 - cosine), then
// Lloyd-style iterations: assign to max cosine, recompute normalized means.
// An empty cluster takes the sample least similar to its own centroid.
inline Eigen::MatrixXd lloyd(const Samples& s, std::size_t k, std::uint64_t seed, std::size_t max_iters,
                             KMeansReport& rep) {
  const auto n = static_cast<std::size_t>(s.x.rows());
  Rng rng(seed);
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), s.x.cols());
  {
    std::vector<double> dist(n, 1.0);
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    centroids.row(0) = s.x.row(static_cast<Eigen::Index>(first));
    for (std::size_t j = 1; j < k; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double cosv = s.zero[i] ? 0.0 : s.x.row(static_cast<Eigen::Index>(i)).dot(centroids.row(static_cast<Eigen::Index>(j - 1)));
        dist[i] = std::min(dist[i], std::max(0.0, 1.0 - cosv));
        total += dist[i] * dist[i];
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        for (pick = 0; pick + 1 < n; ++pick) {
          r -= dist[pick] * dist[pick];
          if (r < 0.0) break;
        }
      } else {
        pick = static_cast<std::size_t>(rng.below(n));
      }
      centroids.row(static_cast<Eigen::Index>(j)) = s.x.row(static_cast<Eigen::Index>(pick));
    }
  }

  std::vector<std::size_t> labels;
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<double> best;
    auto next = detail::nearest(s, centroids, &best);
    double obj = 0.0;
    for (double b : best) obj += b;
    rep.objective.push_back(obj);
    rep.iterations = it + 1;
    const bool stable = (next == labels);
    labels = std::move(next);
    if (stable) {
      rep.converged = true;
      break;
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (s.zero[i]) continue;
      sums.row(static_cast<Eigen::Index>(labels[i])) += s.x.row(static_cast<Eigen::Index>(i));
      ++counts[labels[i]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
      const double norm = sums.row(static_cast<Eigen::Index>(j)).norm();
      if (counts[j] == 0 || norm == 0.0) {
        empty.push_back(j);
      } else {
        centroids.row(static_cast<Eigen::Index>(j)) = sums.row(static_cast<Eigen::Index>(j)) / norm;
      }
    }
    if (!empty.empty()) {
      // Farthest samples relative to the updated centroids, ties by index.
      std::vector<double> sim(n, 2.0);
      for (std::size_t i = 0; i < n; ++i)
        if (!s.zero[i])
          sim[i] = s.x.row(static_cast<Eigen::Index>(i)).dot(centroids.row(static_cast<Eigen::Index>(labels[i])));
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] < sim[b]; });
      std::size_t used = 0;
      for (auto j : empty) {
        while (used < n && s.zero[order[used]]) ++used;
        if (used >= n) break;
        centroids.row(static_cast<Eigen::Index>(j)) = s.x.row(static_cast<Eigen::Index>(order[used++]));
        ++rep.reseeds;
      }
    }
  }

  return centroids;
}

}  // namespace detail

// Runs `restarts` seeded fits (the first with cfg.seed itself) and keeps the
// one with the highest final objective; ties go to the earlier run.
inline ClusterCatalog fit_spherical_kmeans(const std::vector<ActivationTensor>& batch, const KMeansConfig& cfg,
                                           KMeansReport* report = nullptr) {
  const auto s = detail::gather(batch);
  const auto n = static_cast<std::size_t>(s.x.rows());
  const auto k = cfg.k;
  require(k >= 1, ErrorKind::invalid_argument, "K must be >= 1");
  require(k <= n, ErrorKind::invalid_argument,
          "K = " + std::to_string(k) + " exceeds sample count " + std::to_string(n));
  require(cfg.restarts >= 1, ErrorKind::invalid_argument, "restarts must be >= 1");

  KMeansReport best;
  Eigen::MatrixXd centroids;
  std::vector<double> finals;
  std::vector<std::vector<double>> histories;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    KMeansReport rep;
    auto c = detail::lloyd(s, k, r == 0 ? cfg.seed : derive_seed(cfg.seed, r), cfg.max_iters, rep);
    const double obj = rep.objective.empty() ? -std::numeric_limits<double>::infinity() : rep.objective.back();
    finals.push_back(obj);
    histories.push_back(rep.objective);
    if (r == 0 || obj > finals[best.chosen_restart]) {
      rep.chosen_restart = r;
      best = std::move(rep);
      centroids = std::move(c);
    }
  }
  best.restart_histories = std::move(histories);
  if (report) *report = std::move(best);
  ClusterCatalog cat;
  cat.centroids = std::move(centroids);
  cat.seed = cfg.seed;
  for (std::size_t j = 0; j < k; ++j) cat.face_clusters.push_back(j);
  return cat;
}

inline Membership assign(const ClusterCatalog& cat, const ActivationTensor& a) {
  require(a.channels == cat.channels(), ErrorKind::dimension, "activation channels do not match catalog");
  const auto s = detail::gather({a});
  const auto labels = detail::nearest(s, cat.centroids, nullptr);
  Membership u(cat.k(), a.height, a.width);
  for (std::size_t i = 0; i < labels.size(); ++i) u.data[labels[i] * a.plane() + i] = 1;
  return u;
}

// Keeps cluster k iff the fraction of its members (over all images) that lie
// on the foreground is >= threshold.
inline ClusterCatalog filter_face_clusters(const ClusterCatalog& cat, const std::vector<ActivationTensor>& batch,
                                           const std::vector<BinaryMask>& foreground, double threshold = 0.5) {
  require(batch.size() == foreground.size(), ErrorKind::dimension, "one foreground mask per image required");
  std::vector<double> inside(cat.k(), 0.0), total(cat.k(), 0.0);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& m = foreground[n];
    require(m.rows == batch[n].height && m.cols == batch[n].width, ErrorKind::dimension, "mask shape mismatch");
    for (auto v : m.data) require(v <= 1, ErrorKind::invalid_argument, "foreground mask must be binary");
    const auto u = assign(cat, batch[n]);
    for (std::size_t h = 0; h < u.height; ++h)
      for (std::size_t w = 0; w < u.width; ++w) {
        const auto k = u.label(h, w);
        total[k] += 1.0;
        inside[k] += m.at(h, w);
      }
  }
  ClusterCatalog out = cat;
  out.face_clusters.clear();
  for (std::size_t k = 0; k < cat.k(); ++k) {
    const double frac = total[k] > 0.0 ? inside[k] / total[k] : 0.0;
    if (frac >= threshold) out.face_clusters.push_back(k);
  }
  require(!out.face_clusters.empty(), ErrorKind::invalid_argument, "no cluster survives face-region filtering");
  return out;
}

// ---- persistence -----------------------------------------------------------

inline void save_catalog(const ClusterCatalog& cat, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(to_tensor(cat.centroids), dir / "centroids.aued");
  KeyValues kv;
  kv.set("K", static_cast<std::uint64_t>(cat.k()));
  kv.set("C", static_cast<std::uint64_t>(cat.channels()));
  kv.set("seed", cat.seed);
  std::string face;
  for (std::size_t i = 0; i < cat.face_clusters.size(); ++i)
    face += (i ? "," : "") + std::to_string(cat.face_clusters[i]);
  kv.set("face_clusters", face);
  kv.save(dir / "manifest.txt");
}

inline ClusterCatalog load_catalog(const std::filesystem::path& dir) {
  const auto kv = KeyValues::load(dir / "manifest.txt");
  ClusterCatalog cat;
  cat.centroids = matrix_from_tensor(load_tensor(dir / "centroids.aued"));
  require(cat.k() == kv.get_u64("K") && cat.channels() == kv.get_u64("C"), ErrorKind::format,
          "catalog manifest disagrees with centroid tensor");
  cat.seed = kv.get_u64("seed");
  std::string face = kv.get("face_clusters");
  std::size_t pos = 0;
  while (pos < face.size()) {
    auto comma = face.find(',', pos);
    if (comma == std::string::npos) comma = face.size();
    cat.face_clusters.push_back(KeyValues::parse_u64("face_clusters", face.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return cat;
}

}  // namespace auedit::cluster
