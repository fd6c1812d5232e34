#pragma once

// AU-cluster-channel, AU-cluster and region-channel relations, and the
// AU -> cluster dictionary built from them.

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/clustering/spherical_kmeans.hpp"
#include "auedit/core/error.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/core/types.hpp"

namespace auedit::cluster {

// Row-major AU x K x C.
struct Relation3 {
  std::size_t aus = 0, clusters = 0, channels = 0;
  std::vector<double> data;

  Relation3() = default;
  Relation3(std::size_t a, std::size_t k, std::size_t c) : aus(a), clusters(k), channels(c), data(a * k * c, 0.0) {}
  double& at(std::size_t a, std::size_t k, std::size_t c) { return data[(a * clusters + k) * channels + c]; }
  double at(std::size_t a, std::size_t k, std::size_t c) const { return data[(a * clusters + k) * channels + c]; }
};

inline DenseTensor to_tensor(const Relation3& r) {
  return DenseTensor::f32({r.aus, r.clusters, r.channels}, to_f32(r.data));
}

// acts[0] holds the neutral images, acts[s + 1] the images edited for AU s;
// members is indexed the same way.
//   R[s,k,c] = sum_n sum_hw U[s+1,n,k]*(A[s+1,n,c] - A[0,n,c])^2 / sum_hw U[s+1,n,k]
inline Relation3 relation_au_cluster_channel(const std::vector<std::vector<ActivationTensor>>& acts,
                                             const std::vector<std::vector<Membership>>& members) {
  require(acts.size() >= 2, ErrorKind::invalid_argument, "need neutral slot plus at least one AU slot");
  require(acts.size() == members.size(), ErrorKind::dimension, "activation and membership slot counts differ");
  const auto n = acts[0].size();
  require(n > 0, ErrorKind::invalid_argument, "no images in relation input");
  const auto& ref = acts[0][0];
  const auto K = members[0].empty() ? 0 : members[0][0].clusters;
  require(K > 0, ErrorKind::dimension, "memberships missing");
  Relation3 r(acts.size() - 1, K, ref.channels);
  const auto plane = ref.plane();
  std::vector<double> num(K * ref.channels);
  std::vector<std::size_t> den(K);
  for (std::size_t a = 0; a < acts.size(); ++a) {
    require(acts[a].size() == n && members[a].size() == n, ErrorKind::dimension, "slot sizes differ");
    for (std::size_t i = 0; i < n; ++i) {
      require(acts[a][i].same_shape(ref), ErrorKind::dimension, "activation shapes differ");
      const auto& u = members[a][i];
      require(u.clusters == K && u.height == ref.height && u.width == ref.width, ErrorKind::dimension,
              "membership shape does not match activations");
    }
  }
  for (std::size_t a = 1; a < acts.size(); ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = acts[a][i].data;
      const auto& o = acts[0][i].data;
      const auto& u = members[a][i];
      std::fill(num.begin(), num.end(), 0.0);
      std::fill(den.begin(), den.end(), 0);
      for (std::size_t p = 0; p < plane; ++p) {
        const auto k = u.label(p / ref.width, p % ref.width);
        ++den[k];
        for (std::size_t c = 0; c < ref.channels; ++c) {
          const double d = e[c * plane + p] - o[c * plane + p];
          num[k * ref.channels + c] += d * d;
        }
      }
      for (std::size_t k = 0; k < K; ++k) {
        if (den[k] == 0) continue;
        for (std::size_t c = 0; c < ref.channels; ++c)
          r.at(a - 1, k, c) += num[k * ref.channels + c] / static_cast<double>(den[k]);
      }
    }
  }
  return r;
}

// R[s,k] = sum_c R[s,k,c]
inline Eigen::MatrixXd relation_au_cluster(const Relation3& r) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(r.aus), static_cast<Eigen::Index>(r.clusters));
  for (std::size_t a = 0; a < r.aus; ++a)
    for (std::size_t k = 0; k < r.clusters; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < r.channels; ++c) s += r.at(a, k, c);
      m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) = s;
    }
  return m;
}

// R[k,c] = sum_n sum_hw U[n,k]*A[n,c]^2 / sum_hw U[n,k]
inline Eigen::MatrixXd relation_region_channel(const std::vector<ActivationTensor>& acts,
                                               const std::vector<Membership>& members) {
  require(!acts.empty() && acts.size() == members.size(), ErrorKind::dimension,
          "need one membership per activation map");
  const auto& ref = acts[0];
  const auto K = members[0].clusters;
  const auto plane = ref.plane();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(ref.channels));
  Eigen::MatrixXd num(r.rows(), r.cols());
  std::vector<std::size_t> den(K);
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const auto& a = acts[i];
    const auto& u = members[i];
    require(a.same_shape(ref), ErrorKind::dimension, "activation shapes differ");
    require(u.clusters == K && u.height == a.height && u.width == a.width, ErrorKind::dimension,
            "membership shape does not match activations");
    num.setZero();
    std::fill(den.begin(), den.end(), 0);
    for (std::size_t p = 0; p < plane; ++p) {
      const auto k = u.label(p / a.width, p % a.width);
      ++den[k];
      for (std::size_t c = 0; c < a.channels; ++c) {
        const double v = a.data[c * plane + p];
        num(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) += v * v;
      }
    }
    for (std::size_t k = 0; k < K; ++k)
      if (den[k] > 0) r.row(static_cast<Eigen::Index>(k)) += num.row(static_cast<Eigen::Index>(k)) / static_cast<double>(den[k]);
  }
  return r;
}

struct RankedCluster {
  std::size_t cluster = 0;
  double score = 0.0;
};

using AUClusterDictionary = std::vector<std::vector<RankedCluster>>;

// Top-t face clusters per AU by R_auk, descending; ties go to the lower id.
inline AUClusterDictionary build_au_dictionary(const Eigen::MatrixXd& r_auk, const std::vector<std::size_t>& face,
                                               std::size_t t) {
  require(t <= face.size(), ErrorKind::invalid_argument,
          "t = " + std::to_string(t) + " exceeds face cluster count " + std::to_string(face.size()));
  AUClusterDictionary dict;
  for (Eigen::Index a = 0; a < r_auk.rows(); ++a) {
    std::vector<RankedCluster> row;
    for (auto k : face) {
      require(static_cast<Eigen::Index>(k) < r_auk.cols(), ErrorKind::invalid_argument, "face cluster id out of range");
      row.push_back({k, r_auk(a, static_cast<Eigen::Index>(k))});
    }
    std::sort(row.begin(), row.end(), [](const RankedCluster& x, const RankedCluster& y) {
      return x.score != y.score ? x.score > y.score : x.cluster < y.cluster;
    });
    row.resize(t);
    dict.push_back(std::move(row));
  }
  return dict;
}

// Dictionary entries of one AU scoring at least ratio * its top score; the
// top-1 cluster is always kept.
inline std::vector<std::size_t> associated_clusters(const AUClusterDictionary& dict, std::size_t au, double ratio) {
  require(au < dict.size(), ErrorKind::invalid_argument, "AU " + std::to_string(au) + " not in dictionary");
  require(ratio >= 0.0 && ratio <= 1.0, ErrorKind::invalid_argument, "cluster ratio must lie in [0, 1]");
  std::vector<std::size_t> out;
  const auto& row = dict[au];
  for (std::size_t r = 0; r < row.size(); ++r)
    if (r == 0 || row[r].score >= ratio * row[0].score) out.push_back(row[r].cluster);
  return out;
}

// Pixels assigned to cluster k in at least `fraction` of the given maps.
inline BinaryMask cluster_footprint(const std::vector<Membership>& members, std::size_t k, double fraction = 0.5) {
  require(!members.empty(), ErrorKind::invalid_argument, "no memberships given");
  const auto h = members[0].height, w = members[0].width;
  BinaryMask m(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t hits = 0;
      for (const auto& u : members) hits += u.at(k, r, c);
      m.at(r, c) = static_cast<double>(hits) >= fraction * static_cast<double>(members.size()) ? 1 : 0;
    }
  return m;
}

inline double iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.rows == b.rows && a.cols == b.cols, ErrorKind::dimension, "mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] && b.data[i];
    uni += a.data[i] || b.data[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace auedit::cluster
