#pragma once

// LatentDataset: paired latents and AU labels, stored as a directory with
// latents.aued (n x d), labels.aued (n x S) and meta.txt (seed, d, S, n).
// An empty dataset (n = 0) writes meta.txt only, since tensor dimensions
// must be >= 1.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/core/types.hpp"

namespace auedit {

struct LatentDataset {
  std::vector<LatentVector> latents;
  std::vector<AUVector> labels;
  std::uint64_t seed = 0;
  std::size_t latent_dim = 0;
  std::size_t au_count = 0;

  std::size_t size() const { return latents.size(); }
  bool empty() const { return latents.empty(); }

  void validate() const {
    require(latents.size() == labels.size(), ErrorKind::dimension,
            "dataset has " + std::to_string(latents.size()) + " latents but " + std::to_string(labels.size()) +
                " labels");
    for (const auto& w : latents)
      require(w.size() == latent_dim, ErrorKind::dimension, "latent length differs from latent_dim");
    for (const auto& y : labels)
      require(y.size() == au_count, ErrorKind::dimension, "label length differs from au_count");
  }
};

namespace detail {

template <class Vec>
DenseTensor rows_to_tensor(const std::vector<Vec>& rows, std::size_t cols) {
  std::vector<float> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < cols; ++j) data.push_back(static_cast<float>(r[j]));
  return DenseTensor::f32({rows.size(), cols}, std::move(data));
}

template <class Vec>
std::vector<Vec> tensor_to_rows(const DenseTensor& t) {
  require(t.dtype() == DType::f32 && t.rank() == 2, ErrorKind::format, "expected f32 n x k tensor");
  const auto n = t.dim(0), k = t.dim(1);
  auto d = t.f32_data();
  std::vector<Vec> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(k);
    for (std::size_t j = 0; j < k; ++j) v[j] = d[i * k + j];
    rows.push_back(std::move(v));
  }
  return rows;
}

}  // namespace detail

inline void dataset_save(const LatentDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create dataset directory " + dir.string());
  if (!ds.empty()) {
    save_tensor(detail::rows_to_tensor(ds.latents, ds.latent_dim), dir / "latents.aued");
    save_tensor(detail::rows_to_tensor(ds.labels, ds.au_count), dir / "labels.aued");
  } else {
    std::filesystem::remove(dir / "latents.aued", ec);
    std::filesystem::remove(dir / "labels.aued", ec);
  }
  KeyValues meta;
  meta.set("seed", ds.seed);
  meta.set("d", static_cast<std::uint64_t>(ds.latent_dim));
  meta.set("S", static_cast<std::uint64_t>(ds.au_count));
  meta.set("n", static_cast<std::uint64_t>(ds.size()));
  meta.save(dir / "meta.txt");
}

inline LatentDataset dataset_load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "meta.txt"))
    fail(ErrorKind::missing_artifact, "no dataset at " + dir.string() + " (meta.txt missing)");
  const auto meta = KeyValues::load(dir / "meta.txt");
  LatentDataset ds;
  ds.seed = meta.get_u64("seed");
  ds.latent_dim = meta.get_u64("d");
  ds.au_count = meta.get_u64("S");
  const auto n = meta.get_u64("n");
  if (n > 0) {
    const auto lat = load_tensor(dir / "latents.aued");
    const auto lab = load_tensor(dir / "labels.aued");
    require(lat.rank() == 2 && lab.rank() == 2, ErrorKind::format, "dataset tensors must be rank 2");
    require(lat.dim(0) == n && lab.dim(0) == n, ErrorKind::dimension, "dataset row counts disagree with meta.txt");
    require(lat.dim(1) == ds.latent_dim && lab.dim(1) == ds.au_count, ErrorKind::dimension,
            "dataset column counts disagree with meta.txt");
    ds.latents = detail::tensor_to_rows<LatentVector>(lat);
    ds.labels = detail::tensor_to_rows<AUVector>(lab);
  }
  ds.validate();
  return ds;
}

}  // namespace auedit
