#pragma once

// Synthetic AU oracle: reads each AU from the image pixels of one part window.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/core/types.hpp"
#include "auedit/synthgen/generator.hpp"

namespace auedit::synth {

inline constexpr double kAUMax = 5.0;

enum class Statistic { mean_intensity, vertical_centroid_shift, horizontal_spread };

inline std::string to_string(Statistic s) {
  switch (s) {
    case Statistic::mean_intensity: return "mean-intensity";
    case Statistic::vertical_centroid_shift: return "vertical-centroid-shift";
    case Statistic::horizontal_spread: return "horizontal-spread";
  }
  return "?";
}

inline Statistic statistic_from_string(const std::string& s) {
  if (s == "mean-intensity") return Statistic::mean_intensity;
  if (s == "vertical-centroid-shift") return Statistic::vertical_centroid_shift;
  if (s == "horizontal-spread") return Statistic::horizontal_spread;
  fail(ErrorKind::invalid_argument, "unknown AU statistic: " + s);
}

// The part parameter each statistic is designed to follow.
inline PartParam designated_param(Statistic s) {
  switch (s) {
    case Statistic::mean_intensity: return kAmplitude;
    case Statistic::vertical_centroid_shift: return kOffset;
    case Statistic::horizontal_spread: return kWidth;
  }
  return kAmplitude;
}

struct AUDefinition {
  std::string name;
  std::string part;
  Statistic statistic = Statistic::mean_intensity;
  // AU = clamp(scale * statistic + offset, 0, 5)
  double scale = 1.0;
  double offset = 0.0;
};

inline std::vector<AUDefinition> default_au_definitions() {
  return {
      {"brow-raise-L", "left-brow", Statistic::vertical_centroid_shift},
      {"brow-raise-R", "right-brow", Statistic::vertical_centroid_shift},
      {"eye-open-L", "left-eye", Statistic::mean_intensity},
      {"eye-open-R", "right-eye", Statistic::mean_intensity},
      {"nose-wrinkle", "nose", Statistic::mean_intensity},
      {"lip-stretch", "mouth", Statistic::horizontal_spread},
      {"cheek-raise-L", "left-cheek", Statistic::mean_intensity},
      {"cheek-raise-R", "right-cheek", Statistic::mean_intensity},
  };
}

class AUOracle {
 public:
  // Calibrates each AU so the statistic's reachable range maps onto [0, 5].
  AUOracle(const SynthGenerator& gen, std::vector<AUDefinition> defs, std::uint64_t seed)
      : seed_(seed), defs_(std::move(defs)), template_(gen.face_template()) {
    require(!defs_.empty(), ErrorKind::invalid_argument, "oracle needs at least one AU");
    const auto fy = gen.upsample_y(), fx = gen.upsample_x();
    for (const auto& d : defs_) {
      const auto k = gen.part_index(d.part);
      windows_.push_back(gen.parts()[k].window.scaled(fy, fx));
      parts_.push_back(k);
    }
    calibrate(gen);
  }

  // Rebuilds an oracle with stored calibration.
  AUOracle(const SynthGenerator& gen, std::vector<AUDefinition> defs, std::uint64_t seed, bool /*calibrated*/)
      : seed_(seed), defs_(std::move(defs)), template_(gen.face_template()) {
    const auto fy = gen.upsample_y(), fx = gen.upsample_x();
    for (const auto& d : defs_) {
      const auto k = gen.part_index(d.part);
      windows_.push_back(gen.parts()[k].window.scaled(fy, fx));
      parts_.push_back(k);
    }
  }

  std::size_t au_count() const { return defs_.size(); }
  const std::vector<AUDefinition>& definitions() const { return defs_; }
  const Window& image_window(std::size_t au) const { return windows_.at(au); }
  std::size_t part_of(std::size_t au) const { return parts_.at(au); }
  std::uint64_t seed() const { return seed_; }

  AUVector measure(const ImageTensor& im) const {
    require(im.rows == template_.rows && im.cols == template_.cols, ErrorKind::dimension,
            "image shape does not match oracle");
    AUVector out(defs_.size());
    for (std::size_t i = 0; i < defs_.size(); ++i) {
      const auto s = raw_statistic(i, im);
      out[i] = s ? std::clamp(defs_[i].scale * *s + defs_[i].offset, 0.0, kAUMax) : 0.0;
    }
    return out;
  }

  // Uncalibrated statistic; empty when the window carries no signal mass.
  std::optional<double> raw_statistic(std::size_t au, const ImageTensor& im) const {
    const auto& w = windows_[au];
    switch (defs_[au].statistic) {
      case Statistic::mean_intensity: {
        double sum = 0.0;
        for (std::size_t r = w.row0; r < w.row1; ++r)
          for (std::size_t c = w.col0; c < w.col1; ++c) sum += im.at(r, c);
        return sum / static_cast<double>(w.area());
      }
      case Statistic::vertical_centroid_shift:
      case Statistic::horizontal_spread: {
        double mass = 0.0, mr = 0.0, mc = 0.0;
        for (std::size_t r = w.row0; r < w.row1; ++r)
          for (std::size_t c = w.col0; c < w.col1; ++c) {
            const double v = std::max(im.at(r, c) - template_.at(r, c), 0.0);
            mass += v;
            mr += v * static_cast<double>(r);
            mc += v * static_cast<double>(c);
          }
        if (mass <= 1e-12) return std::nullopt;
        if (defs_[au].statistic == Statistic::vertical_centroid_shift) {
          const double center = 0.5 * static_cast<double>(w.row0 + w.row1 - 1);
          return center - mr / mass;  // positive = upward
        }
        const double cbar = mc / mass;
        double var = 0.0;
        for (std::size_t r = w.row0; r < w.row1; ++r)
          for (std::size_t c = w.col0; c < w.col1; ++c) {
            const double v = std::max(im.at(r, c) - template_.at(r, c), 0.0);
            const double dc = static_cast<double>(c) - cbar;
            var += v * dc * dc;
          }
        return std::sqrt(var / mass);
      }
    }
    return std::nullopt;
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("seed", seed_);
    kv.set("S", static_cast<std::uint64_t>(defs_.size()));
    for (std::size_t i = 0; i < defs_.size(); ++i) {
      const auto p = "au" + std::to_string(i) + ".";
      kv.set(p + "name", defs_[i].name);
      kv.set(p + "part", defs_[i].part);
      kv.set(p + "statistic", to_string(defs_[i].statistic));
      kv.set(p + "scale", defs_[i].scale);
      kv.set(p + "offset", defs_[i].offset);
    }
    return kv;
  }

  static AUOracle from_kv(const SynthGenerator& gen, const KeyValues& kv) {
    std::vector<AUDefinition> defs;
    const auto n = kv.get_u64("S");
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = "au" + std::to_string(i) + ".";
      AUDefinition d;
      d.name = kv.get(p + "name");
      d.part = kv.get(p + "part");
      d.statistic = statistic_from_string(kv.get(p + "statistic"));
      d.scale = kv.get_double(p + "scale");
      d.offset = kv.get_double(p + "offset");
      defs.push_back(d);
    }
    return AUOracle(gen, std::move(defs), kv.get_u64("seed"), true);
  }

 private:
  void calibrate(const SynthGenerator& gen) {
    // Probe each part's own parameters on a grid including the tanh limits
    // (+-1), plus seeded random draws of all parameters.
    Rng rng(seed_);
    const std::size_t np = gen.param_count();
    std::vector<Eigen::VectorXd> probes;
    const double levels[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
    for (std::size_t k = 0; k < gen.parts().size(); ++k) {
      const auto& ctl = gen.parts()[k].control_rows;
      for (double a : levels)
        for (double b : levels)
          for (double c : levels) {
            Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
            p[static_cast<Eigen::Index>(ctl[0])] = a;
            p[static_cast<Eigen::Index>(ctl[1])] = b;
            p[static_cast<Eigen::Index>(ctl[2])] = c;
            probes.push_back(p);
          }
    }
    for (int i = 0; i < 64; ++i) {
      Eigen::VectorXd p(static_cast<Eigen::Index>(np));
      for (Eigen::Index j = 0; j < p.size(); ++j) p[j] = rng.uniform(-1.0, 1.0);
      probes.push_back(p);
    }
    std::vector<double> lo(defs_.size(), 1e300), hi(defs_.size(), -1e300);
    for (const auto& p : probes) {
      const auto im = gen.generate_from_params(p).image;
      for (std::size_t i = 0; i < defs_.size(); ++i) {
        if (auto s = raw_statistic(i, im)) {
          lo[i] = std::min(lo[i], *s);
          hi[i] = std::max(hi[i], *s);
        }
      }
    }
    for (std::size_t i = 0; i < defs_.size(); ++i) {
      require(hi[i] > lo[i], ErrorKind::numerical, "AU " + defs_[i].name + " has no reachable range");
      defs_[i].scale = kAUMax / (hi[i] - lo[i]);
      defs_[i].offset = -defs_[i].scale * lo[i];
    }
  }

  std::uint64_t seed_;
  std::vector<AUDefinition> defs_;
  ImageTensor template_;
  std::vector<Window> windows_;
  std::vector<std::size_t> parts_;
};

}  // namespace auedit::synth
