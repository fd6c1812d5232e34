#pragma once

// "Blob-face" reference generator.
//
//   latent w (d) --M1,b1,tanh--> part parameters p (3 per part: amplitude,
//   vertical offset, horizontal width) --Gaussian bumps--> per-part canvases
//   on the H x W edit grid --mix, softplus--> activations A (C x H x W)
//   --head, bilinear upsample, + face template, clamp--> image I (R x R)
//
// Channels come in pairs bound to one dominant part. Both channels of a pair
// also read one seeded "leak" part with identical weight and bias, and their
// head weights have opposite sign, so the leak cancels in the image while
// remaining visible in the activations. Every map is a fixed seeded constant;
// only w varies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/core/types.hpp"

namespace auedit::synth {

inline constexpr std::size_t kParamsPerPart = 3;
enum PartParam : std::size_t { kAmplitude = 0, kOffset = 1, kWidth = 2 };

// Window on the edit grid, half-open: rows [row0, row1), cols [col0, col1).
struct Window {
  std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;

  std::size_t area() const { return (row1 - row0) * (col1 - col0); }
  bool contains(std::size_t r, std::size_t c) const { return r >= row0 && r < row1 && c >= col0 && c < col1; }
  Window scaled(std::size_t fy, std::size_t fx) const { return {row0 * fy, row1 * fy, col0 * fx, col1 * fx}; }
  std::size_t overlap(const Window& o) const {
    const auto r0 = std::max(row0, o.row0), r1 = std::min(row1, o.row1);
    const auto c0 = std::max(col0, o.col0), c1 = std::min(col1, o.col1);
    return (r1 > r0 && c1 > c0) ? (r1 - r0) * (c1 - c0) : 0;
  }
};

struct PartSpec {
  std::string name;
  Window window;
  // Indices into the part-parameter vector: amplitude, offset, width.
  std::size_t control_rows[kParamsPerPart] = {0, 0, 0};
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t latent_dim = 32;
  std::size_t channels = 16;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t image_size = 64;
  // Two part controls ("part.param") whose latent rows share a component,
  // cos(row_a, row_b) = coupling. Empty names disable the coupling.
  std::string coupled_a = "left-brow.offset";
  std::string coupled_b = "mouth.width";
  double coupling = 0.5;

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("seed", seed);
    kv.set("d", static_cast<std::uint64_t>(latent_dim));
    kv.set("C", static_cast<std::uint64_t>(channels));
    kv.set("H", static_cast<std::uint64_t>(height));
    kv.set("W", static_cast<std::uint64_t>(width));
    kv.set("R", static_cast<std::uint64_t>(image_size));
    kv.set("coupled_a", coupled_a);
    kv.set("coupled_b", coupled_b);
    kv.set("coupling", coupling);
    return kv;
  }
  static GeneratorConfig from_kv(const KeyValues& kv) {
    GeneratorConfig c;
    c.seed = kv.get_u64("seed");
    c.latent_dim = kv.get_u64("d");
    c.channels = kv.get_u64("C");
    c.height = kv.get_u64("H");
    c.width = kv.get_u64("W");
    c.image_size = kv.get_u64("R");
    c.coupled_a = kv.get_or("coupled_a", c.coupled_a);
    c.coupled_b = kv.get_or("coupled_b", c.coupled_b);
    c.coupling = kv.get_double_or("coupling", c.coupling);
    return c;
  }
};

// Eight facial-region analogs laid out on a 16 x 16 reference grid, scaled to
// the configured grid size.
inline std::vector<PartSpec> default_parts(std::size_t height, std::size_t width) {
  struct Ref {
    const char* name;
    std::size_t r0, r1, c0, c1;
  };
  static constexpr Ref refs[] = {
      {"left-brow", 1, 4, 1, 6},   {"right-brow", 1, 4, 10, 15}, {"left-eye", 5, 8, 1, 6},
      {"right-eye", 5, 8, 10, 15}, {"nose", 6, 11, 7, 9},        {"left-cheek", 9, 12, 1, 5},
      {"right-cheek", 9, 12, 11, 15}, {"mouth", 13, 16, 5, 11},
  };
  std::vector<PartSpec> parts;
  std::size_t k = 0;
  for (const auto& r : refs) {
    PartSpec p;
    p.name = r.name;
    p.window = {r.r0 * height / 16, r.r1 * height / 16, r.c0 * width / 16, r.c1 * width / 16};
    for (std::size_t j = 0; j < kParamsPerPart; ++j) p.control_rows[j] = kParamsPerPart * k + j;
    parts.push_back(std::move(p));
    ++k;
  }
  return parts;
}

struct GeneratorOutput {
  ActivationTensor activations;
  ImageTensor image;
};

namespace detail {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One output axis of a half-pixel-centred bilinear upsample.
struct Tap {
  std::size_t i0, i1;
  double t;
};

inline std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double f = std::floor(s);
    const auto lo = static_cast<long>(f);
    const double t = s - f;
    const auto clampi = [&](long v) { return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(src) - 1)); };
    taps[i] = {clampi(lo), clampi(lo + 1), t};
  }
  return taps;
}

}  // namespace detail

class SynthGenerator {
 public:
  explicit SynthGenerator(GeneratorConfig cfg) : SynthGenerator(cfg, default_parts(cfg.height, cfg.width)) {}

  SynthGenerator(GeneratorConfig cfg, std::vector<PartSpec> parts) : cfg_(cfg), parts_(std::move(parts)) {
    validate();
    build();
  }

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<PartSpec>& parts() const { return parts_; }
  std::size_t latent_dim() const { return cfg_.latent_dim; }
  std::size_t param_count() const { return kParamsPerPart * parts_.size(); }
  std::size_t upsample_y() const { return cfg_.image_size / cfg_.height; }
  std::size_t upsample_x() const { return cfg_.image_size / cfg_.width; }

  const Eigen::MatrixXd& latent_map() const { return m1_; }
  const Eigen::VectorXd& latent_bias() const { return b1_; }
  const ImageTensor& face_template() const { return template_; }
  // Edit-grid foreground (face) mask.
  const BinaryMask& foreground() const { return foreground_; }
  double mixing(std::size_t c, std::size_t part) const { return mix_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(part)); }
  double head(std::size_t c) const { return head_[c]; }
  std::size_t dominant_part(std::size_t c) const { return dominant_[c]; }

  std::size_t part_index(const std::string& name) const {
    for (std::size_t i = 0; i < parts_.size(); ++i)
      if (parts_[i].name == name) return i;
    fail(ErrorKind::invalid_argument, "unknown part: " + name);
  }

  // Pre-tanh part controls for a latent.
  Eigen::VectorXd controls(const LatentVector& w) const {
    check_latent(w);
    return m1_ * w.values() + b1_;
  }

  GeneratorOutput generate(const LatentVector& w) const {
    return generate_from_params(controls(w).array().tanh().matrix());
  }

  // Forward pass starting at the post-tanh part parameters.
  GeneratorOutput generate_from_params(const Eigen::VectorXd& params) const {
    require(static_cast<std::size_t>(params.size()) == param_count(), ErrorKind::dimension,
            "part parameter vector has wrong length");
    GeneratorOutput out;
    out.activations = activations_from_params(params, nullptr);
    out.image = render(out.activations);
    return out;
  }

  // The render head: the only path from activations to image.
  ImageTensor render(const ActivationTensor& a) const {
    require(a.channels == cfg_.channels && a.height == cfg_.height && a.width == cfg_.width, ErrorKind::dimension,
            "activation shape does not match generator");
    const auto low = head_sum(a);
    ImageTensor im(cfg_.image_size, cfg_.image_size);
    const auto& ty = taps_y_;
    const auto& tx = taps_x_;
    for (std::size_t y = 0; y < cfg_.image_size; ++y) {
      for (std::size_t x = 0; x < cfg_.image_size; ++x) {
        const auto& a0 = ty[y];
        const auto& b0 = tx[x];
        const double top = (1.0 - b0.t) * low[a0.i0 * cfg_.width + b0.i0] + b0.t * low[a0.i0 * cfg_.width + b0.i1];
        const double bot = (1.0 - b0.t) * low[a0.i1 * cfg_.width + b0.i0] + b0.t * low[a0.i1 * cfg_.width + b0.i1];
        const double v = (1.0 - a0.t) * top + a0.t * bot + template_.at(y, x);
        im.at(y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
    return im;
  }

  // dL/dw for L = <image_cot, I(w)> + <act_cot, A(w)>.
  LatentVector generate_grad(const LatentVector& w, const ImageTensor& image_cot, const ActivationTensor& act_cot) const {
    require(image_cot.rows == cfg_.image_size && image_cot.cols == cfg_.image_size, ErrorKind::dimension,
            "image cotangent shape mismatch");
    require(act_cot.channels == cfg_.channels && act_cot.height == cfg_.height && act_cot.width == cfg_.width,
            ErrorKind::dimension, "activation cotangent shape mismatch");
    const Eigen::VectorXd pre = controls(w);
    const Eigen::VectorXd params = pre.array().tanh().matrix();

    Cache cache;
    const auto act = activations_from_params(params, &cache);
    const auto low = head_sum(act);

    // Image -> low-resolution head map (transpose of bilinear upsample).
    std::vector<double> d_low(cfg_.height * cfg_.width, 0.0);
    for (std::size_t y = 0; y < cfg_.image_size; ++y) {
      const auto& a0 = taps_y_[y];
      for (std::size_t x = 0; x < cfg_.image_size; ++x) {
        const auto& b0 = taps_x_[x];
        double g = image_cot.at(y, x);
        if (g == 0.0) continue;
        const double top = (1.0 - b0.t) * low[a0.i0 * cfg_.width + b0.i0] + b0.t * low[a0.i0 * cfg_.width + b0.i1];
        const double bot = (1.0 - b0.t) * low[a0.i1 * cfg_.width + b0.i0] + b0.t * low[a0.i1 * cfg_.width + b0.i1];
        const double v = (1.0 - a0.t) * top + a0.t * bot + template_.at(y, x);
        if (v < 0.0 || v > 1.0) continue;  // clamped
        d_low[a0.i0 * cfg_.width + b0.i0] += g * (1.0 - a0.t) * (1.0 - b0.t);
        d_low[a0.i0 * cfg_.width + b0.i1] += g * (1.0 - a0.t) * b0.t;
        d_low[a0.i1 * cfg_.width + b0.i0] += g * a0.t * (1.0 - b0.t);
        d_low[a0.i1 * cfg_.width + b0.i1] += g * a0.t * b0.t;
      }
    }

    // Head map -> activations -> pre-activations -> canvases.
    const std::size_t plane = cfg_.height * cfg_.width;
    std::vector<double> d_canvas(parts_.size() * plane, 0.0);
    for (std::size_t c = 0; c < cfg_.channels; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double d_act = head_[c] * d_low[i] + act_cot.data[c * plane + i];
        if (d_act == 0.0) continue;
        const double d_pre = d_act * detail::sigmoid(cache.pre[c * plane + i]);
        for (const auto& [part, weight] : sparse_mix_[c]) d_canvas[part * plane + i] += weight * d_pre;
      }
    }

    // Canvases -> part parameters -> controls -> latent.
    Eigen::VectorXd d_params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count()));
    for (std::size_t k = 0; k < parts_.size(); ++k) {
      const auto& bump = cache.bumps[k];
      const auto& win = parts_[k].window;
      double d_amp = 0.0, d_center = 0.0, d_sigma = 0.0;
      for (std::size_t r = win.row0; r < win.row1; ++r) {
        for (std::size_t c = win.col0; c < win.col1; ++c) {
          const double g = d_canvas[k * plane + r * cfg_.width + c];
          if (g == 0.0) continue;
          const double dr = static_cast<double>(r) - bump.center_row;
          const double dc = static_cast<double>(c) - bump.center_col;
          const double e = std::exp(-0.5 * (dr * dr / (bump.sigma_row * bump.sigma_row) +
                                            dc * dc / (bump.sigma_col * bump.sigma_col)));
          d_amp += g * e;
          d_center += g * bump.amplitude * e * dr / (bump.sigma_row * bump.sigma_row);
          d_sigma += g * bump.amplitude * e * dc * dc / (bump.sigma_col * bump.sigma_col * bump.sigma_col);
        }
      }
      const auto& ctl = parts_[k].control_rows;
      d_params[static_cast<Eigen::Index>(ctl[kAmplitude])] += d_amp * shape_[k].amplitude * kAmplitudeRange;
      d_params[static_cast<Eigen::Index>(ctl[kOffset])] += d_center * (-shape_[k].offset_range);
      d_params[static_cast<Eigen::Index>(ctl[kWidth])] += d_sigma * shape_[k].sigma_col * kWidthRange;
    }
    const Eigen::VectorXd d_pre = d_params.array() * (1.0 - params.array().square());
    return LatentVector(m1_.transpose() * d_pre);
  }

  // Deterministic key=value description; the fixed maps follow from the seed.
  KeyValues to_kv() const { return cfg_.to_kv(); }

 private:
  static constexpr double kAmplitudeMid = 7.0;
  static constexpr double kAmplitudeRange = 0.45;  // relative
  static constexpr double kWidthRange = 0.25;      // relative
  static constexpr double kOffsetRange = 0.5;      // edit-grid pixels
  static constexpr double kHeadGain = 0.13;
  static constexpr double kPairBias = -5.0;
  static constexpr double kMinusWeight = 0.75;
  static constexpr double kLeakWeight = 0.7;

  struct PartShape {
    double center_row, center_col, sigma_row, sigma_col, amplitude, offset_range;
  };
  struct Bump {
    double amplitude, center_row, center_col, sigma_row, sigma_col;
  };
  struct Cache {
    std::vector<double> pre;
    std::vector<Bump> bumps;
  };

  void validate() const {
    require(cfg_.latent_dim >= 1, ErrorKind::invalid_argument, "latent dimension must be >= 1");
    require(cfg_.height >= 1 && cfg_.width >= 1, ErrorKind::invalid_argument, "edit grid must be non-empty");
    require(cfg_.image_size % cfg_.height == 0 && cfg_.image_size % cfg_.width == 0, ErrorKind::invalid_argument,
            "image size must be an integer multiple of the edit grid");
    require(!parts_.empty(), ErrorKind::invalid_argument, "generator needs at least one part");
    require(cfg_.channels % 2 == 0 && cfg_.channels >= 2 * parts_.size(), ErrorKind::invalid_argument,
            "channel count must be even and at least twice the part count");
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      const auto& w = parts_[i].window;
      require(w.row0 < w.row1 && w.col0 < w.col1 && w.row1 <= cfg_.height && w.col1 <= cfg_.width,
              ErrorKind::invalid_argument, "part window outside the edit grid: " + parts_[i].name);
      for (auto row : parts_[i].control_rows)
        require(row < param_count(), ErrorKind::invalid_argument, "part control row out of range");
      for (std::size_t j = 0; j < i; ++j) {
        const auto ov = w.overlap(parts_[j].window);
        require(5 * ov < std::min(w.area(), parts_[j].window.area()), ErrorKind::invalid_argument,
                "part windows overlap on >= 20% of their area");
      }
    }
  }

  void build() {
    Rng rng(cfg_.seed);
    const auto d = static_cast<Eigen::Index>(cfg_.latent_dim);
    const auto np = static_cast<Eigen::Index>(param_count());

    // Random projections of w: orthonormal rows when d allows, otherwise
    // independent unit rows.
    m1_.resize(np, d);
    for (Eigen::Index i = 0; i < np; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) m1_(i, j) = rng.normal();
      m1_.row(i).normalize();
    }
    if (d >= np) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(m1_.transpose());
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, np);
      const Eigen::VectorXd sign = qr.matrixQR().diagonal().head(np).array().sign();
      m1_ = (q * sign.asDiagonal()).transpose();
    }
    b1_.resize(np);
    for (Eigen::Index i = 0; i < np; ++i) b1_[i] = rng.normal(0.0, 0.1);
    std::size_t coupled_part_a = parts_.size(), coupled_part_b = parts_.size();
    if (!cfg_.coupled_a.empty() || !cfg_.coupled_b.empty()) {
      const auto a = static_cast<Eigen::Index>(control_row(cfg_.coupled_a));
      const auto b = static_cast<Eigen::Index>(control_row(cfg_.coupled_b));
      coupled_part_a = part_index(cfg_.coupled_a.substr(0, cfg_.coupled_a.rfind('.')));
      coupled_part_b = part_index(cfg_.coupled_b.substr(0, cfg_.coupled_b.rfind('.')));
      require(a != b, ErrorKind::invalid_argument, "coupled controls must differ");
      require(std::abs(cfg_.coupling) < 1.0, ErrorKind::invalid_argument, "coupling must lie in (-1, 1)");
      Eigen::VectorXd ra = m1_.row(a).transpose();
      Eigen::VectorXd rb = m1_.row(b).transpose();
      rb -= rb.dot(ra) * ra;
      rb.normalize();
      m1_.row(b) = (cfg_.coupling * ra + std::sqrt(1.0 - cfg_.coupling * cfg_.coupling) * rb).transpose();
    }

    shape_.clear();
    for (const auto& p : parts_) {
      const auto& w = p.window;
      PartShape s{};
      s.center_row = 0.5 * static_cast<double>(w.row0 + w.row1 - 1);
      s.center_col = 0.5 * static_cast<double>(w.col0 + w.col1 - 1);
      s.sigma_row = static_cast<double>(w.row1 - w.row0) / 3.2;
      s.sigma_col = static_cast<double>(w.col1 - w.col0) / 3.2;
      s.amplitude = kAmplitudeMid * (1.0 + 0.05 * rng.uniform(-1.0, 1.0));
      s.offset_range = kOffsetRange * static_cast<double>(cfg_.height) / 16.0;
      shape_.push_back(s);
    }

    // Channel pairs: pair j belongs to part j mod P and leaks into one other
    // part, the coupling partner for coupled parts and a seeded pick otherwise.
    const std::size_t pairs = cfg_.channels / 2;
    const std::size_t nparts = parts_.size();
    mix_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg_.channels), static_cast<Eigen::Index>(nparts));
    head_.assign(cfg_.channels, 0.0);
    bias_.assign(cfg_.channels, 0.0);
    dominant_.assign(cfg_.channels, 0);
    std::vector<std::size_t> pairs_per_part(nparts, 0);
    for (std::size_t j = 0; j < pairs; ++j) ++pairs_per_part[j % nparts];
    for (std::size_t j = 0; j < pairs; ++j) {
      const std::size_t part = j % nparts;
      std::size_t leak = part;
      if (nparts > 1) {
        leak = static_cast<std::size_t>(rng.below(nparts - 1));
        if (leak >= part) ++leak;
      }
      if (coupled_part_a != coupled_part_b && coupled_part_a < nparts) {
        if (part == coupled_part_a) leak = coupled_part_b;
        if (part == coupled_part_b) leak = coupled_part_a;
      }
      const auto plus = static_cast<Eigen::Index>(2 * j);
      const auto minus = static_cast<Eigen::Index>(2 * j + 1);
      const double bias = kPairBias + 0.3 * rng.uniform(-1.0, 1.0);
      const double leak_w = kLeakWeight + 0.02 * rng.uniform(-1.0, 1.0);
      const double gain = kHeadGain * (1.0 + 0.1 * rng.uniform(-1.0, 1.0)) / static_cast<double>(pairs_per_part[part]);
      mix_(plus, static_cast<Eigen::Index>(part)) = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
      mix_(minus, static_cast<Eigen::Index>(part)) = kMinusWeight + 0.02 * rng.uniform(-1.0, 1.0);
      if (leak != part) {
        mix_(plus, static_cast<Eigen::Index>(leak)) = leak_w;
        mix_(minus, static_cast<Eigen::Index>(leak)) = leak_w;
      }
      bias_[2 * j] = bias_[2 * j + 1] = bias;
      head_[2 * j] = gain;
      head_[2 * j + 1] = -gain;
      dominant_[2 * j] = dominant_[2 * j + 1] = part;
    }
    sparse_mix_.assign(cfg_.channels, {});
    for (std::size_t c = 0; c < cfg_.channels; ++c)
      for (std::size_t k = 0; k < nparts; ++k)
        if (mix_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) != 0.0)
          sparse_mix_[c].emplace_back(k, mix_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)));

    // Face template: a soft ellipse over a dark background.
    const double rs = static_cast<double>(cfg_.image_size);
    template_ = ImageTensor(cfg_.image_size, cfg_.image_size);
    for (std::size_t y = 0; y < cfg_.image_size; ++y)
      for (std::size_t x = 0; x < cfg_.image_size; ++x) {
        const double u = (static_cast<double>(y) + 0.5 - 0.5 * rs) / (0.5125 * rs);
        const double v = (static_cast<double>(x) + 0.5 - 0.5 * rs) / (0.475 * rs);
        const double rho = u * u + v * v;
        template_.at(y, x) = 0.06 + 0.22 * detail::sigmoid(12.0 * (1.0 - rho));
      }
    foreground_ = BinaryMask(cfg_.height, cfg_.width);
    for (std::size_t r = 0; r < cfg_.height; ++r)
      for (std::size_t c = 0; c < cfg_.width; ++c) {
        const double u = (static_cast<double>(r) + 0.5 - 0.5 * static_cast<double>(cfg_.height)) /
                         (0.5125 * static_cast<double>(cfg_.height));
        const double v = (static_cast<double>(c) + 0.5 - 0.5 * static_cast<double>(cfg_.width)) /
                         (0.475 * static_cast<double>(cfg_.width));
        foreground_.at(r, c) = (u * u + v * v <= 1.0) ? 1 : 0;
      }

    taps_y_ = detail::bilinear_taps(cfg_.height, cfg_.image_size);
    taps_x_ = detail::bilinear_taps(cfg_.width, cfg_.image_size);
  }

  // "part.param" -> row of the latent map.
  std::size_t control_row(const std::string& name) const {
    const auto dot = name.rfind('.');
    require(dot != std::string::npos, ErrorKind::invalid_argument, "control name must be part.param: " + name);
    const auto param = name.substr(dot + 1);
    std::size_t j = 0;
    if (param == "amplitude") {
      j = kAmplitude;
    } else if (param == "offset") {
      j = kOffset;
    } else if (param == "width") {
      j = kWidth;
    } else {
      fail(ErrorKind::invalid_argument, "unknown part parameter: " + param);
    }
    return parts_[part_index(name.substr(0, dot))].control_rows[j];
  }

  void check_latent(const LatentVector& w) const {
    require(w.size() == cfg_.latent_dim, ErrorKind::dimension,
            "latent has length " + std::to_string(w.size()) + ", generator expects " + std::to_string(cfg_.latent_dim));
  }

  Bump bump_for(std::size_t k, const Eigen::VectorXd& params) const {
    const auto& ctl = parts_[k].control_rows;
    const auto& s = shape_[k];
    Bump b{};
    b.amplitude = s.amplitude * (1.0 + kAmplitudeRange * params[static_cast<Eigen::Index>(ctl[kAmplitude])]);
    b.center_row = s.center_row - s.offset_range * params[static_cast<Eigen::Index>(ctl[kOffset])];
    b.center_col = s.center_col;
    b.sigma_row = s.sigma_row;
    b.sigma_col = s.sigma_col * (1.0 + kWidthRange * params[static_cast<Eigen::Index>(ctl[kWidth])]);
    return b;
  }

  ActivationTensor activations_from_params(const Eigen::VectorXd& params, Cache* cache) const {
    const std::size_t plane = cfg_.height * cfg_.width;
    std::vector<double> canvas(parts_.size() * plane, 0.0);
    std::vector<Bump> bumps;
    for (std::size_t k = 0; k < parts_.size(); ++k) {
      const auto b = bump_for(k, params);
      bumps.push_back(b);
      const auto& win = parts_[k].window;
      for (std::size_t r = win.row0; r < win.row1; ++r)
        for (std::size_t c = win.col0; c < win.col1; ++c) {
          const double dr = static_cast<double>(r) - b.center_row;
          const double dc = static_cast<double>(c) - b.center_col;
          canvas[k * plane + r * cfg_.width + c] =
              b.amplitude * std::exp(-0.5 * (dr * dr / (b.sigma_row * b.sigma_row) + dc * dc / (b.sigma_col * b.sigma_col)));
        }
    }
    ActivationTensor a(cfg_.channels, cfg_.height, cfg_.width);
    std::vector<double> pre(cfg_.channels * plane, 0.0);
    for (std::size_t c = 0; c < cfg_.channels; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        double z = bias_[c];
        for (const auto& [part, weight] : sparse_mix_[c]) z += weight * canvas[part * plane + i];
        pre[c * plane + i] = z;
        a.data[c * plane + i] = detail::softplus(z);
      }
    }
    if (cache) {
      cache->pre = std::move(pre);
      cache->bumps = std::move(bumps);
    }
    return a;
  }

  std::vector<double> head_sum(const ActivationTensor& a) const {
    const std::size_t plane = cfg_.height * cfg_.width;
    std::vector<double> low(plane, 0.0);
    for (std::size_t c = 0; c < cfg_.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) low[i] += head_[c] * a.data[c * plane + i];
    return low;
  }

  GeneratorConfig cfg_;
  std::vector<PartSpec> parts_;
  Eigen::MatrixXd m1_;
  Eigen::VectorXd b1_;
  std::vector<PartShape> shape_;
  Eigen::MatrixXd mix_;
  std::vector<std::vector<std::pair<std::size_t, double>>> sparse_mix_;
  std::vector<double> head_, bias_;
  std::vector<std::size_t> dominant_;
  ImageTensor template_;
  BinaryMask foreground_;
  std::vector<detail::Tap> taps_y_, taps_x_;
};

}  // namespace auedit::synth
