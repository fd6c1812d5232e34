#pragma once

// Branched AU regressor: two shared fully connected layers followed by one
// three-layer branch per AU. ReLU everywhere except the scalar outputs.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/error.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/core/types.hpp"

namespace auedit::predictor {

struct Dense {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;

  Dense() = default;
  Dense(std::size_t out, std::size_t in)
      : W(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
        b(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))) {}

  std::size_t in() const { return static_cast<std::size_t>(W.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(W.rows()); }
  friend bool operator==(const Dense& a, const Dense& c) {
    return a.W.rows() == c.W.rows() && a.W.cols() == c.W.cols() && (a.W.array() == c.W.array()).all() &&
           (a.b.array() == c.b.array()).all();
  }
};

struct Architecture {
  std::size_t latent_dim = 32;
  std::size_t au_count = 8;
  std::size_t shared1 = 64, shared2 = 64;
  std::size_t branch1 = 32, branch2 = 16;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Also used as the gradient container.
struct PredictorWeights {
  Architecture arch;
  Dense l1, l2;                    // shared trunk
  std::vector<Dense> l3, l4, l5;   // per-AU branches
  std::uint64_t seed = 0;

  PredictorWeights() = default;
  explicit PredictorWeights(const Architecture& a) : arch(a), l1(a.shared1, a.latent_dim), l2(a.shared2, a.shared1) {
    require(a.latent_dim >= 1 && a.au_count >= 1 && a.shared1 >= 1 && a.shared2 >= 1 && a.branch1 >= 1 &&
                a.branch2 >= 1,
            ErrorKind::invalid_argument, "predictor layer widths must be >= 1");
    for (std::size_t s = 0; s < a.au_count; ++s) {
      l3.emplace_back(a.branch1, a.shared2);
      l4.emplace_back(a.branch2, a.branch1);
      l5.emplace_back(1, a.branch2);
    }
  }

  template <class F>
  void for_each_layer(F&& f) {
    f(std::string("shared1"), l1);
    f(std::string("shared2"), l2);
    for (std::size_t s = 0; s < arch.au_count; ++s) {
      const auto p = "branch" + std::to_string(s) + ".";
      f(p + "fc1", l3[s]);
      f(p + "fc2", l4[s]);
      f(p + "out", l5[s]);
    }
  }
  template <class F>
  void for_each_layer(F&& f) const {
    const_cast<PredictorWeights*>(this)->for_each_layer(
        [&](const std::string& name, Dense& d) { f(name, static_cast<const Dense&>(d)); });
  }

  // this += scale * other
  void axpy(double scale, const PredictorWeights& other) {
    std::vector<const Dense*> src;
    other.for_each_layer([&](const std::string&, const Dense& d) { src.push_back(&d); });
    std::size_t i = 0;
    for_each_layer([&](const std::string&, Dense& d) {
      d.W += scale * src[i]->W;
      d.b += scale * src[i]->b;
      ++i;
    });
  }

  friend bool operator==(const PredictorWeights& a, const PredictorWeights& b) {
    return a.arch == b.arch && a.l1 == b.l1 && a.l2 == b.l2 && a.l3 == b.l3 && a.l4 == b.l4 && a.l5 == b.l5;
  }
};

// Uniform(-r, r) weights with r = init_scale * sqrt(6 / fan_in); zero biases.
inline PredictorWeights init_weights(const Architecture& arch, std::uint64_t seed, double init_scale = 1.0) {
  require(std::isfinite(init_scale) && init_scale >= 0.0, ErrorKind::invalid_argument, "init_scale must be >= 0");
  PredictorWeights p(arch);
  p.seed = seed;
  Rng rng(seed);
  p.for_each_layer([&](const std::string&, Dense& d) {
    const double r = init_scale * std::sqrt(6.0 / static_cast<double>(d.in()));
    for (Eigen::Index i = 0; i < d.W.rows(); ++i)
      for (Eigen::Index j = 0; j < d.W.cols(); ++j) d.W(i, j) = r == 0.0 ? 0.0 : rng.uniform(-r, r);
  });
  return p;
}

namespace detail {

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }
// Subgradient at exactly 0 is 0.
inline Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& z) { return (z.array() > 0.0).cast<double>().matrix(); }

inline Eigen::MatrixXd affine(const Dense& d, const Eigen::MatrixXd& x) {
  return (d.W * x).colwise() + d.b;
}

// Column-batched activations kept for backprop.
struct Tape {
  Eigen::MatrixXd x, z1, h1, z2, h2;
  std::vector<Eigen::MatrixXd> z3, h3, z4, h4;
  Eigen::MatrixXd y;  // S x B
};

inline Tape run(const PredictorWeights& p, const Eigen::MatrixXd& x) {
  require(static_cast<std::size_t>(x.rows()) == p.arch.latent_dim, ErrorKind::dimension,
          "latent length " + std::to_string(x.rows()) + " does not match predictor input " +
              std::to_string(p.arch.latent_dim));
  Tape t;
  t.x = x;
  t.z1 = affine(p.l1, x);
  t.h1 = relu(t.z1);
  t.z2 = affine(p.l2, t.h1);
  t.h2 = relu(t.z2);
  const auto S = p.arch.au_count;
  t.y.resize(static_cast<Eigen::Index>(S), x.cols());
  t.z3.resize(S);
  t.h3.resize(S);
  t.z4.resize(S);
  t.h4.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    t.z3[s] = affine(p.l3[s], t.h2);
    t.h3[s] = relu(t.z3[s]);
    t.z4[s] = affine(p.l4[s], t.h3[s]);
    t.h4[s] = relu(t.z4[s]);
    t.y.row(static_cast<Eigen::Index>(s)) = affine(p.l5[s], t.h4[s]);
  }
  return t;
}

// Pulls dL/dy (S x B) back through the tape. Fills weight gradients when
// `grads` is non-null and returns dL/dx.
inline Eigen::MatrixXd pullback(const PredictorWeights& p, const Tape& t, const Eigen::MatrixXd& dy,
                                PredictorWeights* grads) {
  Eigen::MatrixXd dh2 = Eigen::MatrixXd::Zero(t.h2.rows(), t.h2.cols());
  for (std::size_t s = 0; s < p.arch.au_count; ++s) {
    const Eigen::MatrixXd dys = dy.row(static_cast<Eigen::Index>(s));
    const Eigen::MatrixXd dz4 = (p.l5[s].W.transpose() * dys).cwiseProduct(relu_mask(t.z4[s]));
    const Eigen::MatrixXd dz3 = (p.l4[s].W.transpose() * dz4).cwiseProduct(relu_mask(t.z3[s]));
    dh2.noalias() += p.l3[s].W.transpose() * dz3;
    if (grads) {
      grads->l5[s].W = dys * t.h4[s].transpose();
      grads->l5[s].b = dys.rowwise().sum();
      grads->l4[s].W = dz4 * t.h3[s].transpose();
      grads->l4[s].b = dz4.rowwise().sum();
      grads->l3[s].W = dz3 * t.h2.transpose();
      grads->l3[s].b = dz3.rowwise().sum();
    }
  }
  const Eigen::MatrixXd dz2 = dh2.cwiseProduct(relu_mask(t.z2));
  const Eigen::MatrixXd dz1 = (p.l2.W.transpose() * dz2).cwiseProduct(relu_mask(t.z1));
  if (grads) {
    grads->l2.W = dz2 * t.h1.transpose();
    grads->l2.b = dz2.rowwise().sum();
    grads->l1.W = dz1 * t.x.transpose();
    grads->l1.b = dz1.rowwise().sum();
  }
  return p.l1.W.transpose() * dz1;
}

inline Eigen::MatrixXd stack(const std::vector<LatentVector>& xs, std::size_t rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(xs[i].size() == rows, ErrorKind::dimension, "latent length mismatch in batch");
    m.col(static_cast<Eigen::Index>(i)) = xs[i].values();
  }
  return m;
}

}  // namespace detail

inline AUVector forward(const PredictorWeights& p, const LatentVector& w) {
  const auto t = detail::run(p, w.values());
  return AUVector(Eigen::VectorXd(t.y.col(0)));
}

// S x B predictions for a d x B batch.
inline Eigen::MatrixXd forward_batch(const PredictorWeights& p, const Eigen::MatrixXd& x) {
  return detail::run(p, x).y;
}

struct BatchGradient {
  PredictorWeights grads;
  double mse = 0.0;
};

// Exact gradient of mean((y - t)^2) taken over batch and AU entries.
inline BatchGradient backward(const PredictorWeights& p, const std::vector<LatentVector>& xs,
                              const std::vector<AUVector>& ys) {
  require(!xs.empty(), ErrorKind::invalid_argument, "backward needs a non-empty batch");
  require(xs.size() == ys.size(), ErrorKind::dimension, "latent and label batch sizes differ");
  const auto S = p.arch.au_count;
  Eigen::MatrixXd target(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    require(ys[i].size() == S, ErrorKind::dimension, "label length does not match AU count");
    target.col(static_cast<Eigen::Index>(i)) = ys[i].values();
  }
  const auto t = detail::run(p, detail::stack(xs, p.arch.latent_dim));
  const Eigen::MatrixXd r = t.y - target;
  const double inv = 1.0 / static_cast<double>(r.size());
  BatchGradient out{PredictorWeights(p.arch), r.squaredNorm() * inv};
  detail::pullback(p, t, 2.0 * inv * r, &out.grads);
  return out;
}

struct InputGradient {
  LatentVector grad;
  double loss = 0.0;
};

// Gradient of mean_s (f_s(w) - target_s)^2 with respect to the latent.
inline InputGradient predict_grad_w(const PredictorWeights& p, const LatentVector& w, const AUVector& target) {
  require(target.size() == p.arch.au_count, ErrorKind::dimension, "target length does not match AU count");
  const auto t = detail::run(p, w.values());
  const Eigen::VectorXd r = t.y.col(0) - target.values();
  const double inv = 1.0 / static_cast<double>(r.size());
  const Eigen::MatrixXd g = detail::pullback(p, t, 2.0 * inv * r, nullptr);
  return {LatentVector(Eigen::VectorXd(g.col(0))), r.squaredNorm() * inv};
}

// Jacobian of the scalar output for AU `au` with respect to the latent.
inline LatentVector output_grad_w(const PredictorWeights& p, const LatentVector& w, std::size_t au) {
  require(au < p.arch.au_count, ErrorKind::invalid_argument, "AU index out of range");
  const auto t = detail::run(p, w.values());
  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.arch.au_count), 1);
  dy(static_cast<Eigen::Index>(au), 0) = 1.0;
  return LatentVector(Eigen::VectorXd(detail::pullback(p, t, dy, nullptr).col(0)));
}

}  // namespace auedit::predictor
