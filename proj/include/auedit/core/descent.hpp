#pragma once

// Gradient descent with best-iterate tracking, shared by every latent-space
// optimisation loop.

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace auedit {

struct DescentConfig {
  double learning_rate = 0.1;
  std::size_t iterations = 300;
  // Stop once the loss drops below this value.
  double tolerance = 0.0;
  // Step-size control: grow the step after an accepted move, halve it and
  // retry from the current point when a move would raise the loss.
  bool adaptive = false;
  double grow = 1.2;
  double shrink = 0.5;
};

struct DescentResult {
  Eigen::VectorXd best;
  double best_loss = std::numeric_limits<double>::infinity();
  double initial_loss = std::numeric_limits<double>::infinity();
  // Loss at the current iterate before each step; element 0 is the start.
  std::vector<double> losses;
  std::size_t steps = 0;
};

// `objective(x)` returns (loss, gradient).
template <class Objective>
DescentResult descend(Objective&& objective, Eigen::VectorXd x0, const DescentConfig& cfg) {
  DescentResult res;
  auto [loss, grad] = objective(x0);
  res.initial_loss = loss;
  res.best_loss = loss;
  res.best = x0;
  res.losses.push_back(loss);
  Eigen::VectorXd x = std::move(x0);
  double lr = cfg.learning_rate;
  if (loss < cfg.tolerance || grad.squaredNorm() == 0.0) return res;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Eigen::VectorXd next = x - lr * grad;
    auto [next_loss, next_grad] = objective(next);
    ++res.steps;
    if (cfg.adaptive && !(next_loss <= loss)) {
      lr *= cfg.shrink;
      res.losses.push_back(loss);
      continue;
    }
    x = std::move(next);
    loss = next_loss;
    grad = std::move(next_grad);
    if (cfg.adaptive) lr *= cfg.grow;
    res.losses.push_back(loss);
    if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best = x;
    }
    if (loss < cfg.tolerance || grad.squaredNorm() == 0.0) break;
  }
  return res;
}

}  // namespace auedit
