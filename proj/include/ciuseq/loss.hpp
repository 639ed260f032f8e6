#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ciuseq/ciu.hpp"

namespace ciuseq {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Mean binary cross-entropy over the K classes:
//   -(1/K) sum_k [ y_k log sigma(s_k) + (1-y_k) log(1-sigma(s_k)) ]
// computed in the log-sigmoid form softplus(s) - y*s, which stays finite for
// any finite logits.
inline double bce_loss(std::span<const double> logits, std::span<const double> targets) {
  const std::size_t k = logits.size();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += softplus(logits[i]) - targets[i] * logits[i];
  return total / static_cast<double>(k);
}

// d(bce)/d(s_k) = (sigma(s_k) - y_k) / K, scaled by `weight` and accumulated.
inline void bce_loss_grad(std::span<const double> logits, std::span<const double> targets, double weight,
                          std::span<double> grad) {
  const double scale = weight / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) grad[i] += scale * (sigmoid(logits[i]) - targets[i]);
}

// Pairwise margin ranking loss over the ground-truth order:
//   (1/N) sum_{i<j} max(0, s_j - s_i + m)
// where position i precedes position j in `gt_order` and N is the number of
// pairs. Fewer than two items contribute zero.
inline double rank_loss(std::span<const double> logits, std::span<const CiuId> gt_order, double margin) {
  const std::size_t n = gt_order.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double si = logits[static_cast<std::size_t>(ciu_code(gt_order[i]))];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double sj = logits[static_cast<std::size_t>(ciu_code(gt_order[j]))];
      const double hinge = sj - si + margin;
      if (hinge > 0.0) total += hinge;
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return total / pairs;
}

// Subgradient of rank_loss; pairs exactly at the hinge kink contribute zero.
inline void rank_loss_grad(std::span<const double> logits, std::span<const CiuId> gt_order, double margin,
                           double weight, std::span<double> grad) {
  const std::size_t n = gt_order.size();
  if (n < 2) return;
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double scale = weight / pairs;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto ci = static_cast<std::size_t>(ciu_code(gt_order[i]));
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto cj = static_cast<std::size_t>(ciu_code(gt_order[j]));
      if (logits[cj] - logits[ci] + margin > 0.0) {
        grad[cj] += scale;
        grad[ci] -= scale;
      }
    }
  }
}

// Weighted combination L = (1 - lambda) * L_BCE + lambda * L_rank.
inline double total_loss(std::span<const double> logits, std::span<const double> targets,
                         std::span<const CiuId> gt_order, double margin, double lambda) {
  return (1.0 - lambda) * bce_loss(logits, targets) + lambda * rank_loss(logits, gt_order, margin);
}

inline void total_loss_grad(std::span<const double> logits, std::span<const double> targets,
                            std::span<const CiuId> gt_order, double margin, double lambda,
                            std::span<double> grad) {
  bce_loss_grad(logits, targets, 1.0 - lambda, grad);
  rank_loss_grad(logits, gt_order, margin, lambda, grad);
}

inline std::vector<double> multi_hot(std::span<const CiuId> labels) {
  std::vector<double> y(kCiuCount, 0.0);
  for (CiuId id : labels) y[static_cast<std::size_t>(ciu_code(id))] = 1.0;
  return y;
}

}  // namespace ciuseq
