#pragma once

#include <cmath>
#include <vector>

#include "oc3d/error.hpp"

namespace oc3d::net {

// Robust regression loss on the pose residual: L = e for e <= 1, else
// 1 + log e, with e = ||p_star - p||_2. Returns the loss and the gradient
// with respect to p; the gradient is zero below e = 1e-12.
template <typename T>
T robust_pose_loss(const T* p_star, const T* p, int dim, T* grad) {
  double e2 = 0;
  for (int i = 0; i < dim; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(p_star[i]);
    e2 += d * d;
  }
  const double e = std::sqrt(e2);
  if (e < 1e-12) {
    if (grad)
      for (int i = 0; i < dim; ++i) grad[i] = T(0);
    return static_cast<T>(e);
  }
  const double gscale = e <= 1.0 ? 1.0 / e : 1.0 / e2;
  if (grad)
    for (int i = 0; i < dim; ++i)
      grad[i] = static_cast<T>((static_cast<double>(p[i]) - static_cast<double>(p_star[i])) * gscale);
  return static_cast<T>(e <= 1.0 ? e : 1.0 + std::log(e));
}

// Non-robust alternative for the ablation: L = 0.5 * e^2, grad = p - p_star.
template <typename T>
T l2_pose_loss(const T* p_star, const T* p, int dim, T* grad) {
  double e2 = 0;
  for (int i = 0; i < dim; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(p_star[i]);
    e2 += d * d;
    if (grad) grad[i] = static_cast<T>(d);
  }
  return static_cast<T>(0.5 * e2);
}

// Sigmoid cross entropy on the raw logit, numerically stable form:
// L = softplus(x) - m* x, grad = sigmoid(x) - m*.
template <typename T>
T match_loss(int m_star, T logit, T* grad) {
  const double x = static_cast<double>(logit);
  if (!std::isfinite(x)) fail(Err::NumericFailure, "match_loss: non-finite logit");
  const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  if (grad) *grad = static_cast<T>(sig - m_star);
  return static_cast<T>(softplus - m_star * x);
}

template <typename T>
double sigmoid(T logit) {
  const double x = static_cast<double>(logit);
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Pose loss head for quaternion mode: the 4 quaternion outputs are unit
// normalized before entering the residual; gradient flows through the
// normalization. Returns loss; fills grad wrt the raw 7-dim prediction.
template <typename T>
T quat_pose_loss(const T* label7, const T* raw7, bool robust, T* grad7) {
  double q[4];
  double n2 = 0;
  for (int i = 0; i < 4; ++i) {
    q[i] = raw7[i];
    n2 += q[i] * q[i];
  }
  const double n = std::sqrt(n2);
  const bool normalized = n > 1e-8;
  T eff[7];
  for (int i = 0; i < 4; ++i) eff[i] = static_cast<T>(normalized ? q[i] / n : q[i]);
  for (int i = 4; i < 7; ++i) eff[i] = raw7[i];
  T geff[7];
  const T loss = robust ? robust_pose_loss(label7, eff, 7, geff) : l2_pose_loss(label7, eff, 7, geff);
  if (grad7) {
    if (normalized) {
      // d(q/|q|)/dq = (I - u u^T) / |q|
      double dot = 0;
      for (int i = 0; i < 4; ++i) dot += (q[i] / n) * static_cast<double>(geff[i]);
      for (int i = 0; i < 4; ++i)
        grad7[i] = static_cast<T>((static_cast<double>(geff[i]) - (q[i] / n) * dot) / n);
    } else {
      for (int i = 0; i < 4; ++i) grad7[i] = geff[i];
    }
    for (int i = 4; i < 7; ++i) grad7[i] = geff[i];
  }
  return loss;
}

}  // namespace oc3d::net
