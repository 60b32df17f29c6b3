#pragma once

#include <cmath>

#include "oc3d/net/siamese.hpp"

namespace oc3d::net {

template <typename T>
double grad_norm(const GradBuf<T>& grads) {
  double s = 0;
  for (const auto& g : grads)
    for (const T v : g) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

// Scales all gradients by max_norm / ||g|| when the global norm exceeds
// max_norm; direction is preserved.
template <typename T>
void clip_gradients(GradBuf<T>& grads, double max_norm) {
  if (!(max_norm > 0)) fail(Err::InvalidParams, "clip_gradients: max_norm must be > 0");
  const double n = grad_norm(grads);
  if (n <= max_norm || n == 0) return;
  const T scale = static_cast<T>(max_norm / n);
  for (auto& g : grads)
    for (T& v : g) v *= scale;
}

// Classic momentum: v <- momentum * v - lr * g; w <- w + v.
template <typename T>
void sgd_step(SiameseNet<T>& net, GradBuf<T>& velocity, const GradBuf<T>& grads, double lr,
              double momentum) {
  for (std::size_t pi = 0; pi < net.params.size(); ++pi) {
    auto& w = net.params[pi].data;
    auto& v = velocity[pi];
    const auto& g = grads[pi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = static_cast<T>(momentum) * v[i] - static_cast<T>(lr) * g[i];
      w[i] += v[i];
    }
  }
}

// Step schedule: lr0 * factor^floor(iter / drop_every).
inline double lr_at(long iter, double lr0, long drop_every, double factor) {
  if (iter < 0) fail(Err::InvalidParams, "lr_at: iter must be >= 0");
  return lr0 * std::pow(factor, static_cast<double>(iter / drop_every));
}

}  // namespace oc3d::net
