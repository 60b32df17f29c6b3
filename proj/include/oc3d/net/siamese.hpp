#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oc3d/image.hpp"
#include "oc3d/net/arch.hpp"
#include "oc3d/rng.hpp"

namespace oc3d::net {

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> data;
};

// Two weight-shared towers, one fusion layer over the concatenated
// representations, and linear pose / match heads. Both tower passes read the
// same parameter storage; gradients from both accumulate into it.
template <typename T>
struct SiameseNet {
  ArchSpec arch;
  int fusion_units = 0;
  int pose_dim = 6;                  // 6 (Euler) or 7 (quaternion)
  std::string pose_param = "euler";  // "euler" | "quaternion"

  std::vector<Param<T>> params;    // learnables, fixed order
  std::vector<int> layer_weight;   // arch layer -> params index of W (-1 if none)
  int fusion_w = -1, fusion_b = -1;
  int pose_w = -1, pose_b = -1;
  int match_w = -1, match_b = -1;

  // Non-learnable companions, persisted with the checkpoint.
  std::array<double, 3> input_mean{{0.0, 0.0, 0.0}};  // per channel, [0,1] scale
  std::vector<double> label_mean, label_std;          // pose label statistics

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.data.size();
    return n;
  }
};

template <typename T>
using GradBuf = std::vector<std::vector<T>>;  // aligned with SiameseNet::params

// Per-example activation storage for one tower.
template <typename T>
struct TowerWs {
  std::vector<std::vector<T>> act;        // output of each layer
  std::vector<std::vector<int>> argmax;   // pool layers: winning input index
  std::vector<std::vector<T>> col;        // conv layers: im2col matrix
  std::vector<T> input;
};

template <typename T>
struct JointWs {
  TowerWs<T> tower_a, tower_b;
  std::vector<T> concat, fused_pre, fused;
  std::vector<T> pose, match;  // head outputs (match has 1 logit)
  // backward scratch
  std::vector<T> dbuf0, dbuf1, dcol, dconcat, dfused;
};

template <typename T>
struct JointOutputs {
  const std::vector<T>* rep_a = nullptr;
  const std::vector<T>* rep_b = nullptr;
  const std::vector<T>* pose = nullptr;
  T match_logit = 0;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CMapVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

inline int conv_out(int in, int k, int s) { return (in - k) / s + 1; }

template <typename T>
void im2col(const T* src, const Shape3& in, int k, int s, int out_h, int out_w, T* col) {
  // rows: out_h*out_w, cols: k*k*c, contiguous per (ky,kx) channel run
  const int c = in.c;
  T* dst = col;
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int ky = 0; ky < k; ++ky) {
        const T* row = src + (static_cast<std::size_t>(oy * s + ky) * in.w + ox * s) * c;
        for (int kx = 0; kx < k; ++kx) {
          for (int ch = 0; ch < c; ++ch) *dst++ = row[ch];
          row += c;
        }
      }
}

template <typename T>
void col2im_add(const T* col, const Shape3& in, int k, int s, int out_h, int out_w, T* dst) {
  const int c = in.c;
  const T* src = col;
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int ky = 0; ky < k; ++ky) {
        T* row = dst + (static_cast<std::size_t>(oy * s + ky) * in.w + ox * s) * c;
        for (int kx = 0; kx < k; ++kx) {
          for (int ch = 0; ch < c; ++ch) row[ch] += *src++;
          row += c;
        }
      }
}

}  // namespace detail

// ---- construction ----------------------------------------------------------

template <typename T>
SiameseNet<T> build_net(const ArchSpec& arch, int fusion_units, const std::string& pose_param) {
  SiameseNet<T> net;
  net.arch = arch;
  net.fusion_units = fusion_units;
  net.pose_param = pose_param;
  net.pose_dim = pose_param == "quaternion" ? 7 : 6;

  auto add = [&](const std::string& name, std::vector<int> shape) {
    Param<T> p;
    p.name = name;
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : p.shape) n *= d;
    p.data.assign(n, T(0));
    net.params.push_back(std::move(p));
    return static_cast<int>(net.params.size()) - 1;
  };

  Shape3 cur = arch.input;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& l = arch.layers[li];
    int w_idx = -1;
    if (l.kind == LayerKind::Conv) {
      w_idx = add("tower.l" + std::to_string(li) + ".w", {l.k, l.k, cur.c, l.n});
      add("tower.l" + std::to_string(li) + ".b", {l.n});
    } else if (l.kind == LayerKind::Full) {
      w_idx = add("tower.l" + std::to_string(li) + ".w",
                  {static_cast<int>(cur.count()), l.n});
      add("tower.l" + std::to_string(li) + ".b", {l.n});
    }
    net.layer_weight.push_back(w_idx);
    cur = arch.out_shapes[li];
  }
  const int rep = static_cast<int>(arch.output().count());
  net.fusion_w = add("fusion.w", {2 * rep, fusion_units});
  net.fusion_b = add("fusion.b", {fusion_units});
  net.pose_w = add("head.pose.w", {fusion_units, net.pose_dim});
  net.pose_b = add("head.pose.b", {net.pose_dim});
  net.match_w = add("head.match.w", {fusion_units, 1});
  net.match_b = add("head.match.b", {1});

  net.label_mean.assign(net.pose_dim, 0.0);
  net.label_std.assign(net.pose_dim, 1.0);
  return net;
}

// Fan-in scaled uniform init (+-sqrt(6/fan_in)), biases zero.
template <typename T>
void init_params(SiameseNet<T>& net, std::uint64_t seed) {
  std::mt19937_64 g(hash_combine(seed, 0x1417));
  for (auto& p : net.params) {
    const bool is_bias = p.shape.size() == 1;
    if (is_bias) {
      std::fill(p.data.begin(), p.data.end(), T(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 0; d + 1 < p.shape.size(); ++d) fan_in *= p.shape[d];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : p.data) v = static_cast<T>(uniform_real(g, -bound, bound));
  }
}

template <typename T>
GradBuf<T> make_grad_buf(const SiameseNet<T>& net) {
  GradBuf<T> g(net.params.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i].assign(net.params[i].data.size(), T(0));
  return g;
}

template <typename T>
void zero_grad(GradBuf<T>& g) {
  for (auto& v : g) std::fill(v.begin(), v.end(), T(0));
}

// ---- forward ---------------------------------------------------------------

// Scale to [0,1] and subtract the per-channel dataset mean.
template <typename T>
std::vector<T> patch_to_input(const SiameseNet<T>& net, const ImagePatch& patch) {
  const Shape3& in = net.arch.input;
  if (patch.width != in.w || patch.height != in.h || patch.channels != in.c)
    fail(Err::Shape, "net: patch does not match configured input size");
  std::vector<T> out(patch.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int ch = static_cast<int>(i % in.c);
    out[i] = static_cast<T>(patch.pixels[i] / 255.0 - net.input_mean[ch]);
  }
  return out;
}

template <typename T>
void forward_tower(const SiameseNet<T>& net, const std::vector<T>& input, TowerWs<T>& ws) {
  using namespace detail;
  const auto& layers = net.arch.layers;
  ws.act.resize(layers.size());
  ws.argmax.resize(layers.size());
  ws.col.resize(layers.size());
  ws.input = input;

  Shape3 cur = net.arch.input;
  const std::vector<T>* x = &ws.input;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerSpec& l = layers[li];
    const Shape3& out = net.arch.out_shapes[li];
    ws.act[li].resize(out.count());
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& w = net.params[net.layer_weight[li]];
        const auto& b = net.params[net.layer_weight[li] + 1];
        const int rows = out.h * out.w;
        const int cols = l.k * l.k * cur.c;
        ws.col[li].resize(static_cast<std::size_t>(rows) * cols);
        im2col(x->data(), cur, l.k, l.s, out.h, out.w, ws.col[li].data());
        CMapMat<T> xm(ws.col[li].data(), rows, cols);
        CMapMat<T> wm(w.data.data(), cols, l.n);
        MapMat<T> ym(ws.act[li].data(), rows, l.n);
        ym.noalias() = xm * wm;
        CMapVec<T> bv(b.data.data(), l.n);
        ym.rowwise() += bv.transpose();
        break;
      }
      case LayerKind::Pool: {
        ws.argmax[li].resize(out.count());
        const T* src = x->data();
        T* dst = ws.act[li].data();
        int* am = ws.argmax[li].data();
        for (int oy = 0; oy < out.h; ++oy)
          for (int ox = 0; ox < out.w; ++ox)
            for (int ch = 0; ch < out.c; ++ch) {
              T best{};
              int best_idx = -1;
              for (int ky = 0; ky < l.k; ++ky)
                for (int kx = 0; kx < l.k; ++kx) {
                  const int idx =
                      (static_cast<int>(oy * l.s + ky) * cur.w + (ox * l.s + kx)) * cur.c + ch;
                  if (best_idx < 0 || src[idx] > best) {
                    best = src[idx];
                    best_idx = idx;
                  }
                }
              *dst++ = best;
              *am++ = best_idx;
            }
        break;
      }
      case LayerKind::Relu: {
        for (std::size_t i = 0; i < ws.act[li].size(); ++i)
          ws.act[li][i] = (*x)[i] > T(0) ? (*x)[i] : T(0);
        break;
      }
      case LayerKind::Full: {
        const auto& w = net.params[net.layer_weight[li]];
        const auto& b = net.params[net.layer_weight[li] + 1];
        const int in_n = static_cast<int>(x->size());
        CMapMat<T> wm(w.data.data(), in_n, l.n);
        CMapVec<T> xv(x->data(), in_n);
        MapVec<T> yv(ws.act[li].data(), l.n);
        yv.noalias() = wm.transpose() * xv;
        CMapVec<T> bv(b.data.data(), l.n);
        yv += bv;
        break;
      }
    }
    x = &ws.act[li];
    cur = out;
  }
}

template <typename T>
void linear_forward(const Param<T>& w, const Param<T>& b, const std::vector<T>& x,
                    std::vector<T>& y) {
  using namespace detail;
  const int in_n = static_cast<int>(x.size());
  const int out_n = static_cast<int>(b.data.size());
  y.resize(out_n);
  CMapMat<T> wm(w.data.data(), in_n, out_n);
  CMapVec<T> xv(x.data(), in_n);
  MapVec<T> yv(y.data(), out_n);
  yv.noalias() = wm.transpose() * xv;
  CMapVec<T> bv(b.data.data(), out_n);
  yv += bv;
}

// Full joint forward on preprocessed inputs. Representations are the final
// tower activations; pose and match come from the fused layer's heads.
template <typename T>
JointOutputs<T> forward_joint_pre(const SiameseNet<T>& net, const std::vector<T>& in_a,
                                  const std::vector<T>& in_b, JointWs<T>& ws) {
  forward_tower(net, in_a, ws.tower_a);
  forward_tower(net, in_b, ws.tower_b);
  const auto& rep_a = ws.tower_a.act.back();
  const auto& rep_b = ws.tower_b.act.back();
  ws.concat.resize(rep_a.size() + rep_b.size());
  std::copy(rep_a.begin(), rep_a.end(), ws.concat.begin());
  std::copy(rep_b.begin(), rep_b.end(), ws.concat.begin() + rep_a.size());
  linear_forward(net.params[net.fusion_w], net.params[net.fusion_b], ws.concat, ws.fused_pre);
  ws.fused.resize(ws.fused_pre.size());
  for (std::size_t i = 0; i < ws.fused.size(); ++i)
    ws.fused[i] = ws.fused_pre[i] > T(0) ? ws.fused_pre[i] : T(0);
  linear_forward(net.params[net.pose_w], net.params[net.pose_b], ws.fused, ws.pose);
  linear_forward(net.params[net.match_w], net.params[net.match_b], ws.fused, ws.match);

  JointOutputs<T> out;
  out.rep_a = &rep_a;
  out.rep_b = &rep_b;
  out.pose = &ws.pose;
  out.match_logit = ws.match[0];
  return out;
}

template <typename T>
JointOutputs<T> forward_joint(const SiameseNet<T>& net, const ImagePatch& a, const ImagePatch& b,
                              JointWs<T>& ws) {
  return forward_joint_pre(net, patch_to_input(net, a), patch_to_input(net, b), ws);
}

// Tower-only pass; the representation is the network's final tower activation
// (post-ReLU), identical for either siamese path by weight sharing.
template <typename T>
std::vector<T> embed(const SiameseNet<T>& net, const ImagePatch& patch) {
  TowerWs<T> ws;
  forward_tower(net, patch_to_input(net, patch), ws);
  return ws.act.back();
}

// ---- backward --------------------------------------------------------------

template <typename T>
void linear_backward(const Param<T>& w, const std::vector<T>& x, const std::vector<T>& dy,
                     std::vector<T>& dw, std::vector<T>& db, std::vector<T>* dx) {
  using namespace detail;
  const int in_n = static_cast<int>(x.size());
  const int out_n = static_cast<int>(dy.size());
  CMapVec<T> xv(x.data(), in_n);
  CMapVec<T> dyv(dy.data(), out_n);
  MapMat<T> dwm(dw.data(), in_n, out_n);
  dwm.noalias() += xv * dyv.transpose();
  MapVec<T> dbv(db.data(), out_n);
  dbv += dyv;
  if (dx) {
    dx->resize(in_n);
    CMapMat<T> wm(w.data.data(), in_n, out_n);
    MapVec<T> dxv(dx->data(), in_n);
    dxv.noalias() = wm * dyv;
  }
}

template <typename T>
void backward_tower(const SiameseNet<T>& net, TowerWs<T>& ws, const std::vector<T>& grad_out,
                    GradBuf<T>& grads, JointWs<T>& scratch) {
  using namespace detail;
  const auto& layers = net.arch.layers;
  std::vector<T>* dy = &scratch.dbuf0;
  std::vector<T>* dx = &scratch.dbuf1;
  *dy = grad_out;
  for (int li = static_cast<int>(layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& l = layers[li];
    const Shape3 in_shape = li == 0 ? net.arch.input : net.arch.out_shapes[li - 1];
    const Shape3& out_shape = net.arch.out_shapes[li];
    const std::vector<T>& x = li == 0 ? ws.input : ws.act[li - 1];
    dx->assign(x.size(), T(0));
    switch (l.kind) {
      case LayerKind::Conv: {
        const int wi = net.layer_weight[li];
        const auto& w = net.params[wi];
        const int rows = out_shape.h * out_shape.w;
        const int cols = l.k * l.k * in_shape.c;
        CMapMat<T> dym(dy->data(), rows, l.n);
        CMapMat<T> xc(ws.col[li].data(), rows, cols);
        MapMat<T> dwm(grads[wi].data(), cols, l.n);
        dwm.noalias() += xc.transpose() * dym;
        MapVec<T> dbv(grads[wi + 1].data(), l.n);
        dbv += dym.colwise().sum();
        scratch.dcol.resize(static_cast<std::size_t>(rows) * cols);
        MapMat<T> dcm(scratch.dcol.data(), rows, cols);
        CMapMat<T> wm(w.data.data(), cols, l.n);
        dcm.noalias() = dym * wm.transpose();
        col2im_add(scratch.dcol.data(), in_shape, l.k, l.s, out_shape.h, out_shape.w, dx->data());
        break;
      }
      case LayerKind::Pool: {
        const auto& am = ws.argmax[li];
        for (std::size_t i = 0; i < am.size(); ++i) (*dx)[am[i]] += (*dy)[i];
        break;
      }
      case LayerKind::Relu: {
        for (std::size_t i = 0; i < dx->size(); ++i)
          (*dx)[i] = ws.act[li][i] > T(0) ? (*dy)[i] : T(0);
        break;
      }
      case LayerKind::Full: {
        const int wi = net.layer_weight[li];
        linear_backward(net.params[wi], x, *dy, grads[wi], grads[wi + 1], dx);
        break;
      }
    }
    std::swap(dy, dx);
  }
}

// Backward through heads, fusion, and both towers (accumulating into the
// shared tower parameters). dpose/dmatch are gradients at the head outputs.
template <typename T>
void backward_joint(const SiameseNet<T>& net, JointWs<T>& ws, const std::vector<T>& dpose,
                    T dmatch, GradBuf<T>& grads) {
  ws.dfused.assign(ws.fused.size(), T(0));
  // heads
  {
    std::vector<T> tmp;
    linear_backward(net.params[net.pose_w], ws.fused, dpose, grads[net.pose_w], grads[net.pose_b],
                    &tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) ws.dfused[i] += tmp[i];
    const std::vector<T> dm{dmatch};
    linear_backward(net.params[net.match_w], ws.fused, dm, grads[net.match_w], grads[net.match_b],
                    &tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) ws.dfused[i] += tmp[i];
  }
  // fusion relu + linear
  for (std::size_t i = 0; i < ws.dfused.size(); ++i)
    if (ws.fused_pre[i] <= T(0)) ws.dfused[i] = T(0);
  linear_backward(net.params[net.fusion_w], ws.concat, ws.dfused, grads[net.fusion_w],
                  grads[net.fusion_b], &ws.dconcat);
  // split into tower gradients
  const std::size_t rep = ws.tower_a.act.back().size();
  std::vector<T> da(ws.dconcat.begin(), ws.dconcat.begin() + rep);
  std::vector<T> db(ws.dconcat.begin() + rep, ws.dconcat.end());
  backward_tower(net, ws.tower_a, da, grads, ws);
  backward_tower(net, ws.tower_b, db, grads, ws);
}

}  // namespace oc3d::net
