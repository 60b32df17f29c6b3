#pragma once

#include <string>
#include <vector>

#include "oc3d/error.hpp"

namespace oc3d::net {

enum class LayerKind { Conv, Pool, Relu, Full };

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int n = 0;  // filters / units
  int k = 0;  // kernel
  int s = 1;  // stride
};

// Activation shape between layers: spatial (h, w, c) until the first F
// flattens it to a plain vector.
struct Shape3 {
  int h = 0, w = 0, c = 0;
  bool flat = false;
  int units = 0;

  std::size_t count() const {
    return flat ? static_cast<std::size_t>(units)
                : static_cast<std::size_t>(h) * w * c;
  }
};

struct ArchSpec {
  std::string spec;
  Shape3 input;
  std::vector<LayerSpec> layers;
  std::vector<Shape3> out_shapes;  // one per layer

  const Shape3& output() const { return out_shapes.back(); }
};

// Parses a tower string of C(n,k,s) | P(k,s) | F(n) | ReLU tokens and chains
// shapes with valid (no padding) floor semantics:
// out = floor((in - k) / s) + 1. Throws Err::Parse on syntax errors and
// Err::Shape when the chain becomes illegal.
ArchSpec parse_arch(const std::string& spec, int h, int w, int c);

// Named configurations. "paper101" is the reference tower; "desk65" is a
// small variant trainable on a laptop CPU. Unknown names are treated as raw
// token strings.
std::string arch_tokens(const std::string& name);
int arch_default_input(const std::string& name);   // 101 / 65, 0 if unknown
int arch_default_fusion(const std::string& name);  // 500 / 128, 0 if unknown

}  // namespace oc3d::net
