#include "oc3d/net/arch.hpp"

#include <cctype>

namespace oc3d::net {

namespace {

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == '-') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> parse_args(const std::string& tok, std::size_t open) {
  if (tok.back() != ')') fail(Err::Parse, "arch: missing ')' in " + tok);
  std::vector<int> args;
  std::string num;
  for (std::size_t i = open + 1; i + 1 < tok.size(); ++i) {
    const char ch = tok[i];
    if (ch == ',') {
      if (num.empty()) fail(Err::Parse, "arch: empty argument in " + tok);
      args.push_back(std::stoi(num));
      num.clear();
    } else if (std::isdigit(static_cast<unsigned char>(ch))) {
      num.push_back(ch);
    } else {
      fail(Err::Parse, "arch: bad character in " + tok);
    }
  }
  if (num.empty()) fail(Err::Parse, "arch: empty argument in " + tok);
  args.push_back(std::stoi(num));
  return args;
}

int chain(int in, int k, int s, const std::string& tok) {
  const int out = (in - k) / s + 1;
  if (k > in || out < 1) fail(Err::Shape, "arch: layer " + tok + " does not fit input extent");
  return out;
}

}  // namespace

ArchSpec parse_arch(const std::string& spec, int h, int w, int c) {
  if (h < 1 || w < 1 || c < 1) fail(Err::Shape, "arch: bad input shape");
  ArchSpec a;
  a.spec = spec;
  a.input = Shape3{h, w, c, false, 0};
  Shape3 cur = a.input;

  const auto tokens = split_tokens(spec);
  if (tokens.empty()) fail(Err::Parse, "arch: empty spec");
  for (const std::string& tok : tokens) {
    LayerSpec layer;
    if (tok == "ReLU") {
      layer.kind = LayerKind::Relu;
    } else {
      const auto open = tok.find('(');
      if (open == std::string::npos || open == 0) fail(Err::Parse, "arch: bad token " + tok);
      const std::string head = tok.substr(0, open);
      const auto args = parse_args(tok, open);
      for (int v : args)
        if (v < 1) fail(Err::Parse, "arch: arguments must be >= 1 in " + tok);
      if (head == "C") {
        if (args.size() != 3) fail(Err::Parse, "arch: C takes (n, k, s): " + tok);
        layer = LayerSpec{LayerKind::Conv, args[0], args[1], args[2]};
      } else if (head == "P") {
        if (args.size() != 2) fail(Err::Parse, "arch: P takes (k, s): " + tok);
        layer = LayerSpec{LayerKind::Pool, 0, args[0], args[1]};
      } else if (head == "F") {
        if (args.size() != 1) fail(Err::Parse, "arch: F takes (n): " + tok);
        layer = LayerSpec{LayerKind::Full, args[0], 0, 1};
      } else {
        fail(Err::Parse, "arch: unknown layer " + tok);
      }
    }

    switch (layer.kind) {
      case LayerKind::Conv:
        if (cur.flat) fail(Err::Shape, "arch: conv after flatten");
        cur = Shape3{chain(cur.h, layer.k, layer.s, tok), chain(cur.w, layer.k, layer.s, tok), layer.n,
                     false, 0};
        break;
      case LayerKind::Pool:
        if (cur.flat) fail(Err::Shape, "arch: pool after flatten");
        cur = Shape3{chain(cur.h, layer.k, layer.s, tok), chain(cur.w, layer.k, layer.s, tok), cur.c,
                     false, 0};
        break;
      case LayerKind::Full:
        cur = Shape3{0, 0, 0, true, layer.n};
        break;
      case LayerKind::Relu:
        break;
    }
    a.layers.push_back(layer);
    a.out_shapes.push_back(cur);
  }
  return a;
}

std::string arch_tokens(const std::string& name) {
  if (name == "paper101")
    return "C(20,7,1)-ReLU-P(2,2)-C(40,5,1)-ReLU-P(2,2)-C(80,4,1)-ReLU-P(2,2)-C(160,4,2)-ReLU-P(2,2)-"
           "F(500)-ReLU-F(500)-ReLU";
  if (name == "desk65")
    return "C(10,7,1)-ReLU-P(2,2)-C(20,5,1)-ReLU-P(2,2)-C(40,4,1)-ReLU-P(2,2)-C(80,4,2)-ReLU-"
           "F(128)-ReLU-F(128)-ReLU";
  return name;  // raw token string
}

int arch_default_input(const std::string& name) {
  if (name == "paper101") return 101;
  if (name == "desk65") return 65;
  return 0;
}

int arch_default_fusion(const std::string& name) {
  if (name == "paper101") return 500;
  if (name == "desk65") return 128;
  return 0;
}

}  // namespace oc3d::net
