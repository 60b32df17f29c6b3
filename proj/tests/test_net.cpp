#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oc3d/net/arch.hpp"
#include "oc3d/net/checkpoint.hpp"
#include "oc3d/net/loss.hpp"
#include "oc3d/net/optim.hpp"
#include "oc3d/net/siamese.hpp"

using namespace oc3d;
using namespace oc3d::net;

TEST_CASE("parse_arch pins the reference shape chain at 101x101") {
  const ArchSpec a = parse_arch(arch_tokens("paper101"), 101, 101, 3);
  std::vector<int> spatial;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].kind == LayerKind::Conv || a.layers[i].kind == LayerKind::Pool)
      spatial.push_back(a.out_shapes[i].h);
  CHECK(spatial == std::vector<int>{95, 47, 43, 21, 18, 9, 3, 1});
  // tower output: 160*1*1 -> 500 -> 500
  const auto& shapes = a.out_shapes;
  bool saw_160 = false;
  for (const auto& s : shapes) saw_160 |= (!s.flat && s.c == 160 && s.h == 1 && s.w == 1);
  CHECK(saw_160);
  CHECK(a.output().flat);
  CHECK(a.output().units == 500);
}

TEST_CASE("parse_arch simple cases and errors") {
  const ArchSpec f = parse_arch("F(5)", 1, 1, 10);
  CHECK(f.output().units == 5);

  CHECK_THROWS_AS((void)parse_arch("C(8,7,1)", 5, 5, 3), Error);   // kernel larger than input
  CHECK_THROWS_AS((void)parse_arch("Q(1,2,3)", 32, 32, 3), Error); // unknown token
  CHECK_THROWS_AS((void)parse_arch("C(4,3)", 32, 32, 3), Error);   // wrong arity
  CHECK_THROWS_AS((void)parse_arch("F(5)-C(4,3,1)", 32, 32, 3), Error);  // conv after flatten
  try {
    (void)parse_arch("C(8,7,1)", 5, 5, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::Shape);
  }
  try {
    (void)parse_arch("C(8,x,1)", 50, 50, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::Parse);
  }
}

TEST_CASE("desk65 tokens chain to a 1x1x80 tower head") {
  const ArchSpec a = parse_arch(arch_tokens("desk65"), 65, 65, 3);
  std::vector<int> spatial;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].kind == LayerKind::Conv || a.layers[i].kind == LayerKind::Pool)
      spatial.push_back(a.out_shapes[i].h);
  CHECK(spatial == std::vector<int>{59, 29, 25, 12, 9, 4, 1});
  CHECK(a.output().units == 128);
}

TEST_CASE("robust pose loss matches the closed form") {
  auto at = [](double e) {
    // residual along one axis with magnitude e
    const double p_star[6] = {0, 0, 0, 0, 0, 0};
    double p[6] = {e, 0, 0, 0, 0, 0};
    double grad[6];
    const double loss = robust_pose_loss(p_star, p, 6, grad);
    return std::pair<double, double>(loss, grad[0]);
  };
  CHECK(at(0.1).first == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(at(0.5).first == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(at(1.0).first == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(at(std::exp(1.0)).first == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(at(10.0).first == doctest::Approx(1.0 + std::log(10.0)).epsilon(1e-12));

  // continuity of value and derivative at the knee
  const double h = 1e-7;
  const auto lo = at(1.0 - h), hi = at(1.0 + h);
  CHECK(std::abs(hi.first - lo.first) < 3 * h);
  CHECK(lo.second == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(hi.second == doctest::Approx(1.0).epsilon(1e-6));

  // gradient direction: (p - p*) / e for e <= 1, (p - p*) / e^2 beyond
  const double p_star[2] = {1.0, 2.0};
  double p[2] = {1.3, 2.4};
  double grad[2];
  double loss = robust_pose_loss(p_star, p, 2, grad);
  CHECK(loss == doctest::Approx(0.5));
  CHECK(grad[0] == doctest::Approx(0.3 / 0.5));
  CHECK(grad[1] == doctest::Approx(0.4 / 0.5));
  p[0] = 4.0;
  p[1] = 6.0;
  loss = robust_pose_loss(p_star, p, 2, grad);  // e = 5
  CHECK(loss == doctest::Approx(1.0 + std::log(5.0)));
  CHECK(grad[0] == doctest::Approx(3.0 / 25.0));
  CHECK(grad[1] == doctest::Approx(4.0 / 25.0));

  // zero residual: zero gradient
  p[0] = 1.0;
  p[1] = 2.0;
  loss = robust_pose_loss(p_star, p, 2, grad);
  CHECK(loss == 0.0);
  CHECK(grad[0] == 0.0);
}

TEST_CASE("match loss values and gradients") {
  double g;
  CHECK(match_loss(1, 0.0, &g) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(g == doctest::Approx(-0.5));

  CHECK(match_loss(1, 20.0, &g) == doctest::Approx(2.0611536e-9).epsilon(1e-4));
  CHECK(g == doctest::Approx(-2.0611536e-9).epsilon(1e-4));

  CHECK(match_loss(0, 1.5, &g) == doctest::Approx(1.701413).epsilon(1e-6));
  CHECK(g == doctest::Approx(0.817574).epsilon(1e-6));
}

TEST_CASE("quaternion pose loss normalizes the quaternion part") {
  double label[7] = {1, 0, 0, 0, 0.5, -0.5, 0.2};
  double raw[7] = {2, 0, 0, 0, 0.5, -0.5, 0.2};  // same direction, double length
  double grad[7];
  const double loss = quat_pose_loss(label, raw, true, grad);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("clip_gradients scales only above the threshold and keeps direction") {
  GradBuf<double> g{{3.0, 4.0}, {0.0}};  // norm 5
  clip_gradients(g, 10.0);
  CHECK(g[0][0] == 3.0);
  CHECK(g[0][1] == 4.0);

  clip_gradients(g, 2.5);  // norm 5 -> scale 0.5
  CHECK(grad_norm(g) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(g[0][0] == doctest::Approx(1.5));
  CHECK(g[0][1] == doctest::Approx(2.0));
  // direction preserved
  CHECK(g[0][1] / g[0][0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sgd_step follows the momentum recurrence") {
  // 1-D quadratic f(w) = 0.5 w^2, grad = w
  SiameseNet<double> dummy;  // hand-built single-parameter container
  dummy.params.push_back({"w", {1}, {1.0}});
  GradBuf<double> vel{{0.0}};
  const double lr = 0.1, mu = 0.9;
  double w_ref = 1.0, v_ref = 0.0;
  for (int step = 0; step < 5; ++step) {
    GradBuf<double> g{{dummy.params[0].data[0]}};
    sgd_step(dummy, vel, g, lr, mu);
    v_ref = mu * v_ref - lr * w_ref;
    w_ref = w_ref + v_ref;
    CHECK(dummy.params[0].data[0] == doctest::Approx(w_ref).epsilon(1e-12));
  }

  // momentum 0 reduces to plain SGD
  SiameseNet<double> plain;
  plain.params.push_back({"w", {1}, {2.0}});
  GradBuf<double> v0{{0.0}};
  GradBuf<double> g{{0.5}};
  sgd_step(plain, v0, g, 0.2, 0.0);
  CHECK(plain.params[0].data[0] == doctest::Approx(2.0 - 0.2 * 0.5));

  // zero grads, nonzero velocity: pure coasting
  GradBuf<double> zg{{0.0}};
  v0[0][0] = 0.3;
  const double before = plain.params[0].data[0];
  sgd_step(plain, v0, zg, 0.2, 0.9);
  CHECK(plain.params[0].data[0] == doctest::Approx(before + 0.9 * 0.3));
}

TEST_CASE("lr schedule: divide by 10 every 60K iterations") {
  CHECK(lr_at(0, 0.001, 60000, 0.1) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(59999, 0.001, 60000, 0.1) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(60000, 0.001, 60000, 0.1) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(lr_at(120000, 0.001, 60000, 0.1) == doctest::Approx(0.00001).epsilon(1e-12));
}

TEST_CASE("forward_joint: zero params collapse to biases; order matters; deterministic") {
  const ArchSpec arch = parse_arch("C(4,3,1)-ReLU-P(2,2)-F(8)-ReLU", 9, 9, 3);
  SiameseNet<double> net = build_net<double>(arch, 8, "euler");
  // zero params: heads output their biases
  ImagePatch pa = ImagePatch::create(9, 9, 3);
  ImagePatch pb = ImagePatch::create(9, 9, 3);
  for (std::size_t i = 0; i < pa.pixels.size(); ++i) {
    pa.pixels[i] = static_cast<std::uint8_t>((i * 37) % 256);
    pb.pixels[i] = static_cast<std::uint8_t>((i * 11 + 5) % 256);
  }
  JointWs<double> ws;
  auto out = forward_joint(net, pa, pb, ws);
  for (double v : *out.pose) CHECK(v == 0.0);
  CHECK(out.match_logit == 0.0);

  net.params[net.pose_b].data[2] = 0.75;
  net.params[net.match_b].data[0] = -0.25;
  out = forward_joint(net, pa, pb, ws);
  CHECK((*out.pose)[2] == 0.75);
  CHECK(out.match_logit == -0.25);

  // random init: swapping inputs changes the pose output
  init_params(net, 99);
  out = forward_joint(net, pa, pb, ws);
  const std::vector<double> pose_ab = *out.pose;
  out = forward_joint(net, pb, pa, ws);
  const std::vector<double> pose_ba = *out.pose;
  CHECK(pose_ab != pose_ba);

  // determinism
  out = forward_joint(net, pa, pb, ws);
  CHECK(*out.pose == pose_ab);
  JointWs<double> ws2;
  auto out2 = forward_joint(net, pa, pb, ws2);
  CHECK(*out2.pose == pose_ab);
}

TEST_CASE("embed is the shared-tower representation") {
  const ArchSpec arch = parse_arch(arch_tokens("desk65"), 65, 65, 3);
  SiameseNet<float> net = build_net<float>(arch, 128, "euler");
  init_params(net, 3);
  ImagePatch p = ImagePatch::create(65, 65, 3);
  for (std::size_t i = 0; i < p.pixels.size(); ++i)
    p.pixels[i] = static_cast<std::uint8_t>((i * 131) % 256);
  const std::vector<float> rep = embed(net, p);
  CHECK(rep.size() == 128);
  for (float v : rep) CHECK(v >= 0.0f);  // post-ReLU

  // identical whether the patch goes through the A or B path
  JointWs<float> ws;
  const auto out = forward_joint(net, p, p, ws);
  CHECK(*out.rep_a == rep);
  CHECK(*out.rep_b == rep);
}

TEST_CASE("paper101 tower emits a 500-d representation") {
  const ArchSpec arch = parse_arch(arch_tokens("paper101"), 101, 101, 3);
  SiameseNet<float> net = build_net<float>(arch, 500, "euler");
  init_params(net, 1);
  ImagePatch p = ImagePatch::create(101, 101, 3);
  for (std::size_t i = 0; i < p.pixels.size(); ++i)
    p.pixels[i] = static_cast<std::uint8_t>((i * 7) % 256);
  CHECK(embed(net, p).size() == 500);
}

TEST_CASE("checkpoint round trip preserves every tensor bit-exactly") {
  const ArchSpec arch = parse_arch("C(4,3,1)-ReLU-P(2,2)-F(8)-ReLU", 9, 9, 3);
  SiameseNet<float> net = build_net<float>(arch, 8, "quaternion");
  init_params(net, 5);
  net.input_mean = {0.25, 0.5, 0.75};
  for (int i = 0; i < 7; ++i) {
    net.label_mean[i] = 0.1 * i;
    net.label_std[i] = 1.0 + 0.1 * i;
  }
  const std::string path = "/tmp/oc3d_test_ckpt.oc3w";
  save_checkpoint(path, net);
  const SiameseNet<float> back = load_checkpoint_f32(path);
  CHECK(back.arch.spec == net.arch.spec);
  CHECK(back.pose_dim == 7);
  CHECK(back.pose_param == "quaternion");
  REQUIRE(back.params.size() == net.params.size());
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    CHECK(back.params[i].name == net.params[i].name);
    CHECK(back.params[i].data == net.params[i].data);
  }
  // save -> load -> save produces identical bytes
  const std::string path2 = "/tmp/oc3d_test_ckpt2.oc3w";
  save_checkpoint(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // corrupt magic is rejected
  std::string bad = b1;
  bad[0] = 'X';
  {
    std::ofstream f("/tmp/oc3d_bad_ckpt.oc3w", std::ios::binary);
    f.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  try {
    (void)load_checkpoint_f32("/tmp/oc3d_bad_ckpt.oc3w");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::CorruptFile);
  }
  // truncation is rejected
  {
    std::ofstream f("/tmp/oc3d_trunc_ckpt.oc3w", std::ios::binary);
    f.write(b1.data(), static_cast<std::streamsize>(b1.size() - 10));
  }
  try {
    (void)load_checkpoint_f32("/tmp/oc3d_trunc_ckpt.oc3w");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::CorruptFile);
  }
}
