#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fedifl/gradcheck.hpp"
#include "fedifl/init.hpp"
#include "fedifl/network.hpp"
#include "fedifl/optim.hpp"
#include "fedifl/rng.hpp"
#include "fedifl/tensor.hpp"

using namespace fedifl;

TEST_CASE("tensor shape bookkeeping") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(2) == 4);
  t.at(1, 2, 3) = 7.0;
  CHECK(t.data[23] == 7.0);
  Tensor<double> r = t.reshaped({6, 4});
  CHECK(r.dim(0) == 6);
  CHECK(r.data[23] == 7.0);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
  CHECK(shape_str({2, 3}) == "(2,3)");
}

TEST_CASE("rng is deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 16; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(a.uniform() != c.uniform());
  CHECK(hash_seed({1, 2, 3}) != hash_seed({1, 2, 4}));
  CHECK(hash_seed({1, 2, 3}) == hash_seed({1, 2, 3}));

  std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7}, v2 = v1;
  Rng s1(7), s2(7);
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);

  Rng n(11);
  double mean = 0.0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) mean += n.normal();
  mean /= N;
  CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("conv1d matches hand-computed cross-correlation") {
  ConvParams<double> p;
  p.kernel = Tensor<double>::of({1, 1, 3}, {1.0, 0.0, -1.0});
  p.bias = Tensor<double>::of({1}, {0.0});
  const Tensor<double> x = Tensor<double>::of({1, 1, 4}, {1.0, 2.0, 3.0, 4.0});

  const Tensor<double> valid = conv1d(x, p, 1, Padding::none);
  REQUIRE(valid.shape == std::vector<int>{1, 1, 2});
  CHECK(valid.data[0] == doctest::Approx(-2.0));
  CHECK(valid.data[1] == doctest::Approx(-2.0));

  const Tensor<double> same = conv1d(x, p, 1, Padding::same);
  REQUIRE(same.shape == std::vector<int>{1, 1, 4});
  CHECK(same.data[0] == doctest::Approx(-2.0));
  CHECK(same.data[1] == doctest::Approx(-2.0));
  CHECK(same.data[2] == doctest::Approx(-2.0));
  CHECK(same.data[3] == doctest::Approx(3.0));

  const Tensor<double> strided = conv1d(x, p, 2, Padding::same);
  REQUIRE(strided.shape == std::vector<int>{1, 1, 2});
  CHECK(strided.data[0] == doctest::Approx(-2.0));
  CHECK(strided.data[1] == doctest::Approx(-2.0));
}

TEST_CASE("conv1d bias and multichannel accumulation") {
  ConvParams<double> p;
  p.kernel = Tensor<double>::of({1, 2, 1}, {2.0, 3.0});
  p.bias = Tensor<double>::of({1}, {0.25});
  const Tensor<double> x = Tensor<double>::of({1, 2, 2}, {1.0, 2.0, 10.0, 20.0});
  const Tensor<double> y = conv1d(x, p, 1, Padding::none);
  CHECK(y.data[0] == doctest::Approx(2.0 * 1.0 + 3.0 * 10.0 + 0.25));
  CHECK(y.data[1] == doctest::Approx(2.0 * 2.0 + 3.0 * 20.0 + 0.25));
}

TEST_CASE("maxpool picks first maximum and routes gradient there") {
  const Tensor<double> x = Tensor<double>::of({1, 1, 4}, {1.0, 3.0, 2.0, 5.0});
  PoolResult<double> r = maxpool1d(x, 2, 2);
  REQUIRE(r.output.shape == std::vector<int>{1, 1, 2});
  CHECK(r.output.data[0] == 3.0);
  CHECK(r.output.data[1] == 5.0);

  const Tensor<double> up = Tensor<double>::of({1, 1, 2}, {1.0, 1.0});
  const Tensor<double> gx = maxpool1d_backward(up, r.argmax, x.shape);
  CHECK(gx.data[0] == 0.0);
  CHECK(gx.data[1] == 1.0);
  CHECK(gx.data[2] == 0.0);
  CHECK(gx.data[3] == 1.0);

  const Tensor<double> tie = Tensor<double>::of({1, 1, 2}, {2.0, 2.0});
  PoolResult<double> rt = maxpool1d(tie, 2, 2);
  CHECK(rt.argmax[0] == 0);
}

TEST_CASE("batchnorm train mode normalizes and tracks running stats") {
  auto bn = make_batchnorm_layer<double>(1);
  bn.params.gain.data[0] = 2.0;
  bn.params.shift.data[0] = 1.0;
  const Tensor<double> x = Tensor<double>::of({2, 1, 2}, {1.0, 2.0, 3.0, 4.0});
  BnCache<double> cache;
  const Tensor<double> y = batchnorm1d(x, bn.params, Mode::train, 0.1, 1e-5, &cache);

  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  CHECK(y.data[0] == doctest::Approx(2.0 * -1.5 * inv + 1.0));
  CHECK(y.data[3] == doctest::Approx(2.0 * 1.5 * inv + 1.0));
  CHECK(bn.params.running_mean.data[0] == doctest::Approx(0.1 * 2.5));
  CHECK(bn.params.running_var.data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * (1.25 * 4.0 / 3.0)));

  // normalized output has zero mean, unit biased variance
  const double m = (y.data / 2.0 - 0.5).mean();
  CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("batchnorm eval mode uses running statistics and mutates nothing") {
  auto bn = make_batchnorm_layer<double>(1);
  bn.params.running_mean.data[0] = 1.0;
  bn.params.running_var.data[0] = 4.0;
  const Tensor<double> x = Tensor<double>::of({1, 1, 2}, {3.0, 5.0});
  const Tensor<double> y = batchnorm1d(x, bn.params, Mode::eval, 0.1, 1e-5);
  CHECK(y.data[0] == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)));
  CHECK(y.data[1] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
  CHECK(bn.params.running_mean.data[0] == 1.0);
  CHECK(bn.params.running_var.data[0] == 4.0);
}

TEST_CASE("relu and sigmoid pointwise values") {
  const Tensor<double> x = Tensor<double>::of({1, 3}, {-1.0, 0.0, 2.0});
  const Tensor<double> y = relu(x);
  CHECK(y.data[0] == 0.0);
  CHECK(y.data[1] == 0.0);
  CHECK(y.data[2] == 2.0);
  const Tensor<double> up = Tensor<double>::of({1, 3}, {5.0, 7.0, 9.0});
  const Tensor<double> gx = relu_backward(up, x);
  CHECK(gx.data[0] == 0.0);
  CHECK(gx.data[1] == 0.0);  // subgradient 0 at the kink
  CHECK(gx.data[2] == 9.0);

  const Tensor<double> s = sigmoid(Tensor<double>::of({1, 1}, {0.0}));
  CHECK(s.data[0] == doctest::Approx(0.5));
}

TEST_CASE("fc layer matches hand-computed affine map") {
  FcParams<double> p;
  p.weight = Tensor<double>::of({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  p.bias = Tensor<double>::of({3}, {0.5, -0.5, 0.0});
  const Tensor<double> x = Tensor<double>::of({1, 2}, {1.0, 2.0});
  const Tensor<double> y = fc(x, p);
  CHECK(y.data[0] == doctest::Approx(5.5));
  CHECK(y.data[1] == doctest::Approx(10.5));
  CHECK(y.data[2] == doctest::Approx(17.0));
}

TEST_CASE("softmax is stable and normalized") {
  const Tensor<double> z = Tensor<double>::of({2, 2}, {0.0, 0.0, 1000.0, 1000.0});
  const Tensor<double> p = softmax(z);
  CHECK(p.data[0] == doctest::Approx(0.5));
  CHECK(p.data[2] == doctest::Approx(0.5));
  const Tensor<double> big = Tensor<double>::of({1, 3}, {1e4, 0.0, -1e4});
  const Tensor<double> pb = softmax(big);
  CHECK(pb.all_finite());
  CHECK(pb.data.sum() == doctest::Approx(1.0));
}

TEST_CASE("network forward/backward and parameter naming") {
  Rng rng(5);
  Network<double> net("demo");
  net.layers.push_back(make_conv_layer<double>(rng, 2, 1, 3));
  net.layers.push_back(make_batchnorm_layer<double>(2));
  net.layers.push_back(ReluLayer{});
  net.layers.push_back(MaxPool1dLayer{2, 2});
  net.layers.push_back(FlattenLayer{});
  net.layers.push_back(make_fc_layer<double>(rng, 3, 2 * 4));

  auto names = net.state_params();
  REQUIRE(names.size() == 8);
  CHECK(names[0].name == "layer0.kernel");
  CHECK(names[4].name == "layer1.running_mean");
  CHECK(!names[4].trainable);
  CHECK(net.trainable_params().size() == 6);
  CHECK(net.param_count() == 2 * 1 * 3 + 2 + 2 + 2 + 3 * 8 + 3);

  Tensor<double> x({2, 1, 8});
  rng.fill_normal(x.data);
  Tape<double> tape;
  const Tensor<double> y = net.forward(x, Mode::train, &tape);
  REQUIRE(y.shape == std::vector<int>{2, 3});
  Tensor<double> up(y.shape);
  up.data.setOnes();
  GradientSet<double> gs;
  const Tensor<double> gx = net.backward(tape, up, &gs);
  CHECK(gx.shape == x.shape);
  CHECK(gs.find("layer0.kernel") != nullptr);
  CHECK(gs.find("layer5.weight") != nullptr);
  CHECK(gs.find("layer1.running_mean") == nullptr);
}

TEST_CASE("gradient accumulation across tapes adds up") {
  Rng rng(9);
  Network<double> net("demo");
  net.layers.push_back(make_fc_layer<double>(rng, 2, 3));
  Tensor<double> x({2, 3});
  rng.fill_normal(x.data);
  Tape<double> tape;
  Tensor<double> y = net.forward(x, Mode::train, &tape);
  Tensor<double> up(y.shape);
  up.data.setOnes();

  GradientSet<double> once, twice;
  net.backward(tape, up, &once);
  net.backward(tape, up, &twice);
  net.backward(tape, up, &twice);
  const Tensor<double>* g1 = once.find("layer0.weight");
  const Tensor<double>* g2 = twice.find("layer0.weight");
  REQUIRE(g1);
  REQUIRE(g2);
  CHECK(((g2->data - 2.0 * g1->data).abs().maxCoeff()) == doctest::Approx(0.0));
}

TEST_CASE("sgd updates parameters and respects freezing") {
  Rng rng(3);
  Network<double> net("demo");
  net.layers.push_back(make_fc_layer<double>(rng, 1, 2));
  auto& fcp = std::get<FcLayer<double>>(net.layers[0]).params;
  fcp.weight = Tensor<double>::of({1, 2}, {1.0, 2.0});
  fcp.bias = Tensor<double>::of({1}, {0.0});

  GradientSet<double> gs;
  gs.accumulate("layer0.weight", Tensor<double>::of({1, 2}, {10.0, 20.0}));
  sgd_step(net, gs, 0.1);
  CHECK(fcp.weight.data[0] == doctest::Approx(0.0));
  CHECK(fcp.weight.data[1] == doctest::Approx(0.0));
  CHECK(fcp.bias.data[0] == 0.0);

  net.frozen = true;
  gs.clear();
  gs.accumulate("layer0.weight", Tensor<double>::of({1, 2}, {1.0, 1.0}));
  sgd_step(net, gs, 0.1);
  CHECK(fcp.weight.data[0] == doctest::Approx(0.0));
}

TEST_CASE("frozen network never touches running statistics") {
  Network<double> net("demo");
  net.layers.push_back(make_batchnorm_layer<double>(1));
  auto& bn = std::get<BatchNorm1dLayer<double>>(net.layers[0]).params;
  bn.running_mean.data[0] = 0.5;
  bn.running_var.data[0] = 2.0;
  net.frozen = true;

  Rng rng(4);
  Tensor<double> x({3, 1, 4});
  rng.fill_normal(x.data);
  net.forward(x, Mode::train, nullptr);  // frozen forces eval
  CHECK(bn.running_mean.data[0] == 0.5);
  CHECK(bn.running_var.data[0] == 2.0);
}

TEST_CASE("finite difference oracle on a quadratic") {
  Tensor<double> x = Tensor<double>::of({3}, {1.0, 2.0, 3.0});
  const auto f = [&]() { return (x.data * x.data).sum(); };
  const Tensor<double> g = finite_diff_gradient<double>(x, f);
  CHECK(g.data[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g.data[1] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(g.data[2] == doctest::Approx(6.0).epsilon(1e-6));
  CHECK(x.data[1] == 2.0);  // restored after probing
}

TEST_CASE("layer gradients agree with finite differences") {
  CheckOptions opt;
  opt.trials = 5;
  for (const auto& r : run_layer_checks(opt)) {
    INFO(r.name, " max_rel_err=", r.max_rel_err);
    CHECK(r.ok());
    CHECK(r.max_rel_err <= opt.tolerance);
  }
}

TEST_CASE("gradient harness flags a corrupted gradient") {
  CheckOptions opt;
  opt.trials = 3;
  opt.sabotage = 0.05;
  const CheckResult r = check_layer_conv(opt, Padding::same, 1);
  CHECK(r.failures == r.trials);
}
