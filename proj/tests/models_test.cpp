#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedifl/models.hpp"
#include "fedifl/optim.hpp"

using namespace fedifl;

namespace {

const std::vector<int> kLocal{0, 1, 3};
const std::vector<int> kGlobal{0, 1, 2, 3, 4};

bool same_params(Network<double>& a, Network<double>& b) {
  auto pa = a.state_params(), pb = b.state_params();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].value->shape != pb[i].value->shape) return false;
    if ((pa[i].value->data != pb[i].value->data).any()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("label index maps follow sorted order") {
  const std::vector<int> space = sorted_labels({3, 0, 4, 0, 2});
  CHECK(space == std::vector<int>{0, 2, 3, 4});
  CHECK(index_of_label(space, 0) == 0);
  CHECK(index_of_label(space, 3) == 2);
  CHECK_THROWS_AS(index_of_label(space, 1), std::out_of_range);

  const Tensor<double> oh = one_hot_rows<double>({3, 0}, space);
  CHECK(oh.shape == std::vector<int>{2, 4});
  CHECK(oh.data[2] == 1.0);
  CHECK(oh.data[4] == 1.0);
  CHECK(oh.data.sum() == 2.0);
}

TEST_CASE("bundle networks have the declared shapes at full scale") {
  const ArchitectureConfig a = ArchitectureConfig::paper();
  auto b = build_bundle<double>(a, kLocal, kGlobal, 7);
  Rng rng(1);

  Tensor<double> x({2, 1, 1024});
  rng.fill_normal(x.data);
  const Tensor<double> pf = b.primary.forward(x, Mode::train);
  CHECK(pf.shape == std::vector<int>{2, 32, 256});
  CHECK(pf.all_finite());

  const Tensor<double> df = b.deep.forward(pf, Mode::train);
  CHECK(df.shape == std::vector<int>{2, 128});

  Tensor<double> gin({2, a.noise_dim + 3});
  rng.fill_normal(gin.data);
  const Tensor<double> gpf = b.generator.forward(gin, Mode::train);
  CHECK(gpf.shape == pf.shape);  // generator mimics primary features

  const Tensor<double> score = b.identifier.forward(pf, Mode::train);
  CHECK(score.shape == std::vector<int>{2, 1});
  CHECK((score.data > 0.0).all());
  CHECK((score.data < 1.0).all());

  CHECK(b.local_classifier.forward(df, Mode::train).shape == std::vector<int>{2, 3});
  CHECK(b.global_classifier.forward(df, Mode::train).shape == std::vector<int>{2, 5});
}

TEST_CASE("desk preset shapes") {
  const ArchitectureConfig a = ArchitectureConfig::desk();
  auto b = build_bundle<double>(a, kLocal, kGlobal, 7);
  Rng rng(1);
  Tensor<double> x({3, 1, 256});
  rng.fill_normal(x.data);
  const Tensor<double> pf = b.primary.forward(x, Mode::train);
  CHECK(pf.shape == std::vector<int>{3, 16, 64});
  const Tensor<double> df = b.deep.forward(pf, Mode::train);
  CHECK(df.shape == std::vector<int>{3, 64});
  CHECK(b.deep_invariant.forward(pf, Mode::train).shape == std::vector<int>{3, 64});
  CHECK(b.deep_specific.forward(pf, Mode::train).shape == std::vector<int>{3, 64});
}

TEST_CASE("bundle construction is deterministic in the seed") {
  const ArchitectureConfig a = ArchitectureConfig::desk();
  auto b1 = build_bundle<double>(a, kLocal, kGlobal, 11);
  auto b2 = build_bundle<double>(a, kLocal, kGlobal, 11);
  auto b3 = build_bundle<double>(a, kLocal, kGlobal, 12);
  for (NetId id : kAllNets) {
    CHECK(same_params(b1.net(id), b2.net(id)));
  }
  CHECK(!same_params(b1.primary, b3.primary));
  // distinct networks get distinct initializations
  CHECK(!same_params(b1.deep, b1.deep_invariant));
}

TEST_CASE("bundle validation rejects bad inputs") {
  ArchitectureConfig a = ArchitectureConfig::desk();
  a.input_length = 100;
  CHECK_THROWS_AS(build_bundle<double>(a, kLocal, kGlobal, 1), std::invalid_argument);
  const ArchitectureConfig ok = ArchitectureConfig::desk();
  CHECK_THROWS_AS(build_bundle<double>(ok, {}, kGlobal, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_bundle<double>(ok, {0, 7}, kGlobal, 1), std::invalid_argument);
}

TEST_CASE("disentanglers copy the deep extractor exactly and independently") {
  auto b = build_bundle<double>(ArchitectureConfig::desk(), kLocal, kGlobal, 3);
  // nudge deep away from its init so the copy is observable
  for (auto& p : b.deep.trainable_params()) p.value->data += 0.25;
  CHECK(!same_params(b.deep, b.deep_invariant));

  init_disentanglers(b);
  CHECK(same_params(b.deep, b.deep_invariant));
  CHECK(same_params(b.deep, b.deep_specific));
  CHECK(b.deep_invariant.name == "deep_invariant");

  init_disentanglers(b);  // idempotent
  CHECK(same_params(b.deep, b.deep_invariant));

  // deep copy: updating a disentangler leaves the source untouched
  b.deep_invariant.trainable_params()[0].value->data += 1.0;
  CHECK(!same_params(b.deep, b.deep_invariant));
  CHECK(same_params(b.deep, b.deep_specific));
}

TEST_CASE("freeze contract holds across repeated update steps") {
  auto b = build_bundle<double>(ArchitectureConfig::desk(), kLocal, kGlobal, 5);
  auto snapshot = build_bundle<double>(ArchitectureConfig::desk(), kLocal, kGlobal, 5);

  set_frozen(b, {NetId::primary, NetId::deep, NetId::local_classifier}, true);
  CHECK(b.primary.frozen);

  for (int step = 0; step < 10; ++step) {
    for (NetId id : {NetId::primary, NetId::deep, NetId::local_classifier, NetId::generator}) {
      GradientSet<double> gs;
      for (auto& p : b.net(id).trainable_params()) {
        Tensor<double> g(p.value->shape);
        g.data.setConstant(0.5);
        gs.accumulate(p.name, std::move(g));
      }
      sgd_step(b.net(id), gs, 0.01);
    }
  }
  CHECK(same_params(b.primary, snapshot.primary));
  CHECK(same_params(b.deep, snapshot.deep));
  CHECK(same_params(b.local_classifier, snapshot.local_classifier));
  CHECK(!same_params(b.generator, snapshot.generator));  // unfrozen nets did move

  set_frozen(b, {NetId::primary}, false);
  GradientSet<double> gs;
  for (auto& p : b.primary.trainable_params()) {
    Tensor<double> g(p.value->shape);
    g.data.setConstant(0.5);
    gs.accumulate(p.name, std::move(g));
  }
  sgd_step(b.primary, gs, 0.01);
  CHECK(!same_params(b.primary, snapshot.primary));
}

TEST_CASE("forward passes are shape-total over random batch sizes") {
  const ArchitectureConfig a = ArchitectureConfig::desk();
  auto b = build_bundle<double>(a, kLocal, kGlobal, 9);
  Rng rng(2);
  for (int trial = 0; trial < 8; ++trial) {
    const int B = 2 + static_cast<int>(rng.uniform_int(4));
    Tensor<double> x({B, 1, a.input_length});
    rng.fill_normal(x.data);
    const Tensor<double> pf = b.primary.forward(x, Mode::train);
    const Tensor<double> df = b.deep.forward(pf, Mode::train);
    const Tensor<double> iv = b.deep_invariant.forward(pf, Mode::train);
    const Tensor<double> sp = b.deep_specific.forward(pf, Mode::train);
    Tensor<double> gin({B, a.noise_dim + static_cast<int>(kLocal.size())});
    rng.fill_normal(gin.data);
    const Tensor<double> gpf = b.generator.forward(gin, Mode::train);
    for (const Tensor<double>* t : {&pf, &df, &iv, &sp, &gpf}) CHECK(t->all_finite());
    CHECK(gpf.shape == pf.shape);
    CHECK(b.identifier.forward(gpf, Mode::train).shape == std::vector<int>{B, 1});
    CHECK(b.local_classifier.forward(df, Mode::train).dim(1) == 3);
    CHECK(b.global_classifier.forward(iv, Mode::train).dim(1) == 5);
  }
}
