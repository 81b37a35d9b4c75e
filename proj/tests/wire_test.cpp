#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <set>
#include <string>

#include "fedifl/messages.hpp"
#include "fedifl/models.hpp"
#include "fedifl/serialize.hpp"

using namespace fedifl;

namespace {

const std::vector<int> kSpace{0, 1, 2, 3, 4};

ClientModelBundle<float> desk_bundle(uint64_t seed) {
  ArchitectureConfig arch = ArchitectureConfig::desk();
  return build_bundle<float>(arch, {0, 1, 3}, kSpace, seed);
}

bool same_params(Network<float>& a, Network<float>& b) {
  auto pa = a.state_params(), pb = b.state_params();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name) return false;
    if (pa[i].value->shape != pb[i].value->shape) return false;
    if ((pa[i].value->data != pb[i].value->data).any()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("named tensor wire layout is frozen") {
  Bytes out;
  write_named_tensor(out, "w", Tensor<float>::of({2}, {1.0f, -2.0f}));
  const Bytes want{
      0x01, 0x00, 0x00, 0x00,  // name length
      'w',                     // name
      0x01,                    // rank
      0x02, 0x00, 0x00, 0x00,  // extent
      0x00, 0x00, 0x80, 0x3f,  // 1.0f
      0x00, 0x00, 0x00, 0xc0,  // -2.0f
  };
  CHECK(out == want);

  ByteReader r(out);
  const NamedTensor nt = read_named_tensor(r);
  CHECK(r.done());
  CHECK(nt.name == "w");
  CHECK(nt.tensor.shape == std::vector<int>{2});
  CHECK(nt.tensor.data[0] == 1.0f);
  CHECK(nt.tensor.data[1] == -2.0f);
}

TEST_CASE("network round-trip is bit-identical") {
  ClientModelBundle<float> a = desk_bundle(11);
  ClientModelBundle<float> b = desk_bundle(99);
  REQUIRE_FALSE(same_params(a.generator, b.generator));

  load_network(b.generator, serialize_network(a.generator));
  CHECK(same_params(a.generator, b.generator));

  // batch-norm running stats travel too: mutate them with a train-mode pass
  Tensor<float> x({2, 1, a.arch.input_length});
  Rng rng(5);
  rng.fill_normal(x.data);
  a.primary.forward(x, Mode::train, nullptr);
  REQUIRE_FALSE(same_params(a.primary, b.primary));
  load_network(b.primary, serialize_network(a.primary));
  CHECK(same_params(a.primary, b.primary));
}

TEST_CASE("parameter stream errors are structured") {
  ClientModelBundle<float> a = desk_bundle(11);
  Bytes stream = serialize_network(a.generator);

  // truncation names the byte offset
  Bytes cut(stream.begin(), stream.begin() + static_cast<long>(stream.size() - 3));
  ClientModelBundle<float> b = desk_bundle(99);
  try {
    load_network(b.generator, cut);
    FAIL("expected CodecError");
  } catch (const CodecError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }

  // stream from a different network: names do not match
  CHECK_THROWS_AS(load_network(b.identifier, stream), CodecError);

  // same network, different architecture: shapes do not match
  ArchitectureConfig paper = ArchitectureConfig::paper();
  auto big = build_bundle<float>(paper, {0, 1, 3}, kSpace, 11);
  CHECK_THROWS_AS(load_network(big.generator, stream), CodecError);

  // half a stream is missing tensors
  ByteReader r(stream);
  read_named_tensor(r);
  Bytes first(stream.begin(), stream.begin() + static_cast<long>(r.offset()));
  CHECK_THROWS_AS(load_network(b.generator, first), CodecError);
}

TEST_CASE("message kinds enumerate exactly the parameter-carrying schema") {
  // Exhaustive: any new variant must be added here deliberately, and there is
  // no variant that could carry signals, features, prototypes, or per-sample
  // statistics.
  const std::set<std::string> allowed{"generator_upload", "library_download", "model_upload",
                                      "global_model_distribution"};
  CHECK(kAllMessageKinds.size() == 4);
  CHECK(std::variant_size_v<FederationMessage> == 4);
  std::set<std::string> seen;
  for (MessageKind k : kAllMessageKinds) seen.insert(message_kind_name(k));
  CHECK(seen == allowed);
}

TEST_CASE("messages round-trip through the codec") {
  ClientModelBundle<float> a = desk_bundle(11);

  GeneratorUpload up;
  up.client_id = 2;
  up.generator_params = serialize_network(a.generator);
  up.label_space = {0, 1, 3};
  const Bytes b1 = encode_message(up);
  const auto m1 = std::get<GeneratorUpload>(decode_message(b1));
  CHECK(m1.client_id == 2);
  CHECK(m1.generator_params == up.generator_params);
  CHECK(m1.label_space == up.label_space);

  LibraryDownload dl;
  dl.entries.push_back({3, serialize_network(a.generator), {0, 2, 3, 4}});
  dl.entries.push_back({4, serialize_network(a.generator), {0, 1, 2, 4}});
  const auto m2 = std::get<LibraryDownload>(decode_message(encode_message(dl)));
  REQUIRE(m2.entries.size() == 2);
  CHECK(m2.entries[0].client_id == 3);
  CHECK(m2.entries[1].label_space == std::vector<int>{0, 1, 2, 4});
  CHECK(m2.entries[0].generator_params == dl.entries[0].generator_params);

  ModelUpload mu;
  mu.client_id = 1;
  mu.primary_params = serialize_network(a.primary);
  mu.invariant_params = serialize_network(a.deep_invariant);
  mu.specific_params = serialize_network(a.deep_specific);
  mu.global_classifier_params = serialize_network(a.global_classifier);
  const auto m3 = std::get<ModelUpload>(decode_message(encode_message(mu)));
  CHECK(m3.client_id == 1);
  CHECK(m3.primary_params == mu.primary_params);
  CHECK(m3.invariant_params == mu.invariant_params);
  CHECK(m3.specific_params == mu.specific_params);
  CHECK(m3.global_classifier_params == mu.global_classifier_params);

  GlobalModelDistribution gd;
  gd.primary_params = serialize_network(a.primary);
  gd.invariant_params = serialize_network(a.deep_invariant);
  gd.global_classifiers.emplace_back(2, serialize_network(a.global_classifier));
  gd.global_classifiers.emplace_back(3, serialize_network(a.global_classifier));
  const auto m4 = std::get<GlobalModelDistribution>(decode_message(encode_message(gd)));
  CHECK(m4.primary_params == gd.primary_params);
  CHECK(m4.invariant_params == gd.invariant_params);
  REQUIRE(m4.global_classifiers.size() == 2);
  CHECK(m4.global_classifiers[1].first == 3);
  CHECK(m4.global_classifiers[1].second == gd.global_classifiers[1].second);
}

TEST_CASE("message size is a function of architecture config only") {
  ClientModelBundle<float> a = desk_bundle(11);
  ClientModelBundle<float> b = desk_bundle(4242);  // different values, same shapes

  GeneratorUpload ua{2, serialize_network(a.generator), {0, 1, 3}};
  GeneratorUpload ub{2, serialize_network(b.generator), {0, 1, 3}};
  CHECK(encode_message(ua).size() == encode_message(ub).size());

  // a bigger architecture does change the size
  auto big = build_bundle<float>(ArchitectureConfig::paper(), {0, 1, 3}, kSpace, 11);
  GeneratorUpload ubig{2, serialize_network(big.generator), {0, 1, 3}};
  CHECK(encode_message(ubig).size() > encode_message(ua).size());
}

TEST_CASE("malformed message bytes are rejected") {
  Bytes junk{0x09};
  CHECK_THROWS_AS(decode_message(junk), CodecError);

  GeneratorUpload up{1, Bytes{1, 2, 3}, {0, 1}};
  Bytes good = encode_message(up);
  Bytes trailing = good;
  trailing.push_back(0x00);
  CHECK_THROWS_AS(decode_message(trailing), CodecError);

  Bytes cut(good.begin(), good.begin() + 3);
  try {
    decode_message(cut);
    FAIL("expected CodecError");
  } catch (const CodecError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("bus counts serialized bytes per channel and drains FIFO") {
  Bus bus;
  CHECK(bus.bytes_posted("gather") == 0);
  CHECK(bus.drain("gather").empty());

  GeneratorUpload u1{1, Bytes{9, 9}, {0, 1, 3}};
  GeneratorUpload u2{2, Bytes{7, 7, 7, 7}, {0, 2, 3, 4}};
  const size_t s1 = encode_message(u1).size();
  const size_t s2 = encode_message(u2).size();
  bus.post("gather", u1);
  bus.post("gather", u2);
  CHECK(bus.bytes_posted("gather") == s1 + s2);
  CHECK(bus.total_bytes() == s1 + s2);

  auto msgs = bus.drain("gather");
  REQUIRE(msgs.size() == 2);
  CHECK(std::get<GeneratorUpload>(msgs[0]).client_id == 1);
  CHECK(std::get<GeneratorUpload>(msgs[1]).client_id == 2);
  CHECK(bus.drain("gather").empty());
  // counters persist after draining: they are the phase-level measurements
  CHECK(bus.bytes_posted("gather") == s1 + s2);

  ModelUpload mu;
  mu.client_id = 3;
  bus.post("model", mu);
  CHECK(bus.bytes_posted("model") == encode_message(mu).size());
  CHECK(bus.total_bytes() == s1 + s2 + encode_message(mu).size());
  CHECK(std::get<ModelUpload>(bus.drain("model")[0]).client_id == 3);
}

TEST_CASE("checkpoint files round-trip and reject truncation") {
  ClientModelBundle<float> a = desk_bundle(11);
  const std::string path = "wire_test_ckpt.params";
  save_checkpoint(path, a.local_classifier);

  ClientModelBundle<float> b = desk_bundle(99);
  REQUIRE_FALSE(same_params(a.local_classifier, b.local_classifier));
  load_checkpoint(path, b.local_classifier);
  CHECK(same_params(a.local_classifier, b.local_classifier));

  Bytes bytes = load_bytes(path);
  bytes.resize(bytes.size() / 2);
  save_bytes(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path, b.local_classifier), CodecError);
  std::remove(path.c_str());
}
