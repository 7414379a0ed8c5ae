// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lpn/model.hpp"

#include <cmath>

#include "lpn/checkpoint.hpp"
#include "lpn/gradcheck.hpp"
#include "lpn/loss.hpp"
#include "testutil.hpp"

using namespace lpn;

TEST_CASE("the reference stack has the reference structure") {
  const ModelSpec spec = build_lightpneumonet();
  REQUIRE(spec.layers.size() == 16);

  int convs = 0, pools = 0, denses = 0, dropouts = 0;
  for (const auto& d : spec.layers) {
    convs += d.kind == LayerKind::conv;
    pools += d.kind == LayerKind::maxpool;
    denses += d.kind == LayerKind::dense;
    dropouts += d.kind == LayerKind::dropout;
  }
  CHECK(convs == 8);
  CHECK(pools == 4);
  CHECK(denses == 2);
  CHECK(dropouts == 1);

  CHECK(spec.layers[0].name == "conv1_1");
  CHECK(spec.layers[0].filters == 16);
  CHECK(spec.layers[0].kernel_h == 5);
  CHECK(spec.layers[0].act == Activation::relu);
  CHECK(spec.layers[14].kind == LayerKind::dropout);
  CHECK(spec.layers[14].rate == 0.2);
  CHECK(spec.layers[13].name == "dense1");
  CHECK(spec.layers[13].units == 128);
  CHECK(spec.layers[15].units == 2);
  CHECK(spec.layers[15].act == Activation::softmax);
}

TEST_CASE("shape trace reproduces the spatial chain and flatten width") {
  const ModelSpec spec = build_lightpneumonet();
  const auto rows = shape_trace(spec);

  const std::vector<std::pair<std::string, Shape>> expected = {
      {"conv1_1", Shape{220, 220, 16}}, {"conv1_2", Shape{216, 216, 16}},
      {"pool1", Shape{72, 72, 16}},     {"conv2_1", Shape{68, 68, 32}},
      {"conv2_2", Shape{64, 64, 32}},   {"pool2", Shape{21, 21, 32}},
      {"conv3_1", Shape{19, 19, 64}},   {"conv3_2", Shape{17, 17, 64}},
      {"pool3", Shape{8, 8, 64}},       {"conv4_1", Shape{6, 6, 128}},
      {"conv4_2", Shape{4, 4, 128}},    {"pool4", Shape{2, 2, 128}},
      {"flatten", Shape{512}},          {"dense1", Shape{128}},
      {"dropout", Shape{128}},          {"dense2", Shape{2}},
  };
  REQUIRE(rows.size() == expected.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].name == expected[i].first);
    CHECK(rows[i].out_shape == expected[i].second);
  }
}

TEST_CASE("stacks that do not fit the input raise an architecture error") {
  ModelSpec tiny = build_lightpneumonet();
  tiny.input_h = tiny.input_w = 4;  // smaller than the first 5x5 kernel
  CHECK_THROWS_AS(shape_trace(tiny), ArchitectureError);

  ModelSpec one;
  one.layers = {LayerDesc::conv("conv1_1", 16, 5)};
  const auto rows = shape_trace(one);
  CHECK(rows[0].out_shape == Shape{220, 220, 16});
}

TEST_CASE("parameter counts match the reference totals layer by layer") {
  const ParamCountReport r = count_params(build_lightpneumonet());
  const std::vector<std::pair<std::string, long long>> expected = {
      {"conv1_1", 416},   {"conv1_2", 6416},   {"conv2_1", 12832}, {"conv2_2", 25632},
      {"conv3_1", 18496}, {"conv3_2", 36928},  {"conv4_1", 73856}, {"conv4_2", 147584},
      {"dense1", 65664},  {"dense2", 258},
  };
  REQUIRE(r.per_layer.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.per_layer[i].first == expected[i].first);
    CHECK(r.per_layer[i].second == expected[i].second);
  }
  CHECK(r.total == 388082);
  CHECK(r.bytes() == 1552328);
}

TEST_CASE("glorot init: limits, zero biases, seed determinism") {
  const ModelSpec spec = build_lightpneumonet();
  const ModelParams<float> a = init_params<float>(spec, 42);
  const ModelParams<float> b = init_params<float>(spec, 42);
  const ModelParams<float> c = init_params<float>(spec, 43);

  REQUIRE(a.names.size() == 20);
  CHECK(a.scalar_count() == 388082);

  const Index k1 = a.find("conv1_1.kernel");
  REQUIRE(k1 >= 0);
  const double limit = std::sqrt(6.0 / (5 * 5 * 1 + 5 * 5 * 16));
  CHECK(limit == doctest::Approx(0.11882).epsilon(1e-4));
  double max_abs = 0;
  for (Index i = 0; i < a.tensors[k1].size(); ++i)
    max_abs = std::max(max_abs, std::abs(static_cast<double>(a.tensors[k1][i])));
  CHECK(max_abs < limit);
  CHECK(max_abs > 0.9 * limit);  // the draw should fill its range

  for (size_t i = 0; i < a.names.size(); ++i)
    if (a.names[i].ends_with(".bias")) CHECK((a.tensors[i].array() == 0.0f).all());

  for (size_t i = 0; i < a.tensors.size(); ++i) CHECK(a.tensors[i] == b.tensors[i]);
  CHECK_FALSE(a.tensors[static_cast<size_t>(k1)] == c.tensors[static_cast<size_t>(k1)]);
}

TEST_CASE("forward: zeroed parameters give the symmetric prediction") {
  const ModelSpec spec = build_reduced_spec();
  ModelParams<float> params = init_params<float>(spec, 1);
  for (auto& t : params.tensors) t.array().setZero();

  Tensor<float> batch(Shape{3, spec.input_h, spec.input_w, spec.input_c}, 0.0f);
  const auto fwd = model_forward(params, spec, batch, RunMode::infer, RngStream(0), false);
  REQUIRE(fwd.probs.shape() == Shape{3, 2});
  for (Index n = 0; n < 3; ++n) {
    CHECK(fwd.probs.at(n, 0) == 0.5f);
    CHECK(fwd.probs.at(n, 1) == 0.5f);
  }
}

TEST_CASE("forward: inference is deterministic, train mode is stream-determined") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<float> params = init_params<float>(spec, 5);
  RngStream data(99);
  Tensor<float> batch = testutil::random_tensor<float>(
      Shape{2, spec.input_h, spec.input_w, spec.input_c}, data, 0, 1);

  const auto a = model_forward(params, spec, batch, RunMode::infer, RngStream(1), false);
  const auto b = model_forward(params, spec, batch, RunMode::infer, RngStream(2), false);
  CHECK(a.probs == b.probs);  // no stochastic path at inference

  const auto t1 = model_forward(params, spec, batch, RunMode::train,
                                RngStream::from(5, {kTagDropout, 3, 0}), false);
  const auto t2 = model_forward(params, spec, batch, RunMode::train,
                                RngStream::from(5, {kTagDropout, 3, 0}), false);
  CHECK(t1.probs == t2.probs);
}

TEST_CASE("backward: zero upstream gradient zeroes every parameter gradient") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<float> params = init_params<float>(spec, 2);
  RngStream data(17);
  Tensor<float> batch = testutil::random_tensor<float>(
      Shape{2, spec.input_h, spec.input_w, spec.input_c}, data, 0, 1);
  const auto fwd = model_forward(params, spec, batch, RunMode::train,
                                 RngStream::from(2, {kTagDropout, 1, 0}), true);
  const auto grads = model_backward(params, spec, fwd, Tensor<float>(Shape{2, 2}, 0.0f));
  for (const auto& g : grads.tensors) CHECK((g.array() == 0.0f).all());
}

TEST_CASE("backward: duplicated sample doubles the summed gradient") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<double> params = init_params<double>(spec, 3);
  RngStream data(23);
  Tensor<double> one = testutil::random_tensor<double>(
      Shape{1, spec.input_h, spec.input_w, spec.input_c}, data, 0, 1);
  Tensor<double> two(Shape{2, spec.input_h, spec.input_w, spec.input_c});
  two.array().segment(0, one.size()) = one.array();
  two.array().segment(one.size(), one.size()) = one.array();

  // infer mode: no dropout, so both copies follow identical paths
  const auto f1 = model_forward(params, spec, one, RunMode::infer, RngStream(0), true);
  const auto f2 = model_forward(params, spec, two, RunMode::infer, RngStream(0), true);

  Tensor<double> d1 = Tensor<double>::from_values(Shape{1, 2}, {0.25, -0.75});
  Tensor<double> d2 = Tensor<double>::from_values(Shape{2, 2}, {0.25, -0.75, 0.25, -0.75});
  const auto g1 = model_backward(params, spec, f1, d1);
  const auto g2 = model_backward(params, spec, f2, d2);
  for (size_t i = 0; i < g1.tensors.size(); ++i) {
    const double diff =
        (g2.tensors[i].array() - 2.0 * g1.tensors[i].array()).abs().maxCoeff();
    CHECK(diff <= 1e-12);
  }
}

TEST_CASE("backward without a cache is a state error") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<float> params = init_params<float>(spec, 2);
  Tensor<float> batch(Shape{1, spec.input_h, spec.input_w, spec.input_c}, 0.5f);
  const auto fwd = model_forward(params, spec, batch, RunMode::infer, RngStream(0), false);
  CHECK_THROWS_AS(model_backward(params, spec, fwd, Tensor<float>(Shape{1, 2}, 0.1f)), StateError);
}

TEST_CASE("gradient_check passes the reduced stack and reports ten groups") {
  const GradCheckReport report = gradient_check(build_reduced_spec(), 3, 1e-5);
  CHECK(report.pass);
  CHECK(report.max_rel_err <= 1e-5);
  REQUIRE(report.groups.size() == 10);
  const std::vector<std::string> expected = {"conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1",
                                             "conv3_2", "conv4_1", "conv4_2", "dense1", "dense2"};
  for (size_t i = 0; i < expected.size(); ++i) CHECK(report.groups[i].layer == expected[i]);
}

TEST_CASE("gradient_check detects a harness-level tolerance violation") {
  // an unattainable tolerance must fail the report
  const GradCheckReport report = gradient_check(build_reduced_spec(), 3, 1e-13);
  CHECK_FALSE(report.pass);

  // a sign-flipped gradient yields a relative error near 2 under the same norm
  const double bp = 0.125, fd = -0.125;
  const double rel = std::abs(bp - fd) / std::abs(fd);
  CHECK(rel == doctest::Approx(2.0));
}

// --- LPNW checkpoints ---------------------------------------------------------

TEST_CASE("checkpoint round trip is bit-exact and byte-stable") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<float> params = init_params<float>(spec, 11);
  testutil::TempDir tmp("ckpt");

  const std::string p1 = tmp.file("a.lpnw"), p2 = tmp.file("b.lpnw");
  save_weights(params, p1);
  const ModelParams<float> loaded = load_weights(p1, spec);
  REQUIRE(loaded.names == params.names);
  for (size_t i = 0; i < params.tensors.size(); ++i) CHECK(loaded.tensors[i] == params.tensors[i]);

  save_weights(loaded, p2);
  CHECK(testutil::read_bytes(p1) == testutil::read_bytes(p2));
}

TEST_CASE("checkpoint round trip preserves forward outputs bit-exactly") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<float> params = init_params<float>(spec, 13);
  testutil::TempDir tmp("ckpt_fwd");
  save_weights(params, tmp.file("w.lpnw"));
  const ModelParams<float> loaded = load_weights(tmp.file("w.lpnw"), spec);

  RngStream data(31);
  Tensor<float> batch = testutil::random_tensor<float>(
      Shape{2, spec.input_h, spec.input_w, spec.input_c}, data, 0, 1);
  const auto a = model_forward(params, spec, batch, RunMode::infer, RngStream(0), false);
  const auto b = model_forward(loaded, spec, batch, RunMode::infer, RngStream(0), false);
  CHECK(a.probs == b.probs);
}

TEST_CASE("checkpoint corruption raises the matching distinct error") {
  const ModelSpec spec = build_reduced_spec();
  const ModelParams<float> params = init_params<float>(spec, 17);
  testutil::TempDir tmp("ckpt_bad");
  const std::string good = tmp.file("good.lpnw");
  save_weights(params, good);
  const std::vector<uint8_t> bytes = testutil::read_bytes(good);

  SUBCASE("bad magic") {
    std::vector<uint8_t> bad = bytes;
    bad[0] = 'X';
    bad[1] = 'X';
    testutil::write_bytes(tmp.file("bad.lpnw"), bad);
    try {
      load_weights(tmp.file("bad.lpnw"));
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::bad_magic);
    }
  }
  SUBCASE("bad version") {
    std::vector<uint8_t> bad = bytes;
    bad[4] = 9;
    testutil::write_bytes(tmp.file("bad.lpnw"), bad);
    try {
      load_weights(tmp.file("bad.lpnw"));
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::bad_version);
    }
  }
  SUBCASE("truncation") {
    std::vector<uint8_t> bad(bytes.begin(), bytes.end() - 9);
    testutil::write_bytes(tmp.file("bad.lpnw"), bad);
    try {
      load_weights(tmp.file("bad.lpnw"));
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::truncated);
    }
  }
  SUBCASE("payload corruption fails the checksum") {
    std::vector<uint8_t> bad = bytes;
    bad[bytes.size() / 2] ^= 0x40;
    testutil::write_bytes(tmp.file("bad.lpnw"), bad);
    try {
      load_weights(tmp.file("bad.lpnw"));
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::checksum_mismatch);
    }
  }
  SUBCASE("shape mismatch against a different spec") {
    try {
      load_weights(good, build_lightpneumonet());
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::shape_mismatch);
    }
  }
}

TEST_CASE("crc32 matches the IEEE reference vector") {
  const char* s = "123456789";
  CHECK(crc32(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
}
