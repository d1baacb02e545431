#include <catch2/catch.hpp>

#include "oracle.hpp"
#include "res2net/block.hpp"

using namespace res2net;

namespace {

// Running variance such that rv + epsilon == 1.0f exactly, making eval-mode
// BN with gamma=1, beta=0, mean=0 a bit-exact identity.
float identity_rv() {
  const float eps = static_cast<float>(kBnEpsilon);
  float rv = 1.0f - eps;
  while (rv + eps < 1.0f) rv = std::nextafterf(rv, 2.0f);
  while (rv + eps > 1.0f) rv = std::nextafterf(rv, 0.0f);
  return rv;
}

void force_identity_bn(ParamStore<float>& store, const std::string& bn) {
  const float rv = identity_rv();
  for (std::size_t i = 0; i < store.at(bn + ".gamma").numel(); ++i) {
    store.at(bn + ".gamma")[i] = 1.0f;
    store.at(bn + ".beta")[i] = 0.0f;
    store.at(bn + ".running_mean")[i] = 0.0f;
    store.at(bn + ".running_var")[i] = rv;
  }
}

// Centered delta with grouped identity channel mapping: K_i acts as the
// identity on its input.
void force_delta_kernel(Tensor<float>& w) {
  const Shape4 s = w.shape();
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.0f;
  for (int o = 0; o < s.n; ++o) {
    w.at(o, o % s.c, s.h / 2, s.w / 2) = 1.0f;
  }
}

}  // namespace

TEST_CASE("delta-kernel law: pre-concat splits are hierarchical prefix sums") {
  for (int s = 2; s <= 8; ++s) {
    const int c = s % 2 == 0 ? 2 : 1;
    Res2NetBlockConfig cfg;
    cfg.width = 4;
    cfg.scale = s;
    cfg.cardinality = c;
    cfg.in_channels = cfg.internal_channels();
    cfg.out_channels = cfg.internal_channels();
    Rng rng(100 + s);
    ParamStore<float> store;
    init_block_params(store, "blk", cfg, rng);
    // conv1 as a 1x1 identity, all BNs exact identity, every K_i a delta.
    force_delta_kernel(store.at("blk.conv1.weight"));
    force_identity_bn(store, "blk.bn1");
    for (int i = 2; i <= s; ++i) {
      force_delta_kernel(store.at("blk.conv2_" + std::to_string(i) + ".weight"));
      force_identity_bn(store, "blk.bn2_" + std::to_string(i));
    }

    Tensor<float> input(Shape4{1, cfg.in_channels, 5, 5});
    Rng vals(7);
    for (std::size_t i = 0; i < input.numel(); ++i) {
      input[i] = static_cast<float>(vals.uniform(0.1, 1.0));  // positive
    }

    Tape<float> tape;
    SlotMap slots = bind_leaves(tape, store);
    const int x = tape.leaf(input);
    std::vector<int> splits;
    res2net_block_forward(tape, x, cfg, slots, store, "blk", BnMode::eval,
                          nullptr, &splits);
    REQUIRE(static_cast<int>(splits.size()) == s);

    const auto xs = split_channels(input, s);
    Tensor<float> expected = xs[0];
    REQUIRE(tape.value(splits[0]).vec() == expected.vec());
    for (int i = 2; i <= s; ++i) {
      expected = i == 2 ? xs[1] : add(xs[i - 1], expected);
      INFO("scale " << s << " split " << i);
      REQUIRE(tape.value(splits[i - 1]).vec() == expected.vec());
    }
  }
}

TEST_CASE("s=2 has no hierarchical add: y = [x1, K2(x2)]") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.width = 4;
  cfg.scale = 2;
  Rng rng(11);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);

  const Tensor<float> input = Tensor<float>::randn(Shape4{2, 8, 6, 6}, 13);
  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const int x = tape.leaf(input);
  std::vector<int> splits;
  res2net_block_forward(tape, x, cfg, slots, store, "blk", BnMode::eval,
                        nullptr, &splits);
  REQUIRE(splits.size() == 2);

  // Recompute the K2 path independently from the recorded post-reduce value.
  const Tensor<float> h = oracle::relu(oracle::batch_norm_eval(
      oracle::conv2d(input, store.at("blk.conv1.weight"), 1, 0, 1),
      store.at("blk.bn1.gamma").vec(), store.at("blk.bn1.beta").vec(),
      store.at("blk.bn1.running_mean").vec(),
      store.at("blk.bn1.running_var").vec(),
      static_cast<float>(kBnEpsilon)));
  const auto xs = oracle::split(h, 2);
  CHECK(oracle::max_rel_diff(tape.value(splits[0]), xs[0]) == 0.0);
  const Tensor<float> y2 = oracle::relu(oracle::batch_norm_eval(
      oracle::conv2d(xs[1], store.at("blk.conv2_2.weight"), 1, 1, 1),
      store.at("blk.bn2_2.gamma").vec(), store.at("blk.bn2_2.beta").vec(),
      store.at("blk.bn2_2.running_mean").vec(),
      store.at("blk.bn2_2.running_var").vec(),
      static_cast<float>(kBnEpsilon)));
  CHECK(oracle::max_rel_diff(tape.value(splits[1]), y2) < 1e-6);
}

TEST_CASE("zero input with zero BN betas and SE off gives zero output") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 16;
  cfg.width = 4;
  cfg.scale = 4;
  Rng rng(17);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);  // betas start at zero

  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const int x = tape.leaf(Tensor<float>(Shape4{2, 8, 5, 5}));
  const int out =
      res2net_block_forward(tape, x, cfg, slots, store, "blk", BnMode::eval);
  for (std::size_t i = 0; i < tape.value(out).numel(); ++i) {
    REQUIRE(tape.value(out)[i] == 0.0f);
  }
}

TEST_CASE("block forward matches the straight-line scalar oracle") {
  struct Case {
    int in, out, w, s, c;
    bool se;
  };
  const Case cases[] = {
      {8, 16, 2, 4, 1, false},
      {8, 8, 4, 3, 2, false},
      {16, 32, 4, 4, 2, true},
      {4, 4, 4, 1, 1, false},
  };
  int seed = 900;
  for (const auto& tc : cases) {
    Res2NetBlockConfig cfg;
    cfg.in_channels = tc.in;
    cfg.out_channels = tc.out;
    cfg.width = tc.w;
    cfg.scale = tc.s;
    cfg.cardinality = tc.c;
    cfg.use_se = tc.se;
    cfg.se_ratio = 4;
    Rng rng(seed++);
    ParamStore<float> store;
    init_block_params(store, "blk", cfg, rng);
    // Nontrivial running stats so eval-mode BN is exercised.
    for (auto& e : store.entries()) {
      if (e.name.find("running_mean") != std::string::npos) {
        for (std::size_t i = 0; i < e.value.numel(); ++i)
          e.value[i] = 0.05f * static_cast<float>(i % 5) - 0.1f;
      }
      if (e.name.find("running_var") != std::string::npos) {
        for (std::size_t i = 0; i < e.value.numel(); ++i)
          e.value[i] = 0.5f + 0.2f * static_cast<float>(i % 4);
      }
    }
    const Tensor<float> input =
        Tensor<float>::randn(Shape4{2, tc.in, 6, 6}, seed * 31);

    for (const BnMode mode : {BnMode::eval, BnMode::train}) {
      Tape<float> tape;
      SlotMap slots = bind_leaves(tape, store);
      const int x = tape.leaf(input);
      const int out =
          res2net_block_forward(tape, x, cfg, slots, store, "blk", mode);
      const Tensor<float> ref = oracle::res2net_block(
          input, cfg, store, "blk", mode == BnMode::train);
      INFO("in=" << tc.in << " s=" << tc.s << " c=" << tc.c << " se=" << tc.se
                 << " train=" << (mode == BnMode::train));
      CHECK(oracle::max_rel_diff(tape.value(out), ref) < 1e-5);
    }
  }
}

TEST_CASE("se_apply with zero FC2 scales the input by exactly 0.5") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.width = 2;
  cfg.scale = 4;
  cfg.use_se = true;
  cfg.se_ratio = 4;
  Rng rng(23);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  auto& w2 = store.at("blk.se.fc2.weight");
  for (std::size_t i = 0; i < w2.numel(); ++i) w2[i] = 0.0f;

  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const Tensor<float> u = Tensor<float>::randn(Shape4{2, 8, 4, 4}, 29);
  const int us = tape.leaf(u);
  const int out = se_apply(tape, us, slots, store, "blk.se");
  for (std::size_t i = 0; i < u.numel(); ++i) {
    REQUIRE(tape.value(out)[i] == 0.5f * u[i]);
  }
}

TEST_CASE("se squeeze emits the constant channel value") {
  Tensor<float> u(Shape4{2, 3, 4, 4});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w)
          u.at(n, c, h, w) = static_cast<float>(n + 10 * c);
  const Tensor<float> z = global_avg_pool(u);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      CHECK(z.at(n, c, 0, 0) == Approx(static_cast<float>(n + 10 * c)));
}

TEST_CASE("se chain matches the scalar oracle") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.width = 2;
  cfg.scale = 4;
  cfg.use_se = true;
  cfg.se_ratio = 2;
  Rng rng(31);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  const Tensor<float> u = Tensor<float>::randn(Shape4{2, 8, 5, 5}, 37);

  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const int out = se_apply(tape, tape.leaf(u), slots, store, "blk.se");
  const Tensor<float> ref = oracle::se_block(
      u, store.at("blk.se.fc1.weight"), store.at("blk.se.fc1.bias"),
      store.at("blk.se.fc2.weight"), store.at("blk.se.fc2.bias"));
  CHECK(oracle::max_rel_diff(tape.value(out), ref) < 1e-6);
}

TEST_CASE("bottleneck with delta mid-kernel obeys the shortcut law") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.width = 8;
  cfg.scale = 1;
  Rng rng(41);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  force_delta_kernel(store.at("blk.conv2_1.weight"));
  force_identity_bn(store, "blk.bn1");
  force_identity_bn(store, "blk.bn2_1");
  force_identity_bn(store, "blk.bn3");

  const Tensor<float> x = Tensor<float>::randn(Shape4{1, 8, 5, 5}, 43);
  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const int out =
      bottleneck_forward(tape, tape.leaf(x), cfg, slots, store, "blk",
                         BnMode::eval);
  const Tensor<float> chain = oracle::conv2d(
      oracle::relu(oracle::relu(
          oracle::conv2d(x, store.at("blk.conv1.weight"), 1, 0, 1))),
      store.at("blk.conv3.weight"), 1, 0, 1);
  const Tensor<float> expected = oracle::relu(oracle::add(chain, x));
  CHECK(oracle::max_rel_diff(tape.value(out), expected) < 1e-6);
}

TEST_CASE("bottleneck matches the scalar oracle on a random case") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 16;
  cfg.width = 8;
  cfg.scale = 1;
  cfg.cardinality = 2;
  cfg.stride = 2;
  Rng rng(47);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  const Tensor<float> x = Tensor<float>::randn(Shape4{2, 8, 8, 8}, 53);
  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const int out = bottleneck_forward(tape, tape.leaf(x), cfg, slots, store,
                                     "blk", BnMode::eval);
  CHECK(oracle::max_rel_diff(tape.value(out),
                             oracle::bottleneck_block(x, cfg, store, "blk")) <
        1e-6);
  CHECK(tape.value(out).shape() == Shape4{2, 16, 4, 4});
}

TEST_CASE("res2net block with s=1 degenerates to the bottleneck exactly") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 64;
  cfg.out_channels = 256;
  cfg.width = 64;
  cfg.scale = 1;
  Rng rng(59);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  // Closed-form bottleneck parameter count: 1x1 reduce + 3x3 + 1x1 expand,
  // BN affine pairs, plus the projection shortcut.
  const std::size_t expected = 64 * 64 + 2 * 64 + 64 * 64 * 9 + 2 * 64 +
                               64 * 256 + 2 * 256 + 64 * 256 + 2 * 256;
  CHECK(store.total_elements(true) == expected);
  CHECK(store.at("blk.conv2_1.weight").shape() == Shape4{64, 64, 3, 3});

  // And the two forwards compute the same function on the same parameters.
  const Tensor<float> x = Tensor<float>::randn(Shape4{1, 64, 4, 4}, 61);
  Tape<float> ta;
  SlotMap sa = bind_leaves(ta, store);
  const int a = res2net_block_forward(ta, ta.leaf(x), cfg, sa, store, "blk",
                                      BnMode::eval);
  Tape<float> tb;
  SlotMap sb = bind_leaves(tb, store);
  const int b =
      bottleneck_forward(tb, tb.leaf(x), cfg, sb, store, "blk", BnMode::eval);
  REQUIRE(ta.value(a).vec() == tb.value(b).vec());
}

TEST_CASE("strided blocks: spatial dims and both strided forms") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 16;
  cfg.width = 4;
  cfg.scale = 4;
  cfg.stride = 2;
  Rng rng(61);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  const Tensor<float> x = Tensor<float>::randn(Shape4{1, 8, 8, 8}, 67);

  for (const StridedForm form :
       {StridedForm::parallel, StridedForm::pooled_hierarchical}) {
    Res2NetBlockConfig c2 = cfg;
    c2.strided_form = form;
    Tape<float> tape;
    SlotMap slots = bind_leaves(tape, store);
    const int out = res2net_block_forward(tape, tape.leaf(x), c2, slots, store,
                                          "blk", BnMode::eval);
    CHECK(tape.value(out).shape() == Shape4{1, 16, 4, 4});
  }

  // The parallel form matches the oracle's strided branch.
  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, store);
  const int out = res2net_block_forward(tape, tape.leaf(x), cfg, slots, store,
                                        "blk", BnMode::eval);
  CHECK(oracle::max_rel_diff(tape.value(out),
                             oracle::res2net_block(x, cfg, store, "blk")) <
        1e-5);

  // Stride-1 blocks preserve H and W exactly.
  Res2NetBlockConfig flat = cfg;
  flat.stride = 1;
  flat.in_channels = 16;
  ParamStore<float> store2;
  Rng rng2(71);
  init_block_params(store2, "blk", flat, rng2);
  Tape<float> t2;
  SlotMap slots2 = bind_leaves(t2, store2);
  const int out2 = res2net_block_forward(
      t2, t2.leaf(Tensor<float>::randn(Shape4{1, 16, 9, 9}, 73)), flat, slots2,
      store2, "blk", BnMode::eval);
  CHECK(t2.value(out2).shape() == Shape4{1, 16, 9, 9});
}

TEST_CASE("forward is bit-deterministic across repeated runs") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 16;
  cfg.width = 4;
  cfg.scale = 4;
  Rng rng(79);
  ParamStore<float> store;
  init_block_params(store, "blk", cfg, rng);
  const Tensor<float> x = Tensor<float>::randn(Shape4{2, 8, 6, 6}, 83);

  std::vector<float> first;
  for (int run = 0; run < 2; ++run) {
    Tape<float> tape;
    SlotMap slots = bind_leaves(tape, store);
    const int out = res2net_block_forward(tape, tape.leaf(x), cfg, slots,
                                          store, "blk", BnMode::eval);
    if (run == 0) {
      first = tape.value(out).vec();
    } else {
      REQUIRE(tape.value(out).vec() == first);
    }
  }
}

TEST_CASE("block config validation") {
  Res2NetBlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.width = 3;
  cfg.scale = 2;
  cfg.cardinality = 2;  // width not divisible by cardinality
  CHECK_THROWS_AS(cfg.validate(), NonDivisibleChannels);
  cfg.width = 4;
  cfg.stride = 3;
  CHECK_THROWS_AS(cfg.validate(), ShapeMismatch);
  cfg.stride = 1;
  CHECK_NOTHROW(cfg.validate());
}
