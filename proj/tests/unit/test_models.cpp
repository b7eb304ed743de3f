#include "doctest.h"
#include "kwscl/autodiff/checkpoint.hpp"
#include "kwscl/models/describe.hpp"
#include "kwscl/models/layers.hpp"
#include "kwscl/models/subnet.hpp"
#include "kwscl/models/tcresnet.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kwscl;
using namespace kwscl::models;

using test::subnet_params;
using test::tcresnet8_params;

TEST_CASE("layer parameter counts follow the closed forms") {
  Rng rng(1);
  CHECK(Dense(10, 5, rng).param_count() == 55);
  CHECK(Conv1d(4, 8, 3, 1, 1, rng).param_count() == 104);
  CHECK(BatchNorm1d(7).param_count() == 14);
}

TEST_CASE("TC-ResNet-8 parameter count matches the construction oracle") {
  for (std::size_t classes : {2u, 3u, 15u, 30u}) {
    TcResNet8Spec spec;
    spec.n_classes = classes;
    TcResNet8 net(spec, 0);
    CHECK(count_parameters(net) == tcresnet8_params(classes));
    std::size_t from_segments = 0;
    for (const auto& s : ad::decode_checkpoint(ad::encode_checkpoint(net.parameters())))
      if (s.trainable) from_segments += s.values.size();
    CHECK(from_segments == tcresnet8_params(classes));
  }
  CHECK(tcresnet8_params(15) == 29943);
}

TEST_CASE("TC-ResNet-8 structure and shapes") {
  TcResNet8Spec spec;
  TcResNet8 net(spec, 3);
  const auto rows = net.describe();
  std::size_t convs = 0, shortcuts = 0;
  for (const auto& r : rows) {
    if (r.kind.rfind("conv1d", 0) == 0) ++(r.name.find("shortcut") != std::string::npos ? shortcuts : convs);
  }
  CHECK(convs == 7);
  CHECK(shortcuts == 3);
  CHECK(net.encoder_channels() == 24);
  CHECK(net.encoder_length() == 49);

  Rng rng(2);
  auto x = test::random_tensor(rng, {2, 40, 101}, false);
  const auto logits = net.forward(x, ad::Mode::eval());
  CHECK(logits.shape() == ad::Shape{2, 15});
  auto h = net.encode(test::random_tensor(rng, {1, 40, 98}, false), ad::Mode::eval());
  CHECK(h.shape() == ad::Shape{1, 24, 49});

  TcResNet8Spec bad;
  bad.n_classes = 1;
  CHECK_THROWS_AS(TcResNet8(bad, 0), ConfigError);
}

TEST_CASE("same seed builds bitwise-identical checkpoints") {
  TcResNet8 a(TcResNet8Spec{}, 9), b(TcResNet8Spec{}, 9), c(TcResNet8Spec{}, 10);
  CHECK(ad::encode_checkpoint(a.parameters()) == ad::encode_checkpoint(b.parameters()));
  CHECK(ad::encode_checkpoint(a.parameters()) != ad::encode_checkpoint(c.parameters()));
}

TEST_CASE("clone and new head") {
  TcResNet8 net(TcResNet8Spec{}, 4);
  auto copy = net.clone();
  CHECK(ad::encode_checkpoint(copy->parameters()) == ad::encode_checkpoint(net.parameters()));
  auto fresh = net.with_new_head(3, 77);
  CHECK(fresh->num_outputs() == 3);
  CHECK(fresh->encoder_parameters().flatten(false) == net.encoder_parameters().flatten(false));
  // The copy owns its storage.
  copy->parameters().segments()[0].tensor.data()[0] += 1.0;
  CHECK(copy->parameters().flatten()[0] != net.parameters().flatten()[0]);
}

TEST_CASE("width multiplier examples") {
  ScalingConfig cfg;
  CHECK(width_multiplier(3, cfg) == doctest::Approx(0.2));
  CHECK(width_multiplier(15, cfg) == 1.0);
  cfg.mu = 2.5;
  CHECK(width_multiplier(3, cfg) == doctest::Approx(0.5));
  CHECK_THROWS_AS(width_multiplier(0, cfg), ConfigError);
  cfg.mu = 0.0;
  CHECK_THROWS_AS(width_multiplier(3, cfg), ConfigError);
  ScalingConfig no_base;
  no_base.pretrain_keywords = 0;
  CHECK_THROWS_AS(width_multiplier(3, no_base), ConfigError);
}

TEST_CASE("channel rounding is half-up with a clamp at one") {
  CHECK(scale_channels(16, 0.2) == 3);
  CHECK(scale_channels(48, 0.2) == 10);
  CHECK(scale_channels(10, 0.25) == 3);  // 2.5 rounds up
  CHECK(scale_channels(16, 0.5) == 8);
  bool clamped = false;
  CHECK(scale_channels(16, 1.0 / 48.0, &clamped) == 1);
  CHECK(clamped);
}

TEST_CASE("instantiated sub-networks") {
  ScalingConfig cfg;
  auto scaled = instantiate_subnet(3, cfg, false, 24, 49, 1);
  CHECK(scaled.net->channels() == std::vector<std::size_t>{3, 10});
  CHECK(count_parameters(*scaled.net) == subnet_params(3, 10, 3));
  CHECK(count_parameters(*scaled.net) == 648);
  CHECK(scaled.warnings.empty());

  auto fixed = instantiate_subnet(3, cfg, true, 24, 49, 1);
  CHECK(fixed.net->channels() == std::vector<std::size_t>{16, 48});
  CHECK(count_parameters(*fixed.net) == subnet_params(16, 48, 3));

  ScalingConfig wide;
  wide.pretrain_keywords = 48;
  auto tiny = instantiate_subnet(1, wide, false, 24, 49, 1);
  CHECK(tiny.net->channels() == std::vector<std::size_t>{1, 1});
  CHECK_FALSE(tiny.warnings.empty());

  Rng rng(5);
  auto h = test::random_tensor(rng, {4, 24, 49}, false);
  CHECK(scaled.net->forward(h, ad::Mode::eval()).shape() == ad::Shape{4, 3});
  CHECK_THROWS_AS(instantiate_subnet(0, cfg, false, 24, 49, 1), ConfigError);
}

TEST_CASE("sub-network size is monotone in alpha and bounded by the fixed variant") {
  std::size_t prev = 0;
  for (double alpha = 0.05; alpha <= 1.0001; alpha += 0.05) {
    SubNetSpec spec;
    spec.alpha = alpha;
    const auto n = count_parameters(SubNet(spec, 0));
    CHECK(n >= prev);
    prev = n;
  }
  for (std::size_t ct = 1; ct <= 15; ++ct) {
    auto s = instantiate_subnet(ct, ScalingConfig{}, false, 24, 49, 0);
    auto f = instantiate_subnet(ct, ScalingConfig{}, true, 24, 49, 0);
    CHECK(count_parameters(*s.net) <= count_parameters(*f.net));
    CHECK(s.net->num_outputs() == ct);
  }
}

TEST_CASE("describe emits text and json") {
  TcResNet8 net(TcResNet8Spec{}, 0);
  const auto text = describe_table(net);
  CHECK(text.find("block3.conv_b") != std::string::npos);
  CHECK(text.find("29943") != std::string::npos);
  const auto j = describe_json(net);
  CHECK(j["total_params"].get<std::size_t>() == 29943);
  CHECK(j["layers"].size() == net.describe().size());
}
