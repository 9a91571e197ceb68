#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedtune/errors.hpp"
#include "fedtune/hp_space.hpp"
#include "fedtune/rng.hpp"
#include "fedtune/stats.hpp"

using namespace fedtune;

namespace {

const hp::Dimension& dim(const hp::SearchSpace& space, std::string_view name) {
  return space.dimension(name);
}

}  // namespace

TEST_CASE("default space pins all nine dimensions") {
  const auto space = hp::default_space();
  REQUIRE(space.dimensions().size() == 9);

  const auto& server_lr = dim(space, "server_lr");
  CHECK(server_lr.kind == hp::DimKind::log_uniform);
  CHECK(server_lr.lo == -6.0);
  CHECK(server_lr.hi == -1.0);

  const auto& beta1 = dim(space, "beta1");
  CHECK(beta1.kind == hp::DimKind::uniform);
  CHECK(beta1.lo == 0.0);
  CHECK(beta1.hi == 0.9);

  const auto& beta2 = dim(space, "beta2");
  CHECK(beta2.kind == hp::DimKind::uniform);
  CHECK(beta2.lo == 0.0);
  CHECK(beta2.hi == 0.999);

  const auto& lr_decay = dim(space, "lr_decay");
  CHECK(lr_decay.kind == hp::DimKind::fixed);
  CHECK(lr_decay.value == 0.9999);

  const auto& client_lr = dim(space, "client_lr");
  CHECK(client_lr.kind == hp::DimKind::log_uniform);
  CHECK(client_lr.lo == -6.0);
  CHECK(client_lr.hi == 0.0);

  const auto& momentum = dim(space, "momentum");
  CHECK(momentum.kind == hp::DimKind::uniform);
  CHECK(momentum.lo == 0.0);
  CHECK(momentum.hi == 0.9);

  const auto& weight_decay = dim(space, "weight_decay");
  CHECK(weight_decay.kind == hp::DimKind::fixed);
  CHECK(weight_decay.value == 5e-5);

  const auto& batch_size = dim(space, "batch_size");
  CHECK(batch_size.kind == hp::DimKind::categorical);
  CHECK(batch_size.choices == std::vector<double>{32.0, 64.0, 128.0});

  const auto& epochs = dim(space, "epochs");
  CHECK(epochs.kind == hp::DimKind::fixed);
  CHECK(epochs.value == 1.0);
}

TEST_CASE("samples stay inside the space") {
  const auto space = hp::default_space();
  rng::Stream s(11);
  for (int i = 0; i < 500; ++i) {
    const auto cfg = hp::sample_config(space, s);
    CHECK(space.contains(cfg));
    CHECK(cfg.at("server_lr") >= 1e-6);
    CHECK(cfg.at("server_lr") <= 1e-1);
    CHECK(cfg.at("lr_decay") == 0.9999);
    CHECK(cfg.at("epochs") == 1.0);
    const double bs = cfg.at("batch_size");
    CHECK((bs == 32.0 || bs == 64.0 || bs == 128.0));
  }
}

TEST_CASE("log-uniform dimension is uniform in log10") {
  const auto space = hp::default_space();
  rng::Stream s(12);
  std::vector<double> exps;
  exps.reserve(4000);
  for (int i = 0; i < 4000; ++i) {
    exps.push_back(std::log10(hp::sample_config(space, s).at("client_lr")));
  }
  const auto cdf = [](double x) { return std::clamp((x + 6.0) / 6.0, 0.0, 1.0); };
  CHECK(stats::ks_statistic(exps, cdf) < 0.03);
}

TEST_CASE("categorical choices come out roughly equally often") {
  const auto space = hp::default_space();
  rng::Stream s(13);
  std::vector<double> counts(3, 0.0);
  const int n = 3000;
  for (int i = 0; i < n; ++i) {
    const double bs = hp::sample_config(space, s).at("batch_size");
    counts[bs == 32.0 ? 0 : bs == 64.0 ? 1 : 2] += 1.0;
  }
  const std::vector<double> expected(3, n / 3.0);
  // 2 dof, 0.999 quantile ~= 13.8.
  CHECK(stats::chi_square_stat(counts, expected) < 13.8);
}

TEST_CASE("nested server-lr spaces share the midpoint and nest by width") {
  for (const int width : {1, 2, 3, 4}) {
    const auto space = hp::nested_server_lr_space(width);
    const auto& d = dim(space, "server_lr");
    CHECK(d.kind == hp::DimKind::log_uniform);
    CHECK(d.lo == doctest::Approx(-3.0 - width / 2.0));
    CHECK(d.hi == doctest::Approx(-3.0 + width / 2.0));
    // Geometric midpoint is always 1e-3.
    CHECK(std::sqrt(std::pow(10.0, d.lo) * std::pow(10.0, d.hi)) ==
          doctest::Approx(1e-3).epsilon(1e-12));
    // Everything else matches the default space.
    CHECK(space.dimensions().size() == 9);
    CHECK(dim(space, "client_lr").lo == -6.0);
  }
  // Narrow widths are strict subsets of wider ones.
  const auto narrow = hp::nested_server_lr_space(1);
  const auto wide = hp::nested_server_lr_space(4);
  rng::Stream s(14);
  for (int i = 0; i < 200; ++i) {
    const auto cfg = hp::sample_config(narrow, s);
    CHECK(wide.contains(cfg));
  }
  CHECK_THROWS_AS(hp::nested_server_lr_space(0), SpecError);
  CHECK_THROWS_AS(hp::nested_server_lr_space(5), SpecError);
  CHECK_THROWS_AS(hp::nested_server_lr_space(-1), SpecError);
}

TEST_CASE("dimension bounds and transforms") {
  const auto d = hp::Dimension::log_uniform("lr", -4.0, -1.0);
  CHECK(d.contains(1e-4));
  CHECK(d.contains(1e-1));
  CHECK(d.contains(3e-3));
  CHECK(!d.contains(1e-5));
  CHECK(!d.contains(0.5));
  CHECK(d.transform(1e-2) == doctest::Approx(-2.0));
  CHECK(d.lower_t() == -4.0);
  CHECK(d.upper_t() == -1.0);
  CHECK(d.is_continuous());

  const auto u = hp::Dimension::uniform("m", 0.0, 0.9);
  CHECK(u.transform(0.45) == 0.45);
  CHECK(u.contains(0.0));
  CHECK(!u.contains(0.91));

  const auto c = hp::Dimension::categorical("bs", {32.0, 64.0});
  CHECK(c.contains(64.0));
  CHECK(!c.contains(48.0));
  CHECK(!c.is_continuous());

  const auto f = hp::Dimension::fixed("e", 1.0);
  CHECK(f.contains(1.0));
  CHECK(!f.contains(2.0));
}

TEST_CASE("config accessors throw on missing names") {
  hp::HpConfig cfg;
  cfg.set("a", 1.0);
  CHECK(cfg.has("a"));
  CHECK(!cfg.has("b"));
  CHECK(cfg.at("a") == 1.0);
  CHECK_THROWS_AS(cfg.at("b"), SpecError);
}

TEST_CASE("space validation rejects malformed dimensions") {
  using hp::Dimension;
  // Duplicate names.
  CHECK_THROWS_AS(hp::SearchSpace({Dimension::fixed("x", 1.0), Dimension::fixed("x", 2.0)}),
                  SpecError);
  // Inverted bounds.
  CHECK_THROWS_AS(hp::SearchSpace({Dimension::uniform("x", 1.0, 0.0)}), SpecError);
  CHECK_THROWS_AS(hp::SearchSpace({Dimension::log_uniform("x", -1.0, -2.0)}), SpecError);
  // Empty categorical.
  CHECK_THROWS_AS(hp::SearchSpace({Dimension::categorical("x", {})}), SpecError);
  // Empty space.
  CHECK_THROWS_AS(hp::SearchSpace({}), SpecError);
  // Unknown dimension lookup.
  const auto space = hp::default_space();
  CHECK_THROWS_AS(space.dimension("nope"), SpecError);
  CHECK(space.find("nope") == nullptr);
  CHECK(space.find("beta1") != nullptr);
}

TEST_CASE("contains requires exactly the space's dimensions") {
  const auto space = hp::default_space();
  rng::Stream s(15);
  auto cfg = hp::sample_config(space, s);
  REQUIRE(space.contains(cfg));
  // Out-of-range value.
  auto bad = cfg;
  bad.set("beta1", 2.0);
  CHECK(!space.contains(bad));
  // Extra dimension.
  auto extra = cfg;
  extra.set("mystery", 1.0);
  CHECK(!space.contains(extra));
  // Missing dimension.
  hp::HpConfig partial;
  partial.set("beta1", 0.5);
  CHECK(!space.contains(partial));
}

TEST_CASE("sampling is reproducible from the stream seed") {
  const auto space = hp::default_space();
  rng::Stream a(99), b(99);
  for (int i = 0; i < 20; ++i) {
    CHECK(hp::sample_config(space, a) == hp::sample_config(space, b));
  }
}
