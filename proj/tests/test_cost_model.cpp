#include <catch2/catch_amalgamated.hpp>

#include "eeroute/cost_model.hpp"
#include "eeroute/fixture.hpp"
#include "eeroute/rng.hpp"

using namespace eeroute;

namespace {

// Independent FLOP oracle: walks the full convolution loop nest and counts 2
// FLOPs per multiply-accumulate. Deliberately naive; only feasible for small
// specs.
std::uint64_t loop_nest_flops(const ModuleSpec& m) {
  std::uint64_t flops = 0;
  for (int conv = 0; conv < m.convs_per_block; ++conv) {
    const int cin = conv == 0 ? m.in_channels : m.out_channels;
    for (int o = 0; o < m.out_channels; ++o)
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
          for (int ky = 0; ky < m.kernel; ++ky)
            for (int kx = 0; kx < m.kernel; ++kx)
              for (int i = 0; i < cin; ++i) flops += 2;
  }
  return flops;
}

std::vector<ModuleSpec> random_backbone(Rng& rng, int n) {
  std::vector<ModuleSpec> bb;
  int prev = 32 << rng.next_below(4);
  int h = 8, w = 8;
  for (int i = 0; i < n; ++i) {
    int out = 16 << rng.next_below(5);
    bb.push_back({prev, out, h, w, 3, 3});
    prev = out;
    h *= 2;
    w *= 2;
  }
  return bb;
}

const std::string kFixtureDir = EEROUTE_FIXTURE_DIR;

}  // namespace

TEST_CASE("scale_channels applies factor with floor and half-away rounding") {
  CHECK(scale_channels(128, {1.0 / 3.0, 64}) == 64);
  CHECK(scale_channels(64, {0.5, 64}) == 64);
  CHECK(scale_channels(512, {0.5, 64}) == 256);
  CHECK(scale_channels(1024, {0.25, 64}) == 256);
  // Half away from zero: 3 * 0.5 = 1.5 -> 2.
  CHECK(scale_channels(3, {0.5, 1}) == 2);
  CHECK_THROWS_AS(scale_channels(0, {0.5, 1}), std::invalid_argument);
  CHECK_THROWS_AS(scale_channels(8, {1.5, 1}), std::invalid_argument);
}

TEST_CASE("scale_channels is monotone non-decreasing in the channel count") {
  for (double sf : {0.5, 1.0 / 3.0, 0.25, 0.17}) {
    ScalePolicy p{sf, 32};
    int prev = scale_channels(1, p);
    for (int c = 2; c <= 2048; ++c) {
      int cur = scale_channels(c, p);
      CHECK(cur >= prev);
      prev = cur;
    }
  }
}

TEST_CASE("build_branch_schedule follows the depth rule") {
  Rng rng(7);
  auto bb = random_backbone(rng, 6);
  auto branch = build_branch_schedule(bb, 4, {0.5, 16});
  CHECK(branch.size() == 2);
  CHECK_THROWS_AS(build_branch_schedule(bb, 0, {0.5, 16}), std::out_of_range);
  CHECK_THROWS_AS(build_branch_schedule(bb, 6, {0.5, 16}), std::out_of_range);
}

TEST_CASE("landscape backbone at factor 1/2 reproduces the published channel pairs") {
  auto g = load_fixture(kFixtureDir + "/landscape.txt");
  auto branch = build_branch_schedule(g.backbone, 1, {0.5, 64});
  std::vector<std::pair<int, int>> pairs;
  for (const auto& m : branch) pairs.emplace_back(m.in_channels, m.out_channels);
  std::vector<std::pair<int, int>> expected{
      {1024, 512}, {512, 256}, {256, 128}, {128, 64}, {64, 64}};
  CHECK(pairs == expected);
}

TEST_CASE("branch schedules respect the channel floor without widening") {
  // Widths above the floor scale down but never past it; widths already at or
  // below the floor pass through unchanged.
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto bb = random_backbone(rng, 8);
    for (double sf : {0.5, 1.0 / 3.0, 0.25}) {
      for (int k = 1; k <= 7; ++k) {
        auto branch = build_branch_schedule(bb, k, {sf, 24});
        CHECK(static_cast<int>(branch.size()) + k == 8);
        for (std::size_t i = 0; i < branch.size(); ++i) {
          const int unscaled = bb[k + i].out_channels;
          CHECK(branch[i].out_channels >= std::min(unscaled, 24));
          CHECK(branch[i].out_channels <= unscaled);
        }
        CHECK(branch.front().in_channels == bb[k - 1].out_channels);
      }
    }
  }
}

TEST_CASE("flops_of_module matches hand-computed cases") {
  CHECK(flops_of_module({2, 4, 8, 8, 3, 1}) == 9216);
  CHECK(flops_of_module({1, 1, 1, 1, 1, 1}) == 2);
  CHECK(flops_of_module({64, 64, 4, 8, 3, 3}) == loop_nest_flops({64, 64, 4, 8, 3, 3}));
}

TEST_CASE("flops_of_module agrees with the loop-nest oracle on random specs") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    ModuleSpec m{int(rng.next_below(8)) + 1, int(rng.next_below(8)) + 1,
                 int(rng.next_below(6)) + 1, int(rng.next_below(6)) + 1,
                 int(rng.next_below(3)) + 1, int(rng.next_below(3)) + 1};
    CHECK(flops_of_module(m) == loop_nest_flops(m));
  }
}

TEST_CASE("route_cost sums prefix plus branch, backbone is the full sum") {
  RouteGraph g;
  g.backbone = {{8, 8, 4, 4, 3, 1}, {8, 8, 4, 4, 3, 1}, {8, 8, 4, 4, 3, 1}};
  g.branches = {{2, {{8, 1, 4, 4, 3, 1}}}};  // near-zero width tail
  std::uint64_t per_module = flops_of_module(g.backbone[0]);
  CHECK(route_cost(g, kBackboneExit) == 3 * per_module);
  CHECK(route_cost(g, 1) == 2 * per_module + flops_of_module(g.branches[0].modules[0]));
  CHECK(route_cost(g, 1) < route_cost(g, kBackboneExit));
  CHECK_THROWS_AS(route_cost(g, 2), std::out_of_range);
}

TEST_CASE("route costs increase with exit id on both fixtures") {
  for (const char* name : {"/landscape.txt", "/portrait.txt"}) {
    auto g = load_fixture(kFixtureDir + name);
    auto report = cost_report(g);
    for (std::size_t i = 0; i + 1 < report.per_exit_flops.size(); ++i)
      CHECK(report.per_exit_flops[i].second < report.per_exit_flops[i + 1].second);
    CHECK(report.per_exit_flops.back().second < report.backbone_flops);
  }
}

TEST_CASE("smaller scale factors never increase route cost") {
  auto g = load_fixture(kFixtureDir + "/landscape.txt");
  std::vector<double> sfs{0.5, 1.0 / 3.0, 0.25, 0.125};
  for (std::size_t i = 0; i + 1 < sfs.size(); ++i) {
    auto bigger = apply_scale_policy(g, {sfs[i], 64});
    auto smaller = apply_scale_policy(g, {sfs[i + 1], 64});
    for (int e = 1; e <= static_cast<int>(g.branches.size()); ++e)
      CHECK(route_cost(smaller, e) <= route_cost(bigger, e));
  }
}

TEST_CASE("savings_slope fits the negated least-squares slope") {
  CHECK(savings_slope({{0.0, 1000.0}, {0.1, 900.0}}) == Catch::Approx(1000.0));
  CHECK(savings_slope({{0.0, 500.0}, {0.1, 500.0}, {0.2, 500.0}}) == Catch::Approx(0.0));
  CHECK_THROWS_AS(savings_slope({{0.1, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(savings_slope({{0.1, 1.0}, {0.1, 2.0}}), std::invalid_argument);
}

TEST_CASE("fixture parser reports line numbers on bad rows") {
  std::istringstream bad("[backbone]\n1,1,1,1,1,1\n[branch.1]\nnot,a,row,1,1,1\n");
  try {
    parse_fixture(bad);
    FAIL("expected fixture_error");
  } catch (const fixture_error& e) {
    CHECK(e.line() == 4);
  }
}

TEST_CASE("fixture parser rejects depth-rule violations") {
  std::istringstream bad(
      "[backbone]\n4,4,2,2,3,1\n4,4,2,2,3,1\n4,4,2,2,3,1\n[branch.1]\n4,4,2,2,3,1\n");
  CHECK_THROWS_AS(parse_fixture(bad), std::invalid_argument);
}
