#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "wardrop_lab/beckmann.hpp"
#include "wardrop_lab/dynamics.hpp"
#include "wardrop_lab/io.hpp"
#include "wardrop_lab/network.hpp"

using wlab::Error;
using wlab::ErrorCode;
namespace net = wlab::net;
namespace beck = wlab::beck;
namespace dyn = wlab::dyn;

namespace {

std::string fixture(const char* name) {
  return std::string(WLAB_FIXTURE_DIR) + "/" + name;
}

struct Loaded {
  net::Network network;
  net::RouteSet routes;
};

Loaded load(const char* name) {
  const auto nf = wlab::io::parse_network_file(fixture(name));
  return {nf.network, wlab::io::route_set_of(nf)};
}

net::Network two_parallel(double demand, double a1 = 0.0, double a2 = 0.0,
                          double b = 1.0) {
  net::Network n;
  n.nodes = {1, 2};
  n.edges = {{1, 1, 2, {a1, b, 1.0}}, {2, 1, 2, {a2, b, 1.0}}};
  n.od_pairs = {{1, 2, demand}};
  return n;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a wlab::Error");
  return ErrorCode::BadArgument;
}

}  // namespace

TEST_CASE("gamma schedules evaluate and validate") {
  const auto h = dyn::GammaSchedule::harmonic(1.0);
  REQUIRE(h.at(1) == Catch::Approx(1.0));
  REQUIRE(h.at(4) == Catch::Approx(0.25));

  const auto c = dyn::GammaSchedule::constant(0.3);
  REQUIRE(c.at(1) == Catch::Approx(0.3));
  REQUIRE(c.at(1000) == Catch::Approx(0.3));

  const auto s = dyn::GammaSchedule::sqrt_horizon(2.0, 400);
  REQUIRE(s.at(1) == Catch::Approx(0.1));
  REQUIRE(s.at(399) == Catch::Approx(0.1));

  REQUIRE_THROWS_AS(dyn::GammaSchedule::harmonic(0.0), Error);
  REQUIRE_THROWS_AS(dyn::GammaSchedule::harmonic(1.5), Error);
  REQUIRE_THROWS_AS(dyn::GammaSchedule::constant(-0.1), Error);
  REQUIRE_THROWS_AS(dyn::GammaSchedule::sqrt_horizon(300.0, 1), Error);
  REQUIRE_THROWS_AS(dyn::GammaSchedule::sqrt_horizon(1.0, 0), Error);
}

TEST_CASE("demands must be whole players") {
  const auto wide = load("braess_case2.net");
  REQUIRE(dyn::integer_demands(wide.network) == std::vector<long long>{6});

  auto frac = two_parallel(1.5);
  const auto rs = net::enumerate_routes(frac);
  REQUIRE(code_of([&] { dyn::integer_demands(frac); }) ==
          ErrorCode::DomainError);
  (void)rs;
}

TEST_CASE("default start piles everyone on the free-flow best route") {
  const auto wide = load("braess_case2.net");
  const auto s = dyn::initial_state(wide.network, wide.routes);
  // free-flow costs are (50, 10, 50): the shortcut route wins
  REQUIRE(s.counts == std::vector<long long>{0, 6, 0});
  REQUIRE(s.n == 1);
  REQUIRE_NOTHROW(dyn::require_valid(wide.network, wide.routes, s));
}

TEST_CASE("state validation catches bad player assignments") {
  const auto wide = load("braess_case2.net");
  REQUIRE(code_of([&] {
            dyn::require_valid(wide.network, wide.routes, {{1, 5}, 1});
          }) == ErrorCode::DimensionMismatch);
  REQUIRE(code_of([&] {
            dyn::require_valid(wide.network, wide.routes, {{-1, 6, 1}, 1});
          }) == ErrorCode::BadArgument);
  REQUIRE(code_of([&] {
            dyn::require_valid(wide.network, wide.routes, {{1, 1, 1}, 1});
          }) == ErrorCode::InfeasibleFlow);
  REQUIRE(code_of([&] {
            dyn::require_valid(wide.network, wide.routes, {{2, 2, 2}, 0});
          }) == ErrorCode::BadArgument);
}

TEST_CASE("choice weights: symmetry gives an even split") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  const auto w = dyn::choice_weights({{1, 1}, 10}, n, rs, 1.0);
  REQUIRE(w.size() == 1);
  REQUIRE(w[0][0] == Catch::Approx(0.5).margin(1e-14));
  REQUIRE(w[0][1] == Catch::Approx(0.5).margin(1e-14));
}

TEST_CASE("choice weights: huge temperature reduces to pure imitation") {
  const auto n = two_parallel(4.0, 1.0, 7.0);
  const auto rs = net::enumerate_routes(n);
  const auto w = dyn::choice_weights({{3, 1}, 50}, n, rs, 1e9);
  REQUIRE(w[0][0] == Catch::Approx(0.75).margin(1e-6));
  REQUIRE(w[0][1] == Catch::Approx(0.25).margin(1e-6));
}

TEST_CASE("choice weights on fixed costs 83 and 53 at temperature 10") {
  // constant latencies pin the route costs regardless of the flow split
  const auto n = two_parallel(4.0, 83.0, 53.0, 0.0);
  const auto rs = net::enumerate_routes(n);
  const auto w = dyn::choice_weights({{3, 1}, 50}, n, rs, 10.0);
  const double want =
      3.0 * std::exp(-8.3) / (3.0 * std::exp(-8.3) + std::exp(-5.3));
  REQUIRE(w[0][0] == Catch::Approx(want).epsilon(1e-12));
  REQUIRE(w[0][0] == Catch::Approx(0.130).margin(5e-4));
  REQUIRE(w[0][0] + w[0][1] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("choice weights: empty routes keep the 1/n floor") {
  const auto n = two_parallel(2.0, 1.0, 1.0, 0.0);
  const auto rs = net::enumerate_routes(n);
  // equal costs, counts (0, 2), n = 4: weights proportional to (1/4, 2)
  const auto w = dyn::choice_weights({{0, 2}, 4}, n, rs, 1.0);
  REQUIRE(w[0][0] == Catch::Approx(0.25 / 2.25).margin(1e-14));
  REQUIRE(w[0][1] == Catch::Approx(2.0 / 2.25).margin(1e-14));
}

TEST_CASE("a zero resampling rate leaves the assignment untouched") {
  const auto wide = load("braess_case2.net");
  std::mt19937_64 rng(4);
  const dyn::DynamicsState s{{1, 3, 2}, 7};
  const auto next =
      dyn::step_with_gamma(s, wide.network, wide.routes, 1.0, 0.0, rng);
  REQUIRE(next.counts == s.counts);
  REQUIRE(next.n == 8);
}

TEST_CASE("gamma outside the unit interval is rejected") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  std::mt19937_64 rng(4);
  REQUIRE_THROWS_AS(dyn::step_with_gamma({{1, 1}, 1}, n, rs, 1.0, 1.5, rng),
                    Error);
  REQUIRE_THROWS_AS(dyn::step_with_gamma({{1, 1}, 1}, n, rs, 1.0, -0.5, rng),
                    Error);
}

TEST_CASE("full resampling is a binomial draw on two identical routes") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  std::mt19937_64 rng(2024);
  // from (1,1) the weights are (1/2, 1/2); with gamma = 1 the next count of
  // route 0 is Binomial(2, 1/2): probabilities (1/4, 1/2, 1/4)
  long long hits[3] = {0, 0, 0};
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    const auto next =
        dyn::step_with_gamma({{1, 1}, 10}, n, rs, 1.0, 1.0, rng);
    REQUIRE(next.counts[0] + next.counts[1] == 2);
    hits[next.counts[0]] += 1;
  }
  const double expect[3] = {reps / 4.0, reps / 2.0, reps / 4.0};
  double chi2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = hits[k] - expect[k];
    chi2 += d * d / expect[k];
  }
  // 2 degrees of freedom: p > 0.01 means chi2 below 9.21
  REQUIRE(chi2 < 9.21);
}

TEST_CASE("a single-route OD can never move its players") {
  net::Network n;
  n.nodes = {1, 2, 3};
  n.edges = {{1, 1, 2, {1.0, 1.0, 1.0}}, {2, 2, 3, {1.0, 1.0, 1.0}}};
  n.od_pairs = {{1, 3, 3.0}};
  const auto rs = net::enumerate_routes(n);
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::constant(1.0);
  cfg.seed = 8;
  cfg.steps = 200;
  const auto rec = dyn::run(n, rs, cfg, 1);
  for (const auto& pt : rec.points)
    REQUIRE(pt.counts == std::vector<long long>{3});
}

TEST_CASE("players are conserved per OD under every schedule") {
  const auto wide = load("braess_case2.net");
  for (const auto& sched :
       {dyn::GammaSchedule::harmonic(1.0), dyn::GammaSchedule::constant(0.7),
        dyn::GammaSchedule::sqrt_horizon(2.0, 2000)}) {
    dyn::DynamicsConfig cfg;
    cfg.schedule = sched;
    cfg.seed = 99;
    cfg.steps = 2000;
    const auto rec = dyn::run(wide.network, wide.routes, cfg, 1);
    for (const auto& pt : rec.points) {
      long long total = 0;
      for (long long c : pt.counts) {
        REQUIRE(c >= 0);
        total += c;
      }
      REQUIRE(total == 6);
    }
  }
}

TEST_CASE("expected drift vanishes at symmetric fixed points") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::constant(0.5);
  const auto drift = dyn::expected_drift({{1, 1}, 30}, n, rs, cfg);
  REQUIRE(drift[0] == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(drift[1] == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("expected drift vanishes at the balanced grid assignment") {
  const auto wide = load("braess_case2.net");
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::harmonic(1.0);
  const auto drift = dyn::expected_drift({{2, 2, 2}, 1000}, wide.network,
                                         wide.routes, cfg);
  for (double v : drift) REQUIRE(v == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("expected drift points downhill in cost away from equilibrium") {
  const auto wide = load("braess_case2.net");
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::constant(1.0);
  const dyn::DynamicsState s{{6, 0, 0}, 1000000};
  const auto drift = dyn::expected_drift(s, wide.network, wide.routes, cfg);
  const auto g = net::route_costs(wide.network, wide.routes,
                                  dyn::counts_as_flow(s));
  double inner = 0.0;
  for (std::size_t p = 0; p < drift.size(); ++p) inner += g[p] * drift[p];
  REQUIRE(inner < -1.0);
}

TEST_CASE("mean one-step increment matches the expected drift") {
  const auto n = two_parallel(6.0);
  const auto rs = net::enumerate_routes(n);
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::constant(0.5);
  const dyn::DynamicsState s{{5, 1}, 10};
  const auto drift = dyn::expected_drift(s, n, rs, cfg);

  std::mt19937_64 rng(555);
  double mean0 = 0.0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto next = dyn::step_with_gamma(s, n, rs, cfg.T, 0.5, rng);
    mean0 += static_cast<double>(next.counts[0] - s.counts[0]);
  }
  mean0 /= reps;
  // the per-step increment has variance around 3, so 0.05 is roughly 4 sigma
  REQUIRE(mean0 == Catch::Approx(drift[0]).margin(0.05));
}

TEST_CASE("weighted-mean inequality: frozen two-point evaluation") {
  const auto [f0, f1] = dyn::lemma1_check({1.0, 1.0}, {0.5, 0.25}, 1.0);
  REQUIRE(f0 == Catch::Approx(0.9242).margin(5e-5));
  REQUIRE(f1 == Catch::Approx(1.0397).margin(5e-5));
  const double want0 = (0.5 * std::log(2.0) + 0.25 * std::log(4.0)) / 0.75;
  const double want1 = (std::log(2.0) + std::log(4.0)) / 2.0;
  REQUIRE(f0 == Catch::Approx(want0).epsilon(1e-13));
  REQUIRE(f1 == Catch::Approx(want1).epsilon(1e-13));
  REQUIRE(f0 < f1);
}

TEST_CASE("weighted-mean inequality: equality cases and input checks") {
  const auto [e0, e1] = dyn::lemma1_check({2.0, 0.5, 1.0}, {0.3, 0.3, 0.3}, 2.5);
  REQUIRE(e0 == Catch::Approx(e1).margin(1e-14));

  const auto [s0, s1] = dyn::lemma1_check({4.0}, {0.77}, 3.0);
  REQUIRE(s0 == Catch::Approx(s1).margin(1e-14));

  REQUIRE(code_of([] { dyn::lemma1_check({1.0}, {1.0}, 1.0); }) ==
          ErrorCode::DomainError);
  REQUIRE(code_of([] { dyn::lemma1_check({1.0}, {0.0}, 1.0); }) ==
          ErrorCode::DomainError);
  REQUIRE(code_of([] { dyn::lemma1_check({-1.0}, {0.5}, 1.0); }) ==
          ErrorCode::DomainError);
  REQUIRE(code_of([] { dyn::lemma1_check({1.0, 1.0}, {0.5}, 1.0); }) ==
          ErrorCode::DimensionMismatch);
}

TEST_CASE("weighted-mean inequality: randomized sweep") {
  std::mt19937_64 rng(616);
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_real_distribution<double> alpha(0.1, 2.0);
  std::uniform_real_distribution<double> wdraw(0.05, 0.95);
  std::uniform_real_distribution<double> temp(0.5, 5.0);
  std::bernoulli_distribution tie(0.5);
  for (int trial = 0; trial < 10000; ++trial) {
    const int m = size(rng);
    std::vector<double> a(m), w(m);
    for (double& v : a) v = alpha(rng);
    const bool equal = m == 1 || tie(rng);
    if (equal) {
      const double shared = wdraw(rng);
      for (double& v : w) v = shared;
    } else {
      for (double& v : w) v = wdraw(rng);
      // force a definite spread so "strict" is numerically meaningful
      w[0] = 0.1;
      w[1] = 0.8;
    }
    const auto [f0, f1] = dyn::lemma1_check(a, w, temp(rng));
    REQUIRE(f0 <= f1 + 1e-12);
    if (equal) {
      REQUIRE(std::abs(f0 - f1) <= 1e-12);
    } else {
      REQUIRE(f1 - f0 > 1e-9);
    }
  }
}

TEST_CASE("zero demand freezes the trajectory at zero") {
  const auto n = two_parallel(0.0);
  const auto rs = net::enumerate_routes(n);
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::harmonic(1.0);
  cfg.seed = 3;
  cfg.steps = 100;
  const auto rec = dyn::run(n, rs, cfg, 10);
  for (const auto& pt : rec.points) {
    REQUIRE(pt.counts == std::vector<long long>{0, 0});
    REQUIRE(pt.psi == Catch::Approx(0.0));
    REQUIRE(pt.gap == Catch::Approx(0.0));
  }
}

TEST_CASE("trajectories are reproducible from the seed") {
  const auto wide = load("braess_case2.net");
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::harmonic(1.0);
  cfg.seed = 31337;
  cfg.steps = 5000;
  const auto a = dyn::run(wide.network, wide.routes, cfg, 100);
  const auto b = dyn::run(wide.network, wide.routes, cfg, 100);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    REQUIRE(a.points[i].n == b.points[i].n);
    REQUIRE(a.points[i].counts == b.points[i].counts);
    REQUIRE(a.points[i].psi == b.points[i].psi);
  }
}

TEST_CASE("record stride keeps the first and last states") {
  const auto wide = load("braess_case2.net");
  dyn::DynamicsConfig cfg;
  cfg.schedule = dyn::GammaSchedule::harmonic(1.0);
  cfg.seed = 1;
  cfg.steps = 1003;
  const auto rec = dyn::run(wide.network, wide.routes, cfg, 500);
  REQUIRE(rec.points.front().n == 1);
  REQUIRE(rec.points.back().n == 1004);
}

TEST_CASE("imitation run settles near the balanced grid assignment") {
  const auto wide = load("braess_case2.net");
  const auto eq = beck::solve_equilibrium(wide.network, wide.routes, 1e-10);
  dyn::DynamicsConfig cfg;
  cfg.T = 1.0;
  cfg.schedule = dyn::GammaSchedule::harmonic(1.0);
  cfg.seed = 7;
  cfg.steps = 100000;
  const auto rec = dyn::run(wide.network, wide.routes, cfg, 100000);
  const double final_psi = rec.points.back().psi;
  REQUIRE(final_psi >= eq.psi - 1e-9);
  REQUIRE(final_psi <= eq.psi * 1.02);
}

TEST_CASE("twin-edge instance: limits depend on the start, value does not") {
  const auto inst = beck::build_nonuniqueness_instance();
  dyn::DynamicsConfig cfg;
  cfg.T = 1.0;
  cfg.schedule = dyn::GammaSchedule::harmonic(1.0);
  cfg.seed = 12;
  cfg.steps = 20000;
  const auto a =
      dyn::run(inst.network, inst.routes, cfg, cfg.steps, {1, 0, 0, 0});
  const auto b =
      dyn::run(inst.network, inst.routes, cfg, cfg.steps, {0, 0, 0, 1});
  const auto& xa = a.points.back().counts;
  const auto& xb = b.points.back().counts;
  REQUIRE(xa != xb);
  // any single-route assignment loads three unit edges: Psi = 3/2 exactly
  REQUIRE(a.points.back().psi == Catch::Approx(b.points.back().psi).margin(1e-12));
}

TEST_CASE("averaging: tail table sanity on the symmetric pair") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  const auto rep =
      dyn::averaging_estimate(n, rs, 1.0, 1.0, 400, 100, {0.0, 1.0, 2.0}, 5);
  REQUIRE(rep.gamma == Catch::Approx(1.0 / 20.0));
  REQUIRE(rep.tail_freq.size() == 3);
  REQUIRE(rep.tail_freq[0] == Catch::Approx(1.0));
  for (std::size_t i = 1; i < rep.tail_freq.size(); ++i) {
    REQUIRE(rep.tail_freq[i] <= 1.0);
    REQUIRE(rep.tail_freq[i] <= rep.tail_freq[i - 1] + 1e-12);
  }
  REQUIRE(rep.monotone);
  REQUIRE(rep.deviations.size() == 100);
  for (double d : rep.deviations) REQUIRE(d >= -1e-9);
}

TEST_CASE("averaging: two-route network tail at omega 10 stays under 0.2") {
  const auto two = load("braess_case1.net");
  const auto rep = dyn::averaging_estimate(two.network, two.routes, 1.0, 1.0,
                                           10000, 200,
                                           {0.0, 1.0, 2.0, 5.0, 10.0}, 77);
  REQUIRE(rep.monotone);
  REQUIRE(rep.tail_freq.back() < 0.2);
}

TEST_CASE("averaging: grid tail is thin at omega 30") {
  const auto wide = load("braess_case2.net");
  const auto rep = dyn::averaging_estimate(
      wide.network, wide.routes, 1.0, 1.0, 10000, 200,
      {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0}, 77);
  REQUIRE(rep.monotone);
  REQUIRE(rep.exponential_decay);
  REQUIRE(rep.tail_freq.back() < 0.05);
}

TEST_CASE("averaging preconditions") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  REQUIRE(code_of([&] {
            dyn::averaging_estimate(n, rs, 1.0, 1.0, 50, 100, {1.0}, 1);
          }) == ErrorCode::DomainError);
  REQUIRE(code_of([&] {
            dyn::averaging_estimate(n, rs, 1.0, 1.0, 400, 50, {1.0}, 1);
          }) == ErrorCode::DomainError);
}

TEST_CASE("averaging results do not depend on the worker count") {
  const auto n = two_parallel(2.0);
  const auto rs = net::enumerate_routes(n);
  setenv("WARDROP_LAB_THREADS", "1", 1);
  const auto one =
      dyn::averaging_estimate(n, rs, 1.0, 1.0, 300, 100, {0.0, 1.0}, 42);
  setenv("WARDROP_LAB_THREADS", "4", 1);
  const auto four =
      dyn::averaging_estimate(n, rs, 1.0, 1.0, 300, 100, {0.0, 1.0}, 42);
  unsetenv("WARDROP_LAB_THREADS");
  REQUIRE(one.deviations == four.deviations);
  REQUIRE(one.tail_freq == four.tail_freq);
}
