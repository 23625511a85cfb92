#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "dynmmsbm/init.hpp"
#include "dynmmsbm/simulate.hpp"
#include "support.hpp"

using namespace dynmmsbm;
using namespace testing_support;

namespace {

double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> n;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    n[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double idx = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : n) idx += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double mx = 0.5 * (sa + sb);
  return mx == expected ? 1.0 : (idx - expected) / (mx - expected);
}

// Every ordered pair modeled in every period; y from `edge(t, a, b)`.
template <typename F>
DynamicNetwork full_net(int N, int T, F edge) {
  NetworkData d;
  for (int i = 0; i < N; ++i) d.node_ids.push_back(std::to_string(i));
  for (int t = 0; t < T; ++t) d.period_labels.push_back(std::to_string(t));
  d.presence.assign(T, std::vector<int>(N));
  for (auto& p : d.presence) std::iota(p.begin(), p.end(), 0);
  d.X = Eigen::MatrixXd::Ones(N * T, 1);
  for (int t = 0; t < T; ++t) {
    for (int a = 0; a < N; ++a) {
      for (int b = 0; b < N; ++b) {
        if (a != b) d.dyads.push_back({t, a, b, edge(t, a, b) ? 1.0 : 0.0});
      }
    }
  }
  d.D.resize(static_cast<Eigen::Index>(d.dyads.size()), 0);
  return DynamicNetwork(d);
}

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int K) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) m(labels[i], static_cast<Eigen::Index>(i)) = 1.0;
  return m;
}

std::vector<int> inverse(const std::vector<int>& p) {
  std::vector<int> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) q[p[i]] = static_cast<int>(i);
  return q;
}

double spread(const std::vector<Eigen::MatrixXd>& Bs, const std::vector<std::vector<int>>& perms) {
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(Bs[0].rows(), Bs[0].cols());
  std::vector<Eigen::MatrixXd> al;
  for (std::size_t t = 0; t < Bs.size(); ++t) {
    al.push_back(permute_blockmodel(Bs[t], perms[t]));
    mean += al.back();
  }
  mean /= static_cast<double>(Bs.size());
  double s = 0;
  for (const auto& b : al) s += (b - mean).norm();
  return s;
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("same seed gives the same network") {
    const auto a = generate(DgpPreset::medium(), 5), b = generate(DgpPreset::medium(), 5);
    CHECK(a.net.X() == b.net.X());
    CHECK(a.net.D() == b.net.D());
    REQUIRE(a.net.num_dyads() == b.net.num_dyads());
    for (int i = 0; i < a.net.num_dyads(); ++i) CHECK(a.net.dyads()[i].y == b.net.dyads()[i].y);
    CHECK(a.truth.pi == b.truth.pi);
    CHECK(generate(DgpPreset::medium(), 6).net.X() != a.net.X());
  }

  TEST_CASE("memberships on the simplex and states follow the schedule") {
    for (const char* name : {"easy", "medium", "hard"}) {
      const auto p = DgpPreset::named(name);
      const auto sim = generate(p, 2);
      CHECK(columns_on_simplex(sim.truth.pi, 1e-12));
      CHECK(sim.truth.latent.s == p.schedule);
      CHECK(sim.net.num_periods() == 9);
      CHECK(sim.net.num_nodes() == 100);
      CHECK(sim.net.num_dyads() == 9 * 100 * 99);
    }
    CHECK_THROWS(DgpPreset::named("other"));
  }

  TEST_CASE("coin-flip blockmodel gives density one half") {
    DgpPreset p = DgpPreset::medium();
    p.B_probs.setConstant(0.5);
    p.gamma.setZero();
    const auto sim = generate(p, 3);
    double y = 0;
    for (const auto& d : sim.net.dyads()) y += d.y;
    CHECK(std::abs(y / sim.net.num_dyads() - 0.5) <= 0.02);
  }

  TEST_CASE("easy preset within-group rate of the first group") {
    double edges = 0, pairs = 0;
    for (int seed = 1; seed <= 20; ++seed) {
      const auto sim = generate(DgpPreset::easy(), seed);
      for (const auto& d : sim.net.dyads()) {
        if (sim.truth.pi(0, d.sender) > 0.95 && sim.truth.pi(0, d.receiver) > 0.95) {
          edges += d.y;
          pairs += 1;
        }
      }
    }
    REQUIRE(pairs > 1000);
    CHECK(std::abs(edges / pairs - 0.85) <= 0.03);
  }

  TEST_CASE("easy preset memberships are nearly pure") {
    const auto sim = generate(DgpPreset::easy(), 4);
    const Eigen::VectorXd top = sim.truth.pi.colwise().maxCoeff().transpose();
    CHECK((top.array() > 0.95).cast<double>().mean() >= 0.90);
  }

  TEST_CASE("recovery metrics") {
    const auto sim = generate(DgpPreset::medium(), 7);
    const Eigen::MatrixXd& pi = sim.truth.pi;
    auto same = recovery_metrics(pi, pi, sim.truth.B_probs, sim.truth.B_probs);
    CHECK(same.correlation == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(same.mean_l2 == 0.0);
    CHECK(same.blockmodel_max_abs == 0.0);

    const Eigen::MatrixXd swapped = pi.colwise().reverse();
    const Eigen::MatrixXd B_sw = sim.truth.B_probs.reverse();
    auto sw = recovery_metrics(pi, swapped, sim.truth.B_probs, B_sw);
    CHECK(sw.correlation == same.correlation);
    CHECK(sw.mean_l2 == same.mean_l2);
    CHECK(sw.blockmodel_max_abs == 0.0);
    CHECK(sw.permutation == std::vector<int>{1, 0});

    Eigen::MatrixXd pure = Eigen::MatrixXd::Zero(2, 40);
    for (int i = 0; i < 40; ++i) pure(i % 2, i) = 1.0;
    const auto uni = recovery_metrics(pure, Eigen::MatrixXd::Constant(2, 40, 0.5));
    CHECK(uni.mean_l2 == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  }
}

TEST_SUITE("init") {
  TEST_CASE("two disconnected cliques split perfectly") {
    const auto net = full_net(10, 2, [](int, int a, int b) { return (a < 5) == (b < 5); });
    const auto cl = spectral_init(net, 2, {});
    std::vector<int> truth(10);
    for (int i = 0; i < 10; ++i) truth[i] = i < 5;
    for (int t = 0; t < 2; ++t) CHECK(adjusted_rand(cl.labels[t], truth) == 1.0);
  }

  TEST_CASE("one group puts every node in one cluster") {
    std::mt19937_64 rng(1);
    RandomNetOptions o;
    o.N = 8;
    const auto net = random_network(rng, o);
    const auto cl = spectral_init(net, 1, {});
    for (const auto& l : cl.labels) CHECK(std::all_of(l.begin(), l.end(), [](int v) { return v == 0; }));
  }

  TEST_CASE("planted three-block partition") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<int> block(60);
    for (int i = 0; i < 60; ++i) block[i] = i % 3;
    std::vector<double> draws(60 * 60);
    for (auto& v : draws) v = u(rng);
    const auto net = full_net(60, 1, [&](int, int a, int b) {
      return draws[a * 60 + b] < (block[a] == block[b] ? 0.6 : 0.05);
    });
    const auto cl = spectral_init(net, 3, {});
    CHECK(adjusted_rand(cl.labels[0], block) >= 0.9);
  }

  TEST_CASE("blockmodel of a single group is the density") {
    std::mt19937_64 rng(4);
    RandomNetOptions o;
    o.N = 7;
    o.T = 1;
    const auto net = random_network(rng, o);
    const Eigen::MatrixXd B = estimate_period_blockmodel(net, 0, Eigen::MatrixXd::Ones(1, 7));
    double y = 0;
    for (const auto& d : net.dyads()) y += d.y;
    CHECK(B(0, 0) == doctest::Approx(y / net.num_dyads()).epsilon(1e-14));
  }

  TEST_CASE("blockmodel by hand tally") {
    const auto net = full_net(4, 1, [](int, int a, int b) {
      return (a == 0 && b == 1) || (a == 0 && b == 2) || (a == 2 && b == 3) || (a == 3 && b == 2);
    });
    const Eigen::MatrixXd B = estimate_period_blockmodel(net, 0, one_hot({0, 0, 1, 1}, 2));
    CHECK(B(0, 0) == 0.5);
    CHECK(B(0, 1) == 0.25);
    CHECK(B(1, 0) == 0.0);
    CHECK(B(1, 1) == 1.0);
    const Eigen::MatrixXd E = estimate_period_blockmodel(net, 0, one_hot({0, 0, 0, 0}, 2), 0.37);
    CHECK(E(1, 1) == 0.37);
  }

  TEST_CASE("blockmodel estimate is label equivariant") {
    std::mt19937_64 rng(5);
    RandomNetOptions o;
    o.N = 9;
    o.T = 1;
    const auto net = random_network(rng, o);
    std::uniform_int_distribution<int> g(0, 2);
    std::vector<int> labels(9);
    for (auto& l : labels) l = g(rng);
    const std::vector<int> perm{2, 0, 1};
    std::vector<int> relabeled(9);
    for (int i = 0; i < 9; ++i) relabeled[i] = perm[labels[i]];
    const auto B = estimate_period_blockmodel(net, 0, one_hot(labels, 3));
    const auto Bp = estimate_period_blockmodel(net, 0, one_hot(relabeled, 3));
    CHECK((permute_blockmodel(B, perm) - Bp).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("identical blockmodels keep identity labels") {
    Eigen::MatrixXd B(3, 3);
    B << 0.8, 0.1, 0.2, 0.05, 0.6, 0.3, 0.15, 0.25, 0.9;
    const auto perms = align_labels({B, B, B});
    for (const auto& p : perms) CHECK(p == std::vector<int>{0, 1, 2});
  }

  TEST_CASE("swapped labels are recovered") {
    Eigen::MatrixXd B(2, 2);
    B << 0.8, 0.1, 0.3, 0.6;
    const auto perms = align_labels({B, permute_blockmodel(B, {1, 0})});
    CHECK(perms[1] == std::vector<int>{1, 0});
  }

  TEST_CASE("noisy permuted copies are aligned") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::normal_distribution<double> noise(0.0, 0.02);
    int correct = 0;
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::MatrixXd base(3, 3);
      for (int i = 0; i < 9; ++i) base(i / 3, i % 3) = u(rng);
      std::vector<int> perm{0, 1, 2};
      std::shuffle(perm.begin(), perm.end(), rng);
      auto noisy = [&](Eigen::MatrixXd m) {
        for (int i = 0; i < 9; ++i) m(i / 3, i % 3) += noise(rng);
        return m;
      };
      const auto perms = align_labels({noisy(base), noisy(permute_blockmodel(base, perm))});
      correct += perms[1] == inverse(perm);
    }
    CHECK(correct >= 95);
  }

  TEST_CASE("aligned spread is no larger than any alternative") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int K : {2, 3}) {
      for (int trial = 0; trial < 20; ++trial) {
        const int T = 4;
        Eigen::MatrixXd base(K, K);
        for (int i = 0; i < K * K; ++i) base(i / K, i % K) = u(rng);
        std::vector<Eigen::MatrixXd> Bs;
        for (int t = 0; t < T; ++t) {
          std::vector<int> perm(K);
          std::iota(perm.begin(), perm.end(), 0);
          std::shuffle(perm.begin(), perm.end(), rng);
          Eigen::MatrixXd m = permute_blockmodel(base, perm);
          for (int i = 0; i < K * K; ++i) m(i / K, i % K) += noise(rng);
          Bs.push_back(m);
        }
        const auto perms = align_labels(Bs);
        const double got = spread(Bs, perms);
        // Every sequence with the first period fixed (a common relabeling
        // leaves the spread unchanged).
        std::vector<std::vector<int>> all;
        std::vector<int> p(K);
        std::iota(p.begin(), p.end(), 0);
        do all.push_back(p);
        while (std::next_permutation(p.begin(), p.end()));
        const int n = static_cast<int>(all.size());
        int combos = 1;
        for (int t = 1; t < T; ++t) combos *= n;
        for (int c = 0; c < combos; ++c) {
          std::vector<std::vector<int>> alt{all[0]};
          for (int t = 1, r = c; t < T; ++t, r /= n) alt.push_back(all[r % n]);
          REQUIRE(got <= spread(Bs, alt) + 1e-12);
        }
      }
    }
  }

  TEST_CASE("alignment only relabels") {
    Eigen::MatrixXd soft = Eigen::MatrixXd::Random(3, 6).cwiseAbs();
    const std::vector<int> perm{1, 2, 0};
    const Eigen::MatrixXd out = permute_rows(soft, perm);
    for (int g = 0; g < 3; ++g) CHECK(out.row(perm[g]) == soft.row(g));
  }

  TEST_CASE("large group counts are rejected") {
    std::vector<Eigen::MatrixXd> Bs(2, Eigen::MatrixXd::Identity(13, 13));
    CHECK_THROWS(align_labels(Bs));
    Bs.assign(2, Eigen::MatrixXd::Identity(10, 10));
    CHECK(align_labels(Bs)[1].size() == 10);
  }

  TEST_CASE("hungarian agrees with brute force") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::MatrixXd cost(5, 5);
      for (int i = 0; i < 25; ++i) cost(i / 5, i % 5) = u(rng);
      const auto a = hungarian(cost);
      double got = 0;
      for (int i = 0; i < 5; ++i) got += cost(i, a[i]);
      std::vector<int> p{0, 1, 2, 3, 4};
      double best = 1e9;
      do {
        double c = 0;
        for (int i = 0; i < 5; ++i) c += cost(i, p[i]);
        best = std::min(best, c);
      } while (std::next_permutation(p.begin(), p.end()));
      CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
  }

  TEST_CASE("starting values use the assigned weight") {
    const auto sim = generate(DgpPreset::medium(), 9);
    ModelSpec spec;
    spec.K = 2;
    spec.M = 2;
    std::vector<std::string> warnings;
    const auto init = initialize(sim.net, spec, {}, &warnings);
    CHECK(columns_on_simplex(init.vparams.phi));
    CHECK(columns_on_simplex(init.vparams.psi));
    CHECK(columns_on_simplex(init.vparams.kappa));
    CHECK((init.vparams.phi.colwise().maxCoeff().array() == 0.9).all());
    CHECK(init.hyper.B.allFinite());
  }

  TEST_CASE("empty periods fall back with a warning") {
    const auto net = full_net(6, 2, [](int t, int a, int b) { return t == 1 && (a + b) % 2 == 0; });
    const auto cl = spectral_init(net, 2, {});
    CHECK_FALSE(cl.warnings.empty());
    for (const auto& s : cl.soft) CHECK(columns_on_simplex(s));
  }
}
