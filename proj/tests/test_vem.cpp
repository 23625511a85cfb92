#include <doctest.h>

#include <cmath>
#include <limits>

#include "dynmmsbm/collapsed.hpp"
#include "dynmmsbm/vem.hpp"
#include "support.hpp"

using namespace dynmmsbm;
using namespace testing_support;

namespace {

struct Instance {
  DynamicNetwork net;
  ModelSpec spec;
  Hyperparams hyper;
  VariationalParams vp;
  GlobalStats stats;
};

Instance make_instance(std::uint64_t seed, int N, int T, int K, int M, bool directed, int x_cols = 2,
                       int d_cols = 1) {
  std::mt19937_64 rng(seed);
  RandomNetOptions o;
  o.N = N;
  o.T = T;
  o.directed = directed;
  o.x_cols = x_cols;
  o.d_cols = d_cols;
  Instance in{random_network(rng, o), {}, {}, {}, {}};
  in.spec.K = K;
  in.spec.M = M;
  in.spec.directed = directed;
  in.hyper = random_hyper(rng, in.spec, x_cols, d_cols);
  in.vp = random_vparams(rng, in.net, K, M);
  in.stats = expected_stats(in.net, in.vp);
  return in;
}

VariationalParams uniform_vparams(const DynamicNetwork& net, int K, int M) {
  return {Eigen::MatrixXd::Constant(K, net.num_dyads(), 1.0 / K),
          Eigen::MatrixXd::Constant(K, net.num_dyads(), 1.0 / K),
          Eigen::MatrixXd::Constant(M, net.num_periods(), 1.0 / M)};
}

double fd_rel(double analytic, double fd) { return rel_err(analytic, fd, 1e-3); }

}  // namespace

TEST_SUITE("vem") {
  TEST_CASE("single group gives a trivial phi") {
    auto in = make_instance(1, 4, 2, 1, 2, true);
    const AlphaTable alpha(in.net, in.hyper);
    const auto lin = dyad_linear_predictor(in.net, in.hyper.gamma);
    const auto phi = update_phi(in.net, 0, in.vp.phi.col(0), in.vp.psi.col(0), in.vp.kappa, in.stats.C,
                                alpha, in.hyper.B, lin[0]);
    REQUIRE(phi.size() == 1);
    CHECK(phi[0] == 1.0);
  }

  TEST_CASE("symmetric setup gives uniform phi and psi") {
    auto in = make_instance(2, 4, 2, 3, 1, true, 1, 0);
    in.hyper.B.setConstant(-0.4);
    in.hyper.B.diagonal().setConstant(0.8);
    for (auto& b : in.hyper.beta) b.setZero();
    in.vp = uniform_vparams(in.net, 3, 1);
    in.stats = expected_stats(in.net, in.vp);
    const AlphaTable alpha(in.net, in.hyper);
    for (int d = 0; d < in.net.num_dyads(); ++d) {
      const auto phi = update_phi(in.net, d, in.vp.phi.col(d), in.vp.psi.col(d), in.vp.kappa,
                                  in.stats.C, alpha, in.hyper.B, 0.0);
      const auto psi = update_psi(in.net, d, in.vp.psi.col(d), in.vp.phi.col(d), in.vp.kappa,
                                  in.stats.C, alpha, in.hyper.B, 0.0);
      CHECK((phi.array() - 1.0 / 3).abs().maxCoeff() < 1e-14);
      CHECK((psi.array() - 1.0 / 3).abs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("phi update matches a direct evaluation") {
    auto in = make_instance(3, 4, 3, 3, 2, true);
    const AlphaTable alpha(in.net, in.hyper);
    const auto lin = dyad_linear_predictor(in.net, in.hyper.gamma);
    const int d = 5;
    const auto& dy = in.net.dyads()[d];
    Eigen::VectorXd expect(3);
    for (int k = 0; k < 3; ++k) {
      double v = 0.0;
      for (int m = 0; m < 2; ++m) {
        const double c = in.stats.C(k, dy.sender) - in.vp.phi(k, d);
        v += in.vp.kappa(m, dy.period) * std::log(alpha(m, k, dy.sender) + c);
      }
      for (int h = 0; h < 3; ++h) {
        const double th = 1.0 / (1.0 + std::exp(-(in.hyper.B(k, h) + lin[d])));
        v += in.vp.psi(h, d) * (dy.y == 1.0 ? std::log(th) : std::log(1.0 - th));
      }
      expect[k] = std::exp(v);
    }
    expect /= expect.sum();
    const auto phi = update_phi(in.net, d, in.vp.phi.col(d), in.vp.psi.col(d), in.vp.kappa, in.stats.C,
                                alpha, in.hyper.B, lin[d]);
    CHECK((phi - expect).cwiseAbs().maxCoeff() < 1e-13);
  }

  TEST_CASE("phi/psi sweeps from uniform raise the bound on a three-node network") {
    auto in = make_instance(4, 3, 1, 2, 1, true);
    in.vp = uniform_vparams(in.net, 2, 1);
    // Break the exact symmetry so the sweeps have something to do.
    in.vp.phi(0, 0) = 0.6;
    in.vp.phi(1, 0) = 0.4;
    in.stats = expected_stats(in.net, in.vp);
    const double start = elbo(in.net, in.vp, in.stats, in.hyper, in.spec);
    for (int i = 0; i < 50; ++i) estep(in.net, in.spec, in.hyper, in.vp, in.stats, true);
    CHECK(elbo(in.net, in.vp, in.stats, in.hyper, in.spec) > start);
  }

  TEST_CASE("single state gives a trivial kappa") {
    Eigen::MatrixXd kappa = Eigen::MatrixXd::Ones(1, 4);
    Eigen::MatrixXd mem = Eigen::MatrixXd::Random(1, 4);
    CHECK(update_kappa(2, kappa, mem, 1.0)[0] == 1.0);
  }

  TEST_CASE("equal membership terms across states leave only the transition terms") {
    Eigen::MatrixXd kappa(2, 4);
    kappa << 0.7, 0.2, 0.5, 0.9,  //
        0.3, 0.8, 0.5, 0.1;
    Eigen::MatrixXd mem(2, 4);
    mem << -3.0, -1.0, 2.0, 4.0,  //
        -3.0, -1.0, 2.0, 4.0;
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 4);
    for (int t = 0; t < 4; ++t) {
      CHECK((update_kappa(t, kappa, mem, 0.8) - update_kappa(t, kappa, zero, 0.8)).norm() < 1e-14);
    }
  }

  TEST_CASE("kappa update matches a literal transcription on a three-period toy") {
    // T = 3, M = 2, eta = 0.5; hand-set kappa and membership terms.
    const double eta = 0.5;
    Eigen::MatrixXd kappa(2, 3);
    kappa << 0.6, 0.3, 0.8,  //
        0.4, 0.7, 0.2;
    Eigen::MatrixXd mem(2, 3);
    mem << -10.0, -12.0, -11.0,  //
        -10.5, -11.0, -11.5;
    auto EU = [&](int skip_a, int skip_b) {
      // sum over transitions (0->1), (1->2) except those touching the focal period
      Eigen::Matrix2d U = Eigen::Matrix2d::Zero();
      for (int t = 0; t < 2; ++t) {
        if (t == skip_a || t == skip_b) continue;
        for (int m = 0; m < 2; ++m) {
          for (int n = 0; n < 2; ++n) U(m, n) += kappa(m, t) * kappa(n, t + 1);
        }
      }
      return U;
    };
    // Interior period t = 2 (index 1): both transitions excluded, U' = 0.
    {
      const Eigen::Matrix2d U = EU(0, 1);
      double w[2];
      for (int m = 0; m < 2; ++m) {
        const int o = 1 - m;
        const double kp = kappa(m, 0), kn = kappa(m, 2);
        w[m] = -std::log(2 * eta + U(m, 0) + U(m, 1)) + kp * kn * std::log(eta + U(m, m) + 1) +
               (kp - kp * kn + kn) * std::log(eta + U(m, m)) + kappa(o, 2) * std::log(eta + U(m, o)) +
               kappa(o, 0) * std::log(eta + U(o, m)) + mem(m, 1);
      }
      const double p0 = 1.0 / (1.0 + std::exp(w[1] - w[0]));
      const auto k = update_kappa(1, kappa, mem, eta);
      CHECK(k[0] == doctest::Approx(p0).epsilon(1e-13));
      CHECK(k[1] == doctest::Approx(1.0 - p0).epsilon(1e-13));
    }
    // Last period t = T: no outgoing transition, predecessor weights kappa_{T-1,n}.
    {
      const Eigen::Matrix2d U = EU(1, -1);
      double w[2];
      for (int m = 0; m < 2; ++m) {
        w[m] = kappa(0, 1) * std::log(eta + U(0, m)) + kappa(1, 1) * std::log(eta + U(1, m)) + mem(m, 2);
      }
      const double p0 = 1.0 / (1.0 + std::exp(w[1] - w[0]));
      CHECK(update_kappa(2, kappa, mem, eta)[0] == doctest::Approx(p0).epsilon(1e-13));
    }
    // First period: successor terms only.
    {
      const Eigen::Matrix2d U = EU(0, -1);
      double w[2];
      for (int m = 0; m < 2; ++m) {
        w[m] = -std::log(2 * eta + U(m, 0) + U(m, 1)) + kappa(0, 1) * std::log(eta + U(m, 0)) +
               kappa(1, 1) * std::log(eta + U(m, 1)) + mem(m, 0);
      }
      const double p0 = 1.0 / (1.0 + std::exp(w[1] - w[0]));
      CHECK(update_kappa(0, kappa, mem, eta)[0] == doctest::Approx(p0).epsilon(1e-13));
    }
  }

  TEST_CASE("bound at a point mass equals the collapsed posterior") {
    auto in = make_instance(5, 4, 3, 2, 2, true);
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<int> pick(0, 1);
    LatentState l;
    for (int t = 0; t < 3; ++t) l.s.push_back(pick(rng));
    for (int d = 0; d < in.net.num_dyads(); ++d) {
      l.z.push_back(pick(rng));
      l.w.push_back(pick(rng));
    }
    VariationalParams vp{Eigen::MatrixXd::Zero(2, in.net.num_dyads()), Eigen::MatrixXd::Zero(2, in.net.num_dyads()),
                         Eigen::MatrixXd::Zero(2, 3)};
    for (int d = 0; d < in.net.num_dyads(); ++d) {
      vp.phi(l.z[d], d) = 1.0;
      vp.psi(l.w[d], d) = 1.0;
    }
    for (int t = 0; t < 3; ++t) vp.kappa(l.s[t], t) = 1.0;
    const auto st = expected_stats(in.net, vp);
    CHECK(elbo(in.net, vp, st, in.hyper, in.spec) ==
          doctest::Approx(log_collapsed_posterior(in.net, l, in.hyper, in.spec)).epsilon(1e-12));
  }

  TEST_CASE("bound under uniform Q does not exceed the log marginal") {
    auto in = make_instance(6, 3, 2, 2, 2, false);
    const auto vp = uniform_vparams(in.net, 2, 2);
    const auto st = expected_stats(in.net, vp);
    const double logZ = std::log(polya_marginal(in.net, in.hyper, in.spec));
    CHECK(elbo(in.net, vp, st, in.hyper, in.spec) <= logZ);
  }

  TEST_CASE("bound never decreases across E-step sweeps") {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
      auto in = make_instance(seed, 6, 4, 3, 2, seed % 2 == 0);
      double last = elbo(in.net, in.vp, in.stats, in.hyper, in.spec);
      for (int i = 0; i < 20; ++i) {
        estep(in.net, in.spec, in.hyper, in.vp, in.stats, true);
        const double v = elbo(in.net, in.vp, in.stats, in.hyper, in.spec);
        CHECK(v >= last - 1e-8);
        last = v;
        CHECK(columns_on_simplex(in.vp.phi));
        CHECK(columns_on_simplex(in.vp.psi));
        CHECK(columns_on_simplex(in.vp.kappa));
      }
    }
  }

  TEST_CASE("gradients vanish at a stationary configuration") {
    auto in = make_instance(10, 5, 2, 2, 1, true, 1, 0);
    in.vp = uniform_vparams(in.net, 2, 1);
    double ybar = 0.0;
    for (const auto& d : in.net.dyads()) ybar += d.y;
    ybar /= in.net.num_dyads();
    in.hyper.B.setConstant(std::log(ybar / (1 - ybar)));
    in.spec.prior_B.mean = in.hyper.B(0, 0);
    CHECK(grad_B(in.net, in.vp, in.hyper, in.spec).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("analytic gradients match central differences of the bound") {
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
      const bool directed = seed % 2 == 0;
      auto in = make_instance(seed, 5, 2, 2, 2, directed, 2, 2);
      const double h = 1e-5;
      auto f = [&](const Hyperparams& hp) { return penalized_elbo(in.net, in.vp, in.stats, hp, in.spec); };
      const auto gB = grad_B(in.net, in.vp, in.hyper, in.spec);
      for (int g = 0; g < 2; ++g) {
        for (int c = directed ? 0 : g; c < 2; ++c) {
          Hyperparams p = in.hyper, m = in.hyper;
          p.B(g, c) += h;
          m.B(g, c) -= h;
          if (!directed) {
            p.B(c, g) = p.B(g, c);
            m.B(c, g) = m.B(g, c);
          }
          CHECK(fd_rel(gB(g, c), (f(p) - f(m)) / (2 * h)) < 1e-6);
        }
      }
      const auto gg = grad_gamma(in.net, in.vp, in.hyper, in.spec);
      for (int j = 0; j < 2; ++j) {
        Hyperparams p = in.hyper, m = in.hyper;
        p.gamma[j] += h;
        m.gamma[j] -= h;
        CHECK(fd_rel(gg[j], (f(p) - f(m)) / (2 * h)) < 1e-6);
      }
      const auto gb = grad_beta(in.net, in.vp, in.stats, in.hyper, in.spec);
      for (int s = 0; s < 2; ++s) {
        CHECK(gb[s].row(0).isZero());
        for (int j = 0; j < 2; ++j) {
          Hyperparams p = in.hyper, m = in.hyper;
          p.beta[s](1, j) += h;
          m.beta[s](1, j) -= h;
          CHECK(fd_rel(gb[s](1, j), (f(p) - f(m)) / (2 * h)) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("prior contribution to the B gradient separates exactly") {
    auto in = make_instance(11, 5, 2, 2, 1, true);
    in.spec.prior_B = {0.3, 2.0};
    const auto finite = grad_B(in.net, in.vp, in.hyper, in.spec);
    ModelSpec flat = in.spec;
    flat.prior_B.sd = std::numeric_limits<double>::infinity();
    const auto none = grad_B(in.net, in.vp, in.hyper, flat);
    const Eigen::MatrixXd expect = (in.hyper.B.array() - 0.3) / 4.0;
    CHECK(((none - finite) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("M-step at a stationary point returns the input") {
    auto in = make_instance(12, 5, 2, 2, 2, true);
    VemConfig cfg;
    cfg.inner_mstep_iters = 200;
    const auto once = m_step(in.net, in.vp, in.stats, in.hyper, in.spec, cfg).hyper;
    const auto twice = m_step(in.net, in.vp, in.stats, once, in.spec, cfg).hyper;
    CHECK(once.max_abs_diff(twice) < 1e-5);
  }

  TEST_CASE("M-step never lowers the penalized bound and keeps constraints") {
    for (std::uint64_t seed = 20; seed < 24; ++seed) {
      auto in = make_instance(seed, 6, 3, 3, 2, seed % 2 == 1);
      const double before = penalized_elbo(in.net, in.vp, in.stats, in.hyper, in.spec);
      const auto h = m_step(in.net, in.vp, in.stats, in.hyper, in.spec, VemConfig{}).hyper;
      CHECK(penalized_elbo(in.net, in.vp, in.stats, h, in.spec) >= before - 1e-10);
      for (const auto& b : h.beta) CHECK(b.row(0).isZero());
      if (!in.spec.directed) CHECK(h.B == h.B.transpose());
    }
  }

  TEST_CASE("single free coefficient matches a golden-section search") {
    auto in = make_instance(13, 6, 2, 1, 1, true, 1, 1);
    FreeParams only_gamma{false, true, false};
    VemConfig cfg;
    cfg.inner_mstep_iters = 200;
    const double got = m_step(in.net, in.vp, in.stats, in.hyper, in.spec, cfg, only_gamma).hyper.gamma[0];
    auto f = [&](double g) {
      Hyperparams h = in.hyper;
      h.gamma[0] = g;
      return penalized_elbo(in.net, in.vp, in.stats, h, in.spec);
    };
    double a = -10, b = 10;
    const double r = (std::sqrt(5.0) - 1) / 2;
    double c = b - r * (b - a), d = a + r * (b - a);
    while (b - a > 1e-10) {
      if (f(c) > f(d)) {
        b = d;
      } else {
        a = c;
      }
      c = b - r * (b - a);
      d = a + r * (b - a);
    }
    CHECK(std::abs(got - 0.5 * (a + b)) < 1e-6);
  }

  TEST_CASE("group relabeling leaves the bound unchanged") {
    auto in = make_instance(14, 5, 3, 3, 2, true);
    const double base = elbo(in.net, in.vp, in.stats, in.hyper, in.spec);
    const std::vector<int> perm = {0, 2, 1};
    Hyperparams hp = in.hyper;
    VariationalParams vp = in.vp;
    for (int g = 0; g < 3; ++g) {
      for (int c = 0; c < 3; ++c) hp.B(perm[g], perm[c]) = in.hyper.B(g, c);
      for (int m = 0; m < 2; ++m) hp.beta[m].row(perm[g]) = in.hyper.beta[m].row(g);
      vp.phi.row(perm[g]) = in.vp.phi.row(g);
      vp.psi.row(perm[g]) = in.vp.psi.row(g);
    }
    const auto st = expected_stats(in.net, vp);
    CHECK(std::abs(elbo(in.net, vp, st, hp, in.spec) - base) < 1e-9);
  }

  TEST_CASE("EM keeps the penalized bound non-decreasing") {
    auto in = make_instance(15, 8, 4, 2, 2, true);
    VemConfig cfg;
    cfg.max_iter = 10;
    cfg.tol_hyper = 1e-12;
    std::vector<double> trace;
    cfg.on_iteration = [&](int, double v) { trace.push_back(v); };
    const auto fit = fit_vem(in.net, in.spec, {in.vp, in.hyper}, cfg);
    double last = penalized_elbo(in.net, in.vp, in.stats, in.hyper, in.spec);
    for (double v : trace) {
      CHECK(v >= last - 1e-6);
      last = v;
    }
    CHECK(std::isfinite(fit.lower_bound));
    for (const auto& b : fit.hyper.beta) CHECK(b.row(0).isZero());
  }

  TEST_CASE("fits are reproducible") {
    auto in = make_instance(16, 6, 3, 2, 2, true);
    VemConfig cfg;
    cfg.max_iter = 5;
    const auto a = fit_vem(in.net, in.spec, {in.vp, in.hyper}, cfg);
    const auto b = fit_vem(in.net, in.spec, {in.vp, in.hyper}, cfg);
    CHECK(a.lower_bound == b.lower_bound);
    CHECK(a.hyper.B == b.hyper.B);
  }

  TEST_CASE("single group and state recovers logistic regression") {
    std::mt19937_64 rng(17);
    RandomNetOptions o;
    o.N = 15;
    o.T = 1;
    o.x_cols = 1;
    o.d_cols = 2;
    o.density = 0.3;
    const auto net = random_network(rng, o);
    ModelSpec spec;
    spec.K = 1;
    spec.M = 1;
    spec.prior_B.sd = 10.0;
    spec.prior_gamma.sd = 10.0;
    VemConfig cfg;
    cfg.tol_hyper = 1e-9;
    cfg.inner_mstep_iters = 200;
    const InitialState init{uniform_vparams(net, 1, 1), Hyperparams::zeros(1, 1, 1, 2)};
    const auto fit = fit_vem(net, spec, init, cfg);
    Eigen::MatrixXd Z(net.num_dyads(), 3);
    Eigen::VectorXd y(net.num_dyads());
    for (int d = 0; d < net.num_dyads(); ++d) {
      Z(d, 0) = 1.0;
      Z.block(d, 1, 1, 2) = net.D().row(d);
      y[d] = net.dyads()[d].y;
    }
    const auto b = logistic_irls(Z, y, 10.0);
    CHECK(std::abs(fit.hyper.B(0, 0) - b[0]) < 1e-4);
    CHECK(std::abs(fit.hyper.gamma[0] - b[1]) < 1e-4);
    CHECK(std::abs(fit.hyper.gamma[1] - b[2]) < 1e-4);
  }

  TEST_CASE("standard errors: logistic limit, prior limit and data scaling") {
    std::mt19937_64 rng(18);
    RandomNetOptions o;
    o.N = 15;
    o.T = 1;
    o.x_cols = 1;
    o.d_cols = 1;
    o.density = 0.35;
    const auto net = random_network(rng, o);
    ModelSpec spec;
    spec.K = 1;
    spec.M = 1;
    spec.prior_B.sd = 100.0;
    spec.prior_gamma.sd = 100.0;
    VemConfig cfg;
    cfg.tol_hyper = 1e-9;
    cfg.se_samples = 5;
    cfg.compute_se = true;
    const InitialState init{uniform_vparams(net, 1, 1), Hyperparams::zeros(1, 1, 1, 1)};
    const auto fit = fit_vem(net, spec, init, cfg);
    REQUIRE(fit.se.has_value());
    Eigen::MatrixXd Z(net.num_dyads(), 2);
    Eigen::VectorXd y(net.num_dyads());
    for (int d = 0; d < net.num_dyads(); ++d) {
      Z(d, 0) = 1.0;
      Z(d, 1) = net.D()(d, 0);
      y[d] = net.dyads()[d].y;
    }
    Eigen::VectorXd se;
    logistic_irls(Z, y, std::numeric_limits<double>::infinity(), &se);
    CHECK(rel_err(fit.se->B(0, 0), se[0]) < 0.1);
    CHECK(rel_err(fit.se->gamma[0], se[1]) < 0.1);

    // Duplicated periods halve the information.
    NetworkData data = net.to_data();
    NetworkData twice = data;
    twice.period_labels = {"a", "b"};
    twice.presence = {data.presence[0], data.presence[0]};
    twice.X.resize(2 * data.X.rows(), data.X.cols());
    twice.X << data.X, data.X;
    twice.D.resize(2 * data.D.rows(), data.D.cols());
    twice.D << data.D, data.D;
    for (auto d : data.dyads) {
      d.period = 1;
      twice.dyads.push_back(d);
    }
    const DynamicNetwork net2(twice);
    const InitialState init2{uniform_vparams(net2, 1, 1), Hyperparams::zeros(1, 1, 1, 1)};
    const auto fit2 = fit_vem(net2, spec, init2, cfg);
    const double ratio = fit.se->gamma[0] / fit2.se->gamma[0];
    CHECK(std::abs(ratio / std::sqrt(2.0) - 1.0) < 0.15);

    // A tight prior dominates.
    spec.prior_B.sd = 1e-3;
    spec.prior_gamma.sd = 1e-3;
    const auto tight = fit_vem(net, spec, init, cfg);
    CHECK(rel_err(tight.se->gamma[0], 1e-3) < 0.05);
    CHECK(rel_err(tight.se->B(0, 0), 1e-3) < 0.05);
  }

  TEST_CASE("posterior summaries") {
    auto in = make_instance(19, 4, 3, 2, 2, true);
    GlobalStats empty = in.stats;
    empty.C.setZero();
    empty.U.setZero();
    const auto pi = posterior_memberships(in.net, in.vp.kappa, empty, in.hyper, in.spec);
    const AlphaTable alpha(in.net, in.hyper);
    for (int np = 0; np < in.net.num_node_periods(); ++np) {
      const int t = in.net.node_periods()[np].period;
      Eigen::VectorXd expect = Eigen::VectorXd::Zero(2);
      for (int m = 0; m < 2; ++m) expect += in.vp.kappa(m, t) * alpha.state(m).col(np) / alpha.xi(m, np);
      CHECK((pi.col(np) - expect).norm() < 1e-14);
    }
    CHECK((transition_estimate(empty, in.spec).array() - 0.5).abs().maxCoeff() < 1e-15);

    GlobalStats hand;
    hand.U.resize(2, 2);
    hand.U << 3.0, 1.0,  //
        0.5, 2.5;
    in.spec.eta = 0.5;
    Eigen::Matrix2d expect;
    expect << 3.5 / 5.0, 1.5 / 5.0,  //
        1.0 / 4.0, 3.0 / 4.0;
    CHECK((transition_estimate(hand, in.spec) - expect).norm() < 1e-15);
    CHECK(columns_on_simplex(posterior_memberships(in.net, in.vp.kappa, in.stats, in.hyper, in.spec)));
  }
}
