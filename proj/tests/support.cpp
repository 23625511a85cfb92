#include "support.hpp"

#include <cmath>
#include <string>

#include "dynmmsbm/collapsed.hpp"

namespace testing_support {

DynamicNetwork random_network(std::mt19937_64& rng, const RandomNetOptions& opt) {
  std::normal_distribution<double> nrm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  NetworkData data;
  data.directed = opt.directed;
  for (int i = 0; i < opt.N; ++i) data.node_ids.push_back("n" + std::to_string(i));
  for (int t = 0; t < opt.T; ++t) data.period_labels.push_back(std::to_string(2000 + t));
  data.presence.assign(opt.T, {});
  for (int t = 0; t < opt.T; ++t) {
    for (int i = 0; i < opt.N; ++i) {
      if (opt.drop_last_node_in_last_period && t == opt.T - 1 && i == opt.N - 1) continue;
      data.presence[t].push_back(i);
    }
  }
  int rows = 0;
  for (const auto& p : data.presence) rows += static_cast<int>(p.size());
  data.X.resize(rows, opt.x_cols);
  for (int j = 0; j < opt.x_cols; ++j) data.x_names.push_back(j == 0 ? "intercept" : "x" + std::to_string(j));
  for (int j = 0; j < opt.d_cols; ++j) data.d_names.push_back("d" + std::to_string(j + 1));
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < opt.x_cols; ++j) data.X(r, j) = j == 0 ? 1.0 : nrm(rng);
  }
  std::vector<std::vector<double>> drows;
  for (int t = 0; t < opt.T; ++t) {
    const auto& p = data.presence[t];
    for (int a : p) {
      for (int b : p) {
        if (a == b || (!opt.directed && b < a)) continue;
        if (unif(rng) >= opt.keep_dyad) continue;
        data.dyads.push_back({t, a, b, unif(rng) < opt.density ? 1.0 : 0.0});
        std::vector<double> d(opt.d_cols);
        for (auto& v : d) v = nrm(rng);
        drows.push_back(std::move(d));
      }
    }
  }
  data.D.resize(static_cast<Eigen::Index>(drows.size()), opt.d_cols);
  for (std::size_t i = 0; i < drows.size(); ++i) {
    for (int j = 0; j < opt.d_cols; ++j) data.D(static_cast<Eigen::Index>(i), j) = drows[i][j];
  }
  return DynamicNetwork(std::move(data));
}

Hyperparams random_hyper(std::mt19937_64& rng, const ModelSpec& spec, int x_cols, int d_cols,
                         double scale) {
  std::normal_distribution<double> nrm(0.0, scale);
  Hyperparams h = Hyperparams::zeros(spec.K, spec.M, x_cols, d_cols);
  for (int g = 0; g < spec.K; ++g) {
    for (int c = 0; c < spec.K; ++c) h.B(g, c) = nrm(rng);
  }
  if (!spec.directed) h.B = (0.5 * (h.B + h.B.transpose())).eval();
  for (int j = 0; j < d_cols; ++j) h.gamma[j] = nrm(rng);
  for (auto& slice : h.beta) {
    for (int k = 1; k < spec.K; ++k) {
      for (int j = 0; j < x_cols; ++j) slice(k, j) = nrm(rng);
    }
  }
  return h;
}

VariationalParams random_vparams(std::mt19937_64& rng, const DynamicNetwork& net, int K, int M) {
  std::normal_distribution<double> nrm(0.0, 1.0);
  auto simplex_cols = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = std::exp(nrm(rng));
      m.col(c) /= m.col(c).sum();
    }
    return m;
  };
  VariationalParams vp;
  vp.phi = simplex_cols(K, net.num_dyads());
  vp.psi = simplex_cols(K, net.num_dyads());
  vp.kappa = simplex_cols(M, net.num_periods());
  return vp;
}

void for_each_latent(const DynamicNetwork& net, int K, int M,
                     const std::function<void(const LatentState&)>& f) {
  const int D = net.num_dyads();
  const int T = net.num_periods();
  LatentState l;
  l.s.assign(T, 0);
  l.z.assign(D, 0);
  l.w.assign(D, 0);
  // Odometer over (s, z, w).
  std::vector<int*> digits;
  std::vector<int> base;
  for (int t = 0; t < T; ++t) {
    digits.push_back(&l.s[t]);
    base.push_back(M);
  }
  for (int d = 0; d < D; ++d) {
    digits.push_back(&l.z[d]);
    base.push_back(K);
    digits.push_back(&l.w[d]);
    base.push_back(K);
  }
  while (true) {
    f(l);
    std::size_t i = 0;
    while (i < digits.size()) {
      if (++*digits[i] < base[i]) break;
      *digits[i] = 0;
      ++i;
    }
    if (i == digits.size()) break;
  }
}

double polya_marginal(const DynamicNetwork& net, const Hyperparams& hyper, const ModelSpec& spec) {
  const int K = spec.K, M = spec.M;
  const auto& dyads = net.dyads();
  const int NP = net.num_node_periods();

  // Concentrations computed directly.
  std::vector<Eigen::MatrixXd> alpha(M, Eigen::MatrixXd(K, NP));
  for (int m = 0; m < M; ++m) {
    for (int np = 0; np < NP; ++np) {
      for (int k = 0; k < K; ++k) {
        double lin = 0.0;
        for (int j = 0; j < net.x_cols(); ++j) lin += net.X()(np, j) * hyper.beta[m](k, j);
        alpha[m](k, np) = std::exp(lin);
      }
    }
  }

  double total = 0.0;
  for_each_latent(net, K, M, [&](const LatentState& l) {
    double p = 1.0 / M;
    Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(M, M);
    for (int t = 1; t < net.num_periods(); ++t) {
      const int a = l.s[t - 1], b = l.s[t];
      p *= (spec.eta + trans(a, b)) / (M * spec.eta + trans.row(a).sum());
      trans(a, b) += 1.0;
    }
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(K, NP);
    auto draw = [&](int np, int k) {
      const int m = l.s[net.node_periods()[np].period];
      const double xi = alpha[m].col(np).sum();
      p *= (alpha[m](k, np) + counts(k, np)) / (xi + counts.col(np).sum());
      counts(k, np) += 1.0;
    };
    for (int d = 0; d < net.num_dyads(); ++d) {
      draw(dyads[d].sender, l.z[d]);
      draw(dyads[d].receiver, l.w[d]);
      double lin = hyper.B(l.z[d], l.w[d]);
      for (int j = 0; j < net.d_cols(); ++j) lin += net.D()(d, j) * hyper.gamma[j];
      const double theta = 1.0 / (1.0 + std::exp(-lin));
      p *= dyads[d].y == 1.0 ? theta : 1.0 - theta;
    }
    total += p;
  });
  return total;
}

double collapsed_marginal(const DynamicNetwork& net, const Hyperparams& hyper, const ModelSpec& spec) {
  double total = 0.0;
  for_each_latent(net, spec.K, spec.M, [&](const LatentState& l) {
    total += std::exp(log_collapsed_posterior(net, l, hyper, spec));
  });
  return total;
}

Eigen::VectorXd logistic_irls(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double prior_sd,
                              Eigen::VectorXd* se) {
  const auto p = Z.cols();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  const double prec = std::isfinite(prior_sd) ? 1.0 / (prior_sd * prior_sd) : 0.0;
  Eigen::MatrixXd H(p, p);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = Z * b;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    const Eigen::VectorXd g = Z.transpose() * (y - mu) - prec * b;
    H = Z.transpose() * w.asDiagonal() * Z;
    H.diagonal().array() += prec;
    const Eigen::VectorXd step = H.ldlt().solve(g);
    b += step;
    if (step.cwiseAbs().maxCoeff() < 1e-14) break;
  }
  if (se) *se = H.inverse().diagonal().cwiseSqrt();
  return b;
}

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing_support
