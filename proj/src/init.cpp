#include "dynmmsbm/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "dynmmsbm/parallel.hpp"

namespace dynmmsbm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd soft_from_labels(const std::vector<int>& labels, int K, double weight) {
  Eigen::MatrixXd soft(K, static_cast<Eigen::Index>(labels.size()));
  if (K == 1) {
    soft.setOnes();
    return soft;
  }
  soft.setConstant((1.0 - weight) / (K - 1));
  for (std::size_t i = 0; i < labels.size(); ++i) soft(labels[i], static_cast<Eigen::Index>(i)) = weight;
  return soft;
}

Eigen::MatrixXd random_simplex_cols(int K, int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::MatrixXd m(K, n);
  for (int c = 0; c < n; ++c) {
    for (int k = 0; k < K; ++k) m(k, c) = e(rng);
    m.col(c) /= m.col(c).sum();
  }
  return m;
}

double inertia(const Eigen::MatrixXd& pts, const Eigen::MatrixXd& centers, std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double best = kInf;
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (pts.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    total += best;
  }
  return total;
}

// Profile log-likelihood of a hard partition under a K-block model of the
// period's edges.
double partition_loglik(const DynamicNetwork& net, int t, const std::vector<int>& labels, int K) {
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(K, K), den = Eigen::MatrixXd::Zero(K, K);
  const int base = net.np_begin(t);
  const auto& dyads = net.dyads();
  for (int d = net.dyad_begin(t); d < net.dyad_end(t); ++d) {
    const int g = labels[dyads[d].sender - base], h = labels[dyads[d].receiver - base];
    num(g, h) += dyads[d].y;
    den(g, h) += 1.0;
  }
  if (!net.directed()) {
    num = (num + num.transpose()).eval();
    den = (den + den.transpose()).eval();
    num.diagonal() /= 2.0;
    den.diagonal() /= 2.0;
  }
  double ll = 0.0;
  for (int g = 0; g < K; ++g) {
    for (int h = net.directed() ? 0 : g; h < K; ++h) {
      const double e = num(g, h), m = den(g, h);
      if (e > 0.0) ll += e * std::log(e / m);
      if (m - e > 0.0) ll += (m - e) * std::log((m - e) / m);
    }
  }
  return ll;
}

}  // namespace

std::vector<int> kmeans(const Eigen::MatrixXd& points, int K, std::mt19937_64& rng, int restarts, int iters) {
  const auto n = static_cast<int>(points.rows());
  if (K < 1) throw std::invalid_argument("kmeans: K must be >= 1");
  std::vector<int> best_labels(n, 0);
  if (K == 1 || n == 0) return best_labels;
  if (n <= K) {
    std::iota(best_labels.begin(), best_labels.end(), 0);
    return best_labels;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double best = kInf;
  std::vector<int> labels(n);
  for (int r = 0; r < std::max(1, restarts); ++r) {
    // k-means++ seeding.
    Eigen::MatrixXd centers(K, points.cols());
    centers.row(0) = points.row(std::min(n - 1, static_cast<int>(unif(rng) * n)));
    Eigen::VectorXd d2(n);
    for (int c = 1; c < K; ++c) {
      for (int i = 0; i < n; ++i) {
        double m = kInf;
        for (int j = 0; j < c; ++j) m = std::min(m, (points.row(i) - centers.row(j)).squaredNorm());
        d2[i] = m;
      }
      const double tot = d2.sum();
      int pick = 0;
      if (tot > 0.0) {
        const double u = unif(rng) * tot;
        double acc = 0.0;
        for (pick = 0; pick < n - 1; ++pick) {
          acc += d2[pick];
          if (u < acc) break;
        }
      } else {
        pick = std::min(n - 1, static_cast<int>(unif(rng) * n));
      }
      centers.row(c) = points.row(pick);
    }
    // Lloyd iterations.
    double value = inertia(points, centers, labels);
    for (int it = 0; it < iters; ++it) {
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, points.cols());
      std::vector<int> count(K, 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += points.row(i);
        ++count[labels[i]];
      }
      for (int c = 0; c < K; ++c) {
        if (count[c] > 0) {
          centers.row(c) = sums.row(c) / count[c];
        } else {
          // Empty cluster: restart it at the point farthest from its center.
          int far = 0;
          double fd = -1.0;
          for (int i = 0; i < n; ++i) {
            const double d = (points.row(i) - centers.row(labels[i])).squaredNorm();
            if (d > fd) {
              fd = d;
              far = i;
            }
          }
          centers.row(c) = points.row(far);
        }
      }
      const double next = inertia(points, centers, labels);
      if (next >= value - 1e-12 * std::max(1.0, value)) {
        value = next;
        break;
      }
      value = next;
    }
    if (value < best) {
      best = value;
      best_labels = labels;
    }
  }
  return best_labels;
}

PeriodClusters spectral_init(const DynamicNetwork& net, int K, const InitConfig& config) {
  if (K < 1) throw std::invalid_argument("spectral_init: K must be >= 1");
  const int T = net.num_periods();
  PeriodClusters out;
  out.labels.resize(T);
  out.soft.resize(T);
  std::mt19937_64 rng(config.seed);
  const auto& dyads = net.dyads();
  for (int t = 0; t < T; ++t) {
    const int n = net.nodes_in_period(t);
    const int base = net.np_begin(t);
    if (K == 1) {
      out.labels[t].assign(n, 0);
      out.soft[t] = Eigen::MatrixXd::Ones(1, n);
      continue;
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (int d = net.dyad_begin(t); d < net.dyad_end(t); ++d) {
      if (dyads[d].y == 0.0) continue;
      S(dyads[d].sender - base, dyads[d].receiver - base) += 1.0;
      S(dyads[d].receiver - base, dyads[d].sender - base) += 1.0;
    }
    const double mean_degree = n > 0 ? S.sum() / n : 0.0;
    S.array() += mean_degree / std::max(n, 1);

    bool degenerate = n < K || S.isZero();
    if (!degenerate) {
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
      const Eigen::VectorXd& ev = es.eigenvalues();
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return std::abs(ev[a]) > std::abs(ev[b]); });
      const double top = std::abs(ev[order[0]]);
      if (!(std::abs(ev[order[K - 1]]) > 1e-10 * std::max(top, 1e-300))) degenerate = true;
      double best = -kInf;
      for (int dims = K; dims >= 1 && !degenerate; --dims) {
        Eigen::MatrixXd emb(n, dims);
        for (int k = 0; k < dims; ++k) emb.col(k) = es.eigenvectors().col(order[k]);
        if (dims == K) {
          for (int i = 0; i < n; ++i) {
            const double nr = emb.row(i).norm();
            if (nr > 0.0) emb.row(i) /= nr;
          }
        } else {
          for (int k = 0; k < dims; ++k) emb.col(k) *= std::abs(ev[order[k]]);
        }
        auto labels = kmeans(emb, K, rng, config.kmeans_restarts, config.kmeans_iters);
        const double ll = partition_loglik(net, t, labels, K);
        if (ll > best) {
          best = ll;
          out.labels[t] = std::move(labels);
        }
      }
    }
    if (degenerate) {
      out.warnings.push_back("period '" + net.period_labels()[t] +
                             "': adjacency embedding has rank < K; using a random start");
      out.soft[t] = random_simplex_cols(K, n, rng);
      out.labels[t].resize(n);
      for (int i = 0; i < n; ++i) {
        Eigen::Index arg;
        out.soft[t].col(i).maxCoeff(&arg);
        out.labels[t][i] = static_cast<int>(arg);
      }
      continue;
    }
    out.soft[t] = soft_from_labels(out.labels[t], K, config.assigned_weight);
  }
  return out;
}

Eigen::MatrixXd estimate_period_blockmodel(const DynamicNetwork& net, int t, const Eigen::MatrixXd& soft,
                                           double empty_value) {
  const auto K = soft.rows();
  if (soft.cols() != net.nodes_in_period(t)) {
    throw StructureError("estimate_period_blockmodel: assignments must cover every present node");
  }
  const int base = net.np_begin(t);
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(K, K), den = Eigen::MatrixXd::Zero(K, K);
  const auto& dyads = net.dyads();
  for (int d = net.dyad_begin(t); d < net.dyad_end(t); ++d) {
    const Eigen::MatrixXd w = soft.col(dyads[d].sender - base) * soft.col(dyads[d].receiver - base).transpose();
    den += w;
    num += dyads[d].y * w;
    if (!net.directed()) {
      den += w.transpose();
      num += dyads[d].y * w.transpose();
    }
  }
  Eigen::MatrixXd B(K, K);
  for (Eigen::Index g = 0; g < K; ++g) {
    for (Eigen::Index h = 0; h < K; ++h) B(g, h) = den(g, h) > 0.0 ? num(g, h) / den(g, h) : empty_value;
  }
  return B;
}

Eigen::MatrixXd permute_blockmodel(const Eigen::MatrixXd& B, const std::vector<int>& perm) {
  const auto K = B.rows();
  Eigen::MatrixXd out(K, K);
  for (Eigen::Index g = 0; g < K; ++g) {
    for (Eigen::Index h = 0; h < K; ++h) out(perm[g], perm[h]) = B(g, h);
  }
  return out;
}

Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& m, const std::vector<int>& perm) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index g = 0; g < m.rows(); ++g) out.row(perm[g]) = m.row(g);
  return out;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("hungarian: cost matrix must be square");
  // Potentials method, 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n);
  for (int j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

std::vector<std::vector<int>> align_labels(const std::vector<Eigen::MatrixXd>& blockmodels) {
  const int T = static_cast<int>(blockmodels.size());
  std::vector<std::vector<int>> perms;
  if (T == 0) return perms;
  const int K = static_cast<int>(blockmodels[0].rows());
  if (K > 12) {
    throw std::invalid_argument("align_labels: K > 12 is not supported; reduce K or align externally");
  }
  std::vector<int> id(K);
  std::iota(id.begin(), id.end(), 0);
  perms.push_back(id);
  Eigen::MatrixXd sum = blockmodels[0];
  for (int t = 1; t < T; ++t) {
    const Eigen::MatrixXd ref = sum / t;
    const Eigen::MatrixXd& B = blockmodels[t];
    std::vector<int> best = id;
    if (K <= 8) {
      double best_cost = kInf;
      std::vector<int> perm = id;
      do {
        const double c = (permute_blockmodel(B, perm) - ref).squaredNorm();
        if (c < best_cost - 1e-15) {
          best_cost = c;
          best = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
      // Assignment relaxation: match groups by their diagonal entry and the
      // sorted profile of their row and column.
      Eigen::MatrixXd cost(K, K);
      for (int g = 0; g < K; ++g) {
        Eigen::VectorXd rg = B.row(g).transpose(), cg = B.col(g);
        std::sort(rg.data(), rg.data() + K);
        std::sort(cg.data(), cg.data() + K);
        for (int h = 0; h < K; ++h) {
          Eigen::VectorXd rh = ref.row(h).transpose(), ch = ref.col(h);
          std::sort(rh.data(), rh.data() + K);
          std::sort(ch.data(), ch.data() + K);
          const double dd = B(g, g) - ref(h, h);
          cost(g, h) = K * dd * dd + (rg - rh).squaredNorm() + (cg - ch).squaredNorm();
        }
      }
      best = hungarian(cost);
    }
    perms.push_back(best);
    sum += permute_blockmodel(B, best);
  }
  return perms;
}

InitialState initialize(const DynamicNetwork& net, const ModelSpec& spec, const InitConfig& config,
                        std::vector<std::string>* warnings) {
  spec.validate();
  const int K = spec.K, M = spec.M, T = net.num_periods();
  PeriodClusters cl = spectral_init(net, K, config);
  if (warnings) warnings->insert(warnings->end(), cl.warnings.begin(), cl.warnings.end());

  std::vector<Eigen::MatrixXd> Bt(T);
  for (int t = 0; t < T; ++t) Bt[t] = estimate_period_blockmodel(net, t, cl.soft[t]);
  const auto perms = align_labels(Bt);

  Eigen::MatrixXd soft(K, net.num_node_periods());
  Eigen::MatrixXd Bmean = Eigen::MatrixXd::Zero(K, K);
  for (int t = 0; t < T; ++t) {
    soft.middleCols(net.np_begin(t), net.nodes_in_period(t)) = permute_rows(cl.soft[t], perms[t]);
    Bmean += permute_blockmodel(Bt[t], perms[t]);
  }
  Bmean /= std::max(T, 1);

  InitialState init;
  init.hyper = Hyperparams::zeros(K, M, net.x_cols(), net.d_cols());
  init.hyper.B = Bmean.unaryExpr([](double p) { return logit(std::clamp(p, 1e-3, 1.0 - 1e-3)); });
  if (!spec.directed) init.hyper.B = (0.5 * (init.hyper.B + init.hyper.B.transpose())).eval();

  const auto& dyads = net.dyads();
  init.vparams.phi.resize(K, net.num_dyads());
  init.vparams.psi.resize(K, net.num_dyads());
  for (int d = 0; d < net.num_dyads(); ++d) {
    init.vparams.phi.col(d) = soft.col(dyads[d].sender);
    init.vparams.psi.col(d) = soft.col(dyads[d].receiver);
  }

  // States: cluster periods by their mean membership and density.
  init.vparams.kappa = Eigen::MatrixXd::Ones(M, T);
  if (M > 1) {
    Eigen::MatrixXd feat(T, K + 1);
    for (int t = 0; t < T; ++t) {
      const int n = net.nodes_in_period(t);
      feat.row(t).head(K) = n > 0 ? Eigen::RowVectorXd(soft.middleCols(net.np_begin(t), n).rowwise().mean().transpose())
                                  : Eigen::RowVectorXd::Zero(K);
      double dens = 0.0;
      for (int d = net.dyad_begin(t); d < net.dyad_end(t); ++d) dens += dyads[d].y;
      feat(t, K) = net.dyads_in_period(t) > 0 ? dens / net.dyads_in_period(t) : 0.0;
    }
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const auto states = kmeans(feat, M, rng, config.kmeans_restarts, config.kmeans_iters);
    init.vparams.kappa = soft_from_labels(states, M, config.assigned_weight);
  }
  return init;
}

}  // namespace dynmmsbm
