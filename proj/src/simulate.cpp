#include "dynmmsbm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dynmmsbm {

namespace {

// Table values are given covariates x groups; slices are groups x covariates.
Eigen::MatrixXd slice(double i1, double i2, double x1, double x2) {
  Eigen::MatrixXd b(2, 2);
  b << i1, x1,  //
      i2, x2;
  return b;
}

DgpPreset base_preset(std::string name) {
  DgpPreset p;
  p.name = std::move(name);
  p.gamma = Eigen::VectorXd::Constant(1, 0.1);
  p.schedule = {0, 0, 0, 0, 0, 1, 1, 1, 1};
  return p;
}

// Dirichlet draw in log space: log G(a) = log G(a + 1) + log(U) / a keeps
// tiny shapes from underflowing to an all-zero vector.
Eigen::VectorXd draw_dirichlet(const Eigen::VectorXd& a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd lg(a.size());
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    std::gamma_distribution<double> g(a[k] + 1.0, 1.0);
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    lg[k] = std::log(g(rng)) + std::log(u) / a[k];
  }
  const double mx = lg.maxCoeff();
  Eigen::VectorXd p = (lg.array() - mx).exp().matrix();
  return p / p.sum();
}

int draw_category(const Eigen::VectorXd& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size() - 1);
}

}  // namespace

void DgpPreset::validate() const {
  const int k = K();
  if (k < 1 || B_probs.cols() != k) throw std::invalid_argument("B_probs must be a non-empty square matrix");
  if ((B_probs.array() <= 0.0).any() || (B_probs.array() >= 1.0).any()) {
    throw std::invalid_argument("B_probs entries must lie in (0, 1)");
  }
  if (beta_states.empty()) throw std::invalid_argument("at least one state slice is required");
  for (const auto& b : beta_states) {
    if (b.rows() != k || b.cols() != x_cols() || b.cols() < 1) {
      throw std::invalid_argument("state slices must be K x J_x with J_x >= 1");
    }
  }
  if (N < 2 || T < 1) throw std::invalid_argument("need N >= 2 and T >= 1");
  if (static_cast<int>(schedule.size()) != T) throw std::invalid_argument("schedule must cover every period");
  for (int s : schedule) {
    if (s < 0 || s >= M()) throw std::invalid_argument("schedule references an unknown state");
  }
  if (!(rw_init_sd >= 0.0) || !(rw_step_sd >= 0.0)) throw std::invalid_argument("random-walk sds must be >= 0");
}

DgpPreset DgpPreset::easy() {
  DgpPreset p = base_preset("easy");
  p.B_probs.resize(2, 2);
  p.B_probs << 0.85, 0.01,  //
      0.01, 0.99;
  p.beta_states = {slice(-4.5, -4.5, 0.0, 0.0), slice(-4.5, -4.5, 0.0, 0.0)};
  return p;
}

DgpPreset DgpPreset::medium() {
  DgpPreset p = base_preset("medium");
  p.B_probs.resize(2, 2);
  p.B_probs << 0.65, 0.35,  //
      0.20, 0.75;
  p.beta_states = {slice(0.05, 0.75, -0.75, -1.0), slice(-0.05, 0.55, -0.75, 0.75)};
  return p;
}

DgpPreset DgpPreset::hard() {
  DgpPreset p = base_preset("hard");
  p.B_probs.resize(2, 2);
  p.B_probs << 0.65, 0.40,  //
      0.50, 0.45;
  p.beta_states = {slice(0.0, 0.0, -0.75, -1.0), slice(0.0, 0.0, -0.75, 0.75)};
  return p;
}

DgpPreset DgpPreset::named(const std::string& name) {
  if (name == "easy") return easy();
  if (name == "medium") return medium();
  if (name == "hard") return hard();
  throw std::invalid_argument("unknown preset '" + name + "' (expected easy, medium or hard)");
}

Simulation generate(const DgpPreset& preset, std::uint64_t seed) {
  preset.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, preset.rw_init_sd);
  std::normal_distribution<double> step(0.0, preset.rw_step_sd);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int N = preset.N, T = preset.T, K = preset.K(), J = preset.x_cols(), Jd = preset.d_cols();

  NetworkData data;
  data.directed = preset.directed;
  for (int i = 0; i < N; ++i) data.node_ids.push_back(std::to_string(i + 1));
  for (int t = 0; t < T; ++t) data.period_labels.push_back(std::to_string(t + 1));
  data.presence.assign(T, std::vector<int>(N));
  for (auto& p : data.presence) std::iota(p.begin(), p.end(), 0);
  data.x_names.push_back("intercept");
  for (int j = 1; j < J; ++j) data.x_names.push_back(J == 2 ? "x" : "x" + std::to_string(j));
  for (int j = 0; j < Jd; ++j) data.d_names.push_back(Jd == 1 ? "d" : "d" + std::to_string(j + 1));

  // Monadic random walks; rows are (period, node).
  data.X.resize(static_cast<Eigen::Index>(N) * T, J);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(t) * N + i;
      data.X(r, 0) = 1.0;
      for (int j = 1; j < J; ++j) {
        data.X(r, j) = t == 0 ? init(rng) : data.X(r - N, j) + step(rng);
      }
    }
  }

  // Dyadic random walks per ordered pair.
  const Eigen::Index pairs = static_cast<Eigen::Index>(N) * (N - 1);
  Eigen::MatrixXd Dwalk(pairs * T, Jd);
  for (int t = 0; t < T; ++t) {
    for (Eigen::Index r = 0; r < pairs; ++r) {
      const Eigen::Index row = t * pairs + r;
      for (int j = 0; j < Jd; ++j) Dwalk(row, j) = t == 0 ? init(rng) : Dwalk(row - pairs, j) + step(rng);
    }
  }
  auto pair_row = [&](int t, int p, int q) {
    return static_cast<Eigen::Index>(t) * pairs + static_cast<Eigen::Index>(p) * (N - 1) + (q < p ? q : q - 1);
  };

  GroundTruth truth;
  truth.B_probs = preset.B_probs;
  truth.beta_states = preset.beta_states;
  truth.gamma = preset.gamma;
  truth.latent.s = preset.schedule;
  truth.pi.resize(K, static_cast<Eigen::Index>(N) * T);
  for (int t = 0; t < T; ++t) {
    const Eigen::MatrixXd& b = preset.beta_states[preset.schedule[t]];
    for (int i = 0; i < N; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(t) * N + i;
      truth.pi.col(r) = draw_dirichlet(alpha(data.X.row(r), b), rng);
    }
  }

  Eigen::MatrixXd Blogit = preset.B_probs.unaryExpr([](double p) { return logit(p); });
  // Directed draws for every ordered pair; undirected networks OR the two directions.
  std::vector<double> ydir(static_cast<std::size_t>(pairs * T));
  std::vector<int> zdir(ydir.size()), wdir(ydir.size());
  for (int t = 0; t < T; ++t) {
    for (int p = 0; p < N; ++p) {
      for (int q = 0; q < N; ++q) {
        if (p == q) continue;
        const Eigen::Index r = pair_row(t, p, q);
        const int z = draw_category(truth.pi.col(static_cast<Eigen::Index>(t) * N + p), rng);
        const int w = draw_category(truth.pi.col(static_cast<Eigen::Index>(t) * N + q), rng);
        const double lin = Jd > 0 ? Dwalk.row(r).dot(preset.gamma) : 0.0;
        const double theta = logistic(Blogit(z, w) + lin);
        zdir[r] = z;
        wdir[r] = w;
        ydir[r] = unif(rng) < theta ? 1.0 : 0.0;
      }
    }
  }

  for (int t = 0; t < T; ++t) {
    for (int p = 0; p < N; ++p) {
      for (int q = 0; q < N; ++q) {
        if (p == q || (!preset.directed && q < p)) continue;
        const Eigen::Index r = pair_row(t, p, q);
        double y = ydir[r];
        if (!preset.directed) y = std::max(y, ydir[pair_row(t, q, p)]);
        data.dyads.push_back({t, p, q, y});
        if (preset.directed) {
          truth.latent.z.push_back(zdir[r]);
          truth.latent.w.push_back(wdir[r]);
        }
      }
    }
  }
  data.D.resize(static_cast<Eigen::Index>(data.dyads.size()), Jd);
  for (std::size_t i = 0; i < data.dyads.size(); ++i) {
    const auto& d = data.dyads[i];
    data.D.row(static_cast<Eigen::Index>(i)) = Dwalk.row(pair_row(d.period, d.node_a, d.node_b));
  }
  return {DynamicNetwork(std::move(data)), std::move(truth)};
}

double pearson(const Eigen::Ref<const Eigen::ArrayXd>& a, const Eigen::Ref<const Eigen::ArrayXd>& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a - ma, db = b - mb;
  const double den = std::sqrt(da.square().sum() * db.square().sum());
  return den > 0.0 ? (da * db).sum() / den : std::numeric_limits<double>::quiet_NaN();
}

RecoveryMetrics recovery_metrics(const Eigen::MatrixXd& pi_true, const Eigen::MatrixXd& pi_hat,
                                 const Eigen::MatrixXd& B_true, const Eigen::MatrixXd& B_hat) {
  if (pi_true.rows() != pi_hat.rows() || pi_true.cols() != pi_hat.cols()) {
    throw std::invalid_argument("recovery_metrics: membership matrices differ in shape");
  }
  const int K = static_cast<int>(pi_true.rows());
  if (K > 8) throw std::invalid_argument("recovery_metrics: exhaustive alignment supports K <= 8");
  std::vector<int> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  RecoveryMetrics best;
  best.mean_l2 = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd aligned(pi_hat.rows(), pi_hat.cols());
  do {
    for (int g = 0; g < K; ++g) aligned.row(perm[g]) = pi_hat.row(g);
    const double l2 = (aligned - pi_true).colwise().norm().mean();
    if (l2 < best.mean_l2) {
      best.mean_l2 = l2;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  for (int g = 0; g < K; ++g) aligned.row(best.permutation[g]) = pi_hat.row(g);
  best.correlation = pearson(aligned.reshaped().array(), pi_true.reshaped().array());
  best.blockmodel_max_abs = std::numeric_limits<double>::quiet_NaN();
  if (B_true.size() > 0 && B_hat.size() > 0) {
    if (B_true.rows() != K || B_hat.rows() != K) {
      throw std::invalid_argument("recovery_metrics: blockmodels must be K x K");
    }
    Eigen::MatrixXd Ba(K, K);
    for (int g = 0; g < K; ++g) {
      for (int h = 0; h < K; ++h) Ba(best.permutation[g], best.permutation[h]) = B_hat(g, h);
    }
    best.blockmodel_max_abs = (Ba - B_true).cwiseAbs().maxCoeff();
  }
  return best;
}

}  // namespace dynmmsbm
