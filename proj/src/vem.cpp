#include "dynmmsbm/vem.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/SpecialFunctions>

#include "dynmmsbm/collapsed.hpp"
#include "dynmmsbm/optim.hpp"
#include "dynmmsbm/parallel.hpp"

namespace dynmmsbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double digamma(double x) { return Eigen::numext::digamma(x); }

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("elbo: non-finite ") + term + " term");
}

// Normalizes a vector of log weights in place and returns it on the simplex.
Eigen::VectorXd normalize_log(Eigen::VectorXd logw, const char* what) {
  const double mx = logw.maxCoeff();
  if (!std::isfinite(mx)) throw NumericalError(std::string(what) + ": non-finite log weights");
  Eigen::VectorXd w = (logw.array() - mx).exp().matrix();
  const double s = w.sum();
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError(std::string(what) + ": numerical underflow");
  return w / s;
}

double entropy(const Eigen::MatrixXd& m) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double p = m.data()[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// Normalized collapsed update of one side of a dyad, written to `out`.
// `ll` points at the dyad's K^2 block log-likelihoods (g * K + h); the
// sender side reads rows g = k, the receiver side columns h = k.
void side_update(int np, int t, const double* own_old, const double* other, const double* ll,
                 std::ptrdiff_t ll_stride, bool sender, const Eigen::MatrixXd& kappa,
                 const Eigen::MatrixXd& C, const AlphaTable& alpha, double* out) {
  const int K = static_cast<int>(C.rows());
  const int M = alpha.M();
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    double v = 0.0;
    const double c = std::max(C(k, np) - own_old[k], 0.0);
    for (int m = 0; m < M; ++m) {
      const double w = kappa(m, t);
      if (w != 0.0) v += w * std::log(alpha(m, k, np) + c);
    }
    for (int h = 0; h < K; ++h) {
      const int cell = sender ? k * K + h : h * K + k;
      v += other[h] * ll[cell * ll_stride];
    }
    out[k] = v;
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) throw NumericalError(sender ? "update_phi: non-finite log weights" : "update_psi: non-finite log weights");
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    out[k] = std::exp(out[k] - mx);
    sum += out[k];
  }
  if (!(sum > 0.0)) throw NumericalError(sender ? "update_phi: numerical underflow" : "update_psi: numerical underflow");
  for (int k = 0; k < K; ++k) out[k] /= sum;
}

// Bernoulli log-likelihoods and probabilities for one block over many dyads.
void block_terms(const Eigen::ArrayXd& y, const Eigen::ArrayXd& lin, double B_gh, Eigen::ArrayXd& theta,
                 Eigen::ArrayXd& ll) {
  if (!std::isfinite(B_gh)) throw NumericalError("edge_prob: non-finite linear predictor");
  // Clamping the predictor at logit(1 - clamp) is the probability clamp.
  static const double bound = logit(1.0 - kThetaClamp);
  const Eigen::ArrayXd eta = (lin + B_gh).cwiseMax(-bound).cwiseMin(bound);
  const Eigen::ArrayXd e = (-eta.abs()).exp();
  const Eigen::ArrayXd inv = (1.0 + e).inverse();
  theta = (eta >= 0.0).select(inv, e * inv);
  // y log(theta) + (1 - y) log(1 - theta) = y eta - softplus(eta)
  ll = y * eta - (eta.cwiseMax(0.0) + e.log1p());
}

// Edge data gathered once for repeated objective evaluations.
struct EdgeData {
  Eigen::ArrayXd y, wt;
  Eigen::MatrixXd D;
  Eigen::MatrixXd P, Q;  // n x K sender / receiver probabilities
  bool weighted = false;

  EdgeData(const DynamicNetwork& net, const VariationalParams& vp, const DyadSelection& sel) {
    const bool all = sel.empty();
    const int n = all ? net.num_dyads() : static_cast<int>(sel.dyads.size());
    const auto K = vp.phi.rows();
    y.resize(n);
    wt = Eigen::ArrayXd::Ones(n);
    D.resize(n, net.d_cols());
    P.resize(n, K);
    Q.resize(n, K);
    weighted = !all;
    for (int i = 0; i < n; ++i) {
      const int d = all ? i : sel.dyads[i];
      y[i] = net.dyads()[d].y;
      if (!all) wt[i] = sel.weights[i];
      D.row(i) = net.D().row(d);
      P.row(i) = vp.phi.col(d).transpose();
      Q.row(i) = vp.psi.col(d).transpose();
    }
  }
};

double edge_value(const EdgeData& ed, const Hyperparams& hyper, const ModelSpec& spec, Eigen::MatrixXd* grad_B_out,
                  Eigen::VectorXd* grad_gamma_out) {
  const int K = hyper.K();
  const Eigen::Index n = ed.y.size();
  Eigen::ArrayXd lin = n > 0 && ed.D.cols() > 0 ? Eigen::ArrayXd(ed.D * hyper.gamma) : Eigen::ArrayXd::Zero(n);
  if (!lin.allFinite()) throw NumericalError("edge_prob: non-finite linear predictor");
  Eigen::ArrayXd theta(n), ll(n), w(n), resid = Eigen::ArrayXd::Zero(n);
  Eigen::MatrixXd G(K, K);
  double value = 0.0;
  for (int g = 0; g < K; ++g) {
    for (int h = 0; h < K; ++h) {
      block_terms(ed.y, lin, hyper.B(g, h), theta, ll);
      w = ed.P.col(g).array() * ed.Q.col(h).array();
      if (ed.weighted) w *= ed.wt;
      value += (w * ll).sum();
      const Eigen::ArrayXd r = w * (ed.y - theta);
      G(g, h) = r.sum();
      resid += r;
    }
  }

  const auto& pB = spec.prior_B;
  const auto& pg = spec.prior_gamma;
  for (int g = 0; g < K; ++g) {
    for (int h = spec.directed ? 0 : g; h < K; ++h) {
      const double z = (hyper.B(g, h) - pB.mean) / pB.sd;
      value -= 0.5 * z * z;
    }
  }
  for (Eigen::Index j = 0; j < hyper.gamma.size(); ++j) {
    const double z = (hyper.gamma[j] - pg.mean) / pg.sd;
    value -= 0.5 * z * z;
  }

  if (grad_B_out) {
    if (!spec.directed) {
      for (int g = 0; g < K; ++g) {
        for (int h = g + 1; h < K; ++h) {
          const double s = G(g, h) + G(h, g);
          G(g, h) = s;
          G(h, g) = s;
        }
      }
    }
    G.array() -= (hyper.B.array() - pB.mean) / (pB.sd * pB.sd);
    *grad_B_out = std::move(G);
  }
  if (grad_gamma_out) {
    Eigen::VectorXd gg = ed.D.cols() > 0 ? Eigen::VectorXd(ed.D.transpose() * resid.matrix())
                                         : Eigen::VectorXd::Zero(0);
    gg.array() -= (hyper.gamma.array() - pg.mean) / (pg.sd * pg.sd);
    *grad_gamma_out = std::move(gg);
  }
  return value;
}

// Diagonal of the negated Hessian of edge_value, laid out like its gradient.
void edge_curvature(const EdgeData& ed, const Hyperparams& hyper, const ModelSpec& spec, Eigen::MatrixXd& cB,
                    Eigen::VectorXd& cg) {
  const int K = hyper.K();
  const Eigen::Index n = ed.y.size();
  const Eigen::ArrayXd lin = n > 0 && ed.D.cols() > 0 ? Eigen::ArrayXd(ed.D * hyper.gamma) : Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd theta(n), ll(n), v = Eigen::ArrayXd::Zero(n);
  cB.resize(K, K);
  for (int g = 0; g < K; ++g) {
    for (int h = 0; h < K; ++h) {
      block_terms(ed.y, lin, hyper.B(g, h), theta, ll);
      Eigen::ArrayXd w = ed.P.col(g).array() * ed.Q.col(h).array() * theta * (1.0 - theta);
      if (ed.weighted) w *= ed.wt;
      cB(g, h) = w.sum();
      v += w;
    }
  }
  if (!spec.directed) {
    for (int g = 0; g < K; ++g) {
      for (int h = g + 1; h < K; ++h) cB(g, h) = cB(h, g) = cB(g, h) + cB(h, g);
    }
  }
  cB.array() += 1.0 / (spec.prior_B.sd * spec.prior_B.sd);
  cg = ed.D.cols() > 0 ? Eigen::VectorXd(ed.D.array().square().matrix().transpose() * v.matrix())
                       : Eigen::VectorXd::Zero(0);
  cg.array() += 1.0 / (spec.prior_gamma.sd * spec.prior_gamma.sd);
}

Eigen::MatrixXd one_hot_cols(const std::vector<int>& idx, int rows) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) m(idx[i], static_cast<Eigen::Index>(i)) = 1.0;
  return m;
}

int draw_categorical(const Eigen::VectorXd& p, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  for (Eigen::Index k = p.size() - 1; k > 0; --k) {
    if (p[k] > 0.0) return static_cast<int>(k);
  }
  return 0;
}

void check_init_impl(const DynamicNetwork& net, const ModelSpec& spec, const InitialState& init) {
  const auto& vp = init.vparams;
  if (vp.phi.rows() != spec.K || vp.phi.cols() != net.num_dyads() || vp.psi.rows() != spec.K ||
      vp.psi.cols() != net.num_dyads()) {
    throw StructureError("initial phi/psi must be K x dyads");
  }
  if (vp.kappa.rows() != spec.M || vp.kappa.cols() != net.num_periods()) {
    throw StructureError("initial kappa must be M x periods");
  }
  if (!columns_on_simplex(vp.phi, 1e-8) || !columns_on_simplex(vp.psi, 1e-8) ||
      !columns_on_simplex(vp.kappa, 1e-8)) {
    throw StructureError("initial variational parameters must be on the simplex");
  }
  if (init.hyper.K() != spec.K || init.hyper.M() != spec.M || init.hyper.x_cols() != net.x_cols() ||
      init.hyper.d_cols() != net.d_cols()) {
    throw StructureError("initial hyperparameters do not match the model dimensions");
  }
  init.hyper.validate(spec.directed);
  if (spec.directed != net.directed()) {
    throw StructureError("model spec and network disagree on directedness");
  }
}

}  // namespace

void VemConfig::validate() const {
  if (!(tol_hyper > 0.0)) throw std::invalid_argument("tol_hyper must be positive");
  if (max_iter < 1 || inner_mstep_iters < 1 || lbfgs_memory < 1) {
    throw std::invalid_argument("iteration caps must be at least 1");
  }
  if (se_samples < 1) throw std::invalid_argument("se_samples must be at least 1");
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd expected_transitions(const Eigen::MatrixXd& kappa) {
  const auto M = kappa.rows();
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(M, M);
  for (Eigen::Index t = 0; t + 1 < kappa.cols(); ++t) U += kappa.col(t) * kappa.col(t + 1).transpose();
  return U;
}

GlobalStats expected_stats(const DynamicNetwork& net, const VariationalParams& vp) {
  GlobalStats stats;
  const auto K = vp.phi.rows();
  stats.C = Eigen::MatrixXd::Zero(K, net.num_node_periods());
  const auto& dyads = net.dyads();
  // Column np gathers its incident dyads; columns are independent.
  detail::parallel_for(net.num_node_periods(), [&](int np) {
    for (int d : net.incident_dyads(np)) {
      if (dyads[d].sender == np) stats.C.col(np) += vp.phi.col(d);
      if (dyads[d].receiver == np) stats.C.col(np) += vp.psi.col(d);
    }
  });
  stats.U = expected_transitions(vp.kappa);
  stats.n_inter = net.n_inter();
  return stats;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd dyad_block_loglik(const DynamicNetwork& net, int dyad, const Eigen::MatrixXd& B, double lin) {
  const auto K = B.rows();
  Eigen::VectorXd ll(K * K);
  for (Eigen::Index g = 0; g < K; ++g) {
    for (Eigen::Index h = 0; h < K; ++h) ll[g * K + h] = bernoulli_loglik(net.dyads()[dyad].y, edge_prob(B(g, h), lin));
  }
  return ll;
}

}  // namespace

Eigen::VectorXd update_phi(const DynamicNetwork& net, int dyad, const Eigen::VectorXd& phi_old,
                           const Eigen::VectorXd& psi, const Eigen::MatrixXd& kappa,
                           const Eigen::MatrixXd& C, const AlphaTable& alpha,
                           const Eigen::MatrixXd& B, double lin) {
  const Dyad& dy = net.dyads()[dyad];
  const Eigen::VectorXd ll = dyad_block_loglik(net, dyad, B, lin);
  Eigen::VectorXd out(C.rows());
  side_update(dy.sender, dy.period, phi_old.data(), psi.data(), ll.data(), 1, true, kappa, C, alpha, out.data());
  return out;
}

Eigen::VectorXd update_psi(const DynamicNetwork& net, int dyad, const Eigen::VectorXd& psi_old,
                           const Eigen::VectorXd& phi, const Eigen::MatrixXd& kappa,
                           const Eigen::MatrixXd& C, const AlphaTable& alpha,
                           const Eigen::MatrixXd& B, double lin) {
  const Dyad& dy = net.dyads()[dyad];
  const Eigen::VectorXd ll = dyad_block_loglik(net, dyad, B, lin);
  Eigen::VectorXd out(C.rows());
  side_update(dy.receiver, dy.period, psi_old.data(), phi.data(), ll.data(), 1, false, kappa, C, alpha, out.data());
  return out;
}

namespace {

Eigen::MatrixXd loglik_for(const DynamicNetwork& net, const Hyperparams& hyper, const std::vector<int>* rows) {
  const int K = hyper.K();
  const int n = rows ? static_cast<int>(rows->size()) : net.num_dyads();
  Eigen::ArrayXd y(n), lin(n);
  const Eigen::VectorXd& gamma = hyper.gamma;
  for (int i = 0; i < n; ++i) {
    const int d = rows ? (*rows)[i] : i;
    y[i] = net.dyads()[d].y;
    lin[i] = gamma.size() > 0 ? net.D().row(d).dot(gamma) : 0.0;
  }
  if (!lin.allFinite()) throw NumericalError("edge_prob: non-finite linear predictor");
  Eigen::MatrixXd table(n, K * K);
  Eigen::ArrayXd theta(n), ll(n);
  for (int g = 0; g < K; ++g) {
    for (int h = 0; h < K; ++h) {
      block_terms(y, lin, hyper.B(g, h), theta, ll);
      table.col(g * K + h) = ll.matrix();
    }
  }
  return table;
}

}  // namespace

Eigen::MatrixXd edge_loglik_table(const DynamicNetwork& net, const Hyperparams& hyper) {
  return loglik_for(net, hyper, nullptr);
}

Eigen::MatrixXd edge_loglik_rows(const DynamicNetwork& net, const Hyperparams& hyper,
                                 const std::vector<int>& dyads) {
  return loglik_for(net, hyper, &dyads);
}

void update_local(const DynamicNetwork& net, const AlphaTable& alpha, const Eigen::MatrixXd& loglik,
                  const Eigen::MatrixXd& C, const std::vector<int>& dyads, VariationalParams& vp) {
  const bool all = dyads.empty();
  const int n = all ? net.num_dyads() : static_cast<int>(dyads.size());
  const auto& dy = net.dyads();
  const auto K = C.rows();
  const std::ptrdiff_t stride = loglik.rows();
  if (loglik.rows() != n || loglik.cols() != K * K) throw StructureError("update_local: loglik table has wrong shape");
  detail::parallel_for(n, [&](int i) {
    const int d = all ? i : dyads[i];
    double phi_old[64], psi_old[64];
    if (K > 64) throw std::invalid_argument("K above 64 is not supported");
    std::copy_n(vp.phi.col(d).data(), K, phi_old);
    std::copy_n(vp.psi.col(d).data(), K, psi_old);
    const double* ll = loglik.data() + i;
    side_update(dy[d].sender, dy[d].period, phi_old, psi_old, ll, stride, true, vp.kappa, C, alpha,
                vp.phi.col(d).data());
    side_update(dy[d].receiver, dy[d].period, psi_old, vp.phi.col(d).data(), ll, stride, false, vp.kappa, C,
                alpha, vp.psi.col(d).data());
  });
}

void update_states(const DynamicNetwork& net, const ModelSpec& spec, const AlphaTable& alpha,
                   const Eigen::MatrixXd& C, Eigen::MatrixXd& kappa) {
  if (kappa.rows() == 1) return;
  const Eigen::MatrixXd membership = membership_log_terms(net, C, alpha, spec);
  for (int t = 0; t < net.num_periods(); ++t) kappa.col(t) = update_kappa(t, kappa, membership, spec.eta);
}

Eigen::MatrixXd membership_log_terms(const DynamicNetwork& net, const Eigen::MatrixXd& C,
                                     const AlphaTable& alpha, const ModelSpec& spec) {
  const int M = alpha.M();
  const int T = net.num_periods();
  const auto K = C.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M, T);
  detail::parallel_for(T, [&](int t) {
    for (int m = 0; m < M; ++m) {
      double v = 0.0;
      for (int np = net.np_begin(t); np < net.np_end(t); ++np) {
        const double xi = alpha.xi(m, np);
        v += std::lgamma(xi) - std::lgamma(xi + membership_total(net, spec, np));
        for (Eigen::Index k = 0; k < K; ++k) {
          const double a = alpha(m, static_cast<int>(k), np);
          v += std::lgamma(a + C(k, np)) - std::lgamma(a);
        }
      }
      out(m, t) = v;
    }
  });
  return out;
}

Eigen::VectorXd update_kappa(int t, const Eigen::MatrixXd& kappa, const Eigen::MatrixXd& membership,
                             double eta) {
  const auto M = kappa.rows();
  const auto T = kappa.cols();
  if (M == 1) return Eigen::VectorXd::Ones(1);

  Eigen::MatrixXd Up = expected_transitions(kappa);
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd next = Eigen::VectorXd::Zero(M);
  if (t > 0) {
    prev = kappa.col(t - 1);
    Up -= prev * kappa.col(t).transpose();
  }
  if (t + 1 < T) {
    next = kappa.col(t + 1);
    Up -= kappa.col(t) * next.transpose();
  }
  Up = Up.cwiseMax(0.0);

  const double Meta = static_cast<double>(M) * eta;
  Eigen::VectorXd logw(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    double v = membership(m, t);
    if (t + 1 < T) v -= std::log(Meta + Up.row(m).sum());
    v += next[m] * prev[m] * std::log(eta + Up(m, m) + 1.0);
    v += (prev[m] - prev[m] * next[m] + next[m]) * std::log(eta + Up(m, m));
    for (Eigen::Index n = 0; n < M; ++n) {
      if (n == m) continue;
      v += next[n] * std::log(eta + Up(m, n)) + prev[n] * std::log(eta + Up(n, m));
    }
    logw[m] = v;
  }
  return normalize_log(std::move(logw), "update_kappa");
}

namespace {

void sweep_with(const DynamicNetwork& net, const ModelSpec& spec, const AlphaTable& alpha,
                const Eigen::MatrixXd& loglik, VariationalParams& vp, GlobalStats& stats) {
  update_local(net, alpha, loglik, stats.C, {}, vp);
  stats = expected_stats(net, vp);
  update_states(net, spec, alpha, stats.C, vp.kappa);
  stats.U = expected_transitions(vp.kappa);
}

}  // namespace

void estep_sweep(const DynamicNetwork& net, const ModelSpec& spec, const Hyperparams& hyper,
                 VariationalParams& vp, GlobalStats& stats) {
  const AlphaTable alpha(net, hyper);
  sweep_with(net, spec, alpha, edge_loglik_table(net, hyper), vp, stats);
}

EStepReport estep(const DynamicNetwork& net, const ModelSpec& spec, const Hyperparams& hyper,
                  VariationalParams& vp, GlobalStats& stats, bool monotone, const Eigen::MatrixXd* known) {
  EStepReport rep;
  const AlphaTable alpha(net, hyper);
  Eigen::MatrixXd own;
  if (!known) own = edge_loglik_table(net, hyper);
  const Eigen::MatrixXd& loglik = known ? *known : own;
  auto bound = [&] { return elbo_terms(net, vp, stats, hyper, spec, &loglik).bound(); };
  if (!monotone) {
    sweep_with(net, spec, alpha, loglik, vp, stats);
    rep.after = rep.before = bound();
    return rep;
  }
  rep.before = bound();
  const VariationalParams old = vp;
  const GlobalStats old_stats = stats;
  sweep_with(net, spec, alpha, loglik, vp, stats);
  rep.after = bound();
  if (rep.after >= rep.before) return rep;

  // The collapsed updates are not exact coordinate ascent; pull back along
  // the segment between the old and new parameters.
  const VariationalParams fresh = vp;
  double lambda = 1.0;
  for (int k = 0; k < 12; ++k) {
    lambda *= 0.5;
    vp.phi = old.phi + lambda * (fresh.phi - old.phi);
    vp.psi = old.psi + lambda * (fresh.psi - old.psi);
    vp.kappa = old.kappa + lambda * (fresh.kappa - old.kappa);
    stats = expected_stats(net, vp);
    const double v = bound();
    if (v >= rep.before) {
      rep.after = v;
      rep.step = lambda;
      return rep;
    }
  }
  vp = old;
  stats = old_stats;
  rep.after = rep.before;
  rep.step = 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

double log_prior(const Hyperparams& hyper, const ModelSpec& spec) {
  auto pen = [](double x, const NormalPrior& p) {
    const double z = (x - p.mean) / p.sd;
    return -0.5 * z * z;
  };
  double lp = 0.0;
  const int K = hyper.K();
  for (int g = 0; g < K; ++g) {
    for (int h = spec.directed ? 0 : g; h < K; ++h) lp += pen(hyper.B(g, h), spec.prior_B);
  }
  for (Eigen::Index j = 0; j < hyper.gamma.size(); ++j) lp += pen(hyper.gamma[j], spec.prior_gamma);
  for (const auto& slice : hyper.beta) {
    for (Eigen::Index k = 1; k < slice.rows(); ++k) {
      for (Eigen::Index j = 0; j < slice.cols(); ++j) lp += pen(slice(k, j), spec.prior_beta);
    }
  }
  return lp;
}

double edge_objective(const DynamicNetwork& net, const VariationalParams& vp, const Hyperparams& hyper,
                      const ModelSpec& spec, const DyadSelection& selection,
                      Eigen::MatrixXd* grad_B_out, Eigen::VectorXd* grad_gamma_out) {
  const EdgeData ed(net, vp, selection);
  return edge_value(ed, hyper, spec, grad_B_out, grad_gamma_out);
}

double membership_objective(const DynamicNetwork& net, const Eigen::MatrixXd& kappa,
                            const Eigen::MatrixXd& C, const Hyperparams& hyper, const ModelSpec& spec,
                            std::vector<Eigen::MatrixXd>* grad_beta_out) {
  const AlphaTable alpha(net, hyper);
  const Eigen::MatrixXd terms = membership_log_terms(net, C, alpha, spec);
  double value = kappa.cwiseProduct(terms).sum();
  const auto& pb = spec.prior_beta;
  for (const auto& slice : hyper.beta) {
    for (Eigen::Index k = 1; k < slice.rows(); ++k) {
      for (Eigen::Index j = 0; j < slice.cols(); ++j) {
        const double z = (slice(k, j) - pb.mean) / pb.sd;
        value -= 0.5 * z * z;
      }
    }
  }
  if (!grad_beta_out) return value;

  const int K = hyper.K();
  const int NP = net.num_node_periods();
  grad_beta_out->assign(hyper.M(), Eigen::MatrixXd());
  for (int m = 0; m < hyper.M(); ++m) {
    // Per node-period coefficient of x in d/d beta_mk, then one product with X.
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(K, NP);
    detail::parallel_for(NP, [&](int np) {
      const double w = kappa(m, net.node_periods()[np].period);
      if (w == 0.0) return;
      const double xi = alpha.xi(m, np);
      const double common = digamma(xi) - digamma(xi + membership_total(net, spec, np));
      for (int k = 1; k < K; ++k) {
        const double a = alpha(m, k, np);
        coef(k, np) = w * a * (common + digamma(a + C(k, np)) - digamma(a));
      }
    });
    Eigen::MatrixXd g = coef * net.X();
    g.bottomRows(K - 1).array() -= (hyper.beta[m].bottomRows(K - 1).array() - pb.mean) / (pb.sd * pb.sd);
    g.row(0).setZero();
    (*grad_beta_out)[m] = std::move(g);
  }
  return value;
}

ElboTerms elbo_terms(const DynamicNetwork& net, const VariationalParams& vp, const GlobalStats& stats,
                     const Hyperparams& hyper, const ModelSpec& spec, const Eigen::MatrixXd* loglik) {
  ElboTerms e;
  e.transition = transition_log_term(stats.U, spec.eta);
  require_finite(e.transition, "transition");

  const AlphaTable alpha(net, hyper);
  e.membership = vp.kappa.cwiseProduct(membership_log_terms(net, stats.C, alpha, spec)).sum();
  require_finite(e.membership, "membership");

  Eigen::MatrixXd own;
  if (!loglik) {
    own = edge_loglik_table(net, hyper);
    loglik = &own;
  }
  const int K = hyper.K();
  for (int g = 0; g < K; ++g) {
    for (int h = 0; h < K; ++h) {
      e.edges += (vp.phi.row(g).transpose().array() * vp.psi.row(h).transpose().array() *
                  loglik->col(g * K + h).array())
                     .sum();
    }
  }
  require_finite(e.edges, "edge");

  e.entropy = entropy(vp.phi) + entropy(vp.psi) + entropy(vp.kappa);
  require_finite(e.entropy, "entropy");
  e.prior = log_prior(hyper, spec);
  require_finite(e.prior, "prior");
  return e;
}

double elbo(const DynamicNetwork& net, const VariationalParams& vp, const GlobalStats& stats,
            const Hyperparams& hyper, const ModelSpec& spec) {
  return elbo_terms(net, vp, stats, hyper, spec).bound();
}

double penalized_elbo(const DynamicNetwork& net, const VariationalParams& vp,
                      const GlobalStats& stats, const Hyperparams& hyper, const ModelSpec& spec) {
  return elbo_terms(net, vp, stats, hyper, spec).penalized();
}

Eigen::MatrixXd grad_B(const DynamicNetwork& net, const VariationalParams& vp,
                       const Hyperparams& hyper, const ModelSpec& spec) {
  Eigen::MatrixXd g;
  edge_objective(net, vp, hyper, spec, {}, &g, nullptr);
  return g;
}

Eigen::VectorXd grad_gamma(const DynamicNetwork& net, const VariationalParams& vp,
                           const Hyperparams& hyper, const ModelSpec& spec) {
  Eigen::VectorXd g;
  edge_objective(net, vp, hyper, spec, {}, nullptr, &g);
  return g;
}

std::vector<Eigen::MatrixXd> grad_beta(const DynamicNetwork& net, const VariationalParams& vp,
                                       const GlobalStats& stats, const Hyperparams& hyper,
                                       const ModelSpec& spec) {
  std::vector<Eigen::MatrixXd> g;
  membership_objective(net, vp.kappa, stats.C, hyper, spec, &g);
  return g;
}

// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const Hyperparams& h, bool directed_, FreeParams free_)
    : K(h.K()), M(h.M()), x_cols(h.x_cols()), d_cols(h.d_cols()), directed(directed_), free(free_) {}

int ParamLayout::edge_size() const {
  int n = 0;
  if (free.B) n += directed ? K * K : K * (K + 1) / 2;
  if (free.gamma) n += d_cols;
  return n;
}

int ParamLayout::beta_size() const { return free.beta ? M * (K - 1) * x_cols : 0; }

Eigen::VectorXd ParamLayout::pack_edge(const Hyperparams& h) const {
  return pack_edge_grad(h.B, h.gamma);
}

void ParamLayout::unpack_edge(const Eigen::VectorXd& v, Hyperparams& h) const {
  int i = 0;
  if (free.B) {
    for (int g = 0; g < K; ++g) {
      for (int c = directed ? 0 : g; c < K; ++c) {
        h.B(g, c) = v[i];
        if (!directed) h.B(c, g) = v[i];
        ++i;
      }
    }
  }
  if (free.gamma) {
    for (int j = 0; j < d_cols; ++j) h.gamma[j] = v[i++];
  }
}

Eigen::VectorXd ParamLayout::pack_edge_grad(const Eigen::MatrixXd& gB, const Eigen::VectorXd& gg) const {
  Eigen::VectorXd v(edge_size());
  int i = 0;
  if (free.B) {
    for (int g = 0; g < K; ++g) {
      for (int c = directed ? 0 : g; c < K; ++c) v[i++] = gB(g, c);
    }
  }
  if (free.gamma) {
    for (int j = 0; j < d_cols; ++j) v[i++] = gg[j];
  }
  return v;
}

Eigen::VectorXd ParamLayout::pack_beta(const Hyperparams& h) const { return pack_beta_grad(h.beta); }

void ParamLayout::unpack_beta(const Eigen::VectorXd& v, Hyperparams& h) const {
  if (!free.beta) return;
  int i = 0;
  for (int m = 0; m < M; ++m) {
    for (int k = 1; k < K; ++k) {
      for (int j = 0; j < x_cols; ++j) h.beta[m](k, j) = v[i++];
    }
  }
}

Eigen::VectorXd ParamLayout::pack_beta_grad(const std::vector<Eigen::MatrixXd>& gb) const {
  Eigen::VectorXd v(beta_size());
  if (!free.beta) return v;
  int i = 0;
  for (int m = 0; m < M; ++m) {
    for (int k = 1; k < K; ++k) {
      for (int j = 0; j < x_cols; ++j) v[i++] = gb[m](k, j);
    }
  }
  return v;
}

MStepResult m_step(const DynamicNetwork& net, const VariationalParams& vp, const GlobalStats& stats,
                   const Hyperparams& hyper0, const ModelSpec& spec, const VemConfig& config,
                   const FreeParams& free, const DyadSelection& selection) {
  MStepResult res;
  res.hyper = hyper0;
  const ParamLayout lay(hyper0, spec.directed, free);
  LbfgsOptions opts;
  opts.max_iter = config.inner_mstep_iters;
  opts.memory = config.lbfgs_memory;

  if (lay.edge_size() > 0) {
    const EdgeData ed(net, vp, selection);
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      Hyperparams h = res.hyper;
      lay.unpack_edge(x, h);
      Eigen::MatrixXd gB;
      Eigen::VectorXd gg;
      try {
        const double v = edge_value(ed, h, spec, &gB, &gg);
        grad = lay.pack_edge_grad(gB, gg);
        return v;
      } catch (const NumericalError&) {
        grad = Eigen::VectorXd::Zero(x.size());
        return kNegInf;
      }
    };
    Eigen::MatrixXd cB;
    Eigen::VectorXd cg;
    LbfgsOptions edge_opts = opts;
    try {
      edge_curvature(ed, res.hyper, spec, cB, cg);
      edge_opts.initial_scale = lay.pack_edge_grad(cB, cg).cwiseInverse();
    } catch (const NumericalError&) {
    }
    const LbfgsResult r = maximize_lbfgs(f, lay.pack_edge(res.hyper), edge_opts);
    lay.unpack_edge(r.x, res.hyper);
    res.line_search_failed |= r.line_search_failed;
    res.iterations += r.iterations;
  }

  if (lay.beta_size() > 0) {
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      Hyperparams h = res.hyper;
      lay.unpack_beta(x, h);
      std::vector<Eigen::MatrixXd> gb;
      try {
        const double v = membership_objective(net, vp.kappa, stats.C, h, spec, &gb);
        grad = lay.pack_beta_grad(gb);
        return std::isfinite(v) ? v : kNegInf;
      } catch (const NumericalError&) {
        grad = Eigen::VectorXd::Zero(x.size());
        return kNegInf;
      }
    };
    const LbfgsResult r = maximize_lbfgs(f, lay.pack_beta(res.hyper), opts);
    lay.unpack_beta(r.x, res.hyper);
    res.line_search_failed |= r.line_search_failed;
    res.iterations += r.iterations;
  }
  return res;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd posterior_memberships(const DynamicNetwork& net, const Eigen::MatrixXd& kappa,
                                      const GlobalStats& stats, const Hyperparams& hyper,
                                      const ModelSpec& spec) {
  const AlphaTable alpha(net, hyper);
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(spec.K, net.num_node_periods());
  for (int np = 0; np < net.num_node_periods(); ++np) {
    const int t = net.node_periods()[np].period;
    const double n = stats.C.col(np).sum();
    for (int m = 0; m < spec.M; ++m) {
      pi.col(np) += kappa(m, t) * (alpha.state(m).col(np) + stats.C.col(np)) / (alpha.xi(m, np) + n);
    }
  }
  return pi;
}

Eigen::MatrixXd transition_estimate(const GlobalStats& stats, const ModelSpec& spec) {
  Eigen::MatrixXd A = stats.U.array() + spec.eta;
  const Eigen::VectorXd rows = stats.U_row().array() + spec.M * spec.eta;
  return rows.asDiagonal().inverse() * A;
}

void finalize_model(const DynamicNetwork& net, FittedModel& model) {
  const ElboTerms e = elbo_terms(net, model.vparams, model.stats, model.hyper, model.spec);
  model.lower_bound = e.bound();
  model.objective = e.penalized();
  model.pi_hat = posterior_memberships(net, model.vparams.kappa, model.stats, model.hyper, model.spec);
  model.trans_hat = transition_estimate(model.stats, model.spec);
}

void validate_initial_state(const DynamicNetwork& net, const ModelSpec& spec, const InitialState& init) {
  check_init_impl(net, spec, init);
}

FittedModel fit_vem(const DynamicNetwork& net, const ModelSpec& spec, const InitialState& init,
                    const VemConfig& config) {
  spec.validate();
  config.validate();
  validate_initial_state(net, spec, init);

  FittedModel fm;
  fm.spec = spec;
  fm.engine = "vem";
  fm.hyper = init.hyper;
  fm.vparams = init.vparams;
  fm.stats = expected_stats(net, fm.vparams);
  fm.stop_reason = "max_iter";

  bool warned = false;
  Eigen::MatrixXd loglik = edge_loglik_table(net, fm.hyper);
  for (int it = 1; it <= config.max_iter; ++it) {
    estep(net, spec, fm.hyper, fm.vparams, fm.stats, config.monotone_estep, &loglik);
    const MStepResult ms = m_step(net, fm.vparams, fm.stats, fm.hyper, spec, config);
    if (ms.line_search_failed && !warned) {
      fm.warnings.push_back("M-step line search failed at iteration " + std::to_string(it) +
                            "; kept the best point found");
      warned = true;
    }
    const double change = fm.hyper.max_abs_diff(ms.hyper);
    fm.hyper = ms.hyper;
    loglik = edge_loglik_table(net, fm.hyper);
    const double obj = elbo_terms(net, fm.vparams, fm.stats, fm.hyper, spec, &loglik).penalized();
    fm.trace.push_back(obj);
    fm.iters = it;
    if (config.on_iteration) config.on_iteration(it, obj);
    if (change < config.tol_hyper) {
      fm.converged = true;
      fm.stop_reason = "converged";
      break;
    }
  }
  finalize_model(net, fm);
  if (config.compute_se) fm.se = standard_errors(fm, net, config);
  return fm;
}

// ---------------------------------------------------------------------------

StandardErrors standard_errors(const FittedModel& fitted, const DynamicNetwork& net,
                               const VemConfig& config) {
  config.validate();
  const ModelSpec& spec = fitted.spec;
  const Hyperparams& hyper = fitted.hyper;
  const ParamLayout lay(hyper, spec.directed);
  const int pe = lay.edge_size();
  const int pb = lay.beta_size();
  const int P = pe + pb;

  Eigen::VectorXd x0(P);
  x0 << lay.pack_edge(hyper), lay.pack_beta(hyper);

  auto gradient = [&](const Eigen::VectorXd& x, const VariationalParams& vp, const GlobalStats& st) {
    Hyperparams h = hyper;
    lay.unpack_edge(x.head(pe), h);
    lay.unpack_beta(x.tail(pb), h);
    Eigen::MatrixXd gB;
    Eigen::VectorXd gg;
    edge_objective(net, vp, h, spec, {}, &gB, &gg);
    std::vector<Eigen::MatrixXd> gb;
    membership_objective(net, vp.kappa, st.C, h, spec, &gb);
    Eigen::VectorXd g(P);
    g << lay.pack_edge_grad(gB, gg), lay.pack_beta_grad(gb);
    return g;
  };

  std::mt19937_64 rng(config.seed);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(P, P);
  const auto& vp = fitted.vparams;
  for (int s = 0; s < config.se_samples; ++s) {
    LatentState latent;
    latent.s.resize(net.num_periods());
    latent.z.resize(net.num_dyads());
    latent.w.resize(net.num_dyads());
    for (int t = 0; t < net.num_periods(); ++t) latent.s[t] = draw_categorical(vp.kappa.col(t), rng);
    for (int d = 0; d < net.num_dyads(); ++d) {
      latent.z[d] = draw_categorical(vp.phi.col(d), rng);
      latent.w[d] = draw_categorical(vp.psi.col(d), rng);
    }
    VariationalParams point{one_hot_cols(latent.z, spec.K), one_hot_cols(latent.w, spec.K),
                            one_hot_cols(latent.s, spec.M)};
    const GlobalStats st = compute_stats(latent, net, spec);
    for (int i = 0; i < P; ++i) {
      const double step = 1e-5 * std::max(1.0, std::abs(x0[i]));
      Eigen::VectorXd xp = x0, xm = x0;
      xp[i] += step;
      xm[i] -= step;
      H.col(i) += (gradient(xp, point, st) - gradient(xm, point, st)) / (2.0 * step);
    }
  }
  H /= static_cast<double>(config.se_samples);
  const Eigen::MatrixXd info = -0.5 * (H + H.transpose());
  const Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(
        "standard_errors: averaged Hessian is not negative definite; increase se_samples or check "
        "for a flat direction in the hyperparameters");
  }
  const Eigen::VectorXd sd =
      llt.solve(Eigen::MatrixXd::Identity(P, P)).diagonal().cwiseMax(0.0).cwiseSqrt();

  StandardErrors se;
  Hyperparams packed = Hyperparams::zeros(spec.K, spec.M, hyper.x_cols(), hyper.d_cols());
  lay.unpack_edge(sd.head(pe), packed);
  lay.unpack_beta(sd.tail(pb), packed);
  se.B = packed.B;
  se.gamma = packed.gamma;
  se.beta = packed.beta;
  return se;
}

}  // namespace dynmmsbm
