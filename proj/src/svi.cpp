#include "dynmmsbm/svi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dynmmsbm {

void SviConfig::validate() const {
  if (batch_nodes < 0) throw std::invalid_argument("batch_nodes must be >= 0");
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  if (!(p_exp > 0.5 && p_exp <= 1.0)) throw std::invalid_argument("p_exp must lie in (0.5, 1]");
  if (!(holdout_frac >= 0.0 && holdout_frac < 0.5)) throw std::invalid_argument("holdout_frac must lie in [0, 0.5)");
  if (!(tol_holdout >= 0.0)) throw std::invalid_argument("tol_holdout must be >= 0");
  if (patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (constant_rho && !(*constant_rho > 0.0 && *constant_rho <= 1.0)) {
    throw std::invalid_argument("constant_rho must lie in (0, 1]");
  }
  if (inner_mstep_iters < 1 || lbfgs_memory < 1) throw std::invalid_argument("M-step settings must be >= 1");
}

double robbins_monro_rate(int s, double tau, double p_exp) {
  return std::pow(tau + static_cast<double>(s), -p_exp);
}

double dyad_inclusion_probability(int n, int b) {
  if (n < 2 || b >= n) return 1.0;
  if (b <= 0) return 0.0;
  const double miss = (static_cast<double>(n - b) * (n - b - 1)) / (static_cast<double>(n) * (n - 1));
  return 1.0 - miss;
}

Minibatch sample_minibatch(const DynamicNetwork& net, int batch_nodes, std::mt19937_64& rng) {
  const int T = net.num_periods();
  if (batch_nodes < 0) throw std::invalid_argument("sample_minibatch: batch_nodes must be >= 0");
  if (batch_nodes > 0) {
    for (int t = 0; t < T; ++t) {
      if (batch_nodes > net.nodes_in_period(t)) {
        throw std::invalid_argument("sample_minibatch: batch_nodes exceeds the nodes present in period '" +
                                    net.period_labels()[t] + "'");
      }
    }
  }
  Minibatch mb;
  mb.nodes.resize(T);
  mb.full = true;
  std::vector<char> picked(net.num_node_periods(), 0);
  std::vector<double> period_weight(T, 1.0);
  for (int t = 0; t < T; ++t) {
    const int n = net.nodes_in_period(t);
    const int b = batch_nodes == 0 ? n : batch_nodes;
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), net.np_begin(t));
    // Partial Fisher-Yates.
    for (int i = 0; i < b && i < n - 1; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(b);
    std::sort(rows.begin(), rows.end());
    for (int r : rows) picked[r] = 1;
    mb.nodes[t] = std::move(rows);
    const double pr = dyad_inclusion_probability(n, b);
    if (pr < 1.0) mb.full = false;
    period_weight[t] = 1.0 / pr;
  }
  const auto& dyads = net.dyads();
  for (int d = 0; d < net.num_dyads(); ++d) {
    if (picked[dyads[d].sender] || picked[dyads[d].receiver]) {
      mb.dyads.push_back(d);
      mb.weights.push_back(period_weight[dyads[d].period]);
    }
  }
  if (mb.dyads.empty()) throw StructureError("sample_minibatch: the sampled nodes touch no dyads");
  return mb;
}

Holdout draw_holdout(const DynamicNetwork& net, double frac, std::uint64_t seed) {
  if (!(frac >= 0.0 && frac < 0.5)) throw std::invalid_argument("draw_holdout: frac must lie in [0, 0.5)");
  const int D = net.num_dyads();
  const int h = static_cast<int>(std::llround(frac * D));
  std::vector<int> idx(D);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < h; ++i) {
    std::uniform_int_distribution<int> pick(i, D - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(h);
  std::sort(idx.begin(), idx.end());
  std::vector<bool> drop(D, false);
  for (int d : idx) drop[d] = true;
  Holdout out{h > 0 ? net.without_dyads(drop) : net, std::move(idx)};
  return out;
}

Eigen::MatrixXd estimate_counts(const DynamicNetwork& net, const VariationalParams& vp, const Eigen::MatrixXd& C,
                                const Minibatch& batch) {
  if (batch.full) {
    return expected_stats(net, vp).C;
  }
  std::vector<char> in_batch(net.num_dyads(), 0);
  for (int d : batch.dyads) in_batch[d] = 1;
  const auto& dyads = net.dyads();
  Eigen::MatrixXd out = C;
  Eigen::VectorXd acc(C.rows());
  for (int np = 0; np < net.num_node_periods(); ++np) {
    const auto inc = net.incident_dyads(np);
    acc.setZero();
    int used = 0;
    for (int d : inc) {
      if (!in_batch[d]) continue;
      if (dyads[d].sender == np) acc += vp.phi.col(d);
      if (dyads[d].receiver == np) acc += vp.psi.col(d);
      ++used;
    }
    if (used == 0) continue;
    out.col(np) = acc * (static_cast<double>(inc.size()) / used);
  }
  return out;
}

namespace {

Hyperparams blend(const Hyperparams& a, const Hyperparams& b, double rho) {
  if (rho == 1.0) return b;
  Hyperparams h = a;
  h.B = (1.0 - rho) * a.B + rho * b.B;
  h.gamma = (1.0 - rho) * a.gamma + rho * b.gamma;
  for (std::size_t m = 0; m < h.beta.size(); ++m) h.beta[m] = (1.0 - rho) * a.beta[m] + rho * b.beta[m];
  return h;
}

bool all_finite(const Hyperparams& h) {
  if (!h.B.allFinite() || !h.gamma.allFinite()) return false;
  for (const auto& b : h.beta) {
    if (!b.allFinite()) return false;
  }
  return true;
}

}  // namespace

void svi_step(const DynamicNetwork& net, const ModelSpec& spec, SviState& state, const Minibatch& batch, double rho,
              const SviConfig& config) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("svi_step: rho must lie in (0, 1]");
  const AlphaTable alpha(net, state.hyper);
  auto& vp = state.vparams;
  auto& st = state.stats;

  // Local parameters on the minibatch against the current global counts.
  if (batch.full) {
    update_local(net, alpha, edge_loglik_table(net, state.hyper), st.C, {}, vp);
  } else {
    update_local(net, alpha, edge_loglik_rows(net, state.hyper, batch.dyads), st.C, batch.dyads, vp);
  }

  const Eigen::MatrixXd C_hat = estimate_counts(net, vp, st.C, batch);
  if (rho == 1.0) {
    st.C = C_hat;
  } else {
    st.C = (1.0 - rho) * st.C + rho * C_hat;
  }
  st.n_inter = net.n_inter();

  update_states(net, spec, alpha, st.C, vp.kappa);
  const Eigen::MatrixXd U_hat = expected_transitions(vp.kappa);
  st.U = rho == 1.0 ? U_hat : Eigen::MatrixXd((1.0 - rho) * st.U + rho * U_hat);

  VemConfig vc;
  vc.inner_mstep_iters = config.inner_mstep_iters;
  vc.lbfgs_memory = config.lbfgs_memory;
  DyadSelection sel;
  if (!batch.full) sel = {batch.dyads, batch.weights};

  double step = rho;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      const MStepResult ms = m_step(net, vp, st, state.hyper, spec, vc, {}, sel);
      const Hyperparams next = blend(state.hyper, ms.hyper, step);
      if (all_finite(next)) {
        state.hyper = next;
        return;
      }
    } catch (const NumericalError&) {
    }
    step *= 0.5;
  }
  throw NumericalError("svi_step: non-finite hyperparameter update after a halved retry");
}

double heldout_loglik(const DynamicNetwork& net, const std::vector<int>& dyads, const Eigen::MatrixXd& pi_hat,
                      const Hyperparams& hyper) {
  if (dyads.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto K = hyper.B.rows();
  double total = 0.0;
  for (int d : dyads) {
    const Dyad& dy = net.dyads()[d];
    const double lin = hyper.gamma.size() > 0 ? net.D().row(d).dot(hyper.gamma) : 0.0;
    double p = 0.0;
    for (Eigen::Index g = 0; g < K; ++g) {
      for (Eigen::Index h = 0; h < K; ++h) {
        p += pi_hat(g, dy.sender) * pi_hat(h, dy.receiver) * edge_prob(hyper.B(g, h), lin);
      }
    }
    total += bernoulli_loglik(dy.y, std::clamp(p, kThetaClamp, 1.0 - kThetaClamp));
  }
  return total / static_cast<double>(dyads.size());
}

FittedModel fit_svi(const DynamicNetwork& net, const Holdout& holdout, const ModelSpec& spec,
                    const InitialState& init, const SviConfig& config) {
  spec.validate();
  config.validate();
  const DynamicNetwork& train = holdout.train;
  validate_initial_state(train, spec, init);
  if (train.num_node_periods() != net.num_node_periods()) {
    throw StructureError("fit_svi: training network does not share the node-period layout");
  }

  FittedModel fm;
  fm.spec = spec;
  fm.engine = "svi";
  fm.holdout = holdout.dyads;
  SviState state{init.vparams, expected_stats(train, init.vparams), init.hyper};
  std::mt19937_64 rng(config.seed ^ 0x5851f42d4c957f2dULL);

  double best = -std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::quiet_NaN();
  int since_best = 0;
  fm.stop_reason = "max_steps";
  for (int s = 1; s <= config.max_steps; ++s) {
    const double rho = config.constant_rho ? *config.constant_rho : robbins_monro_rate(s, config.tau, config.p_exp);
    const Minibatch batch = sample_minibatch(train, config.batch_nodes, rng);
    const Hyperparams before = state.hyper;
    svi_step(train, spec, state, batch, rho, config);
    fm.iters = s;
    if (holdout.dyads.empty()) {
      // Without held-out dyads the trace records the hyperparameter change.
      fm.trace.push_back(before.max_abs_diff(state.hyper));
      if (config.on_step) config.on_step(s, fm.trace.back());
      continue;
    }
    const Eigen::MatrixXd pi = posterior_memberships(train, state.vparams.kappa, state.stats, state.hyper, spec);
    const double ll = heldout_loglik(net, holdout.dyads, pi, state.hyper);
    fm.trace.push_back(ll);
    if (config.on_step) config.on_step(s, ll);
    if (ll > best) {
      best = ll;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (s > 1 && std::abs(ll - prev) < config.tol_holdout) {
      fm.stop_reason = "tolerance";
      break;
    }
    if (since_best > config.patience) {
      fm.stop_reason = "patience";
      break;
    }
    prev = ll;
  }
  fm.converged = fm.stop_reason != "max_steps";
  fm.hyper = state.hyper;
  fm.vparams = std::move(state.vparams);
  fm.stats = std::move(state.stats);
  finalize_model(train, fm);
  if (!holdout.dyads.empty()) fm.heldout_loglik = heldout_loglik(net, holdout.dyads, fm.pi_hat, fm.hyper);
  return fm;
}

FittedModel fit_svi(const DynamicNetwork& net, const ModelSpec& spec, const SviConfig& config,
                    const InitConfig& init_config, std::vector<std::string>* warnings) {
  config.validate();
  const Holdout holdout = draw_holdout(net, config.holdout_frac, config.seed);
  std::vector<std::string> w;
  const InitialState init = initialize(holdout.train, spec, init_config, &w);
  FittedModel fm = fit_svi(net, holdout, spec, init, config);
  fm.warnings.insert(fm.warnings.begin(), w.begin(), w.end());
  if (warnings) warnings->insert(warnings->end(), w.begin(), w.end());
  return fm;
}

}  // namespace dynmmsbm
