#include "dynmmsbm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dynmmsbm/parallel.hpp"

namespace dynmmsbm {

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
  return out.empty() ? "(none)" : out;
}

void check_fit(const FittedModel& fit, const DynamicNetwork& net) {
  if (fit.hyper.x_cols() != net.x_cols() || fit.hyper.d_cols() != net.d_cols() ||
      fit.stats.C.cols() != net.num_node_periods() || fit.vparams.kappa.cols() != net.num_periods()) {
    throw StructureError("fitted model does not match the network (covariates, node-periods or periods differ)");
  }
}

template <typename A, typename B>
double mixture(const Eigen::MatrixBase<A>& pa, const Eigen::MatrixBase<B>& pb, const Eigen::MatrixXd& Bm,
               double lin) {
  const int K = static_cast<int>(Bm.rows());
  double p = 0.0;
  for (int g = 0; g < K; ++g) {
    double row = 0.0;
    for (int h = 0; h < K; ++h) row += pb(h) * edge_prob(Bm(g, h), lin);
    p += pa(g) * row;
  }
  return p;
}

int find_dyad(const DynamicNetwork& net, int node_a, int node_b, int t) {
  const int ra = net.node_period(node_a, t), rb = net.node_period(node_b, t);
  if (ra < 0 || rb < 0) return -1;
  for (int i = net.dyad_begin(t); i < net.dyad_end(t); ++i) {
    const Dyad& d = net.dyads()[i];
    if ((d.sender == ra && d.receiver == rb) || (!net.directed() && d.sender == rb && d.receiver == ra)) return i;
  }
  return -1;
}

int column_of(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

}  // namespace

Eigen::VectorXd node_membership(const FittedModel& fit, int np, int t, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                MembershipSource source) {
  if (x.size() != fit.hyper.x_cols()) {
    throw StructureError("membership covariates have " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(fit.hyper.x_cols()));
  }
  const bool counts = source == MembershipSource::Posterior && np >= 0;
  const double n = counts ? fit.stats.C.col(np).sum() : 0.0;
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(fit.spec.K);
  for (int m = 0; m < fit.spec.M; ++m) {
    const Eigen::VectorXd a = alpha(x, fit.hyper.beta[m]);
    const double xi = a.sum();
    if (counts) {
      pi += fit.vparams.kappa(m, t) * (a + fit.stats.C.col(np)) / (xi + n);
    } else {
      pi += fit.vparams.kappa(m, t) * a / xi;
    }
  }
  return pi;
}

Eigen::MatrixXd membership_table(const FittedModel& fit, const DynamicNetwork& net, const Eigen::MatrixXd& X,
                                 MembershipSource source) {
  check_fit(fit, net);
  if (X.rows() != net.num_node_periods() || X.cols() != net.x_cols()) {
    throw StructureError("membership covariates must have one row per node-period");
  }
  Eigen::MatrixXd pi(fit.spec.K, net.num_node_periods());
  detail::parallel_for(net.num_node_periods(), [&](int np) {
    pi.col(np) = node_membership(fit, np, net.node_periods()[np].period, X.row(np), source);
  });
  return pi;
}

double dyad_prob(const FittedModel& fit, const DynamicNetwork& net, int node_a, int node_b, int t,
                 const DyadOverrides& overrides, MembershipSource source) {
  check_fit(fit, net);
  if (t < 0 || t >= net.num_periods()) throw StructureError("dyad_prob: period out of range");
  if (node_a >= net.num_nodes() || node_b >= net.num_nodes()) throw StructureError("dyad_prob: unknown node");
  auto side = [&](int node, const std::optional<Eigen::RowVectorXd>& x, const char* which) {
    const int np = node >= 0 ? net.node_period(node, t) : -1;
    if (x) return node_membership(fit, np, t, *x, source);
    if (np < 0) {
      throw StructureError(std::string("dyad_prob: node ") + which + " is not observed in period '" +
                           net.period_labels()[t] + "'; supply monadic covariates: " + join_names(net.x_names()));
    }
    return node_membership(fit, np, t, net.X().row(np), source);
  };
  const Eigen::VectorXd pa = side(node_a, overrides.x_a, "a");
  const Eigen::VectorXd pb = side(node_b, overrides.x_b, "b");

  double lin = 0.0;
  if (overrides.d) {
    if (overrides.d->size() != net.d_cols()) {
      throw StructureError("dyad_prob: dyadic covariates have " + std::to_string(overrides.d->size()) +
                           " entries, expected " + std::to_string(net.d_cols()));
    }
    lin = net.d_cols() ? overrides.d->dot(fit.hyper.gamma) : 0.0;
  } else if (net.d_cols() > 0) {
    const int i = node_a >= 0 && node_b >= 0 ? find_dyad(net, node_a, node_b, t) : -1;
    if (i < 0) {
      throw StructureError("dyad_prob: pair is not modeled in period '" + net.period_labels()[t] +
                           "'; supply dyadic covariates: " + join_names(net.d_names()));
    }
    lin = net.D().row(i).dot(fit.hyper.gamma);
  }
  return mixture(pa, pb, fit.hyper.B, lin);
}

Eigen::VectorXd dyad_probs(const FittedModel& fit, const DynamicNetwork& net, const Eigen::MatrixXd& pi) {
  check_fit(fit, net);
  const Eigen::VectorXd lin = dyad_linear_predictor(net, fit.hyper.gamma);
  Eigen::VectorXd p(net.num_dyads());
  detail::parallel_for(net.num_dyads(), [&](int i) {
    const Dyad& d = net.dyads()[i];
    p(i) = mixture(pi.col(d.sender), pi.col(d.receiver), fit.hyper.B, lin(i));
  });
  return p;
}

Eigen::VectorXd dyad_probs(const FittedModel& fit, const DynamicNetwork& net, MembershipSource source) {
  return dyad_probs(fit, net, membership_table(fit, net, net.X(), source));
}

// ---------------------------------------------------------------------------

std::vector<EffectEstimate> covariate_effect(const FittedModel& fit, const DynamicNetwork& net,
                                             const CovariateShift& shift, EffectAggregation aggregation,
                                             MembershipSource source) {
  check_fit(fit, net);
  const int c = column_of(net.x_names(), shift.covariate);
  if (c < 0) {
    if (column_of(net.d_names(), shift.covariate) >= 0) {
      throw StructureError("'" + shift.covariate +
                           "' is a dyadic covariate; shift it through dyad_prob overrides instead");
    }
    throw StructureError("unknown monadic covariate '" + shift.covariate + "' (have " + join_names(net.x_names()) +
                         ")");
  }
  if (!std::isfinite(shift.delta)) throw StructureError("covariate shift must be finite");

  Eigen::MatrixXd Xs = net.X();
  std::optional<double> bound = shift.cap;
  if (shift.cap_at_observed && net.num_node_periods() > 0) {
    bound = shift.delta >= 0 ? net.X().col(c).maxCoeff() : net.X().col(c).minCoeff();
  }
  for (int r = 0; r < net.num_node_periods(); ++r) {
    const double x = net.X()(r, c);
    double v = x + shift.delta;
    if (bound) {
      if (shift.delta >= 0) {
        v = x >= *bound ? x : std::min(v, *bound);
      } else {
        v = x <= *bound ? x : std::max(v, *bound);
      }
    }
    Xs(r, c) = v;
  }
  const Eigen::MatrixXd pi_obs = membership_table(fit, net, net.X(), source);
  const Eigen::MatrixXd pi_sh = membership_table(fit, net, Xs, source);
  const Eigen::VectorXd lin = dyad_linear_predictor(net, fit.hyper.gamma);
  const Eigen::VectorXd p_obs = dyad_probs(fit, net, pi_obs);

  std::vector<EffectEstimate> out;
  if (aggregation == EffectAggregation::Overall) {
    const Eigen::VectorXd p_sh = dyad_probs(fit, net, pi_sh);
    const int n = net.num_dyads();
    out.push_back({-1, -1, n ? (p_sh - p_obs).sum() / n : 0.0, n});
    return out;
  }

  // Per node-period: sum of changes over incident dyads with only that
  // node-period shifted.
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(net.num_node_periods());
  detail::parallel_for(net.num_node_periods(), [&](int np) {
    double s = 0.0;
    for (int i : net.incident_dyads(np)) {
      const Dyad& d = net.dyads()[i];
      const double p = d.sender == np ? mixture(pi_sh.col(np), pi_obs.col(d.receiver), fit.hyper.B, lin(i))
                                      : mixture(pi_obs.col(d.sender), pi_sh.col(np), fit.hyper.B, lin(i));
      s += p - p_obs(i);
    }
    sums(np) = s;
  });

  if (aggregation == EffectAggregation::ByNodePeriod) {
    for (int np = 0; np < net.num_node_periods(); ++np) {
      const int n = static_cast<int>(net.incident_dyads(np).size());
      if (n == 0) continue;
      out.push_back({net.node_periods()[np].node, net.node_periods()[np].period, sums(np) / n, n});
    }
    return out;
  }
  std::vector<double> node_sum(net.num_nodes(), 0.0);
  std::vector<int> node_n(net.num_nodes(), 0);
  for (int np = 0; np < net.num_node_periods(); ++np) {
    const int v = net.node_periods()[np].node;
    node_sum[v] += sums(np);
    node_n[v] += static_cast<int>(net.incident_dyads(np).size());
  }
  for (int v = 0; v < net.num_nodes(); ++v) {
    if (node_n[v] > 0) out.push_back({v, -1, node_sum[v] / node_n[v], node_n[v]});
  }
  return out;
}

// ---------------------------------------------------------------------------

Forecast forecast(const FittedModel& fit, const DynamicNetwork& net, const ForecastConfig& config) {
  check_fit(fit, net);
  if (config.horizon < 1) throw StructureError("forecast horizon must be at least 1");
  if (net.num_periods() == 0) throw StructureError("forecast needs at least one observed period");
  const int last = net.num_periods() - 1;
  const int b0 = net.np_begin(last), n_nodes = net.nodes_in_period(last);
  const int d0 = net.dyad_begin(last), n_dyads = net.dyads_in_period(last);
  const int K = fit.spec.K, M = fit.spec.M;
  if (config.peace_column && (*config.peace_column < 0 || *config.peace_column >= net.d_cols())) {
    throw StructureError("forecast: peace column out of range");
  }
  if (config.peace_column && config.draws < 1) throw StructureError("forecast: draws must be at least 1");

  auto step_X = [&](int j) -> Eigen::MatrixXd {
    if (j < static_cast<int>(config.future_X.size())) {
      const Eigen::MatrixXd& X = config.future_X[j];
      if (X.rows() != n_nodes || X.cols() != net.x_cols()) {
        throw StructureError("forecast: monadic covariates for step " + std::to_string(j + 1) + " must be " +
                             std::to_string(n_nodes) + " x " + std::to_string(net.x_cols()));
      }
      return X;
    }
    if (!config.carry_forward) {
      throw StructureError("forecast: no monadic covariates for step " + std::to_string(j + 1) +
                           " (supply them or enable carry-forward)");
    }
    return net.X().middleRows(b0, n_nodes);
  };
  auto step_D = [&](int j) -> Eigen::MatrixXd {
    if (j < static_cast<int>(config.future_D.size())) {
      const Eigen::MatrixXd& D = config.future_D[j];
      if (D.rows() != n_dyads || D.cols() != net.d_cols()) {
        throw StructureError("forecast: dyadic covariates for step " + std::to_string(j + 1) + " must be " +
                             std::to_string(n_dyads) + " x " + std::to_string(net.d_cols()));
      }
      return D;
    }
    if (!config.carry_forward && net.d_cols() > 0) {
      throw StructureError("forecast: no dyadic covariates for step " + std::to_string(j + 1) +
                           " (supply them or enable carry-forward)");
    }
    return net.D().middleRows(d0, n_dyads);
  };

  Forecast out;
  Eigen::RowVectorXd state = fit.vparams.kappa.col(last).transpose();
  std::vector<Eigen::MatrixXd> Ds;
  for (int j = 0; j < config.horizon; ++j) {
    state = state * fit.trans_hat;
    out.state_probs.push_back(state.transpose());
    const Eigen::MatrixXd X = step_X(j);
    Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(K, n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      for (int m = 0; m < M; ++m) {
        const Eigen::VectorXd a = alpha(X.row(i), fit.hyper.beta[m]);
        pi.col(i) += state(m) * a / a.sum();
      }
    }
    out.memberships.push_back(std::move(pi));
    Ds.push_back(step_D(j));
  }

  auto probs_at = [&](int j, const Eigen::MatrixXd& D) {
    Eigen::VectorXd p(n_dyads);
    const Eigen::MatrixXd& pi = out.memberships[j];
    for (int i = 0; i < n_dyads; ++i) {
      const Dyad& d = net.dyads()[d0 + i];
      const double lin = net.d_cols() ? D.row(i).dot(fit.hyper.gamma) : 0.0;
      p(i) = mixture(pi.col(d.sender - b0), pi.col(d.receiver - b0), fit.hyper.B, lin);
    }
    return p;
  };

  if (!config.peace_column) {
    for (int j = 0; j < config.horizon; ++j) out.dyad_probs.push_back(probs_at(j, Ds[j]));
    return out;
  }

  const int pc = *config.peace_column;
  Eigen::VectorXd start(n_dyads);
  for (int i = 0; i < n_dyads; ++i) {
    const bool supplied = !config.future_D.empty();
    start(i) = supplied ? Ds[0](i, pc) : (net.dyads()[d0 + i].y != 0.0 ? 0.0 : net.D()(d0 + i, pc) + 1.0);
  }
  std::vector<Eigen::VectorXd> acc(config.horizon, Eigen::VectorXd::Zero(n_dyads));
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int r = 0; r < config.draws; ++r) {
    Eigen::VectorXd peace = start;
    for (int j = 0; j < config.horizon; ++j) {
      Eigen::MatrixXd D = Ds[j];
      D.col(pc) = peace;
      const Eigen::VectorXd p = probs_at(j, D);
      acc[j] += p;
      for (int i = 0; i < n_dyads; ++i) peace(i) = unif(rng) < p(i) ? 0.0 : peace(i) + 1.0;
    }
  }
  for (auto& a : acc) out.dyad_probs.push_back(a / config.draws);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Midranks (1-based) of the scores.
std::vector<double> midranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = mid;
    i = j + 1;
  }
  return r;
}

void check_scores(const std::vector<double>& scores, const std::vector<int>& labels, int& n1, int& n0) {
  if (scores.size() != labels.size()) throw StructureError("auroc: scores and labels differ in length");
  n1 = n0 = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw StructureError("auroc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw StructureError("auroc: NaN score");
    (labels[i] ? n1 : n0)++;
  }
  if (n1 == 0 || n0 == 0) throw StructureError("auroc: labels must contain both classes");
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

AurocResult auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  int n1, n0;
  check_scores(scores, labels, n1, n0);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  const std::vector<double> r_all = midranks(scores), r_pos = midranks(pos), r_neg = midranks(neg);

  double rank_sum = 0.0;
  std::vector<double> v10, v01;
  std::size_t ip = 0, in = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      rank_sum += r_all[i];
      // Negatives below plus half the tied ones.
      v10.push_back((r_all[i] - r_pos[ip++]) / n0);
    } else {
      // Positives above plus half the tied ones.
      v01.push_back(1.0 - (r_all[i] - r_neg[in++]) / n1);
    }
  }
  AurocResult res;
  res.positives = n1;
  res.negatives = n0;
  res.auc = (rank_sum - 0.5 * n1 * (n1 + 1.0)) / (static_cast<double>(n1) * n0);
  res.sd = std::sqrt(sample_variance(v10) / n1 + sample_variance(v01) / n0);
  return res;
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  int n1, n0;
  check_scores(scores, labels, n1, n0);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> out;
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) (labels[order[i++]] ? tp : fp)++;
    out.push_back({s, static_cast<double>(fp) / n0, static_cast<double>(tp) / n1});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// perm[h] = label of the reference that fresh group h is matched to, from an
// agreement matrix (reference x fresh).
std::vector<int> match_labels(const Eigen::MatrixXd& agreement) {
  return hungarian(-agreement.transpose());
}

}  // namespace

std::vector<FittedModel> online_refit(const DynamicNetwork& net, const ModelSpec& spec, const std::vector<int>& ends,
                                      const VemConfig& config, const InitConfig& init_config,
                                      std::vector<std::string>* warnings) {
  const int T = net.num_periods();
  if (ends.empty()) throw StructureError("online_refit: no windows");
  for (std::size_t w = 0; w < ends.size(); ++w) {
    if (ends[w] < 1 || ends[w] > T || (w > 0 && ends[w] < ends[w - 1])) {
      throw StructureError("online_refit: window ends must be nondecreasing within [1, " + std::to_string(T) + "]");
    }
  }
  if (ends.back() != T) throw StructureError("online_refit: the last window must end at the last period");

  std::vector<FittedModel> fits;
  int prev_end = 0;
  for (int end : ends) {
    const DynamicNetwork sub = net.slice_periods(0, end);
    InitialState init;
    if (fits.empty()) {
      init = initialize(sub, spec, init_config, warnings);
    } else {
      const FittedModel& prev = fits.back();
      const int old_dyads = sub.dyad_begin(prev_end);
      init.hyper = prev.hyper;
      if (end == prev_end) {
        init.vparams = prev.vparams;
      } else {
        const InitialState fresh = initialize(sub, spec, init_config, warnings);
        const int new_dyads = sub.num_dyads() - old_dyads;
        const Eigen::MatrixXd g_agree = prev.vparams.phi * fresh.vparams.phi.leftCols(old_dyads).transpose() +
                                        prev.vparams.psi * fresh.vparams.psi.leftCols(old_dyads).transpose();
        const std::vector<int> gperm = match_labels(g_agree);
        const Eigen::MatrixXd s_agree = prev.vparams.kappa * fresh.vparams.kappa.leftCols(prev_end).transpose();
        const std::vector<int> sperm = match_labels(s_agree);

        init.vparams.phi.resize(spec.K, sub.num_dyads());
        init.vparams.psi.resize(spec.K, sub.num_dyads());
        init.vparams.kappa.resize(spec.M, end);
        init.vparams.phi << prev.vparams.phi, permute_rows(fresh.vparams.phi.rightCols(new_dyads), gperm);
        init.vparams.psi << prev.vparams.psi, permute_rows(fresh.vparams.psi.rightCols(new_dyads), gperm);
        init.vparams.kappa << prev.vparams.kappa, permute_rows(fresh.vparams.kappa.rightCols(end - prev_end), sperm);
      }
    }
    fits.push_back(fit_vem(sub, spec, init, config));
    prev_end = end;
  }
  return fits;
}

}  // namespace dynmmsbm
