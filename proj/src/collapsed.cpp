#include "dynmmsbm/collapsed.hpp"

#include <cmath>
#include <string>

namespace dynmmsbm {

namespace {

void check_latent(const LatentState& latent, const DynamicNetwork& net, const ModelSpec& spec) {
  if (static_cast<int>(latent.s.size()) != net.num_periods()) {
    throw StructureError("latent state needs exactly one s per period");
  }
  if (static_cast<int>(latent.z.size()) != net.num_dyads() ||
      static_cast<int>(latent.w.size()) != net.num_dyads()) {
    throw StructureError("latent state needs one z and one w per modeled dyad");
  }
  for (int s : latent.s) {
    if (s < 0 || s >= spec.M) throw StructureError("state index out of range");
  }
  for (int d = 0; d < net.num_dyads(); ++d) {
    if (latent.z[d] < 0 || latent.z[d] >= spec.K || latent.w[d] < 0 || latent.w[d] >= spec.K) {
      throw StructureError("group indicator out of range at dyad " + std::to_string(d));
    }
  }
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + term + " term");
}

}  // namespace

GlobalStats compute_stats(const LatentState& latent, const DynamicNetwork& net, const ModelSpec& spec) {
  check_latent(latent, net, spec);
  GlobalStats stats;
  stats.C = Eigen::MatrixXd::Zero(spec.K, net.num_node_periods());
  stats.U = Eigen::MatrixXd::Zero(spec.M, spec.M);
  stats.n_inter = net.n_inter();
  const auto& dyads = net.dyads();
  for (int d = 0; d < net.num_dyads(); ++d) {
    stats.C(latent.z[d], dyads[d].sender) += 1.0;
    stats.C(latent.w[d], dyads[d].receiver) += 1.0;
  }
  for (int t = 1; t < net.num_periods(); ++t) stats.U(latent.s[t - 1], latent.s[t]) += 1.0;
  return stats;
}

double transition_log_term(const Eigen::MatrixXd& U, double eta) {
  const auto M = static_cast<double>(U.rows());
  double out = -std::log(M);
  for (Eigen::Index m = 0; m < U.rows(); ++m) {
    out += std::lgamma(M * eta) - std::lgamma(M * eta + U.row(m).sum());
    for (Eigen::Index n = 0; n < U.cols(); ++n) {
      out += std::lgamma(eta + U(m, n)) - std::lgamma(eta);
    }
  }
  return out;
}

CollapsedTerms collapsed_terms(const DynamicNetwork& net, const LatentState& latent,
                               const Hyperparams& hyper, const ModelSpec& spec) {
  spec.validate();
  const GlobalStats stats = compute_stats(latent, net, spec);
  const AlphaTable alpha(net, hyper);

  CollapsedTerms terms;
  terms.transition = transition_log_term(stats.U, spec.eta);
  require_finite(terms.transition, "transition");

  for (int np = 0; np < net.num_node_periods(); ++np) {
    const int m = latent.s[net.node_periods()[np].period];
    const double xi = alpha.xi(m, np);
    double v = std::lgamma(xi) - std::lgamma(xi + membership_total(net, spec, np));
    for (int k = 0; k < spec.K; ++k) {
      const double a = alpha(m, k, np);
      v += std::lgamma(a + stats.C(k, np)) - std::lgamma(a);
    }
    terms.membership += v;
  }
  require_finite(terms.membership, "membership");

  const Eigen::VectorXd lin = dyad_linear_predictor(net, hyper.gamma);
  const auto& dyads = net.dyads();
  for (int d = 0; d < net.num_dyads(); ++d) {
    const double theta = edge_prob(hyper.B(latent.z[d], latent.w[d]), lin[d]);
    terms.edges += bernoulli_loglik(dyads[d].y, theta);
  }
  require_finite(terms.edges, "edge");
  return terms;
}

double log_collapsed_posterior(const DynamicNetwork& net, const LatentState& latent,
                               const Hyperparams& hyper, const ModelSpec& spec) {
  return collapsed_terms(net, latent, hyper, spec).total();
}

}  // namespace dynmmsbm
