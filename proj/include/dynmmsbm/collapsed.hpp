#pragma once

#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"

namespace dynmmsbm {

/// Exact integer sufficient statistics for a latent configuration.
GlobalStats compute_stats(const LatentState& latent, const DynamicNetwork& net, const ModelSpec& spec);

/// Additive pieces of the log collapsed joint.
struct CollapsedTerms {
  double transition = 0.0;  // Gamma-ratio transition term plus log P(s_1)
  double membership = 0.0;  // Dirichlet-multinomial term per node-period
  double edges = 0.0;       // Bernoulli edge term

  double total() const { return transition + membership + edges; }
};

/// log P(Y, L | beta, gamma, B, X) with the membership vectors and the
/// transition matrix integrated out. All Gamma ratios are taken in log space.
CollapsedTerms collapsed_terms(const DynamicNetwork& net, const LatentState& latent,
                               const Hyperparams& hyper, const ModelSpec& spec);

double log_collapsed_posterior(const DynamicNetwork& net, const LatentState& latent,
                               const Hyperparams& hyper, const ModelSpec& spec);

/// Transition term for (possibly fractional) counts U:
/// sum_m [lgamma(M eta) - lgamma(M eta + U_m.) + sum_n lgamma(eta + U_mn) - lgamma(eta)] - log M.
double transition_log_term(const Eigen::MatrixXd& U, double eta);

}  // namespace dynmmsbm
