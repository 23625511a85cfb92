#pragma once

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"
#include "dynmmsbm/vem.hpp"

namespace testing_support {

using namespace dynmmsbm;

struct RandomNetOptions {
  int N = 4;
  int T = 2;
  bool directed = true;
  int x_cols = 2;          // includes the intercept column
  int d_cols = 1;
  double density = 0.4;
  double keep_dyad = 1.0;  // probability that a pair is modeled at all
  bool drop_last_node_in_last_period = false;
};

DynamicNetwork random_network(std::mt19937_64& rng, const RandomNetOptions& opt);

Hyperparams random_hyper(std::mt19937_64& rng, const ModelSpec& spec, int x_cols, int d_cols,
                         double scale = 0.7);

VariationalParams random_vparams(std::mt19937_64& rng, const DynamicNetwork& net, int K, int M);

/// Sum over every latent configuration of the un-marginalized joint, with
/// the Dirichlet memberships and transition rows integrated by sequential
/// Polya-urn products (no Gamma functions involved).
double polya_marginal(const DynamicNetwork& net, const Hyperparams& hyper, const ModelSpec& spec);

/// Sum over every latent configuration of exp(log_collapsed_posterior).
double collapsed_marginal(const DynamicNetwork& net, const Hyperparams& hyper, const ModelSpec& spec);

/// Calls f once per latent configuration.
void for_each_latent(const DynamicNetwork& net, int K, int M, const std::function<void(const LatentState&)>& f);

/// Newton-Raphson fit of a penalized logistic regression with Normal(mean,
/// sd) priors; returns coefficients and, through `se`, sqrt(diag(H^-1)).
Eigen::VectorXd logistic_irls(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double prior_sd,
                              Eigen::VectorXd* se = nullptr);

/// Relative error |a - b| / max(|a|, |b|, floor).
double rel_err(double a, double b, double floor = 1e-8);

}  // namespace testing_support
