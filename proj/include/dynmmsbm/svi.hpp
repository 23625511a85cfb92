#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dynmmsbm/init.hpp"
#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"
#include "dynmmsbm/vem.hpp"

namespace dynmmsbm {

struct SviConfig {
  int batch_nodes = 20;      // nodes per period per step; 0 samples every node
  double tau = 1.0;          // step-size delay
  double p_exp = 0.75;       // forgetting exponent
  double holdout_frac = 0.01;
  double tol_holdout = 1e-3; // stop when the mean held-out loglik changes by less
  int patience = 20;         // steps without a new best held-out loglik
  int max_steps = 500;
  std::uint64_t seed = 0;
  /// Overrides the Robbins-Monro schedule with a constant step (testing).
  std::optional<double> constant_rho;
  int inner_mstep_iters = 50;
  int lbfgs_memory = 10;
  /// Called after every step with (step, trace value).
  std::function<void(int, double)> on_step;

  void validate() const;
};

/// rho_s = (tau + s)^(-p).
double robbins_monro_rate(int s, double tau, double p_exp);

/// Probability that a fixed dyad of a period with n nodes touches at least
/// one of b nodes drawn without replacement: 1 - (n-b)(n-b-1) / (n(n-1)).
double dyad_inclusion_probability(int n, int b);

struct Minibatch {
  std::vector<std::vector<int>> nodes;  // sampled node-period rows per period
  std::vector<int> dyads;               // ascending
  std::vector<double> weights;          // inverse inclusion probability per dyad
  bool full = false;                    // every dyad included with probability one
};

/// Uniform node sample per period and every dyad touching a sampled node.
Minibatch sample_minibatch(const DynamicNetwork& net, int batch_nodes, std::mt19937_64& rng);

/// Dyads reserved for held-out scoring. `train` keeps the node-period layout
/// of the original network; `dyads` index the original network.
struct Holdout {
  DynamicNetwork train;
  std::vector<int> dyads;
};

Holdout draw_holdout(const DynamicNetwork& net, double frac, std::uint64_t seed);

/// Minibatch estimate of the expected counts from freshly updated local
/// parameters. Each node-period scales the mean of its sampled incident
/// contributions to its interaction count; node-periods without sampled
/// dyads keep their column of `C`.
Eigen::MatrixXd estimate_counts(const DynamicNetwork& net, const VariationalParams& vp,
                                const Eigen::MatrixXd& C, const Minibatch& batch);

struct SviState {
  VariationalParams vparams;
  GlobalStats stats;
  Hyperparams hyper;
};

/// Local updates on the minibatch, weighted averages of C and U, a kappa
/// sweep and a step of the hyperparameters toward the maximizer of the
/// reweighted objective.
void svi_step(const DynamicNetwork& net, const ModelSpec& spec, SviState& state, const Minibatch& batch,
              double rho, const SviConfig& config);

/// Mean log-likelihood of the listed dyads of `net` under membership-mixed
/// edge probabilities sum_gh pi_pg pi_qh theta_gh.
double heldout_loglik(const DynamicNetwork& net, const std::vector<int>& dyads, const Eigen::MatrixXd& pi_hat,
                      const Hyperparams& hyper);

/// Stochastic fit on the training part of `holdout`, scoring the held-out
/// dyads of `net` after every step.
FittedModel fit_svi(const DynamicNetwork& net, const Holdout& holdout, const ModelSpec& spec,
                    const InitialState& init, const SviConfig& config);

/// Draws the holdout, initializes on the remaining dyads and fits.
FittedModel fit_svi(const DynamicNetwork& net, const ModelSpec& spec, const SviConfig& config,
                    const InitConfig& init_config, std::vector<std::string>* warnings = nullptr);

}  // namespace dynmmsbm
