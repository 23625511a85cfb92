#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"

namespace dynmmsbm {

struct VemConfig {
  double tol_hyper = 1e-4;
  int max_iter = 200;
  int inner_mstep_iters = 50;
  int lbfgs_memory = 10;
  std::uint64_t seed = 0;
  int se_samples = 100;
  /// Compute sampled-Hessian standard errors after convergence.
  bool compute_se = false;
  /// Backtrack an E-step toward the previous variational parameters whenever
  /// the collapsed updates would lower the objective.
  bool monotone_estep = true;
  /// Called after every EM iteration with (iteration, penalized objective).
  std::function<void(int, double)> on_iteration;

  void validate() const;
};

/// Which hyperparameter blocks the M-step may move.
struct FreeParams {
  bool B = true;
  bool gamma = true;
  bool beta = true;
};

struct StandardErrors {
  Eigen::MatrixXd B;
  std::vector<Eigen::MatrixXd> beta;
  Eigen::VectorXd gamma;
};

struct FittedModel {
  ModelSpec spec;
  Hyperparams hyper;
  VariationalParams vparams;
  GlobalStats stats;
  double lower_bound = 0.0;        // variational bound on the collapsed joint
  double objective = 0.0;          // bound plus log prior of the hyperparameters
  Eigen::MatrixXd trans_hat;       // M x M, rows on the simplex
  Eigen::MatrixXd pi_hat;          // K x node-periods
  std::optional<StandardErrors> se;
  int iters = 0;
  bool converged = false;
  std::string engine = "vem";
  std::string stop_reason;
  std::vector<double> trace;       // objective per iteration (vem) or held-out loglik (svi)
  std::vector<std::string> warnings;
  std::vector<int> holdout;        // dyads of the input network left out of the fit (svi)
  double heldout_loglik = std::numeric_limits<double>::quiet_NaN();
};

/// Dyads entering the edge part of the hyperparameter objective with their
/// weights. An empty selection means every dyad with weight one.
struct DyadSelection {
  std::vector<int> dyads;
  std::vector<double> weights;
  bool empty() const { return dyads.empty(); }
};

// ---------------------------------------------------------------------------
// Expected sufficient statistics

/// Expected transition counts under the mean-field factorization:
/// E U_mn = sum_t kappa_{t,m} kappa_{t+1,n}.
Eigen::MatrixXd expected_transitions(const Eigen::MatrixXd& kappa);

/// Expected C (sum of phi / psi over incident dyads) and expected U.
GlobalStats expected_stats(const DynamicNetwork& net, const VariationalParams& vp);

// ---------------------------------------------------------------------------
// Local updates

/// Collapsed zeroth-order update of the sender distribution of one dyad.
/// `C` holds the current expected counts; the dyad's own contribution
/// `phi_old` is removed before use.
Eigen::VectorXd update_phi(const DynamicNetwork& net, int dyad, const Eigen::VectorXd& phi_old,
                           const Eigen::VectorXd& psi, const Eigen::MatrixXd& kappa,
                           const Eigen::MatrixXd& C, const AlphaTable& alpha,
                           const Eigen::MatrixXd& B, double lin);

/// Receiver counterpart of update_phi (B column instead of row).
Eigen::VectorXd update_psi(const DynamicNetwork& net, int dyad, const Eigen::VectorXd& psi_old,
                           const Eigen::VectorXd& phi, const Eigen::MatrixXd& kappa,
                           const Eigen::MatrixXd& C, const AlphaTable& alpha,
                           const Eigen::MatrixXd& B, double lin);

/// Per (state, period) membership log terms under the zeroth-order
/// approximation: sum over present nodes of
/// lgamma(xi) - lgamma(xi + n) + sum_k lgamma(alpha_k + C_k) - lgamma(alpha_k).
Eigen::MatrixXd membership_log_terms(const DynamicNetwork& net, const Eigen::MatrixXd& C,
                                     const AlphaTable& alpha, const ModelSpec& spec);

/// Update of kappa_t given the other periods. Expected transition counts
/// with period t's own transitions removed are formed from `kappa`.
Eigen::VectorXd update_kappa(int t, const Eigen::MatrixXd& kappa, const Eigen::MatrixXd& membership,
                             double eta);

/// Log-likelihood of every dyad under every block pair: num_dyads x K^2,
/// column g * K + h.
Eigen::MatrixXd edge_loglik_table(const DynamicNetwork& net, const Hyperparams& hyper);

/// Rows of edge_loglik_table for the listed dyads only, in list order.
Eigen::MatrixXd edge_loglik_rows(const DynamicNetwork& net, const Hyperparams& hyper,
                                 const std::vector<int>& dyads);

/// Collapsed phi/psi updates for the listed dyads (every dyad when the list
/// is empty) against the counts C. psi uses the new phi of its own dyad.
/// Row i of `loglik` belongs to dyads[i], or to dyad i for an empty list.
/// Results overwrite the corresponding columns of vp.
void update_local(const DynamicNetwork& net, const AlphaTable& alpha, const Eigen::MatrixXd& loglik,
                  const Eigen::MatrixXd& C, const std::vector<int>& dyads, VariationalParams& vp);

/// kappa updates for t = 1..T in order, given counts C.
void update_states(const DynamicNetwork& net, const ModelSpec& spec, const AlphaTable& alpha,
                   const Eigen::MatrixXd& C, Eigen::MatrixXd& kappa);

/// One E-step sweep: every phi/psi against a frozen snapshot of C (psi sees
/// the freshly updated phi of its own dyad), refresh C, then kappa for
/// t = 1..T in order.
void estep_sweep(const DynamicNetwork& net, const ModelSpec& spec, const Hyperparams& hyper,
                 VariationalParams& vp, GlobalStats& stats);

struct EStepReport {
  double before = 0.0;
  double after = 0.0;
  double step = 1.0;  // fraction of the sweep that was kept
};

/// E-step sweep, optionally backtracked so that elbo does not decrease.
/// `loglik` may pass a precomputed edge_loglik_table for `hyper`.
EStepReport estep(const DynamicNetwork& net, const ModelSpec& spec, const Hyperparams& hyper,
                  VariationalParams& vp, GlobalStats& stats, bool monotone = true,
                  const Eigen::MatrixXd* loglik = nullptr);

// ---------------------------------------------------------------------------
// Objective and gradients

struct ElboTerms {
  double transition = 0.0;
  double membership = 0.0;
  double edges = 0.0;
  double entropy = 0.0;
  double prior = 0.0;

  double bound() const { return transition + membership + edges + entropy; }
  double penalized() const { return bound() + prior; }
};

/// `loglik` may pass a precomputed edge_loglik_table for `hyper`.
ElboTerms elbo_terms(const DynamicNetwork& net, const VariationalParams& vp, const GlobalStats& stats,
                     const Hyperparams& hyper, const ModelSpec& spec,
                     const Eigen::MatrixXd* loglik = nullptr);

/// E_Q[log collapsed joint] - E_Q[log Q] with zeroth-order expectations.
double elbo(const DynamicNetwork& net, const VariationalParams& vp, const GlobalStats& stats,
            const Hyperparams& hyper, const ModelSpec& spec);

/// elbo plus the Normal log prior of the hyperparameters; the quantity the
/// EM iterations ascend.
double penalized_elbo(const DynamicNetwork& net, const VariationalParams& vp,
                      const GlobalStats& stats, const Hyperparams& hyper, const ModelSpec& spec);

/// Normal log prior (without normalizing constants). Undirected blockmodels
/// count each off-diagonal pair once.
double log_prior(const Hyperparams& hyper, const ModelSpec& spec);

/// d penalized_elbo / d B. For undirected networks the (g,h) and (h,g)
/// entries both hold the derivative for the shared parameter.
Eigen::MatrixXd grad_B(const DynamicNetwork& net, const VariationalParams& vp,
                       const Hyperparams& hyper, const ModelSpec& spec);
Eigen::VectorXd grad_gamma(const DynamicNetwork& net, const VariationalParams& vp,
                           const Hyperparams& hyper, const ModelSpec& spec);
/// d penalized_elbo / d beta; the reference-group row of each slice is zero.
std::vector<Eigen::MatrixXd> grad_beta(const DynamicNetwork& net, const VariationalParams& vp,
                                       const GlobalStats& stats, const Hyperparams& hyper,
                                       const ModelSpec& spec);

// ---------------------------------------------------------------------------
// M-step

struct MStepResult {
  Hyperparams hyper;
  bool line_search_failed = false;
  int iterations = 0;
};

/// Quasi-Newton ascent of the penalized objective in (B, gamma) and beta
/// with the variational parameters held fixed. `selection` reweights the
/// edge term (used by stochastic inference).
MStepResult m_step(const DynamicNetwork& net, const VariationalParams& vp, const GlobalStats& stats,
                   const Hyperparams& hyper0, const ModelSpec& spec, const VemConfig& config,
                   const FreeParams& free = {}, const DyadSelection& selection = {});

/// Membership part of the penalized objective (kappa-weighted Dirichlet-
/// multinomial terms plus the beta prior) and its gradient in beta.
double membership_objective(const DynamicNetwork& net, const Eigen::MatrixXd& kappa,
                            const Eigen::MatrixXd& C, const Hyperparams& hyper, const ModelSpec& spec,
                            std::vector<Eigen::MatrixXd>* grad_beta_out);

/// Edge part of the penalized objective (weighted edge log-likelihood plus
/// B and gamma priors), optionally with its gradient in the packed layout
/// used by m_step.
double edge_objective(const DynamicNetwork& net, const VariationalParams& vp, const Hyperparams& hyper,
                      const ModelSpec& spec, const DyadSelection& selection,
                      Eigen::MatrixXd* grad_B_out, Eigen::VectorXd* grad_gamma_out);

// ---------------------------------------------------------------------------
// Driver and summaries

/// Shape and simplex checks of starting values against a network and spec.
void validate_initial_state(const DynamicNetwork& net, const ModelSpec& spec, const InitialState& init);

FittedModel fit_vem(const DynamicNetwork& net, const ModelSpec& spec, const InitialState& init,
                    const VemConfig& config);

/// Posterior-mean memberships sum_m kappa_tm (alpha + C) / (xi + n).
Eigen::MatrixXd posterior_memberships(const DynamicNetwork& net, const Eigen::MatrixXd& kappa,
                                      const GlobalStats& stats, const Hyperparams& hyper,
                                      const ModelSpec& spec);

/// Posterior-mean transition matrix (eta + U_mn) / (M eta + U_m.).
Eigen::MatrixXd transition_estimate(const GlobalStats& stats, const ModelSpec& spec);

/// Fills derived summaries (pi_hat, trans_hat, bound, objective) of a model
/// from its variational parameters and statistics.
void finalize_model(const DynamicNetwork& net, FittedModel& model);

/// Sampled-Hessian standard errors: average the Hessian of the log collapsed
/// posterior over latent draws from Q, invert the negated average.
StandardErrors standard_errors(const FittedModel& fitted, const DynamicNetwork& net,
                               const VemConfig& config);

/// Flattening of the free hyperparameters (B cells, gamma, beta) used by the
/// optimizers and the standard-error routine.
struct ParamLayout {
  int K = 0, M = 0, x_cols = 0, d_cols = 0;
  bool directed = true;
  FreeParams free;

  ParamLayout(const Hyperparams& h, bool directed, FreeParams free = {});
  int edge_size() const;
  int beta_size() const;
  Eigen::VectorXd pack_edge(const Hyperparams& h) const;
  void unpack_edge(const Eigen::VectorXd& v, Hyperparams& h) const;
  Eigen::VectorXd pack_beta(const Hyperparams& h) const;
  void unpack_beta(const Eigen::VectorXd& v, Hyperparams& h) const;
  Eigen::VectorXd pack_edge_grad(const Eigen::MatrixXd& gB, const Eigen::VectorXd& gg) const;
  Eigen::VectorXd pack_beta_grad(const std::vector<Eigen::MatrixXd>& gb) const;
};

}  // namespace dynmmsbm
