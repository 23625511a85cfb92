#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"

namespace dynmmsbm {

/// Parameters of a synthetic dynamic network. Membership coefficients are
/// stored like Hyperparams::beta (one K x J_x slice per state, covariates in
/// columns, intercept first) but the reference row is not forced to zero.
struct DgpPreset {
  std::string name = "custom";
  Eigen::MatrixXd B_probs;
  std::vector<Eigen::MatrixXd> beta_states;
  Eigen::VectorXd gamma;
  std::vector<int> schedule;  // state of each period, 0-based
  int N = 100;
  int T = 9;
  double rw_init_sd = 1.4142135623730951;  // x_1 ~ N(0, 2)
  double rw_step_sd = 1.0;
  bool directed = true;

  int K() const { return static_cast<int>(B_probs.rows()); }
  int M() const { return static_cast<int>(beta_states.size()); }
  int x_cols() const { return beta_states.empty() ? 0 : static_cast<int>(beta_states[0].cols()); }
  int d_cols() const { return static_cast<int>(gamma.size()); }

  void validate() const;

  static DgpPreset easy();
  static DgpPreset medium();
  static DgpPreset hard();
  /// Looks up "easy", "medium" or "hard".
  static DgpPreset named(const std::string& name);
};

struct GroundTruth {
  Eigen::MatrixXd pi;       // K x node-periods, aligned with the network's node-period rows
  LatentState latent;       // z, w per modeled dyad (directed only) and s per period
  Eigen::MatrixXd B_probs;
  std::vector<Eigen::MatrixXd> beta_states;
  Eigen::VectorXd gamma;
};

struct Simulation {
  DynamicNetwork net;
  GroundTruth truth;
};

/// Draws covariates by random walk, memberships from the state-selected
/// Dirichlet, group indicators and edges. Deterministic per seed.
Simulation generate(const DgpPreset& preset, std::uint64_t seed);

struct RecoveryMetrics {
  double correlation = 0.0;        // Pearson over all (node-period, group) entries
  double mean_l2 = 0.0;            // mean Euclidean distance per node-period
  double blockmodel_max_abs = 0.0; // probability scale; NaN when no blockmodel was given
  std::vector<int> permutation;    // estimate group g is matched to truth group permutation[g]
};

/// Metrics after the group permutation of the estimate that minimizes the
/// mean L2 membership error. Blockmodels are edge probabilities.
RecoveryMetrics recovery_metrics(const Eigen::MatrixXd& pi_true, const Eigen::MatrixXd& pi_hat,
                                 const Eigen::MatrixXd& B_true = {}, const Eigen::MatrixXd& B_hat = {});

/// Pearson correlation of two equally sized arrays.
double pearson(const Eigen::Ref<const Eigen::ArrayXd>& a, const Eigen::Ref<const Eigen::ArrayXd>& b);

}  // namespace dynmmsbm
