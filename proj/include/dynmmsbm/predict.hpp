#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynmmsbm/init.hpp"
#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"
#include "dynmmsbm/vem.hpp"

namespace dynmmsbm {

/// How memberships are formed from covariates.
///   Posterior: sum_m kappa_tm (alpha_m(x) + C) / (xi_m(x) + n), the fitted
///              counts of the node-period entering as pseudo-observations;
///              hypothetical nodes have no counts and fall back to PriorMean.
///   PriorMean: sum_m kappa_tm alpha_m(x) / xi_m(x).
/// Counterfactual memberships are an approximation: inference is not rerun
/// under the changed covariates.
enum class MembershipSource { Posterior, PriorMean };

/// Membership of a node-period row (or a hypothetical node when np < 0)
/// under covariates x at period t.
Eigen::VectorXd node_membership(const FittedModel& fit, int np, int t, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                MembershipSource source);

/// Memberships of every node-period row under covariates X (K x rows).
Eigen::MatrixXd membership_table(const FittedModel& fit, const DynamicNetwork& net, const Eigen::MatrixXd& X,
                                 MembershipSource source);

/// Replacement covariates for one dyad_prob query.
struct DyadOverrides {
  std::optional<Eigen::RowVectorXd> x_a;
  std::optional<Eigen::RowVectorXd> x_b;
  std::optional<Eigen::RowVectorXd> d;
};

/// sum_gh pi_ag pi_bh theta_gh for a sender node_a and receiver node_b at
/// period t. A node index of -1 (or a node absent at t) is hypothetical and
/// needs its covariates in `overrides`; a pair that is not modeled at t
/// needs dyadic covariates.
double dyad_prob(const FittedModel& fit, const DynamicNetwork& net, int node_a, int node_b, int t,
                 const DyadOverrides& overrides = {}, MembershipSource source = MembershipSource::Posterior);

/// Mixture probability of every modeled dyad given memberships (K x rows).
Eigen::VectorXd dyad_probs(const FittedModel& fit, const DynamicNetwork& net, const Eigen::MatrixXd& pi);

/// dyad_probs with memberships from the observed covariates.
Eigen::VectorXd dyad_probs(const FittedModel& fit, const DynamicNetwork& net,
                           MembershipSource source = MembershipSource::Posterior);

// ---------------------------------------------------------------------------
// Covariate effects

enum class EffectAggregation { Overall, ByNode, ByNodePeriod };

struct CovariateShift {
  std::string covariate;  // monadic column name
  double delta = 1.0;
  /// Shifted values never pass this bound (an upper bound for positive
  /// deltas, a lower bound for negative ones). Values already beyond it stay.
  std::optional<double> cap;
  /// Uses the observed extreme of the column as the cap.
  bool cap_at_observed = false;
};

struct EffectEstimate {
  int node = -1;    // -1 for the overall effect
  int period = -1;  // -1 unless aggregated by node-period
  double effect = 0.0;
  int dyads = 0;    // dyads averaged over
};

/// Mean change of the edge probability when the covariate is shifted.
/// Overall shifts every node at once and averages over every modeled dyad;
/// the node-level aggregations shift only the focal node (in every period,
/// or in one period) and average over its incident dyads.
std::vector<EffectEstimate> covariate_effect(const FittedModel& fit, const DynamicNetwork& net,
                                             const CovariateShift& shift, EffectAggregation aggregation,
                                             MembershipSource source = MembershipSource::PriorMean);

// ---------------------------------------------------------------------------
// Forecasting

struct ForecastConfig {
  int horizon = 1;
  /// Monadic covariates per future step, rows aligned with the node-periods
  /// of the last observed period.
  std::vector<Eigen::MatrixXd> future_X;
  /// Dyadic covariates per future step, rows aligned with the dyads of the
  /// last observed period.
  std::vector<Eigen::MatrixXd> future_D;
  /// Reuse the last observed covariates for steps that are not supplied.
  bool carry_forward = false;
  /// Dyadic column counting periods since the last edge. When set, future
  /// values are simulated from the predicted edges (reset to 0 after an edge,
  /// +1 otherwise) and probabilities are averaged over `draws` paths.
  std::optional<int> peace_column;
  int draws = 100;
  std::uint64_t seed = 0;
};

struct Forecast {
  std::vector<Eigen::VectorXd> state_probs;  // M per step
  std::vector<Eigen::MatrixXd> memberships;  // K x nodes of the last period, per step
  std::vector<Eigen::VectorXd> dyad_probs;   // per step, dyads of the last period
};

/// State distribution kappa_T A^j, prior-mean memberships under it and
/// mixture edge probabilities for the dyads of the last period.
Forecast forecast(const FittedModel& fit, const DynamicNetwork& net, const ForecastConfig& config);

// ---------------------------------------------------------------------------
// Evaluation

struct AurocResult {
  double auc = 0.0;
  double sd = 0.0;
  int positives = 0;
  int negatives = 0;
};

/// Rank-based area under the ROC curve with midranks for ties:
///   auc = (R+ - n1 (n1 + 1) / 2) / (n1 n0),
/// R+ the rank sum of the positives. The standard deviation is the DeLong
/// estimate sqrt(S10 / n1 + S01 / n0), where S10 and S01 are the sample
/// variances of the per-positive and per-negative placement values.
AurocResult auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// Operating points for thresholds at every distinct score, descending.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Online refits

/// Fits expanding windows [0, ends[w]). The first window is initialized from
/// scratch; later windows keep the previous variational parameters for the
/// periods already seen, take new periods from a fresh initialization aligned
/// to the previous fit, and start from the previous hyperparameters.
std::vector<FittedModel> online_refit(const DynamicNetwork& net, const ModelSpec& spec,
                                      const std::vector<int>& ends, const VemConfig& config,
                                      const InitConfig& init_config = {},
                                      std::vector<std::string>* warnings = nullptr);

}  // namespace dynmmsbm
