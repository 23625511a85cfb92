#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "dynmmsbm/network.hpp"

namespace dynmmsbm {

/// How the Dirichlet-multinomial normalizer counts group instantiations of a
/// node-period. `Exact` uses the number of incident modeled dyads; `TwiceNodes`
/// reproduces the 2 * N_t shortcut for compatibility with older fits.
enum class CountNormalization { Exact, TwiceNodes };

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};

struct ModelSpec {
  int K = 2;
  int M = 1;
  double eta = 1.0;
  NormalPrior prior_B;
  NormalPrior prior_gamma;
  NormalPrior prior_beta;
  bool directed = true;
  CountNormalization normalization = CountNormalization::Exact;

  void validate() const;
};

/// Global parameters: blockmodel log-odds, membership regression
/// coefficients (one K x J_x slice per state, group 0 pinned to zero), and
/// dyadic edge coefficients.
struct Hyperparams {
  Eigen::MatrixXd B;
  std::vector<Eigen::MatrixXd> beta;
  Eigen::VectorXd gamma;

  static Hyperparams zeros(int K, int M, int x_cols, int d_cols);

  int K() const { return static_cast<int>(B.rows()); }
  int M() const { return static_cast<int>(beta.size()); }
  int x_cols() const { return beta.empty() ? 0 : static_cast<int>(beta[0].cols()); }
  int d_cols() const { return static_cast<int>(gamma.size()); }

  /// Checks shapes, the zero reference slice and (when undirected) symmetry.
  void validate(bool directed) const;
  /// Largest absolute elementwise difference to another parameter set.
  double max_abs_diff(const Hyperparams& other) const;
};

/// Exact latent configuration: one state per period and one sender/receiver
/// group per dyad (0-based).
struct LatentState {
  std::vector<int> s;
  std::vector<int> z;
  std::vector<int> w;
};

/// Sufficient statistics: group-instantiation counts per node-period
/// (K x node-periods) and state-transition counts (M x M, from-state rows).
struct GlobalStats {
  Eigen::MatrixXd C;
  Eigen::MatrixXd U;
  Eigen::VectorXd n_inter;

  Eigen::VectorXd U_row() const { return U.rowwise().sum(); }
};

/// Mean-field parameters. `phi` and `psi` are K x dyads (one column per
/// dyad), `kappa` is M x T.
struct VariationalParams {
  Eigen::MatrixXd phi;
  Eigen::MatrixXd psi;
  Eigen::MatrixXd kappa;
};

/// Starting point for an inference run.
struct InitialState {
  VariationalParams vparams;
  Hyperparams hyper;
};

inline constexpr double kThetaClamp = 1e-12;

template <typename Scalar>
Scalar logistic(Scalar eta) {
  using std::exp;
  return eta >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-eta))
                          : exp(eta) / (Scalar(1) + exp(eta));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  using std::log;
  return log(p) - log(Scalar(1) - p);
}

/// Edge probability for a (g, h) block with dyadic linear predictor
/// `d . gamma`, kept inside [1e-12, 1 - 1e-12].
template <typename DerivedD, typename DerivedG>
typename DerivedD::Scalar edge_prob(typename DerivedD::Scalar B_gh,
                                    const Eigen::MatrixBase<DerivedD>& d,
                                    const Eigen::MatrixBase<DerivedG>& gamma) {
  using Scalar = typename DerivedD::Scalar;
  using std::isfinite;
  const Scalar lin = d.size() == 0 ? Scalar(0) : Scalar(d.dot(gamma));
  if (!isfinite(B_gh) || !isfinite(lin)) {
    throw NumericalError("edge_prob: non-finite linear predictor");
  }
  const Scalar theta = logistic(B_gh + lin);
  return std::clamp(theta, Scalar(kThetaClamp), Scalar(1) - Scalar(kThetaClamp));
}

/// Scalar overload for a precomputed dyadic linear predictor.
inline double edge_prob(double B_gh, double lin) {
  if (!std::isfinite(B_gh) || !std::isfinite(lin)) {
    throw NumericalError("edge_prob: non-finite linear predictor");
  }
  return std::clamp(logistic(B_gh + lin), kThetaClamp, 1.0 - kThetaClamp);
}

/// Dirichlet concentrations alpha_k = exp(x . beta_k) for one node-period
/// under one state slice (K x J_x). xi is the row sum.
template <typename DerivedX, typename DerivedB>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> alpha(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedB>& beta_m) {
  using Scalar = typename DerivedX::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lin = beta_m * x.derived().transpose().eval();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = lin.array().exp().matrix();
  if (!out.allFinite() || (out.array() <= Scalar(0)).any()) {
    Eigen::Index worst = 0;
    lin.cwiseAbs().maxCoeff(&worst);
    std::ostringstream msg;
    msg << "alpha: exp(x . beta) is not finite/positive for group " << worst
        << " (linear predictor " << lin[worst] << ", max |x| = "
        << x.cwiseAbs().maxCoeff() << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

/// Precomputed concentrations for every (state, node-period).
class AlphaTable {
 public:
  AlphaTable(const DynamicNetwork& net, const Hyperparams& hyper);

  /// K x node-periods for state m.
  const Eigen::MatrixXd& state(int m) const { return alpha_[m]; }
  double operator()(int m, int k, int np) const { return alpha_[m](k, np); }
  double xi(int m, int np) const { return xi_[m][np]; }
  int M() const { return static_cast<int>(alpha_.size()); }

 private:
  std::vector<Eigen::MatrixXd> alpha_;
  std::vector<Eigen::VectorXd> xi_;
};

/// Total group instantiations of a node-period used in the Dirichlet-
/// multinomial normalizer.
double membership_total(const DynamicNetwork& net, const ModelSpec& spec, int np);

/// Dyadic linear predictor d . gamma for every dyad.
Eigen::VectorXd dyad_linear_predictor(const DynamicNetwork& net, const Eigen::VectorXd& gamma);

/// Log-likelihood of y under a logistic edge model with clamped probability.
inline double bernoulli_loglik(double y, double theta) {
  return y * std::log(theta) + (1.0 - y) * std::log1p(-theta);
}

/// Checks that every column of `m` is a probability vector.
bool columns_on_simplex(const Eigen::MatrixXd& m, double tol = 1e-10);

}  // namespace dynmmsbm
