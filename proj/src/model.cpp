#include "dynmmsbm/model.hpp"

#include <algorithm>
#include <string>

namespace dynmmsbm {

void ModelSpec::validate() const {
  if (K < 1) throw StructureError("K must be >= 1");
  if (M < 1) throw StructureError("M must be >= 1");
  if (!(eta > 0.0)) throw StructureError("eta must be > 0");
  for (const auto* p : {&prior_B, &prior_gamma, &prior_beta}) {
    if (!(p->sd > 0.0)) throw StructureError("prior standard deviations must be > 0");
  }
}

Hyperparams Hyperparams::zeros(int K, int M, int x_cols, int d_cols) {
  Hyperparams h;
  h.B = Eigen::MatrixXd::Zero(K, K);
  h.beta.assign(M, Eigen::MatrixXd::Zero(K, x_cols));
  h.gamma = Eigen::VectorXd::Zero(d_cols);
  return h;
}

void Hyperparams::validate(bool directed) const {
  const int k = K();
  if (B.cols() != k) throw StructureError("B must be square");
  if (beta.empty()) throw StructureError("beta needs at least one state slice");
  for (const auto& slice : beta) {
    if (slice.rows() != k || slice.cols() != beta[0].cols()) {
      throw StructureError("beta slices must be K x J_x");
    }
    if ((slice.row(0).array() != 0.0).any()) {
      throw StructureError("beta slice for the reference group must be zero");
    }
  }
  if (!directed && B != B.transpose()) {
    throw StructureError("B must be symmetric for undirected networks");
  }
}

double Hyperparams::max_abs_diff(const Hyperparams& other) const {
  double d = (B - other.B).cwiseAbs().maxCoeff();
  for (std::size_t m = 0; m < beta.size(); ++m) {
    if (beta[m].size() > 0) d = std::max(d, (beta[m] - other.beta[m]).cwiseAbs().maxCoeff());
  }
  if (gamma.size() > 0) d = std::max(d, (gamma - other.gamma).cwiseAbs().maxCoeff());
  return d;
}

AlphaTable::AlphaTable(const DynamicNetwork& net, const Hyperparams& hyper) {
  if (hyper.x_cols() != net.x_cols()) {
    throw StructureError("beta has " + std::to_string(hyper.x_cols()) +
                         " covariate columns but the network has " +
                         std::to_string(net.x_cols()));
  }
  alpha_.reserve(hyper.M());
  xi_.reserve(hyper.M());
  for (const auto& slice : hyper.beta) {
    Eigen::MatrixXd lin = slice * net.X().transpose();
    Eigen::MatrixXd a = lin.array().exp().matrix();
    if (!a.allFinite() || (a.array() <= 0.0).any()) {
      Eigen::Index r = 0, c = 0;
      lin.cwiseAbs().maxCoeff(&r, &c);
      throw NumericalError("alpha: exp(x . beta) overflows at node-period " + std::to_string(c) +
                           ", group " + std::to_string(r) + " (linear predictor " +
                           std::to_string(lin(r, c)) + ", covariate magnitude " +
                           std::to_string(net.X().row(c).cwiseAbs().maxCoeff()) + ")");
    }
    xi_.push_back(a.colwise().sum().transpose());
    alpha_.push_back(std::move(a));
  }
}

double membership_total(const DynamicNetwork& net, const ModelSpec& spec, int np) {
  if (spec.normalization == CountNormalization::TwiceNodes) {
    return 2.0 * net.nodes_in_period(net.node_periods()[np].period);
  }
  return net.n_inter(np);
}

Eigen::VectorXd dyad_linear_predictor(const DynamicNetwork& net, const Eigen::VectorXd& gamma) {
  if (gamma.size() != net.d_cols()) {
    throw StructureError("gamma has " + std::to_string(gamma.size()) +
                         " entries but the network has " + std::to_string(net.d_cols()) +
                         " dyadic covariates");
  }
  if (net.d_cols() == 0) return Eigen::VectorXd::Zero(net.num_dyads());
  return net.D() * gamma;
}

bool columns_on_simplex(const Eigen::MatrixXd& m, double tol) {
  if ((m.array() < 0.0).any()) return false;
  return ((m.colwise().sum().array() - 1.0).abs() <= tol).all();
}

}  // namespace dynmmsbm
