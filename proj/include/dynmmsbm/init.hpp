#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynmmsbm/model.hpp"
#include "dynmmsbm/network.hpp"

namespace dynmmsbm {

struct InitConfig {
  std::uint64_t seed = 0;
  int kmeans_restarts = 10;
  int kmeans_iters = 100;
  double assigned_weight = 0.9;  // mass on the assigned group; the rest is spread evenly
};

/// Per-period clustering of the present nodes. Index i of period t refers to
/// node-period row np_begin(t) + i.
struct PeriodClusters {
  std::vector<std::vector<int>> labels;
  std::vector<Eigen::MatrixXd> soft;  // K x nodes_in_period(t)
  std::vector<std::string> warnings;
};

/// Leading-K eigenvector embedding of the regularized, symmetrized adjacency
/// of every period, clustered by seeded k-means++ restarts.
PeriodClusters spectral_init(const DynamicNetwork& net, int K, const InitConfig& config = {});

/// Soft-assignment edge rates B~_gh = sum y u_g v_h / sum u_g v_h over the
/// period's dyads. Cells without weight take `empty_value`.
Eigen::MatrixXd estimate_period_blockmodel(const DynamicNetwork& net, int t, const Eigen::MatrixXd& soft,
                                           double empty_value = 0.5);

/// Sequential alignment of per-period blockmodels to the running mean of the
/// already aligned ones. perms[t][g] is the aligned label of period-local
/// group g; perms[0] is the identity.
std::vector<std::vector<int>> align_labels(const std::vector<Eigen::MatrixXd>& blockmodels);

/// B'(perm[g], perm[h]) = B(g, h).
Eigen::MatrixXd permute_blockmodel(const Eigen::MatrixXd& B, const std::vector<int>& perm);

/// Rows permuted so that row perm[g] of the result is row g of the input.
Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& m, const std::vector<int>& perm);

/// Minimum-cost assignment of rows to columns of a square cost matrix.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

/// k-means++ with restarts on the rows of `points`; returns labels in [0, K).
std::vector<int> kmeans(const Eigen::MatrixXd& points, int K, std::mt19937_64& rng, int restarts = 10,
                        int iters = 100);

/// Spectral clustering, blockmodel alignment and state clustering combined
/// into starting values for inference. Warnings are appended to `warnings`.
InitialState initialize(const DynamicNetwork& net, const ModelSpec& spec, const InitConfig& config = {},
                        std::vector<std::string>* warnings = nullptr);

}  // namespace dynmmsbm
