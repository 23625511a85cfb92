#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dynmmsbm {

/// Thrown when inputs violate a structural contract (missing entries,
/// mismatched dimensions, nodes absent from a period, ...).
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a numerical kernel produces a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One observed pair in one period, as supplied by a caller. Node indices
/// refer to the network's node registry.
struct DyadRecord {
  int period = 0;
  int node_a = 0;
  int node_b = 0;
  double y = 0.0;
};

/// Raw, unvalidated pieces of a dynamic network. `X` has one row per
/// (period, node) pair in the order given by `presence`; `D` has one row per
/// entry of `dyads`.
struct NetworkData {
  bool directed = true;
  std::vector<std::string> node_ids;
  std::vector<std::string> period_labels;
  std::vector<std::vector<int>> presence;
  Eigen::MatrixXd X;
  std::vector<std::string> x_names;
  std::vector<DyadRecord> dyads;
  Eigen::MatrixXd D;
  std::vector<std::string> d_names;
};

/// A modeled dyad-period after canonicalization. `sender` and `receiver` are
/// node-period rows; for undirected networks `sender` is the lower-id node.
struct Dyad {
  int period;
  int sender;
  int receiver;
  double y;
};

struct NodePeriod {
  int node;
  int period;
};

/// Time-indexed binary network with monadic (node-period) and dyadic
/// (dyad-period) covariates.
///
/// Node-period rows are contiguous per period and ordered by node index
/// within a period. Dyads are sorted by (period, sender node, receiver node).
/// The object is immutable after construction.
class DynamicNetwork {
 public:
  DynamicNetwork() = default;
  explicit DynamicNetwork(NetworkData data);

  int num_periods() const { return static_cast<int>(period_labels_.size()); }
  int num_nodes() const { return static_cast<int>(node_ids_.size()); }
  int num_node_periods() const { return static_cast<int>(node_periods_.size()); }
  int num_dyads() const { return static_cast<int>(dyads_.size()); }
  bool directed() const { return directed_; }
  int x_cols() const { return static_cast<int>(X_.cols()); }
  int d_cols() const { return static_cast<int>(D_.cols()); }

  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const std::vector<std::string>& period_labels() const { return period_labels_; }
  const std::vector<std::string>& x_names() const { return x_names_; }
  const std::vector<std::string>& d_names() const { return d_names_; }

  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::MatrixXd& D() const { return D_; }
  const std::vector<Dyad>& dyads() const { return dyads_; }
  const std::vector<NodePeriod>& node_periods() const { return node_periods_; }

  /// Node-period rows of period t: [np_begin(t), np_end(t)).
  int np_begin(int t) const { return np_offset_[t]; }
  int np_end(int t) const { return np_offset_[t + 1]; }
  int nodes_in_period(int t) const { return np_end(t) - np_begin(t); }
  /// Dyad indices of period t: [dyad_begin(t), dyad_end(t)).
  int dyad_begin(int t) const { return dyad_offset_[t]; }
  int dyad_end(int t) const { return dyad_offset_[t + 1]; }
  int dyads_in_period(int t) const { return dyad_end(t) - dyad_begin(t); }

  /// Node-period row of (node, t), or -1 when the node is absent at t.
  int node_period(int node, int t) const;

  /// Number of group indicators instantiated by a node-period (one per
  /// incident modeled dyad).
  double n_inter(int np) const { return n_inter_[np]; }
  const Eigen::VectorXd& n_inter() const { return n_inter_; }

  /// Dyads incident to a node-period.
  std::span<const int> incident_dyads(int np) const;

  /// Copy with the flagged dyads removed (flags indexed by dyad).
  DynamicNetwork without_dyads(const std::vector<bool>& drop) const;
  /// Copy restricted to periods [t_begin, t_end).
  DynamicNetwork slice_periods(int t_begin, int t_end) const;
  /// Copy with the monadic covariate matrix replaced (same shape).
  DynamicNetwork with_X(Eigen::MatrixXd X) const;
  /// Copy with the dyadic covariate matrix replaced (same shape).
  DynamicNetwork with_D(Eigen::MatrixXd D) const;

  /// Reassembles the raw description (inverse of the constructor up to
  /// canonical ordering).
  NetworkData to_data() const;

 private:
  bool directed_ = true;
  std::vector<std::string> node_ids_;
  std::vector<std::string> period_labels_;
  std::vector<std::string> x_names_;
  std::vector<std::string> d_names_;
  std::vector<NodePeriod> node_periods_;
  std::vector<int> np_offset_{0};
  std::vector<int> np_lookup_;  // period * num_nodes + node -> row or -1
  Eigen::MatrixXd X_;
  std::vector<Dyad> dyads_;
  std::vector<int> dyad_offset_{0};
  Eigen::MatrixXd D_;
  Eigen::VectorXd n_inter_;
  std::vector<int> incident_offset_{0};
  std::vector<int> incident_;
};

}  // namespace dynmmsbm
