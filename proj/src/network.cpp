#include "dynmmsbm/network.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <utility>

namespace dynmmsbm {

DynamicNetwork::DynamicNetwork(NetworkData data)
    : directed_(data.directed),
      node_ids_(std::move(data.node_ids)),
      period_labels_(std::move(data.period_labels)),
      x_names_(std::move(data.x_names)),
      d_names_(std::move(data.d_names)) {
  const int T = num_periods();
  const int N = num_nodes();
  if (static_cast<int>(data.presence.size()) != T) {
    throw StructureError("presence sets must be given for every period");
  }
  const auto total_np = std::accumulate(
      data.presence.begin(), data.presence.end(), std::size_t{0},
      [](std::size_t acc, const auto& v) { return acc + v.size(); });
  if (static_cast<std::size_t>(data.X.rows()) != total_np) {
    throw StructureError("monadic covariates need one row per node-period (expected " +
                         std::to_string(total_np) + ", got " +
                         std::to_string(data.X.rows()) + ")");
  }
  if (data.D.rows() == 0 && data.D.cols() == 0) data.D.resize(static_cast<Eigen::Index>(data.dyads.size()), 0);
  if (static_cast<std::size_t>(data.D.rows()) != data.dyads.size()) {
    throw StructureError("dyadic covariates need one row per modeled dyad");
  }
  if (!x_names_.empty() && static_cast<Eigen::Index>(x_names_.size()) != data.X.cols()) {
    throw StructureError("monadic covariate names do not match column count");
  }
  if (!d_names_.empty() && static_cast<Eigen::Index>(d_names_.size()) != data.D.cols()) {
    throw StructureError("dyadic covariate names do not match column count");
  }

  // Node-periods, sorted by node within each period.
  np_lookup_.assign(static_cast<std::size_t>(T) * N, -1);
  X_.resize(static_cast<Eigen::Index>(total_np), data.X.cols());
  int src_row = 0;
  for (int t = 0; t < T; ++t) {
    const auto& nodes = data.presence[t];
    std::vector<int> order(nodes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return nodes[a] < nodes[b]; });
    for (int idx : order) {
      const int node = nodes[idx];
      if (node < 0 || node >= N) throw StructureError("presence set references unknown node");
      auto& slot = np_lookup_[static_cast<std::size_t>(t) * N + node];
      if (slot >= 0) {
        throw StructureError("node '" + node_ids_[node] + "' listed twice in period '" +
                             period_labels_[t] + "'");
      }
      slot = static_cast<int>(node_periods_.size());
      X_.row(slot) = data.X.row(src_row + idx);
      node_periods_.push_back({node, t});
    }
    src_row += static_cast<int>(nodes.size());
    np_offset_.push_back(static_cast<int>(node_periods_.size()));
  }

  // Dyads in canonical order.
  const std::size_t n_dyads = data.dyads.size();
  for (auto& d : data.dyads) {
    if (d.period < 0 || d.period >= T) throw StructureError("dyad references unknown period");
    if (d.node_a < 0 || d.node_a >= N || d.node_b < 0 || d.node_b >= N) {
      throw StructureError("dyad references unknown node");
    }
    if (d.node_a == d.node_b) {
      throw StructureError("self-loop for node '" + node_ids_[d.node_a] + "'");
    }
    if (d.y != 0.0 && d.y != 1.0) throw StructureError("edge values must be 0 or 1");
    if (!directed_ && d.node_a > d.node_b) std::swap(d.node_a, d.node_b);
    if (node_period(d.node_a, d.period) < 0 || node_period(d.node_b, d.period) < 0) {
      throw StructureError("dyad (" + node_ids_[d.node_a] + ", " + node_ids_[d.node_b] +
                           ") has an endpoint absent from period '" +
                           period_labels_[d.period] + "'");
    }
  }
  std::vector<std::size_t> order(n_dyads);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = data.dyads[a];
    const auto& y = data.dyads[b];
    return std::tie(x.period, x.node_a, x.node_b) < std::tie(y.period, y.node_a, y.node_b);
  });
  D_.resize(static_cast<Eigen::Index>(n_dyads), data.D.cols());
  dyads_.reserve(n_dyads);
  n_inter_ = Eigen::VectorXd::Zero(num_node_periods());
  for (std::size_t i = 0; i < n_dyads; ++i) {
    const auto& r = data.dyads[order[i]];
    if (i > 0) {
      const auto& prev = data.dyads[order[i - 1]];
      if (prev.period == r.period && prev.node_a == r.node_a && prev.node_b == r.node_b) {
        throw StructureError("duplicate dyad (" + node_ids_[r.node_a] + ", " +
                             node_ids_[r.node_b] + ") in period '" + period_labels_[r.period] +
                             "'");
      }
    }
    const int s = node_period(r.node_a, r.period);
    const int q = node_period(r.node_b, r.period);
    dyads_.push_back({r.period, s, q, r.y});
    D_.row(static_cast<Eigen::Index>(i)) = data.D.row(static_cast<Eigen::Index>(order[i]));
    n_inter_[s] += 1.0;
    n_inter_[q] += 1.0;
  }
  for (int t = 0; t < T; ++t) {
    auto it = std::lower_bound(dyads_.begin(), dyads_.end(), t + 1,
                               [](const Dyad& d, int p) { return d.period < p; });
    dyad_offset_.push_back(static_cast<int>(it - dyads_.begin()));
  }

  // Incidence lists (CSR).
  std::vector<int> counts(num_node_periods(), 0);
  for (const auto& d : dyads_) {
    ++counts[d.sender];
    ++counts[d.receiver];
  }
  for (int c : counts) incident_offset_.push_back(incident_offset_.back() + c);
  incident_.resize(incident_offset_.back());
  std::vector<int> fill(incident_offset_.begin(), incident_offset_.end() - 1);
  for (int i = 0; i < num_dyads(); ++i) {
    incident_[fill[dyads_[i].sender]++] = i;
    incident_[fill[dyads_[i].receiver]++] = i;
  }

  if (!X_.allFinite()) throw StructureError("monadic covariates contain non-finite values");
  if (!D_.allFinite()) throw StructureError("dyadic covariates contain non-finite values");
}

int DynamicNetwork::node_period(int node, int t) const {
  if (t < 0 || t >= num_periods() || node < 0 || node >= num_nodes()) return -1;
  return np_lookup_[static_cast<std::size_t>(t) * num_nodes() + node];
}

std::span<const int> DynamicNetwork::incident_dyads(int np) const {
  return {incident_.data() + incident_offset_[np],
          static_cast<std::size_t>(incident_offset_[np + 1] - incident_offset_[np])};
}

NetworkData DynamicNetwork::to_data() const {
  NetworkData data;
  data.directed = directed_;
  data.node_ids = node_ids_;
  data.period_labels = period_labels_;
  data.x_names = x_names_;
  data.d_names = d_names_;
  data.presence.resize(num_periods());
  for (const auto& np : node_periods_) data.presence[np.period].push_back(np.node);
  data.X = X_;
  data.D = D_;
  data.dyads.reserve(dyads_.size());
  for (const auto& d : dyads_) {
    data.dyads.push_back({d.period, node_periods_[d.sender].node, node_periods_[d.receiver].node, d.y});
  }
  return data;
}

DynamicNetwork DynamicNetwork::without_dyads(const std::vector<bool>& drop) const {
  if (drop.size() != dyads_.size()) throw StructureError("dyad mask has wrong length");
  NetworkData data = to_data();
  std::vector<DyadRecord> kept;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < drop.size(); ++i) {
    if (drop[i]) continue;
    kept.push_back(data.dyads[i]);
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd D(static_cast<Eigen::Index>(rows.size()), D_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) D.row(static_cast<Eigen::Index>(i)) = D_.row(rows[i]);
  data.dyads = std::move(kept);
  data.D = std::move(D);
  return DynamicNetwork(std::move(data));
}

DynamicNetwork DynamicNetwork::slice_periods(int t_begin, int t_end) const {
  if (t_begin < 0 || t_end > num_periods() || t_begin >= t_end) {
    throw StructureError("invalid period slice");
  }
  NetworkData data;
  data.directed = directed_;
  data.node_ids = node_ids_;
  data.x_names = x_names_;
  data.d_names = d_names_;
  data.period_labels.assign(period_labels_.begin() + t_begin, period_labels_.begin() + t_end);
  const int np0 = np_begin(t_begin);
  const int np1 = np_end(t_end - 1);
  data.presence.resize(t_end - t_begin);
  for (int r = np0; r < np1; ++r) {
    data.presence[node_periods_[r].period - t_begin].push_back(node_periods_[r].node);
  }
  data.X = X_.middleRows(np0, np1 - np0);
  const int d0 = dyad_begin(t_begin);
  const int d1 = dyad_end(t_end - 1);
  for (int i = d0; i < d1; ++i) {
    const auto& d = dyads_[i];
    data.dyads.push_back({d.period - t_begin, node_periods_[d.sender].node,
                          node_periods_[d.receiver].node, d.y});
  }
  data.D = D_.middleRows(d0, d1 - d0);
  return DynamicNetwork(std::move(data));
}

DynamicNetwork DynamicNetwork::with_X(Eigen::MatrixXd X) const {
  if (X.rows() != X_.rows() || X.cols() != X_.cols()) {
    throw StructureError("replacement monadic covariates have the wrong shape");
  }
  DynamicNetwork copy = *this;
  copy.X_ = std::move(X);
  if (!copy.X_.allFinite()) throw StructureError("monadic covariates contain non-finite values");
  return copy;
}

DynamicNetwork DynamicNetwork::with_D(Eigen::MatrixXd D) const {
  if (D.rows() != D_.rows() || D.cols() != D_.cols()) {
    throw StructureError("replacement dyadic covariates have the wrong shape");
  }
  DynamicNetwork copy = *this;
  copy.D_ = std::move(D);
  if (!copy.D_.allFinite()) throw StructureError("dyadic covariates contain non-finite values");
  return copy;
}

}  // namespace dynmmsbm
