#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dynmmsbm/network.hpp"
#include "dynmmsbm/vem.hpp"

namespace dynmmsbm {

/// Malformed input file; the message names the source and line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadOptions {
  bool directed = true;
  /// Every pair of nodes present in a period is modeled; unlisted pairs are
  /// non-edges. Otherwise only the listed edge rows are modeled.
  bool dense = false;
  bool add_intercept = true;
  /// Missing covariate cells become zero plus an indicator column.
  bool expand_missing = true;
};

/// Named covariate columns; NaN marks a missing cell.
struct CovariateTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

/// For every column with missing cells, appends "<name>_missing" (1 where
/// missing) and zeroes the missing cells. Fully missing columns are an error.
CovariateTable expand_missing(const CovariateTable& table);

/// Orders strings numerically when both parse as numbers, numbers first,
/// otherwise lexicographically.
bool numeric_aware_less(const std::string& a, const std::string& b);

/// Comma-delimited files with a header row. Columns are positional:
///   edges:   time, node_a, node_b, y
///   monadic: time, node, covariates...
///   dyadic:  time, node_a, node_b, covariates...
/// Empty monadic/dyadic paths are skipped. Without a monadic file a node is
/// present in the periods where it appears in an edge row.
DynamicNetwork load_network(const std::string& edges_path, const std::string& monadic_path,
                            const std::string& dyadic_path, const LoadOptions& options = {});

/// Stream variant of load_network; null pointers skip a table. `names` label
/// the sources in error messages.
DynamicNetwork parse_network(std::istream& edges, std::istream* monadic, std::istream* dyadic,
                             const LoadOptions& options = {},
                             const std::vector<std::string>& names = {"edges", "monadic", "dyadic"});

/// Writes every modeled dyad, the monadic covariates (without a leading
/// intercept column) and the dyadic covariates in the load_network layout.
void write_network(const DynamicNetwork& net, const std::string& edges_path, const std::string& monadic_path,
                   const std::string& dyadic_path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Model files

inline constexpr const char* kModelFormat = "dynmmsbm-model";
inline constexpr int kModelVersion = 1;

/// Labels of the network a model was fitted on.
struct NetworkMeta {
  bool directed = true;
  std::vector<std::string> node_ids;
  std::vector<std::string> period_labels;
  std::vector<std::string> x_names;
  std::vector<std::string> d_names;
  std::vector<NodePeriod> node_periods;  // column layout of pi_hat and C
  int num_dyads = 0;

  static NetworkMeta of(const DynamicNetwork& net);
};

struct ModelFile {
  FittedModel model;
  NetworkMeta network;
  nlohmann::json config;
};

nlohmann::json model_to_json(const FittedModel& model, const NetworkMeta& network, const nlohmann::json& config);
ModelFile model_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const FittedModel& model, const NetworkMeta& network,
                const nlohmann::json& config = nlohmann::json::object());
ModelFile load_model(const std::string& path);

}  // namespace dynmmsbm
