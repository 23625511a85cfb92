#include "dynmmsbm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

namespace dynmmsbm {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Row {
  std::vector<std::string> cells;
  int line = 0;
};

struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<Row> rows;
};

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + what);
}

// Comma-separated fields with double-quote escaping; no embedded newlines.
std::vector<std::string> split_csv(const std::string& line, const std::string& source, int lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) fail(source, lineno, "unterminated quote");
  out.push_back(was_quoted ? cur : trim(cur));
  return out;
}

Table read_table(std::istream& in, const std::string& source, std::size_t min_cols) {
  Table t;
  t.source = source;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_csv(line, source, lineno);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      if (t.header.size() < min_cols) {
        fail(source, lineno, "header needs at least " + std::to_string(min_cols) + " columns");
      }
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail(source, lineno, "expected " + std::to_string(t.header.size()) + " fields, found " +
                               std::to_string(cells.size()));
    }
    t.rows.push_back({std::move(cells), lineno});
  }
  if (!have_header) throw ParseError(source + ": missing header row");
  return t;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && p == e;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

double parse_cell(const Table& t, const Row& r, std::size_t c) {
  const std::string& s = r.cells[c];
  if (is_missing(s)) return kNaN;
  double v;
  if (!parse_number(s, v) || !std::isfinite(v)) {
    fail(t.source, r.line, "column '" + t.header[c] + "': not a number: '" + s + "'");
  }
  return v;
}

using IdSet = std::set<std::string, bool (*)(const std::string&, const std::string&)>;

std::map<std::string, int> index_of(const std::vector<std::string>& v) {
  std::map<std::string, int> m;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) m.emplace(v[i], i);
  return m;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos && trim(s) == s) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

bool numeric_aware_less(const std::string& a, const std::string& b) {
  double x, y;
  const bool na = parse_number(a, x), nb = parse_number(b, y);
  if (na && nb) {
    if (x != y) return x < y;
    return a < b;
  }
  if (na != nb) return na;
  return a < b;
}

CovariateTable expand_missing(const CovariateTable& table) {
  const Eigen::Index rows = table.values.rows();
  CovariateTable out;
  out.names = table.names;
  out.values = table.values;
  std::vector<Eigen::VectorXd> extra;
  for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
    Eigen::VectorXd ind = Eigen::VectorXd::Zero(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (std::isnan(table.values(r, c))) {
        ind(r) = 1.0;
        out.values(r, c) = 0.0;
      }
    }
    const double n_miss = ind.sum();
    if (n_miss == 0.0) continue;
    if (n_miss == static_cast<double>(rows)) {
      throw StructureError("covariate '" + table.names[c] + "' is missing in every row");
    }
    out.names.push_back(table.names[c] + "_missing");
    extra.push_back(std::move(ind));
  }
  if (!extra.empty()) {
    const Eigen::Index c0 = out.values.cols();
    out.values.conservativeResize(rows, c0 + static_cast<Eigen::Index>(extra.size()));
    for (std::size_t i = 0; i < extra.size(); ++i) out.values.col(c0 + static_cast<Eigen::Index>(i)) = extra[i];
  }
  return out;
}

DynamicNetwork parse_network(std::istream& edges_in, std::istream* monadic_in, std::istream* dyadic_in,
                             const LoadOptions& options, const std::vector<std::string>& names) {
  auto name = [&](std::size_t i, const char* fallback) {
    return i < names.size() ? names[i] : std::string(fallback);
  };
  const Table edges = read_table(edges_in, name(0, "edges"), 4);
  if (edges.header.size() != 4) {
    throw ParseError(edges.source + ":1: edges need exactly 4 columns (time, node_a, node_b, y)");
  }
  std::optional<Table> monadic, dyadic;
  if (monadic_in) monadic = read_table(*monadic_in, name(1, "monadic"), 2);
  if (dyadic_in) dyadic = read_table(*dyadic_in, name(2, "dyadic"), 3);

  // Registries.
  IdSet period_set(numeric_aware_less), node_set(numeric_aware_less);
  for (const Row& r : edges.rows) {
    period_set.insert(r.cells[0]);
    if (!monadic) {
      node_set.insert(r.cells[1]);
      node_set.insert(r.cells[2]);
    }
  }
  if (monadic) {
    for (const Row& r : monadic->rows) {
      period_set.insert(r.cells[0]);
      node_set.insert(r.cells[1]);
    }
  }
  NetworkData data;
  data.directed = options.directed;
  data.period_labels.assign(period_set.begin(), period_set.end());
  data.node_ids.assign(node_set.begin(), node_set.end());
  const auto period_idx = index_of(data.period_labels);
  const auto node_idx = index_of(data.node_ids);
  const int T = static_cast<int>(data.period_labels.size());
  const int N = static_cast<int>(data.node_ids.size());
  if (T == 0) throw ParseError(edges.source + ": no rows");

  // Presence and monadic covariates.
  std::vector<std::vector<char>> present(T, std::vector<char>(N, 0));
  const std::size_t x_raw = monadic ? monadic->header.size() - 2 : 0;
  std::map<std::pair<int, int>, int> monadic_row;  // (t, node) -> row of monadic table
  if (monadic) {
    for (int i = 0; i < static_cast<int>(monadic->rows.size()); ++i) {
      const Row& r = monadic->rows[i];
      const int t = period_idx.at(r.cells[0]), v = node_idx.at(r.cells[1]);
      if (!monadic_row.emplace(std::make_pair(t, v), i).second) {
        fail(monadic->source, r.line, "duplicate row for node '" + r.cells[1] + "' at time '" + r.cells[0] + "'");
      }
      present[t][v] = 1;
    }
  } else {
    for (const Row& r : edges.rows) {
      const int t = period_idx.at(r.cells[0]);
      present[t][node_idx.at(r.cells[1])] = 1;
      present[t][node_idx.at(r.cells[2])] = 1;
    }
  }
  data.presence.resize(T);
  int n_np = 0;
  for (int t = 0; t < T; ++t) {
    for (int v = 0; v < N; ++v) {
      if (present[t][v]) data.presence[t].push_back(v);
    }
    n_np += static_cast<int>(data.presence[t].size());
  }

  // Edge rows.
  auto key = [&](int t, int a, int b) {
    if (!options.directed && b < a) std::swap(a, b);
    return std::make_tuple(t, a, b);
  };
  std::map<std::tuple<int, int, int>, double> listed;
  for (const Row& r : edges.rows) {
    const int t = period_idx.at(r.cells[0]);
    int ab[2];
    for (int s = 0; s < 2; ++s) {
      const std::string& id = r.cells[1 + s];
      auto it = node_idx.find(id);
      if (it == node_idx.end() || !present[t][it->second]) {
        fail(edges.source, r.line, "unknown node '" + id + "' at time '" + r.cells[0] + "'");
      }
      ab[s] = it->second;
    }
    if (ab[0] == ab[1]) fail(edges.source, r.line, "self-loop on node '" + r.cells[1] + "'");
    double y;
    if (!parse_number(r.cells[3], y) || (y != 0.0 && y != 1.0)) {
      fail(edges.source, r.line, "edge value must be 0 or 1, found '" + r.cells[3] + "'");
    }
    if (!listed.emplace(key(t, ab[0], ab[1]), y).second) {
      fail(edges.source, r.line, "duplicate dyad ('" + r.cells[1] + "', '" + r.cells[2] + "') at time '" +
                                     r.cells[0] + "'");
    }
  }
  if (options.dense) {
    for (int t = 0; t < T; ++t) {
      const auto& nodes = data.presence[t];
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t j = options.directed ? 0 : i + 1; j < nodes.size(); ++j) {
          if (i == j) continue;
          auto it = listed.find(key(t, nodes[i], nodes[j]));
          data.dyads.push_back({t, nodes[i], nodes[j], it == listed.end() ? 0.0 : it->second});
        }
      }
    }
  } else {
    for (const auto& [k, y] : listed) data.dyads.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), y});
  }
  const int n_dyads = static_cast<int>(data.dyads.size());

  // Monadic matrix in presence order.
  CovariateTable xt;
  if (monadic) xt.names.assign(monadic->header.begin() + 2, monadic->header.end());
  xt.values.resize(n_np, static_cast<Eigen::Index>(x_raw));
  {
    int row = 0;
    for (int t = 0; t < T; ++t) {
      for (int v : data.presence[t]) {
        if (monadic) {
          const Row& r = monadic->rows[monadic_row.at({t, v})];
          for (std::size_t c = 0; c < x_raw; ++c) xt.values(row, static_cast<Eigen::Index>(c)) = parse_cell(*monadic, r, c + 2);
        }
        ++row;
      }
    }
  }

  // Dyadic matrix in dyad order; rows for unmodeled pairs are ignored.
  CovariateTable dt;
  if (dyadic) {
    const std::size_t d_raw = dyadic->header.size() - 3;
    dt.names.assign(dyadic->header.begin() + 3, dyadic->header.end());
    std::map<std::tuple<int, int, int>, int> dyadic_row;
    for (int i = 0; i < static_cast<int>(dyadic->rows.size()); ++i) {
      const Row& r = dyadic->rows[i];
      auto pt = period_idx.find(r.cells[0]);
      auto ia = node_idx.find(r.cells[1]);
      auto ib = node_idx.find(r.cells[2]);
      if (pt == period_idx.end() || ia == node_idx.end() || ib == node_idx.end()) continue;
      if (!dyadic_row.emplace(key(pt->second, ia->second, ib->second), i).second) {
        fail(dyadic->source, r.line, "duplicate dyad ('" + r.cells[1] + "', '" + r.cells[2] + "') at time '" +
                                         r.cells[0] + "'");
      }
    }
    dt.values.resize(n_dyads, static_cast<Eigen::Index>(d_raw));
    for (int i = 0; i < n_dyads; ++i) {
      const DyadRecord& d = data.dyads[i];
      auto it = dyadic_row.find(key(d.period, d.node_a, d.node_b));
      for (std::size_t c = 0; c < d_raw; ++c) {
        dt.values(i, static_cast<Eigen::Index>(c)) =
            it == dyadic_row.end() ? kNaN : parse_cell(*dyadic, dyadic->rows[it->second], c + 3);
      }
    }
  } else {
    dt.values.resize(n_dyads, 0);
  }

  auto finish = [&](CovariateTable tab, const std::string& source) {
    if (options.expand_missing) return expand_missing(tab);
    if (tab.values.hasNaN()) {
      throw ParseError(source + ": missing covariate values (enable missing-indicator expansion)");
    }
    return tab;
  };
  xt = finish(std::move(xt), monadic ? monadic->source : "monadic");
  dt = finish(std::move(dt), dyadic ? dyadic->source : "dyadic");

  if (options.add_intercept) {
    data.X.resize(n_np, xt.values.cols() + 1);
    data.X.col(0).setOnes();
    data.X.rightCols(xt.values.cols()) = xt.values;
    data.x_names.push_back("intercept");
  } else {
    data.X = std::move(xt.values);
  }
  data.x_names.insert(data.x_names.end(), xt.names.begin(), xt.names.end());
  data.D = std::move(dt.values);
  data.d_names = std::move(dt.names);
  return DynamicNetwork(std::move(data));
}

DynamicNetwork load_network(const std::string& edges_path, const std::string& monadic_path,
                            const std::string& dyadic_path, const LoadOptions& options) {
  std::ifstream e = open_in(edges_path);
  std::ifstream m, d;
  if (!monadic_path.empty()) m = open_in(monadic_path);
  if (!dyadic_path.empty()) d = open_in(dyadic_path);
  return parse_network(e, monadic_path.empty() ? nullptr : &m, dyadic_path.empty() ? nullptr : &d, options,
                       {edges_path, monadic_path, dyadic_path});
}

void write_network(const DynamicNetwork& net, const std::string& edges_path, const std::string& monadic_path,
                   const std::string& dyadic_path) {
  const auto& nodes = net.node_ids();
  const auto& periods = net.period_labels();
  const auto& nps = net.node_periods();
  {
    std::ofstream out = open_out(edges_path);
    out << "time,node_a,node_b,y\n";
    for (const Dyad& d : net.dyads()) {
      out << csv_field(periods[d.period]) << ',' << csv_field(nodes[nps[d.sender].node]) << ','
          << csv_field(nodes[nps[d.receiver].node]) << ',' << (d.y != 0.0 ? 1 : 0) << '\n';
    }
  }
  if (!monadic_path.empty()) {
    const bool skip = net.x_cols() > 0 && !net.x_names().empty() && net.x_names()[0] == "intercept";
    const int c0 = skip ? 1 : 0;
    std::ofstream out = open_out(monadic_path);
    out << "time,node";
    for (int c = c0; c < net.x_cols(); ++c) out << ',' << csv_field(net.x_names()[c]);
    out << '\n';
    for (int r = 0; r < net.num_node_periods(); ++r) {
      out << csv_field(periods[nps[r].period]) << ',' << csv_field(nodes[nps[r].node]);
      for (int c = c0; c < net.x_cols(); ++c) out << ',' << format_double(net.X()(r, c));
      out << '\n';
    }
  }
  if (!dyadic_path.empty()) {
    std::ofstream out = open_out(dyadic_path);
    out << "time,node_a,node_b";
    for (int c = 0; c < net.d_cols(); ++c) out << ',' << csv_field(net.d_names()[c]);
    out << '\n';
    for (int i = 0; i < net.num_dyads(); ++i) {
      const Dyad& d = net.dyads()[i];
      out << csv_field(periods[d.period]) << ',' << csv_field(nodes[nps[d.sender].node]) << ','
          << csv_field(nodes[nps[d.receiver].node]);
      for (int c = 0; c < net.d_cols(); ++c) out << ',' << format_double(net.D()(i, c));
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Model files

NetworkMeta NetworkMeta::of(const DynamicNetwork& net) {
  NetworkMeta m;
  m.directed = net.directed();
  m.node_ids = net.node_ids();
  m.period_labels = net.period_labels();
  m.x_names = net.x_names();
  m.d_names = net.d_names();
  m.node_periods = net.node_periods();
  m.num_dyads = net.num_dyads();
  return m;
}

namespace {

// Non-finite doubles have no JSON literal; they are stored as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ParseError("model file: expected a number");
}

json mat(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(num(m(r, c)));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd get_mat(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw ParseError("model file: matrix size does not match its data");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_num(data[i++]);
  }
  return m;
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Eigen::VectorXd get_vec(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_num(j[i]);
  return v;
}

json mats(const std::vector<Eigen::MatrixXd>& v) {
  json a = json::array();
  for (const auto& m : v) a.push_back(mat(m));
  return a;
}

std::vector<Eigen::MatrixXd> get_mats(const json& j) {
  std::vector<Eigen::MatrixXd> v;
  for (const auto& m : j) v.push_back(get_mat(m));
  return v;
}

json prior(const NormalPrior& p) { return {{"mean", num(p.mean)}, {"sd", num(p.sd)}}; }
NormalPrior get_prior(const json& j) { return {get_num(j.at("mean")), get_num(j.at("sd"))}; }

}  // namespace

json model_to_json(const FittedModel& m, const NetworkMeta& net, const json& config) {
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  const ModelSpec& s = m.spec;
  j["spec"] = {{"K", s.K},
               {"M", s.M},
               {"eta", num(s.eta)},
               {"prior_B", prior(s.prior_B)},
               {"prior_gamma", prior(s.prior_gamma)},
               {"prior_beta", prior(s.prior_beta)},
               {"directed", s.directed},
               {"normalization", s.normalization == CountNormalization::Exact ? "exact" : "twice_nodes"}};
  j["hyper"] = {{"B", mat(m.hyper.B)}, {"beta", mats(m.hyper.beta)}, {"gamma", vec(m.hyper.gamma)}};
  j["vparams"] = {{"phi", mat(m.vparams.phi)}, {"psi", mat(m.vparams.psi)}, {"kappa", mat(m.vparams.kappa)}};
  j["stats"] = {{"C", mat(m.stats.C)}, {"U", mat(m.stats.U)}, {"n_inter", vec(m.stats.n_inter)}};
  j["pi_hat"] = mat(m.pi_hat);
  j["trans_hat"] = mat(m.trans_hat);
  j["lower_bound"] = num(m.lower_bound);
  j["objective"] = num(m.objective);
  if (m.se) {
    j["se"] = {{"B", mat(m.se->B)}, {"beta", mats(m.se->beta)}, {"gamma", vec(m.se->gamma)}};
  } else {
    j["se"] = nullptr;
  }
  j["convergence"] = {{"engine", m.engine},
                      {"iters", m.iters},
                      {"converged", m.converged},
                      {"stop_reason", m.stop_reason},
                      {"trace", vec(Eigen::Map<const Eigen::VectorXd>(m.trace.data(),
                                                                      static_cast<Eigen::Index>(m.trace.size())))},
                      {"warnings", m.warnings},
                      {"heldout_loglik", num(m.heldout_loglik)}};
  j["holdout"] = m.holdout;
  json nps = json::array();
  for (const NodePeriod& np : net.node_periods) nps.push_back({np.node, np.period});
  j["network"] = {{"directed", net.directed},     {"node_ids", net.node_ids}, {"period_labels", net.period_labels},
                  {"x_names", net.x_names},       {"d_names", net.d_names},   {"node_periods", std::move(nps)},
                  {"num_dyads", net.num_dyads}};
  j["config"] = config;
  return j;
}

ModelFile model_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != kModelFormat) {
      throw ParseError("not a dynmmsbm model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelVersion) {
      throw ParseError("model file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelVersion) + ")");
    }
    ModelFile f;
    FittedModel& m = f.model;
    const json& s = j.at("spec");
    m.spec.K = s.at("K").get<int>();
    m.spec.M = s.at("M").get<int>();
    m.spec.eta = get_num(s.at("eta"));
    m.spec.prior_B = get_prior(s.at("prior_B"));
    m.spec.prior_gamma = get_prior(s.at("prior_gamma"));
    m.spec.prior_beta = get_prior(s.at("prior_beta"));
    m.spec.directed = s.at("directed").get<bool>();
    const auto norm = s.at("normalization").get<std::string>();
    if (norm == "exact") {
      m.spec.normalization = CountNormalization::Exact;
    } else if (norm == "twice_nodes") {
      m.spec.normalization = CountNormalization::TwiceNodes;
    } else {
      throw ParseError("unknown count normalization '" + norm + "'");
    }
    const json& h = j.at("hyper");
    m.hyper.B = get_mat(h.at("B"));
    m.hyper.beta = get_mats(h.at("beta"));
    m.hyper.gamma = get_vec(h.at("gamma"));
    const json& v = j.at("vparams");
    m.vparams.phi = get_mat(v.at("phi"));
    m.vparams.psi = get_mat(v.at("psi"));
    m.vparams.kappa = get_mat(v.at("kappa"));
    const json& st = j.at("stats");
    m.stats.C = get_mat(st.at("C"));
    m.stats.U = get_mat(st.at("U"));
    m.stats.n_inter = get_vec(st.at("n_inter"));
    m.pi_hat = get_mat(j.at("pi_hat"));
    m.trans_hat = get_mat(j.at("trans_hat"));
    m.lower_bound = get_num(j.at("lower_bound"));
    m.objective = get_num(j.at("objective"));
    if (!j.at("se").is_null()) {
      const json& se = j.at("se");
      m.se = StandardErrors{get_mat(se.at("B")), get_mats(se.at("beta")), get_vec(se.at("gamma"))};
    }
    const json& c = j.at("convergence");
    m.engine = c.at("engine").get<std::string>();
    m.iters = c.at("iters").get<int>();
    m.converged = c.at("converged").get<bool>();
    m.stop_reason = c.at("stop_reason").get<std::string>();
    const Eigen::VectorXd trace = get_vec(c.at("trace"));
    m.trace.assign(trace.data(), trace.data() + trace.size());
    m.warnings = c.at("warnings").get<std::vector<std::string>>();
    m.heldout_loglik = get_num(c.at("heldout_loglik"));
    m.holdout = j.at("holdout").get<std::vector<int>>();

    const json& n = j.at("network");
    f.network.directed = n.at("directed").get<bool>();
    f.network.node_ids = n.at("node_ids").get<std::vector<std::string>>();
    f.network.period_labels = n.at("period_labels").get<std::vector<std::string>>();
    f.network.x_names = n.at("x_names").get<std::vector<std::string>>();
    f.network.d_names = n.at("d_names").get<std::vector<std::string>>();
    for (const auto& np : n.at("node_periods")) f.network.node_periods.push_back({np.at(0).get<int>(), np.at(1).get<int>()});
    f.network.num_dyads = n.at("num_dyads").get<int>();
    f.config = j.value("config", json::object());

    m.spec.validate();
    m.hyper.validate(m.spec.directed);
    const int K = m.spec.K;
    const auto n_np = static_cast<Eigen::Index>(f.network.node_periods.size());
    if (m.vparams.phi.rows() != K || m.vparams.psi.rows() != K || m.vparams.phi.cols() != f.network.num_dyads ||
        m.vparams.psi.cols() != f.network.num_dyads || m.vparams.kappa.rows() != m.spec.M ||
        m.vparams.kappa.cols() != static_cast<Eigen::Index>(f.network.period_labels.size()) ||
        m.stats.C.rows() != K || m.stats.C.cols() != n_np || m.pi_hat.rows() != K || m.pi_hat.cols() != n_np ||
        m.trans_hat.rows() != m.spec.M || m.trans_hat.cols() != m.spec.M) {
      throw ParseError("model file: inconsistent dimensions");
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  } catch (const StructureError& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

void save_model(const std::string& path, const FittedModel& model, const NetworkMeta& network, const json& config) {
  const json j = model_to_json(model, network, config);
  std::ofstream out = open_out(path);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace dynmmsbm
