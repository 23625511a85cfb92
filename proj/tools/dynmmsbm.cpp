#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dynmmsbm/init.hpp"
#include "dynmmsbm/io.hpp"
#include "dynmmsbm/predict.hpp"
#include "dynmmsbm/simulate.hpp"
#include "dynmmsbm/svi.hpp"
#include "dynmmsbm/vem.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dynmmsbm;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  int threads = 0;
};

struct DataArgs {
  std::string dir, edges, monadic, dyadic;
  bool undirected = false;
  bool dense = false;
  bool no_intercept = false;
  bool keep_missing = false;
};

struct ModelArgs {
  ModelSpec spec;
  std::string normalization = "exact";
};

struct FitArgs {
  std::string engine = "vem";
  VemConfig vem;
  SviConfig svi;
  InitConfig init;
};

struct SimulateArgs {
  std::string preset = "medium";
  int nodes = 0;
  int periods = 0;
  bool undirected = false;
};

struct ModelInput {
  std::string model;
  std::string source = "posterior";
};

struct ForecastArgs {
  int horizon = 1;
  std::string peace_column;
  int draws = 100;
};

struct EffectArgs {
  std::string covariate;
  double delta = 1.0;
  double cap = 0.0;
  bool cap_at_observed = false;
  std::string by = "overall";
};

struct AurocArgs {
  std::string input;
  std::string score_column = "p";
  std::string label_column = "y";
};

struct OnlineArgs {
  std::vector<int> ends;
};

// ---------------------------------------------------------------------------
// Options

void add_common(CLI::App* s, Common& c) {
  s->add_option("--seed", c.seed, "Random seed (required)");
  s->add_option("--out", c.out, "Run directory (required)");
  s->add_option("--threads", c.threads, "Worker threads, 0 for the OpenMP default")
      ->envname("DYNMMSBM_THREADS")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--config", c.config, "JSON file of option values; command-line flags take precedence")
      ->check(CLI::ExistingFile);
}

void add_data(CLI::App* s, DataArgs& d, bool load_flags) {
  s->add_option("--data", d.dir, "Directory with edges.csv and optional monadic.csv, dyadic.csv")
      ->check(CLI::ExistingDirectory);
  s->add_option("--edges", d.edges, "Edge file: time, node_a, node_b, y")->check(CLI::ExistingFile);
  s->add_option("--monadic", d.monadic, "Monadic covariates: time, node, covariates...")->check(CLI::ExistingFile);
  s->add_option("--dyadic", d.dyadic, "Dyadic covariates: time, node_a, node_b, covariates...")
      ->check(CLI::ExistingFile);
  if (!load_flags) return;
  s->add_flag("--undirected", d.undirected, "Unordered pairs");
  s->add_flag("--dense", d.dense, "Model every pair present in a period; unlisted pairs are non-edges");
  s->add_flag("--no-intercept", d.no_intercept, "Do not prepend an intercept to the monadic covariates");
  s->add_flag("--keep-missing", d.keep_missing, "Reject missing covariate cells instead of adding indicators");
}

void add_model(CLI::App* s, ModelArgs& m) {
  s->add_option("-k,--groups", m.spec.K, "Latent groups")->check(CLI::Range(1, 1000));
  s->add_option("-m,--states", m.spec.M, "Hidden Markov states")->check(CLI::Range(1, 1000));
  s->add_option("--eta", m.spec.eta, "Dirichlet concentration of the transition rows");
  s->add_option("--prior-b-mean", m.spec.prior_B.mean);
  s->add_option("--prior-b-sd", m.spec.prior_B.sd);
  s->add_option("--prior-gamma-mean", m.spec.prior_gamma.mean);
  s->add_option("--prior-gamma-sd", m.spec.prior_gamma.sd);
  s->add_option("--prior-beta-mean", m.spec.prior_beta.mean);
  s->add_option("--prior-beta-sd", m.spec.prior_beta.sd);
  s->add_option("--normalization", m.normalization, "Interaction counts: exact or twice-nodes")
      ->check(CLI::IsMember({"exact", "twice-nodes"}));
}

void add_vem(CLI::App* s, VemConfig& v) {
  s->add_option("--max-iter", v.max_iter);
  s->add_option("--tol", v.tol_hyper, "Stop when no hyperparameter moves by more");
  s->add_option("--inner-iters", v.inner_mstep_iters, "L-BFGS iterations per M-step");
  s->add_option("--lbfgs-memory", v.lbfgs_memory);
  s->add_flag("--se", v.compute_se, "Sampled-Hessian standard errors");
  s->add_option("--se-samples", v.se_samples);
}

void add_init(CLI::App* s, InitConfig& i) {
  s->add_option("--init-restarts", i.kmeans_restarts, "k-means restarts per period");
  s->add_option("--init-weight", i.assigned_weight, "Starting mass on the assigned group");
}

void add_svi(CLI::App* s, SviConfig& c) {
  s->add_option("--batch-nodes", c.batch_nodes, "Nodes per period per step, 0 for all");
  s->add_option("--rho-tau", c.tau, "Step-size delay");
  s->add_option("--rho-p", c.p_exp, "Step-size exponent in (0.5, 1]");
  s->add_option("--holdout", c.holdout_frac, "Held-out fraction of dyads");
  s->add_option("--tol-holdout", c.tol_holdout);
  s->add_option("--patience", c.patience);
  s->add_option("--max-steps", c.max_steps);
}

void add_model_input(CLI::App* s, ModelInput& m) {
  s->add_option("--model", m.model, "model.json written by fit")->check(CLI::ExistingFile);
  s->add_option("--source", m.source, "Memberships: posterior or prior")
      ->check(CLI::IsMember({"posterior", "prior"}));
}

// ---------------------------------------------------------------------------
// Config files and snapshots

json scalar_json(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  json j = json::parse(s, nullptr, false);
  if (!j.is_discarded() && j.is_number()) return j;
  return s;
}

const std::string& option_key(const CLI::Option* opt) {
  return opt->get_lnames().empty() ? opt->get_snames().front() : opt->get_lnames().front();
}

bool skip_option(const CLI::Option* opt) {
  const auto& ln = opt->get_lnames();
  return ln.empty() || ln.front() == "help" || ln.front() == "config";
}

json snapshot(const CLI::App* sub) {
  json j;
  j["command"] = sub->get_name();
  for (const CLI::Option* opt : sub->get_options()) {
    if (skip_option(opt)) continue;
    std::vector<std::string> vals;
    if (opt->count() > 0) {
      vals = opt->reduced_results();
    } else if (opt->get_items_expected_max() <= 1 && !opt->get_default_str().empty()) {
      vals = {opt->get_default_str()};
    }
    if (vals.empty()) continue;
    if (opt->get_items_expected_max() > 1) {
      json arr = json::array();
      for (const auto& v : vals) arr.push_back(scalar_json(v));
      j[option_key(opt)] = arr;
    } else {
      j[option_key(opt)] = scalar_json(vals.front());
    }
  }
  return j;
}

void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  json cfg = json::parse(in, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object()) throw UsageError(path + ": not a JSON object");
  for (const auto& [key, val] : cfg.items()) {
    if (key == "command") {
      if (val != sub->get_name()) throw UsageError(path + ": config is for '" + val.dump() + "'");
      continue;
    }
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) opt = sub->get_option_no_throw("-" + key);
    if (!opt || skip_option(opt)) throw UsageError(path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    auto add = [&](const json& v) { opt->add_result(v.is_string() ? v.get<std::string>() : v.dump()); };
    if (val.is_array()) {
      for (const auto& v : val) add(v);
    } else {
      add(val);
    }
    opt->run_callback();
  }
}

// ---------------------------------------------------------------------------
// Run directory

struct Run {
  fs::path dir;
  std::ofstream log;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void note(const std::string& s) {
    log << s << '\n';
    log.flush();
  }
  void warn(const std::string& s) {
    note("warning: " + s);
    std::cerr << "warning: " << s << '\n';
  }
  void finish() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    note("done in " + std::to_string(secs) + " s");
  }
};

Run open_run(const Common& c, const CLI::App* sub) {
  Run run;
  run.dir = c.out;
  fs::create_directories(run.dir);
  std::ofstream(run.dir / "config.json") << snapshot(sub).dump(2) << '\n';
  run.log.open(run.dir / "log.txt");
  run.note(sub->get_name() + " seed " + std::to_string(c.seed));
  return run;
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2) << '\n'; }

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

std::string header(const std::string& prefix, int n) {
  std::string h;
  for (int i = 1; i <= n; ++i) h += "," + prefix + std::to_string(i);
  return h;
}

std::string row_values(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += "," + format_double(v[i]);
  return s;
}

void write_memberships(const fs::path& path, const std::vector<std::string>& node_ids,
                       const std::vector<std::string>& periods, const std::vector<NodePeriod>& rows,
                       const Eigen::MatrixXd& pi) {
  std::ofstream f(path);
  f << "time,node" << header("g", static_cast<int>(pi.rows())) << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    f << periods[rows[r].period] << ',' << node_ids[rows[r].node] << row_values(pi.col(static_cast<Eigen::Index>(r)))
      << '\n';
  }
}

std::vector<int> modal_states(const Eigen::MatrixXd& kappa) {
  std::vector<int> s;
  for (Eigen::Index t = 0; t < kappa.cols(); ++t) {
    Eigen::Index m;
    kappa.col(t).maxCoeff(&m);
    s.push_back(static_cast<int>(m) + 1);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Data

struct DataSource {
  std::string edges, monadic, dyadic;
  LoadOptions options;
};

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

void resolve_paths(const DataArgs& d, DataSource& src) {
  if (!d.dir.empty()) {
    const fs::path dir(d.dir);
    if (!fs::exists(dir / "edges.csv")) throw UsageError(d.dir + ": no edges.csv");
    src.edges = (dir / "edges.csv").string();
    src.monadic = fs::exists(dir / "monadic.csv") ? (dir / "monadic.csv").string() : "";
    src.dyadic = fs::exists(dir / "dyadic.csv") ? (dir / "dyadic.csv").string() : "";
  }
  if (!d.edges.empty()) src.edges = d.edges;
  if (!d.monadic.empty()) src.monadic = d.monadic;
  if (!d.dyadic.empty()) src.dyadic = d.dyadic;
  src.edges = absolute(src.edges);
  src.monadic = absolute(src.monadic);
  src.dyadic = absolute(src.dyadic);
}

DataSource data_source(const DataArgs& d) {
  DataSource src;
  resolve_paths(d, src);
  if (src.edges.empty()) throw UsageError("no input: pass --data or --edges");
  src.options.directed = !d.undirected;
  src.options.dense = d.dense;
  src.options.add_intercept = !d.no_intercept;
  src.options.expand_missing = !d.keep_missing;
  return src;
}

json source_json(const DataSource& s) {
  return {{"edges", s.edges},
          {"monadic", s.monadic},
          {"dyadic", s.dyadic},
          {"directed", s.options.directed},
          {"dense", s.options.dense},
          {"add_intercept", s.options.add_intercept},
          {"expand_missing", s.options.expand_missing}};
}

DataSource source_from_json(const json& j) {
  DataSource s;
  s.edges = j.at("edges").get<std::string>();
  s.monadic = j.at("monadic").get<std::string>();
  s.dyadic = j.at("dyadic").get<std::string>();
  s.options.directed = j.at("directed").get<bool>();
  s.options.dense = j.at("dense").get<bool>();
  s.options.add_intercept = j.at("add_intercept").get<bool>();
  s.options.expand_missing = j.at("expand_missing").get<bool>();
  return s;
}

DynamicNetwork load(const DataSource& s, Run& run) {
  run.note("edges " + s.edges);
  if (!s.monadic.empty()) run.note("monadic " + s.monadic);
  if (!s.dyadic.empty()) run.note("dyadic " + s.dyadic);
  DynamicNetwork net = load_network(s.edges, s.monadic, s.dyadic, s.options);
  run.note("nodes " + std::to_string(net.num_nodes()) + " periods " + std::to_string(net.num_periods()) +
           " dyads " + std::to_string(net.num_dyads()));
  return net;
}

// The network a model was fitted on, from the paths stored with the model
// unless new ones are given. Load options always come from the model.
DynamicNetwork model_network(const ModelFile& mf, const DataArgs& d, Run& run) {
  if (!mf.config.contains("data")) throw std::runtime_error("model file has no data source; refit with fit");
  DataSource src = source_from_json(mf.config.at("data"));
  if (!d.dir.empty() || !d.edges.empty()) {
    src.edges.clear();
    src.monadic.clear();
    src.dyadic.clear();
  }
  resolve_paths(d, src);
  DynamicNetwork net = load(src, run);
  const NetworkMeta now = NetworkMeta::of(net);
  const NetworkMeta& was = mf.network;
  bool same = now.directed == was.directed && now.node_ids == was.node_ids &&
              now.period_labels == was.period_labels && now.x_names == was.x_names &&
              now.d_names == was.d_names && now.num_dyads == was.num_dyads &&
              now.node_periods.size() == was.node_periods.size();
  for (std::size_t i = 0; same && i < now.node_periods.size(); ++i) {
    same = now.node_periods[i].node == was.node_periods[i].node &&
           now.node_periods[i].period == was.node_periods[i].period;
  }
  if (!same) throw std::runtime_error("data does not match the network the model was fitted on");
  return net;
}

ModelSpec make_spec(const ModelArgs& m, bool directed) {
  ModelSpec spec = m.spec;
  spec.directed = directed;
  spec.normalization = m.normalization == "exact" ? CountNormalization::Exact : CountNormalization::TwiceNodes;
  spec.validate();
  return spec;
}

MembershipSource membership_source(const std::string& s) {
  return s == "prior" ? MembershipSource::PriorMean : MembershipSource::Posterior;
}

json fit_metrics(const FittedModel& fit, const DynamicNetwork& net) {
  json j;
  j["engine"] = fit.engine;
  j["iterations"] = fit.iters;
  j["converged"] = fit.converged;
  j["stop_reason"] = fit.stop_reason;
  j["lower_bound"] = fit.lower_bound;
  j["objective"] = fit.objective;
  j["heldout_loglik"] = std::isnan(fit.heldout_loglik) ? json(nullptr) : json(fit.heldout_loglik);
  j["trace"] = fit.trace;
  j["B_logodds"] = matrix_rows(fit.hyper.B);
  j["B_prob"] = matrix_rows(fit.hyper.B.unaryExpr([](double b) { return logistic(b); }));
  json gamma = json::object();
  for (int i = 0; i < net.d_cols(); ++i) gamma[net.d_names()[i]] = fit.hyper.gamma[i];
  j["gamma"] = gamma;
  json beta = json::array();
  for (const auto& b : fit.hyper.beta) beta.push_back(matrix_rows(b));
  j["beta"] = beta;
  j["x_names"] = net.x_names();
  j["transitions"] = matrix_rows(fit.trans_hat);
  j["modal_states"] = modal_states(fit.vparams.kappa);
  j["state_probs"] = matrix_rows(fit.vparams.kappa.transpose());
  if (fit.se) {
    j["se"] = {{"B", matrix_rows(fit.se->B)}, {"gamma", vector_json(fit.se->gamma)}};
  }
  j["warnings"] = fit.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const Common& c, const SimulateArgs& a, CLI::App* sub) {
  DgpPreset p = DgpPreset::named(a.preset);
  if (a.nodes > 0) p.N = a.nodes;
  if (a.periods > 0) {
    // Truncate the schedule, or extend it with its last state.
    p.schedule.resize(static_cast<std::size_t>(a.periods), p.schedule.back());
    p.T = a.periods;
  }
  p.directed = !a.undirected;
  Run run = open_run(c, sub);
  const Simulation sim = generate(p, c.seed);
  const DynamicNetwork& net = sim.net;
  write_network(net, (run.dir / "edges.csv").string(), (run.dir / "monadic.csv").string(),
                (run.dir / "dyadic.csv").string());
  write_memberships(run.dir / "truth_memberships.csv", net.node_ids(), net.period_labels(), net.node_periods(),
                    sim.truth.pi);
  json truth;
  truth["B_prob"] = matrix_rows(sim.truth.B_probs);
  truth["gamma"] = vector_json(sim.truth.gamma);
  json beta = json::array();
  for (const auto& b : sim.truth.beta_states) beta.push_back(matrix_rows(b));
  truth["beta"] = beta;
  std::vector<int> states;
  for (int s : sim.truth.latent.s) states.push_back(s + 1);
  truth["states"] = states;
  write_json(run.dir / "truth.json", truth);

  double edges = 0;
  for (const auto& d : net.dyads()) edges += d.y;
  json m;
  m["preset"] = a.preset;
  m["nodes"] = net.num_nodes();
  m["periods"] = net.num_periods();
  m["dyads"] = net.num_dyads();
  m["edges"] = edges;
  m["density"] = edges / net.num_dyads();
  m["states"] = states;
  write_json(run.dir / "metrics.json", m);
  run.note("dyads " + std::to_string(net.num_dyads()) + " edges " + std::to_string(static_cast<long>(edges)));
  run.finish();
  return 0;
}

int cmd_fit(const Common& c, const DataArgs& d, const ModelArgs& ma, const FitArgs& fa, CLI::App* sub) {
  const DataSource src = data_source(d);
  Run run = open_run(c, sub);
  const DynamicNetwork net = load(src, run);
  const ModelSpec spec = make_spec(ma, net.directed());
  InitConfig ic = fa.init;
  ic.seed = c.seed;
  std::vector<std::string> warnings;
  FittedModel fit;
  if (fa.engine == "vem") {
    VemConfig vc = fa.vem;
    vc.seed = c.seed;
    vc.on_iteration = [&](int it, double v) {
      const std::string line = "iter " + std::to_string(it) + " elbo " + format_double(v);
      std::cout << line << std::endl;
      run.note(line);
    };
    const InitialState init = initialize(net, spec, ic, &warnings);
    fit = fit_vem(net, spec, init, vc);
    fit.warnings.insert(fit.warnings.begin(), warnings.begin(), warnings.end());
  } else {
    SviConfig sc = fa.svi;
    sc.seed = c.seed;
    const bool scored = sc.holdout_frac > 0.0;
    sc.on_step = [&](int s, double v) {
      const std::string line =
          "step " + std::to_string(s) + (scored ? " heldout_loglik " : " param_change ") + format_double(v);
      std::cout << line << std::endl;
      run.note(line);
    };
    fit = fit_svi(net, spec, sc, ic);
  }
  for (const auto& w : fit.warnings) run.warn(w);
  run.note("stop " + fit.stop_reason + " after " + std::to_string(fit.iters));

  json cfg;
  cfg["data"] = source_json(src);
  cfg["run"] = snapshot(sub);
  save_model((run.dir / "model.json").string(), fit, NetworkMeta::of(net), cfg);
  write_memberships(run.dir / "memberships.csv", net.node_ids(), net.period_labels(), net.node_periods(),
                    fit.pi_hat);
  write_json(run.dir / "metrics.json", fit_metrics(fit, net));
  run.finish();
  return 0;
}

int cmd_predict(const Common& c, const DataArgs& d, const ModelInput& mi, CLI::App* sub) {
  Run run = open_run(c, sub);
  const ModelFile mf = load_model(mi.model);
  const DynamicNetwork net = model_network(mf, d, run);
  const Eigen::VectorXd p = dyad_probs(mf.model, net, membership_source(mi.source));
  std::ofstream f(run.dir / "predictions.csv");
  f << "time,node_a,node_b,y,p\n";
  std::vector<double> scores;
  std::vector<int> labels;
  double ll = 0;
  for (int i = 0; i < net.num_dyads(); ++i) {
    const Dyad& dy = net.dyads()[i];
    f << net.period_labels()[dy.period] << ',' << net.node_ids()[net.node_periods()[dy.sender].node] << ','
      << net.node_ids()[net.node_periods()[dy.receiver].node] << ',' << format_double(dy.y) << ','
      << format_double(p[i]) << '\n';
    scores.push_back(p[i]);
    labels.push_back(dy.y > 0.5);
    const double q = std::clamp(p[i], kThetaClamp, 1.0 - kThetaClamp);
    ll += dy.y > 0.5 ? std::log(q) : std::log1p(-q);
  }
  json m;
  m["dyads"] = net.num_dyads();
  m["mean_loglik"] = net.num_dyads() ? ll / net.num_dyads() : 0.0;
  m["source"] = mi.source;
  const AurocResult a = auroc(scores, labels);
  if (a.positives > 0 && a.negatives > 0) {
    m["auroc"] = a.auc;
    m["auroc_sd"] = a.sd;
  }
  write_json(run.dir / "metrics.json", m);
  run.finish();
  return 0;
}

int cmd_forecast(const Common& c, const DataArgs& d, const ModelInput& mi, const ForecastArgs& fa, CLI::App* sub) {
  Run run = open_run(c, sub);
  const ModelFile mf = load_model(mi.model);
  const DynamicNetwork net = model_network(mf, d, run);
  ForecastConfig fc;
  fc.horizon = fa.horizon;
  fc.carry_forward = true;
  fc.draws = fa.draws;
  fc.seed = c.seed;
  if (!fa.peace_column.empty()) {
    const auto& names = net.d_names();
    const auto it = std::find(names.begin(), names.end(), fa.peace_column);
    if (it == names.end()) throw UsageError("--peace-column: no dyadic covariate '" + fa.peace_column + "'");
    fc.peace_column = static_cast<int>(it - names.begin());
  }
  const Forecast fc_out = forecast(mf.model, net, fc);
  const int T = net.num_periods();
  const int first = net.np_begin(T - 1);

  std::ofstream states(run.dir / "states.csv");
  states << "step" << header("state_", mf.model.spec.M) << '\n';
  std::ofstream mem(run.dir / "memberships.csv");
  mem << "step,node" << header("g", mf.model.spec.K) << '\n';
  std::ofstream dy(run.dir / "forecast.csv");
  dy << "step,node_a,node_b,p\n";
  std::vector<int> last;
  for (int i = 0; i < net.num_dyads(); ++i) {
    if (net.dyads()[i].period == T - 1) last.push_back(i);
  }
  json steps = json::array();
  for (int h = 0; h < fc.horizon; ++h) {
    states << h + 1 << row_values(fc_out.state_probs[h]) << '\n';
    const Eigen::MatrixXd& pi = fc_out.memberships[h];
    for (Eigen::Index r = 0; r < pi.cols(); ++r) {
      mem << h + 1 << ',' << net.node_ids()[net.node_periods()[first + r].node] << row_values(pi.col(r)) << '\n';
    }
    const Eigen::VectorXd& p = fc_out.dyad_probs[h];
    for (std::size_t j = 0; j < last.size(); ++j) {
      const Dyad& x = net.dyads()[last[j]];
      dy << h + 1 << ',' << net.node_ids()[net.node_periods()[x.sender].node] << ','
         << net.node_ids()[net.node_periods()[x.receiver].node] << ',' << format_double(p[static_cast<Eigen::Index>(j)])
         << '\n';
    }
    steps.push_back({{"step", h + 1},
                     {"state_probs", vector_json(fc_out.state_probs[h])},
                     {"mean_prob", p.size() ? p.mean() : 0.0}});
  }
  write_json(run.dir / "metrics.json", {{"horizon", fc.horizon}, {"steps", steps}});
  run.finish();
  return 0;
}

int cmd_effects(const Common& c, const DataArgs& d, const ModelInput& mi, const EffectArgs& ea,
                const CLI::Option* cap_opt, CLI::App* sub) {
  if (ea.covariate.empty()) throw UsageError("--covariate is required");
  Run run = open_run(c, sub);
  const ModelFile mf = load_model(mi.model);
  const DynamicNetwork net = model_network(mf, d, run);
  CovariateShift shift;
  shift.covariate = ea.covariate;
  shift.delta = ea.delta;
  if (cap_opt->count() > 0) shift.cap = ea.cap;
  shift.cap_at_observed = ea.cap_at_observed;
  const EffectAggregation agg = ea.by == "overall" ? EffectAggregation::Overall
                                : ea.by == "node"  ? EffectAggregation::ByNode
                                                   : EffectAggregation::ByNodePeriod;
  const auto est = covariate_effect(mf.model, net, shift, agg, membership_source(mi.source));
  std::ofstream f(run.dir / "effects.csv");
  f << "node,period,effect,dyads\n";
  json rows = json::array();
  double weighted = 0;
  long total = 0;
  for (const auto& e : est) {
    const std::string node = e.node < 0 ? "all" : net.node_ids()[e.node];
    const std::string period = e.period < 0 ? "all" : net.period_labels()[e.period];
    f << node << ',' << period << ',' << format_double(e.effect) << ',' << e.dyads << '\n';
    if (e.dyads > 0) {
      weighted += e.effect * e.dyads;
      total += e.dyads;
    }
  }
  json m;
  m["covariate"] = ea.covariate;
  m["delta"] = ea.delta;
  m["aggregation"] = ea.by;
  m["estimates"] = est.size();
  m["dyad_weighted_mean"] = total ? weighted / static_cast<double>(total) : 0.0;
  write_json(run.dir / "metrics.json", m);
  run.finish();
  return 0;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int cmd_auroc(const Common& c, const AurocArgs& a, CLI::App* sub) {
  if (a.input.empty()) throw UsageError("--input is required");
  Run run = open_run(c, sub);
  std::ifstream in(a.input);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(a.input + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto head = split_csv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(head.begin(), head.end(), name);
    if (it == head.end()) throw ParseError(a.input + ":1: no column '" + name + "'");
    return static_cast<std::size_t>(it - head.begin());
  };
  const std::size_t sc = column(a.score_column), lc = column(a.label_column);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = a.input + ":" + std::to_string(lineno) + ": ";
    if (cells.size() <= std::max(sc, lc)) throw ParseError(where + "too few columns");
    try {
      scores.push_back(std::stod(cells[sc]));
      const double y = std::stod(cells[lc]);
      if (y != 0.0 && y != 1.0) throw ParseError(where + "label must be 0 or 1");
      labels.push_back(y == 1.0);
    } catch (const std::logic_error&) {
      throw ParseError(where + "not a number");
    }
  }
  const AurocResult r = auroc(scores, labels);
  std::ofstream roc(run.dir / "roc.csv");
  roc << "threshold,fpr,tpr\n";
  for (const auto& p : roc_curve(scores, labels)) {
    roc << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
  }
  write_json(run.dir / "metrics.json",
             {{"auroc", r.auc}, {"sd", r.sd}, {"positives", r.positives}, {"negatives", r.negatives}});
  std::cout << "auroc " << format_double(r.auc) << " sd " << format_double(r.sd) << '\n';
  run.finish();
  return 0;
}

int cmd_online(const Common& c, const DataArgs& d, const ModelArgs& ma, const FitArgs& fa, const OnlineArgs& oa,
               CLI::App* sub) {
  const DataSource src = data_source(d);
  Run run = open_run(c, sub);
  const DynamicNetwork net = load(src, run);
  const ModelSpec spec = make_spec(ma, net.directed());
  std::vector<int> ends = oa.ends;
  if (ends.empty()) {
    for (int t = 1; t <= net.num_periods(); ++t) ends.push_back(t);
  }
  VemConfig vc = fa.vem;
  vc.seed = c.seed;
  InitConfig ic = fa.init;
  ic.seed = c.seed;
  std::vector<std::string> warnings;
  const auto fits = online_refit(net, spec, ends, vc, ic, &warnings);
  for (const auto& w : warnings) run.warn(w);
  json windows = json::array();
  for (std::size_t w = 0; w < fits.size(); ++w) {
    const FittedModel& f = fits[w];
    windows.push_back({{"end", ends[w]},
                       {"last_period", net.period_labels()[ends[w] - 1]},
                       {"iterations", f.iters},
                       {"converged", f.converged},
                       {"lower_bound", f.lower_bound},
                       {"modal_states", modal_states(f.vparams.kappa)},
                       {"B_prob", matrix_rows(f.hyper.B.unaryExpr([](double b) { return logistic(b); }))}});
    std::cout << "window " << ends[w] << " iterations " << f.iters << " bound " << format_double(f.lower_bound)
              << std::endl;
    run.note("window " + std::to_string(ends[w]) + " done");
  }
  const FittedModel& final_fit = fits.back();
  json cfg;
  cfg["data"] = source_json(src);
  cfg["run"] = snapshot(sub);
  save_model((run.dir / "model.json").string(), final_fit, NetworkMeta::of(net), cfg);
  write_memberships(run.dir / "memberships.csv", net.node_ids(), net.period_labels(), net.node_periods(),
                    final_fit.pi_hat);
  write_json(run.dir / "metrics.json", {{"windows", windows}});
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic mixed-membership stochastic blockmodel"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  DataArgs data;
  ModelArgs model;
  FitArgs fit;
  SimulateArgs sim;
  ModelInput input;
  ForecastArgs fc;
  EffectArgs eff;
  AurocArgs roc;
  OnlineArgs online;
  std::map<std::string, std::function<int(CLI::App*)>> handlers;

  auto* s_sim = app.add_subcommand("simulate", "Draw a synthetic dynamic network");
  add_common(s_sim, common);
  s_sim->add_option("--preset", sim.preset)->check(CLI::IsMember({"easy", "medium", "hard"}));
  s_sim->add_option("--nodes", sim.nodes, "Override the preset node count");
  s_sim->add_option("--periods", sim.periods, "Override the period count (schedule truncated or extended)");
  s_sim->add_flag("--undirected", sim.undirected);
  handlers["simulate"] = [&](CLI::App* s) { return cmd_simulate(common, sim, s); };

  auto* s_fit = app.add_subcommand("fit", "Fit a model");
  add_common(s_fit, common);
  add_data(s_fit, data, true);
  add_model(s_fit, model);
  s_fit->add_option("--engine", fit.engine)->check(CLI::IsMember({"vem", "svi"}));
  add_vem(s_fit, fit.vem);
  add_svi(s_fit, fit.svi);
  add_init(s_fit, fit.init);
  handlers["fit"] = [&](CLI::App* s) { return cmd_fit(common, data, model, fit, s); };

  auto* s_pred = app.add_subcommand("predict", "Edge probabilities of the modeled dyads");
  add_common(s_pred, common);
  add_model_input(s_pred, input);
  add_data(s_pred, data, false);
  handlers["predict"] = [&](CLI::App* s) { return cmd_predict(common, data, input, s); };

  auto* s_fc = app.add_subcommand("forecast", "Forecast states, memberships and edges past the last period");
  add_common(s_fc, common);
  add_model_input(s_fc, input);
  add_data(s_fc, data, false);
  s_fc->add_option("--horizon", fc.horizon)->check(CLI::PositiveNumber);
  s_fc->add_option("--peace-column", fc.peace_column, "Dyadic covariate counting periods since the last edge");
  s_fc->add_option("--draws", fc.draws)->check(CLI::PositiveNumber);
  handlers["forecast"] = [&](CLI::App* s) { return cmd_forecast(common, data, input, fc, s); };

  auto* s_eff = app.add_subcommand("effects", "Change in edge probability under a covariate shift");
  add_common(s_eff, common);
  ModelInput eff_input{"", "prior"};
  add_model_input(s_eff, eff_input);
  add_data(s_eff, data, false);
  s_eff->add_option("--covariate", eff.covariate, "Monadic covariate name");
  s_eff->add_option("--delta", eff.delta);
  auto* cap_opt = s_eff->add_option("--cap", eff.cap, "Shifted values do not pass this bound");
  s_eff->add_flag("--cap-at-observed", eff.cap_at_observed);
  s_eff->add_option("--by", eff.by)->check(CLI::IsMember({"overall", "node", "node-period"}));
  handlers["effects"] = [&](CLI::App* s) { return cmd_effects(common, data, eff_input, eff, cap_opt, s); };

  auto* s_roc = app.add_subcommand("eval-auroc", "Area under the ROC curve of a score file");
  add_common(s_roc, common);
  s_roc->add_option("--input", roc.input, "CSV with a header row")->check(CLI::ExistingFile);
  s_roc->add_option("--score-column", roc.score_column);
  s_roc->add_option("--label-column", roc.label_column);
  handlers["eval-auroc"] = [&](CLI::App* s) { return cmd_auroc(common, roc, s); };

  auto* s_on = app.add_subcommand("online-fit", "Refit on expanding windows of periods");
  add_common(s_on, common);
  add_data(s_on, data, true);
  add_model(s_on, model);
  add_vem(s_on, fit.vem);
  add_init(s_on, fit.init);
  s_on->add_option("--ends", online.ends, "Window ends (periods, 1-based); default every period")->delimiter(',');
  handlers["online-fit"] = [&](CLI::App* s) { return cmd_online(common, data, model, fit, online, s); };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!common.config.empty()) apply_config(sub, common.config);
    if (sub->get_option("--seed")->count() == 0) throw UsageError("--seed is required");
    if (common.out.empty()) throw UsageError("--out is required");
#ifdef _OPENMP
    if (common.threads > 0) omp_set_num_threads(common.threads);
#endif
    return handlers.at(sub->get_name())(sub);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
