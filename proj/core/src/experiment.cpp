#include "dpmlds/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dpmlds/errors.hpp"
#include "dpmlds/rbpf.hpp"

namespace dpmlds {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// --- JSON helpers -------------------------------------------------------------

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("'" + ctx + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("unknown field '" + ctx + "." + key + "'");
  }
}

double as_number(const json& j, const std::string& ctx) {
  if (!j.is_number()) throw ConfigError("'" + ctx + "' must be a number");
  return j.get<double>();
}

std::size_t as_count(const json& j, const std::string& ctx) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError("'" + ctx + "' must be a nonnegative integer");
  }
  return j.get<std::size_t>();
}

bool as_bool(const json& j, const std::string& ctx) {
  if (!j.is_boolean()) throw ConfigError("'" + ctx + "' must be a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& ctx) {
  if (!j.is_string()) throw ConfigError("'" + ctx + "' must be a string");
  return j.get<std::string>();
}

VectorXd as_vector(const json& j, const std::string& ctx) {
  if (j.is_number()) return VectorXd::Constant(1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ConfigError("'" + ctx + "' must be a nonempty array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = as_number(j[i], ctx);
  return v;
}

MatrixXd as_matrix(const json& j, const std::string& ctx) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ConfigError("'" + ctx + "' must be a number or an array of rows");
  }
  const std::size_t cols = j[0].size();
  MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ConfigError("'" + ctx + "' rows must have equal length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Index>(r), static_cast<Index>(c)) = as_number(j[r][c], ctx);
    }
  }
  return m;
}

NiwParams parse_niw(const json& j, const std::string& ctx) {
  check_keys(j, {"mu0", "kappa0", "nu0", "lambda0"}, ctx);
  for (const char* k : {"mu0", "kappa0", "nu0", "lambda0"}) {
    if (!j.contains(k)) throw ConfigError("missing field '" + ctx + "." + k + "'");
  }
  NiwParams p;
  p.mu0 = as_vector(j["mu0"], ctx + ".mu0");
  p.kappa0 = as_number(j["kappa0"], ctx + ".kappa0");
  p.nu0 = as_number(j["nu0"], ctx + ".nu0");
  p.lambda0 = as_matrix(j["lambda0"], ctx + ".lambda0");
  p.validate();
  return p;
}

AlphaPrior parse_alpha_prior(const json& j, const std::string& ctx) {
  check_keys(j, {"eta", "nu"}, ctx);
  AlphaPrior a;
  if (j.contains("eta")) a.eta = as_number(j["eta"], ctx + ".eta");
  if (j.contains("nu")) a.nu = as_number(j["nu"], ctx + ".nu");
  if (!(a.eta > 0.0) || !(a.nu > 0.0)) throw ConfigError("'" + ctx + "' entries must be positive");
  return a;
}

std::vector<WeightedAtom> parse_atoms(const json& j, const std::string& ctx, bool scalar_var) {
  if (!j.is_array() || j.empty()) throw ConfigError("'" + ctx + "' must be a nonempty array");
  std::vector<WeightedAtom> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string c = ctx + "[" + std::to_string(i) + "]";
    const char* cov_key = scalar_var ? "var" : "cov";
    check_keys(j[i], {"weight", "mean", cov_key}, c);
    for (const char* k : {"weight", "mean", cov_key}) {
      if (!j[i].contains(k)) throw ConfigError("missing field '" + c + "." + k + "'");
    }
    out.push_back({make_atom(GaussianCluster(as_vector(j[i]["mean"], c + ".mean"),
                                             as_matrix(j[i][cov_key], c + "." + cov_key))),
                   as_number(j[i]["weight"], c + ".weight")});
  }
  return out;
}

ProcessSpec parse_process(const json& j, const std::string& ctx) {
  check_keys(j, {"type", "alpha", "base", "lambda", "lambda_beta", "atoms", "spike_index",
                 "alpha_prior"},
             ctx);
  ProcessSpec p;
  if (j.contains("type")) p.type = as_string(j["type"], ctx + ".type");
  if (p.type != "dpm" && p.type != "spike_dpm" && p.type != "finite") {
    throw ConfigError("'" + ctx + ".type' must be dpm, spike_dpm or finite");
  }
  if (j.contains("alpha")) p.alpha = as_number(j["alpha"], ctx + ".alpha");
  if (j.contains("base")) p.base = parse_niw(j["base"], ctx + ".base");
  if (j.contains("lambda")) p.lambda = as_number(j["lambda"], ctx + ".lambda");
  if (j.contains("lambda_beta")) {
    const VectorXd b = as_vector(j["lambda_beta"], ctx + ".lambda_beta");
    if (b.size() != 2) throw ConfigError("'" + ctx + ".lambda_beta' must be [zeta, tau]");
    p.lambda_beta = std::make_pair(b(0), b(1));
  }
  if (j.contains("atoms")) p.atoms = parse_atoms(j["atoms"], ctx + ".atoms", false);
  if (j.contains("spike_index")) p.spike_index = as_count(j["spike_index"], ctx + ".spike_index");
  if (j.contains("alpha_prior")) p.alpha_prior = parse_alpha_prior(j["alpha_prior"], ctx + ".alpha_prior");
  if (p.type == "finite" && p.atoms.empty()) throw ConfigError("'" + ctx + "' needs atoms");
  if (p.type != "finite" && !p.base) throw ConfigError("'" + ctx + "' needs a base measure");
  if (p.type == "spike_dpm" && !p.lambda && !p.lambda_beta) {
    throw ConfigError("'" + ctx + "' needs lambda or lambda_beta");
  }
  return p;
}

void parse_model(const json& j, ModelSpec& m) {
  if (!j.is_object()) throw ConfigError("'model' must be an object");
  if (j.contains("preset")) m.preset = as_string(j["preset"], "model.preset");
  if (m.preset == "custom") {
    check_keys(j, {"preset", "F", "G", "H", "init_mean", "init_cov", "v", "w"}, "model");
    for (const char* k : {"F", "G", "H", "init_mean", "init_cov", "v", "w"}) {
      if (!j.contains(k)) throw ConfigError(std::string("missing field 'model.") + k + "'");
    }
    m.f = as_matrix(j["F"], "model.F");
    m.g = as_matrix(j["G"], "model.G");
    m.h = as_matrix(j["H"], "model.H");
    m.init_mean = as_vector(j["init_mean"], "model.init_mean");
    m.init_cov = as_matrix(j["init_cov"], "model.init_cov");
    m.v = parse_process(j["v"], "model.v");
    m.w = parse_process(j["w"], "model.w");
  } else if (m.preset == "deconv") {
    check_keys(j, {"preset", "variant", "filter_length", "sigma_w2", "sigma_h", "zeta", "tau",
                   "alpha_init", "alpha_prior", "lambda", "ig_u", "ig_v", "base", "h"},
               "model");
    DeconvPriors& p = m.deconv;
    if (j.contains("variant")) m.variant = parse_variant(as_string(j["variant"], "model.variant"));
    if (j.contains("filter_length")) p.filter_length = as_count(j["filter_length"], "model.filter_length");
    if (j.contains("sigma_w2")) p.sigma_w2 = as_number(j["sigma_w2"], "model.sigma_w2");
    if (j.contains("sigma_h")) p.sigma_h = as_number(j["sigma_h"], "model.sigma_h");
    if (j.contains("zeta")) p.zeta = as_number(j["zeta"], "model.zeta");
    if (j.contains("tau")) p.tau = as_number(j["tau"], "model.tau");
    if (j.contains("alpha_init")) p.alpha_init = as_number(j["alpha_init"], "model.alpha_init");
    if (j.contains("alpha_prior")) p.alpha_prior = parse_alpha_prior(j["alpha_prior"], "model.alpha_prior");
    if (j.contains("lambda")) p.lambda = as_number(j["lambda"], "model.lambda");
    if (j.contains("ig_u")) p.ig_u = as_number(j["ig_u"], "model.ig_u");
    if (j.contains("ig_v")) p.ig_v = as_number(j["ig_v"], "model.ig_v");
    if (j.contains("base")) p.base = parse_niw(j["base"], "model.base");
    if (j.contains("h")) {
      m.deconv_h = as_vector(j["h"], "model.h");
      p.filter_length = static_cast<std::size_t>(m.deconv_h.size());
    }
    if (p.filter_length < 1) throw ConfigError("'model.filter_length' must be >= 1");
  } else if (m.preset == "changepoint") {
    check_keys(j, {"preset", "lambda_w", "sigma1_w", "sigma2_w", "lambda_v", "base", "alpha",
                   "alpha_prior", "level_var", "slope_var", "threshold"},
               "model");
    ChangePointPriors& p = m.changepoint;
    if (j.contains("lambda_w")) p.lambda_w = as_number(j["lambda_w"], "model.lambda_w");
    if (j.contains("sigma1_w")) p.sigma1_w = as_number(j["sigma1_w"], "model.sigma1_w");
    if (j.contains("sigma2_w")) p.sigma2_w = as_number(j["sigma2_w"], "model.sigma2_w");
    if (j.contains("lambda_v")) p.lambda_v = as_number(j["lambda_v"], "model.lambda_v");
    if (j.contains("base")) p.base = parse_niw(j["base"], "model.base");
    if (j.contains("alpha")) p.alpha = as_number(j["alpha"], "model.alpha");
    if (j.contains("alpha_prior")) p.alpha_prior = parse_alpha_prior(j["alpha_prior"], "model.alpha_prior");
    if (j.contains("level_var")) p.level_var = as_number(j["level_var"], "model.level_var");
    if (j.contains("slope_var")) p.slope_var = as_number(j["slope_var"], "model.slope_var");
    if (j.contains("threshold")) p.threshold = as_number(j["threshold"], "model.threshold");
    p.validate();
  } else {
    throw ConfigError("'model.preset' must be custom, deconv or changepoint");
  }
}

void parse_run(const json& j, RunSpec& r) {
  check_keys(j, {"burn_in", "retained", "iterations", "joint_update", "sample_hyper", "particles",
                 "lag", "ess_threshold", "algorithm", "variants"},
             "run");
  if (j.contains("iterations")) {
    if (j.contains("retained")) {
      throw ConfigError("'run.iterations' and 'run.retained' are mutually exclusive");
    }
    const std::size_t total = as_count(j["iterations"], "run.iterations");
    r.burn_in = j.contains("burn_in") ? as_count(j["burn_in"], "run.burn_in") : 3 * total / 4;
    if (r.burn_in >= total) throw ConfigError("'run.burn_in' must be below 'run.iterations'");
    r.retained = total - r.burn_in;
  } else {
    if (j.contains("retained")) r.retained = as_count(j["retained"], "run.retained");
    if (j.contains("burn_in")) r.burn_in = as_count(j["burn_in"], "run.burn_in");
  }
  if (r.retained < 1) throw ConfigError("'run.retained' must be >= 1");
  if (j.contains("joint_update")) r.joint_update = as_bool(j["joint_update"], "run.joint_update");
  if (j.contains("sample_hyper")) r.sample_hyper = as_bool(j["sample_hyper"], "run.sample_hyper");
  if (j.contains("particles")) r.particles = as_count(j["particles"], "run.particles");
  if (j.contains("lag")) r.lag = as_count(j["lag"], "run.lag");
  if (j.contains("ess_threshold")) r.ess_threshold = as_number(j["ess_threshold"], "run.ess_threshold");
  if (j.contains("algorithm")) r.algorithm = as_string(j["algorithm"], "run.algorithm");
  if (r.algorithm != "mcmc" && r.algorithm != "rbpf") {
    throw ConfigError("'run.algorithm' must be mcmc or rbpf");
  }
  if (j.contains("variants")) {
    if (!j["variants"].is_array() || j["variants"].empty()) {
      throw ConfigError("'run.variants' must be a nonempty array");
    }
    r.variants.clear();
    for (const auto& v : j["variants"]) r.variants.push_back(parse_variant(as_string(v, "run.variants")));
  }
}

void parse_generator(const json& j, GeneratorSpec& g) {
  if (!j.is_object()) throw ConfigError("'generator' must be an object");
  if (j.contains("preset")) g.preset = as_string(j["preset"], "generator.preset");
  if (g.preset == "deconv") {
    check_keys(j, {"preset", "horizon", "h", "lambda", "sigma_w2", "fv"}, "generator");
    auto& d = g.deconv;
    if (j.contains("horizon")) d.horizon = as_count(j["horizon"], "generator.horizon");
    if (j.contains("h")) d.h = as_vector(j["h"], "generator.h");
    if (j.contains("lambda")) d.lambda = as_number(j["lambda"], "generator.lambda");
    if (j.contains("sigma_w2")) d.sigma_w2 = as_number(j["sigma_w2"], "generator.sigma_w2");
    if (j.contains("fv")) d.fv = parse_atoms(j["fv"], "generator.fv", true);
  } else if (g.preset == "changepoint") {
    check_keys(j, {"preset", "horizon", "level0", "slope0", "jump_prob", "forced_jumps",
                   "jump_size", "lambda_w", "sigma1_w", "sigma2_w"},
               "generator");
    auto& c = g.changepoint;
    if (j.contains("horizon")) c.horizon = as_count(j["horizon"], "generator.horizon");
    if (j.contains("level0")) c.level0 = as_number(j["level0"], "generator.level0");
    if (j.contains("slope0")) c.slope0 = as_number(j["slope0"], "generator.slope0");
    if (j.contains("jump_prob")) c.jump_prob = as_number(j["jump_prob"], "generator.jump_prob");
    if (j.contains("forced_jumps")) {
      if (!j["forced_jumps"].is_array()) throw ConfigError("'generator.forced_jumps' must be an array");
      c.forced_jumps.clear();
      for (const auto& t : j["forced_jumps"]) c.forced_jumps.push_back(as_count(t, "generator.forced_jumps"));
    }
    if (j.contains("jump_size")) c.jump_size = as_number(j["jump_size"], "generator.jump_size");
    if (j.contains("lambda_w")) c.lambda_w = as_number(j["lambda_w"], "generator.lambda_w");
    if (j.contains("sigma1_w")) c.sigma1_w = as_number(j["sigma1_w"], "generator.sigma1_w");
    if (j.contains("sigma2_w")) c.sigma2_w = as_number(j["sigma2_w"], "generator.sigma2_w");
  } else {
    throw ConfigError("'generator.preset' must be deconv or changepoint");
  }
}

void parse_grid(const json& j, GridSpec& g) {
  check_keys(j, {"lo", "hi", "points", "mc_draws"}, "grid");
  if (j.contains("lo")) g.lo = as_number(j["lo"], "grid.lo");
  if (j.contains("hi")) g.hi = as_number(j["hi"], "grid.hi");
  if (j.contains("points")) g.points = as_count(j["points"], "grid.points");
  if (j.contains("mc_draws")) g.mc_draws = as_count(j["mc_draws"], "grid.mc_draws");
  if (!(g.hi > g.lo) || g.points < 2) throw ConfigError("'grid' needs hi > lo and points >= 2");
}

// --- output helpers -----------------------------------------------------------

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

struct EstimateRow {
  VectorXd mean;
  MatrixXd cov;
  std::optional<double> n_eff;
  std::optional<double> jump_prob;
};

void write_estimates(const fs::path& path, const std::vector<EstimateRow>& rows) {
  auto out = open_out(path);
  const Index nx = rows.empty() ? 0 : rows.front().mean.size();
  out << "t";
  for (Index i = 1; i <= nx; ++i) out << ",xhat_" << i;
  for (Index i = 1; i <= nx; ++i) out << ",cov_diag_" << i;
  const bool has_neff = !rows.empty() && rows.front().n_eff.has_value();
  const bool has_jump = !rows.empty() && rows.front().jump_prob.has_value();
  if (has_neff) out << ",n_eff";
  if (has_jump) out << ",jump_prob";
  out << '\n';
  for (std::size_t t = 0; t < rows.size(); ++t) {
    out << t + 1;
    for (Index i = 0; i < nx; ++i) out << ',' << format_double(rows[t].mean(i));
    for (Index i = 0; i < nx; ++i) out << ',' << format_double(rows[t].cov(i, i));
    if (has_neff) out << ',' << format_double(*rows[t].n_eff);
    if (has_jump) out << ',' << format_double(*rows[t].jump_prob);
    out << '\n';
  }
}

/// Generic rectangular CSV writer.
void write_columns(const fs::path& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& cols) {
  auto out = open_out(path);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  const std::size_t n = cols.empty() ? 0 : cols.front().size();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out << (k ? "," : "") << format_double(cols[k][r]);
    }
    out << '\n';
  }
}

std::vector<double> time_axis(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i + 1);
  return t;
}

json vector_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

json nan_safe(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json process_json(const ProcessSummary& s) {
  return {{"alpha", nan_safe(s.alpha)}, {"distinct", s.distinct}, {"assigned", s.assigned},
          {"spikes", s.spikes}};
}

void write_chain_trace(const fs::path& path, const ChainTrace& trace) {
  auto out = open_out(path);
  std::size_t retained_index = 0;
  for (const auto& it : trace.iterations) {
    if (it.iteration <= trace.burn_in) continue;
    json rec{{"iteration", it.iteration},
             {"v", process_json(it.v)},
             {"w", process_json(it.w)},
             {"acceptance_rate", it.acceptance_rate}};
    for (const auto& [k, v] : it.extra) rec[k] = v;
    if (retained_index < trace.urns.size()) {
      json atoms = json::array();
      for (const auto& a : trace.urns[retained_index].atoms) {
        atoms.push_back({{"count", a.weight}, {"mean", vector_json(a.atom->mean())},
                         {"cov", matrix_json(a.atom->cov())}});
      }
      rec["v_clusters"] = atoms;
    }
    ++retained_index;
    out << rec.dump() << '\n';
  }
}

std::vector<EstimateRow> chain_estimates(const ChainTrace& trace, bool with_jump) {
  std::vector<EstimateRow> rows;
  for (std::size_t t = 1; t < trace.mmse_mean.size(); ++t) {
    EstimateRow r{trace.mmse_mean[t], trace.mmse_cov[t], std::nullopt, std::nullopt};
    if (with_jump) r.jump_prob = trace.v_nonspike_freq[t - 1];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_alpha_trace(const fs::path& path, const ChainTrace& trace) {
  std::vector<double> it, av, dv;
  for (const auto& r : trace.iterations) {
    it.push_back(static_cast<double>(r.iteration));
    av.push_back(r.v.alpha);
    dv.push_back(static_cast<double>(r.v.distinct));
  }
  write_columns(path, {"iteration", "alpha_v", "distinct_v"}, {it, av, dv});
}

void write_density(const fs::path& path, const DensityGrid& g) {
  write_columns(path, {"y", "density"}, {g.y, g.density});
}

/// Signal against estimate and residuals. The residual is truth minus
/// estimate when the truth is known, else the observation minus the
/// predicted observation.
void write_signal_plots(const fs::path& dir, const Series& z, const std::vector<EstimateRow>& est,
                        const MatrixXd& h, const std::vector<double>* truth) {
  const std::size_t T = est.size();
  std::vector<double> zc(T), xh(T), res(T);
  for (std::size_t t = 0; t < T; ++t) {
    zc[t] = z[t](0);
    xh[t] = est[t].mean(0);
    res[t] = truth ? (*truth)[t] - xh[t] : z[t](0) - (h.row(0) * est[t].mean)(0);
  }
  if (truth) {
    write_columns(dir / "signal_estimate.csv", {"t", "z1", "truth", "estimate"},
                  {time_axis(T), zc, *truth, xh});
  } else {
    write_columns(dir / "signal_estimate.csv", {"t", "z1", "estimate"}, {time_axis(T), zc, xh});
  }
  write_columns(dir / "residuals.csv", {"t", "residual"}, {time_axis(T), res});
}

void write_jump_plot(const fs::path& dir, const std::vector<double>& prob) {
  write_columns(dir / "jump_prob.csv", {"t", "jump_prob"}, {time_axis(prob.size()), prob});
}

struct Outputs {
  fs::path dir;
  fs::path plot;
  json metrics = json::object();
};

Outputs prepare_outputs(const std::string& dir) {
  Outputs o;
  o.dir = dir;
  o.plot = o.dir / "plotdata";
  std::error_code ec;
  fs::create_directories(o.plot, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
  return o;
}

Series require_input(const ExperimentConfig& c) {
  if (c.io.input.empty()) throw ConfigError("'io.input' is required for this mode");
  return load_timeseries(c.io.input);
}

std::vector<double> load_truth_column(const std::string& path, const std::string& column,
                                      std::size_t horizon) {
  const CsvTable table = read_csv_table(path);
  const std::size_t k = table.column(column);
  if (table.rows.size() != horizon) {
    throw DataError("'" + path + "' has " + std::to_string(table.rows.size()) +
                    " rows, expected " + std::to_string(horizon));
  }
  std::vector<double> out;
  for (const auto& r : table.rows) out.push_back(r[k]);
  return out;
}

ChainConfig chain_config(const ExperimentConfig& c) {
  ChainConfig cc;
  cc.burn_in = c.run.burn_in;
  cc.retained = c.run.retained;
  cc.seed = c.seed();
  cc.sweep.joint_update = c.run.joint_update;
  cc.sample_hyper = c.run.sample_hyper;
  cc.keep_smoothed_means = false;
  return cc;
}

RbpfConfig rbpf_config(const ExperimentConfig& c) {
  RbpfConfig rc;
  rc.particles = c.run.particles;
  rc.lag = c.run.lag;
  rc.ess_threshold = c.run.ess_threshold;
  rc.seed = c.seed();
  return rc;
}

LinearGaussianModel custom_model(const ModelSpec& m) {
  return LinearGaussianModel(m.f, m.g, m.h, m.init_mean, m.init_cov);
}

void warn(const RunOptions& o, const std::string& msg) {
  if (!o.quiet) std::cerr << "warning: " << msg << '\n';
}

// --- modes --------------------------------------------------------------------

void write_rbpf_outputs(Outputs& o, const RbpfRun& run, bool with_jump) {
  std::vector<EstimateRow> rows;
  for (std::size_t t = 0; t < run.steps.size(); ++t) {
    EstimateRow r{run.smoothed[t].mean, run.smoothed[t].cov, run.steps[t].ess, std::nullopt};
    if (with_jump) r.jump_prob = run.jump_prob[t];
    rows.push_back(std::move(r));
  }
  write_estimates(o.dir / "estimates.csv", rows);
  auto out = open_out(o.dir / "trace.jsonl");
  for (std::size_t t = 0; t < run.steps.size(); ++t) {
    const auto& s = run.steps[t];
    json rec{{"t", s.t},
             {"ess", s.ess},
             {"resampled", s.resampled},
             {"mean_distinct_v", s.mean_distinct_v},
             {"filtered_mean", vector_json(s.filtered.mean)},
             {"filtered_cov_diag", vector_json(s.filtered.cov.diagonal())}};
    if (with_jump) rec["jump_prob"] = run.jump_prob[t];
    out << rec.dump() << '\n';
  }
  std::vector<double> ess, resampled;
  for (const auto& s : run.steps) {
    ess.push_back(s.ess);
    resampled.push_back(s.resampled ? 1.0 : 0.0);
  }
  write_columns(o.plot / "ess.csv", {"t", "n_eff", "resampled"},
                {time_axis(ess.size()), ess, resampled});
  o.metrics["resample_count"] =
      std::count(resampled.begin(), resampled.end(), 1.0);
}

void run_mcmc_mode(const ExperimentConfig& c, Outputs& o, const RunOptions& opts) {
  const Series z = require_input(c);
  const auto& m = c.model;
  if (m.preset == "deconv") {
    DeconvRunConfig rc;
    rc.variant = m.variant;
    rc.priors = m.deconv;
    rc.burn_in = c.run.burn_in;
    rc.retained = c.run.retained;
    rc.seed = c.seed();
    std::vector<double> truth;
    if (!c.io.truth.empty()) truth = load_truth_column(c.io.truth, "v", z.size());
    const DeconvResult r = run_deconv(z, truth.empty() ? nullptr : &truth, rc);
    const auto rows = chain_estimates(r.trace, false);
    write_estimates(o.dir / "estimates.csv", rows);
    write_chain_trace(o.dir / "trace.jsonl", r.trace);
    MatrixXd hrow = MatrixXd::Zero(1, static_cast<Index>(m.deconv.filter_length) + 1);
    hrow(0, 0) = 1.0;
    hrow.rightCols(hrow.cols() - 1) = r.h_trace.back().transpose();
    write_signal_plots(o.plot, z, rows, hrow, truth.empty() ? nullptr : &truth);
    write_alpha_trace(o.plot / "alpha_trace.csv", r.trace);
    std::vector<std::string> hh{"iteration"};
    std::vector<std::vector<double>> hc(1);
    for (std::size_t i = 0; i < r.h_trace.size(); ++i) hc[0].push_back(static_cast<double>(i + 1));
    for (Index k = 0; k < r.h_trace.front().size(); ++k) {
      hh.push_back("h" + std::to_string(k + 1));
      hc.emplace_back();
      for (const auto& h : r.h_trace) hc.back().push_back(h(k));
    }
    hh.push_back("sigma_w2");
    hc.push_back(r.sigma_w2_trace);
    write_columns(o.plot / "h_trace.csv", hh, hc);
    if (!r.trace.urns.empty() && r.trace.urns.front().base) {
      write_density(o.plot / "density_grid.csv", density_grid(r.trace, c.grid));
    }
    if (!truth.empty()) o.metrics["e_mse"] = r.e_mse;
    o.metrics["h_mmse"] = [&] {
      VectorXd s = VectorXd::Zero(r.h_trace.front().size());
      for (std::size_t i = c.run.burn_in; i < r.h_trace.size(); ++i) s += r.h_trace[i];
      return vector_json(s / static_cast<double>(r.h_trace.size() - c.run.burn_in));
    }();
    return;
  }
  if (m.preset == "changepoint") {
    const ChainTrace trace = run_changepoint_mcmc(z, m.changepoint, chain_config(c));
    const auto rows = chain_estimates(trace, true);
    write_estimates(o.dir / "estimates.csv", rows);
    write_chain_trace(o.dir / "trace.jsonl", trace);
    write_signal_plots(o.plot, z, rows, (MatrixXd(1, 2) << 1.0, 0.0).finished(), nullptr);
    write_jump_plot(o.plot, jump_posterior(trace));
    write_alpha_trace(o.plot / "alpha_trace.csv", trace);
    return;
  }
  const LinearGaussianModel model = custom_model(m);
  const auto v = m.v.build();
  const auto w = m.w.build();
  if (m.w.type != "finite" && !observability_rank(model).observable) {
    warn(opts, "augmented observability matrix is rank deficient; the observation-noise "
               "density may not be identifiable");
    o.metrics["observable"] = false;
  }
  const ChainTrace trace = run_chain(model, z, *v, *w, chain_config(c));
  const bool spike = m.v.type == "spike_dpm";
  const auto rows = chain_estimates(trace, spike);
  write_estimates(o.dir / "estimates.csv", rows);
  write_chain_trace(o.dir / "trace.jsonl", trace);
  write_signal_plots(o.plot, z, rows, model.h(1), nullptr);
  write_alpha_trace(o.plot / "alpha_trace.csv", trace);
  if (spike) write_jump_plot(o.plot, jump_posterior(trace));
  if (!trace.urns.empty() && trace.urns.front().base) {
    write_density(o.plot / "density_grid.csv", density_grid(trace, c.grid));
  }
}

void run_rbpf_mode(const ExperimentConfig& c, Outputs& o) {
  const Series z = require_input(c);
  const auto& m = c.model;
  if (m.preset == "changepoint") {
    const RbpfRun run = run_changepoint_rbpf(z, m.changepoint, rbpf_config(c));
    write_rbpf_outputs(o, run, true);
    write_jump_plot(o.plot, run.jump_prob);
    return;
  }
  if (m.preset == "deconv") {
    if (m.variant == DeconvVariant::M8) {
      throw ConfigError("the particle filter needs a known sigma_w2 (variant M8 is MCMC only)");
    }
    const VectorXd h = m.deconv_h.size() ? m.deconv_h
                                         : VectorXd::Zero(static_cast<Index>(m.deconv.filter_length));
    const auto model = build_deconv_statespace(h);
    const auto v = deconv_v_process(m.variant, m.deconv);
    const FiniteMixtureProcess w({{make_atom(GaussianCluster(VectorXd::Zero(1),
                                                             MatrixXd::Constant(1, 1, m.deconv.sigma_w2))),
                                   1.0}});
    const RbpfRun run = run_rbpf(model, z, *v, w, rbpf_config(c));
    write_rbpf_outputs(o, run, false);
    return;
  }
  const LinearGaussianModel model = custom_model(m);
  const auto v = m.v.build();
  const auto w = m.w.build();
  const bool spike = m.v.type == "spike_dpm";
  const RbpfRun run = run_rbpf(model, z, *v, *w, rbpf_config(c));
  write_rbpf_outputs(o, run, spike);
  if (spike) write_jump_plot(o.plot, run.jump_prob);
}

void run_changepoint_mode(const ExperimentConfig& c, Outputs& o) {
  if (c.model.preset != "changepoint") {
    throw ConfigError("changepoint mode needs model.preset = changepoint");
  }
  Series z;
  std::vector<std::size_t> jumps;
  bool have_truth = false;
  if (!c.io.input.empty()) {
    z = load_timeseries(c.io.input);
    if (!c.io.truth.empty()) {
      const auto flags = load_truth_column(c.io.truth, "jump", z.size());
      for (std::size_t t = 0; t < flags.size(); ++t) {
        if (flags[t] != 0.0) jumps.push_back(t + 1);
      }
      have_truth = true;
    }
  } else {
    RngStream rng(c.seed(), 100);
    const ChangePointData d = synth_changepoint_data(c.generator.changepoint, rng);
    z = d.z;
    jumps = d.jump_times;
    have_truth = true;
    write_timeseries((o.dir / "data.csv").string(), z);
  }
  std::vector<double> prob;
  std::vector<EstimateRow> rows;
  if (c.run.algorithm == "rbpf") {
    const RbpfRun run = run_changepoint_rbpf(z, c.model.changepoint, rbpf_config(c));
    write_rbpf_outputs(o, run, true);
    prob = run.jump_prob;
    for (std::size_t t = 0; t < run.smoothed.size(); ++t) {
      rows.push_back({run.smoothed[t].mean, run.smoothed[t].cov, std::nullopt, std::nullopt});
    }
  } else {
    const ChainTrace trace = run_changepoint_mcmc(z, c.model.changepoint, chain_config(c));
    rows = chain_estimates(trace, true);
    write_estimates(o.dir / "estimates.csv", rows);
    write_chain_trace(o.dir / "trace.jsonl", trace);
    write_alpha_trace(o.plot / "alpha_trace.csv", trace);
    prob = jump_posterior(trace);
  }
  write_signal_plots(o.plot, z, rows, (MatrixXd(1, 2) << 1.0, 0.0).finished(), nullptr);
  write_jump_plot(o.plot, prob);
  std::vector<std::size_t> detected;
  for (std::size_t t = 0; t < prob.size(); ++t) {
    if (prob[t] > c.model.changepoint.threshold) detected.push_back(t + 1);
  }
  o.metrics["detected_times"] = detected;
  if (have_truth) {
    const DetectionSummary s = evaluate_detection(prob, jumps, c.model.changepoint.threshold);
    o.metrics["true_jumps"] = jumps;
    o.metrics["hits"] = s.hits;
    o.metrics["false_alarms"] = s.false_alarms;
    o.metrics["false_alarm_rate"] = s.false_alarm_rate;
  }
}

void run_bench_mode(const ExperimentConfig& c, Outputs& o) {
  DeconvBenchConfig bc;
  bc.generator = c.generator.deconv;
  bc.priors = c.model.deconv;
  bc.variants = c.run.variants;
  bc.seeds = c.seeds;
  bc.burn_in = c.run.burn_in;
  bc.retained = c.run.retained;
  bool first = true;
  std::vector<UrnSnapshot> pooled;
  std::vector<std::vector<double>> m1_alpha;
  auto on_run = [&](DeconvVariant v, std::uint64_t, const DeconvResult& r) {
    if (first) {
      write_estimates(o.dir / "estimates.csv", chain_estimates(r.trace, false));
      write_chain_trace(o.dir / "trace.jsonl", r.trace);
      first = false;
    }
    if (v == DeconvVariant::M1) {
      pooled.insert(pooled.end(), r.trace.urns.begin(), r.trace.urns.end());
      m1_alpha.push_back(r.alpha_trace);
    }
  };
  const auto rows = run_deconv_benchmark(bc, on_run);
  {
    auto out = open_out(o.dir / "table.csv");
    out << "statistic";
    for (const auto& r : rows) out << ',' << variant_name(r.variant);
    out << "\nmean";
    for (const auto& r : rows) out << ',' << format_double(r.mean);
    out << "\nstd";
    for (const auto& r : rows) out << ',' << format_double(r.stddev);
    out << "\nmedian";
    for (const auto& r : rows) out << ',' << format_double(r.median);
    out << '\n';
  }
  {
    std::vector<std::string> header{"seed"};
    std::vector<std::vector<double>> cols(1);
    for (std::uint64_t s : c.seeds) cols[0].push_back(static_cast<double>(s));
    for (const auto& r : rows) {
      header.push_back(variant_name(r.variant));
      cols.push_back(r.e_mse);
    }
    write_columns(o.plot / "e_mse_per_seed.csv", header, cols);
  }
  json table = json::object();
  for (const auto& r : rows) {
    table[variant_name(r.variant)] = {{"mean", r.mean}, {"std", r.stddev}, {"median", r.median},
                                      {"per_seed", r.e_mse}};
  }
  o.metrics["e_mse"] = table;
  if (!pooled.empty() && pooled.front().base) {
    write_density(o.plot / "density_grid.csv", density_grid(pooled, c.grid));
  }
  if (!m1_alpha.empty()) {
    write_columns(o.plot / "alpha_trace.csv", {"iteration", "alpha_v"},
                  {time_axis(m1_alpha.front().size()), m1_alpha.front()});
  }
}

void run_simulate_mode(const ExperimentConfig& c, Outputs& o) {
  RngStream rng(c.seed(), 100);
  if (c.generator.preset == "deconv") {
    const DeconvData d = simulate_deconv(c.generator.deconv, rng);
    write_timeseries((o.dir / "data.csv").string(), d.z);
    write_columns(o.dir / "truth.csv", {"t", "v"}, {time_axis(d.v.size()), d.v});
    o.metrics["horizon"] = d.z.size();
  } else {
    const ChangePointData d = synth_changepoint_data(c.generator.changepoint, rng);
    write_timeseries((o.dir / "data.csv").string(), d.z);
    std::vector<double> jump(d.z.size(), 0.0), outlier(d.z.size(), 0.0);
    for (std::size_t t : d.jump_times) jump[t - 1] = 1.0;
    for (std::size_t t : d.outlier_times) outlier[t - 1] = 1.0;
    write_columns(o.dir / "truth.csv", {"t", "level", "slope", "jump", "outlier"},
                  {time_axis(d.z.size()), d.level, d.slope, jump, outlier});
    o.metrics["horizon"] = d.z.size();
    o.metrics["jump_times"] = d.jump_times;
    o.metrics["outlier_times"] = d.outlier_times;
  }
}

}  // namespace

// --- density grid ---------------------------------------------------------------

DensityGrid density_grid(const std::vector<UrnSnapshot>& urns, const GridSpec& grid) {
  if (urns.empty()) throw ConfigError("density grid needs at least one retained iteration");
  if (!(grid.hi > grid.lo) || grid.points < 2) throw ConfigError("grid needs hi > lo and >= 2 points");
  DensityGrid out;
  out.y.resize(grid.points);
  out.density.assign(grid.points, 0.0);
  const double step = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
  for (std::size_t k = 0; k < grid.points; ++k) out.y[k] = grid.lo + step * static_cast<double>(k);

  std::vector<std::pair<NiwParams, std::vector<double>>> g0_cache;
  auto g0_on_grid = [&](const NiwParams& psi) -> const std::vector<double>& {
    for (const auto& [p, g] : g0_cache) {
      if (p == psi) return g;
    }
    RngStream rng(grid.seed, 0x9e0 + g0_cache.size());
    std::vector<double> g(grid.points, 0.0);
    const std::size_t draws = std::max<std::size_t>(grid.mc_draws, 1);
    for (std::size_t d = 0; d < draws; ++d) {
      const GaussianCluster c = sample_niw(psi, rng);
      const double mu = c.mean()(0);
      const double var = c.cov()(0, 0);
      for (std::size_t k = 0; k < grid.points; ++k) {
        const double r = out.y[k] - mu;
        g[k] += std::exp(-0.5 * r * r / var) / std::sqrt(2.0 * M_PI * var);
      }
    }
    for (double& x : g) x /= static_cast<double>(draws);
    g0_cache.emplace_back(psi, std::move(g));
    return g0_cache.back().second;
  };

  std::size_t used = 0;
  for (const auto& snap : urns) {
    const double alpha = snap.base ? snap.alpha : 0.0;
    double n = 0.0;
    for (const auto& a : snap.atoms) n += a.weight;
    if (n + alpha <= 0.0) continue;
    std::vector<double> dens(grid.points, 0.0);
    for (const auto& a : snap.atoms) {
      const double mu = a.atom->mean()(0);
      const double var = a.atom->cov()(0, 0);
      if (!(var > 0.0)) continue;
      for (std::size_t k = 0; k < grid.points; ++k) {
        const double r = out.y[k] - mu;
        dens[k] += a.weight * std::exp(-0.5 * r * r / var) / std::sqrt(2.0 * M_PI * var);
      }
    }
    if (alpha > 0.0) {
      const auto& g = g0_on_grid(*snap.base);
      for (std::size_t k = 0; k < grid.points; ++k) dens[k] += alpha * g[k];
    }
    for (std::size_t k = 0; k < grid.points; ++k) out.density[k] += dens[k] / (n + alpha);
    ++used;
  }
  if (used == 0) throw ConfigError("density grid: no retained iteration has DPM mass");
  for (double& d : out.density) d /= static_cast<double>(used);
  return out;
}

DensityGrid density_grid(const ChainTrace& trace, const GridSpec& grid) {
  if (trace.urns.empty()) throw ConfigError("trace holds no urn snapshots");
  return density_grid(trace.urns, grid);
}

// --- configuration ----------------------------------------------------------------

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Mcmc: return "mcmc";
    case Mode::Rbpf: return "rbpf";
    case Mode::DeconvBench: return "deconv-bench";
    case Mode::ChangePoint: return "changepoint";
    case Mode::Simulate: return "simulate";
  }
  return "mcmc";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::Mcmc, Mode::Rbpf, Mode::DeconvBench, Mode::ChangePoint, Mode::Simulate}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + name + "'");
}

std::unique_ptr<ClusterProcess> ProcessSpec::build() const {
  if (type == "finite") return std::make_unique<FiniteMixtureProcess>(atoms, spike_index);
  HyperSampling sampling;
  sampling.alpha_prior = alpha_prior;
  DpHyper hyper{alpha, BaseMeasure(*base)};
  if (type == "dpm") return std::make_unique<DpmProcess>(std::move(hyper), sampling);
  const SpikeWeight w = lambda ? SpikeWeight::fixed(*lambda)
                               : SpikeWeight::beta(lambda_beta->first, lambda_beta->second);
  return std::make_unique<SpikeDpmProcess>(std::move(hyper), w, sampling);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  check_keys(j, {"mode", "seed", "seeds", "model", "run", "io", "generator", "grid"}, "config");
  ExperimentConfig c;
  c.source = text;
  if (j.contains("mode")) c.mode = parse_mode(as_string(j["mode"], "mode"));
  if (j.contains("seed") && j.contains("seeds")) {
    throw ConfigError("'seed' and 'seeds' are mutually exclusive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("'seed' must be an unsigned integer");
    c.seeds = {j["seed"].get<std::uint64_t>()};
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array() || j["seeds"].empty()) {
      throw ConfigError("'seeds' must be a nonempty array");
    }
    c.seeds.clear();
    for (const auto& s : j["seeds"]) {
      if (!s.is_number_unsigned()) throw ConfigError("'seeds' entries must be unsigned integers");
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  if (j.contains("model")) parse_model(j["model"], c.model);
  if (j.contains("run")) parse_run(j["run"], c.run);
  if (j.contains("io")) {
    check_keys(j["io"], {"input", "truth", "output"}, "io");
    if (j["io"].contains("input")) c.io.input = as_string(j["io"]["input"], "io.input");
    if (j["io"].contains("truth")) c.io.truth = as_string(j["io"]["truth"], "io.truth");
    if (j["io"].contains("output")) c.io.output = as_string(j["io"]["output"], "io.output");
  }
  if (j.contains("generator")) parse_generator(j["generator"], c.generator);
  if (j.contains("grid")) parse_grid(j["grid"], c.grid);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

void run_experiment(ExperimentConfig config, const RunOptions& options) {
  if (options.mode) config.mode = *options.mode;
  if (options.seed) config.seeds = {*options.seed};
  const std::string out_dir = options.out_dir ? *options.out_dir : config.io.output;
  const auto start = std::chrono::steady_clock::now();
  Outputs o = prepare_outputs(out_dir);
  switch (config.mode) {
    case Mode::Mcmc: run_mcmc_mode(config, o, options); break;
    case Mode::Rbpf: run_rbpf_mode(config, o); break;
    case Mode::ChangePoint: run_changepoint_mode(config, o); break;
    case Mode::DeconvBench: run_bench_mode(config, o); break;
    case Mode::Simulate: run_simulate_mode(config, o); break;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json summary{{"mode", mode_name(config.mode)},
               {"seed", config.seed()},
               {"seeds", config.seeds},
               {"wall_seconds", wall},
               {"metrics", o.metrics}};
  try {
    summary["config"] = json::parse(config.source.empty() ? "{}" : config.source);
  } catch (const json::parse_error&) {
    summary["config"] = config.source;
  }
  auto out = open_out(o.dir / "summary.json");
  out << summary.dump(2) << '\n';
  if (!options.quiet) {
    std::cerr << mode_name(config.mode) << ": wrote " << o.dir.string() << " in " << wall << " s\n";
  }
}

int run(const ExperimentConfig& config, const RunOptions& options) {
  try {
    run_experiment(config, options);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "inference failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(const std::string& config_path, const RunOptions& options) {
  try {
    return run(load_experiment_config(config_path), options);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace dpmlds
