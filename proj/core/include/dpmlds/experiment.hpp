#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpmlds/changepoint.hpp"
#include "dpmlds/cluster_process.hpp"
#include "dpmlds/deconv.hpp"
#include "dpmlds/mcmc.hpp"
#include "dpmlds/statespace.hpp"

namespace dpmlds {

// --- time series files -----------------------------------------------------

/// Reads "t,z1[,z2,...]" with rows t = 1, 2, ... Throws DataError naming the
/// line for malformed rows, gaps and dimension mismatches.
Series load_timeseries(const std::string& path);

/// Writes the same format with round-trip precision.
void write_timeseries(const std::string& path, const Series& z);

/// Formats a double with enough digits to round-trip.
std::string format_double(double x);

/// A numeric CSV file with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws DataError when absent.
  std::size_t column(const std::string& name) const;
};

/// Reads a comma-separated numeric table; every row must have as many
/// fields as the header. Throws DataError naming the line.
CsvTable read_csv_table(const std::string& path);

// --- posterior predictive density --------------------------------------------

struct GridSpec {
  double lo = -4.0;
  double hi = 4.0;
  std::size_t points = 401;
  std::size_t mc_draws = 4000;  // G0 draws for the fresh-cluster term
  std::uint64_t seed = 0;
};

struct DensityGrid {
  std::vector<double> y;
  std::vector<double> density;
};

/// Average over retained iterations of
/// [sum_k n_k N(y; theta_k) + alpha g0(y)] / (T' + alpha), where g0 is the
/// prior predictive of one fresh cluster estimated from NIW draws. Uses the
/// first coordinate of vector-valued clusters. Throws ConfigError for a
/// trace without urn snapshots.
DensityGrid density_grid(const ChainTrace& trace, const GridSpec& grid);

/// The same from explicit snapshots.
DensityGrid density_grid(const std::vector<UrnSnapshot>& urns, const GridSpec& grid);

// --- experiment configuration -----------------------------------------------

enum class Mode { Mcmc, Rbpf, DeconvBench, ChangePoint, Simulate };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);

/// Noise-side process description for custom models.
struct ProcessSpec {
  std::string type = "dpm";  // dpm | spike_dpm | finite
  double alpha = 1.0;
  std::optional<NiwParams> base;
  std::optional<double> lambda;          // fixed non-spike probability
  std::optional<std::pair<double, double>> lambda_beta;  // (zeta, tau)
  std::vector<WeightedAtom> atoms;       // finite
  std::optional<std::size_t> spike_index;
  std::optional<AlphaPrior> alpha_prior; // alpha sampled when set

  std::unique_ptr<ClusterProcess> build() const;
};

struct ModelSpec {
  std::string preset = "custom";  // custom | deconv | changepoint
  // custom
  MatrixXd f, g, h;
  VectorXd init_mean;
  MatrixXd init_cov;
  ProcessSpec v, w;
  // deconv
  DeconvPriors deconv;
  DeconvVariant variant = DeconvVariant::M1;
  VectorXd deconv_h;  // fixed filter for the particle filter
  // changepoint
  ChangePointPriors changepoint;
};

struct RunSpec {
  std::size_t burn_in = 0;
  std::size_t retained = 100;
  bool joint_update = true;
  bool sample_hyper = true;
  std::size_t particles = 1000;
  std::size_t lag = 0;
  double ess_threshold = -1.0;
  std::string algorithm = "mcmc";  // changepoint mode: mcmc | rbpf
  std::vector<DeconvVariant> variants = all_variants();
};

struct IoSpec {
  std::string input;   // observation file
  std::string truth;   // optional ground truth: "t,v" (deconv) or "t,jump" (changepoint)
  std::string output = "out";
};

struct GeneratorSpec {
  std::string preset = "deconv";  // deconv | changepoint
  DeconvGenerator deconv;
  ChangePointSynth changepoint;
};

struct ExperimentConfig {
  Mode mode = Mode::Mcmc;
  std::vector<std::uint64_t> seeds{0};
  ModelSpec model;
  RunSpec run;
  IoSpec io;
  GeneratorSpec generator;
  GridSpec grid;
  std::string source;  // the configuration text as read

  std::uint64_t seed() const { return seeds.front(); }
};

/// Parses the JSON configuration. Unknown fields are errors (ConfigError).
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<Mode> mode;
  bool quiet = false;
};

/// Runs the experiment and writes its artifacts; exceptions propagate.
void run_experiment(ExperimentConfig config, const RunOptions& options = {});

/// Exit status of the command line tool: 0 success, 2 configuration error,
/// 3 data error, 4 numerical failure or particle degeneracy, 1 otherwise.
int run(const ExperimentConfig& config, const RunOptions& options = {});

/// Loads the configuration file and runs it, mapping errors to exit codes.
int run(const std::string& config_path, const RunOptions& options = {});

}  // namespace dpmlds
