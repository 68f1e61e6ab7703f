#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "karl/actor_critic.hpp"
#include "karl/environments.hpp"
#include "karl/koopman.hpp"
#include "karl/serialization.hpp"
#include "karl/skvi.hpp"

namespace karl {

enum class Method { LQR, SKVI, SAKC, SAC_V, SAC_Q };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct AblationSettings {
  std::vector<std::size_t> batch_sizes{8192, 12288, 16384, 20480, 24576};
  std::vector<std::size_t> action_counts{61, 81, 101, 121, 141};
  std::vector<std::size_t> epochs{90, 110, 130, 150, 170, 190};
  std::vector<std::size_t> orders{1, 2, 3, 4};
  std::vector<std::size_t> paths{60, 80, 100, 120, 140};
  std::vector<std::size_t> path_steps{100, 200, 300, 400, 500};
};

struct ExperimentConfig {
  EnvironmentSpec env;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  // Random-agent data for the Koopman tensor: paths x steps_per_path transitions.
  std::size_t data_paths = 100;
  std::size_t data_steps_per_path = 300;
  std::string dataset_path;  // optional; replaces collection when set
  std::string tensor_path;   // optional; replaces fitting when set
  std::size_t phi_order = 2;
  std::size_t psi_order = 2;
  double tensor_ridge = 1e-6;

  SkviConfig skvi;
  std::size_t grid_count = 101;
  AcConfig ac;
  std::size_t eval_episodes = 100;

  AblationSettings ablation;
  std::filesystem::path out_dir = ".";
  std::size_t jobs = 1;
};

/// Defaults for one environment.
ExperimentConfig default_config(EnvKind kind);
/// Nested JSON config, e.g. {"env": {"kind": "fluid_flow", "R_scale": 1}, "seeds": [0, 1]}.
/// Unknown keys are rejected with ConfigError.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Uniform-random actions within the bounds; the environment resets every
/// steps_per_path steps (or early if the state becomes non-finite).
std::vector<DatasetRow> collect_paths(const EnvironmentSpec& env, std::size_t paths,
                                      std::size_t steps_per_path, Rng& rng);
/// n_steps transitions in episodes of env.episode_len.
std::vector<DatasetRow> collect(const EnvironmentSpec& env, std::size_t n_steps, Rng& rng);

/// Dataset (loaded or collected with rng) and tensor (loaded or fitted).
std::vector<Transition> experiment_data(const ExperimentConfig& cfg, Rng& rng);
std::shared_ptr<const KoopmanTensor> experiment_tensor(const ExperimentConfig& cfg,
                                                       const std::vector<Transition>& data);

SkviModel train_skvi(const ExperimentConfig& cfg, std::shared_ptr<const KoopmanTensor> tensor,
                     const std::vector<Transition>& data, Rng& rng, SkviResult* info = nullptr);
LqrModel make_lqr_model(const EnvironmentSpec& env);

struct EvalResult {
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed;
  double mean = 0.0;
  double std = 0.0;  // sample std across seeds
};

/// Per-seed mean over `episodes` rollouts, then the cross-seed mean.
EvalResult evaluate(const Policy& policy, const EnvironmentSpec& env, std::size_t episodes,
                    const std::vector<std::uint64_t>& seeds);
std::string eval_csv(const EvalResult& result, const std::string& label);

/// Trains `method` with the given seed (data, training and evaluation use
/// independent derived streams) and returns its mean evaluation return.
double train_and_evaluate(Method method, const ExperimentConfig& cfg, std::uint64_t seed);

/// Per-seed returns of train_and_evaluate, run on cfg.jobs threads.
std::vector<double> seed_sweep(Method method, const ExperimentConfig& cfg);

struct AblationGrid {
  std::string name;
  std::string row_name;
  std::string col_name;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  Matrix mean;                           // NaN for failed cells
  Matrix pct_diff;                       // 100 * (best - mean) / |best|
  std::vector<std::string> cell_errors;  // row-major, empty when the cell succeeded
};

/// Generic sweep: evaluates cell(row, col, seed) for every seed on cfg.jobs
/// threads. A throwing cell is recorded and does not abort the sweep.
AblationGrid run_grid(const std::string& name, const std::string& row_name,
                      const std::string& col_name, const std::vector<std::size_t>& rows,
                      const std::vector<std::size_t>& cols,
                      const std::vector<std::uint64_t>& seeds, std::size_t jobs,
                      const std::function<double(std::size_t, std::size_t, std::uint64_t)>& cell);
void finalize_grid(AblationGrid& grid);

/// "skvi-batch", "skvi-compute", "sakc-monomials" or "sakc-data".
AblationGrid ablate(const std::string& which, const ExperimentConfig& cfg);
void write_grid(const AblationGrid& grid, const std::filesystem::path& dir);

/// "V(x) = c0 + c1*term1 ..." ordered by |coefficient|, zero terms omitted.
std::string interpret(const Vector& w, const MonomialBasis& basis, int precision = 6);
/// Copy of w with the named terms set to zero. Throws ConfigError for unknown names.
Vector sparsify(const Vector& w, const MonomialBasis& basis, const std::vector<std::string>& zero);
/// Copy of w keeping only the named terms.
Vector keep_terms(const Vector& w, const MonomialBasis& basis, const std::vector<std::string>& keep);

struct RunRecord {
  std::string algo;
  std::string env;
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  std::size_t step = 0;
  double episodic_return = 0.0;
  double wall_time = 0.0;
};

std::string record_header();
std::string record_row(const RunRecord& r);
std::vector<RunRecord> read_records(const std::filesystem::path& path);

struct SummaryRow {
  std::string algo;
  std::string env;
  std::size_t bin_start = 0;  // inclusive step
  std::size_t bin_end = 0;    // exclusive step
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and sample std of episodic returns per (algo, env, step bin).
std::vector<SummaryRow> report(const std::vector<RunRecord>& records, std::size_t bin_width);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Keeps freed heap memory in-process (glibc only). Training allocates and
/// frees ~0.5 MB activation buffers every step; returning them to the OS each
/// time roughly doubles the step cost. Call once at program start.
void tune_allocator();

/// Runs f(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f);

}  // namespace karl
