// karl: command-line front end for data collection, training, evaluation,
// ablation sweeps and value-function interpretation.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "karl/errors.hpp"
#include "karl/harness.hpp"
#include "karl/lqr.hpp"

using namespace karl;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::size_t jobs = 1;
  // environment overrides
  std::string env;
  std::optional<double> dt;
  std::optional<std::size_t> episode_len;
  std::optional<double> action_low;
  std::optional<double> action_high;
  std::optional<double> q_scale;
  std::optional<double> r_scale;
};

ExperimentConfig make_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (!g.env.empty()) {
    const EnvKind kind = parse_env_kind(g.env);
    if (g.config.empty() || cfg.env.kind != kind) cfg.env = make_environment(kind);
  }
  if (g.dt) cfg.env.dt = *g.dt;
  if (g.episode_len) cfg.env.episode_len = *g.episode_len;
  if (g.action_low) cfg.env.action_low.setConstant(*g.action_low);
  if (g.action_high) cfg.env.action_high.setConstant(*g.action_high);
  if (g.q_scale || g.r_scale) {
    set_cost_scales(cfg.env, g.q_scale.value_or(cfg.env.Q(0, 0)), g.r_scale.value_or(cfg.env.R(0, 0)));
  }
  cfg.env.validate();
  cfg.jobs = g.jobs;
  cfg.out_dir = g.out;
  return cfg;
}

std::filesystem::path out_file(const Globals& g, const std::string& name) {
  return std::filesystem::path(g.out) / name;
}

void print_eval(const EvalResult& r, const std::string& label) {
  std::cout << eval_csv(r, label);
  std::fprintf(stderr, "%s: mean %.4f  std %.4f over %zu seed(s)\n", label.c_str(), r.mean, r.std,
               r.seeds.size());
}

std::vector<std::uint64_t> eval_seeds(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& flag) {
  return flag.empty() ? cfg.seeds : flag;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Koopman-assisted reinforcement learning toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--env", g.env, "linear_system | fluid_flow | lorenz | double_well");
  app.add_option("--dt", g.dt, "Integration step");
  app.add_option("--episode-len", g.episode_len, "Steps per episode");
  app.add_option("--action-low", g.action_low, "Lower action bound (all coordinates)");
  app.add_option("--action-high", g.action_high, "Upper action bound (all coordinates)");
  app.add_option("--q-scale", g.q_scale, "State cost scale");
  app.add_option("--r-scale", g.r_scale, "Action cost scale");

  // collect
  auto* collect_cmd = app.add_subcommand("collect", "Random-agent transitions to CSV");
  std::optional<std::size_t> n_steps, n_paths, path_steps;
  std::string data_out = "dataset.csv";
  collect_cmd->add_option("--steps", n_steps, "Total transitions, episodes of episode_len");
  collect_cmd->add_option("--paths", n_paths, "Number of paths (with --path-steps)");
  collect_cmd->add_option("--path-steps", path_steps, "Steps per path");
  collect_cmd->add_option("--file", data_out, "File name inside --out");

  // fit-tensor
  auto* fit_cmd = app.add_subcommand("fit-tensor", "Fit a Koopman tensor");
  std::string data_in, tensor_out = "tensor.json";
  std::optional<std::size_t> phi_order, psi_order;
  std::optional<double> ridge;
  fit_cmd->add_option("--data", data_in, "Dataset CSV (collected when omitted)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--phi-order", phi_order, "State dictionary degree");
  fit_cmd->add_option("--psi-order", psi_order, "Action dictionary degree");
  fit_cmd->add_option("--ridge", ridge, "Ridge penalty");
  fit_cmd->add_option("--file", tensor_out, "File name inside --out");

  // skvi
  auto* skvi_cmd = app.add_subcommand("skvi", "Soft Koopman value iteration");
  std::string tensor_in, model_out;
  std::optional<std::size_t> actions, epochs, batch;
  std::optional<double> alpha, gamma;
  skvi_cmd->add_option("--tensor", tensor_in, "Tensor file (fitted when omitted)")->check(CLI::ExistingFile);
  skvi_cmd->add_option("--data", data_in, "Dataset CSV")->check(CLI::ExistingFile);
  skvi_cmd->add_option("--actions", actions, "Action grid size");
  skvi_cmd->add_option("--alpha", alpha, "Entropy temperature");
  skvi_cmd->add_option("--gamma", gamma, "Discount");
  skvi_cmd->add_option("--epochs", epochs, "Maximum iterations");
  skvi_cmd->add_option("--batch", batch, "States per iteration");
  skvi_cmd->add_option("--model", model_out, "Model file name inside --out");

  // actor-critic family
  std::optional<std::size_t> ac_steps;
  std::optional<double> ac_alpha;
  std::vector<CLI::App*> ac_cmds;
  for (const char* name : {"sakc", "sac-v", "sac-q"}) {
    auto* c = app.add_subcommand(name, std::string("Train ") + name);
    c->add_option("--tensor", tensor_in, "Tensor file (SAKC; fitted when omitted)")->check(CLI::ExistingFile);
    c->add_option("--data", data_in, "Dataset CSV for the tensor fit")->check(CLI::ExistingFile);
    c->add_option("--steps", ac_steps, "Environment steps");
    c->add_option("--alpha", ac_alpha, "Entropy temperature (initial value for sac-q)");
    c->add_option("--model", model_out, "Model file name inside --out");
    ac_cmds.push_back(c);
  }

  // lqr
  auto* lqr_cmd = app.add_subcommand("lqr", "LQR baseline");
  std::optional<std::size_t> episodes;
  lqr_cmd->add_option("--episodes", episodes, "Evaluation episodes per seed");
  lqr_cmd->add_option("--model", model_out, "Model file name inside --out");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a saved model");
  std::string model_in;
  std::vector<std::uint64_t> seeds;
  eval_cmd->add_option("--model", model_in, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--episodes", episodes, "Episodes per seed");
  eval_cmd->add_option("--seeds", seeds, "Evaluation seeds");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Hyperparameter sweep");
  std::string which;
  ablate_cmd->add_option("which", which, "skvi-batch | skvi-compute | sakc-monomials | sakc-data")
      ->required();

  // interpret
  auto* interp_cmd = app.add_subcommand("interpret", "Print a linear value function");
  std::vector<std::string> zero_terms, keep;
  int precision = 6;
  interp_cmd->add_option("--model", model_in, "SKVI or SAKC model")->required()->check(CLI::ExistingFile);
  interp_cmd->add_option("--zero", zero_terms, "Terms to zero out, e.g. x*y z^2");
  interp_cmd->add_option("--keep", keep, "Keep only these terms");
  interp_cmd->add_option("--episodes", episodes, "Episodes for the sparsified comparison");
  interp_cmd->add_option("--precision", precision, "Significant digits");

  // report
  auto* report_cmd = app.add_subcommand("report", "Summarize return logs");
  std::vector<std::string> runs;
  std::size_t bin = 1000;
  report_cmd->add_option("runs", runs, "Return-log CSV files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--bin", bin, "Bin width in steps")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig cfg = make_config(g);
    if (!data_in.empty()) cfg.dataset_path = data_in;
    if (!tensor_in.empty()) cfg.tensor_path = tensor_in;
    Rng rng(g.seed);

    if (collect_cmd->parsed()) {
      std::vector<DatasetRow> rows;
      if (n_steps) {
        if (*n_steps == 0) throw ConfigError("--steps must be >= 1");
        rows = collect(cfg.env, *n_steps, rng);
      } else {
        rows = collect_paths(cfg.env, n_paths.value_or(cfg.data_paths),
                             path_steps.value_or(cfg.data_steps_per_path), rng);
      }
      write_dataset(out_file(g, data_out), rows, cfg.env.state_dim, cfg.env.action_dim);
      std::fprintf(stderr, "wrote %zu transitions to %s\n", rows.size(),
                   out_file(g, data_out).string().c_str());
      return 0;
    }

    if (fit_cmd->parsed()) {
      if (phi_order) cfg.phi_order = *phi_order;
      if (psi_order) cfg.psi_order = *psi_order;
      if (ridge) cfg.tensor_ridge = *ridge;
      cfg.tensor_path.clear();
      const auto data = experiment_data(cfg, rng);
      const auto tensor = experiment_tensor(cfg, data);
      save_tensor(out_file(g, tensor_out), *tensor);
      std::fprintf(stderr, "fitted %zux%zu tensor on %zu samples -> %s\n", tensor->d_x(),
                   tensor->d_u(), data.size(), out_file(g, tensor_out).string().c_str());
      return 0;
    }

    if (skvi_cmd->parsed()) {
      if (actions) cfg.grid_count = *actions;
      if (alpha) cfg.skvi.alpha = *alpha;
      if (gamma) cfg.skvi.gamma = *gamma;
      if (epochs) cfg.skvi.max_iters = *epochs;
      if (batch) cfg.skvi.batch_size = *batch;
      Rng data_rng(derive_seed(g.seed, 101)), train_rng(derive_seed(g.seed, 102));
      const auto data = experiment_data(cfg, data_rng);
      SkviResult info;
      const SkviModel m = train_skvi(cfg, experiment_tensor(cfg, data), data, train_rng, &info);
      const auto path = out_file(g, model_out.empty() ? "skvi_model.json" : model_out);
      save_model(path, m);
      std::fprintf(stderr, "skvi: %zu iterations, ABE %.6g -> %s\n", info.iterations,
                   info.abe_history.back(), path.string().c_str());
      std::cout << interpret(m.weights.w, m.tensor->phi()) << '\n';
      return 0;
    }

    for (auto* c : ac_cmds) {
      if (!c->parsed()) continue;
      const Algo algo = parse_algo(c->get_name());
      if (ac_steps) cfg.ac.total_steps = *ac_steps;
      if (ac_alpha) cfg.ac.alpha = *ac_alpha;
      std::shared_ptr<const KoopmanTensor> tensor;
      if (algo == Algo::SAKC) {
        Rng data_rng(derive_seed(g.seed, 101));
        const auto data = cfg.tensor_path.empty() ? experiment_data(cfg, data_rng)
                                                  : std::vector<Transition>{};
        tensor = experiment_tensor(cfg, data);
      }
      const std::string name = algo_name(algo), env = env_name(cfg.env.kind);
      const auto log_path = out_file(g, name + "_returns.csv");
      std::ostringstream log;
      log << record_header() << '\n';
      std::cout << record_header() << '\n';
      const auto start = std::chrono::steady_clock::now();
      Rng train_rng(derive_seed(g.seed, 102));
      const TrainResult r = train(algo, cfg.env, cfg.ac, train_rng, tensor, [&](const EpisodeLog& e) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::string row = record_row({name, env, g.seed, e.episode, e.step, e.episodic_return, secs});
        std::cout << row << '\n' << std::flush;
        log << row << '\n';
      });
      write_text(log_path, log.str());
      const auto path = out_file(g, model_out.empty() ? name + "_model.json" : model_out);
      save_model(path, r.agent);
      std::fprintf(stderr, "%s: %zu episodes -> %s\n", name.c_str(), r.returns.size(),
                   path.string().c_str());
      return 0;
    }

    if (lqr_cmd->parsed()) {
      const LqrModel m = make_lqr_model(cfg.env);
      save_model(out_file(g, model_out.empty() ? "lqr_model.json" : model_out), m);
      const std::vector<std::uint64_t> s{g.seed};
      print_eval(evaluate(model_policy(m), cfg.env, episodes.value_or(cfg.eval_episodes), s), "lqr");
      return 0;
    }

    if (eval_cmd->parsed()) {
      const Model m = load_model(model_in);
      const EnvironmentSpec& env = model_env(m);
      print_eval(evaluate(model_policy(m), env, episodes.value_or(cfg.eval_episodes),
                          eval_seeds(cfg, seeds)),
                 model_kind(m));
      return 0;
    }

    if (ablate_cmd->parsed()) {
      const AblationGrid grid = ablate(which, cfg);
      write_grid(grid, g.out);
      std::ifstream in(std::filesystem::path(g.out) / (which + "_mean.csv"));
      std::cout << in.rdbuf();
      return 0;
    }

    if (interp_cmd->parsed()) {
      Model m = load_model(model_in);
      Vector w;
      const MonomialBasis* basis = nullptr;
      if (auto* s = std::get_if<SkviModel>(&m)) {
        w = s->weights.w;
        basis = &s->tensor->phi();
      } else if (auto* a = std::get_if<AgentState>(&m); a && a->algo == Algo::SAKC) {
        w = a->w;
        basis = &a->tensor->phi();
      } else {
        throw ConfigError("interpret needs an SKVI or SAKC model");
      }
      std::cout << interpret(w, *basis, precision) << '\n';
      if (zero_terms.empty() && keep.empty()) return 0;

      Vector sparse = keep.empty() ? w : keep_terms(w, *basis, keep);
      sparse = sparsify(sparse, *basis, zero_terms);
      std::cout << interpret(sparse, *basis, precision) << '\n';
      // Only SKVI models act through w directly, so only they can be re-scored.
      if (auto* s = std::get_if<SkviModel>(&m)) {
        const std::size_t n = episodes.value_or(cfg.eval_episodes);
        const auto ev_seeds = eval_seeds(cfg, {});
        const EvalResult full = evaluate(model_policy(m), s->env, n, ev_seeds);
        s->weights.w = sparse;
        const EvalResult cut = evaluate(model_policy(m), s->env, n, ev_seeds);
        std::printf("full,%s\nsparse,%s\npct_diff,%s\n", format_double(full.mean).c_str(),
                    format_double(cut.mean).c_str(),
                    format_double(100.0 * (full.mean - cut.mean) / std::abs(full.mean)).c_str());
      }
      return 0;
    }

    if (report_cmd->parsed()) {
      std::vector<RunRecord> all;
      for (const auto& f : runs) {
        auto recs = read_records(f);
        all.insert(all.end(), recs.begin(), recs.end());
      }
      const std::string csv = summary_csv(report(all, bin));
      write_text(out_file(g, "summary.csv"), csv);
      std::cout << csv;
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ModelFormat& e) {
    std::fprintf(stderr, "bad file: %s\n", e.what());
    return 2;
  } catch (const InsufficientData& e) {
    std::fprintf(stderr, "insufficient data: %s\n", e.what());
    return 2;
  } catch (const DimensionMismatch& e) {
    std::fprintf(stderr, "dimension mismatch: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    // NonFiniteState, SingularSystem, NoConvergence, NotEquilibrium
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
