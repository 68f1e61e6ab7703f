#include "karl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "karl/errors.hpp"
#include "karl/lqr.hpp"

namespace karl {

using nlohmann::json;

Method parse_method(const std::string& name) {
  if (name == "lqr") return Method::LQR;
  if (name == "skvi") return Method::SKVI;
  if (name == "sakc") return Method::SAKC;
  if (name == "sac-v" || name == "sac_v") return Method::SAC_V;
  if (name == "sac-q" || name == "sac_q") return Method::SAC_Q;
  throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::LQR: return "lqr";
    case Method::SKVI: return "skvi";
    case Method::SAKC: return "sakc";
    case Method::SAC_V: return "sac-v";
    case Method::SAC_Q: return "sac-q";
  }
  return "?";
}

ExperimentConfig default_config(EnvKind kind) {
  ExperimentConfig cfg;
  cfg.env = make_environment(kind);
  return cfg;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

Vector vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_env(const json& e, EnvironmentSpec& env) {
  check_keys(e,
             {"kind", "dt", "episode_len", "action_low", "action_high", "Q_scale", "R_scale",
              "noise_scale", "init_low", "init_high"},
             "env");
  if (e.contains("kind")) env = make_environment(parse_env_kind(e["kind"].get<std::string>()));
  read(e, "dt", env.dt);
  read(e, "episode_len", env.episode_len);
  read(e, "noise_scale", env.noise_scale);
  if (e.contains("action_low")) env.action_low = vec_from(e["action_low"]);
  if (e.contains("action_high")) env.action_high = vec_from(e["action_high"]);
  if (e.contains("init_low")) env.init_low = vec_from(e["init_low"]);
  if (e.contains("init_high")) env.init_high = vec_from(e["init_high"]);
  if (e.contains("Q_scale") || e.contains("R_scale")) {
    const double q = e.value("Q_scale", env.Q(0, 0));
    const double r = e.value("R_scale", env.R(0, 0));
    set_cost_scales(env, q, r);
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    check_keys(j,
               {"env", "seeds", "dataset", "tensor", "skvi", "actor_critic", "evaluation",
                "ablation", "out", "jobs"},
               "config");
    if (j.contains("env")) apply_env(j["env"], cfg.env);
    read(j, "seeds", cfg.seeds);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, {"paths", "steps_per_path", "path"}, "dataset");
      read(d, "paths", cfg.data_paths);
      read(d, "steps_per_path", cfg.data_steps_per_path);
      read(d, "path", cfg.dataset_path);
    }
    if (j.contains("tensor")) {
      const json& t = j["tensor"];
      check_keys(t, {"phi_order", "psi_order", "ridge", "path"}, "tensor");
      read(t, "phi_order", cfg.phi_order);
      read(t, "psi_order", cfg.psi_order);
      read(t, "ridge", cfg.tensor_ridge);
      read(t, "path", cfg.tensor_path);
    }
    if (j.contains("skvi")) {
      const json& s = j["skvi"];
      check_keys(s, {"alpha", "gamma", "epsilon", "norm_bound", "epochs", "batch_size", "grid",
                     "ridge"},
                 "skvi");
      read(s, "alpha", cfg.skvi.alpha);
      read(s, "gamma", cfg.skvi.gamma);
      read(s, "epsilon", cfg.skvi.epsilon);
      read(s, "norm_bound", cfg.skvi.norm_bound);
      read(s, "epochs", cfg.skvi.max_iters);
      read(s, "batch_size", cfg.skvi.batch_size);
      read(s, "ridge", cfg.skvi.ridge);
      read(s, "grid", cfg.grid_count);
    }
    if (j.contains("actor_critic")) {
      const json& a = j["actor_critic"];
      check_keys(a, {"hidden", "q_lr", "value_lr", "policy_lr", "alpha_lr", "alpha", "gamma",
                     "tau", "batch_size", "warmup", "steps", "buffer"},
                 "actor_critic");
      read(a, "hidden", cfg.ac.hidden);
      read(a, "q_lr", cfg.ac.q_lr);
      read(a, "value_lr", cfg.ac.value_lr);
      read(a, "policy_lr", cfg.ac.policy_lr);
      read(a, "alpha_lr", cfg.ac.alpha_lr);
      read(a, "alpha", cfg.ac.alpha);
      read(a, "gamma", cfg.ac.gamma);
      read(a, "tau", cfg.ac.tau);
      read(a, "batch_size", cfg.ac.batch_size);
      read(a, "warmup", cfg.ac.warmup_steps);
      read(a, "steps", cfg.ac.total_steps);
      read(a, "buffer", cfg.ac.buffer_capacity);
    }
    if (j.contains("evaluation")) {
      check_keys(j["evaluation"], {"episodes"}, "evaluation");
      read(j["evaluation"], "episodes", cfg.eval_episodes);
    }
    if (j.contains("ablation")) {
      const json& a = j["ablation"];
      check_keys(a, {"batch_sizes", "action_counts", "epochs", "orders", "paths", "path_steps"},
                 "ablation");
      read(a, "batch_sizes", cfg.ablation.batch_sizes);
      read(a, "action_counts", cfg.ablation.action_counts);
      read(a, "epochs", cfg.ablation.epochs);
      read(a, "orders", cfg.ablation.orders);
      read(a, "paths", cfg.ablation.paths);
      read(a, "path_steps", cfg.ablation.path_steps);
    }
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    read(j, "jobs", cfg.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.env.validate();
  if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (cfg.grid_count < 2) throw ConfigError("skvi.grid must be >= 2");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_text(path));
}

std::vector<DatasetRow> collect_paths(const EnvironmentSpec& env, std::size_t paths,
                                      std::size_t steps_per_path, Rng& rng) {
  Rng env_rng(derive_seed(rng(), 0));
  Rng act_rng(derive_seed(rng(), 1));
  std::vector<std::uniform_real_distribution<double>> dists;
  for (std::size_t i = 0; i < env.action_dim; ++i) {
    dists.emplace_back(env.action_low[static_cast<Eigen::Index>(i)],
                       env.action_high[static_cast<Eigen::Index>(i)]);
  }
  std::vector<DatasetRow> rows;
  rows.reserve(paths * steps_per_path);
  for (std::size_t p = 0; p < paths; ++p) {
    Vector x = reset(env, env_rng);
    for (std::size_t s = 0; s < steps_per_path; ++s) {
      Vector u(static_cast<Eigen::Index>(env.action_dim));
      for (std::size_t i = 0; i < env.action_dim; ++i) {
        // A degenerate interval [a, a] yields exactly a.
        const double lo = env.action_low[static_cast<Eigen::Index>(i)];
        const double hi = env.action_high[static_cast<Eigen::Index>(i)];
        u[static_cast<Eigen::Index>(i)] = lo == hi ? lo : dists[i](act_rng);
      }
      Vector next;
      try {
        next = step(env, x, u, env_rng);
      } catch (const NonFiniteState&) {
        break;
      }
      const double r = -cost(env, x, u);
      rows.push_back({p, s, {x, u, r, next, s + 1 == steps_per_path}});
      x = std::move(next);
    }
  }
  return rows;
}

std::vector<DatasetRow> collect(const EnvironmentSpec& env, std::size_t n_steps, Rng& rng) {
  if (n_steps == 0) throw ConfigError("collect: n_steps must be >= 1");
  const std::size_t len = env.episode_len;
  std::vector<DatasetRow> rows = collect_paths(env, (n_steps + len - 1) / len, len, rng);
  if (rows.size() > n_steps) rows.resize(n_steps);
  return rows;
}

std::vector<Transition> experiment_data(const ExperimentConfig& cfg, Rng& rng) {
  if (!cfg.dataset_path.empty()) return dataset_transitions(read_dataset(cfg.dataset_path));
  return dataset_transitions(
      collect_paths(cfg.env, cfg.data_paths, cfg.data_steps_per_path, rng));
}

std::shared_ptr<const KoopmanTensor> experiment_tensor(const ExperimentConfig& cfg,
                                                       const std::vector<Transition>& data) {
  if (!cfg.tensor_path.empty()) {
    auto t = std::make_shared<const KoopmanTensor>(load_tensor(cfg.tensor_path));
    if (t->phi().input_dim() != cfg.env.state_dim || t->psi().input_dim() != cfg.env.action_dim) {
      throw ConfigError("tensor file does not match the environment");
    }
    return t;
  }
  return std::make_shared<const KoopmanTensor>(
      fit_tensor(data, MonomialBasis(cfg.env.state_dim, cfg.phi_order),
                 MonomialBasis(cfg.env.action_dim, cfg.psi_order), cfg.tensor_ridge));
}

SkviModel train_skvi(const ExperimentConfig& cfg, std::shared_ptr<const KoopmanTensor> tensor,
                     const std::vector<Transition>& data, Rng& rng, SkviResult* info) {
  std::vector<Vector> states;
  states.reserve(data.size());
  for (const auto& t : data) states.push_back(t.x);
  const ActionGrid grid = ActionGrid::from_env(cfg.env, cfg.grid_count);
  SkviResult res = value_iteration(*tensor, cfg.env, states, grid, cfg.skvi, rng);
  SkviModel m;
  m.env = cfg.env;
  m.tensor = std::move(tensor);
  m.tensor_ref = cfg.tensor_path;
  m.weights = res.weights;
  m.grid = grid;
  m.alpha = cfg.skvi.alpha;
  m.gamma = cfg.skvi.gamma;
  if (info) *info = std::move(res);
  return m;
}

LqrModel make_lqr_model(const EnvironmentSpec& env) { return {env, solve_lqr(env)}; }

EvalResult evaluate(const Policy& policy, const EnvironmentSpec& env, std::size_t episodes,
                    const std::vector<std::uint64_t>& seeds) {
  if (episodes == 0) throw ConfigError("evaluate: episodes must be >= 1");
  EvalResult out;
  out.seeds = seeds;
  for (std::uint64_t s : seeds) {
    Rng rng(s);
    out.per_seed.push_back(mean_return(rollout(env, policy, rng, episodes, false)));
  }
  const double n = static_cast<double>(out.per_seed.size());
  out.mean = std::accumulate(out.per_seed.begin(), out.per_seed.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : out.per_seed) ss += (v - out.mean) * (v - out.mean);
  out.std = out.per_seed.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return out;
}

std::string eval_csv(const EvalResult& r, const std::string& label) {
  std::ostringstream out;
  out << "model,seed,mean_return\n";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    out << label << ',' << r.seeds[i] << ',' << format_double(r.per_seed[i]) << '\n';
  }
  out << label << ",all," << format_double(r.mean) << '\n';
  return out.str();
}

double train_and_evaluate(Method method, const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng data_rng(derive_seed(seed, 101));
  Rng train_rng(derive_seed(seed, 102));
  const std::vector<std::uint64_t> eval_seed{derive_seed(seed, 103)};
  Policy policy;
  switch (method) {
    case Method::LQR:
      policy = make_lqr_policy(cfg.env, solve_lqr(cfg.env));
      break;
    case Method::SKVI: {
      const auto data = experiment_data(cfg, data_rng);
      policy = model_policy(train_skvi(cfg, experiment_tensor(cfg, data), data, train_rng));
      break;
    }
    case Method::SAKC: {
      const auto data = experiment_data(cfg, data_rng);
      auto tensor = experiment_tensor(cfg, data);
      policy = make_actor_policy(train(Algo::SAKC, cfg.env, cfg.ac, train_rng, tensor).agent);
      break;
    }
    case Method::SAC_V:
      policy = make_actor_policy(train(Algo::SAC_V, cfg.env, cfg.ac, train_rng).agent);
      break;
    case Method::SAC_Q:
      policy = make_actor_policy(train(Algo::SAC_Q, cfg.env, cfg.ac, train_rng).agent);
      break;
  }
  return evaluate(policy, cfg.env, cfg.eval_episodes, eval_seed).mean;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> seed_sweep(Method method, const ExperimentConfig& cfg) {
  std::vector<double> out(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.jobs,
               [&](std::size_t i) { out[i] = train_and_evaluate(method, cfg, cfg.seeds[i]); });
  return out;
}

AblationGrid run_grid(const std::string& name, const std::string& row_name,
                      const std::string& col_name, const std::vector<std::size_t>& rows,
                      const std::vector<std::size_t>& cols,
                      const std::vector<std::uint64_t>& seeds, std::size_t jobs,
                      const std::function<double(std::size_t, std::size_t, std::uint64_t)>& cell) {
  if (rows.empty() || cols.empty() || seeds.empty()) throw ConfigError("ablation grid is empty");
  AblationGrid g{name, row_name, col_name, rows, cols, {}, {}, {}};
  const std::size_t n_cells = rows.size() * cols.size();
  const std::size_t n_seeds = seeds.size();
  std::vector<double> values(n_cells * n_seeds, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(n_cells * n_seeds);
  parallel_for(n_cells * n_seeds, jobs, [&](std::size_t task) {
    const std::size_t c = task / n_seeds, s = task % n_seeds;
    try {
      values[task] = cell(rows[c / cols.size()], cols[c % cols.size()], seeds[s]);
    } catch (const std::exception& e) {
      errors[task] = e.what();
    }
  });
  g.mean.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  g.cell_errors.assign(n_cells, "");
  for (std::size_t c = 0; c < n_cells; ++c) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const std::size_t t = c * n_seeds + s;
      if (!errors[t].empty() && g.cell_errors[c].empty()) {
        g.cell_errors[c] = "seed " + std::to_string(seeds[s]) + ": " + errors[t];
      }
      acc += values[t];
    }
    g.mean(static_cast<Eigen::Index>(c / cols.size()), static_cast<Eigen::Index>(c % cols.size())) =
        g.cell_errors[c].empty() ? acc / static_cast<double>(n_seeds)
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  finalize_grid(g);
  return g;
}

void finalize_grid(AblationGrid& g) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) {
    const double v = g.mean.data()[i];
    if (std::isfinite(v)) best = std::max(best, v);
  }
  g.pct_diff.resize(g.mean.rows(), g.mean.cols());
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) {
    const double v = g.mean.data()[i];
    double pct = std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(v) && std::isfinite(best)) {
      pct = best == v ? 0.0 : 100.0 * (best - v) / std::abs(best);
    }
    g.pct_diff.data()[i] = pct;
  }
}

AblationGrid ablate(const std::string& which, const ExperimentConfig& cfg) {
  const AblationSettings& a = cfg.ablation;
  const std::vector<std::size_t> single{0};
  if (which == "skvi-batch") {
    return run_grid(which, "batch_size", "-", a.batch_sizes, single, cfg.seeds, cfg.jobs,
                    [&](std::size_t batch, std::size_t, std::uint64_t seed) {
                      ExperimentConfig c = cfg;
                      c.skvi.batch_size = batch;
                      return train_and_evaluate(Method::SKVI, c, seed);
                    });
  }
  if (which == "skvi-compute") {
    return run_grid(which, "actions", "epochs", a.action_counts, a.epochs, cfg.seeds, cfg.jobs,
                    [&](std::size_t actions, std::size_t epochs, std::uint64_t seed) {
                      ExperimentConfig c = cfg;
                      c.grid_count = actions;
                      c.skvi.max_iters = epochs;
                      return train_and_evaluate(Method::SKVI, c, seed);
                    });
  }
  if (which == "sakc-monomials") {
    return run_grid(which, "state_order", "action_order", a.orders, a.orders, cfg.seeds, cfg.jobs,
                    [&](std::size_t phi_order, std::size_t psi_order, std::uint64_t seed) {
                      ExperimentConfig c = cfg;
                      c.phi_order = phi_order;
                      c.psi_order = psi_order;
                      c.tensor_path.clear();
                      return train_and_evaluate(Method::SAKC, c, seed);
                    });
  }
  if (which == "sakc-data") {
    return run_grid(which, "paths", "steps_per_path", a.paths, a.path_steps, cfg.seeds, cfg.jobs,
                    [&](std::size_t paths, std::size_t steps, std::uint64_t seed) {
                      ExperimentConfig c = cfg;
                      c.data_paths = paths;
                      c.data_steps_per_path = steps;
                      c.dataset_path.clear();
                      c.tensor_path.clear();
                      return train_and_evaluate(Method::SAKC, c, seed);
                    });
  }
  throw ConfigError("unknown ablation: " + which);
}

void write_grid(const AblationGrid& g, const std::filesystem::path& dir) {
  auto table = [&](const Matrix& m) {
    std::ostringstream out;
    out << g.row_name;
    for (std::size_t c : g.cols) out << ',' << g.col_name << '=' << c;
    out << '\n';
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      out << g.rows[r];
      for (std::size_t c = 0; c < g.cols.size(); ++c) {
        out << ',' << format_double(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      }
      out << '\n';
    }
    return out.str();
  };
  write_text(dir / (g.name + "_mean.csv"), table(g.mean));
  write_text(dir / (g.name + "_pct_diff.csv"), table(g.pct_diff));
  std::ostringstream errs;
  errs << g.row_name << ',' << g.col_name << ",error\n";
  bool any = false;
  for (std::size_t c = 0; c < g.cell_errors.size(); ++c) {
    if (g.cell_errors[c].empty()) continue;
    any = true;
    std::string msg = g.cell_errors[c];
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    errs << g.rows[c / g.cols.size()] << ',' << g.cols[c % g.cols.size()] << ',' << msg << '\n';
  }
  if (any) write_text(dir / (g.name + "_errors.csv"), errs.str());
}

namespace {

std::string format_coef(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

}  // namespace

std::string interpret(const Vector& w, const MonomialBasis& basis, int precision) {
  if (static_cast<std::size_t>(w.size()) != basis.dim()) {
    throw DimensionMismatch("interpret: weight dimension does not match the dictionary");
  }
  std::vector<std::size_t> order(basis.dim());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(w[static_cast<Eigen::Index>(a)]) > std::abs(w[static_cast<Eigen::Index>(b)]);
  });
  std::string out = "V(x) =";
  bool first = true;
  for (std::size_t k : order) {
    const double c = w[static_cast<Eigen::Index>(k)];
    if (c == 0.0) continue;
    const std::string term = basis.term_name(k);
    const std::string mag = format_coef(std::abs(c), precision);
    std::string body;
    if (term == "1") body = mag;
    else if (mag == "1") body = term;
    else body = mag + "*" + term;
    if (first) out += c < 0 ? " -" + body : " " + body;
    else out += (c < 0 ? " - " : " + ") + body;
    first = false;
  }
  if (first) out += " 0";
  return out;
}

Vector sparsify(const Vector& w, const MonomialBasis& basis,
                const std::vector<std::string>& zero) {
  Vector out = w;
  for (const auto& name : zero) {
    const std::size_t k = basis.find_term(name);
    if (k == basis.dim()) throw ConfigError("unknown dictionary term: " + name);
    out[static_cast<Eigen::Index>(k)] = 0.0;
  }
  return out;
}

Vector keep_terms(const Vector& w, const MonomialBasis& basis,
                  const std::vector<std::string>& keep) {
  Vector out = Vector::Zero(w.size());
  for (const auto& name : keep) {
    const std::size_t k = basis.find_term(name);
    if (k == basis.dim()) throw ConfigError("unknown dictionary term: " + name);
    out[static_cast<Eigen::Index>(k)] = w[static_cast<Eigen::Index>(k)];
  }
  return out;
}

std::string record_header() { return "algo,env,seed,episode,step,return,wall_time"; }

std::string record_row(const RunRecord& r) {
  std::ostringstream out;
  out << r.algo << ',' << r.env << ',' << r.seed << ',' << r.episode << ',' << r.step << ','
      << format_double(r.episodic_return) << ',' << format_double(r.wall_time);
  return out.str();
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != record_header()) {
    throw ModelFormat("run log header must be: " + record_header());
  }
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ModelFormat("run log line " + std::to_string(lineno) + ": 7 columns");
    try {
      out.push_back({f[0], f[1], std::stoull(f[2]), std::stoull(f[3]), std::stoull(f[4]),
                     std::stod(f[5]), std::stod(f[6])});
    } catch (const std::exception&) {
      throw ModelFormat("run log line " + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

std::vector<SummaryRow> report(const std::vector<RunRecord>& records, std::size_t bin_width) {
  if (records.empty()) throw InsufficientData("report: no run records");
  if (bin_width == 0) throw ConfigError("report: bin width must be positive");
  // Steps are 1-based global counts; bin b covers steps [b*w, (b+1)*w).
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> bins;
  for (const auto& r : records) bins[{r.algo, r.env, r.step / bin_width}].push_back(r.episodic_return);
  std::vector<SummaryRow> out;
  for (const auto& [key, vals] : bins) {
    const auto& [algo, env, b] = key;
    const double n = static_cast<double>(vals.size());
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    out.push_back({algo, env, b * bin_width, (b + 1) * bin_width, vals.size(), mean,
                   vals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0});
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "algo,env,step_start,step_end,count,mean_return,std_return\n";
  for (const auto& r : rows) {
    out << r.algo << ',' << r.env << ',' << r.bin_start << ',' << r.bin_end << ',' << r.count << ','
        << format_double(r.mean) << ',' << format_double(r.std) << '\n';
  }
  return out.str();
}

}  // namespace karl
