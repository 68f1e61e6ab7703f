#include "karl/serialization.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "karl/errors.hpp"

namespace karl {

using nlohmann::json;

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json mat_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix mat_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ModelFormat("matrix data does not match its shape");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json basis_json(const MonomialBasis& b) {
  return {{"family", "monomial"}, {"input_dim", b.input_dim()}, {"max_degree", b.max_degree()}};
}

MonomialBasis basis_from(const json& j) {
  if (j.value("family", "monomial") != "monomial") throw ModelFormat("unknown dictionary family");
  return MonomialBasis(j.at("input_dim").get<std::size_t>(), j.at("max_degree").get<std::size_t>());
}

json tensor_json(const KoopmanTensor& t) {
  return {{"kind", "koopman_tensor"},
          {"format_version", kFormatVersion},
          {"d_x", t.d_x()},
          {"d_u", t.d_u()},
          {"phi", basis_json(t.phi())},
          {"psi", basis_json(t.psi())},
          {"M", mat_json(t.M())},
          {"ridge", t.ridge()},
          {"sample_count", t.sample_count()}};
}

KoopmanTensor tensor_from(const json& j) {
  KoopmanTensor t(basis_from(j.at("phi")), basis_from(j.at("psi")), mat_from(j.at("M")),
                  j.value("ridge", 0.0), j.value("sample_count", std::size_t{0}));
  if (t.d_x() != j.at("d_x").get<std::size_t>() || t.d_u() != j.at("d_u").get<std::size_t>()) {
    throw ModelFormat("tensor dimensions disagree with dictionaries");
  }
  return t;
}

json env_json(const EnvironmentSpec& e) {
  return {{"kind", env_name(e.kind)},       {"dt", e.dt},
          {"episode_len", e.episode_len},   {"action_low", vec_json(e.action_low)},
          {"action_high", vec_json(e.action_high)}, {"Q", mat_json(e.Q)},
          {"R", mat_json(e.R)},             {"init_low", vec_json(e.init_low)},
          {"init_high", vec_json(e.init_high)}, {"noise_scale", e.noise_scale}};
}

EnvironmentSpec env_from(const json& j) {
  EnvironmentSpec e = make_environment(parse_env_kind(j.at("kind").get<std::string>()));
  e.dt = j.value("dt", e.dt);
  e.episode_len = j.value("episode_len", e.episode_len);
  if (j.contains("action_low")) e.action_low = vec_from(j["action_low"]);
  if (j.contains("action_high")) e.action_high = vec_from(j["action_high"]);
  if (j.contains("Q")) e.Q = mat_from(j["Q"]);
  if (j.contains("R")) e.R = mat_from(j["R"]);
  if (j.contains("init_low")) e.init_low = vec_from(j["init_low"]);
  if (j.contains("init_high")) e.init_high = vec_from(j["init_high"]);
  e.noise_scale = j.value("noise_scale", e.noise_scale);
  e.validate();
  return e;
}

json mlp_json(const Mlp& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    layers.push_back({{"name", "layer" + std::to_string(l)},
                      {"W", mat_json(layer.W)},
                      {"b", vec_json(layer.b)}});
  }
  return {{"layer_dims", net.layer_dims()}, {"activation", "relu"}, {"layers", layers}};
}

Mlp mlp_from(const json& j) {
  Mlp net = Mlp::zeros(j.at("layer_dims").get<std::vector<std::size_t>>());
  const json& layers = j.at("layers");
  if (layers.size() != net.layers().size()) throw ModelFormat("layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = net.layers()[l];
    Matrix W = mat_from(layers[l].at("W"));
    Vector b = vec_from(layers[l].at("b"));
    if (W.rows() != layer.W.rows() || W.cols() != layer.W.cols() || b.size() != layer.b.size()) {
      throw ModelFormat("layer shape mismatch");
    }
    layer.W = std::move(W);
    layer.b = std::move(b);
  }
  return net;
}

json agent_json(const AgentState& a) {
  const AcConfig& c = a.config;
  json j{{"kind", algo_name(a.algo)},
         {"env", env_json(a.env)},
         {"config",
          {{"hidden", c.hidden},
           {"q_lr", c.q_lr},
           {"value_lr", c.value_lr},
           {"policy_lr", c.policy_lr},
           {"alpha_lr", c.alpha_lr},
           {"alpha", c.alpha},
           {"gamma", c.gamma},
           {"tau", c.tau},
           {"batch_size", c.batch_size},
           {"warmup_steps", c.warmup_steps},
           {"total_steps", c.total_steps},
           {"buffer_capacity", c.buffer_capacity}}},
         {"policy", mlp_json(a.policy.trunk)},
         {"q1", mlp_json(a.q1)},
         {"q2", mlp_json(a.q2)}};
  switch (a.algo) {
    case Algo::SAKC:
      j["w"] = vec_json(a.w);
      j["w_bar"] = vec_json(a.w_bar);
      j["tensor"] = tensor_json(*a.tensor);
      break;
    case Algo::SAC_V:
      j["v"] = mlp_json(a.v);
      j["v_target"] = mlp_json(a.v_target);
      break;
    case Algo::SAC_Q:
      j["q1_target"] = mlp_json(a.q1_target);
      j["q2_target"] = mlp_json(a.q2_target);
      j["log_alpha"] = a.log_alpha;
      j["target_entropy"] = a.target_entropy;
      break;
  }
  return j;
}

AgentState agent_from(const json& j) {
  AgentState a;
  a.algo = parse_algo(j.at("kind").get<std::string>());
  a.env = env_from(j.at("env"));
  const json& c = j.at("config");
  AcConfig& cfg = a.config;
  cfg.hidden = c.value("hidden", cfg.hidden);
  cfg.q_lr = c.value("q_lr", cfg.q_lr);
  cfg.value_lr = c.value("value_lr", cfg.value_lr);
  cfg.policy_lr = c.value("policy_lr", cfg.policy_lr);
  cfg.alpha_lr = c.value("alpha_lr", cfg.alpha_lr);
  cfg.alpha = c.value("alpha", cfg.alpha);
  cfg.gamma = c.value("gamma", cfg.gamma);
  cfg.tau = c.value("tau", cfg.tau);
  cfg.batch_size = c.value("batch_size", cfg.batch_size);
  cfg.warmup_steps = c.value("warmup_steps", cfg.warmup_steps);
  cfg.total_steps = c.value("total_steps", cfg.total_steps);
  cfg.buffer_capacity = c.value("buffer_capacity", cfg.buffer_capacity);

  const Vector& low = a.env.action_low;
  const Vector& high = a.env.action_high;
  a.policy.trunk = mlp_from(j.at("policy"));
  a.policy.action_scale = (high - low) / 2.0;
  a.policy.action_bias = (high + low) / 2.0;
  a.policy.action_low = low;
  a.policy.action_high = high;
  if (a.policy.trunk.input_dim() != a.env.state_dim ||
      a.policy.trunk.output_dim() != 2 * a.env.action_dim) {
    throw ModelFormat("policy network does not match the environment");
  }
  a.policy_opt = AdamState(a.policy.trunk.parameter_count(), cfg.policy_lr);
  a.q1 = mlp_from(j.at("q1"));
  a.q2 = mlp_from(j.at("q2"));
  a.q1_opt = AdamState(a.q1.parameter_count(), cfg.q_lr);
  a.q2_opt = AdamState(a.q2.parameter_count(), cfg.q_lr);
  switch (a.algo) {
    case Algo::SAKC:
      a.tensor = std::make_shared<const KoopmanTensor>(tensor_from(j.at("tensor")));
      a.w = vec_from(j.at("w"));
      a.w_bar = vec_from(j.at("w_bar"));
      if (static_cast<std::size_t>(a.w.size()) != a.tensor->d_x() || a.w.size() != a.w_bar.size()) {
        throw ModelFormat("value weights do not match the tensor");
      }
      a.w_opt = AdamState(static_cast<std::size_t>(a.w.size()), cfg.value_lr);
      break;
    case Algo::SAC_V:
      a.v = mlp_from(j.at("v"));
      a.v_target = mlp_from(j.at("v_target"));
      a.v_opt = AdamState(a.v.parameter_count(), cfg.value_lr);
      break;
    case Algo::SAC_Q:
      a.q1_target = mlp_from(j.at("q1_target"));
      a.q2_target = mlp_from(j.at("q2_target"));
      a.log_alpha = j.at("log_alpha").get<double>();
      a.target_entropy = j.value("target_entropy", -static_cast<double>(a.env.action_dim));
      a.alpha_opt = AdamState(1, cfg.alpha_lr);
      break;
  }
  return a;
}

json skvi_json(const SkviModel& m) {
  return {{"kind", "skvi"},
          {"env", env_json(m.env)},
          {"w", vec_json(m.weights.w)},
          {"W", m.weights.norm_bound},
          {"grid",
           {{"low", vec_json(m.grid.low)}, {"high", vec_json(m.grid.high)}, {"count", m.grid.count}}},
          {"alpha", m.alpha},
          {"gamma", m.gamma},
          {"tensor_ref", m.tensor_ref},
          {"tensor", tensor_json(*m.tensor)}};
}

SkviModel skvi_from(const json& j) {
  SkviModel m;
  m.env = env_from(j.at("env"));
  m.tensor = std::make_shared<const KoopmanTensor>(tensor_from(j.at("tensor")));
  m.tensor_ref = j.value("tensor_ref", "");
  m.weights = {vec_from(j.at("w")), j.value("W", 1e6)};
  if (static_cast<std::size_t>(m.weights.w.size()) != m.tensor->d_x()) {
    throw ModelFormat("value weights do not match the tensor");
  }
  const json& g = j.at("grid");
  m.grid = ActionGrid(vec_from(g.at("low")), vec_from(g.at("high")), g.at("count").get<std::size_t>());
  m.alpha = j.value("alpha", 1.0);
  m.gamma = j.value("gamma", 0.99);
  return m;
}

json lqr_json(const LqrModel& m) {
  return {{"kind", "lqr"},
          {"env", env_json(m.env)},
          {"mode", m.solution.mode == LqrMode::Discrete ? "discrete" : "continuous"},
          {"P", mat_json(m.solution.P)},
          {"K", mat_json(m.solution.K)}};
}

LqrModel lqr_from(const json& j) {
  LqrModel m;
  m.env = env_from(j.at("env"));
  m.solution.mode = j.at("mode").get<std::string>() == "discrete" ? LqrMode::Discrete
                                                                  : LqrMode::Continuous;
  m.solution.P = mat_from(j.at("P"));
  m.solution.K = mat_from(j.at("K"));
  return m;
}

json parse_document(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelFormat(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("kind")) throw ModelFormat("model file has no kind");
  const int version = j.value("format_version", -1);
  if (version != kFormatVersion) {
    throw ModelFormat("unsupported format_version " + std::to_string(version));
  }
  return j;
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ModelFormat(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace

std::string tensor_to_string(const KoopmanTensor& tensor) { return tensor_json(tensor).dump(1); }

KoopmanTensor tensor_from_string(const std::string& text) {
  const json j = parse_document(text);
  if (j["kind"] != "koopman_tensor") throw ModelFormat("not a Koopman tensor file");
  return guarded([&] { return tensor_from(j); });
}

void save_tensor(const std::filesystem::path& path, const KoopmanTensor& tensor) {
  write_text(path, tensor_to_string(tensor));
}

KoopmanTensor load_tensor(const std::filesystem::path& path) {
  return tensor_from_string(read_text(path));
}

std::string model_to_string(const Model& model) {
  json j = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SkviModel>) return skvi_json(m);
        else if constexpr (std::is_same_v<T, AgentState>) return agent_json(m);
        else return lqr_json(m);
      },
      model);
  j["format_version"] = kFormatVersion;
  return j.dump(1);
}

Model model_from_string(const std::string& text) {
  const json j = parse_document(text);
  const std::string kind = j["kind"].get<std::string>();
  return guarded([&]() -> Model {
    if (kind == "skvi") return skvi_from(j);
    if (kind == "lqr") return lqr_from(j);
    if (kind == "sakc" || kind == "sac-v" || kind == "sac-q") return agent_from(j);
    throw ModelFormat("unknown model kind: " + kind);
  });
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_text(path, model_to_string(model));
}

Model load_model(const std::filesystem::path& path) { return model_from_string(read_text(path)); }

std::string model_kind(const Model& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SkviModel>) return "skvi";
        else if constexpr (std::is_same_v<T, AgentState>) return algo_name(m.algo);
        else return "lqr";
      },
      model);
}

const EnvironmentSpec& model_env(const Model& model) {
  return std::visit([](const auto& m) -> const EnvironmentSpec& { return m.env; }, model);
}

Policy model_policy(const Model& model) {
  return std::visit(
      [](const auto& m) -> Policy {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SkviModel>) {
          return make_skvi_policy(m.tensor, m.env, m.grid, m.weights.w, m.alpha, m.gamma, true);
        } else if constexpr (std::is_same_v<T, AgentState>) {
          return make_actor_policy(m);
        } else {
          return make_lqr_policy(m.env, m.solution);
        }
      },
      model);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string dataset_header(std::size_t state_dim, std::size_t action_dim) {
  std::string h = "episode,step";
  for (std::size_t i = 0; i < state_dim; ++i) h += ",x_" + std::to_string(i);
  for (std::size_t i = 0; i < action_dim; ++i) h += ",u_" + std::to_string(i);
  h += ",reward";
  for (std::size_t i = 0; i < state_dim; ++i) h += ",next_x_" + std::to_string(i);
  return h;
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRow>& rows,
                   std::size_t state_dim, std::size_t action_dim) {
  std::ostringstream out;
  out << dataset_header(state_dim, action_dim) << '\n';
  for (const auto& row : rows) {
    const Transition& t = row.transition;
    if (static_cast<std::size_t>(t.x.size()) != state_dim ||
        static_cast<std::size_t>(t.u.size()) != action_dim ||
        static_cast<std::size_t>(t.x_next.size()) != state_dim) {
      throw DimensionMismatch("write_dataset: row shape mismatch");
    }
    out << row.episode << ',' << row.step;
    for (Eigen::Index i = 0; i < t.x.size(); ++i) out << ',' << format_double(t.x[i]);
    for (Eigen::Index i = 0; i < t.u.size(); ++i) out << ',' << format_double(t.u[i]);
    out << ',' << format_double(t.reward);
    for (Eigen::Index i = 0; i < t.x_next.size(); ++i) out << ',' << format_double(t.x_next[i]);
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<DatasetRow> read_dataset(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw ModelFormat("dataset is empty: " + path.string());
  std::size_t sd = 0, ad = 0;
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("x_", 0) == 0) ++sd;
      else if (col.rfind("u_", 0) == 0) ++ad;
    }
  }
  if (line != dataset_header(sd, ad)) throw ModelFormat("unexpected dataset header: " + line);
  const std::size_t width = 3 + 2 * sd + ad;
  std::vector<DatasetRow> rows;
  std::vector<double> vals;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    vals.clear();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        throw ModelFormat("bad number on dataset line " + std::to_string(lineno));
      }
      vals.push_back(v);
      p = res.ptr;
      if (p == end) break;
      if (*p != ',') throw ModelFormat("bad separator on dataset line " + std::to_string(lineno));
      ++p;
    }
    if (vals.size() != width) {
      throw ModelFormat("wrong column count on dataset line " + std::to_string(lineno));
    }
    DatasetRow row;
    row.episode = static_cast<std::size_t>(vals[0]);
    row.step = static_cast<std::size_t>(vals[1]);
    Transition& t = row.transition;
    t.x = Eigen::Map<const Vector>(vals.data() + 2, static_cast<Eigen::Index>(sd));
    t.u = Eigen::Map<const Vector>(vals.data() + 2 + sd, static_cast<Eigen::Index>(ad));
    t.reward = vals[2 + sd + ad];
    t.x_next = Eigen::Map<const Vector>(vals.data() + 3 + sd + ad, static_cast<Eigen::Index>(sd));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Transition> dataset_transitions(const std::vector<DatasetRow>& rows) {
  std::vector<Transition> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.transition);
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

}  // namespace karl
