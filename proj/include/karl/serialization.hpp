#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "karl/actor_critic.hpp"
#include "karl/environments.hpp"
#include "karl/koopman.hpp"
#include "karl/lqr.hpp"
#include "karl/skvi.hpp"

namespace karl {

inline constexpr int kFormatVersion = 1;

struct SkviModel {
  EnvironmentSpec env;
  std::shared_ptr<const KoopmanTensor> tensor;
  std::string tensor_ref;  // path the tensor was loaded from, informational
  ValueWeights weights;
  ActionGrid grid;
  double alpha = 1.0;
  double gamma = 0.99;
};

struct LqrModel {
  EnvironmentSpec env;
  LqrSolution solution;
};

using Model = std::variant<SkviModel, AgentState, LqrModel>;

// Model files are JSON documents with "format_version" and "kind" keys.
// Matrices are stored as row-major flat arrays next to their shape.

std::string tensor_to_string(const KoopmanTensor& tensor);
KoopmanTensor tensor_from_string(const std::string& text);
void save_tensor(const std::filesystem::path& path, const KoopmanTensor& tensor);
KoopmanTensor load_tensor(const std::filesystem::path& path);

std::string model_to_string(const Model& model);
Model model_from_string(const std::string& text);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

std::string model_kind(const Model& model);
const EnvironmentSpec& model_env(const Model& model);
/// Greedy action for SKVI, mean action for actor-critic models, clipped LQR.
Policy model_policy(const Model& model);

/// Dataset CSV: episode,step,x_0..,u_0..,reward,next_x_0..
struct DatasetRow {
  std::size_t episode = 0;
  std::size_t step = 0;
  Transition transition;
};

std::string dataset_header(std::size_t state_dim, std::size_t action_dim);
void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRow>& rows,
                   std::size_t state_dim, std::size_t action_dim);
std::vector<DatasetRow> read_dataset(const std::filesystem::path& path);
std::vector<Transition> dataset_transitions(const std::vector<DatasetRow>& rows);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace karl
