#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <tuple>
#include <vector>

#include "persmon/controllers.hpp"

namespace persmon {

struct Sample {
  Eigen::VectorXd x;
  int label = 0;
};

struct TrainOptions {
  int hidden = 10;
  double lambda = 1e-3;
  int epochs = 2000;
  double init_scale = 0.1;
  double grad_tol = 1e-8;
  std::uint64_t seed = 1;
};

/// One-hidden-layer tanh network with a softmax output. Inputs are z-scored
/// with `mean` and `scale` before the first layer.
struct Mlp {
  Eigen::MatrixXd W1;  // hidden x inputs
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;  // outputs x hidden
  Eigen::VectorXd b2;
  Eigen::VectorXd mean, scale;
  double lambda = 1e-3;

  int inputs() const { return static_cast<int>(W1.cols()); }
  int hidden() const { return static_cast<int>(W1.rows()); }
  int outputs() const { return static_cast<int>(W2.rows()); }
};

struct Prediction {
  int label = 0;
  Eigen::VectorXd posterior;
  /// 1 - max posterior.
  double mismatch() const { return 1.0 - posterior.maxCoeff(); }
};

/// Weights ~ U[-init_scale, init_scale], zero biases, identity normalization.
Mlp init_mlp(int inputs, int outputs, const TrainOptions& o);

/// Per-feature mean and standard deviation of the samples (scale 1 when the
/// deviation vanishes).
void fit_normalization(Mlp& m, const std::vector<Sample>& data);

Eigen::VectorXd flatten(const Mlp& m);
void unflatten(Mlp& m, const Eigen::VectorXd& theta);

/// -(1/L) sum log h_label + (lambda / 2L) |W|^2 over the samples, with the
/// gradient with respect to flatten(m) when grad is non-null.
double cross_entropy(const Mlp& m, const std::vector<Sample>& data,
                     Eigen::VectorXd* grad = nullptr);

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int epochs = 0;
  bool monotone = true;
};

/// Full-batch gradient descent with backtracking line search.
/// Throws std::runtime_error on a non-finite loss.
Mlp train(const std::vector<Sample>& data, int outputs, const TrainOptions& o,
          TrainReport* report = nullptr);

/// Softmax posteriors and their argmax (ties to the lowest index).
Prediction predict(const Mlp& m, const Eigen::VectorXd& x);

double training_accuracy(const Mlp& m, const std::vector<Sample>& data);

nlohmann::json mlp_to_json(const Mlp& m);
Mlp mlp_from_json(const nlohmann::json& j);

enum class LearningMode { kLearn, kActiveLearn };

struct LearningOptions {
  LearningMode mode = LearningMode::kLearn;
  int dataset_size = 25;   // L
  double delta = 0.25;     // mismatch gate of the active variant
  int retrain_every = 5;   // appended samples between retrains
  int cap_factor = 4;      // dataset capped at cap_factor * L, FIFO
  TrainOptions train;
};

/// Dataset and model for one (agent, target, problem type).
struct LearningSlot {
  std::deque<Sample> data;
  std::optional<Mlp> model;
  int since_retrain = 0;
  double trained_at = -1.0;
};

/// RHC with a next-visit classifier per (agent, target, problem type). Until a
/// slot holds L samples decisions come from full RHC and are recorded. Then
/// the classifier picks j and one continuous problem is solved. The active
/// variant falls back to full RHC (and keeps learning) when the mismatch
/// 1 - max posterior exceeds delta.
class LearningRhcController : public Controller {
 public:
  LearningRhcController(const ProblemConfig& cfg, ControllerOptions o, LearningOptions lo,
                        std::string name);
  std::string name() const override { return name_; }
  const NetworkGraph& travel_graph() const override { return cfg_.graph; }
  AgentDecision on_arrival(AgentId a, TargetId i, const WorldView& w) override;
  AgentDecision on_dwell_end(AgentId a, TargetId i, const WorldView& w) override;
  bool resolves_on_cover_change() const override { return true; }
  std::map<std::string, double> stats() const override;

  using Key = std::tuple<AgentId, TargetId, int>;
  LearningSlot& slot(AgentId a, TargetId i, RhcpType type);
  const std::map<Key, LearningSlot>& slots() const { return slots_; }

  /// Static feature vector: covariances over N_i U {i}, self first.
  static Eigen::VectorXd features(const WorldView& w, TargetId i);

 private:
  AgentDecision decide(RhcpType type, AgentId a, TargetId i, const WorldView& w);
  AgentDecision full(RhcpType type, AgentId a, TargetId i, const WorldView& w,
                     LearningSlot& s, bool record);
  void retrain(LearningSlot& s, TargetId i, double t);

  const ProblemConfig& cfg_;
  ControllerOptions opts_;
  LearningOptions lopts_;
  std::string name_;
  std::map<Key, LearningSlot> slots_;
  long learned_ = 0, fallbacks_ = 0, full_ = 0, trainings_ = 0;
};

}  // namespace persmon
