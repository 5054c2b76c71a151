#include "persmon/learning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "persmon/random.hpp"

namespace persmon {
namespace {

Eigen::MatrixXd normalized_inputs(const Mlp& m, const std::vector<Sample>& data) {
  Eigen::MatrixXd X(m.inputs(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t s = 0; s < data.size(); ++s) {
    if (data[s].x.size() != m.inputs()) throw std::invalid_argument("feature dimension mismatch");
    X.col(static_cast<Eigen::Index>(s)) = (data[s].x - m.mean).cwiseQuotient(m.scale);
  }
  return X;
}

// Column-wise softmax with the usual max shift.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& Z) {
  Eigen::MatrixXd H(Z.rows(), Z.cols());
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const Eigen::VectorXd e = (Z.col(c).array() - Z.col(c).maxCoeff()).exp();
    H.col(c) = e / e.sum();
  }
  return H;
}

}  // namespace

Mlp init_mlp(int inputs, int outputs, const TrainOptions& o) {
  if (inputs < 1 || outputs < 1) throw std::invalid_argument("network needs inputs and outputs");
  Rng rng(o.seed);
  Mlp m;
  auto draw = [&](Eigen::MatrixXd& W, int r, int c) {
    W.resize(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) W(i, j) = rng.uniform(-o.init_scale, o.init_scale);
  };
  draw(m.W1, o.hidden, inputs);
  draw(m.W2, outputs, o.hidden);
  m.b1 = Eigen::VectorXd::Zero(o.hidden);
  m.b2 = Eigen::VectorXd::Zero(outputs);
  m.mean = Eigen::VectorXd::Zero(inputs);
  m.scale = Eigen::VectorXd::Ones(inputs);
  m.lambda = o.lambda;
  return m;
}

void fit_normalization(Mlp& m, const std::vector<Sample>& data) {
  const int n = m.inputs();
  m.mean = Eigen::VectorXd::Zero(n);
  m.scale = Eigen::VectorXd::Ones(n);
  if (data.empty()) return;
  for (const auto& s : data) m.mean += s.x;
  m.mean /= static_cast<double>(data.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
  for (const auto& s : data) var += (s.x - m.mean).cwiseAbs2();
  var /= static_cast<double>(data.size());
  for (int k = 0; k < n; ++k) {
    const double sd = std::sqrt(var[k]);
    m.scale[k] = sd > 1e-12 * std::max(1.0, std::abs(m.mean[k])) ? sd : 1.0;
  }
}

Eigen::VectorXd flatten(const Mlp& m) {
  Eigen::VectorXd t(m.W1.size() + m.b1.size() + m.W2.size() + m.b2.size());
  Eigen::Index o = 0;
  for (const Eigen::MatrixXd* p : {&m.W1, &m.W2}) {
    t.segment(o, p->size()) = p->reshaped();
    o += p->size();
  }
  t.segment(o, m.b1.size()) = m.b1;
  o += m.b1.size();
  t.segment(o, m.b2.size()) = m.b2;
  return t;
}

void unflatten(Mlp& m, const Eigen::VectorXd& t) {
  Eigen::Index o = 0;
  for (Eigen::MatrixXd* p : {&m.W1, &m.W2}) {
    p->reshaped() = t.segment(o, p->size());
    o += p->size();
  }
  m.b1 = t.segment(o, m.b1.size());
  o += m.b1.size();
  m.b2 = t.segment(o, m.b2.size());
}

double cross_entropy(const Mlp& m, const std::vector<Sample>& data, Eigen::VectorXd* grad) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  const double L = static_cast<double>(data.size());
  const Eigen::MatrixXd X = normalized_inputs(m, data);
  const Eigen::MatrixXd Z1 = (m.W1 * X).colwise() + m.b1;
  const Eigen::MatrixXd A1 = Z1.array().tanh();
  const Eigen::MatrixXd Z2 = (m.W2 * A1).colwise() + m.b2;
  const Eigen::MatrixXd H = softmax(Z2);
  double loss = 0.0;
  Eigen::MatrixXd dZ2 = H;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const int y = data[s].label;
    if (y < 0 || y >= m.outputs()) throw std::invalid_argument("label out of range");
    const Eigen::Index c = static_cast<Eigen::Index>(s);
    // log-softmax directly, stable for confident outputs.
    const double zmax = Z2.col(c).maxCoeff();
    const double lse = zmax + std::log((Z2.col(c).array() - zmax).exp().sum());
    loss -= Z2(y, c) - lse;
    dZ2(y, c) -= 1.0;
  }
  loss = loss / L + m.lambda / (2.0 * L) * (m.W1.squaredNorm() + m.W2.squaredNorm());
  if (grad) {
    dZ2 /= L;
    Mlp g = m;
    g.W2 = dZ2 * A1.transpose() + (m.lambda / L) * m.W2;
    g.b2 = dZ2.rowwise().sum();
    const Eigen::MatrixXd dZ1 =
        (m.W2.transpose() * dZ2).cwiseProduct((1.0 - A1.array().square()).matrix());
    g.W1 = dZ1 * X.transpose() + (m.lambda / L) * m.W1;
    g.b1 = dZ1.rowwise().sum();
    *grad = flatten(g);
  }
  return loss;
}

Mlp train(const std::vector<Sample>& data, int outputs, const TrainOptions& o,
          TrainReport* report) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  Mlp m = init_mlp(static_cast<int>(data.front().x.size()), outputs, o);
  fit_normalization(m, data);
  Eigen::VectorXd theta = flatten(m);
  Eigen::VectorXd g;
  double f = cross_entropy(m, data, &g);
  TrainReport rep;
  rep.initial_loss = f;
  double step = 1.0;
  int epoch = 0;
  for (; epoch < o.epochs; ++epoch) {
    if (!std::isfinite(f)) throw std::runtime_error("non-finite training loss");
    const double g2 = g.squaredNorm();
    if (std::sqrt(g2) <= o.grad_tol) break;
    bool accepted = false;
    Mlp trial = m;
    Eigen::VectorXd gt;
    double ft = 0.0;
    while (step >= 1e-12) {
      unflatten(trial, theta - step * g);
      ft = cross_entropy(trial, data, &gt);
      if (std::isfinite(ft) && ft <= f - 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (ft > f) rep.monotone = false;
    theta = flatten(trial);
    m = std::move(trial);
    f = ft;
    g = std::move(gt);
    step = std::min(2.0 * step, 1e3);
  }
  if (!std::isfinite(f)) throw std::runtime_error("non-finite training loss");
  rep.final_loss = f;
  rep.epochs = epoch;
  if (report) *report = rep;
  return m;
}

Prediction predict(const Mlp& m, const Eigen::VectorXd& x) {
  if (x.size() != m.inputs()) throw std::invalid_argument("feature dimension mismatch");
  const Eigen::VectorXd xn = (x - m.mean).cwiseQuotient(m.scale);
  const Eigen::VectorXd a = (m.W1 * xn + m.b1).array().tanh();
  const Eigen::VectorXd z = m.W2 * a + m.b2;
  Prediction p;
  p.posterior = softmax(z);
  Eigen::Index arg = 0;
  for (Eigen::Index k = 1; k < p.posterior.size(); ++k) {
    if (p.posterior[k] > p.posterior[arg]) arg = k;
  }
  p.label = static_cast<int>(arg);
  return p;
}

double training_accuracy(const Mlp& m, const std::vector<Sample>& data) {
  if (data.empty()) return 0.0;
  int hit = 0;
  for (const auto& s : data) hit += predict(m, s.x).label == s.label;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    std::vector<double> row(M.cols());
    for (Eigen::Index c = 0; c < M.cols(); ++c) row[c] = M(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw std::invalid_argument("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json mlp_to_json(const Mlp& m) {
  return {{"schema", 1},
          {"kind", "mlp"},
          {"hidden", m.hidden()},
          {"lambda", m.lambda},
          {"W1", matrix_json(m.W1)},
          {"b1", vector_json(m.b1)},
          {"W2", matrix_json(m.W2)},
          {"b2", vector_json(m.b2)},
          {"mean", vector_json(m.mean)},
          {"scale", vector_json(m.scale)}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != 1) throw std::invalid_argument("unsupported model schema");
  Mlp m;
  m.lambda = j.at("lambda").get<double>();
  m.W1 = json_matrix(j.at("W1"));
  m.b1 = json_vector(j.at("b1"));
  m.W2 = json_matrix(j.at("W2"));
  m.b2 = json_vector(j.at("b2"));
  m.mean = json_vector(j.at("mean"));
  m.scale = json_vector(j.at("scale"));
  if (m.b1.size() != m.hidden() || m.W2.cols() != m.hidden() || m.b2.size() != m.outputs() ||
      m.mean.size() != m.inputs() || m.scale.size() != m.inputs()) {
    throw std::invalid_argument("inconsistent model dimensions");
  }
  return m;
}

LearningRhcController::LearningRhcController(const ProblemConfig& cfg, ControllerOptions o,
                                             LearningOptions lo, std::string name)
    : cfg_(cfg), opts_(std::move(o)), lopts_(std::move(lo)), name_(std::move(name)) {
  if (lopts_.dataset_size < 1) throw ConfigError("dataset size must be positive");
}

LearningSlot& LearningRhcController::slot(AgentId a, TargetId i, RhcpType type) {
  return slots_[{a, i, static_cast<int>(type)}];
}

Eigen::VectorXd LearningRhcController::features(const WorldView& w, TargetId i) {
  const auto nb = w.graph.neighbors(i, true);
  Eigen::VectorXd x(static_cast<Eigen::Index>(nb.size()));
  for (std::size_t k = 0; k < nb.size(); ++k) x[static_cast<Eigen::Index>(k)] = w.omega[nb[k]];
  return x;
}

AgentDecision LearningRhcController::on_arrival(AgentId a, TargetId i, const WorldView& w) {
  return decide(RhcpType::kArrival, a, i, w);
}

AgentDecision LearningRhcController::on_dwell_end(AgentId a, TargetId i, const WorldView& w) {
  return decide(RhcpType::kDeparture, a, i, w);
}

void LearningRhcController::retrain(LearningSlot& s, TargetId i, double t) {
  const std::vector<Sample> data(s.data.begin(), s.data.end());
  TrainOptions to = lopts_.train;
  to.seed = derive_seed(lopts_.train.seed, static_cast<std::uint64_t>(i));
  s.model = train(data, static_cast<int>(cfg_.graph.neighbors(i).size()), to);
  s.since_retrain = 0;
  if (s.trained_at < 0.0) s.trained_at = t;
  ++trainings_;
}

AgentDecision LearningRhcController::full(RhcpType type, AgentId a, TargetId i,
                                          const WorldView& w, LearningSlot& s, bool record) {
  AgentDecision d = rhc_decide(type, a, i, w, opts_);
  ++full_;
  if (!record || d.wait) return d;
  const auto nb = w.graph.neighbors(i);
  const auto pos = std::find(nb.begin(), nb.end(), d.decision.next);
  s.data.push_back({features(w, i), static_cast<int>(pos - nb.begin())});
  const std::size_t cap = static_cast<std::size_t>(lopts_.cap_factor * lopts_.dataset_size);
  while (s.data.size() > cap) s.data.pop_front();
  ++s.since_retrain;
  if (!s.model) {
    if (static_cast<int>(s.data.size()) >= lopts_.dataset_size) retrain(s, i, w.t);
  } else if (s.since_retrain >= lopts_.retrain_every) {
    retrain(s, i, w.t);
  }
  return d;
}

AgentDecision LearningRhcController::decide(RhcpType type, AgentId a, TargetId i,
                                            const WorldView& w) {
  LearningSlot& s = slot(a, i, type);
  if (!s.model) return full(type, a, i, w, s, true);

  const auto nb = w.graph.neighbors(i);
  const Prediction p = predict(*s.model, features(w, i));
  if (lopts_.mode == LearningMode::kActiveLearn && p.mismatch() > lopts_.delta) {
    ++fallbacks_;
    AgentDecision d = full(type, a, i, w, s, true);
    d.fallback = true;
    return d;
  }
  const TargetId j = nb[static_cast<std::size_t>(p.label)];
  if (w.free_for(j, a)) {
    const auto sol = solve_for_neighbor(type, local_state(w, i, uncovered_neighbors(w, i, a)), i,
                                        j, w.graph, effective_horizon(opts_, w), opts_.solver);
    if (sol.j >= 0) {
      ++learned_;
      AgentDecision d;
      d.decision = sol.decision;
      d.solver_calls = 1;
      d.learned = true;
      return d;
    }
  }
  // Predicted target covered or out of reach.
  ++fallbacks_;
  AgentDecision d = full(type, a, i, w, s, false);
  d.fallback = true;
  return d;
}

std::map<std::string, double> LearningRhcController::stats() const {
  long trained = 0;
  for (const auto& [k, s] : slots_) trained += s.model.has_value();
  return {{"learned_decisions", static_cast<double>(learned_)},
          {"fallbacks", static_cast<double>(fallbacks_)},
          {"full_decisions", static_cast<double>(full_)},
          {"trainings", static_cast<double>(trainings_)},
          {"trained_slots", static_cast<double>(trained)},
          {"slots", static_cast<double>(slots_.size())}};
}

}  // namespace persmon
