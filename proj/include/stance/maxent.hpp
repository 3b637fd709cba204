#pragma once

// Multinomial logistic regression over per-tweet feature vectors, trained with
// inverse-frequency category weights.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/features.hpp"
#include "stance/json_io.hpp"
#include "stance/label.hpp"
#include "stance/lbfgs.hpp"

namespace stance {

// w_c = N / (4 * count_c)
inline Eigen::Vector4d category_weights(const std::array<std::size_t, kNumLabels>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  Eigen::Vector4d w;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    if (counts[k] == 0)
      throw Error(ErrorCode::ZeroCount, "no training tweets labelled " + std::string(to_string(label_at(k))));
    w[static_cast<Eigen::Index>(k)] = total / (4.0 * static_cast<double>(counts[k]));
  }
  return w;
}

inline std::array<std::size_t, kNumLabels> label_counts(const std::vector<StanceLabel>& labels) {
  std::array<std::size_t, kNumLabels> counts{};
  for (auto l : labels) ++counts[index_of(l)];
  return counts;
}

namespace maxent {

struct MaxEntModel {
  Eigen::MatrixXd weights;  // 4 x d
  Eigen::Vector4d bias = Eigen::Vector4d::Zero();
  FeatureLayout layout;

  static MaxEntModel zeros(std::size_t dim) {
    MaxEntModel m;
    m.weights = Eigen::MatrixXd::Zero(4, static_cast<Eigen::Index>(dim));
    return m;
  }
  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
};

inline Eigen::Vector4d softmax(const Eigen::Vector4d& z) {
  const Eigen::Vector4d e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

inline Eigen::Vector4d predict_proba(const Eigen::VectorXd& x, const MaxEntModel& model) {
  if (x.size() != model.weights.cols())
    throw Error(ErrorCode::DimensionMismatch, "feature width " + std::to_string(x.size()) + " != model width " +
                                                  std::to_string(model.weights.cols()));
  return softmax(model.weights * x + model.bias);
}

inline StanceLabel predict(const Eigen::VectorXd& x, const MaxEntModel& model) {
  const auto p = predict_proba(x, model);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < 4; ++k)
    if (p[k] > p[best]) best = k;
  return label_at(static_cast<std::size_t>(best));
}

// Row i of `features` is one instance with gold label labels[i].
struct Instances {
  Eigen::MatrixXd features;
  std::vector<StanceLabel> labels;
};

inline std::size_t parameter_count(std::size_t dim) { return 4 * dim + 4; }

inline Eigen::VectorXd flatten(const MaxEntModel& m) {
  const auto d = static_cast<Eigen::Index>(m.dim());
  Eigen::VectorXd x(4 * d + 4);
  for (Eigen::Index y = 0; y < 4; ++y) x.segment(y * d, d) = m.weights.row(y).transpose();
  x.tail(4) = m.bias;
  return x;
}

inline void unflatten(const Eigen::VectorXd& x, MaxEntModel& m) {
  const auto d = static_cast<Eigen::Index>(m.dim());
  if (x.size() != 4 * d + 4) throw Error(ErrorCode::DimensionMismatch, "parameter vector has wrong size");
  for (Eigen::Index y = 0; y < 4; ++y) m.weights.row(y) = x.segment(y * d, d).transpose();
  m.bias = x.tail(4);
}

// sum_i w(gold_i) * (-log p(gold_i | x_i)) + (l2 / 2) ||weights||^2, gradient in flatten() order.
inline double nll_and_gradient(const MaxEntModel& model, const Instances& data, const Eigen::Vector4d& cat_weights,
                               double l2, Eigen::VectorXd& grad) {
  const auto n = data.features.rows();
  const auto d = static_cast<Eigen::Index>(model.dim());
  if (static_cast<std::size_t>(n) != data.labels.size())
    throw Error(ErrorCode::LengthMismatch, "features and labels differ in length");
  if (data.features.cols() != d) throw Error(ErrorCode::DimensionMismatch, "feature width does not match model");
  Eigen::MatrixXd scores = (data.features * model.weights.transpose()).rowwise() + model.bias.transpose();
  Eigen::MatrixXd resid(n, 4);  // w_i * (p_i - onehot_i)
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = scores.row(i).maxCoeff();
    const Eigen::RowVector4d e = (scores.row(i).array() - m).exp();
    const double z = e.sum();
    const auto y = static_cast<Eigen::Index>(index_of(data.labels[static_cast<std::size_t>(i)]));
    const double w = cat_weights[y];
    loss += w * (m + std::log(z) - scores(i, y));
    resid.row(i) = w * e / z;
    resid(i, y) -= w;
  }
  const Eigen::MatrixXd g_w = resid.transpose() * data.features + l2 * model.weights;
  grad.resize(4 * d + 4);
  for (Eigen::Index y = 0; y < 4; ++y) grad.segment(y * d, d) = g_w.row(y).transpose();
  grad.tail(4) = resid.colwise().sum().transpose();
  return loss + 0.5 * l2 * model.weights.squaredNorm();
}

struct TrainConfig {
  double l2 = 1.0;
  std::size_t max_iter = 300;
  double tol = 1e-5;
  std::optional<std::uint64_t> init_seed;  // random starting point instead of zeros
};

struct TrainResult {
  MaxEntModel model;
  double objective = 0.0;
  std::vector<double> loss_trace;
  bool converged = false;
};

inline TrainResult train_report(const Instances& data, const Eigen::Vector4d& cat_weights, const TrainConfig& cfg) {
  if (data.labels.empty()) throw Error(ErrorCode::InvalidConfig, "no training instances");
  const auto dim = static_cast<std::size_t>(data.features.cols());
  MaxEntModel work = MaxEntModel::zeros(dim);
  optim::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    unflatten(x, work);
    return nll_and_gradient(work, data, cat_weights, cfg.l2, g);
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(dim)));
  if (cfg.init_seed) {
    std::mt19937_64 rng(*cfg.init_seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index k = 0; k < x0.size(); ++k) x0[k] = u(rng);
  }
  optim::LbfgsOptions opt;
  opt.max_iter = cfg.max_iter;
  opt.grad_tol = cfg.tol;
  const auto res = optim::minimize(objective, x0, opt);
  if (!std::isfinite(res.value)) throw Error(ErrorCode::OptimizationDiverged, "non-finite MaxEnt objective");
  TrainResult out;
  out.model = MaxEntModel::zeros(dim);
  unflatten(res.x, out.model);
  out.objective = res.value;
  out.loss_trace = res.trace;
  out.converged = res.converged;
  return out;
}

inline MaxEntModel train(const Instances& data, const Eigen::Vector4d& cat_weights, const TrainConfig& cfg = {}) {
  return train_report(data, cat_weights, cfg).model;
}

inline nlohmann::json to_json(const MaxEntModel& m) {
  nlohmann::json j;
  j["feature_layout"] = layout_to_json(m.layout);
  j["weights"] = matrix_to_json(m.weights);
  j["bias"] = vector_to_std(m.bias);
  return j;
}

inline MaxEntModel model_from_json(const nlohmann::json& j) {
  try {
    MaxEntModel m;
    m.layout = layout_from_json(j.at("feature_layout"));
    const auto& w = j.at("weights");
    const auto cols = w.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(w.at(0).size());
    m.weights = matrix_from_json(w, 4, cols);
    m.bias = vector_from_json(j.at("bias"), 4);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("MaxEnt model: ") + e.what());
  }
}

}  // namespace maxent
}  // namespace stance
