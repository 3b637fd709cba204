#pragma once

// Linear-chain and tree-structured CRFs over the four stance labels.
//
// Factors: a unary log-potential per node (W x + b) and a single shared 4x4
// transition log-potential on every parent->child edge.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/features.hpp"
#include "stance/json_io.hpp"
#include "stance/label.hpp"
#include "stance/lbfgs.hpp"
#include "stance/thread.hpp"

namespace stance::crf {

enum class Topology { Chain, Tree };

inline std::string_view to_string(Topology t) { return t == Topology::Chain ? "chain" : "tree"; }

struct CrfModel {
  Eigen::MatrixXd node_weights;  // 4 x d
  Eigen::Vector4d node_bias = Eigen::Vector4d::Zero();
  Eigen::Matrix4d transition = Eigen::Matrix4d::Zero();  // [parent label, child label]
  Topology topology = Topology::Chain;
  FeatureLayout layout;

  static CrfModel zeros(std::size_t dim, Topology topology = Topology::Chain) {
    CrfModel m;
    m.node_weights = Eigen::MatrixXd::Zero(4, static_cast<Eigen::Index>(dim));
    m.topology = topology;
    return m;
  }

  std::size_t dim() const { return static_cast<std::size_t>(node_weights.cols()); }
};

// Category weights, indexed by canonical label order.
using CategoryWeights = Eigen::Vector4d;

inline Eigen::Vector4d node_log_potentials(const Eigen::VectorXd& x, const CrfModel& model) {
  if (x.size() != model.node_weights.cols())
    throw Error(ErrorCode::DimensionMismatch, "feature width " + std::to_string(x.size()) + " != model width " +
                                                  std::to_string(model.node_weights.cols()));
  return model.node_weights * x + model.node_bias;
}

// One row of log-potentials per node.
inline Eigen::MatrixXd node_potentials(const Eigen::MatrixXd& features, const CrfModel& model) {
  if (features.cols() != model.node_weights.cols())
    throw Error(ErrorCode::DimensionMismatch, "feature width does not match model");
  return (features * model.node_weights.transpose()).rowwise() + model.node_bias.transpose();
}

namespace detail {

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline Eigen::Index first_argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

inline std::vector<StanceLabel> to_labels(const std::vector<Eigen::Index>& idx) {
  std::vector<StanceLabel> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(label_at(static_cast<std::size_t>(i)));
  return out;
}

}  // namespace detail

struct Inference {
  double log_z = 0.0;
  double log_z_backward = 0.0;
  Eigen::MatrixXd node_marginals;             // n x 4
  std::vector<Eigen::Matrix4d> edge_marginals;  // chain: edge k joins k and k+1; tree: indexed by child node
};

// Log-space forward-backward over a chain; `potentials` is n x 4.
inline Inference chain_infer(const Eigen::MatrixXd& potentials, const Eigen::Matrix4d& transition) {
  const Eigen::Index n = potentials.rows();
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "empty chain");
  Eigen::MatrixXd fwd(n, 4);
  Eigen::MatrixXd bwd(n, 4);
  fwd.row(0) = potentials.row(0);
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index y = 0; y < 4; ++y)
      fwd(i, y) = potentials(i, y) + detail::log_sum_exp(fwd.row(i - 1).transpose() + transition.col(y));
  bwd.row(n - 1).setZero();
  for (Eigen::Index i = n - 1; i-- > 0;)
    for (Eigen::Index y = 0; y < 4; ++y)
      bwd(i, y) = detail::log_sum_exp(transition.row(y).transpose() + potentials.row(i + 1).transpose() +
                                      bwd.row(i + 1).transpose());
  Inference out;
  out.log_z = detail::log_sum_exp(fwd.row(n - 1).transpose());
  out.log_z_backward = detail::log_sum_exp(potentials.row(0).transpose() + bwd.row(0).transpose());
  out.node_marginals = ((fwd + bwd).array() - out.log_z).exp().matrix();
  out.edge_marginals.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    Eigen::Matrix4d e;
    for (Eigen::Index a = 0; a < 4; ++a)
      for (Eigen::Index b = 0; b < 4; ++b)
        e(a, b) = std::exp(fwd(i, a) + transition(a, b) + potentials(i + 1, b) + bwd(i + 1, b) - out.log_z);
    out.edge_marginals.push_back(e);
  }
  return out;
}

// Viterbi; ties resolve to the lowest label index.
inline std::vector<StanceLabel> chain_decode(const Eigen::MatrixXd& potentials, const Eigen::Matrix4d& transition) {
  const Eigen::Index n = potentials.rows();
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "empty chain");
  Eigen::MatrixXd delta(n, 4);
  Eigen::MatrixXi back(n, 4);
  delta.row(0) = potentials.row(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index y = 0; y < 4; ++y) {
      Eigen::Vector4d cand = delta.row(i - 1).transpose() + transition.col(y);
      const auto best = detail::first_argmax(cand);
      back(i, y) = static_cast<int>(best);
      delta(i, y) = potentials(i, y) + cand[best];
    }
  }
  std::vector<Eigen::Index> labels(static_cast<std::size_t>(n));
  labels.back() = detail::first_argmax(delta.row(n - 1).transpose());
  for (Eigen::Index i = n - 1; i > 0; --i)
    labels[static_cast<std::size_t>(i - 1)] = back(i, labels[static_cast<std::size_t>(i)]);
  return detail::to_labels(labels);
}

namespace detail {

struct TreeShape {
  std::size_t root = 0;
  std::vector<std::vector<std::size_t>> children;
  std::vector<std::size_t> order;  // parents before children
};

inline TreeShape tree_shape(const std::vector<std::size_t>& parents) {
  TreeShape s;
  const std::size_t n = parents.size();
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "empty tree");
  s.children.assign(n, {});
  std::size_t roots = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (parents[v] == kNoParent) {
      s.root = v;
      ++roots;
    } else {
      if (parents[v] >= n) throw Error(ErrorCode::ShapeMismatch, "parent index out of range");
      s.children[parents[v]].push_back(v);
    }
  }
  if (roots != 1) throw Error(ErrorCode::ShapeMismatch, "tree must have exactly one root");
  s.order.reserve(n);
  s.order.push_back(s.root);
  for (std::size_t k = 0; k < s.order.size(); ++k)
    for (auto c : s.children[s.order[k]]) s.order.push_back(c);
  if (s.order.size() != n) throw Error(ErrorCode::ShapeMismatch, "parent links do not form a tree");
  return s;
}

}  // namespace detail

// Two-pass sum-product on a tree. `parents[v]` is kNoParent for the root.
inline Inference tree_infer(const Eigen::MatrixXd& potentials, const std::vector<std::size_t>& parents,
                            const Eigen::Matrix4d& transition) {
  if (static_cast<std::size_t>(potentials.rows()) != parents.size())
    throw Error(ErrorCode::ShapeMismatch, "potentials and parents differ in length");
  const auto shape = detail::tree_shape(parents);
  const std::size_t n = parents.size();
  Eigen::MatrixXd up = potentials;             // potentials + messages from children
  Eigen::MatrixXd to_parent(static_cast<Eigen::Index>(n), 4);  // message v -> parent(v), over parent labels
  to_parent.setZero();
  for (std::size_t k = n; k-- > 0;) {
    const auto v = shape.order[k];
    const auto vi = static_cast<Eigen::Index>(v);
    if (parents[v] == kNoParent) continue;
    for (Eigen::Index a = 0; a < 4; ++a)
      to_parent(vi, a) = detail::log_sum_exp(transition.row(a).transpose() + up.row(vi).transpose());
    up.row(static_cast<Eigen::Index>(parents[v])) += to_parent.row(vi);
  }
  Inference out;
  const auto ri = static_cast<Eigen::Index>(shape.root);
  out.log_z = detail::log_sum_exp(up.row(ri).transpose());

  Eigen::MatrixXd belief = up;  // full log-belief once downward messages are added
  for (std::size_t k = 1; k < n; ++k) {
    const auto v = shape.order[k];
    const auto vi = static_cast<Eigen::Index>(v);
    const auto pi = static_cast<Eigen::Index>(parents[v]);
    Eigen::Vector4d cavity = belief.row(pi).transpose() - to_parent.row(vi).transpose();
    Eigen::Vector4d down;
    for (Eigen::Index b = 0; b < 4; ++b) down[b] = detail::log_sum_exp(cavity + transition.col(b));
    belief.row(vi) += down.transpose();
  }
  out.node_marginals = (belief.array() - out.log_z).exp().matrix();
  const auto last = static_cast<Eigen::Index>(shape.order.back());
  out.log_z_backward = detail::log_sum_exp(belief.row(last).transpose());

  out.edge_marginals.assign(n, Eigen::Matrix4d::Zero());
  for (std::size_t v = 0; v < n; ++v) {
    if (parents[v] == kNoParent) continue;
    const auto vi = static_cast<Eigen::Index>(v);
    const auto pi = static_cast<Eigen::Index>(parents[v]);
    Eigen::Matrix4d e;
    for (Eigen::Index a = 0; a < 4; ++a)
      for (Eigen::Index b = 0; b < 4; ++b)
        e(a, b) = std::exp(belief(pi, a) - to_parent(vi, a) + transition(a, b) + up(vi, b) - out.log_z);
    out.edge_marginals[v] = e;
  }
  return out;
}

// Max-product with backpointers; ties resolve to the lowest label index.
inline std::vector<StanceLabel> tree_decode(const Eigen::MatrixXd& potentials, const std::vector<std::size_t>& parents,
                                            const Eigen::Matrix4d& transition) {
  if (static_cast<std::size_t>(potentials.rows()) != parents.size())
    throw Error(ErrorCode::ShapeMismatch, "potentials and parents differ in length");
  const auto shape = detail::tree_shape(parents);
  const std::size_t n = parents.size();
  Eigen::MatrixXd up = potentials;
  Eigen::MatrixXi back = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), 4);  // best child label per parent label
  for (std::size_t k = n; k-- > 0;) {
    const auto v = shape.order[k];
    if (parents[v] == kNoParent) continue;
    const auto vi = static_cast<Eigen::Index>(v);
    for (Eigen::Index a = 0; a < 4; ++a) {
      Eigen::Vector4d cand = transition.row(a).transpose() + up.row(vi).transpose();
      const auto best = detail::first_argmax(cand);
      back(vi, a) = static_cast<int>(best);
      up(static_cast<Eigen::Index>(parents[v]), a) += cand[best];
    }
  }
  std::vector<Eigen::Index> labels(n, 0);
  labels[shape.root] = detail::first_argmax(up.row(static_cast<Eigen::Index>(shape.root)).transpose());
  for (std::size_t k = 1; k < n; ++k) {
    const auto v = shape.order[k];
    labels[v] = back(static_cast<Eigen::Index>(v), labels[parents[v]]);
  }
  return detail::to_labels(labels);
}

// ---------------------------------------------------------------------------
// Training

// One training sequence: a branch (parents[i] = i - 1) or a whole thread.
struct Instance {
  Eigen::MatrixXd features;          // n x d
  std::vector<std::size_t> parents;  // kNoParent for the first/root node
  std::vector<std::optional<StanceLabel>> gold;

  static std::vector<std::size_t> chain_parents(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i == 0 ? kNoParent : i - 1;
    return p;
  }
};

inline bool is_chain(const std::vector<std::size_t>& parents) {
  for (std::size_t i = 0; i < parents.size(); ++i)
    if (parents[i] != (i == 0 ? kNoParent : i - 1)) return false;
  return true;
}

inline Inference infer(const Eigen::MatrixXd& potentials, const std::vector<std::size_t>& parents,
                       const Eigen::Matrix4d& transition) {
  if (is_chain(parents)) {
    auto chain = chain_infer(potentials, transition);
    // Re-index edge marginals by child node to match the tree convention.
    std::vector<Eigen::Matrix4d> by_child(parents.size(), Eigen::Matrix4d::Zero());
    for (std::size_t k = 0; k < chain.edge_marginals.size(); ++k) by_child[k + 1] = chain.edge_marginals[k];
    chain.edge_marginals = std::move(by_child);
    return chain;
  }
  return tree_infer(potentials, parents, transition);
}

// Flat parameter layout: node_weights (row-major 4 x d), node_bias (4), transition (row-major 4 x 4).
inline std::size_t parameter_count(std::size_t dim) { return 4 * dim + 4 + 16; }

inline Eigen::VectorXd flatten(const CrfModel& m) {
  const auto d = static_cast<Eigen::Index>(m.dim());
  Eigen::VectorXd x(static_cast<Eigen::Index>(parameter_count(m.dim())));
  for (Eigen::Index y = 0; y < 4; ++y) x.segment(y * d, d) = m.node_weights.row(y).transpose();
  x.segment(4 * d, 4) = m.node_bias;
  for (Eigen::Index a = 0; a < 4; ++a) x.segment(4 * d + 4 + 4 * a, 4) = m.transition.row(a).transpose();
  return x;
}

inline void unflatten(const Eigen::VectorXd& x, CrfModel& m) {
  const auto d = static_cast<Eigen::Index>(m.dim());
  if (x.size() != static_cast<Eigen::Index>(parameter_count(m.dim())))
    throw Error(ErrorCode::DimensionMismatch, "parameter vector has wrong size");
  for (Eigen::Index y = 0; y < 4; ++y) m.node_weights.row(y) = x.segment(y * d, d).transpose();
  m.node_bias = x.segment(4 * d, 4);
  for (Eigen::Index a = 0; a < 4; ++a) m.transition.row(a) = x.segment(4 * d + 4 + 4 * a, 4).transpose();
}

struct LossBreakdown {
  double loss = 0.0;
  double partition = 0.0;    // sum of log Z
  double data_term = 0.0;    // weighted gold score, sum_i w(g_i) * (unary + incoming edge)
  double regularizer = 0.0;  // (l2 / 2) (||node_weights||^2 + ||transition||^2)
  Eigen::VectorXd gradient;  // flat, see flatten()
};

// loss = sum_instances [ log Z - sum_nodes w(gold) * (unary(gold) + transition(gold_parent, gold)) ]
//        + (l2 / 2) (||node_weights||^2 + ||transition||^2)
// Only the gold (empirical) score is weighted; the partition term is not.
inline LossBreakdown nll_and_gradient(const CrfModel& model, const std::vector<Instance>& instances,
                                      const CategoryWeights& weights, double l2) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  LossBreakdown out;
  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(model.dim())));
  Eigen::MatrixXd g_w = Eigen::MatrixXd::Zero(4, d);
  Eigen::Vector4d g_b = Eigen::Vector4d::Zero();
  Eigen::Matrix4d g_t = Eigen::Matrix4d::Zero();

  for (const auto& inst : instances) {
    const auto n = static_cast<Eigen::Index>(inst.parents.size());
    if (inst.features.rows() != n || inst.gold.size() != inst.parents.size())
      throw Error(ErrorCode::ShapeMismatch, "instance features, parents and labels differ in length");
    const Eigen::MatrixXd pot = node_potentials(inst.features, model);
    const Inference inf = infer(pot, inst.parents, model.transition);
    out.partition += inf.log_z;
    // Expected feature counts.
    g_w += inf.node_marginals.transpose() * inst.features;
    g_b += inf.node_marginals.colwise().sum().transpose();
    for (std::size_t v = 0; v < inst.parents.size(); ++v)
      if (inst.parents[v] != kNoParent) g_t += inf.edge_marginals[v];
    // Weighted empirical counts.
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& g = inst.gold[static_cast<std::size_t>(i)];
      if (!g) throw Error(ErrorCode::UnlabelledNode, "training node without a gold label");
      const auto y = static_cast<Eigen::Index>(index_of(*g));
      const double w = weights[y];
      double score = pot(i, y);
      g_w.row(y) -= w * inst.features.row(i);
      g_b[y] -= w;
      const auto p = inst.parents[static_cast<std::size_t>(i)];
      if (p != kNoParent) {
        const auto& gp = inst.gold[p];
        if (!gp) throw Error(ErrorCode::UnlabelledNode, "training node without a gold label");
        const auto a = static_cast<Eigen::Index>(index_of(*gp));
        score += model.transition(a, y);
        g_t(a, y) -= w;
      }
      out.data_term += w * score;
    }
  }
  Eigen::VectorXd params = flatten(model);
  params.segment(4 * d, 4).setZero();  // biases are not penalized
  out.regularizer = 0.5 * l2 * params.squaredNorm();
  for (Eigen::Index y = 0; y < 4; ++y) out.gradient.segment(y * d, d) = g_w.row(y).transpose();
  out.gradient.segment(4 * d, 4) = g_b;
  for (Eigen::Index a = 0; a < 4; ++a) out.gradient.segment(4 * d + 4 + 4 * a, 4) = g_t.row(a).transpose();
  out.gradient += l2 * params;
  out.loss = out.partition - out.data_term + out.regularizer;
  return out;
}

struct TrainConfig {
  double l2 = 1.0;
  std::size_t max_iter = 300;
  double tol = 1e-5;
  Topology topology = Topology::Chain;
  bool freeze_transition = false;  // keep the transition matrix at zero
};

struct TrainResult {
  CrfModel model;
  std::vector<double> loss_trace;
  std::size_t iterations = 0;
  bool converged = false;
};

// Removes shifts shared by all four labels (per feature in node_weights, in node_bias, and
// across the whole transition matrix). Such shifts leave every distribution unchanged.
inline void center_label_shifts(CrfModel& m) {
  m.node_weights.rowwise() -= m.node_weights.colwise().mean();
  m.node_bias.array() -= m.node_bias.mean();
  m.transition.array() -= m.transition.mean();
}

// L-BFGS from zero initialization over centered parameters.
inline TrainResult train_report(const std::vector<Instance>& instances, const CategoryWeights& weights,
                                const TrainConfig& cfg) {
  if (instances.empty()) throw Error(ErrorCode::InvalidConfig, "no training instances");
  const std::size_t dim = static_cast<std::size_t>(instances.front().features.cols());
  CrfModel work = CrfModel::zeros(dim, cfg.topology);
  const auto n_params = static_cast<Eigen::Index>(parameter_count(dim));
  const Eigen::Index n_free = cfg.freeze_transition ? n_params - 16 : n_params;

  optim::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n_params);
    full.head(n_free) = x;
    unflatten(full, work);
    center_label_shifts(work);
    auto lb = nll_and_gradient(work, instances, weights, cfg.l2);
    CrfModel grad = CrfModel::zeros(dim, cfg.topology);
    unflatten(lb.gradient, grad);
    center_label_shifts(grad);
    g = flatten(grad).head(n_free);
    return lb.loss;
  };
  optim::LbfgsOptions opt;
  opt.max_iter = cfg.max_iter;
  opt.grad_tol = cfg.tol;
  const auto res = optim::minimize(objective, Eigen::VectorXd::Zero(n_free), opt);
  if (!std::isfinite(res.value)) throw Error(ErrorCode::OptimizationDiverged, "non-finite CRF objective");

  TrainResult out;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n_params);
  full.head(n_free) = res.x;
  out.model = CrfModel::zeros(dim, cfg.topology);
  unflatten(full, out.model);
  center_label_shifts(out.model);
  out.loss_trace = res.trace;
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

inline CrfModel train(const std::vector<Instance>& instances, const CategoryWeights& weights, const TrainConfig& cfg) {
  return train_report(instances, weights, cfg).model;
}

// ---------------------------------------------------------------------------
// Prediction restricted to preceding tweets

// Linear CRF: each tweet is labelled by decoding its root-to-tweet path and
// keeping the last label. The Viterbi score at a node already maximizes over
// that prefix, so one traversal labels every tweet.
inline std::vector<StanceLabel> predict_prefix_paths(const CrfModel& model, const ConversationThread& thread,
                                                     const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd pot = node_potentials(features, model);
  std::vector<StanceLabel> out(thread.size());
  std::vector<Eigen::Vector4d> delta(thread.size());
  std::vector<std::size_t> stack{thread.root()};
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    const auto vi = static_cast<Eigen::Index>(v);
    if (thread.parent(v) == kNoParent) {
      delta[v] = pot.row(vi).transpose();
    } else {
      const auto& prev = delta[thread.parent(v)];
      for (Eigen::Index y = 0; y < 4; ++y) delta[v][y] = pot(vi, y) + (prev + model.transition.col(y)).maxCoeff();
    }
    out[v] = label_at(static_cast<std::size_t>(detail::first_argmax(delta[v])));
    for (auto c : thread.children(v)) stack.push_back(c);
  }
  return out;
}

// Tree CRF: each tweet is labelled by decoding the subtree of tweets posted no
// later than it (chronological order), plus their ancestors.
inline std::vector<StanceLabel> predict_prefix_trees(const CrfModel& model, const ConversationThread& thread,
                                                     const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd pot = node_potentials(features, model);
  const auto chrono = chronological_indices(thread);
  std::vector<StanceLabel> out(thread.size());
  std::vector<std::uint8_t> included(thread.size(), 0);
  for (std::size_t k = 0; k < chrono.size(); ++k) {
    for (auto v = chrono[k]; v != kNoParent && !included[v]; v = thread.parent(v)) included[v] = 1;
    std::vector<std::size_t> nodes;
    std::vector<std::size_t> local(thread.size(), kNoParent);
    for (std::size_t v = 0; v < thread.size(); ++v)
      if (included[v]) {
        local[v] = nodes.size();
        nodes.push_back(v);
      }
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(nodes.size()), 4);
    std::vector<std::size_t> parents(nodes.size());
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      sub.row(static_cast<Eigen::Index>(j)) = pot.row(static_cast<Eigen::Index>(nodes[j]));
      const auto p = thread.parent(nodes[j]);
      parents[j] = p == kNoParent ? kNoParent : local[p];
    }
    const auto labels = tree_decode(sub, parents, model.transition);
    out[chrono[k]] = labels[local[chrono[k]]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: {topology, feature_layout, node_weights, node_bias, transition}

inline nlohmann::json to_json(const CrfModel& m) {
  nlohmann::json j;
  j["topology"] = std::string(to_string(m.topology));
  j["feature_layout"] = layout_to_json(m.layout);
  j["node_weights"] = matrix_to_json(m.node_weights);
  j["node_bias"] = std::vector<double>(m.node_bias.data(), m.node_bias.data() + 4);
  j["transition"] = matrix_to_json(m.transition);
  return j;
}

inline CrfModel model_from_json(const nlohmann::json& j) {
  try {
    CrfModel m;
    const auto topo = j.at("topology").get<std::string>();
    if (topo != "chain" && topo != "tree") throw Error(ErrorCode::MalformedInput, "unknown topology " + topo);
    m.topology = topo == "chain" ? Topology::Chain : Topology::Tree;
    m.layout = layout_from_json(j.at("feature_layout"));
    const auto& w = j.at("node_weights");
    const auto cols = w.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(w.at(0).size());
    m.node_weights = matrix_from_json(w, 4, cols);
    auto b = j.at("node_bias").get<std::vector<double>>();
    if (b.size() != 4) throw Error(ErrorCode::MalformedInput, "node_bias must have 4 entries");
    for (Eigen::Index y = 0; y < 4; ++y) m.node_bias[y] = b[static_cast<std::size_t>(y)];
    m.transition = matrix_from_json(j.at("transition"), 4, 4);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("CRF model: ") + e.what());
  }
}

}  // namespace stance::crf
