#pragma once

// Branch-level recurrent classifier: stacked LSTM layers, ReLU dense layers and
// a per-timestep softmax, trained with a novelty-masked cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/json_io.hpp"
#include "stance/label.hpp"
#include "stance/metrics.hpp"
#include "stance/thread.hpp"

namespace stance::lstm {

// Gate blocks are stacked input, forget, output, candidate.
struct LstmLayer {
  Eigen::MatrixXd w;  // 4h x in
  Eigen::MatrixXd u;  // 4h x h
  Eigen::VectorXd b;  // 4h

  Eigen::Index input_size() const { return w.cols(); }
  Eigen::Index hidden_size() const { return u.cols(); }
};

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

struct BranchLstmModel {
  std::vector<LstmLayer> recurrent;
  std::vector<DenseLayer> dense;  // ReLU
  DenseLayer output;              // 4 x last, softmax
  double dropout = 0.0;
  double l2 = 0.0;

  Eigen::Index input_size() const { return recurrent.front().input_size(); }

  void validate() const {
    if (recurrent.empty()) throw Error(ErrorCode::ShapeMismatch, "model needs at least one recurrent layer");
    Eigen::Index width = recurrent.front().input_size();
    for (const auto& l : recurrent) {
      const auto h = l.hidden_size();
      if (l.input_size() != width || l.w.rows() != 4 * h || l.u.rows() != 4 * h || l.b.size() != 4 * h)
        throw Error(ErrorCode::ShapeMismatch, "recurrent layer shapes do not chain");
      width = h;
    }
    for (const auto& l : dense) {
      if (l.w.cols() != width || l.b.size() != l.w.rows()) throw Error(ErrorCode::ShapeMismatch, "dense layer shapes do not chain");
      width = l.w.rows();
    }
    if (output.w.rows() != 4 || output.w.cols() != width || output.b.size() != 4)
      throw Error(ErrorCode::ShapeMismatch, "output layer must map to 4 units");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidConfig, "dropout must lie in [0, 1)");
    if (!(l2 >= 0.0)) throw Error(ErrorCode::InvalidConfig, "l2 must be non-negative");
  }

  // Applies f(matrix) to every parameter block, weights before biases per layer.
  template <class F>
  void for_each_block(F&& f) {
    for (auto& l : recurrent) {
      f(l.w, true);
      f(l.u, true);
      f(l.b, false);
    }
    for (auto& l : dense) {
      f(l.w, true);
      f(l.b, false);
    }
    f(output.w, true);
    f(output.b, false);
  }
  template <class F>
  void for_each_block(F&& f) const {
    const_cast<BranchLstmModel*>(this)->for_each_block([&](auto& m, bool is_weight) { f(std::as_const(m), is_weight); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const auto& m, bool) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  double weight_norm_sq() const {
    double s = 0.0;
    for_each_block([&](const auto& m, bool is_weight) {
      if (is_weight) s += m.squaredNorm();
    });
    return s;
  }

  // Same shapes, all zeros.
  BranchLstmModel zeros_like() const {
    BranchLstmModel z = *this;
    z.for_each_block([](auto& m, bool) { m.setZero(); });
    return z;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for_each_block([&](const auto& m, bool) {
      x.segment(k, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
      k += m.size();
    });
    return x;
  }

  void unflatten(const Eigen::VectorXd& x) {
    if (x.size() != static_cast<Eigen::Index>(parameter_count()))
      throw Error(ErrorCode::ShapeMismatch, "parameter vector has wrong size");
    Eigen::Index k = 0;
    for_each_block([&](auto& m, bool) {
      Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = x.segment(k, m.size());
      k += m.size();
    });
  }

  // Glorot-uniform weights, zero biases.
  static BranchLstmModel init(Eigen::Index input_size, const std::vector<std::size_t>& lstm_units,
                              const std::vector<std::size_t>& dense_units, double dropout, double l2,
                              std::uint64_t seed) {
    if (input_size <= 0) throw Error(ErrorCode::ShapeMismatch, "input size must be positive");
    if (lstm_units.empty()) throw Error(ErrorCode::InvalidConfig, "at least one recurrent layer is required");
    std::mt19937_64 rng(seed);
    auto glorot = [&](Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out) {
      const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-s, s);
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
      return m;
    };
    BranchLstmModel m;
    m.dropout = dropout;
    m.l2 = l2;
    Eigen::Index width = input_size;
    for (auto units : lstm_units) {
      const auto h = static_cast<Eigen::Index>(units);
      if (h <= 0) throw Error(ErrorCode::InvalidConfig, "layer sizes must be positive");
      m.recurrent.push_back({glorot(4 * h, width, width, h), glorot(4 * h, h, h, h), Eigen::VectorXd::Zero(4 * h)});
      width = h;
    }
    for (auto units : dense_units) {
      const auto h = static_cast<Eigen::Index>(units);
      if (h <= 0) throw Error(ErrorCode::InvalidConfig, "layer sizes must be positive");
      m.dense.push_back({glorot(h, width, width, h), Eigen::VectorXd::Zero(h)});
      width = h;
    }
    m.output = {glorot(4, width, width, 4), Eigen::VectorXd::Zero(4)};
    m.validate();
    return m;
  }
};

// One branch: inputs row t is the feature vector at position t.
struct BranchExample {
  Eigen::MatrixXd inputs;
  std::vector<StanceLabel> gold;
  std::vector<std::uint8_t> mask;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerTrace {
  Eigen::MatrixXd in;    // T x in
  Eigen::MatrixXd gates;  // T x 4h, post-activation
  Eigen::MatrixXd c;      // T x h
  Eigen::MatrixXd h;      // T x h
};

struct DenseTrace {
  Eigen::MatrixXd in;    // T x in, after dropout
  Eigen::MatrixXd mask;  // T x in, inverted-dropout scale (1 when off)
  Eigen::MatrixXd pre;   // T x out
};

struct Trace {
  std::vector<LayerTrace> recurrent;
  std::vector<DenseTrace> dense;  // dense layers, then the output layer last
  Eigen::MatrixXd probs;          // T x 4
};

inline Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return Eigen::MatrixXd::Ones(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(*rng) >= rate ? keep : 0.0;
  return m;
}

inline Trace run_forward(const Eigen::MatrixXd& inputs, const BranchLstmModel& model, bool train_mode,
                         std::uint64_t seed) {
  if (inputs.rows() < 1) throw Error(ErrorCode::ShapeMismatch, "branch must have at least one position");
  if (inputs.cols() != model.input_size())
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(inputs.cols()) + " != model input " +
                                              std::to_string(model.input_size()));
  const Eigen::Index T = inputs.rows();
  Trace tr;
  Eigen::MatrixXd x = inputs;
  for (const auto& layer : model.recurrent) {
    const Eigen::Index h = layer.hidden_size();
    LayerTrace lt{x, Eigen::MatrixXd(T, 4 * h), Eigen::MatrixXd(T, h), Eigen::MatrixXd(T, h)};
    const Eigen::MatrixXd proj = (x * layer.w.transpose()).rowwise() + layer.b.transpose();
    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
    for (Eigen::Index t = 0; t < T; ++t) {
      Eigen::VectorXd a = proj.row(t).transpose() + layer.u * h_prev;
      for (Eigen::Index k = 0; k < 3 * h; ++k) a[k] = sigmoid(a[k]);
      for (Eigen::Index k = 3 * h; k < 4 * h; ++k) a[k] = std::tanh(a[k]);
      Eigen::VectorXd c = a.segment(h, h).cwiseProduct(c_prev) + a.segment(0, h).cwiseProduct(a.segment(3 * h, h));
      Eigen::VectorXd hv = a.segment(2 * h, h).cwiseProduct(c.array().tanh().matrix());
      lt.gates.row(t) = a.transpose();
      lt.c.row(t) = c.transpose();
      lt.h.row(t) = hv.transpose();
      h_prev = std::move(hv);
      c_prev = std::move(c);
    }
    x = lt.h;
    tr.recurrent.push_back(std::move(lt));
  }
  std::mt19937_64 rng(seed);
  std::mt19937_64* drop_rng = train_mode ? &rng : nullptr;
  auto feed = [&](const DenseLayer& layer, bool relu) {
    DenseTrace dt;
    dt.mask = dropout_mask(T, x.cols(), model.dropout, drop_rng);
    dt.in = x.cwiseProduct(dt.mask);
    dt.pre = (dt.in * layer.w.transpose()).rowwise() + layer.b.transpose();
    x = relu ? Eigen::MatrixXd(dt.pre.cwiseMax(0.0)) : dt.pre;
    tr.dense.push_back(std::move(dt));
  };
  for (const auto& layer : model.dense) feed(layer, true);
  feed(model.output, false);
  tr.probs.resize(T, 4);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double m = x.row(t).maxCoeff();
    Eigen::RowVectorXd e = (x.row(t).array() - m).exp();
    tr.probs.row(t) = e / e.sum();
  }
  return tr;
}

// Accumulates into `grad` the gradient of sum_t mask_t * -log p_t(gold_t), scaled by `scale`.
inline double backward(const Trace& tr, const BranchExample& ex, const BranchLstmModel& model, double scale,
                       BranchLstmModel& grad) {
  const Eigen::Index T = tr.probs.rows();
  double loss = 0.0;
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(T, 4);  // gradient w.r.t. output pre-activations
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!ex.mask[static_cast<std::size_t>(t)]) continue;
    const auto y = static_cast<Eigen::Index>(index_of(ex.gold[static_cast<std::size_t>(t)]));
    loss -= std::log(tr.probs(t, y));
    dx.row(t) = scale * tr.probs.row(t);
    dx(t, y) -= scale;
  }
  // Output and dense layers, top-down.
  const std::size_t n_dense = model.dense.size();
  for (std::size_t k = n_dense + 1; k-- > 0;) {
    const DenseLayer& layer = k == n_dense ? model.output : model.dense[k];
    DenseLayer& g = k == n_dense ? grad.output : grad.dense[k];
    const DenseTrace& dt = tr.dense[k];
    Eigen::MatrixXd dpre = dx;
    if (k != n_dense) dpre = dpre.cwiseProduct((dt.pre.array() > 0.0).cast<double>().matrix());
    g.w.noalias() += dpre.transpose() * dt.in;
    g.b += dpre.colwise().sum().transpose();
    dx = (dpre * layer.w).cwiseProduct(dt.mask);
  }
  // Recurrent layers, top-down, each through time.
  for (std::size_t k = model.recurrent.size(); k-- > 0;) {
    const LstmLayer& layer = model.recurrent[k];
    LstmLayer& g = grad.recurrent[k];
    const LayerTrace& lt = tr.recurrent[k];
    const Eigen::Index h = layer.hidden_size();
    Eigen::MatrixXd da_all(T, 4 * h);
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
    for (Eigen::Index t = T; t-- > 0;) {
      const Eigen::VectorXd gates = lt.gates.row(t).transpose();
      const auto i = gates.segment(0, h).array();
      const auto f = gates.segment(h, h).array();
      const auto o = gates.segment(2 * h, h).array();
      const auto gg = gates.segment(3 * h, h).array();
      const Eigen::ArrayXd tc = lt.c.row(t).transpose().array().tanh();
      const Eigen::ArrayXd c_prev = t > 0 ? Eigen::ArrayXd(lt.c.row(t - 1).transpose()) : Eigen::ArrayXd::Zero(h);
      const Eigen::ArrayXd dh = dx.row(t).transpose().array() + dh_next.array();
      const Eigen::ArrayXd dc = dh * o * (1.0 - tc * tc) + dc_next.array();
      Eigen::VectorXd da(4 * h);
      da.segment(0, h) = (dc * gg * i * (1.0 - i)).matrix();
      da.segment(h, h) = (dc * c_prev * f * (1.0 - f)).matrix();
      da.segment(2 * h, h) = (dh * tc * o * (1.0 - o)).matrix();
      da.segment(3 * h, h) = (dc * i * (1.0 - gg * gg)).matrix();
      da_all.row(t) = da.transpose();
      dc_next = (dc * f).matrix();
      dh_next = layer.u.transpose() * da;
      if (t > 0) g.u.noalias() += da * lt.h.row(t - 1);
    }
    g.w.noalias() += da_all.transpose() * lt.in;
    g.b += da_all.colwise().sum().transpose();
    dx = da_all * layer.w;
  }
  return loss;
}

}  // namespace detail

// Per-timestep class probabilities (T x 4). Dropout masks are drawn from `seed` in train mode only.
inline Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, const BranchLstmModel& model, bool train_mode = false,
                               std::uint64_t seed = 0) {
  return detail::run_forward(inputs, model, train_mode, seed).probs;
}

// Mean over mask-1 positions of -log p(gold), plus (l2 / 2) * ||weights||^2 (biases excluded).
inline double masked_loss(const Eigen::MatrixXd& probs, const std::vector<StanceLabel>& gold,
                          const std::vector<std::uint8_t>& mask, const BranchLstmModel& model, double l2) {
  if (static_cast<std::size_t>(probs.rows()) != gold.size() || gold.size() != mask.size())
    throw Error(ErrorCode::ShapeMismatch, "probabilities, labels and mask differ in length");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (!mask[t]) continue;
    sum -= std::log(probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(index_of(gold[t]))));
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::EmptyMask, "mask selects no positions");
  return sum / static_cast<double>(count) + 0.5 * l2 * model.weight_norm_sq();
}

inline void check_example(const BranchExample& ex) {
  if (static_cast<std::size_t>(ex.inputs.rows()) != ex.gold.size() || ex.gold.size() != ex.mask.size())
    throw Error(ErrorCode::ShapeMismatch, "branch inputs, labels and mask differ in length");
}

// Gradient of the unnormalized masked sum of -log p(gold) for one branch (no regularizer).
inline BranchLstmModel branch_gradient(const BranchLstmModel& model, const BranchExample& ex, bool train_mode = false,
                                       std::uint64_t seed = 0, double* loss = nullptr) {
  check_example(ex);
  BranchLstmModel grad = model.zeros_like();
  const auto tr = detail::run_forward(ex.inputs, model, train_mode, seed);
  const double l = detail::backward(tr, ex, model, 1.0, grad);
  if (loss) *loss = l;
  return grad;
}

struct BatchResult {
  double loss = 0.0;
  BranchLstmModel gradient;
};

// Loss = sum of masked NLL over the batch / number of mask-1 positions + (l2 / 2) ||weights||^2.
// Branch b uses dropout seed seeds[b] when train_mode is set.
inline BatchResult batch_loss_and_gradient(const BranchLstmModel& model, const std::vector<const BranchExample*>& batch,
                                           bool train_mode, const std::vector<std::uint64_t>& seeds) {
  if (batch.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  std::size_t count = 0;
  for (const auto* ex : batch) {
    check_example(*ex);
    count += static_cast<std::size_t>(std::count(ex->mask.begin(), ex->mask.end(), std::uint8_t{1}));
  }
  const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(count, 1));
  BatchResult out{0.0, model.zeros_like()};
  double data = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto tr = detail::run_forward(batch[k]->inputs, model, train_mode, k < seeds.size() ? seeds[k] : 0);
    data += detail::backward(tr, *batch[k], model, scale, out.gradient);
  }
  out.loss = data * scale + 0.5 * model.l2 * model.weight_norm_sq();
  auto gi = out.gradient.flatten();
  const auto w = model.flatten();
  Eigen::Index pos = 0;
  model.for_each_block([&](const auto& m, bool is_weight) {
    if (is_weight) gi.segment(pos, m.size()) += model.l2 * w.segment(pos, m.size());
    pos += m.size();
  });
  out.gradient.unflatten(gi);
  return out;
}

// Eval-mode mean masked NLL over a set of branches (no regularizer).
inline double mean_nll(const BranchLstmModel& model, const std::vector<BranchExample>& data) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ex : data) {
    check_example(ex);
    const auto probs = forward(ex.inputs, model);
    for (std::size_t t = 0; t < ex.gold.size(); ++t) {
      if (!ex.mask[t]) continue;
      sum -= std::log(probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(index_of(ex.gold[t]))));
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

inline StanceLabel argmax_label(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;
  return label_at(static_cast<std::size_t>(best));
}

// Gold and predicted labels at every mask-1 position.
inline std::pair<std::vector<StanceLabel>, std::vector<StanceLabel>> masked_predictions(
    const BranchLstmModel& model, const std::vector<BranchExample>& data) {
  std::vector<StanceLabel> gold;
  std::vector<StanceLabel> pred;
  for (const auto& ex : data) {
    const auto probs = forward(ex.inputs, model);
    for (std::size_t t = 0; t < ex.gold.size(); ++t) {
      if (!ex.mask[t]) continue;
      gold.push_back(ex.gold[t]);
      pred.push_back(argmax_label(probs.row(static_cast<Eigen::Index>(t))));
    }
  }
  return {gold, pred};
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 5;  // epochs without dev improvement before stopping

  void validate() const {
    if (!(learning_rate >= 0.0) || batch_size == 0 || max_epochs == 0 || !(beta1 >= 0.0 && beta1 < 1.0) ||
        !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0) || patience == 0)
      throw Error(ErrorCode::InvalidConfig, "invalid LSTM training configuration");
  }
};

struct TrainResult {
  BranchLstmModel model;
  std::vector<double> train_loss;  // mean batch loss per epoch
  std::vector<double> dev_loss;
  std::size_t best_epoch = 0;
};

// Adam over seeded shuffled mini-batches. With dev data, keeps the weights of
// the epoch with the lowest dev loss and stops after `patience` epochs without improvement.
inline TrainResult train_report(const std::vector<BranchExample>& data, BranchLstmModel model, const TrainConfig& cfg,
                                const std::vector<BranchExample>& dev = {}) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw Error(ErrorCode::InvalidConfig, "no training branches");
  std::mt19937_64 rng(cfg.seed);
  Eigen::VectorXd theta = model.flatten();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  std::size_t step = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult out;
  Eigen::VectorXd best = theta;
  double best_dev = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const BranchExample*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&data[order[k]]);
        seeds.push_back(rng());
      }
      model.unflatten(theta);
      auto res = batch_loss_and_gradient(model, batch, true, seeds);
      if (!std::isfinite(res.loss)) throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
      const Eigen::VectorXd g = res.gradient.flatten();
      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
      epoch_loss += res.loss;
      ++batches;
    }
    out.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (!dev.empty()) {
      model.unflatten(theta);
      const double d = mean_nll(model, dev);
      if (!std::isfinite(d)) throw Error(ErrorCode::NonFiniteLoss, "dev loss at epoch " + std::to_string(epoch));
      out.dev_loss.push_back(d);
      if (d < best_dev) {
        best_dev = d;
        best = theta;
        out.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    } else {
      best = theta;
      out.best_epoch = epoch;
    }
  }
  model.unflatten(best);
  out.model = std::move(model);
  return out;
}

inline BranchLstmModel train(const std::vector<BranchExample>& data, BranchLstmModel init, const TrainConfig& cfg,
                             const std::vector<BranchExample>& dev = {}) {
  return train_report(data, std::move(init), cfg, dev).model;
}

// Branch examples for one thread; rows of `features` are indexed like the thread's tweets.
inline std::vector<BranchExample> thread_examples(const ConversationThread& thread, const Eigen::MatrixXd& features) {
  std::vector<BranchExample> out;
  for (const auto& br : extract_branches(thread)) {
    BranchExample ex;
    ex.inputs.resize(static_cast<Eigen::Index>(br.size()), features.cols());
    for (std::size_t t = 0; t < br.size(); ++t) {
      ex.inputs.row(static_cast<Eigen::Index>(t)) = features.row(static_cast<Eigen::Index>(br.nodes[t]));
      const auto& lab = thread.tweet(br.nodes[t]).label;
      if (!lab) throw Error(ErrorCode::UnlabelledNode, "tweet " + thread.tweet(br.nodes[t]).id + " has no label");
      ex.gold.push_back(*lab);
    }
    ex.mask = br.novelty;
    out.push_back(std::move(ex));
  }
  return out;
}

// Each tweet takes the prediction at its first (mask-1) occurrence.
inline std::vector<StanceLabel> predict(const BranchLstmModel& model, const ConversationThread& thread,
                                        const Eigen::MatrixXd& features) {
  std::vector<StanceLabel> out(thread.size(), StanceLabel::Comment);
  for (const auto& br : extract_branches(thread)) {
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(br.size()), features.cols());
    for (std::size_t t = 0; t < br.size(); ++t)
      inputs.row(static_cast<Eigen::Index>(t)) = features.row(static_cast<Eigen::Index>(br.nodes[t]));
    const auto probs = forward(inputs, model);
    for (std::size_t t = 0; t < br.size(); ++t)
      if (br.novelty[t]) out[br.nodes[t]] = argmax_label(probs.row(static_cast<Eigen::Index>(t)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter search (uniform random search)

struct HyperSearchSpace {
  std::size_t min_lstm_layers = 1, max_lstm_layers = 2;
  std::vector<std::size_t> lstm_units{50, 100, 200};
  std::size_t min_dense_layers = 1, max_dense_layers = 2;
  std::vector<std::size_t> dense_units{50, 100, 200};
  double min_dropout = 0.0, max_dropout = 0.5;
  double min_l2 = 1e-6, max_l2 = 1e-2;  // log-uniform
  std::vector<std::size_t> batch_sizes{16, 32, 64};
  double min_learning_rate = 1e-4, max_learning_rate = 1e-2;  // log-uniform
  std::size_t budget = 10;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 1;

  void validate() const {
    if (budget == 0 || lstm_units.empty() || dense_units.empty() || batch_sizes.empty() || min_lstm_layers == 0 ||
        min_lstm_layers > max_lstm_layers || min_dense_layers > max_dense_layers || min_dropout > max_dropout ||
        min_dropout < 0.0 || max_dropout >= 1.0 || !(min_l2 > 0.0) || min_l2 > max_l2 || !(min_learning_rate > 0.0) ||
        min_learning_rate > max_learning_rate)
      throw Error(ErrorCode::InvalidConfig, "invalid hyperparameter search space");
  }
};

struct TrialConfig {
  std::vector<std::size_t> lstm_units;
  std::vector<std::size_t> dense_units;
  double dropout = 0.0;
  double l2 = 0.0;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  bool operator==(const TrialConfig&) const = default;
};

inline nlohmann::json to_json(const TrialConfig& c) {
  return {{"lstm_units", c.lstm_units}, {"dense_units", c.dense_units}, {"dropout", c.dropout}, {"l2", c.l2},
          {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}

struct Trial {
  TrialConfig config;
  double dev_loss = 0.0;
  double dev_macro_f1 = 0.0;
};

struct SearchResult {
  TrialConfig best_config;
  BranchLstmModel best_model;
  std::vector<Trial> trials;
};

inline std::vector<TrialConfig> sample_trials(const HyperSearchSpace& space) {
  space.validate();
  std::mt19937_64 rng(space.seed);
  auto pick_int = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto pick = [&](const std::vector<std::size_t>& v) { return v[pick_int(0, v.size() - 1)]; };
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
  };
  std::vector<TrialConfig> out;
  for (std::size_t k = 0; k < space.budget; ++k) {
    TrialConfig c;
    const auto n_lstm = pick_int(space.min_lstm_layers, space.max_lstm_layers);
    for (std::size_t i = 0; i < n_lstm; ++i) c.lstm_units.push_back(pick(space.lstm_units));
    const auto n_dense = pick_int(space.min_dense_layers, space.max_dense_layers);
    for (std::size_t i = 0; i < n_dense; ++i) c.dense_units.push_back(pick(space.dense_units));
    c.dropout = space.min_dropout == space.max_dropout
                    ? space.min_dropout
                    : std::uniform_real_distribution<double>(space.min_dropout, space.max_dropout)(rng);
    c.l2 = log_uniform(space.min_l2, space.max_l2);
    c.batch_size = pick(space.batch_sizes);
    c.learning_rate = log_uniform(space.min_learning_rate, space.max_learning_rate);
    c.seed = rng();
    out.push_back(std::move(c));
  }
  return out;
}

// Trains one model per sampled configuration and keeps the best dev macro-F1 (first wins ties).
inline SearchResult hyper_search(const HyperSearchSpace& space, const std::vector<BranchExample>& train_data,
                                 const std::vector<BranchExample>& dev_data) {
  if (train_data.empty()) throw Error(ErrorCode::InvalidConfig, "no training branches");
  const auto input = train_data.front().inputs.cols();
  SearchResult out;
  double best_f1 = -1.0;
  for (const auto& cfg : sample_trials(space)) {
    auto init = BranchLstmModel::init(input, cfg.lstm_units, cfg.dense_units, cfg.dropout, cfg.l2, cfg.seed);
    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = space.max_epochs;
    tc.patience = space.patience;
    tc.seed = cfg.seed;
    auto model = train(train_data, std::move(init), tc, dev_data);
    Trial t{cfg, 0.0, 0.0};
    if (!dev_data.empty()) {
      t.dev_loss = mean_nll(model, dev_data);
      const auto [gold, pred] = masked_predictions(model, dev_data);
      t.dev_macro_f1 = metrics::macro_f1(gold, pred);
    }
    if (t.dev_macro_f1 > best_f1) {
      best_f1 = t.dev_macro_f1;
      out.best_config = cfg;
      out.best_model = std::move(model);
    }
    out.trials.push_back(std::move(t));
  }
  return out;
}

// One JSON object per line: {config, dev_loss, dev_macro_f1}.
inline std::string trial_log(const std::vector<Trial>& trials) {
  std::string out;
  for (const auto& t : trials) {
    nlohmann::json j{{"config", to_json(t.config)}, {"dev_loss", t.dev_loss}, {"dev_macro_f1", t.dev_macro_f1}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: shapes + flat weights + config

inline nlohmann::json to_json(const BranchLstmModel& m) {
  nlohmann::json j;
  auto rec = nlohmann::json::array();
  for (const auto& l : m.recurrent) rec.push_back({{"input", l.input_size()}, {"hidden", l.hidden_size()}});
  auto dense = nlohmann::json::array();
  for (const auto& l : m.dense) dense.push_back({{"input", l.w.cols()}, {"output", l.w.rows()}});
  j["recurrent"] = rec;
  j["dense"] = dense;
  j["output"] = {{"input", m.output.w.cols()}, {"output", 4}};
  j["dropout"] = m.dropout;
  j["l2"] = m.l2;
  j["weights"] = vector_to_std(m.flatten());
  return j;
}

inline BranchLstmModel model_from_json(const nlohmann::json& j) {
  try {
    BranchLstmModel m;
    for (const auto& l : j.at("recurrent")) {
      const auto in = l.at("input").get<Eigen::Index>();
      const auto h = l.at("hidden").get<Eigen::Index>();
      m.recurrent.push_back({Eigen::MatrixXd::Zero(4 * h, in), Eigen::MatrixXd::Zero(4 * h, h), Eigen::VectorXd::Zero(4 * h)});
    }
    for (const auto& l : j.at("dense")) {
      const auto in = l.at("input").get<Eigen::Index>();
      const auto out = l.at("output").get<Eigen::Index>();
      m.dense.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    m.output = {Eigen::MatrixXd::Zero(4, j.at("output").at("input").get<Eigen::Index>()), Eigen::VectorXd::Zero(4)};
    m.dropout = j.at("dropout").get<double>();
    m.l2 = j.at("l2").get<double>();
    m.validate();
    m.unflatten(vector_from_json(j.at("weights"), static_cast<Eigen::Index>(m.parameter_count())));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("LSTM model: ") + e.what());
  }
}

}  // namespace stance::lstm
