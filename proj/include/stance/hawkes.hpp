#pragma once

// Multivariate Hawkes process over stance labels with an exponential kernel and
// a per-label multinomial text model.
//
//   lambda_{y,m}(t) = mu_y + sum_{l: m_l = m, t_l < t} alpha[y_l, y] * omega * exp(-omega (t - t_l))
//
// Log-likelihood = text term + sum_n log lambda_{y_n,m_n}(t_n) - compensator, where
// the compensator integrates the total intensity of each thread over [0, T_m].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/features.hpp"
#include "stance/label.hpp"
#include "stance/lbfgs.hpp"
#include "stance/thread.hpp"

namespace stance::hawkes {

inline constexpr double kDefaultDecay = 0.1;  // per second
// Positive floor used wherever a rate must be strictly positive (log space, approx fit).
inline constexpr double kRateFloor = 1e-9;

using SparseCounts = std::vector<std::pair<std::size_t, double>>;

struct Event {
  double time = 0.0;
  StanceLabel label = StanceLabel::Comment;
  SparseCounts words;
};

struct ThreadEvents {
  std::vector<Event> events;  // non-decreasing times
  double horizon = 0.0;       // T_m
};

struct EventHistory {
  std::vector<ThreadEvents> threads;
  std::size_t vocab_size = 0;

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& t : threads) n += t.events.size();
    return n;
  }

  double total_horizon() const {
    double s = 0.0;
    for (const auto& t : threads) s += t.horizon;
    return s;
  }
};

struct HawkesParams {
  Eigen::Vector4d mu = Eigen::Vector4d::Zero();
  Eigen::Matrix4d alpha = Eigen::Matrix4d::Zero();  // row: exciting label, column: excited label
  double omega = kDefaultDecay;
  Eigen::MatrixXd beta;  // 4 x V, row-stochastic

  void validate() const {
    if ((mu.array() < 0.0).any() || !mu.allFinite()) throw Error(ErrorCode::InvalidConfig, "mu must be non-negative");
    if ((alpha.array() < 0.0).any() || !alpha.allFinite())
      throw Error(ErrorCode::InvalidConfig, "alpha must be non-negative");
    if (!(omega > 0.0)) throw Error(ErrorCode::InvalidConfig, "omega must be positive");
    if (beta.size() > 0) {
      if (beta.rows() != 4) throw Error(ErrorCode::InvalidConfig, "beta must have 4 rows");
      for (Eigen::Index r = 0; r < 4; ++r)
        if (std::abs(beta.row(r).sum() - 1.0) > 1e-9 || (beta.row(r).array() < 0.0).any())
          throw Error(ErrorCode::InvalidConfig, "beta rows must be probability vectors");
    }
  }
};

inline double kernel(double dt, double omega) {
  if (dt < 0.0) throw Error(ErrorCode::NegativeDelta, "kernel evaluated at negative delay");
  return omega * std::exp(-omega * dt);
}

inline double intensity(StanceLabel y, std::size_t m, double t, const EventHistory& history,
                        const HawkesParams& params) {
  double lambda = params.mu[static_cast<Eigen::Index>(index_of(y))];
  if (m >= history.threads.size()) return lambda;
  for (const auto& e : history.threads[m].events) {
    if (!(e.time < t)) continue;
    lambda += params.alpha(static_cast<Eigen::Index>(index_of(e.label)), static_cast<Eigen::Index>(index_of(y))) *
              kernel(t - e.time, params.omega);
  }
  return lambda;
}

// log p(W | y) under the multinomial text model (label-independent coefficient dropped).
inline double text_log_prob(const SparseCounts& words, std::size_t label, const HawkesParams& params) {
  if (params.beta.size() == 0) return 0.0;
  double s = 0.0;
  for (auto [w, c] : words) s += c * std::log(params.beta(static_cast<Eigen::Index>(label), static_cast<Eigen::Index>(w)));
  return s;
}

namespace detail {

// Decayed excitation sums per exciting label, S[y'] = sum_{t_l < t} omega exp(-omega (t - t_l)),
// evaluated at each event time of a thread in order.
inline std::vector<Eigen::Vector4d> excitation_at_events(const ThreadEvents& thread, double omega) {
  std::vector<Eigen::Vector4d> out;
  out.reserve(thread.events.size());
  Eigen::Vector4d state = Eigen::Vector4d::Zero();
  double t_state = 0.0;
  std::size_t added = 0;
  const auto& ev = thread.events;
  for (std::size_t n = 0; n < ev.size(); ++n) {
    while (added < n && ev[added].time < ev[n].time) {
      state *= std::exp(-omega * (ev[added].time - t_state));
      t_state = ev[added].time;
      state[static_cast<Eigen::Index>(index_of(ev[added].label))] += omega;
      ++added;
    }
    state *= std::exp(-omega * (ev[n].time - t_state));
    t_state = ev[n].time;
    out.push_back(state);
  }
  return out;
}

}  // namespace detail

// Analytic integral of the total intensity of one thread over [0, T].
inline double compensator(const ThreadEvents& thread, const HawkesParams& params) {
  double c = params.mu.sum() * thread.horizon;
  for (const auto& e : thread.events) {
    const double survive = 1.0 - std::exp(-params.omega * (thread.horizon - e.time));
    c += params.alpha.row(static_cast<Eigen::Index>(index_of(e.label))).sum() * survive;
  }
  return c;
}

struct LikelihoodTerms {
  double value = 0.0;
  double text = 0.0;
  double intensity = 0.0;
  double compensator = 0.0;
  Eigen::Vector4d d_mu = Eigen::Vector4d::Zero();
  Eigen::Matrix4d d_alpha = Eigen::Matrix4d::Zero();
};

// Log-likelihood with its gradient in (mu, alpha); beta and omega are held fixed.
inline LikelihoodTerms log_likelihood_terms(const EventHistory& history, const HawkesParams& params) {
  LikelihoodTerms out;
  const double w = params.omega;
  for (const auto& thread : history.threads) {
    const auto excitation = detail::excitation_at_events(thread, w);
    for (std::size_t n = 0; n < thread.events.size(); ++n) {
      const auto& e = thread.events[n];
      const auto y = static_cast<Eigen::Index>(index_of(e.label));
      const double lambda = params.mu[y] + params.alpha.col(y).dot(excitation[n]);
      if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw Error(ErrorCode::NonFiniteLikelihood, "zero intensity at an observed event");
      out.intensity += std::log(lambda);
      out.text += text_log_prob(e.words, index_of(e.label), params);
      out.d_mu[y] += 1.0 / lambda;
      out.d_alpha.col(y) += excitation[n] / lambda;
    }
    out.compensator += compensator(thread, params);
    out.d_mu.array() -= thread.horizon;
    for (const auto& e : thread.events) {
      const double survive = 1.0 - std::exp(-w * (thread.horizon - e.time));
      out.d_alpha.row(static_cast<Eigen::Index>(index_of(e.label))).array() -= survive;
    }
  }
  out.value = out.text + out.intensity - out.compensator;
  if (!std::isfinite(out.value)) throw Error(ErrorCode::NonFiniteLikelihood, "log-likelihood is not finite");
  return out;
}

inline double log_likelihood(const EventHistory& history, const HawkesParams& params) {
  return log_likelihood_terms(history, params).value;
}

// Add-one smoothed per-label word distributions.
inline Eigen::MatrixXd fit_beta(const EventHistory& history) {
  const auto V = static_cast<Eigen::Index>(history.vocab_size);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(4, V);
  for (const auto& thread : history.threads)
    for (const auto& e : thread.events)
      for (auto [word, c] : e.words) counts(static_cast<Eigen::Index>(index_of(e.label)), static_cast<Eigen::Index>(word)) += c;
  Eigen::MatrixXd beta(4, V);
  for (Eigen::Index y = 0; y < 4; ++y) beta.row(y) = (counts.row(y).array() + 1.0) / (counts.row(y).sum() + static_cast<double>(V));
  return beta;
}

// Closed-form moment-matching estimate: base rates from thread-initial events,
// excitation from label transitions to the latest prior event of the same thread.
inline HawkesParams fit_approx(const EventHistory& history) {
  if (history.event_count() == 0) throw Error(ErrorCode::EmptyHistory, "no events to fit");
  Eigen::Vector4d base = Eigen::Vector4d::Zero();
  Eigen::Vector4d label_counts = Eigen::Vector4d::Zero();
  Eigen::Matrix4d transitions = Eigen::Matrix4d::Zero();
  for (const auto& thread : history.threads) {
    for (std::size_t n = 0; n < thread.events.size(); ++n) {
      const auto y = static_cast<Eigen::Index>(index_of(thread.events[n].label));
      label_counts[y] += 1.0;
      if (n == 0) base[y] += 1.0;
      else transitions(static_cast<Eigen::Index>(index_of(thread.events[n - 1].label)), y) += 1.0;
    }
  }
  HawkesParams p;
  p.omega = kDefaultDecay;
  const double horizon = std::max(history.total_horizon(), 1.0);
  p.mu = (base / horizon).cwiseMax(kRateFloor);
  for (Eigen::Index r = 0; r < 4; ++r)
    if (label_counts[r] > 0.0) p.alpha.row(r) = transitions.row(r) / label_counts[r];
  p.beta = fit_beta(history);
  return p;
}

struct GradFitReport {
  HawkesParams params;
  double initial_log_likelihood = 0.0;
  double final_log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Maximizes the exact log-likelihood over (mu, alpha) in log space with L-BFGS.
// Never returns parameters worse than `init`.
inline GradFitReport fit_grad_report(const EventHistory& history, const HawkesParams& init, std::size_t max_iter = 300,
                                     double tol = 1e-6) {
  init.validate();
  GradFitReport report;
  report.initial_log_likelihood = log_likelihood(history, init);

  HawkesParams work = init;
  Eigen::VectorXd x0(20);
  for (Eigen::Index y = 0; y < 4; ++y) x0[y] = std::log(std::max(init.mu[y], kRateFloor));
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) x0[4 + r * 4 + c] = std::log(std::max(init.alpha(r, c), kRateFloor));

  auto unpack = [&work](const Eigen::VectorXd& x) {
    for (Eigen::Index y = 0; y < 4; ++y) work.mu[y] = std::exp(x[y]);
    for (Eigen::Index r = 0; r < 4; ++r)
      for (Eigen::Index c = 0; c < 4; ++c) work.alpha(r, c) = std::exp(x[4 + r * 4 + c]);
  };

  optim::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    unpack(x);
    if (!work.mu.allFinite() || !work.alpha.allFinite()) return std::numeric_limits<double>::infinity();
    LikelihoodTerms t;
    try {
      t = log_likelihood_terms(history, work);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index y = 0; y < 4; ++y) g[y] = -t.d_mu[y] * work.mu[y];
    for (Eigen::Index r = 0; r < 4; ++r)
      for (Eigen::Index c = 0; c < 4; ++c) g[4 + r * 4 + c] = -t.d_alpha(r, c) * work.alpha(r, c);
    return -t.value;
  };

  optim::LbfgsOptions opt;
  opt.max_iter = max_iter;
  opt.grad_tol = tol;
  optim::LbfgsResult res;
  try {
    res = optim::minimize(objective, x0, opt);
  } catch (const Error& e) {
    throw Error(ErrorCode::OptimizationDiverged, e.what());
  }
  if (!std::isfinite(res.value)) throw Error(ErrorCode::OptimizationDiverged, "non-finite Hawkes objective");
  unpack(res.x);
  report.iterations = res.iterations;
  report.converged = res.converged;
  const double fitted = -res.value;
  if (fitted >= report.initial_log_likelihood) {
    report.params = work;
    report.final_log_likelihood = fitted;
  } else {
    report.params = init;
    report.final_log_likelihood = report.initial_log_likelihood;
  }
  return report;
}

inline HawkesParams fit_grad(const EventHistory& history, const HawkesParams& init, std::size_t max_iter = 300,
                             double tol = 1e-6) {
  return fit_grad_report(history, init, max_iter, tol).params;
}

// Per-label score of the next event given already-assigned history; exposed for
// brute-force checks of the greedy decoder.
inline Eigen::Vector4d greedy_scores(const HawkesParams& params, const ThreadEvents& thread, std::size_t n,
                                     const std::vector<StanceLabel>& assigned) {
  const auto& e = thread.events[n];
  Eigen::Vector4d excitation = Eigen::Vector4d::Zero();
  for (std::size_t l = 0; l < n; ++l) {
    if (!(thread.events[l].time < e.time)) continue;
    excitation[static_cast<Eigen::Index>(index_of(assigned[l]))] += kernel(e.time - thread.events[l].time, params.omega);
  }
  const double survive = 1.0 - std::exp(-params.omega * std::max(thread.horizon - e.time, 0.0));
  Eigen::Vector4d scores;
  for (Eigen::Index y = 0; y < 4; ++y) {
    const double lambda = params.mu[y] + params.alpha.col(y).dot(excitation);
    scores[y] = text_log_prob(e.words, static_cast<std::size_t>(y), params) +
                (lambda > 0.0 ? std::log(lambda) : -std::numeric_limits<double>::infinity()) -
                params.alpha.row(y).sum() * survive;
  }
  return scores;
}

// Chooses the best label for each event in time order, feeding earlier choices
// back as history. Labels stored in `thread` are ignored.
inline std::vector<StanceLabel> predict_greedy(const HawkesParams& params, const ThreadEvents& thread) {
  std::vector<StanceLabel> assigned;
  assigned.reserve(thread.events.size());
  for (std::size_t n = 0; n < thread.events.size(); ++n) {
    const auto scores = greedy_scores(params, thread, n, assigned);
    Eigen::Index best = 0;
    for (Eigen::Index y = 1; y < 4; ++y)
      if (scores[y] > scores[best]) best = y;
    assigned.push_back(label_at(static_cast<std::size_t>(best)));
  }
  return assigned;
}

// Ogata thinning. Each accepted event's label is drawn proportionally to the
// per-label intensities; its text is `words_per_event` draws from that label's beta row.
inline EventHistory simulate(const HawkesParams& params, std::size_t n_threads, double horizon, std::uint64_t seed,
                             std::size_t words_per_event = 5) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EventHistory history;
  history.vocab_size = static_cast<std::size_t>(params.beta.cols());
  std::vector<std::discrete_distribution<std::size_t>> word_dists;
  for (Eigen::Index y = 0; params.beta.size() > 0 && y < 4; ++y) {
    std::vector<double> row(static_cast<std::size_t>(params.beta.cols()));
    for (Eigen::Index w = 0; w < params.beta.cols(); ++w) row[static_cast<std::size_t>(w)] = params.beta(y, w);
    word_dists.emplace_back(row.begin(), row.end());
  }

  for (std::size_t m = 0; m < n_threads; ++m) {
    ThreadEvents thread;
    thread.horizon = horizon;
    Eigen::Vector4d state = Eigen::Vector4d::Zero();  // decayed excitation by exciting label at time t
    double t = 0.0;
    while (true) {
      const Eigen::Vector4d rates = params.mu + params.alpha.transpose() * state;
      const double bound = rates.sum();
      if (!(bound > 0.0)) break;
      const double dt = -std::log(1.0 - unif(rng)) / bound;
      t += dt;
      if (t > horizon) break;
      state *= std::exp(-params.omega * dt);
      const Eigen::Vector4d now = params.mu + params.alpha.transpose() * state;
      const double total = now.sum();
      if (unif(rng) * bound > total) continue;
      double pick = unif(rng) * total;
      std::size_t y = 0;
      while (y < 3 && pick >= now[static_cast<Eigen::Index>(y)]) pick -= now[static_cast<Eigen::Index>(y++)];
      Event e;
      e.time = t;
      e.label = label_at(y);
      if (!word_dists.empty() && words_per_event > 0) {
        std::vector<double> counts(history.vocab_size, 0.0);
        for (std::size_t k = 0; k < words_per_event; ++k) counts[word_dists[y](rng)] += 1.0;
        for (std::size_t w = 0; w < counts.size(); ++w)
          if (counts[w] > 0.0) e.words.emplace_back(w, counts[w]);
      }
      thread.events.push_back(std::move(e));
      state[static_cast<Eigen::Index>(y)] += params.omega;
    }
    history.threads.push_back(std::move(thread));
  }
  return history;
}

// ---------------------------------------------------------------------------
// Conversion from conversation threads

struct ThreadEventMap {
  ThreadEvents events;
  std::vector<std::size_t> tweet_index;  // event n -> tweet index in the thread
};

// Chronological events with times in seconds relative to the earliest tweet;
// the horizon is the last event time. Unlabelled tweets get Comment as a placeholder.
inline ThreadEventMap thread_events(const ConversationThread& thread, const Vocabulary& vocab) {
  ThreadEventMap out;
  out.tweet_index = chronological_indices(thread);
  const std::int64_t t0 = thread.tweet(out.tweet_index.front()).timestamp;
  for (auto i : out.tweet_index) {
    const auto& tw = thread.tweet(i);
    Event e;
    e.time = static_cast<double>(tw.timestamp - t0);
    e.label = tw.label.value_or(StanceLabel::Comment);
    e.words = hawkes_text_features(tw, vocab).counts;
    out.events.events.push_back(std::move(e));
  }
  out.events.horizon = out.events.events.back().time;
  return out;
}

template <typename ThreadRange>
EventHistory history_from_threads(const ThreadRange& threads, const Vocabulary& vocab) {
  EventHistory h;
  h.vocab_size = vocab.size();
  for (const ConversationThread& t : threads) h.threads.push_back(thread_events(t, vocab).events);
  return h;
}

// ---------------------------------------------------------------------------
// Serialization: {mu, alpha, omega, vocabulary, beta}

inline nlohmann::json to_json(const HawkesParams& p, const Vocabulary& vocab) {
  nlohmann::json j;
  j["mu"] = std::vector<double>(p.mu.data(), p.mu.data() + 4);
  auto alpha = nlohmann::json::array();
  for (Eigen::Index r = 0; r < 4; ++r) {
    std::vector<double> row(4);
    for (Eigen::Index c = 0; c < 4; ++c) row[static_cast<std::size_t>(c)] = p.alpha(r, c);
    alpha.push_back(row);
  }
  j["alpha"] = alpha;
  j["omega"] = p.omega;
  j["vocabulary"] = vocab.words();
  auto beta = nlohmann::json::array();
  for (Eigen::Index r = 0; r < p.beta.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(p.beta.cols()));
    for (Eigen::Index c = 0; c < p.beta.cols(); ++c) row[static_cast<std::size_t>(c)] = p.beta(r, c);
    beta.push_back(row);
  }
  j["beta"] = beta;
  return j;
}

inline std::pair<HawkesParams, Vocabulary> params_from_json(const nlohmann::json& j) {
  try {
    HawkesParams p;
    auto mu = j.at("mu").get<std::vector<double>>();
    if (mu.size() != 4) throw Error(ErrorCode::MalformedInput, "mu must have 4 entries");
    for (Eigen::Index y = 0; y < 4; ++y) p.mu[y] = mu[static_cast<std::size_t>(y)];
    auto alpha = j.at("alpha").get<std::vector<std::vector<double>>>();
    if (alpha.size() != 4) throw Error(ErrorCode::MalformedInput, "alpha must be 4x4");
    for (Eigen::Index r = 0; r < 4; ++r) {
      if (alpha[static_cast<std::size_t>(r)].size() != 4) throw Error(ErrorCode::MalformedInput, "alpha must be 4x4");
      for (Eigen::Index c = 0; c < 4; ++c) p.alpha(r, c) = alpha[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    p.omega = j.at("omega").get<double>();
    Vocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>());
    auto beta = j.at("beta").get<std::vector<std::vector<double>>>();
    p.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(beta.size()), static_cast<Eigen::Index>(vocab.size()));
    for (std::size_t r = 0; r < beta.size(); ++r) {
      if (beta[r].size() != vocab.size()) throw Error(ErrorCode::MalformedInput, "beta width must match vocabulary");
      for (std::size_t c = 0; c < beta[r].size(); ++c) p.beta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = beta[r][c];
    }
    p.validate();
    return {std::move(p), std::move(vocab)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("Hawkes parameters: ") + e.what());
  }
}

}  // namespace stance::hawkes
