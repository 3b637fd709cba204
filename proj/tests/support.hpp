#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stance/stance.hpp"

namespace testing_support {

using namespace stance;

inline Tweet make_tweet(std::string id, std::optional<std::string> parent, std::string author, std::string text,
                        std::int64_t ts, std::optional<StanceLabel> label = std::nullopt) {
  Tweet t;
  t.id = std::move(id);
  t.parent_id = std::move(parent);
  t.author_id = std::move(author);
  t.text = std::move(text);
  t.timestamp = ts;
  t.label = label;
  return t;
}

// Root with three replies; the third starts a two-deep chain.
inline ConversationThread fig1_thread() {
  std::vector<Tweet> tw;
  tw.push_back(make_tweet("1", std::nullopt, "u1", "Breaking: something happened downtown", 100, StanceLabel::Support));
  tw.push_back(make_tweet("2", "1", "u2", "Source please?", 130, StanceLabel::Query));
  tw.push_back(make_tweet("3", "1", "u3", "That is fake, not true", 150, StanceLabel::Deny));
  tw.push_back(make_tweet("4", "1", "u4", "Where did you see this?", 160, StanceLabel::Query));
  tw.push_back(make_tweet("5", "4", "u1", "Local news reported it", 200, StanceLabel::Comment));
  tw.push_back(make_tweet("6", "5", "u4", "ok, thanks.", 260, StanceLabel::Comment));
  return ConversationThread::build("fig", "t1", std::move(tw));
}

// parents[0] = kNoParent; parents[i] < i.
inline std::vector<std::size_t> random_parents(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n, kNoParent);
  for (std::size_t i = 1; i < n; ++i) p[i] = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
  return p;
}

// Same tree as `parents`, node order shuffled so parents need not precede children.
inline std::vector<std::size_t> shuffled_tree(const std::vector<std::size_t>& parents, std::mt19937_64& rng) {
  const std::size_t n = parents.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> out(n, kNoParent);
  for (std::size_t i = 0; i < n; ++i)
    if (parents[i] != kNoParent) out[perm[i]] = perm[parents[i]];
  return out;
}

inline ConversationThread thread_from_parents(const std::vector<std::size_t>& parents, std::mt19937_64& rng,
                                              const std::string& event = "ev", const std::string& id = "th") {
  std::vector<Tweet> tw;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    auto t = make_tweet("n" + std::to_string(i),
                        parents[i] == kNoParent ? std::nullopt : std::optional<std::string>("n" + std::to_string(parents[i])),
                        "u" + std::to_string(rng() % 5), "word " + std::to_string(i), 1000 + static_cast<std::int64_t>(rng() % 500),
                        label_at(rng() % 4));
    tw.push_back(std::move(t));
  }
  return ConversationThread::build(event, id, std::move(tw));
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

// Exhaustive CRF oracle over all 4^n labelings of a tree given by parents.
struct BruteForce {
  double log_z = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd marginals;
  std::vector<Eigen::Matrix4d> edge_marginals;  // by child
  std::vector<std::size_t> best;                // first-found maximum in lexicographic order
};

inline BruteForce brute_force(const Eigen::MatrixXd& pot, const std::vector<std::size_t>& parents,
                              const Eigen::Matrix4d& T) {
  const std::size_t n = parents.size();
  BruteForce out;
  std::vector<std::size_t> y(n, 0);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 4;
  std::vector<double> scores(total);
  double best = -std::numeric_limits<double>::infinity();
  // Lexicographic: node 0 is the most significant digit.
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = n; i-- > 0;) {
      y[i] = c % 4;
      c /= 4;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += pot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i]));
      if (parents[i] != kNoParent) s += T(static_cast<Eigen::Index>(y[parents[i]]), static_cast<Eigen::Index>(y[i]));
    }
    scores[code] = s;
    if (s > best) {
      best = s;
      out.best = y;
    }
  }
  double m = best;
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  out.log_z = m + std::log(z);
  out.marginals = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 4);
  out.edge_marginals.assign(n, Eigen::Matrix4d::Zero());
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = n; i-- > 0;) {
      y[i] = c % 4;
      c /= 4;
    }
    const double p = std::exp(scores[code] - out.log_z);
    for (std::size_t i = 0; i < n; ++i) {
      out.marginals(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i])) += p;
      if (parents[i] != kNoParent)
        out.edge_marginals[i](static_cast<Eigen::Index>(y[parents[i]]), static_cast<Eigen::Index>(y[i])) += p;
    }
  }
  return out;
}

// Central-difference gradient of f at x.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f(x);
    x[k] = orig - h;
    const double down = f(x);
    x[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_k |a_k - b_k| / max(|a_k|, |b_k|, floor)
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double scale = std::max({std::abs(a[k]), std::abs(b[k]), floor});
    worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
  }
  return worst;
}

inline hawkes::HawkesParams random_params(std::mt19937_64& rng, std::size_t vocab) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  hawkes::HawkesParams p;
  for (Eigen::Index y = 0; y < 4; ++y) p.mu[y] = u(rng) * 0.2;
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) p.alpha(r, c) = u(rng) * 0.5;
  p.beta = Eigen::MatrixXd(4, static_cast<Eigen::Index>(vocab));
  for (Eigen::Index r = 0; r < 4; ++r) {
    for (Eigen::Index w = 0; w < p.beta.cols(); ++w) p.beta(r, w) = u(rng);
    p.beta.row(r) /= p.beta.row(r).sum();
  }
  return p;
}

inline hawkes::EventHistory random_history(std::mt19937_64& rng, std::size_t threads, std::size_t vocab) {
  hawkes::EventHistory h;
  h.vocab_size = vocab;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t m = 0; m < threads; ++m) {
    hawkes::ThreadEvents t;
    double time = 0.0;
    const std::size_t n = 1 + rng() % 6;
    for (std::size_t k = 0; k < n; ++k) {
      hawkes::Event e;
      e.time = time;
      e.label = label_at(rng() % 4);
      e.words.emplace_back(rng() % vocab, 1.0 + static_cast<double>(rng() % 3));
      t.events.push_back(e);
      time += 20.0 * u(rng);
    }
    t.horizon = t.events.back().time + 30.0 * u(rng);
    h.threads.push_back(t);
  }
  return h;
}

// Composite Simpson over each inter-event segment of sum_y lambda_y(t).
inline double quadrature_compensator(const hawkes::EventHistory& h, std::size_t m, const hawkes::HawkesParams& p) {
  const auto& th = h.threads[m];
  std::vector<double> cuts{0.0};
  for (const auto& e : th.events) cuts.push_back(e.time);
  cuts.push_back(th.horizon);
  std::sort(cuts.begin(), cuts.end());
  auto total = [&](double t) {
    double s = 0.0;
    for (auto y : kAllLabels) s += hawkes::intensity(y, m, t, h, p);
    return s;
  };
  double acc = 0.0;
  const int steps = 2000;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k];
    const double b = cuts[k + 1];
    if (b <= a) continue;
    const double hstep = (b - a) / steps;
    // Evaluate just inside the segment: events at `a` count, events at `b` do not.
    auto f = [&](double t) { return total(std::clamp(t, a + 1e-12 * (b - a), b - 1e-12 * (b - a))); };
    double s = f(a) + f(b);
    for (int i = 1; i < steps; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * hstep);
    acc += s * hstep / 3.0;
  }
  return acc;
}

}  // namespace testing_support
