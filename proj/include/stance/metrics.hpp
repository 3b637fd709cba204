#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stance/error.hpp"
#include "stance/label.hpp"

namespace stance::metrics {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " gold labels vs " + std::to_string(b) + " predictions");
}
}  // namespace detail

// Raw counts, entry (gold, predicted).
inline Eigen::Matrix4d confusion_counts(std::span<const StanceLabel> gold, std::span<const StanceLabel> pred) {
  detail::check_lengths(gold.size(), pred.size());
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (std::size_t i = 0; i < gold.size(); ++i)
    m(static_cast<Eigen::Index>(index_of(gold[i])), static_cast<Eigen::Index>(index_of(pred[i]))) += 1.0;
  return m;
}

// Rows sum to 1, or to 0 for a category absent from gold.
inline Eigen::Matrix4d confusion(std::span<const StanceLabel> gold, std::span<const StanceLabel> pred) {
  Eigen::Matrix4d m = confusion_counts(gold, pred);
  for (Eigen::Index r = 0; r < 4; ++r) {
    const double s = m.row(r).sum();
    if (s > 0.0) m.row(r) /= s;
  }
  return m;
}

inline std::array<ClassScores, kNumLabels> per_class(std::span<const StanceLabel> gold, std::span<const StanceLabel> pred) {
  const Eigen::Matrix4d m = confusion_counts(gold, pred);
  std::array<ClassScores, kNumLabels> out{};
  for (Eigen::Index k = 0; k < 4; ++k) {
    const double tp = m(k, k);
    const double gold_k = m.row(k).sum();
    const double pred_k = m.col(k).sum();
    auto& s = out[static_cast<std::size_t>(k)];
    s.support = static_cast<std::size_t>(gold_k);
    s.precision = pred_k > 0.0 ? tp / pred_k : 0.0;
    s.recall = gold_k > 0.0 ? tp / gold_k : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  return out;
}

// Mean F1 over all four categories, absent ones included as 0.
inline double macro_f1(std::span<const StanceLabel> gold, std::span<const StanceLabel> pred) {
  const auto scores = per_class(gold, pred);
  double s = 0.0;
  for (const auto& c : scores) s += c.f1;
  return s / static_cast<double>(kNumLabels);
}

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw Error(ErrorCode::InvalidConfig, "gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    // Series for P(a, x).
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return 1.0 - sum * std::exp(log_prefix);
  }
  // Modified Lentz continued fraction for Q(a, x).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_prefix) * h;
}

inline double chi_square_sf(double x, double dof) { return x <= 0.0 ? 1.0 : gamma_q(0.5 * dof, 0.5 * x); }

struct McNemarResult {
  std::size_t b = 0;  // A right, B wrong
  std::size_t c = 0;  // A wrong, B right
  double statistic = 0.0;
  double p_value = 1.0;
};

// Continuity-corrected, with |b - c| - 1 clamped at 0.
inline McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c) {
  McNemarResult r{b, c, 0.0, 1.0};
  if (b + c == 0) return r;
  const double diff = std::max(std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0, 0.0);
  r.statistic = diff * diff / static_cast<double>(b + c);
  r.p_value = chi_square_sf(r.statistic, 1.0);
  return r;
}

inline McNemarResult mcnemar(std::span<const StanceLabel> gold, std::span<const StanceLabel> a,
                             std::span<const StanceLabel> b) {
  detail::check_lengths(gold.size(), a.size());
  detail::check_lengths(gold.size(), b.size());
  std::size_t nb = 0;
  std::size_t nc = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool ra = a[i] == gold[i];
    const bool rb = b[i] == gold[i];
    if (ra && !rb) ++nb;
    if (!ra && rb) ++nc;
  }
  return mcnemar_from_counts(nb, nc);
}

inline double accuracy(std::span<const StanceLabel> gold, std::span<const StanceLabel> pred) {
  detail::check_lengths(gold.size(), pred.size());
  if (gold.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += gold[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

}  // namespace stance::metrics
