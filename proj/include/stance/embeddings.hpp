#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "stance/error.hpp"
#include "stance/text.hpp"

namespace stance {

// Read-only word vector table. Lookups are safe from concurrent readers; the
// hit/miss counters behind coverage() are atomic.
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(std::size_t dimension) : dimension_(dimension), stats_(std::make_unique<Stats>()) {
    if (dimension == 0) throw Error(ErrorCode::InvalidConfig, "embedding dimension must be positive");
  }

  // Text format: optional "<count> <dim>" header, then "word v1 ... vd" per line.
  static EmbeddingProvider load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingResource, "embedding file not found: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::unique_ptr<EmbeddingProvider> provider;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto toks = text::split_whitespace(line);
      if (toks.empty()) continue;
      if (line_no == 1 && toks.size() == 2 && is_integer(toks[0]) && is_integer(toks[1])) {
        provider = std::make_unique<EmbeddingProvider>(std::stoul(std::string(toks[1])));
        continue;
      }
      if (toks.size() < 2) throw Error(ErrorCode::MalformedInput, path.string() + ":" + std::to_string(line_no));
      if (!provider) provider = std::make_unique<EmbeddingProvider>(toks.size() - 1);
      if (toks.size() - 1 != provider->dimension_)
        throw Error(ErrorCode::MalformedInput,
                    path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(provider->dimension_) + " values");
      Eigen::VectorXd v(static_cast<Eigen::Index>(provider->dimension_));
      for (std::size_t k = 1; k < toks.size(); ++k) {
        double x = 0.0;
        auto [ptr, ec] = std::from_chars(toks[k].data(), toks[k].data() + toks[k].size(), x);
        if (ec != std::errc() || ptr != toks[k].data() + toks[k].size())
          throw Error(ErrorCode::MalformedInput, path.string() + ":" + std::to_string(line_no) + ": bad number");
        v[static_cast<Eigen::Index>(k - 1)] = x;
      }
      provider->add(std::string(toks[0]), std::move(v));
    }
    if (!provider) throw Error(ErrorCode::MalformedInput, "embedding file is empty: " + path.string());
    return std::move(*provider);
  }

  void add(std::string word, Eigen::VectorXd vec) {
    if (static_cast<std::size_t>(vec.size()) != dimension_)
      throw Error(ErrorCode::DimensionMismatch, "vector for '" + word + "' has wrong dimension");
    vectors_.insert_or_assign(std::move(word), std::move(vec));
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  // nullptr on a miss.
  const Eigen::VectorXd* lookup(const std::string& word) const {
    auto it = vectors_.find(word);
    if (it == vectors_.end()) {
      stats_->misses.fetch_add(1, std::memory_order_relaxed);
      return nullptr;
    }
    stats_->hits.fetch_add(1, std::memory_order_relaxed);
    return &it->second;
  }

  double coverage() const {
    const auto h = stats_->hits.load();
    const auto m = stats_->misses.load();
    return h + m == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(h + m);
  }

 private:
  struct Stats {
    std::atomic<std::size_t> hits{0};
    std::atomic<std::size_t> misses{0};
  };

  static bool is_integer(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  }

  std::size_t dimension_;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
  std::unique_ptr<Stats> stats_;
};

// Mean of the in-vocabulary token vectors; zero when no token is found.
inline Eigen::VectorXd embed_tweet(std::string_view raw, const EmbeddingProvider& provider) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(provider.dimension()));
  std::size_t found = 0;
  for (const auto& tok : text::lexicon_tokens(raw)) {
    if (const auto* v = provider.lookup(tok)) {
      sum += *v;
      ++found;
    }
  }
  if (found > 0) sum /= static_cast<double>(found);
  return sum;
}

// Cosine similarity, defined as 0 when either side is the zero vector.
inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace stance
