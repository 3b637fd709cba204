#pragma once

// Random conversation threads with controllable label-transition structure.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stance/embeddings.hpp"
#include "stance/label.hpp"
#include "stance/thread.hpp"

namespace stance::synth {

enum class LabelMode {
  Markov,          // child label follows a fixed successor of the parent label with probability `transition_strength`
  BalancedThreads  // every thread holds each label equally often (category weights are exactly 1)
};

struct Options {
  std::vector<std::string> events{"event_a", "event_b", "event_c", "event_d"};
  std::size_t threads_per_event = 30;
  std::size_t min_replies = 3;
  std::size_t max_replies = 12;
  LabelMode mode = LabelMode::Markov;
  double transition_strength = 0.8;
  double feature_signal = 0.35;  // chance a tweet carries a word indicative of its label
  std::size_t neutral_words = 4;
  std::size_t embedding_dim = 8;
  bool pos_tags = true;
  std::uint64_t seed = 7;
};

struct Corpus {
  Dataset dataset;
  EmbeddingProvider embeddings{1};
  std::vector<std::string> words;  // every word with a vector, in insertion order
};

// Support -> Deny -> Query -> Comment -> Support
inline StanceLabel successor(StanceLabel l) { return label_at((index_of(l) + 1) % kNumLabels); }

inline const std::array<std::vector<std::string>, kNumLabels>& indicative_words() {
  static const std::array<std::vector<std::string>, kNumLabels> words = {{
      {"true", "confirmed", "agree", "exactly", "indeed"},
      {"fake", "hoax", "false", "wrong", "damn"},
      {"really", "why", "source", "how", "who"},
      {"wow", "sad", "omg", "prayers", "crazy"},
  }};
  return words;
}

inline const std::vector<std::string>& neutral_words() {
  static const std::vector<std::string> words = {
      "the",    "police", "city",  "people", "news",  "today", "report", "video", "story", "street",
      "update", "road",   "photo", "online", "time",  "world", "media",  "week",  "event", "live",
      "scene",  "group",  "local", "screen", "night", "house", "crowd",  "train", "after", "there"};
  return words;
}

inline Corpus generate(const Options& opt) {
  if (opt.events.empty() || opt.threads_per_event == 0 || opt.min_replies > opt.max_replies || opt.embedding_dim == 0)
    throw Error(ErrorCode::InvalidConfig, "invalid synthetic corpus options");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  Corpus corpus;
  corpus.embeddings = EmbeddingProvider(opt.embedding_dim);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto add_word = [&](const std::string& w) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(opt.embedding_dim));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = gauss(rng);
    corpus.embeddings.add(w, v);
    corpus.words.push_back(w);
  };
  for (const auto& ws : indicative_words())
    for (const auto& w : ws) add_word(w);
  for (const auto& w : neutral_words()) add_word(w);

  std::int64_t next_id = 1000;
  std::vector<ConversationThread> threads;
  for (const auto& event : opt.events) {
    for (std::size_t th = 0; th < opt.threads_per_event; ++th) {
      std::size_t replies = opt.min_replies + pick(opt.max_replies - opt.min_replies + 1);
      if (opt.mode == LabelMode::BalancedThreads) replies = ((replies + 1 + 3) / 4) * 4 - 1;
      const std::size_t n = replies + 1;

      std::vector<std::size_t> parent(n, kNoParent);
      for (std::size_t i = 1; i < n; ++i) parent[i] = pick(i);
      std::vector<StanceLabel> labels(n);
      if (opt.mode == LabelMode::Markov) {
        labels[0] = label_at(pick(kNumLabels));
        for (std::size_t i = 1; i < n; ++i) {
          const auto p = labels[parent[i]];
          labels[i] = unif(rng) < opt.transition_strength ? successor(p) : label_at(pick(kNumLabels));
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) labels[i] = label_at(i % kNumLabels);
        std::shuffle(labels.begin(), labels.end(), rng);
      }

      const std::int64_t t0 = 1420070400 + static_cast<std::int64_t>(pick(30000000));
      std::vector<std::int64_t> times(n, t0);
      std::exponential_distribution<double> gap(1.0 / 300.0);
      for (std::size_t i = 1; i < n; ++i) times[i] = times[parent[i]] + 1 + static_cast<std::int64_t>(gap(rng));
      const std::size_t users = 2 + pick(n);

      std::vector<Tweet> tweets;
      for (std::size_t i = 0; i < n; ++i) {
        Tweet tw;
        tw.id = std::to_string(next_id++);
        if (parent[i] != kNoParent) tw.parent_id = tweets[parent[i]].id;
        tw.author_id = "u" + std::to_string(i == 0 ? 0 : pick(users));
        std::vector<std::string> toks;
        for (std::size_t k = 0; k < opt.neutral_words; ++k) toks.push_back(neutral_words()[pick(neutral_words().size())]);
        const auto& ind = indicative_words()[index_of(labels[i])];
        if (unif(rng) < opt.feature_signal) toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(pick(toks.size() + 1)), ind[pick(ind.size())]);
        std::string text;
        for (const auto& t : toks) text += (text.empty() ? "" : " ") + t;
        if (labels[i] == StanceLabel::Query && unif(rng) < opt.feature_signal) text += "?";
        tw.text = text;
        tw.timestamp = times[i];
        tw.favourites = static_cast<std::int64_t>(pick(i == 0 ? 200 : 10));
        tw.retweets = static_cast<std::int64_t>(pick(i == 0 ? 300 : 5));
        if (opt.pos_tags) {
          std::vector<std::string> tags;
          for (const auto& t : toks) tags.push_back(t.size() > 4 ? "N" : "V");
          tw.pos_tags = tags;
        }
        tw.label = labels[i];
        tweets.push_back(std::move(tw));
      }
      char tid[32];
      std::snprintf(tid, sizeof tid, "t%05zu", threads.size());
      threads.push_back(ConversationThread::build(event, tid, std::move(tweets)));
    }
  }
  corpus.dataset = Dataset::from_threads(std::move(threads));
  return corpus;
}

// Word vectors in the plain-text "word v1 ... vd" format with a "count dim" header.
inline std::string embeddings_text(const Corpus& corpus) {
  std::string out = std::to_string(corpus.words.size()) + " " + std::to_string(corpus.embeddings.dimension()) + "\n";
  char buf[32];
  for (const auto& w : corpus.words) {
    out += w;
    const auto* v = corpus.embeddings.lookup(w);
    for (Eigen::Index k = 0; k < v->size(); ++k) {
      std::snprintf(buf, sizeof buf, " %.17g", (*v)[k]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace stance::synth
