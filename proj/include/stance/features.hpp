#pragma once

// Local, contextual and Hawkes feature groups, assembled into dense vectors
// according to a FeatureConfig.

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stance/embeddings.hpp"
#include "stance/error.hpp"
#include "stance/text.hpp"
#include "stance/thread.hpp"

namespace stance {

enum class FeatureGroup : std::size_t { LF1 = 0, LF2, LF3, LF4, R, ST, SO, HF };

inline constexpr std::size_t kNumFeatureGroups = 8;

inline constexpr std::array<FeatureGroup, kNumFeatureGroups> kAllFeatureGroups = {
    FeatureGroup::LF1, FeatureGroup::LF2, FeatureGroup::LF3, FeatureGroup::LF4,
    FeatureGroup::R,   FeatureGroup::ST,  FeatureGroup::SO,  FeatureGroup::HF};

inline constexpr std::string_view to_string(FeatureGroup g) {
  constexpr std::array<std::string_view, kNumFeatureGroups> names = {"LF1", "LF2", "LF3", "LF4",
                                                                     "R",   "ST",  "SO",  "HF"};
  return names[static_cast<std::size_t>(g)];
}

class FeatureConfig {
 public:
  FeatureConfig() = default;
  FeatureConfig(std::initializer_list<FeatureGroup> groups) {
    for (auto g : groups) bits_.set(static_cast<std::size_t>(g));
    validate();
  }

  // Accepts group names ("LF1", "R", "HF"), compact local sets ("LF123"),
  // "LF" for all local groups, "All" for local + contextual, and '+'-joined lists.
  static FeatureConfig parse(std::string_view spec) {
    FeatureConfig cfg;
    std::size_t start = 0;
    while (start <= spec.size()) {
      auto end = spec.find('+', start);
      if (end == std::string_view::npos) end = spec.size();
      cfg.add_token(spec.substr(start, end - start));
      start = end + 1;
    }
    cfg.validate();
    return cfg;
  }

  static FeatureConfig parse(const std::vector<std::string>& tokens) {
    FeatureConfig cfg;
    for (const auto& t : tokens) {
      auto sub = parse(t);
      cfg.bits_ |= sub.bits_;
    }
    cfg.validate();
    return cfg;
  }

  bool has(FeatureGroup g) const { return bits_.test(static_cast<std::size_t>(g)); }
  bool empty() const { return bits_.none(); }
  bool only_hawkes() const { return bits_.count() == 1 && has(FeatureGroup::HF); }
  bool has_non_hawkes() const {
    auto b = bits_;
    b.reset(static_cast<std::size_t>(FeatureGroup::HF));
    return b.any();
  }

  std::vector<FeatureGroup> groups() const {
    std::vector<FeatureGroup> out;
    for (auto g : kAllFeatureGroups)
      if (has(g)) out.push_back(g);
    return out;
  }

  std::string name() const {
    std::string out;
    for (auto g : groups()) {
      if (!out.empty()) out += "+";
      out += to_string(g);
    }
    return out;
  }

  FeatureConfig operator|(const FeatureConfig& o) const {
    FeatureConfig c;
    c.bits_ = bits_ | o.bits_;
    return c;
  }

  bool operator==(const FeatureConfig&) const = default;

 private:
  void add_token(std::string_view tok) {
    if (tok == "All" || tok == "ALL" || tok == "all") {
      for (auto g : {FeatureGroup::LF1, FeatureGroup::LF2, FeatureGroup::LF3, FeatureGroup::LF4, FeatureGroup::R,
                     FeatureGroup::ST, FeatureGroup::SO})
        bits_.set(static_cast<std::size_t>(g));
      return;
    }
    if (tok == "R") return bits_.set(static_cast<std::size_t>(FeatureGroup::R)), void();
    if (tok == "ST") return bits_.set(static_cast<std::size_t>(FeatureGroup::ST)), void();
    if (tok == "SO") return bits_.set(static_cast<std::size_t>(FeatureGroup::SO)), void();
    if (tok == "HF") return bits_.set(static_cast<std::size_t>(FeatureGroup::HF)), void();
    if (tok.size() >= 2 && tok.substr(0, 2) == "LF") {
      auto digits = tok.substr(2);
      if (digits.empty()) digits = "1234";
      for (char c : digits) {
        if (c < '1' || c > '4') throw Error(ErrorCode::InvalidConfig, "bad feature group '" + std::string(tok) + "'");
        bits_.set(static_cast<std::size_t>(c - '1'));
      }
      return;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown feature group '" + std::string(tok) + "'");
  }

  void validate() const {
    if (bits_.none()) throw Error(ErrorCode::InvalidConfig, "feature configuration is empty");
  }

  std::bitset<kNumFeatureGroups> bits_;
};

// Ordered word list with index lookup.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  // Sorted set of bag tokens seen at least `min_count` times in the given threads.
  template <typename ThreadRange>
  static Vocabulary build(const ThreadRange& threads, std::size_t min_count = 1) {
    std::map<std::string, std::size_t> counts;
    for (const ConversationThread& t : threads)
      for (const auto& tw : t.tweets())
        for (auto& tok : text::bag_tokens(tw.text)) ++counts[tok];
    std::vector<std::string> words;
    for (auto& [w, c] : counts)
      if (c >= min_count) words.push_back(w);
    return Vocabulary(std::move(words));
  }

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  std::optional<std::size_t> find(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename ThreadRange>
std::vector<std::string> build_tagset(const ThreadRange& threads) {
  std::set<std::string> tags;
  for (const ConversationThread& t : threads)
    for (const auto& tw : t.tweets())
      if (tw.pos_tags)
        for (const auto& tag : *tw.pos_tags) tags.insert(tag);
  return {tags.begin(), tags.end()};
}

// ---------------------------------------------------------------------------
// Per-tweet feature functions

inline std::size_t negation_count(std::string_view raw) { return text::negation_count(raw); }

inline std::size_t swear_count(std::string_view raw, const text::WordList* swear_words) {
  return text::swear_count(raw, swear_words);
}

inline Eigen::VectorXd pos_counts(const Tweet& tweet, const std::vector<std::string>& tagset) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tagset.size()));
  if (!tweet.pos_tags) return out;
  for (const auto& tag : *tweet.pos_tags) {
    auto it = std::find(tagset.begin(), tagset.end(), tag);
    if (it != tagset.end()) out[it - tagset.begin()] += 1.0;
  }
  return out;
}

struct SurfaceFeatures {
  std::size_t length = 0;
  std::size_t word_count = 0;
  bool has_question = false;
  bool has_exclamation = false;
  bool has_url = false;
};

inline bool contains_url(std::string_view raw) {
  static const std::regex url(R"(https?://\S+)", std::regex::icase);
  return std::regex_search(raw.begin(), raw.end(), url);
}

inline SurfaceFeatures local_surface_features(const Tweet& tweet) {
  SurfaceFeatures f;
  f.length = text::utf8_length(tweet.text);
  f.word_count = text::split_whitespace(tweet.text).size();
  f.has_question = tweet.text.find('?') != std::string::npos;
  f.has_exclamation = tweet.text.find('!') != std::string::npos;
  f.has_url = contains_url(tweet.text);
  return f;
}

struct RelationalFeatures {
  double sim_source = 0.0;
  double sim_parent = 0.0;
  double sim_thread = 0.0;
};

struct StructuralFeatures {
  bool is_leaf = false;
  bool is_source_tweet = false;
  bool is_source_user = false;
};

inline StructuralFeatures structural_features(const ConversationThread& thread, std::size_t i) {
  return {thread.is_leaf(i), i == thread.root(), thread.tweet(i).author_id == thread.root_tweet().author_id};
}

struct SocialFeatures {
  std::int64_t favourites = 0;
  std::int64_t retweets = 0;
  std::size_t persistence = 0;
  std::int64_t time_difference = 0;
};

inline SocialFeatures social_features(const ConversationThread& thread, std::size_t i) {
  const auto& tw = thread.tweet(i);
  SocialFeatures f;
  f.favourites = tw.favourites;
  f.retweets = tw.retweets;
  f.persistence = static_cast<std::size_t>(std::count_if(
      thread.tweets().begin(), thread.tweets().end(), [&](const Tweet& o) { return o.author_id == tw.author_id; }));
  f.time_difference = tw.timestamp - thread.root_tweet().timestamp;
  return f;
}

struct HawkesText {
  std::vector<std::pair<std::size_t, double>> counts;  // (vocabulary index, count), index-sorted
  std::int64_t timestamp = 0;
};

inline HawkesText hawkes_text_features(const Tweet& tweet, const Vocabulary& vocab) {
  std::map<std::size_t, double> acc;
  for (const auto& tok : text::bag_tokens(tweet.text))
    if (auto idx = vocab.find(tok)) acc[*idx] += 1.0;
  HawkesText out;
  out.counts.assign(acc.begin(), acc.end());
  out.timestamp = tweet.timestamp;
  return out;
}

// Thread-level embedding cache: per-tweet embeddings plus per-author sums, so
// similarity features cost O(n) per thread.
class ThreadEmbeddings {
 public:
  ThreadEmbeddings(const ConversationThread& thread, const EmbeddingProvider& provider) : thread_(&thread) {
    const auto d = static_cast<Eigen::Index>(provider.dimension());
    total_ = Eigen::VectorXd::Zero(d);
    for (const auto& tw : thread.tweets()) {
      vecs_.push_back(embed_tweet(tw.text, provider));
      total_ += vecs_.back();
      auto [it, inserted] = by_author_.try_emplace(tw.author_id, Eigen::VectorXd::Zero(d), 0);
      it->second.first += vecs_.back();
      it->second.second += 1;
    }
  }

  const Eigen::VectorXd& embedding(std::size_t i) const { return vecs_.at(i); }

  RelationalFeatures relational(std::size_t i) const {
    const auto& thread = *thread_;
    const auto& v = vecs_.at(i);
    RelationalFeatures f;
    if (i == thread.root()) {
      f.sim_source = v.norm() > 0.0 ? 1.0 : 0.0;
      f.sim_parent = 0.0;
    } else {
      f.sim_source = cosine(v, vecs_[thread.root()]);
      f.sim_parent = cosine(v, vecs_[thread.parent(i)]);
    }
    const auto& [author_sum, author_n] = by_author_.at(thread.tweet(i).author_id);
    const std::size_t others = thread.size() - author_n;
    if (others > 0) {
      Eigen::VectorXd mean = (total_ - author_sum) / static_cast<double>(others);
      f.sim_thread = cosine(v, mean);
    }
    return f;
  }

 private:
  const ConversationThread* thread_;
  std::vector<Eigen::VectorXd> vecs_;
  Eigen::VectorXd total_;
  std::unordered_map<std::string, std::pair<Eigen::VectorXd, std::size_t>> by_author_;
};

inline RelationalFeatures relational_features(const ConversationThread& thread, std::size_t i,
                                              const EmbeddingProvider& provider) {
  return ThreadEmbeddings(thread, provider).relational(i);
}

// ---------------------------------------------------------------------------
// Assembly

struct FeatureResources {
  const EmbeddingProvider* embeddings = nullptr;
  const text::WordList* swear_words = nullptr;
  std::vector<std::string> tagset;
  const Vocabulary* vocabulary = nullptr;
};

struct LayoutEntry {
  FeatureGroup group;
  std::string name;
  std::size_t offset = 0;
  std::size_t width = 0;

  bool operator==(const LayoutEntry&) const = default;
};

using FeatureLayout = std::vector<LayoutEntry>;

inline std::size_t layout_width(const FeatureLayout& layout) {
  return layout.empty() ? 0 : layout.back().offset + layout.back().width;
}

inline void require_resources(const FeatureConfig& config, const FeatureResources& res) {
  if ((config.has(FeatureGroup::LF1) || config.has(FeatureGroup::R)) && res.embeddings == nullptr)
    throw Error(ErrorCode::MissingResource, "word embeddings required by LF1/R");
  if (config.has(FeatureGroup::LF1) && res.swear_words == nullptr)
    throw Error(ErrorCode::MissingResource, "swear word list required by LF1");
  if (config.has(FeatureGroup::HF) && res.vocabulary == nullptr)
    throw Error(ErrorCode::MissingResource, "vocabulary required by HF");
}

inline FeatureLayout make_layout(const FeatureConfig& config, const FeatureResources& res) {
  require_resources(config, res);
  FeatureLayout layout;
  std::size_t offset = 0;
  auto add = [&](FeatureGroup g, std::string name, std::size_t width) {
    layout.push_back({g, std::move(name), offset, width});
    offset += width;
  };
  for (auto g : config.groups()) {
    switch (g) {
      case FeatureGroup::LF1:
        add(g, "embedding", res.embeddings->dimension());
        add(g, "pos_tags", res.tagset.size());
        add(g, "negation", 1);
        add(g, "swear_words", 1);
        break;
      case FeatureGroup::LF2:
        add(g, "length", 1);
        add(g, "word_count", 1);
        break;
      case FeatureGroup::LF3:
        add(g, "has_question", 1);
        add(g, "has_exclamation", 1);
        break;
      case FeatureGroup::LF4: add(g, "has_url", 1); break;
      case FeatureGroup::R:
        add(g, "sim_source", 1);
        add(g, "sim_parent", 1);
        add(g, "sim_thread", 1);
        break;
      case FeatureGroup::ST:
        add(g, "is_leaf", 1);
        add(g, "is_source_tweet", 1);
        add(g, "is_source_user", 1);
        break;
      case FeatureGroup::SO:
        add(g, "favourites", 1);
        add(g, "retweets", 1);
        add(g, "persistence", 1);
        add(g, "time_difference", 1);
        break;
      case FeatureGroup::HF:
        add(g, "bag_of_words", res.vocabulary->size());
        add(g, "timestamp", 1);
        break;
    }
  }
  return layout;
}

struct FeatureVector {
  Eigen::VectorXd values;
  FeatureLayout layout;
};

// Features for every tweet of a thread, one row per tweet in thread index order.
inline Eigen::MatrixXd assemble_thread(const ConversationThread& thread, const FeatureConfig& config,
                                       const FeatureResources& res, const FeatureLayout& layout) {
  const auto width = static_cast<Eigen::Index>(layout_width(layout));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(thread.size()), width);
  std::optional<ThreadEmbeddings> cache;
  if (config.has(FeatureGroup::LF1) || config.has(FeatureGroup::R)) cache.emplace(thread, *res.embeddings);

  for (std::size_t i = 0; i < thread.size(); ++i) {
    const auto& tw = thread.tweet(i);
    auto row = out.row(static_cast<Eigen::Index>(i));
    const auto surface = local_surface_features(tw);
    const auto structural = structural_features(thread, i);
    const auto social = social_features(thread, i);
    const auto relational = cache ? cache->relational(i) : RelationalFeatures{};
    for (const auto& e : layout) {
      const auto off = static_cast<Eigen::Index>(e.offset);
      const auto width = static_cast<Eigen::Index>(e.width);
      const auto& n = e.name;
      if (n == "embedding") row.segment(off, width) = cache->embedding(i).transpose();
      else if (n == "pos_tags") row.segment(off, width) = pos_counts(tw, res.tagset).transpose();
      else if (n == "negation") row[off] = static_cast<double>(stance::negation_count(tw.text));
      else if (n == "swear_words") row[off] = static_cast<double>(stance::swear_count(tw.text, res.swear_words));
      else if (n == "length") row[off] = static_cast<double>(surface.length);
      else if (n == "word_count") row[off] = static_cast<double>(surface.word_count);
      else if (n == "has_question") row[off] = surface.has_question;
      else if (n == "has_exclamation") row[off] = surface.has_exclamation;
      else if (n == "has_url") row[off] = surface.has_url;
      else if (n == "sim_source") row[off] = relational.sim_source;
      else if (n == "sim_parent") row[off] = relational.sim_parent;
      else if (n == "sim_thread") row[off] = relational.sim_thread;
      else if (n == "is_leaf") row[off] = structural.is_leaf;
      else if (n == "is_source_tweet") row[off] = structural.is_source_tweet;
      else if (n == "is_source_user") row[off] = structural.is_source_user;
      else if (n == "favourites") row[off] = static_cast<double>(social.favourites);
      else if (n == "retweets") row[off] = static_cast<double>(social.retweets);
      else if (n == "persistence") row[off] = static_cast<double>(social.persistence);
      else if (n == "time_difference") row[off] = static_cast<double>(social.time_difference);
      else if (n == "bag_of_words") {
        for (auto [idx, c] : hawkes_text_features(tw, *res.vocabulary).counts) row[off + static_cast<Eigen::Index>(idx)] = c;
      } else if (n == "timestamp") {
        // Seconds since the source tweet; raw epoch values would swamp every other feature.
        row[off] = static_cast<double>(tw.timestamp - thread.root_tweet().timestamp);
      }
    }
  }
  return out;
}

inline FeatureVector assemble(const ConversationThread& thread, std::size_t i, const FeatureConfig& config,
                              const FeatureResources& res) {
  FeatureVector fv;
  fv.layout = make_layout(config, res);
  fv.values = assemble_thread(thread, config, res, fv.layout).row(static_cast<Eigen::Index>(i)).transpose();
  return fv;
}

// Scalar features available for per-category distribution export.
inline const std::vector<std::string>& scalar_feature_names() {
  static const std::vector<std::string> names = {
      "length",     "word_count",     "has_question", "has_exclamation", "has_url",    "negation",
      "swear_words", "sim_source",    "sim_parent",   "sim_thread",      "is_leaf",    "is_source_tweet",
      "is_source_user", "favourites", "retweets",     "persistence",     "time_difference"};
  return names;
}

inline FeatureGroup group_of_scalar(const std::string& name) {
  static const std::map<std::string, FeatureGroup> groups = {
      {"length", FeatureGroup::LF2},        {"word_count", FeatureGroup::LF2},   {"has_question", FeatureGroup::LF3},
      {"has_exclamation", FeatureGroup::LF3}, {"has_url", FeatureGroup::LF4},    {"negation", FeatureGroup::LF1},
      {"swear_words", FeatureGroup::LF1},   {"sim_source", FeatureGroup::R},     {"sim_parent", FeatureGroup::R},
      {"sim_thread", FeatureGroup::R},      {"is_leaf", FeatureGroup::ST},       {"is_source_tweet", FeatureGroup::ST},
      {"is_source_user", FeatureGroup::ST}, {"favourites", FeatureGroup::SO},    {"retweets", FeatureGroup::SO},
      {"persistence", FeatureGroup::SO},    {"time_difference", FeatureGroup::SO}};
  auto it = groups.find(name);
  if (it == groups.end()) throw Error(ErrorCode::UnknownFeature, "unknown feature '" + name + "'");
  return it->second;
}

// Column of a named scalar feature within a layout.
inline std::size_t scalar_column(const FeatureLayout& layout, const std::string& name) {
  group_of_scalar(name);
  for (const auto& e : layout)
    if (e.name == name) return e.offset;
  throw Error(ErrorCode::UnknownFeature, "feature '" + name + "' not present in layout");
}

}  // namespace stance
