#pragma once

// Conversation threads: parsing, validation and structural decomposition into
// root-to-leaf branches with novelty masks.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/label.hpp"

namespace stance {

struct Tweet {
  std::string id;
  std::optional<std::string> parent_id;
  std::string author_id;
  std::string text;
  std::int64_t timestamp = 0;
  std::int64_t favourites = 0;
  std::int64_t retweets = 0;
  std::optional<std::vector<std::string>> pos_tags;
  std::optional<StanceLabel> label;

  bool operator==(const Tweet&) const = default;
};

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

// A validated, immutable reply tree. Tweets keep their input order; children
// lists follow that order.
class ConversationThread {
 public:
  static ConversationThread build(std::string event, std::string thread_id, std::vector<Tweet> tweets) {
    ConversationThread t;
    t.event_ = std::move(event);
    t.thread_id_ = std::move(thread_id);
    t.tweets_ = std::move(tweets);
    t.link();
    return t;
  }

  const std::string& event() const noexcept { return event_; }
  const std::string& thread_id() const noexcept { return thread_id_; }
  std::size_t size() const noexcept { return tweets_.size(); }
  std::span<const Tweet> tweets() const noexcept { return tweets_; }
  const Tweet& tweet(std::size_t i) const { return tweets_.at(i); }
  std::size_t root() const noexcept { return root_; }
  const Tweet& root_tweet() const { return tweets_[root_]; }

  // kNoParent for the root.
  std::size_t parent(std::size_t i) const { return parent_.at(i); }
  std::span<const std::size_t> children(std::size_t i) const { return children_.at(i); }
  bool is_leaf(std::size_t i) const { return children_.at(i).empty(); }
  std::size_t depth(std::size_t i) const { return depth_.at(i); }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view id) const {
    if (auto i = find(id)) return *i;
    throw Error(ErrorCode::UnknownId, "tweet '" + std::string(id) + "' not in thread " + thread_id_);
  }

  bool fully_labelled() const {
    return std::all_of(tweets_.begin(), tweets_.end(), [](const Tweet& tw) { return tw.label.has_value(); });
  }

  bool operator==(const ConversationThread& other) const {
    return event_ == other.event_ && thread_id_ == other.thread_id_ && tweets_ == other.tweets_;
  }

 private:
  void link() {
    const std::size_t n = tweets_.size();
    if (n == 0) throw Error(ErrorCode::MalformedInput, "thread " + thread_id_ + " has no tweets");
    index_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!index_.emplace(tweets_[i].id, i).second)
        throw Error(ErrorCode::MalformedInput, "duplicate tweet id '" + tweets_[i].id + "' in thread " + thread_id_);
    }
    parent_.assign(n, kNoParent);
    children_.assign(n, {});
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pid = tweets_[i].parent_id;
      if (!pid) {
        roots.push_back(i);
        continue;
      }
      auto it = index_.find(*pid);
      if (it == index_.end())
        throw Error(ErrorCode::OrphanTweet,
                    "tweet '" + tweets_[i].id + "' replies to unknown '" + *pid + "' in thread " + thread_id_);
      parent_[i] = it->second;
      children_[it->second].push_back(i);
    }
    if (roots.size() > 1) throw Error(ErrorCode::MultipleRoots, "thread " + thread_id_ + " has several roots");
    if (roots.empty()) throw Error(ErrorCode::CycleDetected, "thread " + thread_id_ + " has no root");
    root_ = roots.front();

    depth_.assign(n, kNoParent);
    depth_[root_] = 0;
    std::vector<std::size_t> stack{root_};
    std::size_t reached = 0;
    while (!stack.empty()) {
      std::size_t v = stack.back();
      stack.pop_back();
      ++reached;
      for (std::size_t c : children_[v]) {
        depth_[c] = depth_[v] + 1;
        stack.push_back(c);
      }
    }
    // Every non-root has a parent inside the thread, so anything unreached sits on a cycle.
    if (reached != n) throw Error(ErrorCode::CycleDetected, "thread " + thread_id_ + " contains a reply cycle");
  }

  std::string event_;
  std::string thread_id_;
  std::vector<Tweet> tweets_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> depth_;
  std::size_t root_ = 0;
};

// ---------------------------------------------------------------------------
// Canonical JSON schema

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::MalformedInput, where + ": missing field '" + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw Error(ErrorCode::MalformedInput, where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::int64_t require_int(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) throw Error(ErrorCode::MalformedInput, where + ": field '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline bool absent_or_null(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null();
}

inline Tweet tweet_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedInput, where + ": tweet must be an object");
  Tweet t;
  t.id = require_string(j, "id", where);
  const std::string at = where + " tweet '" + t.id + "'";
  if (!absent_or_null(j, "parent_id")) t.parent_id = require_string(j, "parent_id", at);
  t.author_id = require_string(j, "author_id", at);
  t.text = require_string(j, "text", at);
  t.timestamp = require_int(j, "timestamp", at);
  t.favourites = require_int(j, "favourites", at);
  t.retweets = require_int(j, "retweets", at);
  if (t.favourites < 0 || t.retweets < 0) throw Error(ErrorCode::MalformedInput, at + ": negative count");
  if (!absent_or_null(j, "pos_tags")) {
    const auto& tags = j["pos_tags"];
    if (!tags.is_array()) throw Error(ErrorCode::MalformedInput, at + ": pos_tags must be a list");
    std::vector<std::string> out;
    for (const auto& tag : tags) {
      if (!tag.is_string()) throw Error(ErrorCode::MalformedInput, at + ": pos tag must be a string");
      out.push_back(tag.get<std::string>());
    }
    t.pos_tags = std::move(out);
  }
  if (!absent_or_null(j, "label")) {
    const auto& l = j["label"];
    if (!l.is_string()) throw Error(ErrorCode::MalformedInput, at + ": label must be a string");
    auto parsed = try_parse_label(l.get<std::string>());
    if (!parsed) throw Error(ErrorCode::MalformedInput, at + ": unknown label '" + l.get<std::string>() + "'");
    t.label = parsed;
  }
  return t;
}

}  // namespace detail

inline ConversationThread thread_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedInput, "thread document must be an object");
  std::string event = detail::require_string(doc, "event", "thread");
  std::string thread_id = detail::require_string(doc, "thread_id", "thread");
  const auto& arr = detail::require(doc, "tweets", "thread " + thread_id);
  if (!arr.is_array()) throw Error(ErrorCode::MalformedInput, "thread " + thread_id + ": tweets must be a list");
  std::vector<Tweet> tweets;
  tweets.reserve(arr.size());
  for (const auto& j : arr) tweets.push_back(detail::tweet_from_json(j, "thread " + thread_id));
  return ConversationThread::build(std::move(event), std::move(thread_id), std::move(tweets));
}

inline ConversationThread parse_thread(std::string_view raw) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, std::string("invalid JSON: ") + e.what());
  }
  return thread_from_json(doc);
}

inline nlohmann::ordered_json to_json(const Tweet& t) {
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["parent_id"] = t.parent_id ? nlohmann::ordered_json(*t.parent_id) : nlohmann::ordered_json(nullptr);
  j["author_id"] = t.author_id;
  j["text"] = t.text;
  j["timestamp"] = t.timestamp;
  j["favourites"] = t.favourites;
  j["retweets"] = t.retweets;
  j["pos_tags"] = t.pos_tags ? nlohmann::ordered_json(*t.pos_tags) : nlohmann::ordered_json(nullptr);
  j["label"] = t.label ? nlohmann::ordered_json(std::string(to_string(*t.label))) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json to_json(const ConversationThread& thread) {
  nlohmann::ordered_json j;
  j["event"] = thread.event();
  j["thread_id"] = thread.thread_id();
  auto& arr = j["tweets"] = nlohmann::ordered_json::array();
  for (const auto& t : thread.tweets()) arr.push_back(to_json(t));
  return j;
}

inline std::string serialize_thread(const ConversationThread& thread, int indent = -1) {
  return to_json(thread).dump(indent);
}

// ---------------------------------------------------------------------------
// Structural queries

inline std::size_t depth_of(const ConversationThread& thread, std::string_view id) {
  return thread.depth(thread.index_of(id));
}

struct Branch {
  std::vector<std::size_t> nodes;     // root-to-leaf tweet indices
  std::vector<std::uint8_t> novelty;  // 1 at a tweet's first occurrence across the thread's branches

  std::size_t size() const noexcept { return nodes.size(); }

  std::vector<std::string> tweet_ids(const ConversationThread& thread) const {
    std::vector<std::string> ids;
    ids.reserve(nodes.size());
    for (auto i : nodes) ids.push_back(thread.tweet(i).id);
    return ids;
  }
};

// One branch per leaf, in depth-first order over children order.
inline std::vector<Branch> extract_branches(const ConversationThread& thread) {
  std::vector<Branch> branches;
  std::vector<std::uint8_t> seen(thread.size(), 0);
  std::vector<std::size_t> path;
  // (node, next child position)
  std::vector<std::pair<std::size_t, std::size_t>> stack{{thread.root(), 0}};
  path.push_back(thread.root());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    auto kids = thread.children(node);
    if (kids.empty()) {
      Branch b;
      b.nodes = path;
      b.novelty.reserve(path.size());
      for (auto v : path) {
        b.novelty.push_back(seen[v] ? 0 : 1);
        seen[v] = 1;
      }
      branches.push_back(std::move(b));
    }
    if (next < kids.size()) {
      std::size_t child = kids[next++];
      stack.emplace_back(child, 0);
      path.push_back(child);
    } else {
      stack.pop_back();
      path.pop_back();
    }
  }
  return branches;
}

// True iff every tweet index in [0, tweet_count) carries exactly one mask bit and nothing else does.
inline bool novelty_mask_check(std::span<const Branch> branches, std::size_t tweet_count) {
  std::vector<std::size_t> hits(tweet_count, 0);
  std::size_t total = 0;
  for (const auto& b : branches) {
    if (b.novelty.size() != b.nodes.size()) return false;
    for (std::size_t k = 0; k < b.nodes.size(); ++k) {
      if (b.nodes[k] >= tweet_count) return false;
      if (b.novelty[k]) {
        ++hits[b.nodes[k]];
        ++total;
      }
    }
  }
  return total == tweet_count && std::all_of(hits.begin(), hits.end(), [](std::size_t h) { return h == 1; });
}

inline bool novelty_mask_check(std::span<const Branch> branches, const ConversationThread& thread) {
  return novelty_mask_check(branches, thread.size());
}

// Ascending timestamp; equal timestamps ordered by id.
inline std::vector<std::size_t> chronological_indices(const ConversationThread& thread) {
  std::vector<std::size_t> order(thread.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = thread.tweet(a);
    const auto& tb = thread.tweet(b);
    if (ta.timestamp != tb.timestamp) return ta.timestamp < tb.timestamp;
    return ta.id < tb.id;
  });
  return order;
}

inline std::vector<std::string> chronological_order(const ConversationThread& thread) {
  std::vector<std::string> ids;
  for (auto i : chronological_indices(thread)) ids.push_back(thread.tweet(i).id);
  return ids;
}

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  std::vector<ConversationThread> threads;
  std::set<std::string> events;

  static Dataset from_threads(std::vector<ConversationThread> threads) {
    Dataset ds;
    std::unordered_set<std::string> ids;
    for (const auto& t : threads) {
      if (!ids.insert(t.thread_id()).second)
        throw Error(ErrorCode::MalformedInput, "duplicate thread id '" + t.thread_id() + "'");
      ds.events.insert(t.event());
    }
    ds.threads = std::move(threads);
    return ds;
  }

  std::size_t tweet_count() const {
    std::size_t n = 0;
    for (const auto& t : threads) n += t.size();
    return n;
  }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << content;
}

// All *.json files under `dir`, sorted by path.
inline std::vector<std::filesystem::path> list_json_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline ConversationThread load_thread(const std::filesystem::path& path) {
  try {
    return parse_thread(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::vector<ConversationThread> threads;
  for (const auto& f : list_json_files(dir)) threads.push_back(load_thread(f));
  return Dataset::from_threads(std::move(threads));
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  for (const auto& t : ds.threads)
    write_file(dir / t.event() / (t.thread_id() + ".json"), serialize_thread(t, 1));
}

}  // namespace stance
