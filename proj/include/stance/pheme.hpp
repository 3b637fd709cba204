#pragma once

// Reader for the public PHEME rumour-thread layout:
//   <root>/threads/en/<event>/<thread>/{source-tweets,reactions}/<id>.json
//   <root>/threads/en/<event>/<thread>/structure.json
//   <root>/annotations/en-scheme-annotations.json   (one JSON object per line)

#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/label.hpp"
#include "stance/thread.hpp"

namespace stance::pheme {

namespace fs = std::filesystem;

struct Annotation {
  std::string event;
  std::string thread_id;
  std::string tweet_id;
  std::optional<std::string> support;           // source tweets
  std::optional<std::string> response_to_source;  // replies
};

inline std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

inline std::string id_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw Error(ErrorCode::MalformedInput, "id must be a string or integer");
}

inline std::map<std::pair<std::string, std::string>, Annotation> load_annotations(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingResource, "annotation file not found: " + file.string());
  std::map<std::pair<std::string, std::string>, Annotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedInput, file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("threadid") || !j.contains("tweetid"))
      throw Error(ErrorCode::MalformedInput, file.string() + ":" + std::to_string(line_no) + ": missing threadid/tweetid");
    Annotation a;
    a.event = optional_string(j, "event").value_or("");
    a.thread_id = id_string(j.at("threadid"));
    a.tweet_id = id_string(j.at("tweetid"));
    a.support = optional_string(j, "support");
    a.response_to_source = optional_string(j, "responsetype-vs-source");
    out.emplace(std::make_pair(a.thread_id, a.tweet_id), std::move(a));
  }
  return out;
}

// "Wed Jan 07 11:06:08 +0000 2015" -> seconds since the epoch.
inline std::int64_t parse_created_at(const std::string& s) {
  std::istringstream in(s);
  std::tm tm{};
  std::string offset;
  in >> std::get_time(&tm, "%a %b %d %H:%M:%S");
  in >> offset;
  int year = 0;
  in >> year;
  if (in.fail() || offset.size() != 5 || (offset[0] != '+' && offset[0] != '-'))
    throw Error(ErrorCode::MalformedInput, "unparseable created_at '" + s + "'");
  tm.tm_year = year - 1900;
  const std::int64_t base = static_cast<std::int64_t>(timegm(&tm));
  const int hh = std::stoi(offset.substr(1, 2));
  const int mm = std::stoi(offset.substr(3, 2));
  const std::int64_t off = (hh * 3600 + mm * 60) * (offset[0] == '-' ? -1 : 1);
  return base - off;
}

// Source: supporting/denying/underspecified. Replies: stance toward the source
// claim, so agreement with a denying source is a denial.
inline StanceLabel map_label(const Annotation& a, bool is_source, std::optional<StanceLabel> source_label) {
  if (is_source) {
    const auto s = a.support.value_or("");
    if (s == "supporting") return StanceLabel::Support;
    if (s == "denying") return StanceLabel::Deny;
    if (s == "underspecified") return StanceLabel::Comment;
    throw Error(ErrorCode::MalformedInput, "source tweet " + a.tweet_id + " has unknown support value '" + s + "'");
  }
  const auto r = a.response_to_source.value_or("");
  const bool flip = source_label == StanceLabel::Deny;
  if (r == "agreed") return flip ? StanceLabel::Deny : StanceLabel::Support;
  if (r == "disagreed") return flip ? StanceLabel::Support : StanceLabel::Deny;
  if (r == "appeal-for-more-information") return StanceLabel::Query;
  if (r == "comment") return StanceLabel::Comment;
  throw Error(ErrorCode::MalformedInput, "reply " + a.tweet_id + " has unknown response type '" + r + "'");
}

inline Tweet tweet_from_twitter_json(const nlohmann::json& j, const std::string& where) {
  try {
    Tweet t;
    t.id = j.contains("id_str") ? j.at("id_str").get<std::string>() : id_string(j.at("id"));
    const auto& user = j.at("user");
    t.author_id = user.contains("id_str") ? user.at("id_str").get<std::string>() : id_string(user.at("id"));
    t.text = j.contains("full_text") ? j.at("full_text").get<std::string>() : j.at("text").get<std::string>();
    t.timestamp = parse_created_at(j.at("created_at").get<std::string>());
    t.favourites = j.value("favorite_count", std::int64_t{0});
    t.retweets = j.value("retweet_count", std::int64_t{0});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, where + ": " + e.what());
  }
}

// Parent links from structure.json; leaves may be [] or {}.
inline void walk_structure(const nlohmann::ordered_json& node, const std::string& parent,
                           std::vector<std::pair<std::string, std::string>>& edges) {
  if (!node.is_object()) return;
  for (auto it = node.begin(); it != node.end(); ++it) {
    edges.emplace_back(it.key(), parent);
    walk_structure(it.value(), it.key(), edges);
  }
}

struct IngestResult {
  Dataset dataset;
  std::vector<std::string> failures;  // "<path>: <reason>"
};

// Only annotated tweets are kept. A kept tweet whose parent was dropped is
// attached to its nearest kept ancestor.
inline ConversationThread load_thread_dir(const fs::path& dir, const std::string& event,
                                          const std::map<std::pair<std::string, std::string>, Annotation>& annotations) {
  const std::string thread_id = dir.filename().string();
  const auto structure_path = dir / "structure.json";
  nlohmann::ordered_json structure;
  try {
    structure = nlohmann::ordered_json::parse(read_file(structure_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, structure_path.string() + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> edges;  // (child, parent), parent "" for the root
  walk_structure(structure, "", edges);
  std::map<std::string, std::string> parent_of(edges.begin(), edges.end());

  auto read_tweet = [&](const std::string& id) -> std::optional<Tweet> {
    for (const char* sub : {"source-tweets", "reactions"}) {
      const auto p = dir / sub / (id + ".json");
      if (fs::exists(p)) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(read_file(p));
        } catch (const nlohmann::json::parse_error& e) {
          throw Error(ErrorCode::MalformedInput, p.string() + ": " + e.what());
        }
        return tweet_from_twitter_json(j, p.string());
      }
    }
    return std::nullopt;
  };

  std::optional<StanceLabel> source_label;
  {
    auto it = annotations.find({thread_id, thread_id});
    if (it == annotations.end()) throw Error(ErrorCode::MalformedInput, "source tweet " + thread_id + " is not annotated");
    source_label = map_label(it->second, true, std::nullopt);
  }
  std::vector<Tweet> tweets;
  std::map<std::string, bool> kept;
  for (const auto& [id, parent] : edges) {
    auto ann = annotations.find({thread_id, id});
    const bool is_source = id == thread_id;
    if (ann == annotations.end()) continue;
    auto tw = read_tweet(id);
    if (!tw) {
      if (is_source) throw Error(ErrorCode::MalformedInput, "source tweet file missing for " + thread_id);
      continue;
    }
    tw->label = map_label(ann->second, is_source, source_label);
    tweets.push_back(std::move(*tw));
    kept[id] = true;
  }
  for (auto& tw : tweets) {
    if (tw.id == thread_id) continue;
    std::string p = parent_of.count(tw.id) ? parent_of[tw.id] : thread_id;
    while (!p.empty() && !kept.count(p)) p = parent_of.count(p) ? parent_of[p] : std::string();
    tw.parent_id = p.empty() ? std::optional<std::string>(thread_id) : std::optional<std::string>(p);
  }
  return ConversationThread::build(event, thread_id, std::move(tweets));
}

inline IngestResult load_dataset(const fs::path& root) {
  fs::path threads_root = root / "threads" / "en";
  if (!fs::is_directory(threads_root)) threads_root = root / "threads";
  if (!fs::is_directory(threads_root)) throw Error(ErrorCode::MissingResource, "no threads directory under " + root.string());
  const auto annotations = load_annotations(root / "annotations" / "en-scheme-annotations.json");

  IngestResult out;
  std::vector<ConversationThread> threads;
  std::vector<fs::path> events;
  for (const auto& e : fs::directory_iterator(threads_root))
    if (e.is_directory()) events.push_back(e.path());
  std::sort(events.begin(), events.end());
  for (const auto& ev : events) {
    std::vector<fs::path> dirs;
    for (const auto& t : fs::directory_iterator(ev))
      if (t.is_directory()) dirs.push_back(t.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      try {
        threads.push_back(load_thread_dir(d, ev.filename().string(), annotations));
      } catch (const Error& e) {
        out.failures.push_back(d.string() + ": " + e.what());
      }
    }
  }
  out.dataset = Dataset::from_threads(std::move(threads));
  return out;
}

}  // namespace stance::pheme
