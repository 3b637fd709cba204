#pragma once

// Experiment configuration file (JSON). Relative paths resolve against the
// directory holding the config file.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/error.hpp"
#include "stance/evaluation.hpp"
#include "stance/features.hpp"
#include "stance/thread.hpp"

namespace stance {

struct ExperimentConfig {
  std::filesystem::path dataset;
  eval::ExperimentSpec spec;
  std::optional<std::filesystem::path> embeddings;
  std::map<std::string, std::filesystem::path> embeddings_per_fold;
  std::optional<std::filesystem::path> swear_words;
  std::optional<std::filesystem::path> output;
};

namespace config_detail {

using json = nlohmann::json;

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw Error(ErrorCode::InvalidConfig, "unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace config_detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using namespace config_detail;
  try {
    check_keys(j,
               {"dataset", "classifier", "features", "embeddings", "embeddings_per_fold", "swear_words", "seed", "output",
                "standardize", "maxent", "crf", "lstm", "hawkes", "feature_distributions"},
               "config");
    ExperimentConfig c;
    if (!j.contains("dataset")) throw Error(ErrorCode::InvalidConfig, "config needs 'dataset'");
    if (!j.contains("classifier")) throw Error(ErrorCode::InvalidConfig, "config needs 'classifier'");
    c.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
    c.spec.classifier = eval::parse_classifier(j.at("classifier").get<std::string>());
    if (j.contains("features")) {
      const auto& f = j.at("features");
      c.spec.features = f.is_array() ? FeatureConfig::parse(f.get<std::vector<std::string>>())
                                     : FeatureConfig::parse(f.get<std::string>());
    } else if (eval::is_hawkes(c.spec.classifier)) {
      c.spec.features = FeatureConfig{FeatureGroup::HF};
    }
    if (j.contains("embeddings")) c.embeddings = resolve(base_dir, j.at("embeddings").get<std::string>());
    if (j.contains("embeddings_per_fold"))
      for (auto& [event, p] : j.at("embeddings_per_fold").items())
        c.embeddings_per_fold[event] = resolve(base_dir, p.get<std::string>());
    if (j.contains("swear_words")) c.swear_words = resolve(base_dir, j.at("swear_words").get<std::string>());
    if (j.contains("output")) c.output = resolve(base_dir, j.at("output").get<std::string>());
    read(j, "seed", c.spec.seed);
    read(j, "standardize", c.spec.standardize);

    if (j.contains("maxent")) {
      const auto& b = j.at("maxent");
      check_keys(b, {"l2", "max_iter", "tol"}, "maxent");
      read(b, "l2", c.spec.maxent.l2);
      read(b, "max_iter", c.spec.maxent.max_iter);
      read(b, "tol", c.spec.maxent.tol);
    }
    if (j.contains("crf")) {
      const auto& b = j.at("crf");
      check_keys(b, {"l2", "max_iter", "tol", "freeze_transition"}, "crf");
      read(b, "l2", c.spec.crf.l2);
      read(b, "max_iter", c.spec.crf.max_iter);
      read(b, "tol", c.spec.crf.tol);
      read(b, "freeze_transition", c.spec.crf.freeze_transition);
    }
    if (j.contains("hawkes")) {
      const auto& b = j.at("hawkes");
      check_keys(b, {"max_iter", "tol"}, "hawkes");
      read(b, "max_iter", c.spec.hawkes.max_iter);
      read(b, "tol", c.spec.hawkes.tol);
    }
    if (j.contains("lstm")) {
      const auto& b = j.at("lstm");
      check_keys(b,
                 {"search", "lstm_units", "dense_units", "dropout", "l2", "batch_size", "learning_rate", "max_epochs",
                  "patience", "dev_event", "fallback_dev_event", "space"},
                 "lstm");
      auto& l = c.spec.lstm;
      read(b, "search", l.search);
      read(b, "lstm_units", l.fixed.lstm_units);
      read(b, "dense_units", l.fixed.dense_units);
      read(b, "dropout", l.fixed.dropout);
      read(b, "l2", l.fixed.l2);
      read(b, "batch_size", l.fixed.batch_size);
      read(b, "learning_rate", l.fixed.learning_rate);
      read(b, "max_epochs", l.max_epochs);
      read(b, "patience", l.patience);
      read(b, "dev_event", l.dev_event);
      read(b, "fallback_dev_event", l.fallback_dev_event);
      if (b.contains("space")) {
        const auto& s = b.at("space");
        check_keys(s,
                   {"lstm_layers", "lstm_units", "dense_layers", "dense_units", "dropout", "l2", "batch_size",
                    "learning_rate", "budget"},
                   "lstm.space");
        auto& sp = l.space;
        auto range = [&](const char* key, auto& lo, auto& hi) {
          if (!s.contains(key)) return;
          const auto& r = s.at(key);
          if (!r.is_array() || r.size() != 2) throw Error(ErrorCode::InvalidConfig, std::string("lstm.space.") + key + " must be [min, max]");
          r.at(0).get_to(lo);
          r.at(1).get_to(hi);
        };
        range("lstm_layers", sp.min_lstm_layers, sp.max_lstm_layers);
        range("dense_layers", sp.min_dense_layers, sp.max_dense_layers);
        range("dropout", sp.min_dropout, sp.max_dropout);
        range("l2", sp.min_l2, sp.max_l2);
        range("learning_rate", sp.min_learning_rate, sp.max_learning_rate);
        read(s, "lstm_units", sp.lstm_units);
        read(s, "dense_units", sp.dense_units);
        read(s, "batch_size", sp.batch_sizes);
        read(s, "budget", sp.budget);
        sp.validate();
      }
    }
    if (j.contains("feature_distributions")) {
      const auto& fd = j.at("feature_distributions");
      if (fd.is_string() && fd.get<std::string>() == "all") {
        c.spec.distribution_features = scalar_feature_names();
      } else {
        c.spec.distribution_features = fd.get<std::vector<std::string>>();
        for (const auto& n : c.spec.distribution_features) group_of_scalar(n);
      }
    }
    c.spec.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

}  // namespace stance
