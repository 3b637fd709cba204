#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "stance/config.hpp"
#include "stance/evaluation.hpp"
#include "stance/pheme.hpp"
#include "stance/synthetic.hpp"

namespace fs = std::filesystem;
using namespace stance;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kInputError = 2;

void print_error(const Error& e) {
  nlohmann::json j{{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
  std::cerr << j.dump() << '\n';
}

bool is_schema_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedInput:
    case ErrorCode::OrphanTweet:
    case ErrorCode::MultipleRoots:
    case ErrorCode::CycleDetected:
    case ErrorCode::UnknownId:
      return true;
    default:
      return false;
  }
}

void print_summary(const Dataset& ds) {
  std::map<std::string, std::array<std::size_t, kNumLabels + 2>> per_event;  // labels..., unlabelled, threads
  std::array<std::size_t, kNumLabels + 1> totals{};
  std::array<std::size_t, 6> depth{};
  for (const auto& t : ds.threads) {
    auto& row = per_event[t.event()];
    ++row[kNumLabels + 1];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& lab = t.tweet(i).label;
      const std::size_t k = lab ? index_of(*lab) : kNumLabels;
      ++row[k];
      ++totals[k];
      ++depth[std::min<std::size_t>(t.depth(i), 5)];
    }
  }
  auto label_cols = [](const auto& row) {
    std::string s;
    for (std::size_t k = 0; k < kNumLabels; ++k) s += " " + std::string(to_string(label_at(k))) + "=" + std::to_string(row[k]);
    return s + " unlabelled=" + std::to_string(row[kNumLabels]);
  };
  for (const auto& [event, row] : per_event) {
    std::size_t n = 0;
    for (std::size_t k = 0; k <= kNumLabels; ++k) n += row[k];
    std::cout << "event " << event << ": threads=" << row[kNumLabels + 1] << " tweets=" << n << label_cols(row) << '\n';
  }
  std::cout << "total: threads=" << ds.threads.size() << " tweets=" << ds.tweet_count() << label_cols(totals) << '\n';
  std::cout << "depth:";
  for (std::size_t b = 0; b < depth.size(); ++b) std::cout << " " << eval::depth_bucket(b) << "=" << depth[b];
  std::cout << '\n';
}

int cmd_ingest(const std::string& format, const fs::path& input, const fs::path& output) {
  std::vector<std::string> failures;
  Dataset ds;
  try {
    if (format == "pheme") {
      auto res = pheme::load_dataset(input);
      ds = std::move(res.dataset);
      failures = std::move(res.failures);
    } else {
      if (!fs::is_directory(input)) throw Error(ErrorCode::MalformedInput, "input directory not found: " + input.string());
      std::vector<ConversationThread> threads;
      for (const auto& p : list_json_files(input)) {
        try {
          threads.push_back(load_thread(p));
        } catch (const Error& e) {
          failures.push_back(e.what());
        }
      }
      ds = Dataset::from_threads(std::move(threads));
    }
    save_dataset(ds, output);
  } catch (const Error& e) {
    print_error(e);
    return is_schema_error(e.code()) || e.code() == ErrorCode::MissingResource ? kInputError : kRuntimeError;
  }
  print_summary(ds);
  for (const auto& f : failures) std::cerr << "error: " << f << '\n';
  return failures.empty() ? kOk : kInputError;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> dataset;
};

int cmd_run(const fs::path& config_path, const RunOverrides& ov) {
  try {
    auto cfg = load_experiment_config(config_path);
    if (const char* env = std::getenv("STANCE_THREADS_SEED")) {
      try {
        cfg.spec.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "STANCE_THREADS_SEED must be an unsigned integer");
      }
    }
    if (ov.seed) cfg.spec.seed = *ov.seed;
    if (ov.output) cfg.output = *ov.output;
    if (ov.dataset) cfg.dataset = *ov.dataset;

    if (!fs::is_directory(cfg.dataset)) throw Error(ErrorCode::MissingResource, "dataset directory not found: " + cfg.dataset.string());
    const auto ds = load_dataset(cfg.dataset);

    const bool need_embeddings = cfg.spec.features.has(FeatureGroup::LF1) || cfg.spec.features.has(FeatureGroup::R) ||
                                 std::any_of(cfg.spec.distribution_features.begin(), cfg.spec.distribution_features.end(),
                                             [](const std::string& n) { return group_of_scalar(n) == FeatureGroup::R; });
    std::optional<EmbeddingProvider> shared;
    std::map<std::string, EmbeddingProvider> per_fold;
    eval::ExperimentResources res;
    if (cfg.embeddings) {
      shared.emplace(EmbeddingProvider::load(*cfg.embeddings));
      res.embeddings = &*shared;
    }
    for (const auto& [event, path] : cfg.embeddings_per_fold) {
      auto [it, ok] = per_fold.emplace(event, EmbeddingProvider::load(path));
      res.embeddings_per_fold[event] = &it->second;
    }
    if (need_embeddings && !shared) {
      for (const auto& e : ds.events)
        if (!per_fold.count(e)) throw Error(ErrorCode::MissingResource, "no embeddings configured for fold '" + e + "'");
    }
    std::optional<text::WordList> swear;
    const bool need_swear = cfg.spec.features.has(FeatureGroup::LF1) ||
                            std::find(cfg.spec.distribution_features.begin(), cfg.spec.distribution_features.end(),
                                      "swear_words") != cfg.spec.distribution_features.end();
    if (cfg.swear_words) {
      swear.emplace(text::WordList::load(*cfg.swear_words));
    } else if (need_swear) {
      swear.emplace(text::WordList::load(STANCE_DEFAULT_SWEAR_LIST));
    }
    if (swear) res.swear_words = &*swear;

    const auto report = eval::run_experiment(ds, cfg.spec, res);
    const fs::path out = cfg.output.value_or("report.json");
    write_file(out, eval::to_json(report).dump(1) + "\n");
    char buf[64];
    std::snprintf(buf, sizeof buf, "macro_f1=%.6f", report.macro_f1);
    std::cout << buf << '\n';
    return kOk;
  } catch (const Error& e) {
    print_error(e);
    return kRuntimeError;
  }
}

eval::EvalReport load_report(const fs::path& path) {
  try {
    return eval::report_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
  }
}

int cmd_report(const fs::path& path, const std::string& view) {
  try {
    const auto r = load_report(path);
    if (view == "confusion") std::cout << eval::confusion_csv(r.confusion);
    else if (view == "events") std::cout << eval::rows_csv("event", r.events);
    else if (view == "depth") std::cout << eval::rows_csv("depth", r.depth);
    else {
      if (r.feature_distributions.empty())
        throw Error(ErrorCode::InvalidConfig, "report has no feature distributions; set 'feature_distributions' in the config");
      std::cout << eval::distributions_csv(r.feature_distributions);
    }
    return kOk;
  } catch (const Error& e) {
    print_error(e);
    return kRuntimeError;
  }
}

int cmd_compare(const fs::path& a, const fs::path& b) {
  try {
    const auto ra = load_report(a);
    const auto rb = load_report(b);
    const auto m = eval::compare_reports(ra, rb);
    nlohmann::json j = eval::to_json(m);
    j["report_a"] = {{"path", a.string()}, {"classifier", ra.classifier}, {"features", ra.features}, {"macro_f1", ra.macro_f1}};
    j["report_b"] = {{"path", b.string()}, {"classifier", rb.classifier}, {"features", rb.features}, {"macro_f1", rb.macro_f1}};
    std::cout << j.dump(1) << '\n';
    return kOk;
  } catch (const Error& e) {
    print_error(e);
    return kRuntimeError;
  }
}

int cmd_synth(const fs::path& out, std::uint64_t seed, std::size_t threads_per_event, std::size_t events) {
  try {
    synth::Options opt;
    opt.seed = seed;
    opt.threads_per_event = threads_per_event;
    opt.events.clear();
    for (std::size_t k = 0; k < events; ++k) opt.events.push_back("event_" + std::string(1, static_cast<char>('a' + k % 26)) + (k >= 26 ? std::to_string(k / 26) : ""));
    const auto corpus = synth::generate(opt);
    save_dataset(corpus.dataset, out / "dataset");
    write_file(out / "embeddings.txt", synth::embeddings_text(corpus));
    std::cout << "threads=" << corpus.dataset.threads.size() << " tweets=" << corpus.dataset.tweet_count() << '\n';
    return kOk;
  } catch (const Error& e) {
    print_error(e);
    return kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stance classification over conversation threads"};
  app.require_subcommand(1);

  std::string format = "canonical";
  std::string ingest_in;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate threads and write them in canonical form");
  ingest->add_option("--format", format, "Input layout")->check(CLI::IsMember({"canonical", "pheme"}));
  ingest->add_option("input", ingest_in, "Input directory")->required();
  ingest->add_option("output", ingest_out, "Output directory")->required();

  std::string config;
  RunOverrides ov;
  auto* run = app.add_subcommand("run", "Run a leave-one-event-out experiment");
  run->add_option("config", config, "Experiment config (JSON)")->required();
  run->add_option("--seed", ov.seed, "Override the config seed");
  run->add_option("--output", ov.output, "Override the report path");
  run->add_option("--dataset", ov.dataset, "Override the dataset directory");

  std::string report_path;
  std::string view = "confusion";
  auto* report = app.add_subcommand("report", "Render a view of a report as CSV");
  report->add_option("report", report_path, "Report JSON")->required();
  report->add_option("--view", view, "View")->check(CLI::IsMember({"confusion", "events", "depth", "features"}));

  std::string cmp_a;
  std::string cmp_b;
  auto* compare = app.add_subcommand("compare", "McNemar test between two reports");
  compare->add_option("a", cmp_a, "First report")->required();
  compare->add_option("b", cmp_b, "Second report")->required();

  std::string synth_out;
  std::uint64_t synth_seed = 7;
  std::size_t synth_threads = 30;
  std::size_t synth_events = 4;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and matching word vectors");
  synth->add_option("output", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--threads-per-event", synth_threads, "Threads per event");
  synth->add_option("--events", synth_events, "Number of events")->check(CLI::Range(1, 100));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  if (*ingest) return cmd_ingest(format, ingest_in, ingest_out);
  if (*run) return cmd_run(config, ov);
  if (*report) return cmd_report(report_path, view);
  if (*compare) return cmd_compare(cmp_a, cmp_b);
  if (*synth) return cmd_synth(synth_out, synth_seed, synth_threads, synth_events);
  return kInputError;
}
