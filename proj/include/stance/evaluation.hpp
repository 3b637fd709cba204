#pragma once

// Leave-one-event-out cross-validation over a dataset of conversation threads.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stance/branch_lstm.hpp"
#include "stance/crf.hpp"
#include "stance/embeddings.hpp"
#include "stance/error.hpp"
#include "stance/features.hpp"
#include "stance/hawkes.hpp"
#include "stance/label.hpp"
#include "stance/maxent.hpp"
#include "stance/metrics.hpp"
#include "stance/text.hpp"
#include "stance/thread.hpp"

namespace stance::eval {

enum class ClassifierKind { HawkesApprox, HawkesGrad, CrfLinear, CrfTree, Lstm, MaxEnt };

inline constexpr std::array<std::pair<ClassifierKind, std::string_view>, 6> kClassifierNames = {{
    {ClassifierKind::HawkesApprox, "hawkes-approx"},
    {ClassifierKind::HawkesGrad, "hawkes-grad"},
    {ClassifierKind::CrfLinear, "crf-linear"},
    {ClassifierKind::CrfTree, "crf-tree"},
    {ClassifierKind::Lstm, "lstm"},
    {ClassifierKind::MaxEnt, "maxent"},
}};

inline std::string_view to_string(ClassifierKind k) {
  for (auto [kind, name] : kClassifierNames)
    if (kind == k) return name;
  return "?";
}

inline ClassifierKind parse_classifier(std::string_view name) {
  for (auto [kind, n] : kClassifierNames)
    if (n == name) return kind;
  throw Error(ErrorCode::InvalidConfig, "unknown classifier '" + std::string(name) + "'");
}

inline bool is_hawkes(ClassifierKind k) { return k == ClassifierKind::HawkesApprox || k == ClassifierKind::HawkesGrad; }

// ---------------------------------------------------------------------------
// Folds

struct FoldSpec {
  std::string test_event;
  std::vector<std::string> train_events;
  std::optional<std::string> dev_event;
};

inline std::vector<FoldSpec> make_folds(const Dataset& ds) {
  if (ds.events.size() < 2)
    throw Error(ErrorCode::TooFewEvents, "leave-one-event-out needs at least 2 events, got " + std::to_string(ds.events.size()));
  std::vector<FoldSpec> folds;
  for (const auto& test : ds.events) {  // std::set: sorted by name
    FoldSpec f{test, {}, std::nullopt};
    for (const auto& e : ds.events)
      if (e != test) f.train_events.push_back(e);
    folds.push_back(std::move(f));
  }
  return folds;
}

// Preferred event if it is a training event, else the fallback, else the alphabetically first training event.
inline std::string choose_dev_event(const std::vector<std::string>& train_events, const std::string& preferred,
                                    const std::string& fallback) {
  if (train_events.empty()) throw Error(ErrorCode::TooFewEvents, "no training events to draw a dev event from");
  for (const auto& name : {preferred, fallback})
    if (std::find(train_events.begin(), train_events.end(), name) != train_events.end()) return name;
  return *std::min_element(train_events.begin(), train_events.end());
}

// ---------------------------------------------------------------------------
// Experiment settings

struct CrfSettings {
  double l2 = 1.0;
  std::size_t max_iter = 300;
  double tol = 1e-5;
  bool freeze_transition = false;
};

struct LstmSettings {
  bool search = false;  // random search over `space`; otherwise train `fixed`
  lstm::HyperSearchSpace space;
  lstm::TrialConfig fixed{{100}, {100}, 0.2, 1e-4, 32, 1e-3, 1};
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::string dev_event = "ottawashooting";
  std::string fallback_dev_event = "ferguson";
};

struct HawkesSettings {
  std::size_t max_iter = 300;
  double tol = 1e-6;
};

struct ExperimentSpec {
  ClassifierKind classifier = ClassifierKind::MaxEnt;
  FeatureConfig features{FeatureGroup::LF1, FeatureGroup::LF2, FeatureGroup::LF3};
  std::uint64_t seed = 1;
  bool standardize = true;
  maxent::TrainConfig maxent;
  CrfSettings crf;
  LstmSettings lstm;
  HawkesSettings hawkes;
  std::vector<std::string> distribution_features;  // exported per category when non-empty

  void validate() const {
    if (is_hawkes(classifier)) {
      if (!features.has(FeatureGroup::HF)) throw Error(ErrorCode::InvalidConfig, "hawkes classifiers require the HF group");
      if (!features.only_hawkes()) throw Error(ErrorCode::InvalidConfig, "hawkes classifiers use the HF group only");
    } else if (!features.has_non_hawkes()) {
      throw Error(ErrorCode::InvalidConfig, std::string(to_string(classifier)) + " needs at least one non-HF feature group");
    }
  }
};

struct ExperimentResources {
  const EmbeddingProvider* embeddings = nullptr;
  std::map<std::string, const EmbeddingProvider*> embeddings_per_fold;  // keyed by test event
  const text::WordList* swear_words = nullptr;

  const EmbeddingProvider* embeddings_for(const std::string& test_event) const {
    auto it = embeddings_per_fold.find(test_event);
    return it != embeddings_per_fold.end() ? it->second : embeddings;
  }
};

// ---------------------------------------------------------------------------
// Fold context: everything learnt from training events only

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;  // 1 where a column is constant

  static Standardizer fit(const Eigen::MatrixXd& rows) {
    Standardizer s;
    const auto n = static_cast<double>(std::max<Eigen::Index>(rows.rows(), 1));
    s.mean = rows.colwise().sum() / n;
    const Eigen::MatrixXd centered = rows.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / n).cwiseSqrt();
    for (Eigen::Index c = 0; c < s.scale.size(); ++c)
      if (!(s.scale[c] > 1e-12)) s.scale[c] = 1.0;
    return s;
  }

  void apply(Eigen::MatrixXd& rows) const {
    rows = (rows.rowwise() - mean).array().rowwise() / scale.array();
  }
};

struct FoldContext {
  FoldSpec spec;
  std::set<std::string> source_events;  // events of every thread the context was built from
  Vocabulary vocabulary;
  std::vector<std::string> tagset;
  Eigen::Vector4d category_weights = Eigen::Vector4d::Ones();
  FeatureLayout layout;
  std::optional<Standardizer> scaler;
};

struct Prediction {
  std::string event;
  std::string thread_id;
  std::string tweet_id;
  std::size_t depth = 0;
  StanceLabel gold = StanceLabel::Comment;
  StanceLabel predicted = StanceLabel::Comment;
};

struct FoldResult {
  FoldSpec spec;
  std::vector<Prediction> predictions;
  double macro_f1 = 0.0;
  nlohmann::json details;  // classifier-specific (e.g. search trials)
};

struct GroupRow {
  std::string group;
  std::size_t n = 0;
  double macro_f1 = 0.0;
};

struct FeatureDistribution {
  std::string feature;
  std::array<std::vector<double>, kNumLabels> samples;  // canonical label order
};

struct Comparison {
  std::string name_a;
  std::string name_b;
  metrics::McNemarResult result;
};

struct EvalReport {
  std::string classifier;
  std::string features;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  double macro_f1 = 0.0;
  std::array<metrics::ClassScores, kNumLabels> per_class{};
  Eigen::Matrix4d confusion = Eigen::Matrix4d::Zero();
  std::vector<GroupRow> events;
  std::vector<GroupRow> depth;
  std::vector<FeatureDistribution> feature_distributions;
  std::vector<Comparison> comparisons;

  std::vector<Prediction> all_predictions() const {
    std::vector<Prediction> out;
    for (const auto& f : folds) out.insert(out.end(), f.predictions.begin(), f.predictions.end());
    return out;
  }
};

// ---------------------------------------------------------------------------
// Breakdowns

inline std::string depth_bucket(std::size_t depth) { return depth >= 5 ? "5+" : std::to_string(depth); }

inline std::pair<std::vector<StanceLabel>, std::vector<StanceLabel>> split_labels(const std::vector<Prediction>& preds) {
  std::vector<StanceLabel> gold;
  std::vector<StanceLabel> pred;
  gold.reserve(preds.size());
  pred.reserve(preds.size());
  for (const auto& p : preds) {
    gold.push_back(p.gold);
    pred.push_back(p.predicted);
  }
  return {gold, pred};
}

inline std::vector<GroupRow> breakdown_by_event(const std::vector<Prediction>& preds) {
  std::map<std::string, std::vector<Prediction>> groups;
  for (const auto& p : preds) groups[p.event].push_back(p);
  std::vector<GroupRow> rows;
  for (const auto& [name, g] : groups) {
    auto [gold, pred] = split_labels(g);
    rows.push_back({name, g.size(), metrics::macro_f1(gold, pred)});
  }
  return rows;
}

// Always six rows: 0, 1, 2, 3, 4, 5+; empty buckets report n = 0 and macro-F1 0.
inline std::vector<GroupRow> breakdown_by_depth(const std::vector<Prediction>& preds) {
  std::array<std::vector<Prediction>, 6> buckets;
  for (const auto& p : preds) buckets[std::min<std::size_t>(p.depth, 5)].push_back(p);
  std::vector<GroupRow> rows;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    GroupRow r{depth_bucket(b), buckets[b].size(), 0.0};
    if (!buckets[b].empty()) {
      auto [gold, pred] = split_labels(buckets[b]);
      r.macro_f1 = metrics::macro_f1(gold, pred);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void finalize(EvalReport& report) {
  const auto preds = report.all_predictions();
  auto [gold, pred] = split_labels(preds);
  report.macro_f1 = metrics::macro_f1(gold, pred);
  report.per_class = metrics::per_class(gold, pred);
  report.confusion = metrics::confusion(gold, pred);
  report.events = breakdown_by_event(preds);
  report.depth = breakdown_by_depth(preds);
}

// ---------------------------------------------------------------------------
// Feature distributions

// Raw (unstandardized) value of a named scalar feature for tweet i.
inline double scalar_feature(const ConversationThread& thread, std::size_t i, const std::string& name,
                             const ExperimentResources& res, const ThreadEmbeddings* cache) {
  const auto group = group_of_scalar(name);
  const auto& tw = thread.tweet(i);
  switch (group) {
    case FeatureGroup::LF1:
      return name == "negation" ? static_cast<double>(stance::negation_count(tw.text))
                                : static_cast<double>(stance::swear_count(tw.text, res.swear_words));
    case FeatureGroup::LF2:
    case FeatureGroup::LF3:
    case FeatureGroup::LF4: {
      const auto s = local_surface_features(tw);
      if (name == "length") return static_cast<double>(s.length);
      if (name == "word_count") return static_cast<double>(s.word_count);
      if (name == "has_question") return s.has_question;
      if (name == "has_exclamation") return s.has_exclamation;
      return s.has_url;
    }
    case FeatureGroup::R: {
      if (cache == nullptr) throw Error(ErrorCode::MissingResource, "word embeddings required for " + name);
      const auto r = cache->relational(i);
      return name == "sim_source" ? r.sim_source : name == "sim_parent" ? r.sim_parent : r.sim_thread;
    }
    case FeatureGroup::ST: {
      const auto s = structural_features(thread, i);
      return name == "is_leaf" ? s.is_leaf : name == "is_source_tweet" ? s.is_source_tweet : s.is_source_user;
    }
    case FeatureGroup::SO: {
      const auto s = social_features(thread, i);
      if (name == "favourites") return static_cast<double>(s.favourites);
      if (name == "retweets") return static_cast<double>(s.retweets);
      if (name == "persistence") return static_cast<double>(s.persistence);
      return static_cast<double>(s.time_difference);
    }
    case FeatureGroup::HF: break;
  }
  throw Error(ErrorCode::UnknownFeature, "unknown feature '" + name + "'");
}

// Per-category samples of each named feature over all labelled tweets.
inline std::vector<FeatureDistribution> feature_distributions(const Dataset& ds, const std::vector<std::string>& names,
                                                              const ExperimentResources& res) {
  bool need_embeddings = false;
  for (const auto& n : names) need_embeddings |= group_of_scalar(n) == FeatureGroup::R;
  if (need_embeddings && res.embeddings == nullptr)
    throw Error(ErrorCode::MissingResource, "word embeddings required for similarity features");
  std::vector<FeatureDistribution> out;
  for (const auto& n : names) out.push_back({n, {}});
  for (const auto& thread : ds.threads) {
    std::optional<ThreadEmbeddings> cache;
    if (need_embeddings) cache.emplace(thread, *res.embeddings);
    for (std::size_t i = 0; i < thread.size(); ++i) {
      const auto& lab = thread.tweet(i).label;
      if (!lab) continue;
      for (auto& d : out)
        d.samples[index_of(*lab)].push_back(scalar_feature(thread, i, d.feature, res, cache ? &*cache : nullptr));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string confusion_csv(const Eigen::Matrix4d& m) {
  std::string out = "gold";
  for (auto l : kAllLabels) out += "," + std::string(to_string(l));
  out += '\n';
  for (std::size_t r = 0; r < kNumLabels; ++r) {
    out += to_string(label_at(r));
    for (Eigen::Index c = 0; c < 4; ++c) out += "," + format_double(m(static_cast<Eigen::Index>(r), c));
    out += '\n';
  }
  return out;
}

inline std::string rows_csv(const std::string& key, const std::vector<GroupRow>& rows) {
  std::string out = key + ",n,macro_f1\n";
  for (const auto& r : rows) out += r.group + "," + std::to_string(r.n) + "," + format_double(r.macro_f1) + "\n";
  return out;
}

inline std::string distributions_csv(const std::vector<FeatureDistribution>& dists) {
  std::string out = "feature,label,value\n";
  for (const auto& d : dists)
    for (std::size_t k = 0; k < kNumLabels; ++k)
      for (double v : d.samples[k]) out += d.feature + "," + std::string(to_string(label_at(k))) + "," + format_double(v) + "\n";
  return out;
}

inline std::vector<FeatureDistribution> distributions_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "feature,label,value")
    throw Error(ErrorCode::MalformedInput, "distribution CSV must start with 'feature,label,value'");
  std::vector<FeatureDistribution> out;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw Error(ErrorCode::MalformedInput, "bad CSV row: " + line);
    const auto feature = line.substr(0, a);
    const auto label = parse_label(line.substr(a + 1, b - a - 1));
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(b + 1), &used);
      if (used != line.size() - b - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedInput, "bad CSV value: " + line);
    }
    auto [it, inserted] = index.emplace(feature, out.size());
    if (inserted) out.push_back({feature, {}});
    out[it->second].samples[index_of(label)].push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running folds

namespace detail {

inline std::array<std::size_t, kNumLabels> thread_label_counts(const std::vector<const ConversationThread*>& threads) {
  std::array<std::size_t, kNumLabels> counts{};
  for (const auto* t : threads)
    for (const auto& tw : t->tweets()) ++counts[index_of(*tw.label)];
  return counts;
}

struct Featurized {
  std::vector<Eigen::MatrixXd> matrices;  // one per thread, same order as the input list
};

inline Featurized featurize(const std::vector<const ConversationThread*>& threads, const ExperimentSpec& spec,
                            const FeatureResources& fres, const FoldContext& ctx) {
  Featurized f;
  for (const auto* t : threads) {
    Eigen::MatrixXd m = assemble_thread(*t, spec.features, fres, ctx.layout);
    if (ctx.scaler) ctx.scaler->apply(m);
    f.matrices.push_back(std::move(m));
  }
  return f;
}

inline std::vector<StanceLabel> gold_of(const ConversationThread& t) {
  std::vector<StanceLabel> g;
  for (const auto& tw : t.tweets()) g.push_back(*tw.label);
  return g;
}

inline std::vector<std::optional<StanceLabel>> optional_gold(const ConversationThread& t, const std::vector<std::size_t>& nodes) {
  std::vector<std::optional<StanceLabel>> g;
  for (auto i : nodes) g.push_back(t.tweet(i).label);
  return g;
}

}  // namespace detail

using ContextObserver = std::function<void(const FoldContext&)>;

inline FoldResult run_fold(const Dataset& ds, const FoldSpec& fold_in, const ExperimentSpec& spec,
                           const ExperimentResources& res, std::uint64_t fold_seed, const ContextObserver& observer) {
  FoldSpec fold = fold_in;
  const bool lstm_dev = spec.classifier == ClassifierKind::Lstm;
  if (lstm_dev && fold.train_events.size() >= 2)
    fold.dev_event = choose_dev_event(fold.train_events, spec.lstm.dev_event, spec.lstm.fallback_dev_event);

  std::vector<const ConversationThread*> train;
  std::vector<const ConversationThread*> dev;
  std::vector<const ConversationThread*> test;
  for (const auto& t : ds.threads) {
    if (t.event() == fold.test_event) test.push_back(&t);
    else if (fold.dev_event && t.event() == *fold.dev_event) dev.push_back(&t);
    else if (std::find(fold.train_events.begin(), fold.train_events.end(), t.event()) != fold.train_events.end())
      train.push_back(&t);
  }
  // Context sources: training threads, plus dev threads (they are training events too).
  std::vector<const ConversationThread*> context_threads = train;
  context_threads.insert(context_threads.end(), dev.begin(), dev.end());

  FoldContext ctx;
  ctx.spec = fold;
  for (const auto* t : context_threads) ctx.source_events.insert(t->event());
  std::vector<std::reference_wrapper<const ConversationThread>> ctx_refs;
  for (const auto* t : context_threads) ctx_refs.emplace_back(*t);
  if (spec.features.has(FeatureGroup::HF)) ctx.vocabulary = Vocabulary::build(ctx_refs);
  ctx.tagset = build_tagset(ctx_refs);
  ctx.category_weights = category_weights(detail::thread_label_counts(train));

  FeatureResources fres;
  fres.embeddings = res.embeddings_for(fold.test_event);
  fres.swear_words = res.swear_words;
  fres.tagset = ctx.tagset;
  fres.vocabulary = &ctx.vocabulary;

  FoldResult out;
  out.spec = fold;
  std::vector<std::vector<StanceLabel>> predicted(test.size());

  if (is_hawkes(spec.classifier)) {
    if (observer) observer(ctx);
    const auto history = hawkes::history_from_threads(ctx_refs, ctx.vocabulary);
    auto params = hawkes::fit_approx(history);
    if (spec.classifier == ClassifierKind::HawkesGrad) {
      auto rep = hawkes::fit_grad_report(history, params, spec.hawkes.max_iter, spec.hawkes.tol);
      out.details = {{"initial_log_likelihood", rep.initial_log_likelihood},
                     {"final_log_likelihood", rep.final_log_likelihood},
                     {"iterations", rep.iterations}};
      params = rep.params;
    }
    for (std::size_t k = 0; k < test.size(); ++k) {
      const auto ev = hawkes::thread_events(*test[k], ctx.vocabulary);
      const auto labels = hawkes::predict_greedy(params, ev.events);
      predicted[k].assign(test[k]->size(), StanceLabel::Comment);
      for (std::size_t n = 0; n < labels.size(); ++n) predicted[k][ev.tweet_index[n]] = labels[n];
    }
  } else {
    ctx.layout = make_layout(spec.features, fres);
    if (spec.standardize) {
      std::vector<Eigen::MatrixXd> raw;
      Eigen::Index rows = 0;
      for (const auto* t : context_threads) {
        raw.push_back(assemble_thread(*t, spec.features, fres, ctx.layout));
        rows += raw.back().rows();
      }
      Eigen::MatrixXd all(rows, static_cast<Eigen::Index>(layout_width(ctx.layout)));
      Eigen::Index r = 0;
      for (const auto& m : raw) {
        all.middleRows(r, m.rows()) = m;
        r += m.rows();
      }
      ctx.scaler = Standardizer::fit(all);
    }
    if (observer) observer(ctx);
    const auto train_x = detail::featurize(train, spec, fres, ctx);
    const auto test_x = detail::featurize(test, spec, fres, ctx);

    switch (spec.classifier) {
      case ClassifierKind::MaxEnt: {
        maxent::Instances inst;
        Eigen::Index n = 0;
        for (const auto& m : train_x.matrices) n += m.rows();
        inst.features.resize(n, static_cast<Eigen::Index>(layout_width(ctx.layout)));
        Eigen::Index r = 0;
        for (std::size_t k = 0; k < train.size(); ++k) {
          inst.features.middleRows(r, train_x.matrices[k].rows()) = train_x.matrices[k];
          r += train_x.matrices[k].rows();
          for (auto l : detail::gold_of(*train[k])) inst.labels.push_back(l);
        }
        auto model = maxent::train(inst, ctx.category_weights, spec.maxent);
        for (std::size_t k = 0; k < test.size(); ++k)
          for (Eigen::Index i = 0; i < test_x.matrices[k].rows(); ++i)
            predicted[k].push_back(maxent::predict(test_x.matrices[k].row(i).transpose(), model));
        break;
      }
      case ClassifierKind::CrfLinear:
      case ClassifierKind::CrfTree: {
        const bool chain = spec.classifier == ClassifierKind::CrfLinear;
        std::vector<crf::Instance> instances;
        for (std::size_t k = 0; k < train.size(); ++k) {
          const auto& t = *train[k];
          const auto& m = train_x.matrices[k];
          if (chain) {
            for (const auto& br : extract_branches(t)) {
              crf::Instance inst;
              inst.features.resize(static_cast<Eigen::Index>(br.size()), m.cols());
              for (std::size_t p = 0; p < br.size(); ++p)
                inst.features.row(static_cast<Eigen::Index>(p)) = m.row(static_cast<Eigen::Index>(br.nodes[p]));
              inst.parents = crf::Instance::chain_parents(br.size());
              inst.gold = detail::optional_gold(t, br.nodes);
              instances.push_back(std::move(inst));
            }
          } else {
            crf::Instance inst;
            inst.features = m;
            for (std::size_t i = 0; i < t.size(); ++i) inst.parents.push_back(t.parent(i));
            std::vector<std::size_t> all(t.size());
            std::iota(all.begin(), all.end(), std::size_t{0});
            inst.gold = detail::optional_gold(t, all);
            instances.push_back(std::move(inst));
          }
        }
        crf::TrainConfig tc{spec.crf.l2, spec.crf.max_iter, spec.crf.tol, chain ? crf::Topology::Chain : crf::Topology::Tree,
                            spec.crf.freeze_transition};
        auto model = crf::train(instances, ctx.category_weights, tc);
        for (std::size_t k = 0; k < test.size(); ++k)
          predicted[k] = chain ? crf::predict_prefix_paths(model, *test[k], test_x.matrices[k])
                               : crf::predict_prefix_trees(model, *test[k], test_x.matrices[k]);
        break;
      }
      case ClassifierKind::Lstm: {
        std::vector<lstm::BranchExample> train_b;
        for (std::size_t k = 0; k < train.size(); ++k)
          for (auto& ex : lstm::thread_examples(*train[k], train_x.matrices[k])) train_b.push_back(std::move(ex));
        std::vector<lstm::BranchExample> dev_b;
        if (!dev.empty()) {
          const auto dev_x = detail::featurize(dev, spec, fres, ctx);
          for (std::size_t k = 0; k < dev.size(); ++k)
            for (auto& ex : lstm::thread_examples(*dev[k], dev_x.matrices[k])) dev_b.push_back(std::move(ex));
        }
        lstm::BranchLstmModel model;
        if (spec.lstm.search) {
          auto space = spec.lstm.space;
          space.seed = fold_seed;
          space.max_epochs = spec.lstm.max_epochs;
          space.patience = spec.lstm.patience;
          auto sr = lstm::hyper_search(space, train_b, dev_b);
          auto trials = nlohmann::json::array();
          for (const auto& t : sr.trials)
            trials.push_back({{"config", lstm::to_json(t.config)}, {"dev_loss", t.dev_loss}, {"dev_macro_f1", t.dev_macro_f1}});
          out.details = {{"trials", trials}, {"best", lstm::to_json(sr.best_config)}};
          model = std::move(sr.best_model);
        } else {
          const auto& c = spec.lstm.fixed;
          auto init = lstm::BranchLstmModel::init(static_cast<Eigen::Index>(layout_width(ctx.layout)), c.lstm_units,
                                                  c.dense_units, c.dropout, c.l2, fold_seed);
          lstm::TrainConfig tc;
          tc.learning_rate = c.learning_rate;
          tc.batch_size = c.batch_size;
          tc.max_epochs = spec.lstm.max_epochs;
          tc.patience = spec.lstm.patience;
          tc.seed = fold_seed;
          auto tr = lstm::train_report(train_b, std::move(init), tc, dev_b);
          out.details = {{"best_epoch", tr.best_epoch}, {"dev_loss", tr.dev_loss}};
          model = std::move(tr.model);
        }
        for (std::size_t k = 0; k < test.size(); ++k) predicted[k] = lstm::predict(model, *test[k], test_x.matrices[k]);
        break;
      }
      default: break;
    }
  }

  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& t = *test[k];
    for (std::size_t i = 0; i < t.size(); ++i)
      out.predictions.push_back({t.event(), t.thread_id(), t.tweet(i).id, t.depth(i), *t.tweet(i).label, predicted[k][i]});
  }
  auto [gold, pred] = split_labels(out.predictions);
  out.macro_f1 = metrics::macro_f1(gold, pred);
  return out;
}

// Folds run sequentially in event-name order; the report is a pure function of its inputs.
inline EvalReport run_experiment(const Dataset& ds, const ExperimentSpec& spec, const ExperimentResources& res,
                                 const ContextObserver& observer = {}) {
  spec.validate();
  for (const auto& t : ds.threads)
    for (const auto& tw : t.tweets())
      if (!tw.label)
        throw Error(ErrorCode::UnlabelledNode, "tweet " + tw.id + " in thread " + t.thread_id() + " has no label");
  EvalReport report;
  report.classifier = std::string(to_string(spec.classifier));
  report.features = spec.features.name();
  report.seed = spec.seed;
  const auto folds = make_folds(ds);
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const std::uint64_t fold_seed = spec.seed * 1000003ULL + k;
    try {
      report.folds.push_back(run_fold(ds, folds[k], spec, res, fold_seed, observer));
    } catch (const Error& e) {
      throw Error(e.code(), "fold '" + folds[k].test_event + "': " + e.what());
    }
  }
  finalize(report);
  if (!spec.distribution_features.empty())
    report.feature_distributions = feature_distributions(ds, spec.distribution_features, res);
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Prediction& p) {
  return {{"event", p.event}, {"thread_id", p.thread_id}, {"tweet_id", p.tweet_id}, {"depth", p.depth},
          {"gold", std::string(to_string(p.gold))}, {"predicted", std::string(to_string(p.predicted))}};
}

inline nlohmann::json rows_to_json(const std::string& key, const std::vector<GroupRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back({{key, r.group}, {"n", r.n}, {"macro_f1", r.macro_f1}});
  return arr;
}

inline nlohmann::json to_json(const metrics::McNemarResult& m) {
  return {{"b", m.b}, {"c", m.c}, {"statistic", m.statistic}, {"p_value", m.p_value}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["classifier"] = r.classifier;
  j["features"] = r.features;
  j["seed"] = r.seed;
  j["macro_f1"] = r.macro_f1;
  nlohmann::json pc;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const auto& s = r.per_class[k];
    pc[std::string(to_string(label_at(k)))] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  j["per_class"] = pc;
  j["confusion"] = matrix_to_json(r.confusion);
  j["events"] = rows_to_json("event", r.events);
  j["depth"] = rows_to_json("depth", r.depth);
  auto folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    nlohmann::json fj;
    fj["test_event"] = f.spec.test_event;
    fj["train_events"] = f.spec.train_events;
    fj["dev_event"] = f.spec.dev_event ? nlohmann::json(*f.spec.dev_event) : nlohmann::json(nullptr);
    fj["macro_f1"] = f.macro_f1;
    auto preds = nlohmann::json::array();
    for (const auto& p : f.predictions) preds.push_back(to_json(p));
    fj["predictions"] = preds;
    if (!f.details.is_null()) fj["details"] = f.details;
    folds.push_back(fj);
  }
  j["folds"] = folds;
  if (!r.feature_distributions.empty()) {
    auto dists = nlohmann::json::array();
    for (const auto& d : r.feature_distributions) {
      nlohmann::json samples;
      for (std::size_t k = 0; k < kNumLabels; ++k) samples[std::string(to_string(label_at(k)))] = d.samples[k];
      dists.push_back({{"feature", d.feature}, {"samples", samples}});
    }
    j["feature_distributions"] = dists;
  }
  auto comps = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    auto cj = to_json(c.result);
    cj["a"] = c.name_a;
    cj["b_report"] = c.name_b;
    comps.push_back(cj);
  }
  j["comparisons"] = comps;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.classifier = j.at("classifier").get<std::string>();
    r.features = j.at("features").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& fj : j.at("folds")) {
      FoldResult f;
      f.spec.test_event = fj.at("test_event").get<std::string>();
      f.spec.train_events = fj.at("train_events").get<std::vector<std::string>>();
      if (!fj.at("dev_event").is_null()) f.spec.dev_event = fj.at("dev_event").get<std::string>();
      f.macro_f1 = fj.at("macro_f1").get<double>();
      for (const auto& pj : fj.at("predictions"))
        f.predictions.push_back({pj.at("event").get<std::string>(), pj.at("thread_id").get<std::string>(),
                                 pj.at("tweet_id").get<std::string>(), pj.at("depth").get<std::size_t>(),
                                 parse_label(pj.at("gold").get<std::string>()),
                                 parse_label(pj.at("predicted").get<std::string>())});
      if (fj.contains("details")) f.details = fj.at("details");
      r.folds.push_back(std::move(f));
    }
    finalize(r);
    if (j.contains("feature_distributions")) {
      for (const auto& dj : j.at("feature_distributions")) {
        FeatureDistribution d;
        d.feature = dj.at("feature").get<std::string>();
        for (std::size_t k = 0; k < kNumLabels; ++k)
          d.samples[k] = dj.at("samples").at(std::string(to_string(label_at(k)))).get<std::vector<double>>();
        r.feature_distributions.push_back(std::move(d));
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("report: ") + e.what());
  }
}

// McNemar over two reports, aligning predictions by (thread id, tweet id).
inline metrics::McNemarResult compare_reports(const EvalReport& a, const EvalReport& b) {
  std::map<std::pair<std::string, std::string>, Prediction> pb;
  for (const auto& p : b.all_predictions()) pb.emplace(std::make_pair(p.thread_id, p.tweet_id), p);
  const auto pa = a.all_predictions();
  if (pa.size() != pb.size()) throw Error(ErrorCode::LengthMismatch, "reports cover different numbers of tweets");
  std::vector<StanceLabel> gold;
  std::vector<StanceLabel> la;
  std::vector<StanceLabel> lb;
  for (const auto& p : pa) {
    auto it = pb.find({p.thread_id, p.tweet_id});
    if (it == pb.end())
      throw Error(ErrorCode::LengthMismatch, "tweet " + p.tweet_id + " of thread " + p.thread_id + " missing from second report");
    if (it->second.gold != p.gold) throw Error(ErrorCode::MalformedInput, "gold labels disagree for tweet " + p.tweet_id);
    gold.push_back(p.gold);
    la.push_back(p.predicted);
    lb.push_back(it->second.predicted);
  }
  return metrics::mcnemar(gold, la, lb);
}

}  // namespace stance::eval
