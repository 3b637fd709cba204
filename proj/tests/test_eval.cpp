#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace stance;
using namespace testing_support;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::Io;
}

synth::Corpus small_corpus(std::size_t events = 3, std::size_t threads = 6, std::uint64_t seed = 1) {
  synth::Options opt;
  opt.events.clear();
  for (std::size_t k = 0; k < events; ++k) opt.events.push_back(std::string("ev") + static_cast<char>('a' + k));
  opt.threads_per_event = threads;
  opt.max_replies = 6;
  opt.seed = seed;
  return synth::generate(opt);
}

struct Resources {
  text::WordList swear{std::vector<std::string>{"damn", "hell"}};
  eval::ExperimentResources res;
  explicit Resources(const synth::Corpus& c) {
    res.embeddings = &c.embeddings;
    res.swear_words = &swear;
  }
};

}  // namespace

TEST(Harness, FoldsAndDevChoice) {
  auto c = small_corpus(3, 2);
  const auto folds = eval::make_folds(c.dataset);
  ASSERT_EQ(folds.size(), 3u);
  EXPECT_EQ(folds[0].test_event, "eva");
  EXPECT_EQ(folds[0].train_events, (std::vector<std::string>{"evb", "evc"}));

  auto one = small_corpus(1, 2);
  EXPECT_EQ(code_of([&] { eval::make_folds(one.dataset); }), ErrorCode::TooFewEvents);

  EXPECT_EQ(eval::choose_dev_event({"a", "ottawashooting"}, "ottawashooting", "ferguson"), "ottawashooting");
  EXPECT_EQ(eval::choose_dev_event({"ferguson", "b"}, "ottawashooting", "ferguson"), "ferguson");
  EXPECT_EQ(eval::choose_dev_event({"zeta", "beta"}, "ottawashooting", "ferguson"), "beta");
}

TEST(Harness, ClassifierNames) {
  for (auto name : {"hawkes-approx", "hawkes-grad", "crf-linear", "crf-tree", "lstm", "maxent"})
    EXPECT_EQ(eval::to_string(eval::parse_classifier(name)), name);
  EXPECT_EQ(code_of([] { eval::parse_classifier("svm"); }), ErrorCode::InvalidConfig);
}

TEST(Harness, NoTestEventLeakage) {
  auto c = small_corpus(3, 4);
  // Give each event a private word and POS tag so leakage would be visible.
  std::vector<ConversationThread> threads;
  for (const auto& t : c.dataset.threads) {
    std::vector<Tweet> tw(t.tweets().begin(), t.tweets().end());
    for (auto& x : tw) {
      x.text += " only" + t.event();
      x.pos_tags->push_back("TAG_" + t.event());
    }
    threads.push_back(ConversationThread::build(t.event(), t.thread_id(), tw));
  }
  const auto ds = Dataset::from_threads(std::move(threads));
  Resources r(c);

  for (auto kind : {eval::ClassifierKind::MaxEnt, eval::ClassifierKind::HawkesApprox}) {
    eval::ExperimentSpec spec;
    spec.classifier = kind;
    if (eval::is_hawkes(kind)) spec.features = FeatureConfig{FeatureGroup::HF};
    std::size_t calls = 0;
    auto observer = [&](const eval::FoldContext& ctx) {
      ++calls;
      const auto& test = ctx.spec.test_event;
      EXPECT_EQ(ctx.source_events.count(test), 0u);
      EXPECT_FALSE(ctx.vocabulary.find("only" + test).has_value());
      EXPECT_EQ(std::count(ctx.tagset.begin(), ctx.tagset.end(), "TAG_" + test), 0);
      for (const auto& e : ctx.spec.train_events) {
        if (eval::is_hawkes(kind)) EXPECT_TRUE(ctx.vocabulary.find("only" + e).has_value());
        EXPECT_EQ(std::count(ctx.tagset.begin(), ctx.tagset.end(), "TAG_" + e), 1);
      }
      std::array<std::size_t, 4> counts{};
      for (const auto& t : ds.threads)
        if (t.event() != test)
          for (const auto& tw : t.tweets()) ++counts[index_of(*tw.label)];
      EXPECT_LT((ctx.category_weights - category_weights(counts)).cwiseAbs().maxCoeff(), 1e-12);
    };
    eval::run_experiment(ds, spec, r.res, observer);
    EXPECT_EQ(calls, 3u);
  }
}

TEST(Harness, ScalerFitOnTrainingRowsOnly) {
  auto c = small_corpus(2, 5);
  Resources r(c);
  eval::ExperimentSpec spec;
  spec.features = FeatureConfig::parse("LF2+SO");
  auto observer = [&](const eval::FoldContext& ctx) {
    ASSERT_TRUE(ctx.scaler.has_value());
    FeatureResources fres;
    fres.tagset = ctx.tagset;
    std::vector<Eigen::MatrixXd> parts;
    Eigen::Index rows = 0;
    for (const auto& t : c.dataset.threads)
      if (t.event() != ctx.spec.test_event) {
        parts.push_back(assemble_thread(t, spec.features, fres, ctx.layout));
        rows += parts.back().rows();
      }
    Eigen::MatrixXd all(rows, parts.front().cols());
    Eigen::Index k = 0;
    for (const auto& p : parts) {
      all.middleRows(k, p.rows()) = p;
      k += p.rows();
    }
    auto copy = all;
    ctx.scaler->apply(copy);
    EXPECT_LT(copy.colwise().mean().cwiseAbs().maxCoeff(), 1e-9);
    for (Eigen::Index col = 0; col < copy.cols(); ++col) {
      const double var = copy.col(col).squaredNorm() / static_cast<double>(copy.rows());
      if (all.col(col).maxCoeff() > all.col(col).minCoeff()) EXPECT_NEAR(var, 1.0, 1e-9);
    }
  };
  eval::run_experiment(c.dataset, spec, r.res, observer);
}

TEST(Harness, TwoEventMaxEntReport) {
  auto c = small_corpus(2, 8);
  Resources r(c);
  eval::ExperimentSpec spec;
  spec.seed = 4;
  spec.distribution_features = {"has_question", "sim_parent"};
  const auto report = eval::run_experiment(c.dataset, spec, r.res);
  ASSERT_EQ(report.folds.size(), 2u);
  const auto preds = report.all_predictions();
  EXPECT_EQ(preds.size(), c.dataset.tweet_count());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : preds) EXPECT_TRUE(seen.emplace(p.thread_id, p.tweet_id).second);
  for (const auto& f : report.folds)
    for (const auto& p : f.predictions) EXPECT_EQ(p.event, f.spec.test_event);

  auto [gold, pred] = eval::split_labels(preds);
  EXPECT_DOUBLE_EQ(report.macro_f1, metrics::macro_f1(gold, pred));
  EXPECT_EQ(report.depth.size(), 6u);
  EXPECT_EQ(report.events.size(), 2u);
  std::size_t n = 0;
  for (const auto& row : report.depth) n += row.n;
  EXPECT_EQ(n, preds.size());
  ASSERT_EQ(report.feature_distributions.size(), 2u);
  std::size_t samples = 0;
  for (const auto& s : report.feature_distributions[0].samples) samples += s.size();
  EXPECT_EQ(samples, c.dataset.tweet_count());

  // deterministic, and the JSON form reloads to the same aggregates
  const auto again = eval::run_experiment(c.dataset, spec, r.res);
  EXPECT_EQ(eval::to_json(again).dump(), eval::to_json(report).dump());
  const auto back = eval::report_from_json(nlohmann::json::parse(eval::to_json(report).dump()));
  EXPECT_EQ(eval::to_json(back).dump(), eval::to_json(report).dump());

  const auto self = eval::compare_reports(report, back);
  EXPECT_EQ(self.b + self.c, 0u);
  EXPECT_DOUBLE_EQ(self.p_value, 1.0);
}

TEST(Harness, EveryClassifierRuns) {
  auto c = small_corpus(3, 5);
  Resources r(c);
  for (auto kind : {eval::ClassifierKind::HawkesApprox, eval::ClassifierKind::HawkesGrad, eval::ClassifierKind::CrfLinear,
                    eval::ClassifierKind::CrfTree, eval::ClassifierKind::Lstm}) {
    eval::ExperimentSpec spec;
    spec.classifier = kind;
    spec.features = eval::is_hawkes(kind) ? FeatureConfig{FeatureGroup::HF} : FeatureConfig::parse("LF123+R");
    spec.lstm.fixed = {{8}, {8}, 0.1, 1e-4, 8, 5e-3, 1};
    spec.lstm.max_epochs = 3;
    spec.hawkes.max_iter = 50;
    const auto report = eval::run_experiment(c.dataset, spec, r.res);
    EXPECT_EQ(report.all_predictions().size(), c.dataset.tweet_count()) << eval::to_string(kind);
    EXPECT_GE(report.macro_f1, 0.0);
    EXPECT_LE(report.macro_f1, 1.0);
    if (kind == eval::ClassifierKind::Lstm) {
      for (const auto& f : report.folds) {
        ASSERT_TRUE(f.spec.dev_event.has_value());
        EXPECT_NE(*f.spec.dev_event, f.spec.test_event);
      }
    }
    if (kind == eval::ClassifierKind::HawkesGrad)
      for (const auto& f : report.folds)
        EXPECT_GE(f.details.at("final_log_likelihood").get<double>(), f.details.at("initial_log_likelihood").get<double>());
  }
}

TEST(Harness, LstmSearchPath) {
  auto c = small_corpus(3, 4);
  Resources r(c);
  eval::ExperimentSpec spec;
  spec.classifier = eval::ClassifierKind::Lstm;
  spec.features = FeatureConfig::parse("LF23");
  spec.lstm.search = true;
  spec.lstm.space.budget = 2;
  spec.lstm.space.lstm_units = {4};
  spec.lstm.space.dense_units = {4};
  spec.lstm.space.max_lstm_layers = 1;
  spec.lstm.max_epochs = 2;
  const auto report = eval::run_experiment(c.dataset, spec, r.res);
  for (const auto& f : report.folds) EXPECT_EQ(f.details.at("trials").size(), 2u);
}

TEST(Harness, RejectsUnlabelledAndMissingResources) {
  auto c = small_corpus(2, 2);
  std::vector<ConversationThread> threads(c.dataset.threads.begin(), c.dataset.threads.end());
  std::vector<Tweet> tw(threads[0].tweets().begin(), threads[0].tweets().end());
  tw.back().label.reset();
  threads[0] = ConversationThread::build(threads[0].event(), threads[0].thread_id(), tw);
  const auto ds = Dataset::from_threads(threads);
  Resources r(c);
  EXPECT_EQ(code_of([&] { eval::run_experiment(ds, eval::ExperimentSpec{}, r.res); }), ErrorCode::UnlabelledNode);

  eval::ExperimentResources none;
  EXPECT_EQ(code_of([&] { eval::run_experiment(c.dataset, eval::ExperimentSpec{}, none); }), ErrorCode::MissingResource);
}

TEST(Harness, PerFoldEmbeddings) {
  auto c = small_corpus(2, 3);
  Resources r(c);
  EmbeddingProvider other(c.embeddings.dimension());
  r.res.embeddings_per_fold["eva"] = &other;
  EXPECT_EQ(r.res.embeddings_for("eva"), &other);
  EXPECT_EQ(r.res.embeddings_for("evb"), &c.embeddings);
}

TEST(Reports, DistributionCsvRoundTrip) {
  std::vector<eval::FeatureDistribution> d(2);
  d[0].feature = "length";
  d[0].samples = {{{1.0, 2.5}, {}, {0.1 + 0.2}, {1e-300, -3.0}}};
  d[1].feature = "sim_source";
  d[1].samples = {{{0.0}, {1.0 / 3.0}, {}, {}}};
  const auto csv = eval::distributions_csv(d);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "feature,label,value");
  const auto back = eval::distributions_from_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].feature, d[k].feature);
    EXPECT_EQ(back[k].samples, d[k].samples);
  }
}

TEST(Reports, ScalarFeatureDistributionsByLabel) {
  auto t = fig1_thread();
  auto ds = Dataset::from_threads({t});
  eval::ExperimentResources res;
  const auto d = eval::feature_distributions(ds, {"has_question", "word_count"}, res);
  ASSERT_EQ(d.size(), 2u);
  // Query tweets: "Source please?" and "Where did you see this?"
  EXPECT_EQ(d[0].samples[index_of(StanceLabel::Query)], (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(d[1].samples[index_of(StanceLabel::Comment)], (std::vector<double>{4.0, 2.0}));
  EXPECT_EQ(code_of([&] { eval::feature_distributions(ds, {"sim_source"}, res); }), ErrorCode::MissingResource);
}

TEST(Reports, BreakdownsAndCsv) {
  using L = StanceLabel;
  std::vector<eval::Prediction> preds{{"b", "t1", "1", 0, L::Support, L::Support},
                                      {"a", "t2", "2", 7, L::Deny, L::Comment},
                                      {"a", "t2", "3", 1, L::Comment, L::Comment}};
  const auto ev = eval::breakdown_by_event(preds);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].group, "a");
  EXPECT_EQ(ev[0].n, 2u);
  const auto dp = eval::breakdown_by_depth(preds);
  ASSERT_EQ(dp.size(), 6u);
  EXPECT_EQ(dp[5].group, "5+");
  EXPECT_EQ(dp[5].n, 1u);
  EXPECT_EQ(dp[2].n, 0u);
  EXPECT_EQ(eval::rows_csv("depth", dp).substr(0, 16), "depth,n,macro_f1");
  const auto conf = eval::confusion_csv(Eigen::Matrix4d::Identity());
  EXPECT_EQ(conf.substr(0, conf.find('\n')), "gold,support,deny,query,comment");
  EXPECT_NE(conf.find("support,1,0,0,0"), std::string::npos);
}

TEST(Synthetic, BalancedThreadsHaveUnitWeights) {
  synth::Options opt;
  opt.mode = synth::LabelMode::BalancedThreads;
  opt.threads_per_event = 5;
  const auto c = synth::generate(opt);
  for (const auto& t : c.dataset.threads) {
    std::array<std::size_t, 4> counts{};
    for (const auto& tw : t.tweets()) ++counts[index_of(*tw.label)];
    EXPECT_EQ(category_weights(counts), Eigen::Vector4d::Ones());
  }
  EXPECT_EQ(synth::generate(opt).dataset.threads, c.dataset.threads);
}
