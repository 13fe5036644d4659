#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "eegtext/sentiment.hpp"
#include "eegtext/synthetic.hpp"

using namespace eegtext;
using namespace eegtext::sentiment;

namespace {

EEGSentenceRecord cluster_record(const std::string& id, const std::vector<double>& center,
                                 SentimentLabel label, Rng& rng, double sigma = 0.1) {
  EEGSentenceRecord rec;
  rec.sentence_id = id;
  rec.subject_id = "S";
  rec.task_id = "SR-v1.0";
  rec.text = "cluster sample " + id;
  rec.sentiment = label;
  for (int w = 0; w < 3; ++w) {
    std::vector<double> v(center.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = center[j] + rng.gaussian(0.0, sigma);
    rec.eeg.push_back(std::move(v));
  }
  return rec;
}

std::vector<EEGSentenceRecord> three_clusters(std::size_t per_class, std::size_t dim,
                                              std::uint64_t seed, double sigma = 0.1) {
  Rng rng(seed);
  std::vector<std::vector<double>> centers(3, std::vector<double>(dim));
  for (auto& c : centers)
    for (double& v : c) v = 3.0 * rng.gaussian();
  std::vector<EEGSentenceRecord> records;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      records.push_back(cluster_record("c" + std::to_string(c) + "_" + std::to_string(i),
                                       centers[c], static_cast<SentimentLabel>(c), rng, sigma));
  return records;
}

TrainConfig classifier_config(double lr, int epochs, int batch = 8,
                              std::uint64_t seed = 312) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.step_size = 1000;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("bin_sst_score follows the stated intervals") {
  CHECK(bin_sst_score(0.1) == SentimentLabel::negative);
  CHECK(bin_sst_score(0.0) == SentimentLabel::negative);
  CHECK(bin_sst_score(0.2) == SentimentLabel::negative);
  CHECK(bin_sst_score(0.5) == SentimentLabel::neutral);
  CHECK(bin_sst_score(0.6) == SentimentLabel::neutral);
  CHECK(bin_sst_score(0.9) == SentimentLabel::positive);
  CHECK(bin_sst_score(1.0) == SentimentLabel::positive);
  CHECK_FALSE(bin_sst_score(0.3).has_value());
  CHECK_FALSE(bin_sst_score(0.4).has_value());
  CHECK_FALSE(bin_sst_score(0.7).has_value());
  CHECK_FALSE(bin_sst_score(0.8).has_value());
  CHECK_THROWS_AS(bin_sst_score(-0.01), DataError);
  CHECK_THROWS_AS(bin_sst_score(1.01), DataError);
}

TEST_CASE("bin_sst_score is total on [0,1] with disjoint inclusion intervals") {
  for (int i = 0; i <= 1000; ++i) {
    const double s = i / 1000.0;
    const auto label = bin_sst_score(s);
    const bool in_neg = s <= 0.2;
    const bool in_neu = s > 0.4 && s <= 0.6;
    const bool in_pos = s > 0.8;
    CHECK(static_cast<int>(in_neg) + static_cast<int>(in_neu) + static_cast<int>(in_pos) <= 1);
    if (in_neg) CHECK(label == SentimentLabel::negative);
    if (in_neu) CHECK(label == SentimentLabel::neutral);
    if (in_pos) CHECK(label == SentimentLabel::positive);
    if (!in_neg && !in_neu && !in_pos) CHECK_FALSE(label.has_value());
  }
}

TEST_CASE("exclude_overlap removes protected texts under normalization") {
  std::vector<LabeledText> external{
      {"A good movie.", SentimentLabel::positive},
      {"utterly bad", SentimentLabel::negative},
      {"plain neutral text", SentimentLabel::neutral},
  };
  CHECK(exclude_overlap(external, {}).size() == 3);

  std::set<std::string> all{"a  GOOD movie.", "UTTERLY   bad", "Plain Neutral Text"};
  CHECK(exclude_overlap(external, all).empty());

  std::set<std::string> some{"  utterly BAD  "};
  auto kept = exclude_overlap(external, some);
  REQUIRE(kept.size() == 2);
  for (const auto& [text, label] : kept)
    for (const auto& prot : some) CHECK(normalize_text(text) != normalize_text(prot));
}

TEST_CASE("classification_report: identity and degenerate predictors") {
  std::vector<SentimentLabel> golds{SentimentLabel::negative, SentimentLabel::neutral,
                                    SentimentLabel::positive, SentimentLabel::negative,
                                    SentimentLabel::neutral,  SentimentLabel::positive};
  auto perfect = classification_report(golds, golds);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  CHECK(perfect.micro_f1 == 1.0);
  for (int c = 0; c < 3; ++c) {
    CHECK(perfect.per_class[c].f1 == 1.0);
    CHECK(perfect.predicted_distribution[c] == perfect.gold_distribution[c]);
  }

  std::vector<SentimentLabel> all_neutral(golds.size(), SentimentLabel::neutral);
  auto biased = classification_report(all_neutral, golds);
  CHECK(biased.accuracy == doctest::Approx(1.0 / 3.0));
  CHECK(biased.per_class[1].recall == 1.0);
  CHECK(biased.per_class[0].recall == 0.0);
  CHECK(biased.per_class[2].recall == 0.0);
  CHECK(biased.predicted_distribution[1] == golds.size());
}

TEST_CASE("classification_report matches a confusion-matrix oracle on random cases") {
  Rng rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SentimentLabel> preds, golds;
    for (int i = 0; i < 30; ++i) {
      preds.push_back(static_cast<SentimentLabel>(rng.below(3)));
      golds.push_back(static_cast<SentimentLabel>(rng.below(3)));
    }
    auto report = classification_report(preds, golds);

    // independent recomputation
    double macro = 0.0;
    std::size_t correct = 0;
    for (int c = 0; c < 3; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < 30; ++i) {
        const bool pc = static_cast<int>(preds[i]) == c;
        const bool gc = static_cast<int>(golds[i]) == c;
        tp += pc && gc;
        fp += pc && !gc;
        fn += !pc && gc;
      }
      const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
      CHECK(std::abs(report.per_class[c].precision - precision) < 1e-12);
      CHECK(std::abs(report.per_class[c].recall - recall) < 1e-12);
      CHECK(std::abs(report.per_class[c].f1 - f1) < 1e-12);
      macro += f1;
      correct += static_cast<std::size_t>(tp);
    }
    CHECK(std::abs(report.macro_f1 - macro / 3.0) < 1e-12);
    CHECK(std::abs(report.accuracy - correct / 30.0) < 1e-12);
  }
}

TEST_CASE("macro-F1 is invariant under consistent relabeling") {
  Rng rng(31);
  std::vector<SentimentLabel> preds, golds;
  for (int i = 0; i < 40; ++i) {
    preds.push_back(static_cast<SentimentLabel>(rng.below(3)));
    golds.push_back(static_cast<SentimentLabel>(rng.below(3)));
  }
  const double base = classification_report(preds, golds).macro_f1;
  const std::array<int, 3> perm{2, 0, 1};
  std::vector<SentimentLabel> p2, g2;
  for (int i = 0; i < 40; ++i) {
    p2.push_back(static_cast<SentimentLabel>(perm[static_cast<int>(preds[i])]));
    g2.push_back(static_cast<SentimentLabel>(perm[static_cast<int>(golds[i])]));
  }
  CHECK(classification_report(p2, g2).macro_f1 == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("bag-of-words classifier learns simple sentiment and emits probabilities") {
  std::vector<LabeledText> data{
      {"great wonderful fun", SentimentLabel::positive},
      {"wonderful lovely film", SentimentLabel::positive},
      {"terrible awful mess", SentimentLabel::negative},
      {"awful boring mess", SentimentLabel::negative},
      {"it is a film", SentimentLabel::neutral},
      {"this is a movie", SentimentLabel::neutral},
  };
  BagOfWordsClassifier clf;
  clf.train(data);
  CHECK(clf.predict("a wonderful fun film").label == SentimentLabel::positive);
  CHECK(clf.predict("an awful boring film").label == SentimentLabel::negative);

  for (const auto& text : {"great", "awful", "unseen words entirely"}) {
    const auto pred = clf.predict(text);
    CHECK(std::abs(pred.probs[0] + pred.probs[1] + pred.probs[2] - 1.0) < 1e-6);
  }
  CHECK(clf.provenance.trained_on == "external_text");
  CHECK(clf.provenance.contains_text("GREAT wonderful   fun"));

  // artifact round trip preserves behavior
  auto json = clf.to_json();
  auto loaded = BagOfWordsClassifier::from_json(json);
  const auto a = clf.predict("a wonderful fun film");
  const auto b = loaded->predict("a wonderful fun film");
  CHECK(a.label == b.label);
  for (int c = 0; c < 3; ++c) CHECK(a.probs[c] == doctest::Approx(b.probs[c]).epsilon(1e-12));
}

TEST_CASE("keyword rule classifier is deterministic and normalized") {
  KeywordRuleClassifier rule({"good", "great"}, {"bad", "awful"});
  CHECK(rule.predict("a good great day").label == SentimentLabel::positive);
  CHECK(rule.predict("a bad day").label == SentimentLabel::negative);
  CHECK(rule.predict("nothing at all").label == SentimentLabel::neutral);
  CHECK(rule.predict("good and bad").label == SentimentLabel::neutral);
  const auto pred = rule.predict("good good bad");
  CHECK(std::abs(pred.probs[0] + pred.probs[1] + pred.probs[2] - 1.0) < 1e-9);
  CHECK(pred.label == SentimentLabel::positive);
  CHECK(pred.probs[2] > pred.probs[0]);
}

TEST_CASE("MLP baseline separates three Gaussian clusters") {
  auto records = three_clusters(20, 10, 41);
  EEGClassifierConfig cfg;
  cfg.kind = EEGClassifierKind::mlp;
  cfg.input_dim = 10;
  cfg.hidden = 16;
  auto result = train_eeg_baseline(cfg, records, classifier_config(0.5, 30));
  CHECK(result.warnings.empty());

  std::size_t correct = 0;
  for (const auto& rec : records)
    correct += result.classifier->predict(rec).label == *rec.sentiment;
  CHECK(static_cast<double>(correct) / static_cast<double>(records.size()) >= 0.95);

  const auto pred = result.classifier->predict(records.front());
  CHECK(std::abs(pred.probs[0] + pred.probs[1] + pred.probs[2] - 1.0) < 1e-6);
}

TEST_CASE("zero learning rate leaves classifier predictions unchanged") {
  auto records = three_clusters(4, 6, 42);
  EEGClassifierConfig cfg;
  cfg.kind = EEGClassifierKind::mlp;
  cfg.input_dim = 6;
  cfg.hidden = 8;

  EEGClassifier before(cfg);
  std::vector<EEGPrediction> initial;
  for (const auto& rec : records) initial.push_back(before.predict(rec));

  auto result = train_eeg_baseline(cfg, records, classifier_config(0.0, 3));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto after = result.classifier->predict(records[i]);
    CHECK(after.label == initial[i].label);
    for (int c = 0; c < 3; ++c) CHECK(after.probs[c] == initial[i].probs[c]);
  }
}

TEST_CASE("label-shuffled training stays at chance on dev") {
  double acc_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 1000 + 7);
    auto train = three_clusters(15, 6, seed);
    auto dev = three_clusters(10, 6, seed + 50);
    for (auto& rec : train) rec.sentiment = static_cast<SentimentLabel>(rng.below(3));
    for (auto& rec : dev) rec.sentiment = static_cast<SentimentLabel>(rng.below(3));

    EEGClassifierConfig cfg;
    cfg.kind = EEGClassifierKind::mlp;
    cfg.input_dim = 6;
    cfg.hidden = 8;
    cfg.seed = seed;
    auto result = train_eeg_baseline(cfg, train, classifier_config(0.2, 10, 8, seed));
    std::size_t correct = 0;
    for (const auto& rec : dev) correct += result.classifier->predict(rec).label == *rec.sentiment;
    acc_sum += static_cast<double>(correct) / static_cast<double>(dev.size());
  }
  const double mean_acc = acc_sum / 5.0;
  CHECK(mean_acc > 1.0 / 3.0 - 0.15);
  CHECK(mean_acc < 1.0 / 3.0 + 0.15);
}

TEST_CASE("BiLSTM and encoder baselines train and emit normalized probabilities") {
  auto records = three_clusters(6, 8, 43);
  for (auto kind : {EEGClassifierKind::bilstm, EEGClassifierKind::encoder}) {
    EEGClassifierConfig cfg;
    cfg.kind = kind;
    cfg.input_dim = 8;
    cfg.hidden = 8;
    cfg.ff_dim = 16;
    auto result = train_eeg_baseline(cfg, records, classifier_config(0.1, 4, 6));
    CHECK(result.log.size() == 4);
    CHECK(result.log.back().train_loss < result.log.front().train_loss + 1e-9);
    const auto pred = result.classifier->predict(records[1]);
    CHECK(std::abs(pred.probs[0] + pred.probs[1] + pred.probs[2] - 1.0) < 1e-6);
  }
}

TEST_CASE("train_eeg_baseline warns when a class is absent") {
  auto records = three_clusters(4, 6, 44);
  std::vector<EEGSentenceRecord> two_class;
  for (const auto& rec : records)
    if (*rec.sentiment != SentimentLabel::positive) two_class.push_back(rec);
  EEGClassifierConfig cfg;
  cfg.kind = EEGClassifierKind::mlp;
  cfg.input_dim = 6;
  cfg.hidden = 8;
  auto result = train_eeg_baseline(cfg, two_class, classifier_config(0.1, 2));
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("class 2") != std::string::npos);

  EEGSentenceRecord unlabeled = records.front();
  unlabeled.sentiment.reset();
  CHECK_THROWS_AS(train_eeg_baseline(cfg, {unlabeled}, classifier_config(0.1, 1)), DataError);
}

TEST_CASE("zero-shot pipeline equals direct classification with a stub decoder") {
  std::vector<LabeledText> external{
      {"great wonderful fun", SentimentLabel::positive},
      {"terrible awful mess", SentimentLabel::negative},
      {"it is a film", SentimentLabel::neutral},
      {"lovely charming piece", SentimentLabel::positive},
      {"dull awful bore", SentimentLabel::negative},
  };
  BagOfWordsClassifier clf;
  clf.train(external);

  IdentityStubDecoder stub;
  Rng rng(45);
  std::vector<std::string> eval_texts{"wonderful charming fun", "awful dull mess",
                                      "a film it is", "great lovely day"};
  for (const auto& text : eval_texts) {
    EEGSentenceRecord rec;
    rec.sentence_id = "zs";
    rec.subject_id = "S";
    rec.task_id = "SR-v1.0";
    rec.text = text;
    rec.eeg.push_back(std::vector<double>(4, rng.gaussian()));
    const auto pipeline = zero_shot_classify(stub, clf, rec);
    const auto direct = clf.predict(text);
    CHECK(pipeline.label == direct.label);
    for (int c = 0; c < 3; ++c) CHECK(pipeline.probs[c] == direct.probs[c]);
    CHECK(pipeline.decoded_text == text);
  }
}

TEST_CASE("zero-shot provenance enforcement refuses tainted classifiers") {
  EEGSentenceRecord rec;
  rec.sentence_id = "p";
  rec.subject_id = "S";
  rec.task_id = "SR-v1.0";
  rec.text = "the protected sentence";
  rec.eeg.push_back({0.0, 0.0});

  // classifier trained on the evaluated sentence
  BagOfWordsClassifier tainted;
  tainted.train({{"The  PROTECTED sentence", SentimentLabel::neutral},
                 {"something else", SentimentLabel::positive}});
  IdentityStubDecoder stub;
  CHECK_THROWS_WITH_AS(zero_shot_classify(stub, tainted, rec),
                       doctest::Contains("provenance"), ConfigError);

  // classifier overlapping the decoder's training corpus
  BagOfWordsClassifier overlapping;
  overlapping.train({{"a decoder training line", SentimentLabel::positive},
                     {"unrelated line", SentimentLabel::negative}});
  IdentityStubDecoder decoder_with_corpus;
  decoder_with_corpus.mutable_provenance().record_text("a DECODER training line");
  CHECK_THROWS_WITH_AS(zero_shot_classify(decoder_with_corpus, overlapping, rec),
                       doctest::Contains("overlap"), ConfigError);

  // decoder with the wrong provenance tag
  BagOfWordsClassifier clean;
  clean.train({{"independent text", SentimentLabel::neutral},
               {"another line", SentimentLabel::positive}});
  IdentityStubDecoder wrong;
  wrong.mutable_provenance().trained_on = "eeg_sentiment";
  CHECK_THROWS_WITH_AS(zero_shot_classify(wrong, clean, rec),
                       doctest::Contains("provenance"), ConfigError);

  // clean setup runs
  CHECK_NOTHROW(zero_shot_classify(stub, clean, rec));
}

TEST_CASE("swapping classifiers changes only the classification stage") {
  BagOfWordsClassifier a;
  a.train({{"great stuff", SentimentLabel::positive}, {"bad stuff", SentimentLabel::negative}});
  KeywordRuleClassifier b({"great"}, {"bad"});

  IdentityStubDecoder stub;
  EEGSentenceRecord rec;
  rec.sentence_id = "m";
  rec.subject_id = "S";
  rec.task_id = "SR-v1.0";
  rec.text = "a great outcome";
  rec.eeg.push_back({0.1, 0.2});

  const auto with_a = zero_shot_classify(stub, a, rec);
  const auto with_b = zero_shot_classify(stub, b, rec);
  CHECK(with_a.decoded_text == with_b.decoded_text);
  CHECK(with_a.decode_strategy == with_b.decode_strategy);
}

TEST_CASE("perfect-decoder reduction: pipeline macro-F1 equals direct classification") {
  SyntheticEncoderConfig scfg;
  scfg.vocab = numbered_vocab(20);
  scfg.noise_sigma = 0.0;
  scfg.seed = 46;
  scfg.feature_dim = 8;
  auto records = generate_synthetic_corpus(scfg, 40, {3, 7});

  KeywordRuleClassifier rule({"w00", "w01", "w02"}, {"w03", "w04", "w05"});
  // gold labels via an independent convention: parity of first token index
  Rng rng(47);
  std::vector<SentimentLabel> golds;
  for (auto& rec : records) {
    golds.push_back(static_cast<SentimentLabel>(rng.below(3)));
    rec.sentiment = golds.back();
  }

  IdentityStubDecoder stub;
  std::vector<SentimentLabel> pipeline_preds, direct_preds;
  for (const auto& rec : records) {
    pipeline_preds.push_back(zero_shot_classify(stub, rule, rec).label);
    direct_preds.push_back(rule.predict(rec.text).label);
  }
  const auto pipeline_report = classification_report(pipeline_preds, golds);
  const auto direct_report = classification_report(direct_preds, golds);
  CHECK(pipeline_report.macro_f1 == doctest::Approx(direct_report.macro_f1).epsilon(1e-15));
  CHECK(pipeline_report.accuracy == doctest::Approx(direct_report.accuracy).epsilon(1e-15));
}
