#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "eegtext/data.hpp"
#include "eegtext/errors.hpp"
#include "eegtext/metrics.hpp"
#include "eegtext/nn.hpp"
#include "eegtext/trainer.hpp"
#include "eegtext/translator.hpp"

namespace eegtext::sentiment {

// SST score binning: [0,0.2] negative, (0.4,0.6] neutral, (0.8,1.0] positive;
// anything else is excluded from the corpus.
inline std::optional<SentimentLabel> bin_sst_score(double score) {
  if (!(score >= 0.0 && score <= 1.0))
    throw DataError("sentiment score outside [0,1]: " + std::to_string(score));
  if (score <= 0.2) return SentimentLabel::negative;
  if (score > 0.4 && score <= 0.6) return SentimentLabel::neutral;
  if (score > 0.8) return SentimentLabel::positive;
  return std::nullopt;
}

using LabeledText = std::pair<std::string, SentimentLabel>;

// Drops external sentences whose normalized text appears in the protected
// set (the EEG corpus the decoder saw).
inline std::vector<LabeledText> exclude_overlap(const std::vector<LabeledText>& external,
                                                const std::set<std::string>& protected_texts) {
  std::set<std::string> normalized;
  for (const auto& t : protected_texts) normalized.insert(normalize_text(t));
  std::vector<LabeledText> kept;
  kept.reserve(external.size());
  for (const auto& item : external)
    if (!normalized.count(normalize_text(item.first))) kept.push_back(item);
  return kept;
}

struct TextPrediction {
  SentimentLabel label = SentimentLabel::neutral;
  std::array<double, 3> probs{};
};

class TextClassifier {
 public:
  virtual ~TextClassifier() = default;
  virtual void train(const std::vector<LabeledText>& data) = 0;
  virtual TextPrediction predict(const std::string& text) const = 0;
  virtual std::string name() const = 0;

  Provenance provenance;
};

// Bag-of-words softmax regression; the deterministic test-grade stand-in for
// the pretrained sequence classifiers.
class BagOfWordsClassifier : public TextClassifier {
 public:
  explicit BagOfWordsClassifier(int epochs = 200, double lr = 0.5)
      : epochs_(epochs), lr_(lr) {}

  void train(const std::vector<LabeledText>& data) override {
    if (data.empty()) throw DataError("text classifier needs training data");
    provenance.trained_on = "external_text";
    vocab_.clear();
    for (const auto& [text, label] : data) {
      provenance.record_text(text);
      for (const auto& tok : metrics::tokenize(text))
        vocab_.emplace(tok, 0);
    }
    std::size_t idx = 0;
    for (auto& [tok, id] : vocab_) id = idx++;

    const std::size_t v = vocab_.size();
    weights_.assign(v * 3, 0.0);
    bias_.assign(3, 0.0);

    std::vector<std::vector<std::pair<std::size_t, double>>> features;
    features.reserve(data.size());
    for (const auto& [text, label] : data) features.push_back(featurize(text));

    for (int epoch = 0; epoch < epochs_; ++epoch) {
      std::vector<double> w_grad(v * 3, 0.0), b_grad(3, 0.0);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto p = scores(features[i]);
        for (int c = 0; c < 3; ++c) {
          const double err = p[c] - (static_cast<int>(data[i].second) == c ? 1.0 : 0.0);
          b_grad[c] += err;
          for (const auto& [fi, fv] : features[i]) w_grad[fi * 3 + c] += err * fv;
        }
      }
      const double scale = lr_ / static_cast<double>(data.size());
      for (std::size_t k = 0; k < w_grad.size(); ++k) weights_[k] -= scale * w_grad[k];
      for (int c = 0; c < 3; ++c) bias_[c] -= scale * b_grad[c];
    }
  }

  TextPrediction predict(const std::string& text) const override {
    const auto p = scores(featurize(text));
    TextPrediction out;
    out.probs = p;
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (p[c] > p[best]) best = c;
    out.label = static_cast<SentimentLabel>(best);
    return out;
  }

  std::string name() const override { return "bow-logistic"; }

  nlohmann::ordered_json to_json() const {
    std::vector<std::string> tokens(vocab_.size());
    for (const auto& [tok, id] : vocab_) tokens[id] = tok;
    std::vector<std::string> hashes;
    for (std::uint64_t h : provenance.text_hashes) hashes.push_back(std::to_string(h));
    return {{"kind", name()},
            {"vocab", tokens},
            {"weights", weights_},
            {"bias", bias_},
            {"provenance", {{"trained_on", provenance.trained_on}, {"text_hashes", hashes}}}};
  }

  static std::shared_ptr<BagOfWordsClassifier> from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "bow-logistic")
      throw ConfigError("unknown classifier kind: " + j.at("kind").get<std::string>());
    auto clf = std::make_shared<BagOfWordsClassifier>();
    const auto tokens = j.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < tokens.size(); ++i) clf->vocab_[tokens[i]] = i;
    clf->weights_ = j.at("weights").get<std::vector<double>>();
    clf->bias_ = j.at("bias").get<std::vector<double>>();
    clf->provenance.trained_on = j.at("provenance").at("trained_on").get<std::string>();
    for (const auto& h : j.at("provenance").at("text_hashes"))
      clf->provenance.text_hashes.insert(std::stoull(h.get<std::string>()));
    if (clf->weights_.size() != tokens.size() * 3 || clf->bias_.size() != 3)
      throw ConfigError("classifier artifact has inconsistent shapes");
    return clf;
  }

 private:
  std::vector<std::pair<std::size_t, double>> featurize(const std::string& text) const {
    std::unordered_map<std::size_t, double> counts;
    const auto toks = metrics::tokenize(text);
    for (const auto& tok : toks) {
      auto it = vocab_.find(tok);
      if (it != vocab_.end()) counts[it->second] += 1.0;
    }
    std::vector<std::pair<std::size_t, double>> out(counts.begin(), counts.end());
    std::sort(out.begin(), out.end());
    if (!toks.empty())
      for (auto& [fi, fv] : out) fv /= static_cast<double>(toks.size());
    return out;
  }

  std::array<double, 3> scores(const std::vector<std::pair<std::size_t, double>>& feats) const {
    std::array<double, 3> z = {bias_[0], bias_[1], bias_[2]};
    for (const auto& [fi, fv] : feats)
      for (int c = 0; c < 3; ++c) z[c] += weights_[fi * 3 + c] * fv;
    const double mx = std::max({z[0], z[1], z[2]});
    double sum = 0.0;
    for (double& x : z) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (double& x : z) x /= sum;
    return z;
  }

  std::unordered_map<std::string, std::size_t> vocab_;
  std::vector<double> weights_;  // vocab x 3
  std::vector<double> bias_;
  int epochs_;
  double lr_;
};

// Fixed keyword rule; needs no training at all, so its provenance is empty
// by construction.
class KeywordRuleClassifier : public TextClassifier {
 public:
  KeywordRuleClassifier(std::set<std::string> positive, std::set<std::string> negative)
      : positive_(std::move(positive)), negative_(std::move(negative)) {
    provenance.trained_on = "external_text";
  }

  void train(const std::vector<LabeledText>& data) override {
    for (const auto& [text, label] : data) provenance.record_text(text);
  }

  TextPrediction predict(const std::string& text) const override {
    int pos = 0, neg = 0;
    for (const auto& tok : metrics::tokenize(text)) {
      pos += positive_.count(tok) > 0;
      neg += negative_.count(tok) > 0;
    }
    TextPrediction out;
    if (pos > neg)
      out.label = SentimentLabel::positive;
    else if (neg > pos)
      out.label = SentimentLabel::negative;
    else
      out.label = SentimentLabel::neutral;
    std::array<double, 3> w = {1.0, 1.0, 1.0};
    w[static_cast<int>(out.label)] += 2.0 + std::abs(pos - neg);
    const double sum = w[0] + w[1] + w[2];
    for (double& x : w) x /= sum;
    out.probs = w;
    return out;
  }

  std::string name() const override { return "keyword-rule"; }

 private:
  std::set<std::string> positive_, negative_;
};

// ---- supervised EEG baselines --------------------------------------------

enum class EEGClassifierKind { mlp, bilstm, encoder };

inline std::string to_string(EEGClassifierKind kind) {
  switch (kind) {
    case EEGClassifierKind::mlp: return "mlp";
    case EEGClassifierKind::bilstm: return "bilstm";
    default: return "encoder";
  }
}

inline EEGClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "mlp") return EEGClassifierKind::mlp;
  if (s == "bilstm") return EEGClassifierKind::bilstm;
  if (s == "encoder") return EEGClassifierKind::encoder;
  throw ConfigError("unknown EEG classifier kind: " + s);
}

// Reference learning rates for the supervised baselines.
inline double default_baseline_lr(EEGClassifierKind kind) {
  return kind == EEGClassifierKind::encoder ? 5e-5 : 1e-3;
}

struct EEGClassifierConfig {
  EEGClassifierKind kind = EEGClassifierKind::mlp;
  std::size_t input_dim = kFeatureDim;
  std::size_t hidden = 64;
  std::size_t encoder_layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 128;
  double dropout = 0.2;
  std::uint64_t seed = 312;
};

struct EEGPrediction {
  SentimentLabel label = SentimentLabel::neutral;
  std::array<double, 3> probs{};
};

class EEGClassifier {
 public:
  explicit EEGClassifier(EEGClassifierConfig cfg) : cfg_(cfg) {
    Rng rng(cfg_.seed);
    switch (cfg_.kind) {
      case EEGClassifierKind::mlp:
        fc1_ = nn::Linear("mlp.fc1", cfg_.input_dim, cfg_.hidden, rng);
        fc2_ = nn::Linear("mlp.fc2", cfg_.hidden, cfg_.hidden, rng);
        head_ = nn::Linear("mlp.head", cfg_.hidden, 3, rng);
        break;
      case EEGClassifierKind::bilstm:
        // four stacked bidirectional layers, one-layer head
        lstm_ = nn::BiLstm("bilstm", 4, cfg_.input_dim, cfg_.hidden, rng);
        head_ = nn::Linear("bilstm.head", 2 * cfg_.hidden, 3, rng);
        break;
      case EEGClassifierKind::encoder:
        input_proj_ = nn::Linear("encoder.input_proj", cfg_.input_dim, cfg_.hidden, rng);
        encoder_ = nn::TransformerEncoder("encoder.mte", cfg_.encoder_layers, cfg_.hidden,
                                          cfg_.heads, cfg_.ff_dim, rng);
        head_ = nn::Linear("encoder.head", cfg_.hidden, 3, rng);
        break;
    }
  }

  const EEGClassifierConfig& config() const { return cfg_; }

  ag::Var logits_graph(const EEGSentenceRecord& rec, Rng* dropout_rng = nullptr) {
    switch (cfg_.kind) {
      case EEGClassifierKind::mlp: {
        Matrix avg = Matrix::row_vector(average_sentence_feature(rec));
        ag::Var h = ag::relu(fc1_(ag::constant(std::move(avg))));
        h = ag::relu(fc2_(h));
        if (dropout_rng) h = ag::dropout(h, cfg_.dropout, *dropout_rng, true);
        return head_(h);
      }
      case EEGClassifierKind::bilstm: {
        ag::Var seq = lstm_(ag::constant(eeg_matrix(rec)));
        const std::size_t len = seq->val().rows(), h = cfg_.hidden;
        // final forward state lives at the last row, final backward at row 0
        ag::Var fwd = ag::slice_cols(ag::slice_rows(seq, len - 1, len), 0, h);
        ag::Var bwd = ag::slice_cols(ag::slice_rows(seq, 0, 1), h, 2 * h);
        return head_(ag::concat_cols({fwd, bwd}));
      }
      default: {
        ag::Var x = input_proj_(ag::constant(eeg_matrix(rec)));
        x = encoder_(nn::add_positions(x), {});
        // last hidden state pooling
        ag::Var last = ag::slice_rows(x, x->val().rows() - 1, x->val().rows());
        return head_(last);
      }
    }
  }

  EEGPrediction predict(const EEGSentenceRecord& rec) {
    const Matrix logits = logits_graph(rec)->val();
    EEGPrediction out;
    const double mx = std::max({logits(0, 0), logits(0, 1), logits(0, 2)});
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
      out.probs[c] = std::exp(logits(0, c) - mx);
      sum += out.probs[c];
    }
    int best = 0;
    for (int c = 0; c < 3; ++c) {
      out.probs[c] /= sum;
      if (out.probs[c] > out.probs[best]) best = c;
    }
    out.label = static_cast<SentimentLabel>(best);
    return out;
  }

  void collect_params(std::vector<ag::Param*>& out) {
    switch (cfg_.kind) {
      case EEGClassifierKind::mlp:
        fc1_.collect(out);
        fc2_.collect(out);
        head_.collect(out);
        break;
      case EEGClassifierKind::bilstm:
        lstm_.collect(out);
        head_.collect(out);
        break;
      case EEGClassifierKind::encoder:
        input_proj_.collect(out);
        encoder_.collect(out);
        head_.collect(out);
        break;
    }
  }

 private:
  EEGClassifierConfig cfg_;
  nn::Linear fc1_, fc2_, head_, input_proj_;
  nn::BiLstm lstm_;
  nn::TransformerEncoder encoder_;
};

struct BaselineTrainResult {
  std::shared_ptr<EEGClassifier> classifier;
  std::vector<TrainLogEntry> log;
  std::vector<std::string> warnings;
  int best_epoch = -1;
};

// Cross-entropy training with the decoder trainer's loop rules: seeded
// shuffle, StepLR, best dev epoch with earliest-tie selection.
inline BaselineTrainResult train_eeg_baseline(const EEGClassifierConfig& cfg,
                                              const std::vector<EEGSentenceRecord>& records,
                                              const TrainConfig& train_cfg,
                                              const std::vector<EEGSentenceRecord>& dev = {}) {
  train_cfg.validate();
  if (records.empty()) throw DataError("no labeled records to train on");
  for (const auto& rec : records)
    if (!rec.sentiment)
      throw DataError("record " + rec.sentence_id + " is missing a sentiment label");

  BaselineTrainResult result;
  std::array<std::size_t, 3> class_counts{};
  for (const auto& rec : records) ++class_counts[static_cast<int>(*rec.sentiment)];
  for (int c = 0; c < 3; ++c)
    if (class_counts[c] == 0)
      result.warnings.push_back("class " + std::to_string(c) + " absent from training data");

  result.classifier = std::make_shared<EEGClassifier>(cfg);
  std::vector<ag::Param*> params;
  result.classifier->collect_params(params);

  SgdOptimizer opt;
  opt.momentum = train_cfg.momentum;
  opt.clip_norm = train_cfg.clip_norm;
  Rng shuffle_rng(train_cfg.seed);
  Rng dropout_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  auto dev_value = [&](const std::vector<EEGSentenceRecord>& set) {
    double loss = 0.0;
    for (const auto& rec : set) {
      const Matrix logits = result.classifier->logits_graph(rec)->val();
      loss += reconstruction_loss(logits, {static_cast<int>(*rec.sentiment)}, {true});
    }
    return loss / static_cast<double>(set.size());
  };

  std::vector<Matrix> best_params;
  double best = 0.0;
  bool has_best = false;
  std::vector<std::size_t> order(records.size());

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const double lr = step_lr(train_cfg.learning_rate, train_cfg.gamma, train_cfg.step_size, epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
      for (auto* p : params) p->zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& rec = records[order[k]];
        ag::Var logits = result.classifier->logits_graph(rec, &dropout_rng);
        ag::Var loss = ag::cross_entropy_with_logits(
            logits, {static_cast<int>(*rec.sentiment)}, {true});
        const double value = loss->val()(0, 0);
        if (!std::isfinite(value))
          throw NumericError("non-finite classifier loss at epoch " + std::to_string(epoch) +
                             ", sentence " + rec.sentence_id);
        loss_sum += value;
        ag::backward(loss, 1.0 / static_cast<double>(end - start));
      }
      opt.step(params, lr);
    }

    const double train_loss = loss_sum / static_cast<double>(records.size());
    const double metric = dev.empty() ? train_loss : dev_value(dev);
    if (!has_best || metric < best) {
      best = metric;
      has_best = true;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto* p : params) best_params.push_back(p->value);
    }

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = train_loss;
    entry.dev_metric = metric;
    entry.lr = lr;
    result.log.push_back(entry);
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  return result;
}

// ---- zero-shot pipeline ----------------------------------------------------

// Decoding stage abstraction so the pipeline composes with either the real
// translator or a stub.
class TextDecoder {
 public:
  virtual ~TextDecoder() = default;
  virtual GenerationResult decode(const EEGSentenceRecord& rec) = 0;
  virtual const Provenance& provenance() const = 0;
  virtual std::string name() const = 0;
};

class TranslatorDecoder : public TextDecoder {
 public:
  explicit TranslatorDecoder(std::shared_ptr<BrainTranslator> model) : model_(std::move(model)) {}
  GenerationResult decode(const EEGSentenceRecord& rec) override { return model_->generate(rec); }
  const Provenance& provenance() const override { return model_->provenance; }
  std::string name() const override { return "brain-translator"; }

 private:
  std::shared_ptr<BrainTranslator> model_;
};

// Emits the ground-truth text; composition tests use it as a perfect decoder.
class IdentityStubDecoder : public TextDecoder {
 public:
  IdentityStubDecoder() { provenance_.trained_on = "eeg_text"; }
  GenerationResult decode(const EEGSentenceRecord& rec) override {
    GenerationResult out;
    out.text = rec.text;
    out.strategy = "identity-stub";
    return out;
  }
  const Provenance& provenance() const override { return provenance_; }
  std::string name() const override { return "identity-stub"; }
  Provenance& mutable_provenance() { return provenance_; }

 private:
  Provenance provenance_;
};

struct ZeroShotResult {
  SentimentLabel label = SentimentLabel::neutral;
  std::array<double, 3> probs{};
  std::string decoded_text;
  std::string decode_strategy;
};

// Refuses to run unless the decoder saw only EEG-Text pairs and the
// classifier saw only external texts disjoint from the EEG corpus.
inline void enforce_zero_shot_provenance(const TextDecoder& decoder,
                                         const TextClassifier& classifier,
                                         const std::string& eval_text) {
  if (decoder.provenance().trained_on != "eeg_text")
    throw ConfigError("zero-shot provenance violation: decoder was trained on '" +
                      decoder.provenance().trained_on + "', expected EEG-Text pairs only");
  if (classifier.provenance.trained_on != "external_text")
    throw ConfigError("zero-shot provenance violation: classifier was trained on '" +
                      classifier.provenance.trained_on + "', expected external text");
  if (classifier.provenance.contains_text(eval_text))
    throw ConfigError("zero-shot provenance violation: classifier saw the evaluated sentence");
  for (std::uint64_t h : decoder.provenance().text_hashes)
    if (classifier.provenance.text_hashes.count(h))
      throw ConfigError(
          "zero-shot provenance violation: classifier training texts overlap the decoder corpus");
}

inline ZeroShotResult zero_shot_classify(TextDecoder& decoder, const TextClassifier& classifier,
                                         const EEGSentenceRecord& rec) {
  enforce_zero_shot_provenance(decoder, classifier, rec.text);
  const GenerationResult decoded = decoder.decode(rec);
  const TextPrediction pred = classifier.predict(decoded.text);
  ZeroShotResult out;
  out.label = pred.label;
  out.probs = pred.probs;
  out.decoded_text = decoded.text;
  out.decode_strategy = decoded.strategy;
  return out;
}

// ---- classification reporting ---------------------------------------------

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::array<ClassScore, 3> per_class{};
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
  std::array<std::size_t, 3> predicted_distribution{};
  std::array<std::size_t, 3> gold_distribution{};
  std::size_t n = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    static const char* names[3] = {"negative", "neutral", "positive"};
    for (int c = 0; c < 3; ++c)
      per.push_back({{"class", names[c]},
                     {"precision", per_class[c].precision},
                     {"recall", per_class[c].recall},
                     {"f1", per_class[c].f1}});
    return {{"per_class", per},
            {"macro_f1", macro_f1},
            {"micro_f1", micro_f1},
            {"accuracy", accuracy},
            {"predicted_distribution", predicted_distribution},
            {"gold_distribution", gold_distribution},
            {"n", n}};
  }
};

inline ClassificationReport classification_report(const std::vector<SentimentLabel>& predictions,
                                                  const std::vector<SentimentLabel>& golds) {
  if (predictions.size() != golds.size())
    throw DataError("classification_report: prediction/gold count mismatch");
  if (predictions.empty()) throw DataError("classification_report: empty input");

  ClassificationReport report;
  report.n = predictions.size();
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][pred]
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ++confusion[static_cast<int>(golds[i])][static_cast<int>(predictions[i])];
    ++report.predicted_distribution[static_cast<int>(predictions[i])];
    ++report.gold_distribution[static_cast<int>(golds[i])];
  }

  std::size_t correct = 0;
  for (int c = 0; c < 3; ++c) correct += confusion[c][c];
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
  report.micro_f1 = report.accuracy;  // single-label multiclass: micro-F1 == accuracy

  double macro_sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double tp = static_cast<double>(confusion[c][c]);
    const double pred_c = static_cast<double>(report.predicted_distribution[c]);
    const double gold_c = static_cast<double>(report.gold_distribution[c]);
    ClassScore& s = report.per_class[c];
    s.precision = pred_c > 0 ? tp / pred_c : 0.0;
    s.recall = gold_c > 0 ? tp / gold_c : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
    macro_sum += s.f1;
  }
  report.macro_f1 = macro_sum / 3.0;
  return report;
}

}  // namespace eegtext::sentiment
