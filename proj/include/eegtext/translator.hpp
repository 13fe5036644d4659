#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegtext/backbone.hpp"
#include "eegtext/data.hpp"
#include "eegtext/errors.hpp"
#include "eegtext/nn.hpp"

namespace eegtext {

struct DecodeStrategy {
  enum class Kind { greedy, beam };
  Kind kind = Kind::greedy;
  int beam_width = 5;

  static DecodeStrategy greedy() { return {}; }
  static DecodeStrategy beam(int width) {
    DecodeStrategy s;
    s.kind = Kind::beam;
    s.beam_width = width;
    return s;
  }
  static DecodeStrategy parse(const std::string& text) {
    if (text == "greedy") return greedy();
    if (text.rfind("beam(", 0) == 0 && text.back() == ')') {
      const int k = std::stoi(text.substr(5, text.size() - 6));
      if (k < 1) throw ConfigError("beam width must be >= 1");
      return beam(k);
    }
    throw ConfigError("unknown decode strategy: " + text);
  }
  std::string to_string() const {
    return kind == Kind::greedy ? "greedy" : "beam(" + std::to_string(beam_width) + ")";
  }
};

struct TranslatorConfig {
  std::size_t input_dim = kFeatureDim;
  std::size_t backbone_hidden = 1024;
  std::size_t mte_layers = 6;
  std::size_t mte_heads = 8;
  std::size_t mte_ff_dim = 2048;
  std::size_t vocab_size = 50265;
  std::size_t max_target_len = 64;
  DecodeStrategy decode = DecodeStrategy::beam(5);  // reported scores; tests pick greedy
  bool use_mte = true;  // ablation switch: false drops the transformer encoder
  std::uint64_t init_seed = 312;

  void validate() const {
    if (input_dim == 0 || backbone_hidden == 0 || mte_ff_dim == 0 || vocab_size == 0 ||
        max_target_len == 0)
      throw ConfigError("translator dimensions must be positive");
    if (use_mte && (mte_heads == 0 || input_dim % mte_heads != 0))
      throw ConfigError("input_dim must be divisible by mte_heads");
  }

  nlohmann::ordered_json to_json() const {
    return {{"input_dim", input_dim},
            {"backbone_hidden", backbone_hidden},
            {"mte_layers", mte_layers},
            {"mte_heads", mte_heads},
            {"mte_ff_dim", mte_ff_dim},
            {"vocab_size", vocab_size},
            {"max_target_len", max_target_len},
            {"decode", decode.to_string()},
            {"use_mte", use_mte},
            {"init_seed", init_seed}};
  }
  static TranslatorConfig from_json(const nlohmann::json& j) {
    TranslatorConfig cfg;
    cfg.input_dim = j.at("input_dim").get<std::size_t>();
    cfg.backbone_hidden = j.at("backbone_hidden").get<std::size_t>();
    cfg.mte_layers = j.at("mte_layers").get<std::size_t>();
    cfg.mte_heads = j.at("mte_heads").get<std::size_t>();
    cfg.mte_ff_dim = j.at("mte_ff_dim").get<std::size_t>();
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.max_target_len = j.at("max_target_len").get<std::size_t>();
    cfg.decode = DecodeStrategy::parse(j.at("decode").get<std::string>());
    cfg.use_mte = j.at("use_mte").get<bool>();
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
    return cfg;
  }
};

// What an artifact was trained on; the zero-shot pipeline enforces
// disjointness through these tags.
struct Provenance {
  std::string trained_on;              // "eeg_text" or "external_text"
  std::set<std::uint64_t> text_hashes;  // fnv1a64 of normalized training texts

  void record_text(const std::string& text) { text_hashes.insert(fnv1a64(normalize_text(text))); }
  bool contains_text(const std::string& text) const {
    return text_hashes.count(fnv1a64(normalize_text(text))) > 0;
  }
};

struct GenerationResult {
  std::vector<int> ids;  // generated tokens, bos/eos excluded
  std::string text;
  bool truncated = false;
  std::string strategy;
};

struct ComponentCount {
  std::size_t parameters = 0;
  bool trainable = true;
  bool aliased = false;  // reported elsewhere; not counted twice
};

// Mean over non-pad positions of -log softmax(logits)[target], computed via
// logsumexp. The plain-matrix twin of ag::cross_entropy_with_logits.
inline double reconstruction_loss(const Matrix& logits, const std::vector<int>& targets,
                                  const std::vector<bool>& pad_keep) {
  if (targets.size() != logits.rows() || pad_keep.size() != logits.rows())
    throw std::invalid_argument("reconstruction_loss: shape mismatch");
  std::size_t n_keep = 0;
  double loss = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    if (!pad_keep[t]) continue;
    ++n_keep;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= logits.cols())
      throw std::out_of_range("reconstruction_loss: target id out of vocabulary");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(t, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(t, j) - mx);
    loss += mx + std::log(sum) - logits(t, static_cast<std::size_t>(targets[t]));
  }
  if (n_keep == 0) throw std::invalid_argument("reconstruction_loss: all positions padded");
  return loss / static_cast<double>(n_keep);
}

// The EEG-to-text model: a trainable transformer encoder over raw EEG
// features, an affine+ReLU projection into the backbone embedding space, and
// the backbone itself with a language-modeling head on top.
class BrainTranslator {
 public:
  BrainTranslator(TranslatorConfig cfg, std::shared_ptr<Seq2SeqBackbone> backbone)
      : cfg_(std::move(cfg)), backbone_(std::move(backbone)) {
    cfg_.validate();
    if (!backbone_) throw ConfigError("translator needs a backbone");
    if (static_cast<std::size_t>(backbone_->vocab_size()) != cfg_.vocab_size)
      throw ConfigError("config vocab_size " + std::to_string(cfg_.vocab_size) +
                        " != backbone vocabulary " + std::to_string(backbone_->vocab_size()));
    if (backbone_->hidden_dim() != cfg_.backbone_hidden)
      throw ConfigError("config backbone_hidden does not match backbone");
    Rng rng(cfg_.init_seed);
    if (cfg_.use_mte)
      mte_ = nn::TransformerEncoder("mte", cfg_.mte_layers, cfg_.input_dim, cfg_.mte_heads,
                                    cfg_.mte_ff_dim, rng);
    projection_ = nn::Linear("projection", cfg_.input_dim, cfg_.backbone_hidden, rng);
    if (!backbone_->has_lm_head())
      own_lm_head_ = nn::Linear("lm_head", cfg_.backbone_hidden, cfg_.vocab_size, rng);
  }

  const TranslatorConfig& config() const { return cfg_; }
  Seq2SeqBackbone& backbone() { return *backbone_; }
  const Seq2SeqBackbone& backbone() const { return *backbone_; }
  std::shared_ptr<Seq2SeqBackbone> backbone_ptr() const { return backbone_; }

  Provenance provenance;

  // ---- graph builders -------------------------------------------------

  // h_m = ReLU(projection(MTE(h_e))); rows at masked positions are not
  // attended to anywhere downstream.
  ag::Var projection_graph(const Matrix& eeg, const std::vector<bool>& keep) {
    validate_input(eeg, keep);
    ag::Var h = ag::constant(eeg);
    if (cfg_.use_mte) h = mte_(nn::add_positions(h), keep);
    return ag::relu(projection_(h));
  }

  ag::Var logits_graph(const Matrix& eeg, const std::vector<bool>& keep,
                       const std::vector<int>& prefix) {
    if (prefix.empty()) throw std::invalid_argument("target prefix must be non-empty");
    if (prefix.front() != backbone_->bos_id())
      throw std::invalid_argument("target prefix must begin with the start token");
    for (int id : prefix)
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
        throw std::out_of_range("token id out of vocabulary: " + std::to_string(id));
    ag::Var memory = backbone_->encode(projection_graph(eeg, keep), keep);
    ag::Var hidden = backbone_->decode_hidden(memory, keep, prefix);
    return lm_logits(hidden);
  }

  ag::Var lm_logits(ag::Var dec_hidden) {
    if (own_lm_head_) return (*own_lm_head_)(dec_hidden);
    return backbone_->lm_logits(dec_hidden);
  }

  // Teacher-forced loss for one sentence: prefix = [bos] + ids,
  // targets = ids + [eos].
  ag::Var loss_graph(const Matrix& eeg, const std::vector<bool>& keep,
                     const std::string& text) {
    std::vector<int> ids = backbone_->tokenize(text);
    std::vector<int> prefix{backbone_->bos_id()};
    prefix.insert(prefix.end(), ids.begin(), ids.end());
    std::vector<int> targets = ids;
    targets.push_back(backbone_->eos_id());
    ag::Var logits = logits_graph(eeg, keep, prefix);
    return ag::cross_entropy_with_logits(logits, targets,
                                         std::vector<bool>(targets.size(), true));
  }

  // ---- spec operations (plain-value wrappers) --------------------------

  Matrix forward_projection(const Matrix& eeg, const std::vector<bool>& keep = {}) {
    return projection_graph(eeg, keep)->val();
  }

  Matrix compute_logits(const Matrix& eeg, const std::vector<bool>& keep,
                        const std::vector<int>& target_prefix) {
    return logits_graph(eeg, keep, target_prefix)->val();
  }

  double sentence_loss(const EEGSentenceRecord& rec) {
    const Matrix eeg = eeg_matrix(rec);
    return loss_graph(eeg, std::vector<bool>(eeg.rows(), true), rec.text)->val()(0, 0);
  }

  GenerationResult generate(const Matrix& eeg, const std::vector<bool>& keep,
                            const DecodeStrategy& strategy) {
    validate_input(eeg, keep);
    ag::Var memory = backbone_->encode(projection_graph(eeg, keep), keep);
    GenerationResult result;
    result.strategy = strategy.to_string();
    if (strategy.kind == DecodeStrategy::Kind::greedy || strategy.beam_width == 1)
      greedy_decode(memory, keep, result);
    else
      beam_decode(memory, keep, strategy.beam_width, result);
    result.text = backbone_->detokenize(result.ids);
    return result;
  }

  GenerationResult generate(const EEGSentenceRecord& rec) {
    const Matrix eeg = eeg_matrix(rec);
    return generate(eeg, std::vector<bool>(eeg.rows(), true), cfg_.decode);
  }

  std::map<std::string, ComponentCount> count_parameters() {
    std::map<std::string, ComponentCount> counts;
    {
      ComponentCount c;
      if (cfg_.use_mte) {
        std::vector<ag::Param*> ps;
        mte_.collect(ps);
        c = summarize(ps);
      }
      counts["mte"] = c;
    }
    {
      std::vector<ag::Param*> ps;
      projection_.collect(ps);
      counts["projection"] = summarize(ps);
    }
    {
      std::vector<ag::Param*> ps;
      backbone_->collect_params(ps);
      counts["backbone"] = summarize(ps);
    }
    {
      ComponentCount c;
      if (own_lm_head_) {
        std::vector<ag::Param*> ps;
        own_lm_head_->collect(ps);
        c = summarize(ps);
      } else {
        c.parameters = 0;
        c.aliased = true;  // weight-tied to the backbone's head
        c.trainable = counts["backbone"].trainable;
      }
      counts["lm_head"] = c;
    }
    return counts;
  }

  std::size_t total_parameters() {
    std::size_t total = 0;
    for (const auto& [name, c] : count_parameters()) total += c.parameters;
    return total;
  }

  void collect_params(std::vector<ag::Param*>& out) {
    if (cfg_.use_mte) mte_.collect(out);
    projection_.collect(out);
    backbone_->collect_params(out);
    if (own_lm_head_) own_lm_head_->collect(out);
  }

  void freeze_backbone(bool frozen) {
    std::vector<ag::Param*> ps;
    backbone_->collect_params(ps);
    for (auto* p : ps) p->trainable = !frozen;
  }

 private:
  static ComponentCount summarize(const std::vector<ag::Param*>& ps) {
    ComponentCount c;
    c.trainable = true;
    for (const auto* p : ps) {
      c.parameters += p->size();
      c.trainable = c.trainable && p->trainable;
    }
    return c;
  }

  void validate_input(const Matrix& eeg, const std::vector<bool>& keep) const {
    if (eeg.rows() == 0) throw std::invalid_argument("eeg sequence must have length >= 1");
    if (eeg.cols() != cfg_.input_dim)
      throw std::invalid_argument("eeg feature dimension " + std::to_string(eeg.cols()) +
                                  " != input_dim " + std::to_string(cfg_.input_dim));
    if (!keep.empty()) {
      if (keep.size() != eeg.rows())
        throw std::invalid_argument("attention mask length != sequence length");
      if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; }))
        throw std::invalid_argument("attention mask must keep at least one position");
    }
    if (!eeg.all_finite()) throw NumericError("eeg input contains non-finite values");
  }

  // last-row logits for an incremental decode step
  Matrix next_token_logits(ag::Var memory, const std::vector<bool>& keep,
                           const std::vector<int>& prefix) {
    ag::Var hidden = backbone_->decode_hidden(memory, keep, prefix);
    ag::Var last = ag::slice_rows(hidden, hidden->val().rows() - 1, hidden->val().rows());
    return lm_logits(last)->val();
  }

  void greedy_decode(ag::Var memory, const std::vector<bool>& keep, GenerationResult& result) {
    std::vector<int> prefix{backbone_->bos_id()};
    for (std::size_t step = 0; step < cfg_.max_target_len; ++step) {
      const Matrix logits = next_token_logits(memory, keep, prefix);
      int best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits(0, j) > logits(0, best)) best = static_cast<int>(j);
      if (best == backbone_->eos_id()) return;
      result.ids.push_back(best);
      prefix.push_back(best);
    }
    result.truncated = true;
  }

  struct Hypothesis {
    std::vector<int> ids;
    double log_prob = 0.0;
  };

  // Length-normalized beam search; ties break toward lower token ids so
  // beam(1) reproduces greedy decoding exactly.
  void beam_decode(ag::Var memory, const std::vector<bool>& keep, int width,
                   GenerationResult& result) {
    std::vector<Hypothesis> live{{{}, 0.0}};
    std::vector<Hypothesis> finished;

    auto normalized = [](const Hypothesis& h) {
      return h.log_prob / static_cast<double>(h.ids.size() + 1);
    };

    for (std::size_t step = 0; step < cfg_.max_target_len && !live.empty(); ++step) {
      std::vector<Hypothesis> candidates;
      for (const auto& hyp : live) {
        std::vector<int> prefix{backbone_->bos_id()};
        prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
        const Matrix logits = next_token_logits(memory, keep, prefix);
        // log softmax of the row
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(0, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(0, j) - mx);
        const double lse = mx + std::log(sum);

        std::vector<std::pair<double, int>> scored;
        scored.reserve(logits.cols());
        for (std::size_t j = 0; j < logits.cols(); ++j)
          scored.emplace_back(logits(0, j) - lse, static_cast<int>(j));
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        const int take = std::min<int>(width, static_cast<int>(scored.size()));
        for (int k = 0; k < take; ++k) {
          Hypothesis next = hyp;
          next.log_prob += scored[k].first;
          if (scored[k].second == backbone_->eos_id()) {
            finished.push_back(std::move(next));
          } else {
            next.ids.push_back(scored[k].second);
            candidates.push_back(std::move(next));
          }
        }
      }
      std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return a.ids < b.ids;
      });
      if (static_cast<int>(candidates.size()) > width) candidates.resize(width);
      live = std::move(candidates);
    }

    const Hypothesis* best = nullptr;
    for (const auto& h : finished)
      if (!best || normalized(h) > normalized(*best)) best = &h;
    if (!best) {
      result.truncated = true;
      for (const auto& h : live)
        if (!best || normalized(h) > normalized(*best)) best = &h;
    }
    if (best) result.ids = best->ids;
  }

  TranslatorConfig cfg_;
  std::shared_ptr<Seq2SeqBackbone> backbone_;
  nn::TransformerEncoder mte_;
  nn::Linear projection_;
  std::optional<nn::Linear> own_lm_head_;
};

inline void zero_all_parameters(BrainTranslator& model) {
  std::vector<ag::Param*> params;
  model.collect_params(params);
  for (auto* p : params) p->value.fill(0.0);
}

}  // namespace eegtext
