#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegtext/errors.hpp"
#include "eegtext/nn.hpp"
#include "eegtext/tokenizer.hpp"

namespace eegtext {

// Contract for the pluggable sequence-to-sequence language model. It consumes
// hidden-size embeddings directly (the projected EEG sequence goes in place
// of input token embeddings) and exposes its own tokenizer.
class Seq2SeqBackbone {
 public:
  virtual ~Seq2SeqBackbone() = default;

  virtual int vocab_size() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  virtual int pad_id() const = 0;
  virtual bool pretrained() const = 0;

  virtual std::vector<int> tokenize(const std::string& text) const = 0;
  virtual std::string detokenize(const std::vector<int>& ids) const = 0;

  // src is L x hidden; returns encoder states L x hidden
  virtual ag::Var encode(ag::Var src, const std::vector<bool>& src_keep) = 0;
  // prefix starts with bos; returns decoder hidden states T x hidden
  virtual ag::Var decode_hidden(ag::Var memory, const std::vector<bool>& src_keep,
                                const std::vector<int>& prefix) = 0;

  // When the backbone ships a language-modeling head the translator aliases
  // it instead of owning a second one.
  virtual bool has_lm_head() const = 0;
  virtual ag::Var lm_logits(ag::Var dec_hidden) = 0;

  virtual void collect_params(std::vector<ag::Param*>& out) = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::ordered_json config_json() const = 0;
};

struct ToyBackboneConfig {
  std::vector<std::string> vocab_words;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 64;
  std::uint64_t seed = 312;
  bool provide_lm_head = true;  // false leaves W_d to the translator
  bool tied_lm_head = true;
  bool pretrained_flag = false;

  nlohmann::ordered_json to_json() const {
    return {{"vocab_words", vocab_words}, {"hidden", hidden},
            {"layers", layers},           {"heads", heads},
            {"ff_dim", ff_dim},           {"seed", seed},
            {"provide_lm_head", provide_lm_head},
            {"tied_lm_head", tied_lm_head},
            {"pretrained_flag", pretrained_flag}};
  }
  static ToyBackboneConfig from_json(const nlohmann::json& j) {
    ToyBackboneConfig cfg;
    cfg.vocab_words = j.at("vocab_words").get<std::vector<std::string>>();
    cfg.hidden = j.at("hidden").get<std::size_t>();
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.ff_dim = j.at("ff_dim").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.provide_lm_head = j.at("provide_lm_head").get<bool>();
    cfg.tied_lm_head = j.at("tied_lm_head").get<bool>();
    cfg.pretrained_flag = j.at("pretrained_flag").get<bool>();
    return cfg;
  }
};

// Small randomly initialized transformer encoder-decoder; the "w/o
// pretrained weights" stand-in used throughout the tests.
class ToyBackbone : public Seq2SeqBackbone {
 public:
  explicit ToyBackbone(ToyBackboneConfig cfg)
      : cfg_(std::move(cfg)), tokenizer_(cfg_.vocab_words) {
    Rng rng(cfg_.seed);
    embedding_ = nn::Embedding("backbone.embedding",
                               static_cast<std::size_t>(tokenizer_.vocab_size()),
                               cfg_.hidden, rng);
    encoder_ = nn::TransformerEncoder("backbone.encoder", cfg_.layers, cfg_.hidden,
                                      cfg_.heads, cfg_.ff_dim, rng);
    decoder_ = nn::TransformerDecoder("backbone.decoder", cfg_.layers, cfg_.hidden,
                                      cfg_.heads, cfg_.ff_dim, rng);
    if (cfg_.provide_lm_head) {
      lm_bias_ = ag::Param("backbone.lm_head.bias",
                           Matrix(1, static_cast<std::size_t>(tokenizer_.vocab_size())));
      if (!cfg_.tied_lm_head) {
        lm_weight_ = ag::Param("backbone.lm_head.weight",
                               nn::glorot_uniform(cfg_.hidden,
                                                  static_cast<std::size_t>(tokenizer_.vocab_size()),
                                                  rng));
      }
    }
  }

  int vocab_size() const override { return tokenizer_.vocab_size(); }
  std::size_t hidden_dim() const override { return cfg_.hidden; }
  int bos_id() const override { return WordTokenizer::kBos; }
  int eos_id() const override { return WordTokenizer::kEos; }
  int pad_id() const override { return WordTokenizer::kPad; }
  bool pretrained() const override { return cfg_.pretrained_flag; }

  std::vector<int> tokenize(const std::string& text) const override {
    return tokenizer_.tokenize(text);
  }
  std::string detokenize(const std::vector<int>& ids) const override {
    return tokenizer_.detokenize(ids);
  }

  ag::Var encode(ag::Var src, const std::vector<bool>& src_keep) override {
    return encoder_(nn::add_positions(src), src_keep);
  }

  ag::Var decode_hidden(ag::Var memory, const std::vector<bool>& src_keep,
                        const std::vector<int>& prefix) override {
    if (prefix.empty()) throw DataError("decoder prefix must be non-empty");
    ag::Var tgt = nn::add_positions(embedding_(prefix));
    return decoder_(tgt, memory, src_keep);
  }

  bool has_lm_head() const override { return cfg_.provide_lm_head; }

  ag::Var lm_logits(ag::Var dec_hidden) override {
    if (!cfg_.provide_lm_head)
      throw ConfigError("toy backbone configured without a language-modeling head");
    ag::Var scores = cfg_.tied_lm_head
                         ? ag::matmul_nt(dec_hidden, ag::param(embedding_.table))
                         : ag::matmul(dec_hidden, ag::param(lm_weight_));
    return ag::add_rowvec(scores, ag::param(lm_bias_));
  }

  void collect_params(std::vector<ag::Param*>& out) override {
    embedding_.collect(out);
    encoder_.collect(out);
    decoder_.collect(out);
    if (cfg_.provide_lm_head) {
      if (!cfg_.tied_lm_head) out.push_back(&lm_weight_);
      out.push_back(&lm_bias_);
    }
  }

  std::string kind() const override { return "toy"; }
  nlohmann::ordered_json config_json() const override { return cfg_.to_json(); }

  const ToyBackboneConfig& config() const { return cfg_; }

 private:
  ToyBackboneConfig cfg_;
  WordTokenizer tokenizer_;
  nn::Embedding embedding_;
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder decoder_;
  ag::Param lm_weight_;
  ag::Param lm_bias_;
};

inline std::shared_ptr<Seq2SeqBackbone> make_backbone(const std::string& kind,
                                                      const nlohmann::json& config) {
  if (kind == "toy") return std::make_shared<ToyBackbone>(ToyBackboneConfig::from_json(config));
  throw ConfigError("unsupported backbone kind: " + kind);
}

}  // namespace eegtext
