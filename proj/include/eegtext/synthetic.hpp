#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "eegtext/data.hpp"
#include "eegtext/errors.hpp"
#include "eegtext/rng.hpp"

namespace eegtext {

// Desk-scale stand-in for the brain-as-encoder: each vocabulary token gets a
// fixed random code vector; word features are code plus white noise.
struct SyntheticEncoderConfig {
  std::vector<std::string> vocab;
  double noise_sigma = 0.0;
  std::uint64_t seed = 312;
  std::size_t feature_dim = kFeatureDim;
  std::string task_id = "SYN-v1.0";
  std::string subject_id = "SYN-SUBJ-A";
};

inline void validate(const SyntheticEncoderConfig& cfg) {
  if (cfg.vocab.size() < 2) throw ConfigError("synthetic vocab needs at least 2 tokens");
  std::unordered_set<std::string> seen(cfg.vocab.begin(), cfg.vocab.end());
  if (seen.size() != cfg.vocab.size()) throw ConfigError("synthetic vocab tokens must be distinct");
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
  if (cfg.feature_dim == 0) throw ConfigError("feature_dim must be positive");
}

inline std::vector<std::vector<double>> synthetic_token_codes(const SyntheticEncoderConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::vector<std::vector<double>> codes(cfg.vocab.size());
  for (auto& code : codes) {
    code.resize(cfg.feature_dim);
    for (double& v : code) v = rng.gaussian();
  }
  return codes;
}

inline std::vector<EEGSentenceRecord> generate_synthetic_corpus(
    const SyntheticEncoderConfig& cfg, std::size_t n_sentences,
    std::pair<std::size_t, std::size_t> len_range) {
  validate(cfg);
  if (n_sentences < 1) throw ConfigError("n_sentences must be >= 1");
  if (len_range.first < 1 || len_range.first > len_range.second)
    throw ConfigError("invalid sentence length range");

  Rng rng(cfg.seed);
  std::vector<std::vector<double>> codes(cfg.vocab.size());
  for (auto& code : codes) {
    code.resize(cfg.feature_dim);
    for (double& v : code) v = rng.gaussian();
  }

  std::vector<EEGSentenceRecord> records;
  records.reserve(n_sentences);
  for (std::size_t i = 0; i < n_sentences; ++i) {
    const std::size_t len =
        len_range.first +
        static_cast<std::size_t>(rng.below(len_range.second - len_range.first + 1));
    EEGSentenceRecord rec;
    rec.sentence_id = "syn-" + std::to_string(i);
    rec.subject_id = cfg.subject_id;
    rec.task_id = cfg.task_id;
    std::string text;
    for (std::size_t w = 0; w < len; ++w) {
      const std::size_t tok = static_cast<std::size_t>(rng.below(cfg.vocab.size()));
      if (w > 0) text += ' ';
      text += cfg.vocab[tok];
      std::vector<double> feat = codes[tok];
      if (cfg.noise_sigma > 0.0) {
        for (double& v : feat) v += rng.gaussian(0.0, cfg.noise_sigma);
      }
      rec.eeg.push_back(std::move(feat));
    }
    rec.text = std::move(text);
    records.push_back(std::move(rec));
  }
  return records;
}

// Convenience vocabulary: w00, w01, ...
inline std::vector<std::string> numbered_vocab(std::size_t n, const std::string& prefix = "w") {
  std::vector<std::string> vocab;
  vocab.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = std::to_string(i);
    if (id.size() < 2) id = "0" + id;
    vocab.push_back(prefix + id);
  }
  return vocab;
}

}  // namespace eegtext
