#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "eegtext/errors.hpp"
#include "eegtext/matrix.hpp"
#include "eegtext/rng.hpp"
#include "eegtext/util.hpp"

namespace eegtext {

// ZuCo-style word features: 8 frequency bands x 105 channels.
inline constexpr std::size_t kFeatureDim = 840;

enum class SentimentLabel : int { negative = 0, neutral = 1, positive = 2 };

inline SentimentLabel sentiment_from_int(int v) {
  if (v < 0 || v > 2) throw DataError("sentiment label out of range: " + std::to_string(v));
  return static_cast<SentimentLabel>(v);
}

// One sentence's word-level EEG feature sequence plus its text.
struct EEGSentenceRecord {
  std::string sentence_id;
  std::string subject_id;
  std::string task_id;
  std::string text;
  std::vector<std::vector<double>> eeg;  // length >= 1, each entry feature_dim wide
  std::optional<SentimentLabel> sentiment;
};

struct DatasetSplit {
  std::vector<EEGSentenceRecord> train, dev, test;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

inline Matrix eeg_matrix(const EEGSentenceRecord& rec) {
  if (rec.eeg.empty()) throw DataError("record " + rec.sentence_id + " has empty eeg sequence");
  Matrix m(rec.eeg.size(), rec.eeg.front().size());
  for (std::size_t i = 0; i < rec.eeg.size(); ++i) {
    if (rec.eeg[i].size() != m.cols())
      throw DataError("record " + rec.sentence_id + " has ragged eeg feature lengths");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rec.eeg[i][j];
  }
  return m;
}

namespace detail {

// JSON has no literal for non-finite doubles; the interchange format spells
// them as strings so pre-cleaning records survive a round trip.
inline nlohmann::ordered_json encode_feature_value(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
  return v;
}

inline double decode_feature_value(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_null()) return std::nan("");
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "NaN") return std::nan("");
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  throw DataError("eeg entry is not a number");
}

}  // namespace detail

inline nlohmann::ordered_json record_to_json(const EEGSentenceRecord& rec) {
  nlohmann::ordered_json j;
  j["sentence_id"] = rec.sentence_id;
  j["subject"] = rec.subject_id;
  j["task"] = rec.task_id;
  j["text"] = rec.text;
  if (rec.sentiment)
    j["sentiment"] = static_cast<int>(*rec.sentiment);
  else
    j["sentiment"] = nullptr;
  nlohmann::ordered_json words = nlohmann::ordered_json::array();
  for (const auto& w : rec.eeg) {
    nlohmann::ordered_json vec = nlohmann::ordered_json::array();
    for (double v : w) vec.push_back(detail::encode_feature_value(v));
    words.push_back(std::move(vec));
  }
  j["eeg"] = std::move(words);
  return j;
}

inline EEGSentenceRecord record_from_json(const nlohmann::json& j) {
  EEGSentenceRecord rec;
  rec.sentence_id = j.at("sentence_id").get<std::string>();
  rec.subject_id = j.at("subject").get<std::string>();
  rec.task_id = j.at("task").get<std::string>();
  rec.text = j.at("text").get<std::string>();
  if (rec.text.empty()) throw DataError("record " + rec.sentence_id + " has empty text");
  const auto& sent = j.at("sentiment");
  if (!sent.is_null()) rec.sentiment = sentiment_from_int(sent.get<int>());
  const auto& eeg = j.at("eeg");
  if (!eeg.is_array() || eeg.empty())
    throw DataError("record " + rec.sentence_id + " has empty eeg sequence");
  for (const auto& word : eeg) {
    if (!word.is_array()) throw DataError("record " + rec.sentence_id + " eeg entry not an array");
    std::vector<double> vec;
    vec.reserve(word.size());
    for (const auto& v : word) vec.push_back(detail::decode_feature_value(v));
    rec.eeg.push_back(std::move(vec));
  }
  return rec;
}

// Loads a JSONL corpus. feature_dim 0 means "infer from the first word
// vector"; any other value is enforced on every word of every record.
inline std::vector<EEGSentenceRecord> load_corpus(const std::string& path,
                                                  std::size_t feature_dim = kFeatureDim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<EEGSentenceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected = feature_dim;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    EEGSentenceRecord rec;
    try {
      rec = record_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    for (const auto& w : rec.eeg) {
      if (expected == 0) expected = w.size();
      if (w.size() != expected)
        throw DataError("record " + rec.sentence_id + ": eeg feature length " +
                        std::to_string(w.size()) + " != expected " + std::to_string(expected));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// Writes JSONL via temp-file-then-rename so readers never see partial files.
inline void write_corpus(const std::vector<EEGSentenceRecord>& records,
                         const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + tmp);
    for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot rename " + tmp + " to " + path);
}

// Drops whole sentences containing any non-finite feature value. Infinities
// count as NaN for removal purposes.
inline std::vector<EEGSentenceRecord> clean_nan(const std::vector<EEGSentenceRecord>& records) {
  std::vector<EEGSentenceRecord> kept;
  kept.reserve(records.size());
  for (const auto& rec : records) {
    bool finite = true;
    for (const auto& w : rec.eeg) {
      for (double v : w) {
        if (!std::isfinite(v)) {
          finite = false;
          break;
        }
      }
      if (!finite) break;
    }
    if (finite) kept.push_back(rec);
  }
  return kept;
}

// Partition by distinct text so test sentences are unseen. Distinct texts
// are shuffled by seed, then counted floor/floor/remainder.
inline DatasetSplit split_by_unique_sentence(const std::vector<EEGSentenceRecord>& records,
                                             const std::array<double, 3>& ratios,
                                             std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw DataError("split ratios must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw DataError("split ratios must sum to 1");

  std::vector<std::string> texts;
  std::unordered_set<std::string> seen;
  for (const auto& rec : records) {
    if (seen.insert(rec.text).second) texts.push_back(rec.text);
  }
  if (texts.size() < 3)
    throw DataError("need at least 3 distinct texts to populate train/dev/test, got " +
                    std::to_string(texts.size()));

  Rng rng(seed);
  rng.shuffle(texts);

  const std::size_t n = texts.size();
  const double exact_train = ratios[0] * static_cast<double>(n);
  const double exact_dev = ratios[1] * static_cast<double>(n);
  std::size_t n_train = static_cast<std::size_t>(std::floor(exact_train));
  std::size_t n_dev = static_cast<std::size_t>(std::floor(exact_dev));
  // Test takes the remainder. When both floors truncated a large fraction the
  // remainder can exceed ratio*n by more than 1; hand one text back to
  // whichever of train/dev lost the bigger fraction so every split stays
  // within +-1 of its exact share.
  std::size_t n_test = n - n_train - n_dev;
  if (static_cast<double>(n_test) - ratios[2] * static_cast<double>(n) > 1.0) {
    if (exact_dev - std::floor(exact_dev) > exact_train - std::floor(exact_train))
      ++n_dev;
    else
      ++n_train;
    --n_test;
  }

  std::unordered_map<std::string, int> bucket;  // 0 train, 1 dev, 2 test
  for (std::size_t i = 0; i < n; ++i)
    bucket[texts[i]] = i < n_train ? 0 : (i < n_train + n_dev ? 1 : 2);

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;
  for (const auto& rec : records) {
    switch (bucket.at(rec.text)) {
      case 0: split.train.push_back(rec); break;
      case 1: split.dev.push_back(rec); break;
      default: split.test.push_back(rec); break;
    }
  }
  return split;
}

// Concatenates task corpora, stamping task_id and rejecting duplicate
// (sentence_id, subject_id, task_id) triples.
inline std::vector<EEGSentenceRecord> merge_tasks(
    const std::vector<std::pair<std::string, std::vector<EEGSentenceRecord>>>& corpora) {
  std::vector<EEGSentenceRecord> merged;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& [task_id, records] : corpora) {
    for (auto rec : records) {
      rec.task_id = task_id;
      auto key = std::make_tuple(rec.sentence_id, rec.subject_id, rec.task_id);
      if (!seen.insert(key).second)
        throw DataError("duplicate record (" + rec.sentence_id + ", " + rec.subject_id +
                        ", " + rec.task_id + ")");
      merged.push_back(std::move(rec));
    }
  }
  return merged;
}

inline std::vector<double> average_sentence_feature(const EEGSentenceRecord& rec) {
  if (rec.eeg.empty())
    throw DataError("record " + rec.sentence_id + " has no word features to average");
  std::vector<double> mean(rec.eeg.front().size(), 0.0);
  for (const auto& w : rec.eeg) {
    if (w.size() != mean.size())
      throw DataError("record " + rec.sentence_id + " has ragged eeg feature lengths");
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += w[j];
  }
  for (double& v : mean) v /= static_cast<double>(rec.eeg.size());
  return mean;
}

struct TaskStats {
  std::string task_id;
  std::size_t n_records = 0;
  std::size_t n_sentences = 0;  // distinct texts
  std::size_t n_subjects = 0;
  std::size_t n_dropped_nan = 0;
};

inline std::vector<TaskStats> corpus_stats(const std::vector<EEGSentenceRecord>& records,
                                           const std::vector<EEGSentenceRecord>& dropped = {}) {
  std::map<std::string, TaskStats> by_task;
  std::map<std::string, std::set<std::string>> texts, subjects;
  for (const auto& rec : records) {
    auto& st = by_task[rec.task_id];
    st.task_id = rec.task_id;
    ++st.n_records;
    texts[rec.task_id].insert(rec.text);
    subjects[rec.task_id].insert(rec.subject_id);
  }
  for (const auto& rec : dropped) {
    auto& st = by_task[rec.task_id];
    st.task_id = rec.task_id;
    ++st.n_dropped_nan;
  }
  std::vector<TaskStats> out;
  for (auto& [task, st] : by_task) {
    st.n_sentences = texts[task].size();
    st.n_subjects = subjects[task].size();
    out.push_back(st);
  }
  return out;
}

}  // namespace eegtext
