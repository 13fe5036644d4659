#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "eegtext/errors.hpp"

namespace eegtext::metrics {

// Lowercase + punctuation detachment + whitespace split. Every
// non-alphanumeric, non-space character becomes its own token.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      tokens.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return tokens;
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace detail

struct BleuOptions {
  int max_n = 4;
  // Corpus scores use no smoothing. Sentence-level scores add one to both
  // clipped and total counts, and reports flag it.
  bool sentence_level = false;
};

// Corpus BLEU-n for each n <= max_n: geometric mean of clipped n-gram
// precisions times brevity penalty exp(min(0, 1 - ref_len/cand_len)).
inline std::map<int, double> bleu_n(const std::vector<std::vector<std::string>>& candidates,
                                    const std::vector<std::vector<std::string>>& references,
                                    int max_n = 4, const BleuOptions& opts = {}) {
  if (candidates.empty()) throw DataError("bleu: empty corpus");
  if (candidates.size() != references.size())
    throw DataError("bleu: candidate/reference count mismatch");
  if (max_n < 1 || max_n > 4) throw DataError("bleu: max_n must be in 1..4");

  std::vector<double> clipped(static_cast<std::size_t>(max_n) + 1, 0.0);
  std::vector<double> total(static_cast<std::size_t>(max_n) + 1, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (int n = 1; n <= max_n; ++n) {
      auto c_counts = detail::ngram_counts(candidates[i], static_cast<std::size_t>(n));
      auto r_counts = detail::ngram_counts(references[i], static_cast<std::size_t>(n));
      for (const auto& [gram, count] : c_counts) {
        total[n] += static_cast<double>(count);
        auto it = r_counts.find(gram);
        if (it != r_counts.end())
          clipped[n] += static_cast<double>(std::min(count, it->second));
      }
    }
  }

  const double bp =
      cand_len > 0.0 ? std::exp(std::min(0.0, 1.0 - ref_len / cand_len)) : 0.0;

  std::map<int, double> scores;
  for (int k = 1; k <= max_n; ++k) {
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= k; ++n) {
      double c = clipped[n], t = total[n];
      if (opts.sentence_level) {
        c += 1.0;
        t += 1.0;
      }
      if (c <= 0.0 || t <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(c / t);
    }
    scores[k] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(k));
  }
  return scores;
}

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// Unigram overlap with per-type clipping, averaged over pairs.
inline RougeScore rouge1(const std::vector<std::vector<std::string>>& candidates,
                         const std::vector<std::vector<std::string>>& references) {
  if (candidates.empty()) throw DataError("rouge1: empty corpus");
  if (candidates.size() != references.size())
    throw DataError("rouge1: candidate/reference count mismatch");

  RougeScore avg;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::unordered_map<std::string, std::size_t> c_counts, r_counts;
    for (const auto& t : candidates[i]) ++c_counts[t];
    for (const auto& t : references[i]) ++r_counts[t];
    double overlap = 0.0;
    for (const auto& [tok, count] : c_counts) {
      auto it = r_counts.find(tok);
      if (it != r_counts.end()) overlap += static_cast<double>(std::min(count, it->second));
    }
    const double p = candidates[i].empty() ? 0.0 : overlap / static_cast<double>(candidates[i].size());
    const double r = references[i].empty() ? 0.0 : overlap / static_cast<double>(references[i].size());
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    avg.precision += p;
    avg.recall += r;
    avg.f += f;
  }
  const double n = static_cast<double>(candidates.size());
  avg.precision /= n;
  avg.recall /= n;
  avg.f /= n;
  return avg;
}

// Standard O(|x|*|y|) dynamic program.
template <class T>
std::size_t lcs_length(const std::vector<T>& x, const std::vector<T>& y) {
  if (x.empty() || y.empty()) return 0;
  std::vector<std::size_t> prev(y.size() + 1, 0), cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j) {
      if (x[i - 1] == y[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

inline const std::vector<std::string>& entity_type_inventory() {
  static const std::vector<std::string> kTypes{
      "PERSON", "GPE", "LOCATION", "ORG", "NORP", "DATE", "EVENT"};
  return kTypes;
}

// Ordered entity types extracted left-to-right from one sentence.
struct EntityTypeSequence {
  std::vector<std::string> types;

  EntityTypeSequence() = default;
  explicit EntityTypeSequence(std::vector<std::string> t) : types(std::move(t)) {
    const auto& inv = entity_type_inventory();
    for (const auto& ty : types)
      if (std::find(inv.begin(), inv.end(), ty) == inv.end())
        throw DataError("unknown entity type: " + ty);
  }

  std::size_t size() const { return types.size(); }
  bool empty() const { return types.empty(); }
};

// Eq-style LCS matching score: LCS(X,Y)/max(|X|,|Y|). Two sentences with no
// entities agree perfectly, hence 1.0 for the both-empty case.
inline double sim_lcs(const EntityTypeSequence& x, const EntityTypeSequence& y) {
  if (x.empty() && y.empty()) return 1.0;
  if (x.empty() || y.empty()) return 0.0;
  return static_cast<double>(lcs_length(x.types, y.types)) /
         static_cast<double>(std::max(x.size(), y.size()));
}

// Multiset cosine similarity over per-type instance counts.
inline double sim_multiset(const EntityTypeSequence& x, const EntityTypeSequence& y) {
  if (x.empty() && y.empty()) return 1.0;
  if (x.empty() || y.empty()) return 0.0;
  std::map<std::string, double> xc, yc;
  for (const auto& t : x.types) xc[t] += 1.0;
  for (const auto& t : y.types) yc[t] += 1.0;
  double dot = 0.0, xs = 0.0, ys = 0.0;
  for (const auto& [t, c] : xc) {
    xs += c * c;
    auto it = yc.find(t);
    if (it != yc.end()) dot += c * it->second;
  }
  for (const auto& [t, c] : yc) ys += c * c;
  return dot / (std::sqrt(xs) * std::sqrt(ys));
}

struct NERProvider {
  virtual ~NERProvider() = default;
  virtual EntityTypeSequence extract(const std::string& text) const = 0;
  virtual std::string name() const = 0;
};

// Deterministic test recognizer: longest-match lookup over a fixed lexicon
// of surface strings. Matches are case-sensitive and word-bounded.
class GazetteerNER : public NERProvider {
 public:
  GazetteerNER() : GazetteerNER(default_lexicon()) {}
  explicit GazetteerNER(std::vector<std::pair<std::string, std::string>> lexicon)
      : lexicon_(std::move(lexicon)) {
    std::sort(lexicon_.begin(), lexicon_.end(), [](const auto& a, const auto& b) {
      if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
      return a.first < b.first;
    });
  }

  EntityTypeSequence extract(const std::string& text) const override {
    std::vector<std::string> types;
    std::size_t pos = 0;
    while (pos < text.size()) {
      if (pos > 0 && is_word_char(text[pos - 1])) {
        ++pos;
        continue;
      }
      bool matched = false;
      for (const auto& [surface, type] : lexicon_) {
        if (text.compare(pos, surface.size(), surface) != 0) continue;
        const std::size_t end = pos + surface.size();
        if (end < text.size() && is_word_char(text[end])) continue;
        types.push_back(type);
        pos = end;
        matched = true;
        break;
      }
      if (!matched) ++pos;
    }
    return EntityTypeSequence(std::move(types));
  }

  std::string name() const override { return "gazetteer"; }

  static std::vector<std::pair<std::string, std::string>> default_lexicon() {
    return {
        {"George W. Bush", "PERSON"},
        {"Adolf Otto Reinhold Windaus", "PERSON"},
        {"Hitler", "PERSON"},
        {"Puerto Rico", "GPE"},
        {"San Juan", "LOCATION"},
        {"New Francisco", "LOCATION"},
        {"London", "GPE"},
        {"Germany", "GPE"},
        {"Wikipedia", "ORG"},
        {"Nobel Prize", "EVENT"},
        {"American", "NORP"},
        {"Monday", "DATE"},
        {"1928", "DATE"},
    };
  }

 private:
  static bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
  }

  std::vector<std::pair<std::string, std::string>> lexicon_;
};

struct EntityMatchReport {
  double mean_sim_lcs = 0.0;
  double mean_sim_multiset = 0.0;
  std::size_t n_pairs = 0;
};

inline EntityMatchReport entity_match_report(
    const std::vector<std::pair<std::string, std::string>>& pairs, const NERProvider& ner) {
  EntityMatchReport report;
  report.n_pairs = pairs.size();
  if (pairs.empty()) return report;
  for (const auto& [truth, decoded] : pairs) {
    const auto x = ner.extract(truth);
    const auto y = ner.extract(decoded);
    report.mean_sim_lcs += sim_lcs(x, y);
    report.mean_sim_multiset += sim_multiset(x, y);
  }
  report.mean_sim_lcs /= static_cast<double>(pairs.size());
  report.mean_sim_multiset /= static_cast<double>(pairs.size());
  return report;
}

struct MetricReport {
  std::map<int, double> bleu;  // n in 1..4
  RougeScore rouge_1;
  double sim_lcs = 0.0;
  double sim_multiset = 0.0;
  std::size_t n_pairs = 0;
  std::string decode_strategy;
  std::string tokenizer = "lowercase+punct";
  std::string ner_provider;
  bool sentence_level_bleu = false;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [n, score] : bleu) j["bleu"]["bleu-" + std::to_string(n)] = score;
    j["rouge1"] = {{"precision", rouge_1.precision}, {"recall", rouge_1.recall}, {"f", rouge_1.f}};
    j["sim_lcs"] = sim_lcs;
    j["sim_multiset"] = sim_multiset;
    j["n_pairs"] = n_pairs;
    j["decode_strategy"] = decode_strategy;
    j["tokenizer"] = tokenizer;
    j["ner_provider"] = ner_provider;
    j["sentence_level_bleu"] = sentence_level_bleu;
    return j;
  }
};

// Scores decoded sentences against ground truth; the full evaluation used by
// the decoder reports.
inline MetricReport evaluate_decoding(const std::vector<std::string>& truths,
                                      const std::vector<std::string>& decodeds,
                                      const std::string& decode_strategy,
                                      const NERProvider& ner) {
  if (truths.size() != decodeds.size())
    throw DataError("evaluate_decoding: truth/decoded count mismatch");
  if (truths.empty()) throw DataError("evaluate_decoding: empty evaluation set");
  std::vector<std::vector<std::string>> cand, ref;
  cand.reserve(decodeds.size());
  ref.reserve(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    cand.push_back(tokenize(decodeds[i]));
    ref.push_back(tokenize(truths[i]));
  }
  MetricReport report;
  report.bleu = bleu_n(cand, ref, 4);
  report.rouge_1 = rouge1(cand, ref);
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) pairs.emplace_back(truths[i], decodeds[i]);
  const auto entity = entity_match_report(pairs, ner);
  report.sim_lcs = entity.mean_sim_lcs;
  report.sim_multiset = entity.mean_sim_multiset;
  report.n_pairs = truths.size();
  report.decode_strategy = decode_strategy;
  report.ner_provider = ner.name();
  return report;
}

}  // namespace eegtext::metrics
