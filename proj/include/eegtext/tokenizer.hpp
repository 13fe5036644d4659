#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "eegtext/errors.hpp"
#include "eegtext/util.hpp"

namespace eegtext {

// Word-level tokenizer for the toy backbone. Ids 0..3 are specials, words
// follow in sorted order so a vocabulary is reproducible from its word list.
class WordTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  explicit WordTokenizer(const std::vector<std::string>& words) {
    std::set<std::string> unique(words.begin(), words.end());
    words_.assign(unique.begin(), unique.end());
    for (std::size_t i = 0; i < words_.size(); ++i)
      index_[words_[i]] = static_cast<int>(i) + 4;
  }

  static WordTokenizer from_texts(const std::vector<std::string>& texts) {
    std::vector<std::string> words;
    for (const auto& t : texts)
      for (auto& w : split_whitespace(t)) words.push_back(std::move(w));
    return WordTokenizer(words);
  }

  int vocab_size() const { return static_cast<int>(words_.size()) + 4; }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_whitespace(text)) {
      auto it = index_.find(w);
      ids.push_back(it == index_.end() ? kUnk : it->second);
    }
    return ids;
  }

  std::string detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id == kPad || id == kBos || id == kEos) continue;
      if (!out.empty()) out += ' ';
      if (id == kUnk) {
        out += "<unk>";
      } else {
        const std::size_t w = static_cast<std::size_t>(id) - 4;
        if (w >= words_.size()) throw DataError("token id out of vocabulary: " + std::to_string(id));
        out += words_[w];
      }
    }
    return out;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace eegtext
