#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "eegtext/data.hpp"
#include "eegtext/synthetic.hpp"

using namespace eegtext;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

EEGSentenceRecord make_record(const std::string& id, const std::string& subject,
                              const std::string& text, std::size_t len, std::size_t dim,
                              Rng& rng) {
  EEGSentenceRecord rec;
  rec.sentence_id = id;
  rec.subject_id = subject;
  rec.task_id = "SR-v1.0";
  rec.text = text;
  for (std::size_t w = 0; w < len; ++w) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.gaussian();
    rec.eeg.push_back(std::move(v));
  }
  return rec;
}

std::vector<EEGSentenceRecord> random_corpus(std::size_t n, std::size_t dim, Rng& rng,
                                             double nan_fraction = 0.0) {
  std::vector<EEGSentenceRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    auto rec = make_record("s" + std::to_string(i), "SUBJ" + std::to_string(i % 4),
                           "text number " + std::to_string(i), 1 + rng.below(6), dim, rng);
    if (rng.uniform() < nan_fraction) {
      auto& word = rec.eeg[rng.below(rec.eeg.size())];
      word[rng.below(word.size())] =
          rng.uniform() < 0.5 ? std::nan("") : std::numeric_limits<double>::infinity();
    }
    recs.push_back(std::move(rec));
  }
  return recs;
}

bool records_equal(const EEGSentenceRecord& a, const EEGSentenceRecord& b) {
  if (a.sentence_id != b.sentence_id || a.subject_id != b.subject_id ||
      a.task_id != b.task_id || a.text != b.text || a.sentiment != b.sentiment ||
      a.eeg.size() != b.eeg.size())
    return false;
  for (std::size_t i = 0; i < a.eeg.size(); ++i) {
    if (a.eeg[i].size() != b.eeg[i].size()) return false;
    for (std::size_t j = 0; j < a.eeg[i].size(); ++j) {
      const double x = a.eeg[i][j], y = b.eeg[i][j];
      if (std::isnan(x) != std::isnan(y)) return false;
      if (!std::isnan(x) && x != y) return false;  // bit-exact for non-NaN
    }
  }
  return true;
}

}  // namespace

TEST_CASE("load_corpus reads well-formed lines in order") {
  Rng rng(1);
  auto recs = random_corpus(3, 8, rng);
  recs[1].sentiment = SentimentLabel::positive;
  const std::string path = temp_path("corpus3.jsonl");
  write_corpus(recs, path);

  auto loaded = load_corpus(path, 8);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(records_equal(recs[i], loaded[i]));
  std::remove(path.c_str());
}

TEST_CASE("load_corpus rejects wrong feature length naming the sentence") {
  Rng rng(2);
  auto recs = random_corpus(2, 840, rng);
  recs[1].eeg[0].pop_back();  // 839 entries
  const std::string path = temp_path("corpus_bad_len.jsonl");
  write_corpus(recs, path);

  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("s1"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("load_corpus reports malformed lines by number") {
  const std::string path = temp_path("corpus_malformed.jsonl");
  {
    std::ofstream out(path);
    out << R"({"sentence_id":"a","subject":"s","task":"t","text":"hi","sentiment":null,"eeg":[[1.0]]})"
        << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path, 1), doctest::Contains(":2:"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("interchange round-trip is field-identical over random corpora") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto recs = random_corpus(1 + rng.below(12), 1 + rng.below(16), rng,
                              trial % 3 == 0 ? 0.3 : 0.0);
    for (auto& r : recs)
      if (rng.uniform() < 0.3) r.sentiment = sentiment_from_int(static_cast<int>(rng.below(3)));
    const std::string path = temp_path("roundtrip.jsonl");
    write_corpus(recs, path);
    auto loaded = load_corpus(path, 0);
    REQUIRE(loaded.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(records_equal(recs[i], loaded[i]));
    // write(load(f)) reproduces the file byte for byte
    const std::string path2 = temp_path("roundtrip2.jsonl");
    write_corpus(loaded, path2);
    CHECK(read_file(path) == read_file(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
  }
}

TEST_CASE("clean_nan drops exactly the NaN-bearing sentences, order preserved") {
  Rng rng(4);
  auto recs = random_corpus(5, 6, rng);
  recs[1].eeg[0][2] = std::nan("");
  recs[3].eeg.back().back() = std::numeric_limits<double>::infinity();

  auto cleaned = clean_nan(recs);
  REQUIRE(cleaned.size() == 3);
  CHECK(cleaned[0].sentence_id == "s0");
  CHECK(cleaned[1].sentence_id == "s2");
  CHECK(cleaned[2].sentence_id == "s4");

  CHECK(clean_nan({}).empty());

  // NaN in word 7 of 10 removes the whole sentence
  auto rec = make_record("x", "SUBJ", "ten words", 10, 6, rng);
  rec.eeg[6][0] = std::nan("");
  CHECK(clean_nan({rec}).empty());

  for (const auto& r : cleaned)
    for (const auto& w : r.eeg)
      for (double v : w) CHECK(std::isfinite(v));
}

TEST_CASE("split_by_unique_sentence: exact ratios on 10 texts") {
  Rng rng(5);
  std::vector<EEGSentenceRecord> recs;
  for (int i = 0; i < 10; ++i)
    recs.push_back(make_record("s" + std::to_string(i), "SUBJ", "unique text " + std::to_string(i),
                               3, 4, rng));
  auto split = split_by_unique_sentence(recs, {0.8, 0.1, 0.1}, 312);
  CHECK(split.train.size() == 8);
  CHECK(split.dev.size() == 1);
  CHECK(split.test.size() == 1);
}

TEST_CASE("records sharing a text land in one split") {
  Rng rng(6);
  std::vector<EEGSentenceRecord> recs;
  for (int s = 0; s < 12; ++s)
    recs.push_back(make_record("shared", "SUBJ" + std::to_string(s), "the shared sentence", 2, 4, rng));
  for (int i = 0; i < 9; ++i)
    recs.push_back(make_record("u" + std::to_string(i), "SUBJ0", "unique " + std::to_string(i), 2, 4, rng));

  auto split = split_by_unique_sentence(recs, {0.8, 0.1, 0.1}, 7);
  int in_train = 0, in_dev = 0, in_test = 0;
  for (const auto& r : split.train) in_train += r.text == "the shared sentence";
  for (const auto& r : split.dev) in_dev += r.text == "the shared sentence";
  for (const auto& r : split.test) in_test += r.text == "the shared sentence";
  CHECK(((in_train == 12 && in_dev == 0 && in_test == 0) ||
         (in_train == 0 && in_dev == 12 && in_test == 0) ||
         (in_train == 0 && in_dev == 0 && in_test == 12)));
}

TEST_CASE("split determinism and error on too few texts") {
  Rng rng(7);
  auto recs = random_corpus(20, 4, rng);
  auto a = split_by_unique_sentence(recs, {0.8, 0.1, 0.1}, 99);
  auto b = split_by_unique_sentence(recs, {0.8, 0.1, 0.1}, 99);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].sentence_id == b.train[i].sentence_id);

  std::vector<EEGSentenceRecord> two{make_record("a", "S", "one", 1, 4, rng),
                                     make_record("b", "S", "two", 1, 4, rng)};
  CHECK_THROWS_AS(split_by_unique_sentence(two, {0.8, 0.1, 0.1}, 1), DataError);
}

TEST_CASE("split invariants over 100 random corpora and seeds") {
  Rng meta(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_texts = 3 + meta.below(40);
    std::vector<EEGSentenceRecord> recs;
    for (std::size_t t = 0; t < n_texts; ++t) {
      const std::size_t copies = 1 + meta.below(3);
      for (std::size_t c = 0; c < copies; ++c)
        recs.push_back(make_record("s" + std::to_string(t) + "_" + std::to_string(c),
                                   "SUBJ" + std::to_string(c), "text " + std::to_string(t), 1, 2,
                                   meta));
    }
    const std::uint64_t seed = meta.next_u64();
    auto split = split_by_unique_sentence(recs, {0.8, 0.1, 0.1}, seed);

    auto texts_of = [](const std::vector<EEGSentenceRecord>& rs) {
      std::set<std::string> out;
      for (const auto& r : rs) out.insert(r.text);
      return out;
    };
    auto tr = texts_of(split.train), dv = texts_of(split.dev), te = texts_of(split.test);
    for (const auto& t : te) {
      CHECK(!tr.count(t));
      CHECK(!dv.count(t));
    }
    for (const auto& t : dv) CHECK(!tr.count(t));
    CHECK(tr.size() + dv.size() + te.size() == n_texts);
    CHECK(split.train.size() + split.dev.size() + split.test.size() == recs.size());

    const double n = static_cast<double>(n_texts);
    CHECK(std::abs(static_cast<double>(tr.size()) - 0.8 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(dv.size()) - 0.1 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(te.size()) - 0.1 * n) <= 1.0);
  }
}

TEST_CASE("merge_tasks concatenates and rejects duplicate triples") {
  Rng rng(9);
  auto sr = random_corpus(5, 4, rng);
  auto nr = random_corpus(4, 4, rng);
  auto merged = merge_tasks({{"SR-v1.0", sr}, {"NR-v1.0", nr}});
  CHECK(merged.size() == 9);
  for (std::size_t i = 0; i < 5; ++i) CHECK(merged[i].task_id == "SR-v1.0");
  for (std::size_t i = 5; i < 9; ++i) CHECK(merged[i].task_id == "NR-v1.0");

  CHECK_THROWS_AS(merge_tasks({{"SR-v1.0", sr}, {"SR-v1.0", sr}}), DataError);
}

TEST_CASE("a text present in two tasks still occupies one split") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_corpus(6 + rng.below(6), 3, rng);
    auto b = random_corpus(6 + rng.below(6), 3, rng);
    // force text collisions across tasks
    b[0].text = a[0].text;
    b[1].text = a[2].text;
    auto merged = merge_tasks({{"T1", a}, {"T2", b}});
    auto split = split_by_unique_sentence(merged, {0.8, 0.1, 0.1}, rng.next_u64());
    std::unordered_map<std::string, std::set<int>> where;
    auto note = [&](const std::vector<EEGSentenceRecord>& rs, int b_idx) {
      for (const auto& r : rs) where[r.text].insert(b_idx);
    };
    note(split.train, 0);
    note(split.dev, 1);
    note(split.test, 2);
    for (const auto& [text, buckets] : where) CHECK(buckets.size() == 1);
  }
}

TEST_CASE("average_sentence_feature") {
  Rng rng(11);
  auto one = make_record("one", "S", "w", 1, 6, rng);
  auto avg1 = average_sentence_feature(one);
  for (std::size_t j = 0; j < 6; ++j) CHECK(avg1[j] == one.eeg[0][j]);

  auto sym = make_record("sym", "S", "a b", 2, 6, rng);
  for (std::size_t j = 0; j < 6; ++j) sym.eeg[1][j] = -sym.eeg[0][j];
  for (double v : average_sentence_feature(sym)) CHECK(v == 0.0);

  auto five = make_record("five", "S", "a b c d e", 5, 8, rng);
  auto avg = average_sentence_feature(five);
  for (std::size_t j = 0; j < 8; ++j) {
    double sum = 0.0;
    for (std::size_t w = 0; w < 5; ++w) sum += five.eeg[w][j];
    CHECK(avg[j] == doctest::Approx(sum / 5.0).epsilon(1e-12));
  }

  EEGSentenceRecord empty;
  empty.sentence_id = "empty";
  CHECK_THROWS_AS(average_sentence_feature(empty), DataError);
}

TEST_CASE("synthetic corpus: zero noise is exact token-code lookup") {
  SyntheticEncoderConfig cfg;
  cfg.vocab = numbered_vocab(10);
  cfg.noise_sigma = 0.0;
  cfg.seed = 42;
  cfg.feature_dim = 16;
  auto recs = generate_synthetic_corpus(cfg, 30, {2, 6});
  auto codes = synthetic_token_codes(cfg);

  std::unordered_map<std::string, std::size_t> tok_index;
  for (std::size_t i = 0; i < cfg.vocab.size(); ++i) tok_index[cfg.vocab[i]] = i;

  for (const auto& rec : recs) {
    auto toks = split_whitespace(rec.text);
    REQUIRE(toks.size() == rec.eeg.size());
    for (std::size_t w = 0; w < toks.size(); ++w) {
      const auto& code = codes[tok_index.at(toks[w])];
      for (std::size_t j = 0; j < code.size(); ++j) CHECK(rec.eeg[w][j] == code[j]);
    }
  }
}

TEST_CASE("synthetic corpus determinism") {
  SyntheticEncoderConfig cfg;
  cfg.vocab = numbered_vocab(8);
  cfg.noise_sigma = 0.3;
  cfg.seed = 77;
  cfg.feature_dim = 12;
  auto a = generate_synthetic_corpus(cfg, 20, {1, 5});
  auto b = generate_synthetic_corpus(cfg, 20, {1, 5});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(records_equal(a[i], b[i]));
}

TEST_CASE("nearest-code classification recovers tokens at low noise") {
  SyntheticEncoderConfig cfg;
  cfg.vocab = numbered_vocab(50);
  cfg.noise_sigma = 0.01;
  cfg.seed = 5;
  cfg.feature_dim = 840;
  auto recs = generate_synthetic_corpus(cfg, 60, {3, 9});
  auto codes = synthetic_token_codes(cfg);

  std::size_t correct = 0, total = 0;
  for (const auto& rec : recs) {
    auto toks = split_whitespace(rec.text);
    for (std::size_t w = 0; w < toks.size(); ++w) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_idx = 0;
      for (std::size_t c = 0; c < codes.size(); ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < codes[c].size(); ++j) {
          const double diff = codes[c][j] - rec.eeg[w][j];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          best_idx = c;
        }
      }
      correct += cfg.vocab[best_idx] == toks[w];
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.999);
}

TEST_CASE("synthetic config is validated") {
  SyntheticEncoderConfig cfg;
  cfg.vocab = {"only"};
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 5, {1, 3}), ConfigError);
  cfg.vocab = {"a", "a"};
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 5, {1, 3}), ConfigError);
  cfg.vocab = {"a", "b"};
  cfg.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 5, {1, 3}), ConfigError);
  cfg.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 5, {4, 2}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic_corpus(cfg, 0, {1, 3}), ConfigError);
}

TEST_CASE("corpus_stats counts per task") {
  Rng rng(13);
  auto recs = random_corpus(6, 3, rng);
  recs[5].task_id = "NR-v1.0";
  auto dropped = random_corpus(2, 3, rng);
  auto stats = corpus_stats(recs, dropped);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].task_id == "NR-v1.0");
  CHECK(stats[0].n_records == 1);
  CHECK(stats[1].task_id == "SR-v1.0");
  CHECK(stats[1].n_records == 5);
  CHECK(stats[1].n_dropped_nan == 2);
}
