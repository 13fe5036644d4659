#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eegtext/data.hpp"
#include "eegtext/errors.hpp"
#include "eegtext/metrics.hpp"
#include "eegtext/sentiment.hpp"
#include "eegtext/synthetic.hpp"
#include "eegtext/trainer.hpp"
#include "eegtext/translator.hpp"

namespace eegtext::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

using Json = nlohmann::ordered_json;

// ---- run configuration -----------------------------------------------------

struct RunConfig {
  Json root = Json::object();
  std::map<std::string, std::string> input_hashes;

  static RunConfig load(const std::string& config_path,
                        const std::vector<std::string>& overrides,
                        std::optional<std::uint64_t> seed_override,
                        const std::string& out_override) {
    RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file: " + config_path);
      try {
        in >> cfg.root;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + config_path + " is not valid JSON: " + e.what());
      }
    }
    for (const auto& kv : overrides) cfg.apply_override(kv);
    if (seed_override) cfg.root["seed"] = *seed_override;
    if (!out_override.empty()) cfg.root["out_dir"] = out_override;
    if (const char* cache = std::getenv("EEGTEXT_CACHE_DIR"))
      cfg.root["cache_dir"] = std::string(cache);
    return cfg;
  }

  // dotted-path override, e.g. train.learning_rate=5e-7
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key.path=value, got: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    Json* node = &root;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      if (key.empty()) throw ConfigError("bad override path: " + path);
      if (dot == std::string::npos) {
        Json parsed;
        try {
          parsed = Json::parse(value);
        } catch (const nlohmann::json::exception&) {
          parsed = value;  // plain string
        }
        (*node)[key] = parsed;
        return;
      }
      node = &(*node)[key];
      start = dot + 1;
    }
  }

  void note_input(const std::string& path) { input_hashes[path] = hash_file(path); }

  Json provenance_block() const {
    Json j;
    j["run_config"] = root;
    Json hashes = Json::object();
    for (const auto& [path, hash] : input_hashes) hashes[path] = hash;
    j["input_hashes"] = hashes;
    return j;
  }

  std::uint64_t seed() const { return root.value("seed", std::uint64_t{312}); }
  std::string out_dir() const { return root.value("out_dir", std::string("out")); }
  const Json& section(const std::string& name) const {
    static const Json empty = Json::object();
    auto it = root.find(name);
    return it == root.end() ? empty : *it;
  }
};

inline void ensure_out_dir(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir());
}

inline void write_json(const std::string& path, const Json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot rename " + tmp + " to " + path);
}

// ---- shared assembly helpers -----------------------------------------------

inline TranslatorConfig translator_config_from(const Json& section) {
  TranslatorConfig cfg;
  cfg.input_dim = section.value("input_dim", cfg.input_dim);
  cfg.backbone_hidden = section.value("backbone_hidden", cfg.backbone_hidden);
  cfg.mte_layers = section.value("mte_layers", cfg.mte_layers);
  cfg.mte_heads = section.value("mte_heads", cfg.mte_heads);
  cfg.mte_ff_dim = section.value("mte_ff_dim", cfg.mte_ff_dim);
  cfg.max_target_len = section.value("max_target_len", cfg.max_target_len);
  cfg.use_mte = section.value("use_mte", cfg.use_mte);
  cfg.init_seed = section.value("init_seed", cfg.init_seed);
  if (section.contains("decode"))
    cfg.decode = DecodeStrategy::parse(section.at("decode").get<std::string>());
  return cfg;
}

inline TrainConfig train_config_from(const Json& section, std::uint64_t default_seed) {
  TrainConfig cfg;
  cfg.learning_rate = section.value("learning_rate", cfg.learning_rate);
  cfg.epochs = section.value("epochs", cfg.epochs);
  cfg.batch_size = section.value("batch_size", cfg.batch_size);
  cfg.optimizer = section.value("optimizer", cfg.optimizer);
  cfg.momentum = section.value("momentum", cfg.momentum);
  cfg.step_size = section.value("step_size", cfg.step_size);
  cfg.gamma = section.value("gamma", cfg.gamma);
  cfg.seed = section.value("seed", default_seed);
  cfg.selection_metric = section.value("selection_metric", cfg.selection_metric);
  cfg.clip_norm = section.value("clip_norm", cfg.clip_norm);
  return cfg;
}

// Builds the translator plus a toy backbone whose vocabulary comes from the
// given texts.
inline std::shared_ptr<BrainTranslator> build_decoder(const RunConfig& cfg,
                                                      const std::vector<std::string>& vocab_texts,
                                                      std::size_t feature_dim) {
  const Json& bb_section = cfg.section("backbone");
  const std::string kind = bb_section.value("kind", std::string("toy"));
  if (kind != "toy")
    throw ConfigError("unsupported backbone kind '" + kind +
                      "' (pretrained backbones plug in behind the Seq2SeqBackbone interface)");
  ToyBackboneConfig bb;
  {
    std::set<std::string> words;
    for (const auto& text : vocab_texts)
      for (const auto& w : split_whitespace(text)) words.insert(w);
    bb.vocab_words.assign(words.begin(), words.end());
  }
  bb.hidden = bb_section.value("hidden", std::size_t{32});
  bb.layers = bb_section.value("layers", std::size_t{2});
  bb.heads = bb_section.value("heads", std::size_t{2});
  bb.ff_dim = bb_section.value("ff_dim", 2 * bb.hidden);
  bb.seed = bb_section.value("seed", cfg.seed());
  bb.tied_lm_head = bb_section.value("tied_lm_head", true);
  auto backbone = std::make_shared<ToyBackbone>(bb);

  TranslatorConfig tcfg = translator_config_from(cfg.section("translator"));
  tcfg.input_dim = feature_dim;
  tcfg.backbone_hidden = bb.hidden;
  tcfg.vocab_size = static_cast<std::size_t>(backbone->vocab_size());
  if (!cfg.section("translator").contains("init_seed")) tcfg.init_seed = cfg.seed();
  return std::make_shared<BrainTranslator>(tcfg, backbone);
}

inline std::size_t corpus_feature_dim(const std::vector<EEGSentenceRecord>& records) {
  if (records.empty() || records.front().eeg.empty())
    throw DataError("corpus has no feature vectors");
  return records.front().eeg.front().size();
}

// ---- subcommand implementations ---------------------------------------------

inline int cmd_prepare_data(RunConfig& cfg) {
  const Json& tasks = cfg.section("tasks");
  if (!tasks.is_array() || tasks.empty())
    throw ConfigError("prepare-data needs a non-empty 'tasks' list in the config");
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  if (cfg.root.contains("ratios")) {
    auto r = cfg.root.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw ConfigError("ratios must have three entries");
    std::copy(r.begin(), r.end(), ratios.begin());
  }
  const std::size_t feature_dim = cfg.section("data").value("feature_dim", std::size_t{0});

  ensure_out_dir(cfg);
  DatasetSplit merged;
  merged.ratios = ratios;
  merged.seed = cfg.seed();
  std::vector<TaskStats> stats;

  for (const auto& task : tasks) {
    const std::string task_id = task.at("task_id").get<std::string>();
    const std::string path = task.at("path").get<std::string>();
    cfg.note_input(path);
    auto records = load_corpus(path, feature_dim);
    // single-task corpora may not repeat a (sentence, subject) pair
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& rec : records)
      if (!pairs.emplace(rec.sentence_id, rec.subject_id).second)
        throw DataError(path + ": duplicate (sentence_id, subject) pair (" + rec.sentence_id +
                        ", " + rec.subject_id + ")");
    auto stamped = merge_tasks({{task_id, records}});
    auto cleaned = clean_nan(stamped);
    std::vector<EEGSentenceRecord> dropped;
    for (const auto& rec : stamped) {
      bool finite = true;
      for (const auto& w : rec.eeg)
        for (double v : w) finite = finite && std::isfinite(v);
      if (!finite) dropped.push_back(rec);
    }
    auto task_stats = corpus_stats(cleaned, dropped);
    stats.insert(stats.end(), task_stats.begin(), task_stats.end());

    // split each reading task's data, then merge the splits
    auto split = split_by_unique_sentence(cleaned, ratios, cfg.seed());
    merged.train.insert(merged.train.end(), split.train.begin(), split.train.end());
    merged.dev.insert(merged.dev.end(), split.dev.begin(), split.dev.end());
    merged.test.insert(merged.test.end(), split.test.begin(), split.test.end());
  }

  const std::string out = cfg.out_dir();
  write_corpus(merged.train, out + "/train.jsonl");
  write_corpus(merged.dev, out + "/dev.jsonl");
  write_corpus(merged.test, out + "/test.jsonl");

  Json stats_json = cfg.provenance_block();
  Json rows = Json::array();
  for (const auto& st : stats)
    rows.push_back({{"task", st.task_id},
                    {"sentences", st.n_sentences},
                    {"records", st.n_records},
                    {"subjects", st.n_subjects},
                    {"dropped_nan", st.n_dropped_nan}});
  stats_json["tasks"] = rows;
  stats_json["split_records"] = {{"train", merged.train.size()},
                                 {"dev", merged.dev.size()},
                                 {"test", merged.test.size()}};
  write_json(out + "/stats.json", stats_json);
  std::cout << "wrote " << out << "/{train,dev,test}.jsonl and stats.json\n";
  return kExitOk;
}

inline int cmd_train_decoder(RunConfig& cfg, bool resume) {
  const Json& data = cfg.section("data");
  if (!data.contains("train")) throw ConfigError("train-decoder needs data.train");
  const std::string train_path = data.at("train").get<std::string>();
  const std::string dev_path = data.value("dev", std::string());
  cfg.note_input(train_path);
  if (!dev_path.empty()) cfg.note_input(dev_path);

  DatasetSplit split;
  split.train = load_corpus(train_path, data.value("feature_dim", std::size_t{0}));
  if (!dev_path.empty()) split.dev = load_corpus(dev_path, data.value("feature_dim", std::size_t{0}));
  if (split.train.empty()) throw DataError("training corpus is empty: " + train_path);

  std::vector<std::string> vocab_texts;
  for (const auto& rec : split.train) vocab_texts.push_back(rec.text);
  for (const auto& rec : split.dev) vocab_texts.push_back(rec.text);
  auto model = build_decoder(cfg, vocab_texts, corpus_feature_dim(split.train));

  TrainConfig tcfg = train_config_from(cfg.section("train"), cfg.seed());
  ensure_out_dir(cfg);
  const std::string out = cfg.out_dir();

  Json echo = cfg.provenance_block();
  echo["train_config"] = tcfg.to_json();
  echo["translator_config"] = model->config().to_json();
  TrainLogWriter log_writer(out + "/train_log.jsonl", echo, resume);

  auto result = train_decoder(*model, split, tcfg, &log_writer, out + "/last.ckpt",
                              out + "/best.ckpt", resume);

  Json summary = cfg.provenance_block();
  summary["train_config"] = tcfg.to_json();
  summary["translator_config"] = model->config().to_json();
  summary["best_epoch"] = result.best_epoch;
  summary["best_dev_value"] = result.best_dev_value;
  summary["epochs_run"] = result.log.size();
  summary["parameters"] = model->total_parameters();
  write_json(out + "/train_summary.json", summary);
  std::cout << "best dev " << result.best_dev_value << " at epoch " << result.best_epoch
            << "; checkpoints in " << out << "\n";
  return kExitOk;
}

inline int cmd_evaluate_decoder(RunConfig& cfg, const std::string& checkpoint_path,
                                const std::string& test_path) {
  if (checkpoint_path.empty() || test_path.empty())
    throw ConfigError("evaluate-decoder needs --checkpoint and --test");
  cfg.note_input(checkpoint_path);
  cfg.note_input(test_path);

  auto loaded = load_checkpoint(checkpoint_path);
  auto records = load_corpus(test_path, 0);
  if (records.empty()) throw DataError("test corpus is empty: " + test_path);
  if (corpus_feature_dim(records) != loaded.model->config().input_dim)
    throw ConfigError("test corpus feature dim does not match the checkpoint");

  DecodeStrategy strategy = loaded.model->config().decode;
  if (cfg.section("eval").contains("strategy"))
    strategy = DecodeStrategy::parse(cfg.section("eval").at("strategy").get<std::string>());

  std::vector<std::string> truths, decodeds;
  for (const auto& rec : records) {
    const Matrix eeg = eeg_matrix(rec);
    auto gen = loaded.model->generate(eeg, std::vector<bool>(eeg.rows(), true), strategy);
    truths.push_back(rec.text);
    decodeds.push_back(gen.text);
  }

  metrics::GazetteerNER ner;
  auto report = metrics::evaluate_decoding(truths, decodeds, strategy.to_string(), ner);

  ensure_out_dir(cfg);
  const std::string out = cfg.out_dir();
  {
    std::ofstream dump(out + "/decoded.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < truths.size(); ++i)
      dump << Json{{"truth", truths[i]}, {"decoded", decodeds[i]}}.dump() << "\n";
  }
  Json report_json = cfg.provenance_block();
  report_json["metrics"] = report.to_json();
  report_json["checkpoint"] = checkpoint_path;
  write_json(out + "/report.json", report_json);
  std::cout << "BLEU-1 " << report.bleu.at(1) << ", ROUGE-1 F " << report.rouge_1.f << " over "
            << report.n_pairs << " pairs\n";
  return kExitOk;
}

inline std::vector<sentiment::LabeledText> load_labeled_texts(const std::string& path,
                                                              std::size_t* n_excluded = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sentiment corpus: " + path);
  std::vector<sentiment::LabeledText> out;
  std::string line;
  std::size_t line_no = 0, excluded = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    const std::string text = j.at("text").get<std::string>();
    if (j.contains("label") && !j.at("label").is_null()) {
      out.emplace_back(text, sentiment_from_int(j.at("label").get<int>()));
    } else if (j.contains("score")) {
      auto label = sentiment::bin_sst_score(j.at("score").get<double>());
      if (label)
        out.emplace_back(text, *label);
      else
        ++excluded;
    } else {
      throw DataError(path + ":" + std::to_string(line_no) + ": record needs score or label");
    }
  }
  if (n_excluded) *n_excluded = excluded;
  return out;
}

inline int cmd_train_classifier(RunConfig& cfg) {
  const Json& section = cfg.section("classifier");
  if (!section.contains("external"))
    throw ConfigError("train-classifier needs classifier.external (text-sentiment JSONL)");
  const std::string external_path = section.at("external").get<std::string>();
  cfg.note_input(external_path);

  std::size_t excluded_by_score = 0;
  auto labeled = load_labeled_texts(external_path, &excluded_by_score);

  std::set<std::string> protected_texts;
  if (section.contains("protect")) {
    for (const auto& p : section.at("protect")) {
      const std::string path = p.get<std::string>();
      cfg.note_input(path);
      for (const auto& rec : load_corpus(path, 0)) protected_texts.insert(rec.text);
    }
  }
  const std::size_t before = labeled.size();
  labeled = sentiment::exclude_overlap(labeled, protected_texts);

  sentiment::BagOfWordsClassifier clf(section.value("epochs", 200),
                                      section.value("learning_rate", 0.5));
  clf.train(labeled);

  ensure_out_dir(cfg);
  const std::string out = cfg.out_dir();
  Json artifact = clf.to_json();
  artifact["provenance"]["protected_overlap_removed"] = before - labeled.size();
  artifact["provenance"]["excluded_by_score"] = excluded_by_score;
  write_json(out + "/classifier.json", artifact);

  Json summary = cfg.provenance_block();
  summary["trained_on"] = labeled.size();
  summary["excluded_by_score"] = excluded_by_score;
  summary["overlap_removed"] = before - labeled.size();
  write_json(out + "/classifier_summary.json", summary);
  std::cout << "trained classifier on " << labeled.size() << " texts (" << before - labeled.size()
            << " removed as protected)\n";
  return kExitOk;
}

inline int cmd_train_baseline(RunConfig& cfg) {
  const Json& data = cfg.section("data");
  if (!data.contains("train") || !data.contains("test"))
    throw ConfigError("train-baseline needs data.train and data.test");
  cfg.note_input(data.at("train").get<std::string>());
  cfg.note_input(data.at("test").get<std::string>());
  auto train = load_corpus(data.at("train").get<std::string>(), 0);
  auto test = load_corpus(data.at("test").get<std::string>(), 0);
  std::vector<EEGSentenceRecord> dev;
  if (data.contains("dev")) {
    cfg.note_input(data.at("dev").get<std::string>());
    dev = load_corpus(data.at("dev").get<std::string>(), 0);
  }
  for (const auto* set : {&train, &test, &dev})
    for (const auto& rec : *set)
      if (!rec.sentiment) throw DataError("record " + rec.sentence_id + " has no sentiment label");

  const Json& section = cfg.section("baseline");
  sentiment::EEGClassifierConfig ccfg;
  ccfg.kind = sentiment::classifier_kind_from_string(section.value("kind", std::string("mlp")));
  ccfg.input_dim = corpus_feature_dim(train);
  ccfg.hidden = section.value("hidden", std::size_t{64});
  ccfg.encoder_layers = section.value("encoder_layers", std::size_t{2});
  ccfg.heads = section.value("heads", std::size_t{2});
  ccfg.ff_dim = section.value("ff_dim", std::size_t{128});
  ccfg.dropout = section.value("dropout", 0.2);
  ccfg.seed = cfg.seed();

  TrainConfig tcfg = train_config_from(cfg.section("train"), cfg.seed());
  if (!cfg.section("train").contains("learning_rate"))
    tcfg.learning_rate = sentiment::default_baseline_lr(ccfg.kind);

  auto result = sentiment::train_eeg_baseline(ccfg, train, tcfg, dev);

  std::vector<SentimentLabel> preds, golds;
  for (const auto& rec : test) {
    preds.push_back(result.classifier->predict(rec).label);
    golds.push_back(*rec.sentiment);
  }
  auto report = sentiment::classification_report(preds, golds);

  ensure_out_dir(cfg);
  Json out_json = cfg.provenance_block();
  out_json["model"] = sentiment::to_string(ccfg.kind);
  out_json["train_config"] = tcfg.to_json();
  out_json["report"] = report.to_json();
  out_json["warnings"] = result.warnings;
  out_json["best_epoch"] = result.best_epoch;
  write_json(cfg.out_dir() + "/baseline_report.json", out_json);
  std::cout << sentiment::to_string(ccfg.kind) << " test accuracy " << report.accuracy
            << ", macro-F1 " << report.macro_f1 << "\n";
  return kExitOk;
}

inline int cmd_run_zeroshot(RunConfig& cfg, const std::string& decoder_path,
                            const std::string& classifier_path, const std::string& eval_path) {
  if (decoder_path.empty() || classifier_path.empty() || eval_path.empty())
    throw ConfigError("run-zeroshot needs --decoder, --classifier and --eval");
  cfg.note_input(decoder_path);
  cfg.note_input(classifier_path);
  cfg.note_input(eval_path);

  auto loaded = load_checkpoint(decoder_path);
  sentiment::TranslatorDecoder decoder(loaded.model);

  std::ifstream cf(classifier_path);
  if (!cf) throw DataError("cannot open classifier artifact: " + classifier_path);
  Json artifact;
  cf >> artifact;
  auto classifier = sentiment::BagOfWordsClassifier::from_json(artifact);

  auto records = load_corpus(eval_path, 0);
  if (records.empty()) throw DataError("evaluation corpus is empty: " + eval_path);

  std::vector<SentimentLabel> preds, golds;
  Json dump = Json::array();
  std::size_t unlabeled = 0;
  for (const auto& rec : records) {
    auto result = sentiment::zero_shot_classify(decoder, *classifier, rec);
    dump.push_back({{"sentence_id", rec.sentence_id},
                    {"decoded", result.decoded_text},
                    {"predicted", static_cast<int>(result.label)},
                    {"gold", rec.sentiment ? Json(static_cast<int>(*rec.sentiment)) : Json()}});
    if (rec.sentiment) {
      preds.push_back(result.label);
      golds.push_back(*rec.sentiment);
    } else {
      ++unlabeled;
    }
  }
  if (preds.empty()) throw DataError("no labeled records in " + eval_path);
  auto report = sentiment::classification_report(preds, golds);

  ensure_out_dir(cfg);
  Json out_json = cfg.provenance_block();
  out_json["decoder"] = decoder_path;
  out_json["classifier"] = classifier_path;
  out_json["decode_strategy"] = loaded.model->config().decode.to_string();
  out_json["report"] = report.to_json();
  out_json["skipped_unlabeled"] = unlabeled;
  out_json["predictions"] = dump;
  write_json(cfg.out_dir() + "/zeroshot_report.json", out_json);
  std::cout << "zero-shot accuracy " << report.accuracy << ", macro-F1 " << report.macro_f1
            << " over " << preds.size() << " records\n";
  return kExitOk;
}

inline int cmd_scaling_study(RunConfig& cfg) {
  const Json& unions = cfg.section("unions");
  if (!unions.is_array() || unions.size() < 2)
    throw ConfigError("scaling-study needs at least two task unions");
  const Json& data = cfg.section("data");
  if (!data.contains("test")) throw ConfigError("scaling-study needs data.test");
  cfg.note_input(data.at("test").get<std::string>());
  auto test = load_corpus(data.at("test").get<std::string>(), 0);
  if (test.empty()) throw DataError("scaling-study test corpus is empty");
  std::set<std::string> test_texts;
  for (const auto& rec : test) test_texts.insert(rec.text);

  TrainConfig tcfg = train_config_from(cfg.section("train"), cfg.seed());
  metrics::GazetteerNER ner;
  Json rows = Json::array();

  for (const auto& u : unions) {
    const std::string name = u.at("name").get<std::string>();
    std::vector<std::pair<std::string, std::vector<EEGSentenceRecord>>> corpora;
    std::size_t member_records = 0;
    for (const auto& task : u.at("tasks")) {
      const std::string task_id = task.at("task_id").get<std::string>();
      const std::string path = task.at("path").get<std::string>();
      cfg.note_input(path);
      auto records = load_corpus(path, 0);
      member_records += records.size();
      corpora.emplace_back(task_id, std::move(records));
    }
    auto merged = clean_nan(merge_tasks(corpora));

    DatasetSplit split;
    for (const auto& rec : merged) {
      if (!test_texts.count(rec.text)) split.train.push_back(rec);
    }
    if (split.train.empty()) throw DataError("union " + name + " has no usable training data");

    std::vector<std::string> vocab_texts;
    for (const auto& rec : split.train) vocab_texts.push_back(rec.text);
    for (const auto& rec : test) vocab_texts.push_back(rec.text);
    auto model = build_decoder(cfg, vocab_texts, corpus_feature_dim(split.train));

    train_decoder(*model, split, tcfg);

    std::vector<std::string> truths, decodeds;
    for (const auto& rec : test) {
      truths.push_back(rec.text);
      decodeds.push_back(model->generate(rec).text);
    }
    auto report = metrics::evaluate_decoding(truths, decodeds,
                                             model->config().decode.to_string(), ner);
    std::set<std::string> train_texts;
    for (const auto& rec : split.train) train_texts.insert(rec.text);
    rows.push_back({{"union", name},
                    {"member_records", member_records},
                    {"train_records", split.train.size()},
                    {"train_sentences", train_texts.size()},
                    {"metrics", report.to_json()}});
    std::cout << name << ": BLEU-1 " << report.bleu.at(1) << " (train " << split.train.size()
              << " records)\n";
  }

  ensure_out_dir(cfg);
  Json out_json = cfg.provenance_block();
  out_json["train_config"] = tcfg.to_json();
  out_json["rows"] = rows;
  write_json(cfg.out_dir() + "/scaling_study.json", out_json);
  return kExitOk;
}

inline int cmd_report(const std::string& in_path) {
  if (in_path.empty()) throw ConfigError("report needs --in FILE");
  std::ifstream in(in_path);
  if (!in) throw DataError("cannot open report: " + in_path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report is not valid JSON: " + std::string(e.what()));
  }

  auto print_metrics = [](const Json& m) {
    std::cout << "  metric          value\n";
    for (const auto& [name, value] : m.at("bleu").items())
      std::cout << "  " << name << "          " << value.get<double>() << "\n";
    std::cout << "  rouge1-f        " << m.at("rouge1").at("f").get<double>() << "\n";
    std::cout << "  sim_lcs         " << m.at("sim_lcs").get<double>() << "\n";
    std::cout << "  sim_multiset    " << m.at("sim_multiset").get<double>() << "\n";
    std::cout << "  pairs           " << m.at("n_pairs").get<std::size_t>() << "\n";
    std::cout << "  strategy        " << m.at("decode_strategy").get<std::string>() << "\n";
  };

  if (j.contains("rows")) {
    std::cout << "union            train  BLEU-1  ROUGE-1F\n";
    for (const auto& row : j.at("rows"))
      std::cout << "  " << row.at("union").get<std::string>() << "  "
                << row.at("train_records").get<std::size_t>() << "  "
                << row.at("metrics").at("bleu").at("bleu-1").get<double>() << "  "
                << row.at("metrics").at("rouge1").at("f").get<double>() << "\n";
  } else if (j.contains("metrics")) {
    print_metrics(j.at("metrics"));
  } else if (j.contains("report")) {
    const auto& r = j.at("report");
    std::cout << "  class      precision  recall  f1\n";
    for (const auto& row : r.at("per_class"))
      std::cout << "  " << row.at("class").get<std::string>() << "  "
                << row.at("precision").get<double>() << "  " << row.at("recall").get<double>()
                << "  " << row.at("f1").get<double>() << "\n";
    std::cout << "  accuracy " << r.at("accuracy").get<double>() << ", macro-F1 "
              << r.at("macro_f1").get<double>() << "\n";
    std::cout << "  predicted distribution:";
    for (const auto& c : r.at("predicted_distribution")) std::cout << " " << c.get<std::size_t>();
    std::cout << "\n";
  } else if (j.contains("tasks")) {
    std::cout << "task        sentences  records  subjects  dropped\n";
    for (const auto& row : j.at("tasks"))
      std::cout << "  " << row.at("task").get<std::string>() << "  "
                << row.at("sentences").get<std::size_t>() << "  "
                << row.at("records").get<std::size_t>() << "  "
                << row.at("subjects").get<std::size_t>() << "  "
                << row.at("dropped_nan").get<std::size_t>() << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return kExitOk;
}

// ---- entry point -------------------------------------------------------------

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"EEG-to-text decoding toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, test_path, decoder_path, classifier_path,
      eval_path, report_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool resume = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("set", overrides, "dotted-path overrides, e.g. train.learning_rate=5e-7");
  };

  auto* prepare = app.add_subcommand("prepare-data", "clean, merge and split corpora");
  add_common(prepare);
  auto* train = app.add_subcommand("train-decoder", "train the EEG-to-text decoder");
  add_common(train);
  train->add_flag("--resume", resume, "resume from last.ckpt in the output directory");
  auto* evaluate = app.add_subcommand("evaluate-decoder", "score a checkpoint on a test corpus");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "decoder checkpoint");
  evaluate->add_option("--test", test_path, "test corpus JSONL");
  auto* train_clf = app.add_subcommand("train-classifier", "train the external text classifier");
  add_common(train_clf);
  auto* baseline = app.add_subcommand("train-baseline", "train a supervised EEG baseline");
  add_common(baseline);
  auto* zeroshot = app.add_subcommand("run-zeroshot", "decode-then-classify sentiment pipeline");
  add_common(zeroshot);
  zeroshot->add_option("--decoder", decoder_path, "decoder checkpoint");
  zeroshot->add_option("--classifier", classifier_path, "classifier artifact JSON");
  zeroshot->add_option("--eval", eval_path, "labeled EEG corpus to evaluate");
  auto* scaling = app.add_subcommand("scaling-study", "train decoders on growing task unions");
  add_common(scaling);
  auto* report = app.add_subcommand("report", "render a JSON report as a table");
  report->add_option("--in", report_path, "report JSON file");

  std::vector<std::string> argv_copy(args.begin(), args.end());
  std::reverse(argv_copy.begin(), argv_copy.end());
  try {
    app.parse(argv_copy);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (report->parsed()) return cmd_report(report_path);
    RunConfig cfg = RunConfig::load(config_path, overrides, seed, out_dir);
    if (prepare->parsed()) return cmd_prepare_data(cfg);
    if (train->parsed()) return cmd_train_decoder(cfg, resume);
    if (evaluate->parsed()) return cmd_evaluate_decoder(cfg, checkpoint, test_path);
    if (train_clf->parsed()) return cmd_train_classifier(cfg);
    if (baseline->parsed()) return cmd_train_baseline(cfg);
    if (zeroshot->parsed()) return cmd_run_zeroshot(cfg, decoder_path, classifier_path, eval_path);
    if (scaling->parsed()) return cmd_scaling_study(cfg);
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace eegtext::cli
