#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegtext/data.hpp"
#include "eegtext/errors.hpp"
#include "eegtext/metrics.hpp"
#include "eegtext/translator.hpp"

namespace eegtext {

struct TrainConfig {
  double learning_rate = 5e-7;
  int epochs = 25;
  int batch_size = 32;
  std::string optimizer = "sgd";
  double momentum = 0.0;       // plain SGD by default
  int step_size = 20;          // StepLR
  double gamma = 0.1;          // StepLR decay factor, the scheduler convention
  std::uint64_t seed = 312;
  std::string selection_metric = "dev_loss";  // or "dev_bleu1"
  double clip_norm = 0.0;      // 0 disables clipping

  void validate() const {
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (optimizer != "sgd") throw ConfigError("unsupported optimizer: " + optimizer);
    if (step_size < 1) throw ConfigError("step_size must be >= 1");
    if (selection_metric != "dev_loss" && selection_metric != "dev_bleu1")
      throw ConfigError("unknown selection metric: " + selection_metric);
  }

  nlohmann::ordered_json to_json() const {
    return {{"learning_rate", learning_rate},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"optimizer", optimizer},
            {"momentum", momentum},
            {"step_size", step_size},
            {"gamma", gamma},
            {"seed", seed},
            {"selection_metric", selection_metric},
            {"clip_norm", clip_norm}};
  }
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.optimizer = j.value("optimizer", std::string("sgd"));
    cfg.momentum = j.value("momentum", 0.0);
    cfg.step_size = j.at("step_size").get<int>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.selection_metric = j.value("selection_metric", std::string("dev_loss"));
    cfg.clip_norm = j.value("clip_norm", 0.0);
    return cfg;
  }
};

inline double step_lr(double lr0, double gamma, int step_size, int epoch) {
  return lr0 * std::pow(gamma, static_cast<double>(epoch / step_size));
}

inline bool higher_is_better(const std::string& metric) {
  return metric == "dev_bleu1";
}

struct TrainState {
  int epoch = 0;  // next epoch to run
  long long global_step = 0;
  double current_lr = 0.0;
  double best_dev_value = 0.0;
  bool has_best = false;
  Rng::State rng_state{};

  nlohmann::ordered_json to_json() const {
    return {{"epoch", epoch},
            {"global_step", global_step},
            {"current_lr", current_lr},
            {"best_dev_value", best_dev_value},
            {"has_best", has_best},
            {"rng_state", rng_state}};
  }
  static TrainState from_json(const nlohmann::json& j) {
    TrainState s;
    s.epoch = j.at("epoch").get<int>();
    s.global_step = j.at("global_step").get<long long>();
    s.current_lr = j.at("current_lr").get<double>();
    s.best_dev_value = j.at("best_dev_value").get<double>();
    s.has_best = j.at("has_best").get<bool>();
    auto arr = j.at("rng_state").get<std::vector<std::uint64_t>>();
    if (arr.size() != 4) throw ConfigError("bad rng_state in checkpoint");
    std::copy(arr.begin(), arr.end(), s.rng_state.begin());
    return s;
  }
};

struct SgdOptimizer {
  double momentum = 0.0;
  double clip_norm = 0.0;
  std::vector<Matrix> velocity;

  void step(const std::vector<ag::Param*>& params, double lr) {
    if (momentum > 0.0 && velocity.empty()) {
      velocity.reserve(params.size());
      for (const auto* p : params) velocity.emplace_back(p->value.rows(), p->value.cols());
    }
    if (clip_norm > 0.0) {
      double norm_sq = 0.0;
      for (const auto* p : params) {
        if (!p->trainable || p->grad.empty()) continue;
        for (double g : p->grad.raw()) norm_sq += g * g;
      }
      const double norm = std::sqrt(norm_sq);
      if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto* p : params) {
          if (!p->trainable || p->grad.empty()) continue;
          for (double& g : p->grad.raw()) g *= scale;
        }
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      ag::Param* p = params[i];
      if (!p->trainable || p->grad.empty()) continue;
      if (momentum > 0.0) {
        Matrix& v = velocity[i];
        for (std::size_t k = 0; k < v.size(); ++k) {
          v.raw()[k] = momentum * v.raw()[k] + p->grad.raw()[k];
          p->value.raw()[k] -= lr * v.raw()[k];
        }
      } else {
        for (std::size_t k = 0; k < p->value.size(); ++k)
          p->value.raw()[k] -= lr * p->grad.raw()[k];
      }
    }
  }
};

struct TrainLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_metric = 0.0;
  double lr = 0.0;
  double wallclock_s = 0.0;

  nlohmann::ordered_json to_json() const {
    return {{"epoch", epoch},
            {"train_loss", train_loss},
            {"dev_metric", dev_metric},
            {"lr", lr},
            {"wallclock_s", wallclock_s}};
  }
};

// Append-only JSONL training log; the config is echoed at line 0.
class TrainLogWriter {
 public:
  TrainLogWriter() = default;
  TrainLogWriter(const std::string& path, const nlohmann::ordered_json& config_echo,
                 bool append = false) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw DataError("cannot open training log: " + path);
    if (!append) out_ << config_echo.dump() << "\n" << std::flush;
  }
  void write(const TrainLogEntry& entry) {
    if (out_.is_open()) out_ << entry.to_json().dump() << "\n" << std::flush;
  }

 private:
  std::ofstream out_;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  int best_epoch = -1;
  double best_dev_value = 0.0;
  TrainState final_state;
};

// ---- checkpointing ------------------------------------------------------

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'E', 'E', 'G', 'T', 'C', 'K', '0', '1'};

inline void append_doubles(std::string& buf, const Matrix& m) {
  const std::size_t bytes = m.size() * sizeof(double);
  const std::size_t off = buf.size();
  buf.resize(off + bytes);
  std::memcpy(buf.data() + off, m.data(), bytes);
}

inline void read_doubles(const std::string& buf, std::size_t& off, Matrix& m) {
  const std::size_t bytes = m.size() * sizeof(double);
  if (off + bytes > buf.size()) throw DataError("checkpoint truncated in parameter data");
  std::memcpy(m.data(), buf.data() + off, bytes);
  off += bytes;
}

inline nlohmann::ordered_json provenance_to_json(const Provenance& prov) {
  std::vector<std::string> hashes;
  hashes.reserve(prov.text_hashes.size());
  for (std::uint64_t h : prov.text_hashes) hashes.push_back(std::to_string(h));
  return {{"trained_on", prov.trained_on}, {"text_hashes", hashes}};
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance prov;
  prov.trained_on = j.at("trained_on").get<std::string>();
  for (const auto& h : j.at("text_hashes"))
    prov.text_hashes.insert(std::stoull(h.get<std::string>()));
  return prov;
}

}  // namespace detail

inline void save_checkpoint(BrainTranslator& model, const TrainState& state,
                            const SgdOptimizer& opt, const std::string& path) {
  std::vector<ag::Param*> params;
  model.collect_params(params);

  nlohmann::ordered_json header;
  header["version"] = 1;
  header["translator"] = model.config().to_json();
  header["backbone"] = {{"kind", model.backbone().kind()},
                        {"config", model.backbone().config_json()}};
  header["provenance"] = detail::provenance_to_json(model.provenance);
  header["state"] = state.to_json();
  header["optimizer"] = {{"momentum", opt.momentum},
                         {"clip_norm", opt.clip_norm},
                         {"has_velocity", !opt.velocity.empty()}};
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (const auto* p : params)
    manifest.push_back({{"name", p->name},
                        {"rows", p->value.rows()},
                        {"cols", p->value.cols()},
                        {"trainable", p->trainable}});
  header["params"] = std::move(manifest);

  std::string payload;
  const std::string header_str = header.dump();
  std::uint64_t header_len = header_str.size();
  payload.append(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  payload += header_str;
  for (const auto* p : params) detail::append_doubles(payload, p->value);
  if (!opt.velocity.empty()) {
    if (opt.velocity.size() != params.size())
      throw DataError("optimizer velocity does not match parameter list");
    for (const auto& v : opt.velocity) detail::append_doubles(payload, v);
  }
  const std::uint64_t checksum = fnv1a64(payload);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + tmp);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot rename " + tmp + " to " + path);
}

struct LoadedCheckpoint {
  std::shared_ptr<BrainTranslator> model;
  TrainState state;
  SgdOptimizer optimizer;
};

namespace detail {

struct RawCheckpoint {
  nlohmann::json header;
  std::string payload;  // after the 8+8 byte prefix: header bytes + arrays
  std::size_t data_offset = 0;
};

inline RawCheckpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kCheckpointMagic) + sizeof(std::uint64_t) * 2)
    throw DataError("checkpoint truncated: " + path);
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw DataError("not a checkpoint file (bad magic): " + path);

  RawCheckpoint raw;
  raw.payload = bytes.substr(sizeof(kCheckpointMagic), bytes.size() - sizeof(kCheckpointMagic) -
                                                           sizeof(std::uint64_t));
  std::uint64_t stored_checksum = 0;
  std::memcpy(&stored_checksum, bytes.data() + bytes.size() - sizeof(std::uint64_t),
              sizeof(std::uint64_t));
  if (fnv1a64(raw.payload) != stored_checksum)
    throw DataError("checkpoint corrupt or truncated (checksum mismatch): " + path);

  std::uint64_t header_len = 0;
  std::memcpy(&header_len, raw.payload.data(), sizeof(header_len));
  if (sizeof(header_len) + header_len > raw.payload.size())
    throw DataError("checkpoint truncated in header: " + path);
  try {
    raw.header = nlohmann::json::parse(
        raw.payload.substr(sizeof(header_len), static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint header unreadable: " + std::string(e.what()));
  }
  const int version = raw.header.at("version").get<int>();
  if (version != 1)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  raw.data_offset = sizeof(header_len) + static_cast<std::size_t>(header_len);
  return raw;
}

inline void assign_params(const RawCheckpoint& raw, std::vector<ag::Param*>& params,
                          SgdOptimizer& opt) {
  const auto& manifest = raw.header.at("params");
  if (manifest.size() != params.size())
    throw ConfigError("checkpoint parameter count does not match model");
  std::size_t off = raw.data_offset;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    if (entry.at("name").get<std::string>() != params[i]->name ||
        entry.at("rows").get<std::size_t>() != params[i]->value.rows() ||
        entry.at("cols").get<std::size_t>() != params[i]->value.cols())
      throw ConfigError("checkpoint parameter " + entry.at("name").get<std::string>() +
                        " is incompatible with the model");
    params[i]->trainable = entry.at("trainable").get<bool>();
    read_doubles(raw.payload, off, params[i]->value);
  }
  opt.momentum = raw.header.at("optimizer").at("momentum").get<double>();
  opt.clip_norm = raw.header.at("optimizer").at("clip_norm").get<double>();
  opt.velocity.clear();
  if (raw.header.at("optimizer").at("has_velocity").get<bool>()) {
    for (auto* p : params) {
      Matrix v(p->value.rows(), p->value.cols());
      read_doubles(raw.payload, off, v);
      opt.velocity.push_back(std::move(v));
    }
  }
  if (off != raw.payload.size()) throw DataError("checkpoint has trailing bytes");
}

}  // namespace detail

// Rebuilds the model from the stored configs, then assigns parameters.
inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto raw = detail::read_checkpoint_file(path);
  LoadedCheckpoint loaded;
  const auto translator_cfg = TranslatorConfig::from_json(raw.header.at("translator"));
  auto backbone = make_backbone(raw.header.at("backbone").at("kind").get<std::string>(),
                                raw.header.at("backbone").at("config"));
  loaded.model = std::make_shared<BrainTranslator>(translator_cfg, backbone);
  loaded.model->provenance = detail::provenance_from_json(raw.header.at("provenance"));
  loaded.state = TrainState::from_json(raw.header.at("state"));
  std::vector<ag::Param*> params;
  loaded.model->collect_params(params);
  detail::assign_params(raw, params, loaded.optimizer);
  return loaded;
}

// Loads into an existing model after checking config compatibility.
inline void load_checkpoint_into(BrainTranslator& model, TrainState& state, SgdOptimizer& opt,
                                 const std::string& path) {
  auto raw = detail::read_checkpoint_file(path);
  const auto stored = TranslatorConfig::from_json(raw.header.at("translator"));
  const auto current = model.config();
  if (stored.vocab_size != current.vocab_size)
    throw ConfigError("checkpoint vocab_size " + std::to_string(stored.vocab_size) +
                      " does not match model vocab_size " + std::to_string(current.vocab_size));
  if (stored.input_dim != current.input_dim || stored.backbone_hidden != current.backbone_hidden ||
      stored.mte_layers != current.mte_layers || stored.mte_heads != current.mte_heads ||
      stored.mte_ff_dim != current.mte_ff_dim || stored.use_mte != current.use_mte)
    throw ConfigError("checkpoint translator config does not match model");
  model.provenance = detail::provenance_from_json(raw.header.at("provenance"));
  state = TrainState::from_json(raw.header.at("state"));
  std::vector<ag::Param*> params;
  model.collect_params(params);
  detail::assign_params(raw, params, opt);
}

// ---- evaluation ----------------------------------------------------------

inline double evaluate_dev(BrainTranslator& model, const std::vector<EEGSentenceRecord>& dev,
                           const std::string& metric) {
  if (dev.empty()) throw DataError("evaluate_dev: empty dev set");
  if (metric == "dev_loss") {
    double total = 0.0;
    for (const auto& rec : dev) total += model.sentence_loss(rec);
    return total / static_cast<double>(dev.size());
  }
  if (metric == "dev_bleu1") {
    std::vector<std::vector<std::string>> cand, ref;
    for (const auto& rec : dev) {
      cand.push_back(metrics::tokenize(model.generate(rec).text));
      ref.push_back(metrics::tokenize(rec.text));
    }
    return metrics::bleu_n(cand, ref, 1).at(1);
  }
  throw ConfigError("unknown dev metric: " + metric);
}

// ---- the training loop ----------------------------------------------------

// Plain gradient descent on the mean reconstruction loss, StepLR schedule,
// best-epoch selection on the dev metric (ties keep the earliest epoch). The
// model ends up holding the best epoch's parameters.
inline TrainResult train_decoder(BrainTranslator& model, const DatasetSplit& split,
                                 const TrainConfig& cfg, TrainLogWriter* log_writer = nullptr,
                                 const std::string& last_checkpoint_path = "",
                                 const std::string& best_checkpoint_path = "",
                                 bool resume = false) {
  cfg.validate();
  if (split.train.empty()) throw DataError("train split is empty");
  for (const auto& rec : split.train)
    if (rec.eeg.empty() || rec.eeg.front().size() != model.config().input_dim)
      throw ConfigError("record " + rec.sentence_id + " does not match model input_dim");

  std::vector<ag::Param*> params;
  model.collect_params(params);

  SgdOptimizer opt;
  opt.momentum = cfg.momentum;
  opt.clip_norm = cfg.clip_norm;

  TrainState state;
  Rng shuffle_rng(cfg.seed);

  std::vector<Matrix> best_params;
  auto snapshot_best = [&] {
    best_params.clear();
    best_params.reserve(params.size());
    for (const auto* p : params) best_params.push_back(p->value);
  };

  if (resume && !last_checkpoint_path.empty()) {
    load_checkpoint_into(model, state, opt, last_checkpoint_path);
    shuffle_rng.set_state(state.rng_state);
    if (state.has_best && !best_checkpoint_path.empty()) {
      auto best = load_checkpoint(best_checkpoint_path);
      std::vector<ag::Param*> bp;
      best.model->collect_params(bp);
      best_params.clear();
      for (const auto* p : bp) best_params.push_back(p->value);
    }
  }
  if (model.provenance.trained_on.empty()) model.provenance.trained_on = "eeg_text";
  for (const auto& rec : split.train) model.provenance.record_text(rec.text);

  TrainResult result;
  result.best_epoch = -1;
  result.best_dev_value = state.best_dev_value;

  std::vector<std::size_t> order(split.train.size());
  const bool maximize = higher_is_better(cfg.selection_metric);

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const double lr = step_lr(cfg.learning_rate, cfg.gamma, cfg.step_size, epoch);
    state.current_lr = lr;

    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double batch_n = static_cast<double>(end - start);
      for (auto* p : params) p->zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& rec = split.train[order[k]];
        const Matrix eeg = eeg_matrix(rec);
        ag::Var loss = model.loss_graph(eeg, std::vector<bool>(eeg.rows(), true), rec.text);
        const double value = loss->val()(0, 0);
        if (!std::isfinite(value))
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(start / cfg.batch_size) +
                             ", sentence " + rec.sentence_id);
        loss_sum += value;
        ag::backward(loss, 1.0 / batch_n);
      }
      opt.step(params, lr);
      ++state.global_step;
    }

    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double dev_metric = split.dev.empty()
                                  ? train_loss
                                  : evaluate_dev(model, split.dev, cfg.selection_metric);

    const bool improved = !state.has_best || (maximize ? dev_metric > state.best_dev_value
                                                       : dev_metric < state.best_dev_value);
    if (improved) {
      state.best_dev_value = dev_metric;
      state.has_best = true;
      result.best_epoch = epoch;
      snapshot_best();
      if (!best_checkpoint_path.empty()) {
        TrainState best_state = state;
        best_state.epoch = epoch;
        best_state.rng_state = shuffle_rng.state();
        save_checkpoint(model, best_state, opt, best_checkpoint_path);
      }
    }

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = train_loss;
    entry.dev_metric = dev_metric;
    entry.lr = lr;
    entry.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.log.push_back(entry);
    if (log_writer) log_writer->write(entry);

    state.epoch = epoch + 1;
    state.rng_state = shuffle_rng.state();
    if (!last_checkpoint_path.empty()) save_checkpoint(model, state, opt, last_checkpoint_path);
  }

  // hand back the best epoch's parameters
  if (!best_params.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  }
  result.best_dev_value = state.best_dev_value;
  result.final_state = state;
  return result;
}

}  // namespace eegtext
