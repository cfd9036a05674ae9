#include "amrforge/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "amrforge/parallel.hpp"
#include "amrforge/rng.hpp"
#include "amrforge/triples.hpp"

namespace amrforge {

namespace fs = std::filesystem;

std::string_view train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::FFT:
      return "fft";
    case TrainMode::LORA:
      return "lora";
    case TrainMode::FFT_THEN_LORA:
      return "fft-lora";
  }
  return "fft";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "fft") return TrainMode::FFT;
  if (name == "lora") return TrainMode::LORA;
  if (name == "fft-lora" || name == "fft_then_lora") return TrainMode::FFT_THEN_LORA;
  throw std::invalid_argument("unknown training mode: " + std::string(name));
}

void LoraSpec::validate() const {
  if (rank <= 0) throw std::invalid_argument("lora rank must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("lora alpha must be positive");
  if (targets.empty()) throw std::invalid_argument("lora targets must not be empty");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !(lora_learning_rate >= 0.0)) {
    throw std::invalid_argument("learning rates must be non-negative");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_source_len <= 0 || max_target_len <= 1) throw std::invalid_argument("max lengths must be positive");
  if (epochs < 0 || lora_epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be non-negative");
  if (mode != TrainMode::FFT && lora_specs.empty()) throw std::invalid_argument("lora_specs must not be empty");
  for (const auto& s : lora_specs) s.validate();
  model.validate();
  if (max_source_len > model.max_len || max_target_len > model.max_len) {
    throw std::invalid_argument("max lengths exceed model.max_len");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : c.lora_specs) specs.push_back({{"rank", s.rank}, {"alpha", s.alpha}, {"targets", s.targets}});
  nlohmann::json model;
  to_json(model, c.model);
  return {{"mode", std::string(train_mode_name(c.mode))},
          {"learning_rate", c.learning_rate},
          {"lora_learning_rate", c.lora_learning_rate},
          {"batch_size", c.batch_size},
          {"max_source_len", c.max_source_len},
          {"max_target_len", c.max_target_len},
          {"epochs", c.epochs},
          {"lora_epochs", c.lora_epochs},
          {"seed", c.seed},
          {"lora_specs", specs},
          {"grad_clip", c.grad_clip},
          {"model", model},
          {"workers", c.workers}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") c.mode = parse_train_mode(value.get<std::string>());
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "lora_learning_rate") c.lora_learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_source_len") c.max_source_len = value.get<int>();
      else if (key == "max_target_len") c.max_target_len = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "lora_epochs") c.lora_epochs = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "grad_clip") c.grad_clip = value.get<double>();
      else if (key == "workers") c.workers = value.get<unsigned>();
      else if (key == "model") {
        nlohmann::json merged;
        to_json(merged, c.model);
        merged.update(value);
        from_json(merged, c.model);
      } else if (key == "lora_specs") {
        c.lora_specs.clear();
        for (const auto& s : value) {
          LoraSpec spec;
          spec.rank = s.at("rank").get<int>();
          spec.alpha = s.at("alpha").get<double>();
          if (s.contains("targets")) spec.targets = s.at("targets").get<std::vector<std::string>>();
          c.lora_specs.push_back(spec);
        }
      } else {
        throw std::invalid_argument("unknown training config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad training config: ") + e.what());
  }
  return c;
}

void Adam::step(std::map<std::string, Mat>& params, const std::map<std::string, Mat>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto& w = params.at(name);
    auto [mit, fresh] = m_.try_emplace(name, Mat::Zero(g.rows(), g.cols()));
    auto& v = v_.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
    auto& m = mit->second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    if (lr_ == 0.0) continue;
    w.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(std::map<std::string, Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [_, g] : grads) g *= k;
  }
  return norm;
}

namespace {

void check_finite(double loss, std::string_view what) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << what << ": non-finite loss (" << loss << ")";
    throw TrainingError(msg.str());
  }
}

std::map<std::string, Mat> flatten(const std::map<std::string, LowRank>& low) {
  std::map<std::string, Mat> out;
  for (const auto& [name, lr] : low) {
    out.emplace(name + ".A", lr.A);
    out.emplace(name + ".B", lr.B);
  }
  return out;
}

void unflatten(const std::map<std::string, Mat>& flat, std::map<std::string, LowRank>& low) {
  for (auto& [name, lr] : low) {
    lr.A = flat.at(name + ".A");
    lr.B = flat.at(name + ".B");
  }
}

}  // namespace

double fft_step(Parameters& params, const ModelSpec& spec, const std::vector<Example>& batch, Adam& optimizer,
                const TrainConfig& config) {
  LossOptions opts;
  opts.workers = config.workers;
  auto result = loss_and_grads(params, spec, batch, nullptr, opts);
  check_finite(result.loss, "fft step");
  clip_gradients(result.grads, config.grad_clip);
  optimizer.step(params, result.grads);
  return result.loss;
}

AdapterState attach_lora(const Parameters& params, const LoraSpec& spec, std::uint64_t seed) {
  spec.validate();
  AdapterState state;
  state.rank = spec.rank;
  state.alpha = spec.alpha;
  std::uint64_t index = 0;
  for (const auto& target : spec.targets) {
    bool found = false;
    for (const auto& [name, w] : params) {
      const auto dot = name.rfind('.');
      if (dot == std::string::npos || name.substr(dot + 1) != target) continue;
      if (name.find("attn.") == std::string::npos) continue;
      found = true;
      Rng rng(derive_seed(seed, index++));
      LowRank lr;
      lr.A = Mat(spec.rank, w.cols());
      const double std = 1.0 / std::sqrt(static_cast<double>(w.cols()));
      for (Eigen::Index k = 0; k < lr.A.size(); ++k) lr.A.data()[k] = std * rng.normal();
      lr.B = Mat::Zero(w.rows(), spec.rank);
      state.targets.emplace(name, std::move(lr));
    }
    if (!found) throw std::invalid_argument("lora target not found: " + target);
  }
  return state;
}

void merge(AdapterState& adapters, Parameters& params) {
  if (adapters.merged) throw std::logic_error("adapters already merged");
  for (const auto& [name, lr] : adapters.targets) params.at(name) += adapters.scale() * (lr.B * lr.A);
  adapters.merged = true;
}

void split(AdapterState& adapters, Parameters& params) {
  if (!adapters.merged) throw std::logic_error("adapters already split");
  for (const auto& [name, lr] : adapters.targets) params.at(name) -= adapters.scale() * (lr.B * lr.A);
  adapters.merged = false;
}

std::size_t adapter_parameter_count(const AdapterState& adapters) {
  std::size_t n = 0;
  for (const auto& [_, lr] : adapters.targets) n += static_cast<std::size_t>(lr.A.size() + lr.B.size());
  return n;
}

double lora_step(const Parameters& params, const ModelSpec& spec, AdapterState& adapters,
                 const std::vector<Example>& batch, Adam& optimizer, const TrainConfig& config) {
  LossOptions opts;
  opts.trainable = Trainable::Adapters;
  opts.workers = config.workers;
  auto result = loss_and_grads(params, spec, batch, &adapters, opts);
  check_finite(result.loss, "lora step");
  auto grads = flatten(result.adapter_grads);
  clip_gradients(grads, config.grad_clip);
  auto weights = flatten(adapters.targets);
  optimizer.step(weights, grads);
  unflatten(weights, adapters.targets);
  return result.loss;
}

std::size_t select_best(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("select_best: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<std::vector<std::size_t>> sentence_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

Example encode_pair(const Tokenizer& tokenizer, const TrainingPair& pair, int max_source_len, int max_target_len) {
  Example ex;
  ex.source = tokenizer.encode(pair.input);
  ex.target = tokenizer.encode(pair.target);
  if (ex.source.empty()) ex.source.push_back(kUnkId);
  if (static_cast<int>(ex.source.size()) > max_source_len) ex.source.resize(static_cast<std::size_t>(max_source_len));
  // One position is reserved for end-of-sequence.
  if (static_cast<int>(ex.target.size()) > max_target_len - 1) ex.target.resize(static_cast<std::size_t>(max_target_len - 1));
  return ex;
}

std::vector<AmrGraph> parse_inputs(const Parameters& params, const ModelSpec& spec, const Tokenizer& tokenizer,
                                   const AdapterState* adapters, const std::vector<std::string>& inputs,
                                   int max_source_len, int max_steps, unsigned workers) {
  std::vector<std::vector<int>> sources;
  sources.reserve(inputs.size());
  for (const auto& text : inputs) {
    auto ids = tokenizer.encode(text);
    if (ids.empty()) ids.push_back(kUnkId);
    if (static_cast<int>(ids.size()) > max_source_len) ids.resize(static_cast<std::size_t>(max_source_len));
    sources.push_back(std::move(ids));
  }
  const auto decoded = greedy_decode_batch(params, spec, sources, max_steps, adapters, workers);
  std::vector<AmrGraph> graphs(decoded.size());
  parallel_for(decoded.size(), workers, [&](std::size_t i) {
    graphs[i] = deserialize(repair(tokenize_serialized(tokenizer.decode(decoded[i]))));
  });
  return graphs;
}

std::vector<MatchCounts> score_pairs(const Parameters& params, const ModelSpec& spec, const Tokenizer& tokenizer,
                                     const AdapterState* adapters, const std::vector<TrainingPair>& pairs,
                                     const TrainConfig& config) {
  std::vector<std::string> inputs;
  for (const auto& p : pairs) inputs.push_back(p.input);
  const auto parsed = parse_inputs(params, spec, tokenizer, adapters, inputs, config.max_source_len,
                                   config.max_target_len, config.workers);
  std::vector<TripleSet> pred, gold;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pred.push_back(to_triples(parsed[i]));
    gold.push_back(to_triples(deserialize(tokenize_serialized(pairs[i].target))));
  }
  SmatchOptions opts;
  opts.workers = config.workers;
  return smatch_counts(pred, gold, opts);
}

double TrainOutcome::mean_test_smatch() const {
  if (lora.empty()) return fft ? fft->test_smatch : 0.0;
  double s = 0.0;
  for (const auto& r : lora) s += r.test_smatch;
  return s / static_cast<double>(lora.size());
}

double TrainOutcome::std_test_smatch() const {
  if (lora.size() < 2) return 0.0;
  const double mean = mean_test_smatch();
  double s = 0.0;
  for (const auto& r : lora) s += (r.test_smatch - mean) * (r.test_smatch - mean);
  return std::sqrt(s / static_cast<double>(lora.size() - 1));
}

namespace {

class Run {
 public:
  Run(const TrainConfig& config, const TrainData& data, const RunOptions& options)
      : config_(config), data_(data), options_(options) {}

  TrainOutcome operator()() {
    config_.validate();
    if (data_.train.empty()) throw std::invalid_argument("training set is empty");
    if (data_.validation.empty()) throw std::invalid_argument("validation set is empty");

    std::vector<std::string> texts;
    for (const auto& p : data_.train) {
      texts.push_back(p.input);
      texts.push_back(p.target);
    }
    out_.config = config_;
    out_.tokenizer = Tokenizer::train(texts, static_cast<std::size_t>(config_.model.vocab_size));
    out_.spec = config_.model;
    out_.spec.vocab_size = static_cast<int>(out_.tokenizer.size());
    for (const auto& p : data_.train) {
      train_.push_back(encode_pair(out_.tokenizer, p, config_.max_source_len, config_.max_target_len));
    }
    if (!options_.run_dir.empty()) {
      fs::create_directories(fs::path(options_.run_dir) / "checkpoints");
      std::ofstream(fs::path(options_.run_dir) / "config.json") << to_json(config_).dump(2) << "\n";
      metrics_.open(fs::path(options_.run_dir) / "metrics.jsonl");
    }
    log("train " + std::to_string(data_.train.size()) + " pairs, vocab " + std::to_string(out_.spec.vocab_size));

    Parameters base = init_parameters(out_.spec, derive_seed(config_.seed, 0));
    if (config_.mode != TrainMode::LORA) {
      base = train_fft(std::move(base));
      out_.final_checkpoint = checkpoint(base, std::nullopt, *out_.fft);
    }
    if (config_.mode != TrainMode::FFT) {
      std::vector<double> val;
      std::vector<Checkpoint> finals;
      for (std::size_t k = 0; k < config_.lora_specs.size(); ++k) {
        finals.push_back(train_lora(base, config_.lora_specs[k], derive_seed(config_.seed, k + 1)));
        val.push_back(out_.lora.back().validation_smatch);
      }
      out_.final_checkpoint = std::move(finals[select_best(val)]);
    }
    if (!options_.run_dir.empty()) {
      save_checkpoint((fs::path(options_.run_dir) / "checkpoints" / "final.ckpt").string(), out_.final_checkpoint);
      std::ofstream(fs::path(options_.run_dir) / "report.json") << report_json(out_, options_).dump(2) << "\n";
    }
    return std::move(out_);
  }

 private:
  void log(const std::string& line) {
    if (options_.log) options_.log(line);
  }

  double validation_smatch(const Parameters& p, const AdapterState* a) {
    return to_prf(sum_counts(score_pairs(p, out_.spec, out_.tokenizer, a, data_.validation, config_))).f1;
  }

  void record(const std::string& stage, int epoch, double loss, double val) {
    out_.history.push_back({stage, epoch, loss, val});
    if (metrics_.is_open()) {
      nlohmann::json line = {{"stage", stage}, {"epoch", epoch}, {"train_loss", loss}, {"validation_smatch", val}};
      metrics_ << line.dump() << "\n" << std::flush;
    }
    std::ostringstream msg;
    msg << stage << " epoch " << epoch << " loss " << loss << " val " << val;
    log(msg.str());
  }

  std::vector<Example> gather(const std::vector<std::size_t>& idx) const {
    std::vector<Example> batch;
    batch.reserve(idx.size());
    for (auto i : idx) batch.push_back(train_[i]);
    return batch;
  }

  void finish(RunScore& score, const Parameters& p, const AdapterState* a) {
    if (data_.test.empty()) return;
    score.test_counts = score_pairs(p, out_.spec, out_.tokenizer, a, data_.test, config_);
    score.test_smatch = to_prf(sum_counts(score.test_counts)).f1;
  }

  Checkpoint checkpoint(const Parameters& p, std::optional<AdapterState> a, const RunScore& s) {
    Checkpoint c;
    c.spec = out_.spec;
    c.tokenizer = out_.tokenizer;
    c.params = p;
    c.adapters = std::move(a);
    c.metadata = {{"stage", s.stage},       {"best_epoch", s.best_epoch}, {"validation_smatch", s.validation_smatch},
                  {"seed", s.seed},         {"max_source_len", config_.max_source_len},
                  {"max_target_len", config_.max_target_len}};
    if (!options_.run_dir.empty()) {
      save_checkpoint((fs::path(options_.run_dir) / "checkpoints" / (s.stage + "-best.ckpt")).string(), c);
    }
    return c;
  }

  Parameters train_fft(Parameters params) {
    Adam adam(config_.learning_rate);
    RunScore score;
    score.stage = "fft";
    score.seed = config_.seed;
    Parameters best = params;
    double best_val = -1.0;
    for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
      double sum = 0.0;
      const auto batches = sentence_batches(train_.size(), config_.batch_size, derive_seed(config_.seed, 1000 + epoch));
      for (const auto& idx : batches) sum += fft_step(params, out_.spec, gather(idx), adam, config_);
      const double val = validation_smatch(params, nullptr);
      record("fft", epoch, sum / static_cast<double>(batches.size()), val);
      if (val > best_val) {
        best_val = val;
        best = params;
        score.best_epoch = epoch;
      }
    }
    if (config_.epochs == 0) best_val = validation_smatch(best, nullptr);
    score.validation_smatch = best_val;
    finish(score, best, nullptr);
    score.last_epoch_test_smatch = score.test_smatch;
    if (score.best_epoch != config_.epochs && !data_.test.empty()) {
      score.last_epoch_test_smatch =
          to_prf(sum_counts(score_pairs(params, out_.spec, out_.tokenizer, nullptr, data_.test, config_))).f1;
    }
    out_.fft = score;
    return best;
  }

  Checkpoint train_lora(const Parameters& base, const LoraSpec& spec, std::uint64_t seed) {
    AdapterState adapters = attach_lora(base, spec, seed);
    RunScore score;
    std::ostringstream stage;
    stage << "lora-r" << spec.rank << "-a" << spec.alpha;
    score.stage = stage.str();
    score.rank = spec.rank;
    score.alpha = spec.alpha;
    score.seed = seed;
    Adam adam(config_.lora_learning_rate);
    AdapterState best = adapters;
    double best_val = out_.fft ? out_.fft->validation_smatch : validation_smatch(base, &adapters);
    record(score.stage, 0, 0.0, best_val);
    for (int epoch = 1; epoch <= config_.lora_epochs; ++epoch) {
      double sum = 0.0;
      const auto batches = sentence_batches(train_.size(), config_.batch_size, derive_seed(seed, 1000 + epoch));
      for (const auto& idx : batches) sum += lora_step(base, out_.spec, adapters, gather(idx), adam, config_);
      const double val = validation_smatch(base, &adapters);
      record(score.stage, epoch, sum / static_cast<double>(batches.size()), val);
      if (val > best_val) {
        best_val = val;
        best = adapters;
        score.best_epoch = epoch;
      }
    }
    score.validation_smatch = best_val;
    finish(score, base, &best);
    score.last_epoch_test_smatch = score.test_smatch;
    if (score.best_epoch != config_.lora_epochs && !data_.test.empty()) {
      score.last_epoch_test_smatch =
          to_prf(sum_counts(score_pairs(base, out_.spec, out_.tokenizer, &adapters, data_.test, config_))).f1;
    }
    Parameters merged = base;
    merge(best, merged);
    out_.lora.push_back(score);
    return checkpoint(merged, best, score);
  }

  TrainConfig config_;
  const TrainData& data_;
  const RunOptions& options_;
  TrainOutcome out_;
  std::vector<Example> train_;
  std::ofstream metrics_;
};

}  // namespace

TrainOutcome run_training(const TrainConfig& config, const TrainData& data, const RunOptions& options) {
  return Run(config, data, options)();
}

nlohmann::json report_json(const TrainOutcome& o, const RunOptions& options) {
  auto run = [](const RunScore& s) {
    return nlohmann::json{{"stage", s.stage},
                          {"rank", s.rank},
                          {"alpha", s.alpha},
                          {"seed", s.seed},
                          {"best_epoch", s.best_epoch},
                          {"validation_smatch", s.validation_smatch},
                          {"test_smatch", s.test_smatch},
                          {"last_epoch_test_smatch", s.last_epoch_test_smatch}};
  };
  nlohmann::json rows = nlohmann::json::array();
  if (o.fft) rows.push_back({{"method", "FFT"}, {"smatch", o.fft->test_smatch}, {"runs", {run(*o.fft)}}});
  if (!o.lora.empty()) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& s : o.lora) runs.push_back(run(s));
    rows.push_back({{"method", o.fft ? "FFT-LoRA" : "LoRA"},
                    {"smatch", o.mean_test_smatch()},
                    {"std", o.std_test_smatch()},
                    {"runs", runs}});
  }
  return {{"model", options.model_name},
          {"corpus", options.corpus_name},
          {"mode", std::string(train_mode_name(o.config.mode))},
          {"rows", rows}};
}

}  // namespace amrforge
