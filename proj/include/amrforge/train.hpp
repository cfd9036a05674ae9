#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amrforge/checkpoint.hpp"
#include "amrforge/linearize.hpp"
#include "amrforge/model.hpp"
#include "amrforge/smatch.hpp"
#include "amrforge/tokenizer.hpp"

namespace amrforge {

enum class TrainMode { FFT, LORA, FFT_THEN_LORA };

std::string_view train_mode_name(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct LoraSpec {
  int rank = 8;
  double alpha = 32.0;
  std::vector<std::string> targets{"q", "v"};

  void validate() const;
};

struct TrainConfig {
  TrainMode mode = TrainMode::FFT;
  double learning_rate = 5e-5;       // full fine-tuning
  double lora_learning_rate = 4e-1;  // adapter training
  std::size_t batch_size = 8;
  int max_source_len = 128;
  int max_target_len = 128;
  int epochs = 10;       // full fine-tuning epochs
  int lora_epochs = 10;  // adapter epochs per LoRA spec
  std::uint64_t seed = 0;
  std::vector<LoraSpec> lora_specs{{8, 32.0, {"q", "v"}}, {16, 64.0, {"q", "v"}}};
  double grad_clip = 1.0;  // global norm; 0 disables
  ModelSpec model;         // vocab_size is the tokenizer budget
  unsigned workers = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam with 64-bit moments.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::map<std::string, Mat>& params, const std::map<std::string, Mat>& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::map<std::string, Mat>& grads, double max_norm);

/// One optimizer update on all base weights. Throws TrainingError when the
/// loss is not finite.
double fft_step(Parameters& params, const ModelSpec& spec, const std::vector<Example>& batch, Adam& optimizer,
                const TrainConfig& config);

/// Adapters for every attention projection named in spec.targets: A normal
/// with std 1/sqrt(in), B zero. Throws std::invalid_argument when no
/// parameter matches a target.
AdapterState attach_lora(const Parameters& params, const LoraSpec& spec, std::uint64_t seed);

/// Folds scale*B*A into the base weights. Throws std::logic_error if merged.
void merge(AdapterState& adapters, Parameters& params);
/// Removes scale*B*A from the base weights. Throws std::logic_error if split.
void split(AdapterState& adapters, Parameters& params);

std::size_t adapter_parameter_count(const AdapterState& adapters);

/// One optimizer update on the adapters only; base weights are untouched.
double lora_step(const Parameters& params, const ModelSpec& spec, AdapterState& adapters,
                 const std::vector<Example>& batch, Adam& optimizer, const TrainConfig& config);

/// Index of the highest score; ties go to the earliest. Throws on empty.
std::size_t select_best(const std::vector<double>& scores);

/// Index lists of `batch_size` consecutive positions of a seeded shuffle;
/// only the last batch may be shorter.
std::vector<std::vector<std::size_t>> sentence_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

struct TrainData {
  std::vector<TrainingPair> train;
  std::vector<TrainingPair> validation;
  std::vector<TrainingPair> test;
};

/// Encodes a pair, truncating to the configured lengths.
Example encode_pair(const Tokenizer& tokenizer, const TrainingPair& pair, int max_source_len, int max_target_len);

/// Sentence -> greedy decode -> repair -> deserialize, with no wiki step.
std::vector<AmrGraph> parse_inputs(const Parameters& params, const ModelSpec& spec, const Tokenizer& tokenizer,
                                   const AdapterState* adapters, const std::vector<std::string>& inputs,
                                   int max_source_len, int max_steps, unsigned workers);

/// Per-sentence Smatch of parses against the pairs' own targets.
std::vector<MatchCounts> score_pairs(const Parameters& params, const ModelSpec& spec, const Tokenizer& tokenizer,
                                     const AdapterState* adapters, const std::vector<TrainingPair>& pairs,
                                     const TrainConfig& config);

struct EpochRecord {
  std::string stage;
  int epoch = 0;
  double train_loss = 0.0;
  double validation_smatch = 0.0;
};

struct RunScore {
  std::string stage;  // "fft", "lora-r8-a32", ...
  int rank = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  int best_epoch = 0;
  double validation_smatch = 0.0;
  double test_smatch = 0.0;
  double last_epoch_test_smatch = 0.0;  // final epoch, selected or not
  std::vector<MatchCounts> test_counts;
};

struct TrainOutcome {
  TrainConfig config;
  ModelSpec spec;  // vocab_size fitted to the tokenizer
  Tokenizer tokenizer;
  std::optional<RunScore> fft;
  std::vector<RunScore> lora;
  std::vector<EpochRecord> history;
  Checkpoint final_checkpoint;

  /// Mean and sample standard deviation of the LoRA scores (FFT score and 0
  /// when there are none).
  double mean_test_smatch() const;
  double std_test_smatch() const;
};

struct RunOptions {
  std::string run_dir;  // empty: nothing written
  std::string model_name = "desk";
  std::string corpus_name = "corpus";
  std::function<void(const std::string&)> log;
};

/// Full recipe per config.mode. FFT selects the best-validation epoch; each
/// LoRA spec then trains fresh adapters on the selected FFT weights (or on
/// the initial weights in LORA mode) and selects among epochs 0..n, where
/// epoch 0 is the adapter-free starting point.
TrainOutcome run_training(const TrainConfig& config, const TrainData& data, const RunOptions& options = {});

nlohmann::json report_json(const TrainOutcome& outcome, const RunOptions& options);

}  // namespace amrforge
