#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "amrforge/autodiff.hpp"

namespace amrforge {

/// Encoder-decoder transformer dimensions. n_heads * d_kv need not equal
/// d_model: attention projects d_model -> n_heads*d_kv and back.
struct ModelSpec {
  int n_layers = 2;
  int d_model = 64;
  int d_ff = 128;
  int d_kv = 16;
  int n_heads = 4;
  int vocab_size = 512;
  int max_len = 128;

  /// Throws std::invalid_argument unless every field is positive.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

/// Named weights. Linear weights are stored (out x in); biases, norm gains
/// and norm offsets are 1 x n rows.
using Parameters = std::map<std::string, Mat>;

/// Every parameter name with its shape, in a fixed order.
std::vector<std::pair<std::string, std::pair<int, int>>> parameter_shapes(const ModelSpec& spec);

/// Name with layer indices removed, e.g. "decoder.1.cross_attn.q" -> "decoder.cross_attn.q".
std::string parameter_family(const std::string& name);

/// Weights ~ N(0, 0.02^2), norm gains 1, biases and norm offsets 0.
Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed);

/// Checks names, shapes and finiteness. Throws std::invalid_argument.
void check_parameters(const Parameters& params, const ModelSpec& spec);

std::size_t parameter_count(const Parameters& params);

/// Low-rank update for one (out x in) weight: delta = scale * B * A.
struct LowRank {
  Mat A;  // rank x in
  Mat B;  // out x rank
};

struct AdapterState {
  int rank = 8;
  double alpha = 32.0;
  std::map<std::string, LowRank> targets;  // keyed by parameter name
  bool merged = false;

  double scale() const { return alpha / static_cast<double>(rank); }
};

struct Example {
  std::vector<int> source;
  std::vector<int> target;  // without end-of-sequence
};

inline constexpr int kPadId = 0;  // also the decoder start symbol
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;

/// Decoder logits (target length x vocab) for explicit decoder inputs.
/// Unmerged adapters add their low-rank path.
Mat forward(const Parameters& params, const ModelSpec& spec, const std::vector<int>& source,
            const std::vector<int>& decoder_input, const AdapterState* adapters = nullptr);

enum class Trainable { Base, Adapters };

struct LossOptions {
  Trainable trainable = Trainable::Base;
  unsigned workers = 1;
  /// Sentences per independently differentiated chunk; gradients are summed
  /// in chunk order, so results do not depend on `workers`.
  std::size_t chunk = 8;
};

struct LossResult {
  double loss = 0.0;  // mean token cross-entropy
  std::size_t tokens = 0;
  Parameters grads;                       // Trainable::Base
  std::map<std::string, LowRank> adapter_grads;  // Trainable::Adapters
};

/// Teacher-forced loss: decoder input is [pad] + target, labels are
/// target + [eos]. Throws std::invalid_argument on an empty batch.
LossResult loss_and_grads(const Parameters& params, const ModelSpec& spec, const std::vector<Example>& batch,
                          const AdapterState* adapters = nullptr, const LossOptions& options = {});

/// Weights with any unmerged adapters folded in.
Parameters effective_parameters(const Parameters& params, const AdapterState* adapters);

/// Argmax decoding with cached keys and values; stops at eos or after
/// min(max_steps, max_len) tokens. Ties go to the lowest id.
std::vector<int> greedy_decode(const Parameters& params, const ModelSpec& spec, const std::vector<int>& source,
                               int max_steps, const AdapterState* adapters = nullptr);

std::vector<std::vector<int>> greedy_decode_batch(const Parameters& params, const ModelSpec& spec,
                                                  const std::vector<std::vector<int>>& sources, int max_steps,
                                                  const AdapterState* adapters = nullptr, unsigned workers = 1);

}  // namespace amrforge
