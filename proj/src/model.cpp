#include "amrforge/model.hpp"

#include <cmath>
#include <regex>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "amrforge/parallel.hpp"
#include "amrforge/rng.hpp"

namespace amrforge {

void ModelSpec::validate() const {
  if (n_layers <= 0 || d_model <= 0 || d_ff <= 0 || d_kv <= 0 || n_heads <= 0 || vocab_size <= 0 || max_len <= 0) {
    throw std::invalid_argument("model spec: every dimension must be positive");
  }
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"n_layers", s.n_layers}, {"d_model", s.d_model}, {"d_ff", s.d_ff},        {"d_kv", s.d_kv},
                     {"n_heads", s.n_heads},   {"vocab_size", s.vocab_size}, {"max_len", s.max_len}};
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  s.n_layers = j.at("n_layers").get<int>();
  s.d_model = j.at("d_model").get<int>();
  s.d_ff = j.at("d_ff").get<int>();
  s.d_kv = j.at("d_kv").get<int>();
  s.n_heads = j.at("n_heads").get<int>();
  s.vocab_size = j.at("vocab_size").get<int>();
  s.max_len = j.at("max_len").get<int>();
}

std::vector<std::pair<std::string, std::pair<int, int>>> parameter_shapes(const ModelSpec& s) {
  s.validate();
  const int d = s.d_model;
  const int inner = s.n_heads * s.d_kv;
  std::vector<std::pair<std::string, std::pair<int, int>>> out;
  auto norm = [&](const std::string& p) {
    out.push_back({p + ".gain", {1, d}});
    out.push_back({p + ".bias", {1, d}});
  };
  auto attn = [&](const std::string& p) {
    out.push_back({p + ".q", {inner, d}});
    out.push_back({p + ".k", {inner, d}});
    out.push_back({p + ".v", {inner, d}});
    out.push_back({p + ".o", {d, inner}});
  };
  auto ff = [&](const std::string& p) {
    out.push_back({p + ".w1", {s.d_ff, d}});
    out.push_back({p + ".b1", {1, s.d_ff}});
    out.push_back({p + ".w2", {d, s.d_ff}});
    out.push_back({p + ".b2", {1, d}});
  };
  out.push_back({"shared.embedding", {s.vocab_size, d}});
  out.push_back({"encoder.pos", {s.max_len, d}});
  out.push_back({"decoder.pos", {s.max_len, d}});
  for (int i = 0; i < s.n_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    norm(p + ".ln1");
    attn(p + ".self_attn");
    norm(p + ".ln2");
    ff(p + ".ff");
  }
  norm("encoder.final_ln");
  for (int i = 0; i < s.n_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    norm(p + ".ln1");
    attn(p + ".self_attn");
    norm(p + ".ln2");
    attn(p + ".cross_attn");
    norm(p + ".ln3");
    ff(p + ".ff");
  }
  norm("decoder.final_ln");
  out.push_back({"lm_head.weight", {s.vocab_size, d}});
  out.push_back({"lm_head.bias", {1, s.vocab_size}});
  return out;
}

std::string parameter_family(const std::string& name) {
  static const std::regex layer(R"(\.\d+\.)");
  return std::regex_replace(name, layer, ".");
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  Parameters p;
  Rng rng(seed);
  for (const auto& [name, shape] : parameter_shapes(spec)) {
    Mat m(shape.first, shape.second);
    if (ends_with(name, ".gain")) {
      m.setOnes();
    } else if (ends_with(name, ".bias") || ends_with(name, ".b1") || ends_with(name, ".b2")) {
      m.setZero();
    } else {
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = 0.02 * rng.normal();
    }
    p.emplace(name, std::move(m));
  }
  return p;
}

void check_parameters(const Parameters& params, const ModelSpec& spec) {
  const auto shapes = parameter_shapes(spec);
  if (params.size() != shapes.size()) {
    throw std::invalid_argument("parameters: expected " + std::to_string(shapes.size()) + " tensors, got " +
                                std::to_string(params.size()));
  }
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("parameters: missing '" + name + "'");
    if (it->second.rows() != shape.first || it->second.cols() != shape.second) {
      throw std::invalid_argument("parameters: '" + name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                                  std::to_string(it->second.cols()) + ", expected " + std::to_string(shape.first) +
                                  "x" + std::to_string(shape.second));
    }
    if (!it->second.allFinite()) throw std::invalid_argument("parameters: '" + name + "' has non-finite values");
  }
}

std::size_t parameter_count(const Parameters& params) {
  std::size_t n = 0;
  for (const auto& [_, m] : params) n += static_cast<std::size_t>(m.size());
  return n;
}

namespace {

using Var = Tape::Var;

void check_ids(const std::vector<int>& ids, const ModelSpec& spec, const char* what) {
  if (static_cast<int>(ids.size()) > spec.max_len) {
    throw std::invalid_argument(std::string(what) + " of length " + std::to_string(ids.size()) +
                                " exceeds max_len " + std::to_string(spec.max_len));
  }
  for (int id : ids) {
    if (id < 0 || id >= spec.vocab_size) {
      throw std::out_of_range(std::string(what) + " id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

// Builds the model graph on a tape for a packed batch of sequences.
class Builder {
 public:
  Builder(Tape& tape, const Parameters& params, const ModelSpec& spec, const AdapterState* adapters,
          bool grad_base, bool grad_adapters)
      : t_(tape), p_(params), s_(spec), adapters_(adapters && !adapters->merged ? adapters : nullptr),
        grad_base_(grad_base), grad_adapters_(grad_adapters) {}

  Var param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    auto pit = p_.find(name);
    if (pit == p_.end()) throw std::invalid_argument("parameters: missing '" + name + "'");
    const Var v = t_.input(pit->second, grad_base_);
    leaves_.emplace(name, v);
    return v;
  }

  Var linear(Var x, const std::string& name) {
    Var y = t_.matmul_nt(x, param(name));
    if (adapters_) {
      auto it = adapters_->targets.find(name);
      if (it != adapters_->targets.end()) {
        auto [a, b] = adapter(name, it->second);
        const Var low = t_.matmul_nt(t_.matmul_nt(x, a), b);
        y = t_.add(y, t_.scale(low, adapters_->scale()));
      }
    }
    return y;
  }

  Var norm(Var x, const std::string& prefix) { return t_.layer_norm(x, param(prefix + ".gain"), param(prefix + ".bias")); }

  Var attention(const std::string& prefix, Var xq, Var xkv, const std::vector<int>& qo, const std::vector<int>& ko,
                bool causal) {
    const Var q = linear(xq, prefix + ".q");
    const Var k = linear(xkv, prefix + ".k");
    const Var v = linear(xkv, prefix + ".v");
    return linear(t_.attention(q, k, v, s_.n_heads, qo, ko, causal), prefix + ".o");
  }

  Var feed_forward(Var x, const std::string& prefix) {
    Var h = t_.gelu(t_.add_row(linear(x, prefix + ".w1"), param(prefix + ".b1")));
    return t_.add_row(linear(h, prefix + ".w2"), param(prefix + ".b2"));
  }

  Var embed(const std::vector<std::vector<int>>& seqs, const std::string& pos_table, std::vector<int>& offsets) {
    std::vector<int> ids, pos;
    offsets.assign(1, 0);
    for (const auto& s : seqs) {
      for (std::size_t k = 0; k < s.size(); ++k) {
        ids.push_back(s[k]);
        pos.push_back(static_cast<int>(k));
      }
      offsets.push_back(static_cast<int>(ids.size()));
    }
    return t_.add(t_.gather_rows(param("shared.embedding"), ids), t_.gather_rows(param(pos_table), pos));
  }

  Var encode(const std::vector<std::vector<int>>& sources, std::vector<int>& offsets) {
    Var h = embed(sources, "encoder.pos", offsets);
    for (int i = 0; i < s_.n_layers; ++i) {
      const std::string p = "encoder." + std::to_string(i);
      const Var n1 = norm(h, p + ".ln1");
      h = t_.add(h, attention(p + ".self_attn", n1, n1, offsets, offsets, false));
      h = t_.add(h, feed_forward(norm(h, p + ".ln2"), p + ".ff"));
    }
    return norm(h, "encoder.final_ln");
  }

  Var decode(const std::vector<std::vector<int>>& inputs, Var memory, const std::vector<int>& memory_offsets) {
    std::vector<int> offsets;
    Var h = embed(inputs, "decoder.pos", offsets);
    for (int i = 0; i < s_.n_layers; ++i) {
      const std::string p = "decoder." + std::to_string(i);
      const Var n1 = norm(h, p + ".ln1");
      h = t_.add(h, attention(p + ".self_attn", n1, n1, offsets, offsets, true));
      h = t_.add(h, attention(p + ".cross_attn", norm(h, p + ".ln2"), memory, offsets, memory_offsets, false));
      h = t_.add(h, feed_forward(norm(h, p + ".ln3"), p + ".ff"));
    }
    h = norm(h, "decoder.final_ln");
    return t_.add_row(t_.matmul_nt(h, param("lm_head.weight")), param("lm_head.bias"));
  }

  Var logits(const std::vector<std::vector<int>>& sources, const std::vector<std::vector<int>>& inputs) {
    std::vector<int> memory_offsets;
    const Var memory = encode(sources, memory_offsets);
    return decode(inputs, memory, memory_offsets);
  }

  const std::map<std::string, Var>& leaves() const { return leaves_; }
  const std::map<std::string, std::pair<Var, Var>>& adapter_leaves() const { return adapter_leaves_; }

 private:
  std::pair<Var, Var> adapter(const std::string& name, const LowRank& lr) {
    auto it = adapter_leaves_.find(name);
    if (it != adapter_leaves_.end()) return it->second;
    std::pair<Var, Var> v{t_.input(lr.A, grad_adapters_), t_.input(lr.B, grad_adapters_)};
    adapter_leaves_.emplace(name, v);
    return v;
  }

  Tape& t_;
  const Parameters& p_;
  const ModelSpec& s_;
  const AdapterState* adapters_;
  bool grad_base_;
  bool grad_adapters_;
  std::map<std::string, Var> leaves_;
  std::map<std::string, std::pair<Var, Var>> adapter_leaves_;
};

}  // namespace

Mat forward(const Parameters& params, const ModelSpec& spec, const std::vector<int>& source,
            const std::vector<int>& decoder_input, const AdapterState* adapters) {
  spec.validate();
  check_ids(source, spec, "source");
  check_ids(decoder_input, spec, "decoder input");
  Tape tape;
  Builder b(tape, params, spec, adapters, false, false);
  return tape.value(b.logits({source}, {decoder_input}));
}

LossResult loss_and_grads(const Parameters& params, const ModelSpec& spec, const std::vector<Example>& batch,
                          const AdapterState* adapters, const LossOptions& options) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads: empty batch");
  spec.validate();
  const bool train_adapters = options.trainable == Trainable::Adapters;
  if (train_adapters && (!adapters || adapters->merged)) {
    throw std::invalid_argument("loss_and_grads: adapter training needs split adapters");
  }
  std::size_t tokens = 0;
  for (const auto& ex : batch) {
    check_ids(ex.source, spec, "source");
    check_ids(ex.target, spec, "target");
    const std::size_t len = ex.target.size() + 1;
    if (static_cast<int>(len) > spec.max_len) {
      throw std::invalid_argument("target of length " + std::to_string(ex.target.size()) +
                                  " plus end-of-sequence exceeds max_len " + std::to_string(spec.max_len));
    }
    tokens += len;
  }
  const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);
  const std::size_t n_chunks = (batch.size() + chunk - 1) / chunk;
  std::vector<LossResult> parts(n_chunks);

  parallel_for(n_chunks, options.workers, [&](std::size_t c) {
    std::vector<std::vector<int>> sources, inputs;
    std::vector<int> labels;
    for (std::size_t i = c * chunk; i < std::min(batch.size(), (c + 1) * chunk); ++i) {
      const auto& ex = batch[i];
      sources.push_back(ex.source);
      std::vector<int> in{kPadId};
      in.insert(in.end(), ex.target.begin(), ex.target.end());
      inputs.push_back(std::move(in));
      labels.insert(labels.end(), ex.target.begin(), ex.target.end());
      labels.push_back(kEosId);
    }
    Tape tape;
    Builder b(tape, params, spec, adapters, !train_adapters, train_adapters);
    const Var loss = tape.cross_entropy(b.logits(sources, inputs), labels, static_cast<double>(tokens));
    tape.backward(loss);
    LossResult& part = parts[c];
    part.loss = tape.value(loss)(0, 0);
    if (train_adapters) {
      for (const auto& [name, ab] : b.adapter_leaves()) part.adapter_grads[name] = {tape.grad(ab.first), tape.grad(ab.second)};
    } else {
      for (const auto& [name, v] : b.leaves()) part.grads[name] = tape.grad(v);
    }
  });

  LossResult result;
  result.tokens = tokens;
  if (train_adapters) {
    for (const auto& [name, lr] : adapters->targets) {
      result.adapter_grads[name] = {Mat::Zero(lr.A.rows(), lr.A.cols()), Mat::Zero(lr.B.rows(), lr.B.cols())};
    }
  } else {
    for (const auto& [name, m] : params) result.grads[name] = Mat::Zero(m.rows(), m.cols());
  }
  for (const auto& part : parts) {
    result.loss += part.loss;
    for (const auto& [name, g] : part.grads) result.grads.at(name) += g;
    for (const auto& [name, g] : part.adapter_grads) {
      auto& dst = result.adapter_grads.at(name);
      dst.A += g.A;
      dst.B += g.B;
    }
  }
  return result;
}

Parameters effective_parameters(const Parameters& params, const AdapterState* adapters) {
  Parameters eff = params;
  if (adapters && !adapters->merged) {
    for (const auto& [name, lr] : adapters->targets) eff.at(name) += adapters->scale() * (lr.B * lr.A);
  }
  return eff;
}

namespace {

// Incremental decoder with per-layer key/value caches.
class Decoder {
 public:
  Decoder(const Parameters& p, const ModelSpec& s, const std::vector<int>& source) : p_(p), s_(s) {
    Tape tape;
    Builder b(tape, p, s, nullptr, false, false);
    std::vector<int> offsets;
    const Mat memory = tape.value(b.encode({source}, offsets));
    const int layers = s.n_layers;
    self_k_.resize(static_cast<std::size_t>(layers));
    self_v_.resize(static_cast<std::size_t>(layers));
    cross_k_.resize(static_cast<std::size_t>(layers));
    cross_v_.resize(static_cast<std::size_t>(layers));
    for (int i = 0; i < layers; ++i) {
      const std::string pre = "decoder." + std::to_string(i) + ".cross_attn";
      cross_k_[static_cast<std::size_t>(i)] = memory * w(pre + ".k").transpose();
      cross_v_[static_cast<std::size_t>(i)] = memory * w(pre + ".v").transpose();
      self_k_[static_cast<std::size_t>(i)].resize(0, s.n_heads * s.d_kv);
      self_v_[static_cast<std::size_t>(i)].resize(0, s.n_heads * s.d_kv);
    }
  }

  /// Logits for the next position after feeding `token` at position `pos`.
  Eigen::RowVectorXd step(int token, int pos) {
    Mat x = w("shared.embedding").row(token) + w("decoder.pos").row(pos);
    for (int i = 0; i < s_.n_layers; ++i) {
      const auto li = static_cast<std::size_t>(i);
      const std::string pre = "decoder." + std::to_string(i);
      Mat h = norm(x, pre + ".ln1");
      append(self_k_[li], h * w(pre + ".self_attn.k").transpose());
      append(self_v_[li], h * w(pre + ".self_attn.v").transpose());
      x += attend(h * w(pre + ".self_attn.q").transpose(), self_k_[li], self_v_[li]) *
           w(pre + ".self_attn.o").transpose();
      h = norm(x, pre + ".ln2");
      x += attend(h * w(pre + ".cross_attn.q").transpose(), cross_k_[li], cross_v_[li]) *
           w(pre + ".cross_attn.o").transpose();
      h = norm(x, pre + ".ln3");
      Mat f = h * w(pre + ".ff.w1").transpose() + w(pre + ".ff.b1");
      f = f.unaryExpr([](double v) { return detail::gelu(v); });
      x += f * w(pre + ".ff.w2").transpose() + w(pre + ".ff.b2");
    }
    const Mat h = norm(x, "decoder.final_ln");
    return (h * w("lm_head.weight").transpose() + w("lm_head.bias")).row(0);
  }

 private:
  const Mat& w(const std::string& name) const { return p_.at(name); }

  Mat norm(const Mat& x, const std::string& prefix) const {
    return detail::layer_norm_rows(x, w(prefix + ".gain"), w(prefix + ".bias"), 1e-6);
  }

  static void append(Mat& cache, const Mat& row) {
    cache.conservativeResize(cache.rows() + 1, Eigen::NoChange);
    cache.row(cache.rows() - 1) = row.row(0);
  }

  Mat attend(const Mat& q, const Mat& k, const Mat& v) const {
    const int dk = s_.d_kv;
    Mat out = Mat::Zero(1, q.cols());
    if (k.rows() == 0) return out;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int h = 0; h < s_.n_heads; ++h) {
      Mat scores = q.block(0, h * dk, 1, dk) * k.block(0, h * dk, k.rows(), dk).transpose() * inv_sqrt;
      detail::softmax_rows(scores);
      out.block(0, h * dk, 1, dk) = scores * v.block(0, h * dk, v.rows(), dk);
    }
    return out;
  }

  const Parameters& p_;
  const ModelSpec& s_;
  std::vector<Mat> self_k_, self_v_, cross_k_, cross_v_;
};

std::vector<int> decode_with(const Parameters& eff, const ModelSpec& spec, const std::vector<int>& source,
                             int max_steps) {
  check_ids(source, spec, "source");
  std::vector<int> out;
  const int steps = std::min(max_steps, spec.max_len);
  if (steps <= 0) return out;
  Decoder dec(eff, spec, source);
  int token = kPadId;
  for (int pos = 0; pos < steps; ++pos) {
    const Eigen::RowVectorXd logits = dec.step(token, pos);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.size(); ++k) {
      if (logits(k) > logits(best)) best = k;
    }
    token = static_cast<int>(best);
    if (token == kEosId) break;
    out.push_back(token);
  }
  return out;
}

}  // namespace

std::vector<int> greedy_decode(const Parameters& params, const ModelSpec& spec, const std::vector<int>& source,
                               int max_steps, const AdapterState* adapters) {
  spec.validate();
  if (adapters && !adapters->merged) return decode_with(effective_parameters(params, adapters), spec, source, max_steps);
  return decode_with(params, spec, source, max_steps);
}

std::vector<std::vector<int>> greedy_decode_batch(const Parameters& params, const ModelSpec& spec,
                                                  const std::vector<std::vector<int>>& sources, int max_steps,
                                                  const AdapterState* adapters, unsigned workers) {
  spec.validate();
  Parameters merged;
  const Parameters* eff = &params;
  if (adapters && !adapters->merged) {
    merged = effective_parameters(params, adapters);
    eff = &merged;
  }
  std::vector<std::vector<int>> out(sources.size());
  parallel_for(sources.size(), workers, [&](std::size_t i) { out[i] = decode_with(*eff, spec, sources[i], max_steps); });
  return out;
}

}  // namespace amrforge
