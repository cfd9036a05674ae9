#include "amrforge/tokenizer.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace amrforge {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_paren(char c) { return c == '(' || c == ')'; }

bool is_role_word(std::string_view w) {
  if (w.size() < 2 || w[0] != ':') return false;
  if (!std::isalpha(static_cast<unsigned char>(w[1]))) return false;
  return std::all_of(w.begin() + 1, w.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

// The word part of a piece with at most one leading space, or empty.
std::string_view atomic_candidate(std::string_view piece) {
  if (!piece.empty() && piece[0] == ' ') piece.remove_prefix(1);
  if (piece.empty() || is_space(piece[0])) return {};
  return piece;
}

}  // namespace

Tokenizer::Tokenizer() {
  tokens_ = {"<pad>", "</s>", "<unk>"};
  rebuild_index();
}

std::vector<std::string> Tokenizer::pieces(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const std::size_t start = i;
    while (i < n && is_space(text[i])) ++i;
    if (i == n) {
      out.emplace_back(text.substr(start));
      break;
    }
    if (is_paren(text[i])) {
      ++i;
    } else {
      while (i < n && !is_space(text[i]) && !is_paren(text[i])) ++i;
    }
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

void Tokenizer::rebuild_index() {
  index_.clear();
  for (std::size_t k = 0; k < tokens_.size(); ++k) index_.emplace(tokens_[k], static_cast<int>(k));
  std::fill(std::begin(byte_id_), std::end(byte_id_), -1);
  for (unsigned char b : bytes_) byte_id_[b] = id_of(std::string(1, static_cast<char>(b)));
  merge_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto [a, b] = merges_[r];
    merge_rank_.emplace(merges_[r], std::make_pair(static_cast<int>(r), id_of(tokens_[a] + tokens_[b])));
  }
}

int Tokenizer::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

Tokenizer Tokenizer::train(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw std::invalid_argument("tokenizer: empty corpus");
  Tokenizer tok;
  std::set<std::string> atomic{"(", ")"};
  std::map<std::string, std::size_t> freq;
  std::set<unsigned char> bytes;
  for (const auto& text : corpus) {
    for (unsigned char c : text) bytes.insert(c);
    for (auto& piece : pieces(text)) {
      const auto word = atomic_candidate(piece);
      if (is_role_word(word)) atomic.emplace(word);
      ++freq[piece];
    }
  }
  const std::size_t required = 3 + 2 * atomic.size() + bytes.size();
  if (vocab_size < required) {
    throw std::invalid_argument("tokenizer: vocabulary of " + std::to_string(vocab_size) + " cannot hold the " +
                                std::to_string(required) + " required specials, atomic words and bytes");
  }
  tok.atomic_.assign(atomic.begin(), atomic.end());
  for (const auto& w : tok.atomic_) {
    tok.tokens_.push_back(w);
    tok.tokens_.push_back(" " + w);
  }
  tok.bytes_.assign(bytes.begin(), bytes.end());
  for (unsigned char b : tok.bytes_) tok.tokens_.emplace_back(1, static_cast<char>(b));
  tok.rebuild_index();

  // words to merge over: every non-atomic piece as byte ids
  std::vector<std::pair<std::vector<int>, std::size_t>> words;
  for (const auto& [piece, count] : freq) {
    const auto word = atomic_candidate(piece);
    if (!word.empty() && atomic.count(std::string(word))) continue;
    std::vector<int> ids;
    for (unsigned char c : piece) ids.push_back(tok.byte_id_[c]);
    words.emplace_back(std::move(ids), count);
  }

  while (tok.tokens_.size() < vocab_size) {
    std::map<std::pair<int, int>, std::size_t> pair_counts;
    for (const auto& [ids, count] : words) {
      for (std::size_t k = 0; k + 1 < ids.size(); ++k) pair_counts[{ids[k], ids[k + 1]}] += count;
    }
    std::pair<int, int> best{-1, -1};
    std::size_t best_count = 1;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {
        best = pair;
        best_count = count;
      }
    }
    if (best.first < 0) break;
    const std::string merged = tok.tokens_[static_cast<std::size_t>(best.first)] +
                               tok.tokens_[static_cast<std::size_t>(best.second)];
    int id = tok.id_of(merged);
    if (id < 0) {
      id = static_cast<int>(tok.tokens_.size());
      tok.tokens_.push_back(merged);
      tok.index_.emplace(merged, id);
    }
    tok.merges_.push_back(best);
    for (auto& [ids, _] : words) {
      std::vector<int> next;
      next.reserve(ids.size());
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (k + 1 < ids.size() && ids[k] == best.first && ids[k + 1] == best.second) {
          next.push_back(id);
          ++k;
        } else {
          next.push_back(ids[k]);
        }
      }
      ids = std::move(next);
    }
  }
  tok.rebuild_index();
  return tok;
}

std::vector<int> Tokenizer::encode_piece(const std::string& piece) const {
  const auto word = atomic_candidate(piece);
  if (!word.empty() && std::binary_search(atomic_.begin(), atomic_.end(), std::string(word))) {
    return {id_of(piece)};
  }
  std::vector<int> ids;
  ids.reserve(piece.size());
  for (unsigned char c : piece) ids.push_back(byte_id_[c] < 0 ? kUnk : byte_id_[c]);
  while (ids.size() > 1) {
    int best_rank = -1;
    int best_id = -1;
    std::size_t at = 0;
    for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
      auto it = merge_rank_.find({ids[k], ids[k + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second.first < best_rank)) {
        best_rank = it->second.first;
        best_id = it->second.second;
        at = k;
      }
    }
    if (best_rank < 0) break;
    const auto pair = std::make_pair(ids[at], ids[at + 1]);
    std::vector<int> next;
    next.reserve(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (k + 1 < ids.size() && ids[k] == pair.first && ids[k + 1] == pair.second) {
        next.push_back(best_id);
        ++k;
      } else {
        next.push_back(ids[k]);
      }
    }
    ids = std::move(next);
  }
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& piece : pieces(text)) {
    const auto ids = encode_piece(piece);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id <= kUnk || id >= static_cast<int>(tokens_.size())) continue;
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

nlohmann::json Tokenizer::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  return nlohmann::json{{"atomic", atomic_}, {"bytes", bytes_}, {"merges", merges}, {"size", tokens_.size()}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  Tokenizer tok;
  tok.atomic_ = j.at("atomic").get<std::vector<std::string>>();
  tok.bytes_ = j.at("bytes").get<std::vector<unsigned char>>();
  for (const auto& w : tok.atomic_) {
    tok.tokens_.push_back(w);
    tok.tokens_.push_back(" " + w);
  }
  for (unsigned char b : tok.bytes_) tok.tokens_.emplace_back(1, static_cast<char>(b));
  tok.rebuild_index();
  for (const auto& m : j.at("merges")) {
    const int a = m.at(0).get<int>();
    const int b = m.at(1).get<int>();
    if (a < 0 || b < 0 || a >= static_cast<int>(tok.tokens_.size()) || b >= static_cast<int>(tok.tokens_.size())) {
      throw std::invalid_argument("tokenizer: merge refers to unknown token");
    }
    const std::string merged = tok.tokens_[static_cast<std::size_t>(a)] + tok.tokens_[static_cast<std::size_t>(b)];
    if (tok.id_of(merged) < 0) {
      tok.index_.emplace(merged, static_cast<int>(tok.tokens_.size()));
      tok.tokens_.push_back(merged);
    }
    tok.merges_.emplace_back(a, b);
  }
  tok.rebuild_index();
  if (tok.tokens_.size() != j.at("size").get<std::size_t>()) throw std::invalid_argument("tokenizer: size mismatch");
  return tok;
}

}  // namespace amrforge
