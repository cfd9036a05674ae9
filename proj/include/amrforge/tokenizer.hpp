#pragma once

#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amrforge {

/// Byte-level BPE. Text is cut into pieces of leading whitespace plus a word,
/// with parentheses always their own word; merges never cross pieces.
/// Parentheses and role words (":ARG0", ":op1", ...) seen in training are
/// whole tokens, with and without one leading space.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  Tokenizer();

  /// Throws std::invalid_argument on an empty corpus or when `vocab_size`
  /// cannot hold the specials, atomic words and base bytes.
  static Tokenizer train(const std::vector<std::string>& corpus, std::size_t vocab_size);

  std::vector<int> encode(std::string_view text) const;
  /// Specials decode to nothing.
  std::string decode(const std::vector<int>& ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  int id_of(std::string_view token) const;
  const std::vector<std::string>& atomic_words() const { return atomic_; }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);
  bool operator==(const Tokenizer& o) const { return tokens_ == o.tokens_ && merges_ == o.merges_; }

  /// Pieces as used for training and encoding.
  static std::vector<std::string> pieces(std::string_view text);

 private:
  void rebuild_index();
  std::vector<int> encode_piece(const std::string& piece) const;

  std::vector<std::string> tokens_;
  std::vector<std::string> atomic_;
  std::vector<std::pair<int, int>> merges_;  // in rank order
  std::unordered_map<std::string, int> index_;
  std::map<std::pair<int, int>, std::pair<int, int>> merge_rank_;  // pair -> (rank, merged id)
  std::vector<unsigned char> bytes_;
  int byte_id_[256];
};

}  // namespace amrforge
