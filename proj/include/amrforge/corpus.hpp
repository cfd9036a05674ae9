#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "amrforge/graph.hpp"

namespace amrforge {

enum class SplitKind { Human, SilverStd, SilverBio };

std::string_view split_kind_name(SplitKind kind);
/// Throws std::invalid_argument for names outside {human, silver-std, silver-bio}.
SplitKind parse_split_kind(std::string_view name);

struct CorpusManifest {
  std::string name;
  SplitKind split = SplitKind::Human;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::vector<std::string> files;

  bool operator==(const CorpusManifest&) const = default;
};

std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(std::string_view json);
void write_manifest(const std::string& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::string& path);

struct CorpusItem {
  std::string id;
  std::string sentence;
  AmrGraph graph;
};

struct Corpus {
  std::vector<CorpusItem> items;
  CorpusManifest manifest;
};

std::size_t whitespace_tokens(std::string_view text);

/// Recomputes sentence and token counts from the items.
CorpusManifest describe(const std::vector<CorpusItem>& items, std::string name, SplitKind split,
                        std::vector<std::string> files = {});

/// Reads an AMR block file. Every block needs "::snt"; missing ids become
/// "<name>.<k>". Errors are AmrFileError naming the 1-based graph number.
Corpus load_corpus(const std::string& path, SplitKind split = SplitKind::Human);

/// Writes items as AMR blocks with "::id" and "::snt" first.
void save_corpus(const std::string& path, const std::vector<CorpusItem>& items);

/// Graphs with their sentence metadata attached, ready for write_amr_blocks.
std::vector<AmrGraph> with_sentence_metadata(const std::vector<CorpusItem>& items);

/// Sentence/graph pairs from a small English grammar: transitive and
/// intransitive frames, negation, adjectives, named entities with wiki links,
/// coordination, relative clauses, and re-entrancy through control verbs and
/// reflexives. Deterministic per seed.
std::vector<CorpusItem> generate_synthetic(std::uint64_t seed, std::size_t n);

}  // namespace amrforge
