#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amrforge/graph.hpp"

namespace amrforge {

inline constexpr std::string_view kTaskPrefix = "amr generation ; ";
inline constexpr std::string_view kEmptyConcept = "amr-empty";

/// Whitespace-delimited tokens of a variable-free graph: "(", ")", roles,
/// concepts (possibly index-suffixed) and constants.
using SerializedGraph = std::vector<std::string>;

/// A removed ":wiki" value and the space-joined ":opN" strings of its name.
struct WikiEntry {
  std::string name;
  std::string wiki;  // unquoted; "-" for explicit no-link
  bool operator==(const WikiEntry&) const = default;
};

struct StrippedGraph {
  AmrGraph graph;
  std::vector<WikiEntry> entries;
};

StrippedGraph strip_wiki(const AmrGraph& graph);

/// Name-string to wiki-value table with corpus frequencies.
class WikiTable {
 public:
  void add(const std::string& name, const std::string& wiki, std::uint64_t count = 1);
  void add_entries(const std::vector<WikiEntry>& entries);

  /// Most frequent value for `name`; ties go to the lexicographically smallest.
  std::optional<std::string> lookup(const std::string& name) const;
  std::size_t size() const { return table_.size(); }
  bool empty() const { return table_.empty(); }

  void write_tsv(std::ostream& out) const;
  static WikiTable read_tsv(std::istream& in);
  static WikiTable read_tsv_file(const std::string& path);
  void write_tsv_file(const std::string& path) const;

 private:
  std::map<std::string, std::map<std::string, std::uint64_t>> table_;
};

/// Concatenated ":opN" constants of a name node, ordered by N, quotes removed.
std::string name_string(const AmrGraph& graph, std::string_view name_variable);

/// Depth-first, variable-free emission. Concepts naming two or more nodes get
/// "_k" suffixes in first-visit order; re-entrant mentions are bare tokens.
SerializedGraph serialize(const AmrGraph& graph);

/// Rebuilds a graph from serialized tokens, never failing. Fresh variables
/// v0, v1, ... follow first-visit order; bare tokens naming an introduced
/// concept become re-entrant edges. Nothing parseable yields
/// "(a / amr-empty)".
AmrGraph deserialize(const SerializedGraph& tokens);

/// Canonical well-formed token sequence: spans balanced, orphan closers and
/// stray tokens dropped, and a role kept only when followed by a span, a
/// constant, or an already-introduced concept. Idempotent.
SerializedGraph repair(const SerializedGraph& tokens);

/// Adds ":wiki" before every ":name" edge whose node lacks one, using the
/// table or "-" when the name is unknown.
AmrGraph restore_wiki(const AmrGraph& graph, const WikiTable& table);

/// Splits on whitespace; parentheses are always their own token and double
/// quoted runs stay whole.
SerializedGraph tokenize_serialized(std::string_view text);
std::string join_tokens(const SerializedGraph& tokens);

/// True for quoted strings, numbers, "+", "-" and the AMR mode symbols.
bool is_constant_token(std::string_view token);

struct TrainingPair {
  std::string id;
  std::string input;
  std::string target;
  bool operator==(const TrainingPair&) const = default;
};

/// Prefixes the sentence and serializes the wiki-stripped graph.
/// Throws std::invalid_argument on an empty sentence.
TrainingPair make_training_pair(std::string_view sentence, const AmrGraph& graph, std::string id = {});

void write_pairs_jsonl(std::ostream& out, const std::vector<TrainingPair>& pairs);
std::vector<TrainingPair> read_pairs_jsonl(std::istream& in);

}  // namespace amrforge
