#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace amrforge {

/// A variable bound to its concept, e.g. (t2 / thing).
struct Node {
  std::string variable;
  std::string label;

  bool operator==(const Node&) const = default;
};

/// One outgoing role of a node, in textual (Penman) orientation.
///
/// `target` is either a variable (when `is_constant` is false) or the raw
/// constant text, quotes included (`"Taiwan"`, `-`, `5`). Inverse roles such
/// as `:ARG1-of` are stored as written; normalization happens in to_triples.
struct Edge {
  std::string source;
  std::string role;
  std::string target;
  bool is_constant = false;

  bool operator==(const Edge&) const = default;
};

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Error raised for structurally invalid graphs or Penman text.
class GraphError : public std::runtime_error {
 public:
  explicit GraphError(const std::string& what, std::size_t offset = npos)
      : std::runtime_error(what), offset_(offset) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Byte offset into the parsed text, or npos when not positional.
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Rooted, directed, labeled AMR graph.
///
/// Edges and attributes share one ordered list so that child order in the
/// Penman text survives a round trip.
class AmrGraph {
 public:
  AmrGraph() = default;

  const std::string& top() const { return top_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Metadata& metadata() const { return metadata_; }

  void set_top(std::string variable) { top_ = std::move(variable); }
  void add_node(std::string variable, std::string label);
  void add_relation(std::string source, std::string role, std::string target);
  void add_attribute(std::string source, std::string role, std::string value);
  void insert_edge(std::size_t position, Edge edge);
  void remove_edge(std::size_t position);
  void add_metadata(std::string key, std::string value);
  void set_metadata(Metadata metadata) { metadata_ = std::move(metadata); }

  /// Value of the first metadata entry with `key`.
  std::optional<std::string> meta(std::string_view key) const;

  const Node* find_node(std::string_view variable) const;
  std::optional<std::string> concept_of(std::string_view variable) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Throws GraphError when any structural invariant is broken.
  void validate() const;

 private:
  std::string top_;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  Metadata metadata_;
};

bool is_inverse_role(std::string_view role);
/// ":ARG0-of" -> ":ARG0" and ":ARG0" -> ":ARG0-of". ":consist-of" and
/// ":prep-on-behalf-of" style roles are treated as ordinary roles.
std::string invert_role(std::string_view role);
/// Canonical orientation: inverse roles become their base form.
std::string normalize_role(std::string_view role);

}  // namespace amrforge
