#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "amrforge/graph.hpp"

namespace amrforge {

/// Parses one parenthesized Penman expression into a validated graph.
///
/// Bare tokens in argument position resolve to a declared variable when one
/// exists (re-entrancy, forward references included). A bare token shaped like
/// a variable (one lowercase letter, optional digits) that is not declared is
/// an error; any other bare token is a constant. Errors carry a byte offset.
AmrGraph parse_penman(std::string_view text);

struct EmitOptions {
  bool multiline = true;
  int indent = 4;
  bool with_metadata = false;
};

/// Prints a graph in Penman notation. The first mention of a node carries
/// its concept, later mentions are bare variables, children keep insertion
/// order.
std::string emit_penman(const AmrGraph& graph, const EmitOptions& options = {});

/// One "# ::key value" line per entry; keyless comments print as "# text".
std::string emit_metadata(const Metadata& metadata);

/// Parses a comment block ("# ::id x ::date y" splits into two entries).
Metadata parse_metadata_line(std::string_view line);

/// Graph block inside an AMR file that failed to parse.
class AmrFileError : public GraphError {
 public:
  AmrFileError(const std::string& what, std::size_t graph_number, std::size_t offset)
      : GraphError(what, offset), graph_number_(graph_number) {}
  /// 1-based index of the offending graph block.
  std::size_t graph_number() const noexcept { return graph_number_; }

 private:
  std::size_t graph_number_;
};

/// Reads blank-line separated graph blocks with optional leading metadata.
std::vector<AmrGraph> read_amr_blocks(std::istream& in);
std::vector<AmrGraph> read_amr_file(const std::string& path);

void write_amr_blocks(std::ostream& out, const std::vector<AmrGraph>& graphs);
void write_amr_file(const std::string& path, const std::vector<AmrGraph>& graphs);

namespace detail {
/// Per-variable ordered child edges used by the printers.
std::unordered_map<std::string, std::vector<Edge>> penman_layout(const AmrGraph& graph);
}  // namespace detail

}  // namespace amrforge
