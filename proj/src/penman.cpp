#include "amrforge/penman.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace amrforge {
namespace {

constexpr int kMaxDepth = 512;

enum class TokKind { LParen, RParen, Slash, Role, Quoted, Atom, End };

struct Tok {
  TokKind kind;
  std::string text;
  std::size_t offset;
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Tok next() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) return {TokKind::End, "", pos_};
    const std::size_t start = pos_;
    const char c = text_[pos_];
    if (c == '(') return ++pos_, Tok{TokKind::LParen, "(", start};
    if (c == ')') return ++pos_, Tok{TokKind::RParen, ")", start};
    if (c == '/') return ++pos_, Tok{TokKind::Slash, "/", start};
    if (c == '"') {
      ++pos_;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
        ++pos_;
      }
      if (pos_ >= text_.size()) throw GraphError("unterminated string literal", start);
      ++pos_;
      return {TokKind::Quoted, std::string(text_.substr(start, pos_ - start)), start};
    }
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' &&
           text_[pos_] != ')' && text_[pos_] != '/' && text_[pos_] != '"') {
      ++pos_;
    }
    std::string word(text_.substr(start, pos_ - start));
    if (word.front() == ':') {
      if (word.size() == 1) throw GraphError("empty role label", start);
      return {TokKind::Role, std::move(word), start};
    }
    return {TokKind::Atom, std::move(word), start};
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

bool looks_like_variable(std::string_view token) {
  if (token.empty() || token[0] < 'a' || token[0] > 'z') return false;
  for (std::size_t i = 1; i < token.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) return false;
  }
  return true;
}

struct PendingRef {
  std::size_t edge_index;
  std::size_t offset;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  AmrGraph parse() {
    if (cur_.kind != TokKind::LParen) throw GraphError("expected '('", cur_.offset);
    graph_.set_top(parse_node(0));
    if (cur_.kind != TokKind::End) throw GraphError("unexpected content after graph", cur_.offset);
    resolve_references();
    graph_.validate();
    return std::move(graph_);
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  std::string parse_node(int depth) {
    if (depth > kMaxDepth) throw GraphError("graph nesting too deep", cur_.offset);
    const std::size_t open = cur_.offset;
    advance();  // '('
    if (cur_.kind != TokKind::Atom) throw GraphError("expected variable after '('", cur_.offset);
    std::string variable = cur_.text;
    const std::size_t var_offset = cur_.offset;
    advance();
    if (cur_.kind != TokKind::Slash) {
      throw GraphError("missing '/' concept separator after '" + variable + "'", cur_.offset);
    }
    advance();
    if (cur_.kind != TokKind::Atom && cur_.kind != TokKind::Quoted) {
      throw GraphError("expected concept after '/'", cur_.offset);
    }
    if (!declared_.insert(variable).second) {
      throw GraphError("duplicate variable '" + variable + "'", var_offset);
    }
    graph_.add_node(variable, cur_.text);
    advance();

    while (cur_.kind == TokKind::Role) {
      std::string role = cur_.text;
      advance();
      switch (cur_.kind) {
        case TokKind::LParen: {
          std::string child = parse_node(depth + 1);
          graph_.add_relation(variable, std::move(role), std::move(child));
          break;
        }
        case TokKind::Atom:
          pending_.push_back({graph_.edges().size(), cur_.offset});
          graph_.add_attribute(variable, std::move(role), cur_.text);
          advance();
          break;
        case TokKind::Quoted:
          graph_.add_attribute(variable, std::move(role), cur_.text);
          advance();
          break;
        default:
          throw GraphError("expected value after role '" + role + "'", cur_.offset);
      }
    }
    if (cur_.kind == TokKind::End) throw GraphError("unbalanced parentheses: '(' never closed", open);
    if (cur_.kind != TokKind::RParen) throw GraphError("unexpected token '" + cur_.text + "'", cur_.offset);
    advance();
    return variable;
  }

  // Bare atoms are provisional constants until every declaration is known.
  void resolve_references() {
    for (const auto& ref : pending_) {
      const Edge& e = graph_.edges()[ref.edge_index];
      if (declared_.count(e.target)) {
        Edge relation = e;
        relation.is_constant = false;
        graph_.remove_edge(ref.edge_index);
        graph_.insert_edge(ref.edge_index, std::move(relation));
      } else if (looks_like_variable(e.target)) {
        throw GraphError("reference to undeclared variable '" + e.target + "'", ref.offset);
      }
    }
  }

  Lexer lexer_;
  Tok cur_{TokKind::End, "", 0};
  AmrGraph graph_;
  std::unordered_set<std::string> declared_;
  std::vector<PendingRef> pending_;
};

// Child lists for printing. Edges whose source is unreachable from the top in
// textual orientation are re-homed as inverse roles on their reachable end.
}  // namespace

namespace detail {

std::unordered_map<std::string, std::vector<Edge>> penman_layout(const AmrGraph& g) {
  const auto& edges = g.edges();
  std::vector<bool> rehomed(edges.size(), false);
  std::unordered_map<std::string, std::vector<std::size_t>> out_edges;
  for (std::size_t i = 0; i < edges.size(); ++i) out_edges[edges[i].source].push_back(i);

  std::unordered_set<std::string> reached;
  std::unordered_map<std::string, std::vector<Edge>> extra;
  auto flood = [&](const std::string& start) {
    std::vector<std::string> stack{start};
    reached.insert(start);
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      if (auto it = out_edges.find(u); it != out_edges.end()) {
        for (auto i : it->second) {
          const auto& e = edges[i];
          if (!e.is_constant && reached.insert(e.target).second) stack.push_back(e.target);
        }
      }
      if (auto it = extra.find(u); it != extra.end()) {
        for (const auto& e : it->second) {
          if (reached.insert(e.target).second) stack.push_back(e.target);
        }
      }
    }
  };
  flood(g.top());

  bool progress = true;
  while (progress && reached.size() < g.node_count()) {
    progress = false;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      if (e.is_constant || rehomed[i] || reached.count(e.source) || !reached.count(e.target)) continue;
      rehomed[i] = true;
      extra[e.target].push_back({e.target, invert_role(e.role), e.source, false});
      flood(e.source);
      progress = true;
      break;
    }
  }

  std::unordered_map<std::string, std::vector<Edge>> children;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!rehomed[i]) children[edges[i].source].push_back(edges[i]);
  }
  for (auto& [var, list] : extra) {
    auto& dst = children[var];
    dst.insert(dst.end(), list.begin(), list.end());
  }
  return children;
}

}  // namespace detail

namespace {

void emit_node(const AmrGraph& g, const std::string& var,
               const std::unordered_map<std::string, std::vector<Edge>>& children,
               std::unordered_set<std::string>& opened, const EmitOptions& opt, int depth,
               std::string& out) {
  opened.insert(var);
  out += '(';
  out += var;
  out += " / ";
  out += g.concept_of(var).value_or("");
  auto it = children.find(var);
  if (it != children.end()) {
    for (const auto& e : it->second) {
      if (opt.multiline) {
        out += '\n';
        out.append(static_cast<std::size_t>(opt.indent * (depth + 1)), ' ');
      } else {
        out += ' ';
      }
      out += e.role;
      out += ' ';
      if (e.is_constant || opened.count(e.target)) {
        out += e.target;
      } else {
        emit_node(g, e.target, children, opened, opt, depth + 1, out);
      }
    }
  }
  out += ')';
}

}  // namespace

AmrGraph parse_penman(std::string_view text) { return Parser(text).parse(); }

std::string emit_penman(const AmrGraph& graph, const EmitOptions& options) {
  std::string out;
  if (options.with_metadata) out += emit_metadata(graph.metadata());
  if (graph.node_count() == 0) return out;
  auto children = detail::penman_layout(graph);
  std::unordered_set<std::string> opened;
  emit_node(graph, graph.top(), children, opened, options, 0, out);
  return out;
}

std::string emit_metadata(const Metadata& metadata) {
  std::string out;
  for (const auto& [key, value] : metadata) {
    if (key.empty()) {
      out += "# " + value + "\n";
    } else {
      out += "# ::" + key;
      if (!value.empty()) out += " " + value;
      out += "\n";
    }
  }
  return out;
}

Metadata parse_metadata_line(std::string_view line) {
  Metadata entries;
  std::string_view body = line.substr(1);
  if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
  if (!body.starts_with("::")) {
    entries.emplace_back("", std::string(body));
    return entries;
  }
  // "::snt" carries free text, which may itself contain "::"
  while (body.starts_with("::")) {
    body.remove_prefix(2);
    const auto space = body.find(' ');
    std::string key(body.substr(0, space));
    body = space == std::string_view::npos ? std::string_view{} : body.substr(space + 1);
    std::size_t end = key == "snt" ? std::string_view::npos : body.find(" ::");
    std::string value(body.substr(0, end));
    entries.emplace_back(std::move(key), std::move(value));
    body = end == std::string_view::npos ? std::string_view{} : body.substr(end + 1);
  }
  return entries;
}

std::vector<AmrGraph> read_amr_blocks(std::istream& in) {
  std::vector<AmrGraph> graphs;
  Metadata metadata;
  std::string text;
  std::string line;
  std::size_t block_start_line = 0;
  std::size_t line_number = 0;

  auto flush = [&] {
    if (text.empty()) {
      metadata.clear();
      return;
    }
    try {
      AmrGraph g = parse_penman(text);
      g.set_metadata(std::move(metadata));
      graphs.push_back(std::move(g));
    } catch (const GraphError& e) {
      throw AmrFileError("graph #" + std::to_string(graphs.size() + 1) + " (line " +
                             std::to_string(block_start_line) + "): " + e.what(),
                         graphs.size() + 1, e.offset());
    }
    metadata.clear();
    text.clear();
  };

  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) {
      flush();
      continue;
    }
    if (line[first] == '#' && text.empty()) {
      if (metadata.empty()) block_start_line = line_number;
      for (auto& entry : parse_metadata_line(std::string_view(line).substr(first))) {
        metadata.push_back(std::move(entry));
      }
      continue;
    }
    if (text.empty() && metadata.empty()) block_start_line = line_number;
    if (!text.empty()) text += '\n';
    text += line;
  }
  flush();
  return graphs;
}

std::vector<AmrGraph> read_amr_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_amr_blocks(in);
}

void write_amr_blocks(std::ostream& out, const std::vector<AmrGraph>& graphs) {
  EmitOptions options;
  options.with_metadata = true;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (i) out << '\n';
    out << emit_penman(graphs[i], options) << '\n';
  }
}

void write_amr_file(const std::string& path, const std::vector<AmrGraph>& graphs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_amr_blocks(out, graphs);
}

}  // namespace amrforge
