#include "amrforge/linearize.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <variant>

#include <json.hpp>

#include "amrforge/penman.hpp"

namespace amrforge {
namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Every '_' is doubled so a single '_' before trailing digits is always an
// index suffix.
std::string escape_concept(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (char c : label) {
    out += c;
    if (c == '_') out += '_';
  }
  return out;
}

std::string decode_concept(std::string_view token) {
  std::string_view body = token;
  std::size_t digits = 0;
  while (digits < body.size() && is_digit(body[body.size() - 1 - digits])) ++digits;
  if (digits > 0) {
    std::size_t underscores = 0;
    while (digits + underscores < body.size() && body[body.size() - 1 - digits - underscores] == '_') {
      ++underscores;
    }
    if (underscores % 2 == 1 && digits + underscores < body.size()) {
      body = body.substr(0, body.size() - digits - 1);
    }
  }
  std::string out;
  for (std::size_t i = 0; i < body.size();) {
    if (body[i] != '_') {
      out += body[i++];
      continue;
    }
    std::size_t run = 0;
    while (i + run < body.size() && body[i + run] == '_') ++run;
    out.append((run + 1) / 2, '_');
    i += run;
  }
  if (out.empty()) return std::string(token);
  return out;
}

bool looks_like_variable(std::string_view token) {
  if (token.empty() || token[0] < 'a' || token[0] > 'z') return false;
  return std::all_of(token.begin() + 1, token.end(), is_digit);
}

bool is_quoted(std::string_view t) {
  if (t.size() < 2 || t.front() != '"' || t.back() != '"') return false;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    if (t[i] == '\\') {
      ++i;
    } else if (t[i] == '"') {
      return false;
    }
  }
  // a trailing backslash would escape the closing quote
  std::size_t backslashes = 0;
  for (std::size_t i = t.size() - 1; i > 1 && t[i - 1] == '\\'; --i) ++backslashes;
  return backslashes % 2 == 0;
}

bool is_number(std::string_view t) {
  if (!t.empty() && (t.front() == '-' || t.front() == '+')) t.remove_prefix(1);
  if (t.empty()) return false;
  bool dot = false;
  bool digit = false;
  for (char c : t) {
    if (c == '.') {
      if (dot) return false;
      dot = true;
    } else if (is_digit(c)) {
      digit = true;
    } else {
      return false;
    }
  }
  return digit;
}

enum class Kind { Open, Close, Role, Atom, Junk };

bool plain_symbol(std::string_view t) {
  return !t.empty() && t.find_first_of("/\"()") == std::string_view::npos && t.front() != ':';
}

Kind classify(std::string_view t) {
  if (t == "(") return Kind::Open;
  if (t == ")") return Kind::Close;
  if (t.size() >= 2 && t.front() == ':') {
    return t.find_first_of("/\"()") == std::string_view::npos ? Kind::Role : Kind::Junk;
  }
  if (is_quoted(t) || plain_symbol(t)) return Kind::Atom;
  return Kind::Junk;
}

bool valid_concept(std::string_view t) { return plain_symbol(t); }

struct SerialChild {
  std::string role;
  std::variant<std::size_t, std::string> value;  // node index or atom
  bool expands = false;                           // child span opens here
};

struct SerialNode {
  std::string token;
  std::vector<SerialChild> children;
};

struct SerialTree {
  std::vector<SerialNode> nodes;  // first-visit order; nodes[0] is the top
};

// Tolerant tree reader shared by repair and deserialize. In strict mode a
// role followed by an atom survives only if the atom is a constant or an
// already-introduced concept token.
SerialTree read_tree(const SerializedGraph& tokens, bool strict) {
  SerialTree tree;
  const std::size_t n = tokens.size();
  std::vector<Kind> kinds(n);
  for (std::size_t k = 0; k < n; ++k) kinds[k] = classify(tokens[k]);
  auto opens_node = [&](std::size_t k) {
    return k + 1 < n && kinds[k] == Kind::Open && kinds[k + 1] == Kind::Atom && valid_concept(tokens[k + 1]);
  };

  std::size_t i = 0;
  while (i < n && !opens_node(i)) ++i;
  if (i >= n) return tree;

  std::unordered_map<std::string, std::size_t> known;
  struct Frame {
    std::optional<std::size_t> node;  // nullopt: span is consumed and dropped
  };
  std::vector<Frame> stack;

  auto open = [&](bool keep) {
    const std::string& label = tokens[i + 1];
    Frame f;
    if (keep) {
      f.node = tree.nodes.size();
      tree.nodes.push_back({label, {}});
      known.emplace(label, *f.node);
    }
    i += 2;
    return f;
  };

  stack.push_back(open(true));
  while (i < n && !stack.empty()) {
    Frame& top = stack.back();
    const bool keep = top.node.has_value();
    switch (kinds[i]) {
      case Kind::Close:
        stack.pop_back();
        ++i;
        break;
      case Kind::Role: {
        if (i + 1 >= n) {
          ++i;
          break;
        }
        const std::string& role = tokens[i];
        if (kinds[i + 1] == Kind::Open) {
          if (!opens_node(i + 1)) {
            i += 2;  // "(" without a concept
            break;
          }
          ++i;
          auto parent = top.node;
          Frame child = open(keep);
          if (keep) tree.nodes[*parent].children.push_back({role, *child.node, true});
          stack.push_back(child);
        } else if (kinds[i + 1] == Kind::Atom) {
          const std::string& atom = tokens[i + 1];
          auto hit = known.find(atom);
          if (keep) {
            if (hit != known.end()) {
              tree.nodes[*top.node].children.push_back({role, hit->second});
            } else if (!strict || is_constant_token(atom)) {
              tree.nodes[*top.node].children.push_back({role, atom});
            }
          }
          i += 2;
        } else {
          ++i;  // role without argument
        }
        break;
      }
      case Kind::Open:
        if (opens_node(i)) {
          stack.push_back(open(false));  // span without a role
        } else {
          ++i;
        }
        break;
      case Kind::Atom:
      case Kind::Junk:
        ++i;
        break;
    }
  }
  return tree;
}

void flatten(const SerialTree& tree, std::size_t index, SerializedGraph& out) {
  // iterative to survive deeply nested model output
  struct Cursor {
    std::size_t node;
    std::size_t child;
  };
  std::vector<Cursor> stack{{index, 0}};
  out.push_back("(");
  out.push_back(tree.nodes[index].token);
  while (!stack.empty()) {
    Cursor& c = stack.back();
    const auto& node = tree.nodes[c.node];
    if (c.child == node.children.size()) {
      out.push_back(")");
      stack.pop_back();
      continue;
    }
    const auto& child = node.children[c.child++];
    out.push_back(child.role);
    if (const auto* atom = std::get_if<std::string>(&child.value)) {
      out.push_back(*atom);
    } else {
      const std::size_t target = std::get<std::size_t>(child.value);
      if (!child.expands) {
        out.push_back(tree.nodes[target].token);
      } else {
        out.push_back("(");
        out.push_back(tree.nodes[target].token);
        stack.push_back({target, 0});
      }
    }
  }
}

std::string quote_wiki(const std::string& wiki) { return wiki == "-" ? wiki : "\"" + wiki + "\""; }

}  // namespace

bool is_constant_token(std::string_view token) {
  static const std::unordered_set<std::string_view> modes{"imperative", "expressive", "interrogative"};
  return is_quoted(token) || is_number(token) || token == "+" || token == "-" || modes.count(token) > 0;
}

std::string name_string(const AmrGraph& graph, std::string_view name_variable) {
  std::vector<std::pair<long, std::string>> ops;
  for (const auto& e : graph.edges()) {
    if (e.source != name_variable || !e.is_constant || !e.role.starts_with(":op")) continue;
    long index = 0;
    auto digits = std::string_view(e.role).substr(3);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) continue;
    std::string value = e.target;
    if (is_quoted(value)) value = value.substr(1, value.size() - 2);
    ops.emplace_back(index, std::move(value));
  }
  std::stable_sort(ops.begin(), ops.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [idx, value] : ops) {
    if (!out.empty()) out += ' ';
    out += value;
  }
  return out;
}

StrippedGraph strip_wiki(const AmrGraph& graph) {
  StrippedGraph result{graph, {}};
  AmrGraph& g = result.graph;
  for (std::size_t i = 0; i < g.edges().size();) {
    const Edge& e = g.edges()[i];
    if (!(e.is_constant && e.role == ":wiki")) {
      ++i;
      continue;
    }
    std::string name;
    for (const auto& other : g.edges()) {
      if (other.source == e.source && other.role == ":name" && !other.is_constant) {
        name = name_string(g, other.target);
        break;
      }
    }
    std::string wiki = e.target;
    if (is_quoted(wiki)) wiki = wiki.substr(1, wiki.size() - 2);
    result.entries.push_back({std::move(name), std::move(wiki)});
    g.remove_edge(i);
  }
  return result;
}

void WikiTable::add(const std::string& name, const std::string& wiki, std::uint64_t count) {
  if (name.empty() || wiki.empty()) return;
  table_[name][wiki] += count;
}

void WikiTable::add_entries(const std::vector<WikiEntry>& entries) {
  for (const auto& e : entries) add(e.name, e.wiki);
}

std::optional<std::string> WikiTable::lookup(const std::string& name) const {
  auto it = table_.find(name);
  if (it == table_.end() || it->second.empty()) return std::nullopt;
  const std::string* best = nullptr;
  std::uint64_t best_count = 0;
  for (const auto& [wiki, count] : it->second) {  // map order breaks ties lexicographically
    if (!best || count > best_count) {
      best = &wiki;
      best_count = count;
    }
  }
  return *best;
}

void WikiTable::write_tsv(std::ostream& out) const {
  for (const auto& [name, wikis] : table_) {
    for (const auto& [wiki, count] : wikis) out << name << '\t' << wiki << '\t' << count << '\n';
  }
}

WikiTable WikiTable::read_tsv(std::istream& in) {
  WikiTable table;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw std::runtime_error("wiki table line " + std::to_string(line_number) + ": expected 3 columns");
    }
    std::uint64_t count = 0;
    const char* first = line.data() + b + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, count);
    if (ec != std::errc() || ptr != last) {
      throw std::runtime_error("wiki table line " + std::to_string(line_number) + ": bad frequency");
    }
    table.add(line.substr(0, a), line.substr(a + 1, b - a - 1), count);
  }
  return table;
}

WikiTable WikiTable::read_tsv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_tsv(in);
}

void WikiTable::write_tsv_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_tsv(out);
}

SerializedGraph serialize(const AmrGraph& graph) {
  SerializedGraph out;
  if (graph.node_count() == 0) return out;
  std::unordered_map<std::string, std::size_t> concept_count;
  for (const auto& n : graph.nodes()) ++concept_count[n.label];
  const auto children = detail::penman_layout(graph);

  std::unordered_map<std::string, std::size_t> next_index;
  std::unordered_map<std::string, std::string> token_of;  // variable -> emitted token
  auto open = [&](const std::string& var) {
    const std::string label = graph.concept_of(var).value_or("");
    std::string token = escape_concept(label);
    if (concept_count[label] >= 2) token += "_" + std::to_string(++next_index[label]);
    token_of[var] = token;
    out.push_back("(");
    out.push_back(token);
  };

  struct Cursor {
    const std::vector<Edge>* edges;
    std::size_t next;
  };
  static const std::vector<Edge> kNone;
  auto edges_of = [&](const std::string& var) -> const std::vector<Edge>* {
    auto it = children.find(var);
    return it == children.end() ? &kNone : &it->second;
  };

  open(graph.top());
  std::vector<Cursor> stack{{edges_of(graph.top()), 0}};
  while (!stack.empty()) {
    Cursor& c = stack.back();
    if (c.next == c.edges->size()) {
      out.push_back(")");
      stack.pop_back();
      continue;
    }
    const Edge& e = (*c.edges)[c.next++];
    out.push_back(e.role);
    if (e.is_constant) {
      out.push_back(e.target);
    } else if (auto it = token_of.find(e.target); it != token_of.end()) {
      out.push_back(it->second);
    } else {
      open(e.target);
      stack.push_back({edges_of(e.target), 0});
    }
  }
  return out;
}

SerializedGraph repair(const SerializedGraph& tokens) {
  SerialTree tree = read_tree(tokens, /*strict=*/true);
  SerializedGraph out;
  if (!tree.nodes.empty()) flatten(tree, 0, out);
  return out;
}

AmrGraph deserialize(const SerializedGraph& tokens) {
  SerialTree tree = read_tree(tokens, /*strict=*/false);
  AmrGraph g;
  if (tree.nodes.empty()) {
    g.add_node("a", std::string(kEmptyConcept));
    g.set_top("a");
    return g;
  }
  auto var = [](std::size_t index) { return "v" + std::to_string(index); };
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    g.add_node(var(k), decode_concept(tree.nodes[k].token));
  }
  g.set_top(var(0));
  // edges in span order: each node's children appear after the node opens
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    for (const auto& child : tree.nodes[k].children) {
      if (const auto* atom = std::get_if<std::string>(&child.value)) {
        std::string value = *atom;
        if (looks_like_variable(value)) value = "\"" + value + "\"";
        g.add_attribute(var(k), child.role, std::move(value));
      } else {
        g.add_relation(var(k), child.role, var(std::get<std::size_t>(child.value)));
      }
    }
  }
  return g;
}

AmrGraph restore_wiki(const AmrGraph& graph, const WikiTable& table) {
  AmrGraph g = graph;
  std::unordered_set<std::string> has_wiki;
  for (const auto& e : g.edges()) {
    if (e.is_constant && e.role == ":wiki") has_wiki.insert(e.source);
  }
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    const Edge& e = g.edges()[i];
    if (e.is_constant || e.role != ":name" || has_wiki.count(e.source)) continue;
    const std::string source = e.source;
    const std::string wiki = table.lookup(name_string(g, e.target)).value_or("-");
    g.insert_edge(i, {source, ":wiki", quote_wiki(wiki), true});
    has_wiki.insert(source);
    ++i;
  }
  return g;
}

SerializedGraph tokenize_serialized(std::string_view text) {
  SerializedGraph tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == '(' || c == ')') {
      flush();
      tokens.emplace_back(1, c);
    } else if (c == '"' && current.empty()) {
      std::size_t j = i + 1;
      while (j < text.size() && text[j] != '"') {
        if (text[j] == '\\' && j + 1 < text.size()) ++j;
        ++j;
      }
      if (j >= text.size()) {
        tokens.emplace_back(text.substr(i));  // unterminated: one junk token
        return tokens;
      }
      tokens.emplace_back(text.substr(i, j - i + 1));
      i = j;
    } else {
      current += c;
    }
  }
  flush();
  return tokens;
}

std::string join_tokens(const SerializedGraph& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

TrainingPair make_training_pair(std::string_view sentence, const AmrGraph& graph, std::string id) {
  if (sentence.empty()) throw std::invalid_argument("empty sentence");
  TrainingPair pair;
  pair.id = std::move(id);
  pair.input = std::string(kTaskPrefix) + std::string(sentence);
  pair.target = join_tokens(serialize(strip_wiki(graph).graph));
  return pair;
}

void write_pairs_jsonl(std::ostream& out, const std::vector<TrainingPair>& pairs) {
  for (const auto& p : pairs) {
    nlohmann::json j{{"id", p.id}, {"input", p.input}, {"target", p.target}};
    out << j.dump() << '\n';
  }
}

std::vector<TrainingPair> read_pairs_jsonl(std::istream& in) {
  std::vector<TrainingPair> pairs;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      pairs.push_back({j.value("id", std::string{}), j.at("input").get<std::string>(),
                       j.at("target").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("pair file line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace amrforge
