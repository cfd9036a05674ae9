#include "amrforge/graph.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace amrforge {

void AmrGraph::add_node(std::string variable, std::string label) {
  nodes_.push_back({std::move(variable), std::move(label)});
}

void AmrGraph::add_relation(std::string source, std::string role, std::string target) {
  edges_.push_back({std::move(source), std::move(role), std::move(target), false});
}

void AmrGraph::add_attribute(std::string source, std::string role, std::string value) {
  edges_.push_back({std::move(source), std::move(role), std::move(value), true});
}

void AmrGraph::insert_edge(std::size_t position, Edge edge) {
  position = std::min(position, edges_.size());
  edges_.insert(edges_.begin() + static_cast<std::ptrdiff_t>(position), std::move(edge));
}

void AmrGraph::remove_edge(std::size_t position) {
  if (position < edges_.size()) edges_.erase(edges_.begin() + static_cast<std::ptrdiff_t>(position));
}

void AmrGraph::add_metadata(std::string key, std::string value) {
  metadata_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> AmrGraph::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const Node* AmrGraph::find_node(std::string_view variable) const {
  for (const auto& n : nodes_) {
    if (n.variable == variable) return &n;
  }
  return nullptr;
}

std::optional<std::string> AmrGraph::concept_of(std::string_view variable) const {
  if (const Node* n = find_node(variable)) return n->label;
  return std::nullopt;
}

void AmrGraph::validate() const {
  if (nodes_.empty()) throw GraphError("graph has no nodes");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.variable.empty()) throw GraphError("empty variable name");
    if (n.label.empty()) throw GraphError("variable '" + n.variable + "' has no concept");
    if (!index.emplace(n.variable, i).second) {
      throw GraphError("duplicate variable '" + n.variable + "'");
    }
  }
  if (!index.count(top_)) throw GraphError("top '" + top_ + "' is not a declared variable");

  std::vector<std::vector<std::size_t>> adjacency(nodes_.size());
  for (const auto& e : edges_) {
    auto s = index.find(e.source);
    if (s == index.end()) throw GraphError("edge source '" + e.source + "' is not declared");
    if (e.role.size() < 2 || e.role.front() != ':') {
      throw GraphError("malformed role '" + e.role + "'");
    }
    if (e.is_constant) continue;
    auto t = index.find(e.target);
    if (t == index.end()) throw GraphError("edge target '" + e.target + "' is not declared");
    adjacency[s->second].push_back(t->second);
    adjacency[t->second].push_back(s->second);
  }

  std::vector<bool> seen(nodes_.size(), false);
  std::vector<std::size_t> stack{index.at(top_)};
  seen[stack.back()] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (auto v : adjacency[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  if (reached != nodes_.size()) throw GraphError("graph is not connected from top");
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

bool is_inverse_role(std::string_view role) {
  if (!ends_with(role, "-of") || role.size() <= 4) return false;
  // :consist-of and :prep-out-of style roles are ordinary roles
  if (role == ":consist-of" || role.starts_with(":prep-")) return false;
  return true;
}

std::string invert_role(std::string_view role) {
  if (is_inverse_role(role)) return std::string(role.substr(0, role.size() - 3));
  return std::string(role) + "-of";
}

std::string normalize_role(std::string_view role) {
  return is_inverse_role(role) ? std::string(role.substr(0, role.size() - 3)) : std::string(role);
}

}  // namespace amrforge
