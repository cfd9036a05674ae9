#include "amrforge/triples.hpp"

#include <algorithm>

namespace amrforge {

std::string canonical_constant(std::string_view value) {
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
    value = value.substr(1, value.size() - 2);
  }
  return std::string(value);
}

Triple normalize_relation(Triple relation) {
  while (is_inverse_role(relation.role)) {
    relation.role = invert_role(relation.role);
    std::swap(relation.source, relation.target);
  }
  return relation;
}

void canonicalize(TripleSet& t) {
  auto tidy = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  tidy(t.instances);
  tidy(t.attributes);
  tidy(t.relations);
}

std::vector<std::string> TripleSet::variables() const {
  std::vector<std::string> vars;
  vars.reserve(instances.size());
  for (const auto& i : instances) vars.push_back(i.variable);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

TripleSet to_triples(const AmrGraph& graph) {
  TripleSet t;
  for (const auto& n : graph.nodes()) t.instances.push_back({n.variable, n.label});
  if (auto top = graph.concept_of(graph.top())) {
    t.attributes.push_back({kTopRole, graph.top(), *top});
  }
  for (const auto& e : graph.edges()) {
    if (e.is_constant) {
      t.attributes.push_back({e.role, e.source, canonical_constant(e.target)});
    } else {
      t.relations.push_back(normalize_relation({e.role, e.source, e.target}));
    }
  }
  canonicalize(t);
  return t;
}

}  // namespace amrforge
