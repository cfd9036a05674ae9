#pragma once

#include <compare>
#include <string>
#include <vector>

#include "amrforge/graph.hpp"

namespace amrforge {

struct Instance {
  std::string variable;
  std::string label;
  auto operator<=>(const Instance&) const = default;
};

/// (role, source, target). For attributes the target is a constant.
struct Triple {
  std::string role;
  std::string source;
  std::string target;
  auto operator<=>(const Triple&) const = default;
};

/// Instance/attribute/relation decomposition of a graph; each list is sorted
/// and duplicate-free. The top is the attribute (":TOP", top, concept).
struct TripleSet {
  std::vector<Instance> instances;
  std::vector<Triple> attributes;
  std::vector<Triple> relations;

  std::size_t size() const { return instances.size() + attributes.size() + relations.size(); }
  std::vector<std::string> variables() const;
  bool operator==(const TripleSet&) const = default;
};

inline constexpr const char* kTopRole = ":TOP";

TripleSet to_triples(const AmrGraph& graph);

/// Orients a relation so its role is not an inverse role, swapping ends as
/// needed. Idempotent.
Triple normalize_relation(Triple relation);

/// Constant text as compared by Smatch: surrounding double quotes removed.
std::string canonical_constant(std::string_view value);

/// Sorts and removes duplicates in place.
void canonicalize(TripleSet& triples);

}  // namespace amrforge
