#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "amrforge/penman.hpp"
#include "amrforge/smatch.hpp"
#include "amrforge/triples.hpp"
#include "fixtures.hpp"
#include "random_graphs.hpp"

using namespace amrforge;

namespace {

bool has_relation(const TripleSet& t, const Triple& r) {
  return std::find(t.relations.begin(), t.relations.end(), r) != t.relations.end();
}

std::size_t error_offset(std::string_view text) {
  try {
    parse_penman(text);
  } catch (const GraphError& e) {
    return e.offset();
  }
  FAIL("expected a parse error for: " << text);
  return 0;
}

}  // namespace

TEST_CASE("figure graph parses with re-entrancy resolved") {
  const AmrGraph g = parse_penman(fixtures::kFigureGraph);
  CHECK(g.node_count() == 11);
  CHECK(g.top() == "r");
  const auto& edges = g.edges();
  CHECK(std::find(edges.begin(), edges.end(), Edge{"t2", ":ARG1-of", "i", false}) != edges.end());
  CHECK(std::find(edges.begin(), edges.end(), Edge{"i2", ":ARG1", "t2", false}) != edges.end());
  CHECK(std::find(edges.begin(), edges.end(), Edge{"c", ":wiki", "\"Taiwan\"", true}) != edges.end());

  const TripleSet t = to_triples(g);
  CHECK(t.instances.size() == 11);
  CHECK(has_relation(t, {":ARG1", "i2", "t2"}));
  // inverse role stored in canonical orientation
  CHECK(has_relation(t, {":ARG1", "i", "t2"}));
}

TEST_CASE("minimal graph") {
  const AmrGraph g = parse_penman("(a / thing)");
  CHECK(g.node_count() == 1);
  CHECK(g.top() == "a");
  CHECK(g.edges().empty());
  CHECK(emit_penman(g) == "(a / thing)");

  const TripleSet t = to_triples(g);
  CHECK(t.instances == std::vector<Instance>{{"a", "thing"}});
  CHECK(t.attributes == std::vector<Triple>{{":TOP", "a", "thing"}});
  CHECK(t.relations.empty());
}

TEST_CASE("re-entrant op reference yields the hand-enumerated triples") {
  const TripleSet t = to_triples(parse_penman("(a / a1 :op1 (b / b1) :op2 b)"));
  TripleSet expected;
  expected.instances = {{"a", "a1"}, {"b", "b1"}};
  expected.attributes = {{":TOP", "a", "a1"}};
  expected.relations = {{":op1", "a", "b"}, {":op2", "a", "b"}};
  canonicalize(expected);
  CHECK(t == expected);
  CHECK(t.size() == 5);  // 4 content triples plus :TOP
}

TEST_CASE("polarity becomes an attribute triple") {
  const TripleSet t = to_triples(parse_penman("(r / see-01 :polarity -)"));
  CHECK(std::find(t.attributes.begin(), t.attributes.end(), Triple{":polarity", "r", "-"}) != t.attributes.end());
}

TEST_CASE("forward references and duplicate roles parse") {
  const AmrGraph g = parse_penman("(a / and :op1 b :op1 (b / boy) :op1 (c / cat))");
  CHECK(g.node_count() == 3);
  CHECK(to_triples(g).relations.size() == 2);  // the repeated (op1, a, b) collapses
}

TEST_CASE("parse errors carry byte offsets") {
  CHECK(error_offset("(a / thing") == 0);
  CHECK(error_offset("(a / thing :ARG0 (a / boy))") == 18);
  CHECK(error_offset("(a / thing :ARG0 b2)") == 17);
  CHECK(error_offset("(a thing)") == 3);
  CHECK(error_offset("(a / thing))") == 11);
  CHECK(error_offset("") == 0);
  CHECK(error_offset("(a / \"unterminated)") == 5);
}

TEST_CASE("parser never crashes on fuzzed input") {
  const std::string alphabet = "()/: \"ab-01\n";
  Rng rng(7);
  int ok = 0;
  int rejected = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    // mutate a valid graph so both outcomes occur
    std::string text = "(a / see-01 :ARG0 (b / boy) :ARG1 b)";
    const auto edits = rng.below(4);
    for (std::uint64_t k = 0; k < edits; ++k) {
      const auto at = rng.below(text.size() + 1);
      if (rng.bernoulli(0.5) && at < text.size()) {
        text.erase(at, 1);
      } else {
        text.insert(at, 1, alphabet[rng.below(alphabet.size())]);
      }
    }
    try {
      parse_penman(text).validate();
      ++ok;
    } catch (const GraphError& e) {
      CHECK(e.offset() <= text.size());
      ++rejected;
    }
  }
  CHECK(ok + rejected == 5000);
  CHECK(ok > 0);
}

TEST_CASE("deep nesting is rejected, not a stack overflow") {
  std::string text;
  for (int k = 0; k < 5000; ++k) text += "(v" + std::to_string(k) + " / x :ARG0 ";
  text += "(z / y)";
  text += std::string(5000, ')');
  CHECK_THROWS_AS(parse_penman(text), GraphError);
}

TEST_CASE("emit puts concepts on first mention and preserves child order") {
  const AmrGraph g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))");
  EmitOptions flat;
  flat.multiline = false;
  CHECK(emit_penman(g, flat) == "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))");
  CHECK(emit_penman(g) == "(w / want-01\n    :ARG0 (b / boy)\n    :ARG1 (g / go-02\n        :ARG0 b))");
}

TEST_CASE("emit re-homes edges written against the tree direction") {
  AmrGraph g;
  g.add_node("a", "thing");
  g.add_node("b", "see-01");
  g.add_relation("b", ":ARG1", "a");
  g.set_top("a");
  g.validate();
  const std::string text = emit_penman(g, {false, 4, false});
  CHECK(text == "(a / thing :ARG1-of (b / see-01))");
  CHECK(to_triples(parse_penman(text)) == to_triples(g));
}

TEST_CASE("round trip on random graphs: identical triples and Smatch 1.0") {
  Rng rng(2024);
  std::vector<TripleSet> original, reparsed;
  for (int k = 0; k < 100; ++k) {
    const AmrGraph g = testing::random_graph(rng);
    const AmrGraph back = parse_penman(emit_penman(g));
    CHECK(to_triples(back) == to_triples(g));
    original.push_back(to_triples(g));
    reparsed.push_back(to_triples(back));
  }
  const auto counts = smatch_counts(reparsed, original);
  for (const auto& c : counts) CHECK(to_prf(c).f1 == 1.0);
}

TEST_CASE("inverse normalization is idempotent") {
  for (const char* role : {":ARG0-of", ":ARG0-of-of", ":consist-of", ":mod", ":prep-out-of"}) {
    const Triple once = normalize_relation({role, "x", "y"});
    CHECK(normalize_relation(once) == once);
  }
  CHECK(normalize_relation({":ARG0-of-of", "x", "y"}) == Triple{":ARG0", "x", "y"});
  CHECK(normalize_role(":consist-of") == ":consist-of");
  CHECK(invert_role(":ARG1") == ":ARG1-of");
}

TEST_CASE("validate rejects broken graphs") {
  AmrGraph g;
  CHECK_THROWS_AS(g.validate(), GraphError);
  g.add_node("a", "x");
  g.add_node("b", "y");
  g.set_top("a");
  CHECK_THROWS_WITH_AS(g.validate(), "graph is not connected from top", GraphError);
  g.add_relation("a", ":ARG0", "c");
  CHECK_THROWS_AS(g.validate(), GraphError);
}

TEST_CASE("block files keep metadata and round trip byte-stably") {
  const std::string text =
      "# ::id s1 ::date 2020\n# ::snt The boy :: left.\n(l / leave-11\n    :ARG0 (b / boy))\n\n"
      "# a free comment\n(a / thing)\n";
  std::istringstream in(text);
  auto graphs = read_amr_blocks(in);
  REQUIRE(graphs.size() == 2);
  CHECK(graphs[0].meta("id") == "s1");
  CHECK(graphs[0].meta("date") == "2020");
  CHECK(graphs[0].meta("snt") == "The boy :: left.");
  CHECK(graphs[1].metadata() == Metadata{{"", "a free comment"}});

  std::ostringstream once;
  write_amr_blocks(once, graphs);
  std::istringstream again(once.str());
  std::ostringstream twice;
  write_amr_blocks(twice, read_amr_blocks(again));
  CHECK(once.str() == twice.str());
}

TEST_CASE("block file errors name the graph") {
  std::istringstream in("(a / thing)\n\n(b / thing\n\n(c / thing)\n");
  try {
    read_amr_blocks(in);
    FAIL("expected error");
  } catch (const AmrFileError& e) {
    CHECK(e.graph_number() == 2);
  }
}
