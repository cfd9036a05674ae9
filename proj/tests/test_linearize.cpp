#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "amrforge/linearize.hpp"
#include "amrforge/penman.hpp"
#include "amrforge/smatch.hpp"
#include "fixtures.hpp"
#include "random_graphs.hpp"

using namespace amrforge;

namespace {

double pair_f1(const AmrGraph& pred, const AmrGraph& gold) {
  return to_prf(smatch_pair(to_triples(pred), to_triples(gold), 4, 1)).f1;
}

bool contains(const SerializedGraph& tokens, std::string_view t) {
  return std::find(tokens.begin(), tokens.end(), t) != tokens.end();
}

SerializedGraph random_tokens(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> alphabet{"(",     ")",       "(",    ")",   ":ARG0", ":ARG1-of", ":mod",
                                                 "thing", "thing_2", "boy",  "-",   "\"Taiwan\"", "5",   ":",
                                                 "see-01", "a/b",   "\"un", "x_",  ":op1", "imperative"};
  SerializedGraph tokens;
  const auto len = rng.below(max_len + 1);
  for (std::uint64_t k = 0; k < len; ++k) tokens.push_back(alphabet[rng.below(alphabet.size())]);
  return tokens;
}

}  // namespace

TEST_CASE("figure graph serializes token-for-token") {
  const AmrGraph raw = parse_penman(fixtures::kFigureGraph);
  const auto stripped = strip_wiki(raw);
  CHECK(join_tokens(serialize(stripped.graph)) == fixtures::kFigureSerialized);
  REQUIRE(stripped.entries.size() == 1);
  CHECK(stripped.entries[0] == WikiEntry{"Taiwan", "Taiwan"});

  const TrainingPair pair = make_training_pair(fixtures::kFigureSentence, raw, "fig1");
  CHECK(pair.input == fixtures::kFigureInput);
  CHECK(pair.target == fixtures::kFigureSerialized);
  CHECK(pair.input.starts_with(kTaskPrefix));
}

TEST_CASE("figure serialization de-serializes and re-wikifies to the raw graph") {
  const AmrGraph raw = parse_penman(fixtures::kFigureGraph);
  const auto stripped = strip_wiki(raw);
  const AmrGraph back = deserialize(tokenize_serialized(fixtures::kFigureSerialized));
  CHECK(back.top() == "v0");
  CHECK(back.node_count() == 11);
  CHECK(pair_f1(back, stripped.graph) == 1.0);

  WikiTable table;
  table.add("Taiwan", "Taiwan");
  const AmrGraph restored = restore_wiki(back, table);
  CHECK(pair_f1(restored, raw) == 1.0);
  const std::string text = emit_penman(restored, {false, 4, false});
  CHECK(text.find(":wiki \"Taiwan\" :name") != std::string::npos);
}

TEST_CASE("trivial graph") {
  const AmrGraph g = parse_penman("(a / thing)");
  const auto stripped = strip_wiki(g);
  CHECK(stripped.entries.empty());
  CHECK(to_triples(stripped.graph) == to_triples(g));
  CHECK(join_tokens(serialize(g)) == "( thing )");
  CHECK(emit_penman(deserialize({"(", "thing", ")"})) == "(v0 / thing)");
  CHECK(make_training_pair("x", g) == TrainingPair{"", "amr generation ; x", "( thing )"});
  CHECK_THROWS_AS(make_training_pair("", g), std::invalid_argument);
  CHECK(to_triples(restore_wiki(g, WikiTable{})) == to_triples(g));
}

TEST_CASE("two wikified entities are both stripped") {
  const AmrGraph g = parse_penman(
      "(m / meet-03 :ARG0 (p / person :wiki \"Barack_Obama\" :name (n / name :op1 \"Barack\" :op2 \"Obama\"))"
      " :ARG1 (c / city :wiki \"Paris\" :name (n2 / name :op1 \"Paris\")))");
  const AmrGraph reference = parse_penman(
      "(m / meet-03 :ARG0 (p / person :name (n / name :op1 \"Barack\" :op2 \"Obama\"))"
      " :ARG1 (c / city :name (n2 / name :op1 \"Paris\")))");
  const auto stripped = strip_wiki(g);
  CHECK(stripped.entries == std::vector<WikiEntry>{{"Barack Obama", "Barack_Obama"}, {"Paris", "Paris"}});
  CHECK(pair_f1(stripped.graph, reference) == 1.0);
  for (const auto& e : stripped.graph.edges()) CHECK(e.role != ":wiki");
}

TEST_CASE("repeated concepts get first-visit indices and stay distinct") {
  const AmrGraph g = parse_penman("(a / and :op1 (t / thing) :op2 (t2 / thing :mod t))");
  const auto tokens = serialize(g);
  CHECK(join_tokens(tokens) == "( and :op1 ( thing_1 ) :op2 ( thing_2 :mod thing_1 ) )");
  const AmrGraph back = deserialize(tokens);
  CHECK(pair_f1(back, g) == 1.0);
  for (const auto& n : back.nodes()) CHECK(n.label.find('_') == std::string::npos);
}

TEST_CASE("concepts containing underscores are escaped") {
  const AmrGraph g = parse_penman("(a / and :op1 (b / foo_1) :op2 (c / foo_1) :op3 (d / x_))");
  const auto tokens = serialize(g);
  CHECK(contains(tokens, "foo__1_1"));
  CHECK(contains(tokens, "foo__1_2"));
  CHECK(contains(tokens, "x__"));
  CHECK(pair_f1(deserialize(tokens), g) == 1.0);
}

TEST_CASE("repair examples") {
  CHECK(repair({"(", "thing"}) == SerializedGraph{"(", "thing", ")"});
  CHECK(repair(tokenize_serialized("( see-01 :ARG0 )")) == tokenize_serialized("( see-01 )"));
  CHECK(repair(tokenize_serialized(") ) ( a :ARG0 ( b ) ) )")) == tokenize_serialized("( a :ARG0 ( b ) )"));
  // unknown bare concept is dropped, a known one is kept as re-entrancy
  CHECK(repair(tokenize_serialized("( see-01 :ARG0 ( boy ) :ARG1 girl :ARG2 boy )")) ==
        tokenize_serialized("( see-01 :ARG0 ( boy ) :ARG2 boy )"));
  CHECK(repair(tokenize_serialized("( see-01 :polarity - :quant 5 :mode imperative )")) ==
        tokenize_serialized("( see-01 :polarity - :quant 5 :mode imperative )"));
  CHECK(repair({}).empty());
  CHECK(repair({")", ":ARG0"}).empty());
}

TEST_CASE("nothing parseable becomes the sentinel graph") {
  CHECK(emit_penman(deserialize({})) == "(a / amr-empty)");
  CHECK(emit_penman(deserialize(repair({":ARG0", ")"}))) == "(a / amr-empty)");
}

TEST_CASE("serialize never emits variables and deserialize never leaves suffixes") {
  Rng rng(99);
  std::vector<TripleSet> pred, gold;
  for (int k = 0; k < 500; ++k) {
    const AmrGraph g = strip_wiki(testing::random_graph(rng)).graph;
    const auto tokens = serialize(g);
    for (const auto& n : g.nodes()) CHECK_FALSE(contains(tokens, n.variable));
    const AmrGraph back = deserialize(tokens);
    for (const auto& n : back.nodes()) {
      const auto underscore = n.label.rfind('_');
      CHECK((underscore == std::string::npos || underscore + 1 == n.label.size() ||
             !std::isdigit(static_cast<unsigned char>(n.label[underscore + 1]))));
    }
    pred.push_back(to_triples(back));
    gold.push_back(to_triples(g));
  }
  for (const auto& c : smatch_counts(pred, gold)) CHECK(to_prf(c).f1 == 1.0);
}

TEST_CASE("full cycle with wiki restoration reaches Smatch 1.0") {
  Rng rng(5);
  WikiTable table;
  std::vector<AmrGraph> corpus;
  for (int k = 0; k < 200; ++k) corpus.push_back(testing::random_graph(rng));
  for (const auto& g : corpus) table.add_entries(strip_wiki(g).entries);
  for (const auto& g : corpus) {
    const AmrGraph cycled = restore_wiki(deserialize(serialize(strip_wiki(g).graph)), table);
    CHECK(pair_f1(cycled, g) == 1.0);
  }
}

TEST_CASE("repair is total and idempotent on fuzzed token strings") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto tokens = random_tokens(rng, 30);
    const auto once = repair(tokens);
    CHECK(repair(once) == once);
    const AmrGraph g = deserialize(once);
    CHECK_NOTHROW(g.validate());
    CHECK_NOTHROW(parse_penman(emit_penman(g)));
    CHECK(to_triples(deserialize(once)) == to_triples(deserialize(tokenize_serialized(join_tokens(once)))));
  }
}

TEST_CASE("deserialize output always re-parses, even without repair") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const AmrGraph g = deserialize(random_tokens(rng, 30));
    CHECK_NOTHROW(g.validate());
    CHECK(to_triples(parse_penman(emit_penman(g))) == to_triples(g));
  }
}

TEST_CASE("restore_wiki uses frequency, then lexicographic order, then '-'") {
  WikiTable table;
  table.add("Paris", "Paris_Hilton", 1);
  table.add("Paris", "Paris", 3);
  table.add("Georgia", "Georgia_(country)", 2);
  table.add("Georgia", "Georgia_(U.S._state)", 2);
  CHECK(table.lookup("Paris") == "Paris");
  CHECK(table.lookup("Georgia") == "Georgia_(U.S._state)");
  CHECK_FALSE(table.lookup("Nowhere"));

  const AmrGraph g = parse_penman("(c / city :name (n / name :op1 \"Nowhere\"))");
  CHECK(emit_penman(restore_wiki(g, table), {false, 4, false}) ==
        "(c / city :wiki - :name (n / name :op1 \"Nowhere\"))");

  std::stringstream tsv;
  table.write_tsv(tsv);
  const WikiTable reread = WikiTable::read_tsv(tsv);
  CHECK(reread.lookup("Paris") == "Paris");
  CHECK(reread.lookup("Georgia") == "Georgia_(U.S._state)");
}

TEST_CASE("tokenizer keeps quoted constants whole and splits parentheses") {
  CHECK(tokenize_serialized("(a :op1 \"New York\"))") ==
        SerializedGraph{"(", "a", ":op1", "\"New York\"", ")", ")"});
}

TEST_CASE("pair files are JSON lines and read back") {
  Rng rng(3);
  std::vector<TrainingPair> pairs;
  for (int k = 0; k < 10; ++k) {
    pairs.push_back(make_training_pair("sentence " + std::to_string(k), testing::random_graph(rng), "id" + std::to_string(k)));
  }
  for (const auto& p : pairs) CHECK(p.input.starts_with(kTaskPrefix));
  std::stringstream io;
  write_pairs_jsonl(io, pairs);
  CHECK(io.str().starts_with("{\"id\":\"id0\",\"input\":\"amr generation ; sentence 0\""));
  CHECK(read_pairs_jsonl(io) == pairs);
}
