#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "amrforge/corpus.hpp"
#include "amrforge/linearize.hpp"
#include "amrforge/penman.hpp"
#include "amrforge/smatch.hpp"

using namespace amrforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "amrforge_test_corpus";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool has_role(const AmrGraph& g, std::string_view role, std::string_view target = {}) {
  for (const auto& e : g.edges()) {
    if (e.role == role && (target.empty() || e.target == target)) return true;
  }
  return false;
}

bool has_reentrancy(const AmrGraph& g) {
  std::map<std::string, int> in;
  for (const auto& e : g.edges()) {
    if (!e.is_constant && ++in[e.target] > 1) return true;
  }
  return false;
}

const char* kThree = R"(# ::id a.1
# ::snt The boy slept .
(s / sleep-01
    :ARG0 (b / boy))

# ::id a.2
# ::snt Mary did not laugh .
(l / laugh-01
    :ARG0 (p / person
        :wiki "Mary_Shelley"
        :name (n / name
            :op1 "Mary"))
    :polarity -)

# ::snt The cat saw itself .
(s / see-01
    :ARG0 (c / cat)
    :ARG1 c)
)";

}  // namespace

TEST_CASE("loading a three-graph corpus") {
  const auto path = scratch("three.amr");
  write_text(path, kThree);
  const Corpus c = load_corpus(path.string(), SplitKind::SilverStd);
  REQUIRE(c.items.size() == 3);
  CHECK(c.manifest.sentences == 3);
  CHECK(c.manifest.tokens == 4 + 5 + 5);
  CHECK(c.manifest.split == SplitKind::SilverStd);
  CHECK(c.manifest.name == "three");
  CHECK(c.items[1].id == "a.2");
  CHECK(c.items[2].id == "three.3");
  CHECK(c.items[2].sentence == "The cat saw itself .");
}

TEST_CASE("malformed graph and missing sentence are reported with the graph number") {
  const auto bad = scratch("bad.amr");
  write_text(bad, "# ::snt a\n(a / b)\n\n# ::snt c\n(x / y :ARG0 (\n\n# ::snt d\n(d / e)\n");
  try {
    load_corpus(bad.string());
    FAIL("expected an error");
  } catch (const AmrFileError& e) {
    CHECK(e.graph_number() == 2);
  }
  const auto nosnt = scratch("nosnt.amr");
  write_text(nosnt, "# ::snt a\n(a / b)\n\n# ::id q\n(d / e)\n");
  try {
    load_corpus(nosnt.string());
    FAIL("expected an error");
  } catch (const AmrFileError& e) {
    CHECK(e.graph_number() == 2);
    CHECK(std::string(e.what()).find("snt") != std::string::npos);
  }
  CHECK_THROWS(load_corpus(scratch("missing.amr").string()));
}

TEST_CASE("save then load is byte stable and manifests regenerate") {
  const auto items = generate_synthetic(4, 50);
  const auto first = scratch("synth_a.amr");
  const auto second = scratch("synth_b.amr");
  save_corpus(first.string(), items);
  const Corpus loaded = load_corpus(first.string());
  save_corpus(second.string(), loaded.items);
  CHECK(read_text(first) == read_text(second));
  for (std::size_t k = 0; k < items.size(); ++k) {
    CHECK(loaded.items[k].id == items[k].id);
    CHECK(loaded.items[k].sentence == items[k].sentence);
    CHECK(to_triples(loaded.items[k].graph) == to_triples(items[k].graph));
  }

  const auto manifest_path = scratch("synth_a.manifest.json");
  write_manifest(manifest_path.string(), loaded.manifest);
  const CorpusManifest stored = read_manifest(manifest_path.string());
  CHECK(stored == load_corpus(first.string()).manifest);
  CHECK(stored == describe(items, "synth_a", SplitKind::Human, {first.string()}));
}

TEST_CASE("manifest JSON") {
  CorpusManifest m{"bio", SplitKind::SilverBio, 2, 7, {"x.amr"}};
  CHECK(manifest_to_json(m) ==
        "{\n  \"name\": \"bio\",\n  \"split\": \"silver-bio\",\n  \"sentences\": 2,\n  \"tokens\": 7,\n"
        "  \"files\": [\n    \"x.amr\"\n  ]\n}\n");
  CHECK(manifest_from_json(manifest_to_json(m)) == m);
  CHECK_THROWS_AS(manifest_from_json("{\"name\":\"x\",\"split\":\"gold\",\"sentences\":1,\"tokens\":1}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(manifest_from_json("not json"), std::invalid_argument);
}

TEST_CASE("whitespace token counts") {
  CHECK(whitespace_tokens("") == 0);
  CHECK(whitespace_tokens("  a  b\tc\n") == 3);
  CHECK(whitespace_tokens("one") == 1);
}

TEST_CASE("synthetic corpus covers every category and is deterministic") {
  const auto items = generate_synthetic(1, 10);
  REQUIRE(items.size() == 10);
  bool reentrant = false, negated = false, named = false, wiki = false, arg = false, sense = false;
  for (const auto& item : items) {
    CHECK_NOTHROW(item.graph.validate());
    CHECK(whitespace_tokens(item.sentence) >= 3);
    reentrant |= has_reentrancy(item.graph);
    negated |= has_role(item.graph, ":polarity", "-");
    named |= has_role(item.graph, ":name");
    wiki |= has_role(item.graph, ":wiki");
    arg |= has_role(item.graph, ":ARG0");
    for (const auto& n : item.graph.nodes()) sense |= n.label.size() > 3 && n.label[n.label.size() - 3] == '-';
  }
  CHECK(reentrant);
  CHECK(negated);
  CHECK(named);
  CHECK(wiki);
  CHECK(arg);
  CHECK(sense);

  const auto again = generate_synthetic(1, 10);
  for (std::size_t k = 0; k < items.size(); ++k) {
    CHECK(again[k].sentence == items[k].sentence);
    CHECK(emit_penman(again[k].graph) == emit_penman(items[k].graph));
  }
  const auto one = generate_synthetic(1, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].sentence == items[0].sentence);
  CHECK(generate_synthetic(2, 10)[3].sentence != items[3].sentence);
}

TEST_CASE("synthetic graphs survive the linearization cycle") {
  const auto items = generate_synthetic(11, 400);
  WikiTable table;
  for (const auto& item : items) table.add_entries(strip_wiki(item.graph).entries);
  std::vector<TripleSet> pred, gold;
  for (const auto& item : items) {
    const auto pair = make_training_pair(item.sentence, item.graph, item.id);
    const AmrGraph back = restore_wiki(deserialize(tokenize_serialized(pair.target)), table);
    pred.push_back(to_triples(back));
    gold.push_back(to_triples(item.graph));
  }
  for (const auto& c : smatch_counts(pred, gold)) CHECK(to_prf(c).f1 == 1.0);
}

TEST_CASE("same sentence always means the same graph") {
  const auto items = generate_synthetic(3, 2000);
  std::map<std::string, TripleSet> seen;
  for (const auto& item : items) {
    const auto t = to_triples(deserialize(serialize(item.graph)));
    auto [it, fresh] = seen.emplace(item.sentence, t);
    if (!fresh) CHECK(smatch_pair(it->second, t, 4, 0).matched == t.size());
  }
}
