#include "amrforge/corpus.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "amrforge/penman.hpp"
#include "amrforge/rng.hpp"

namespace amrforge {

std::string_view split_kind_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::Human: return "human";
    case SplitKind::SilverStd: return "silver-std";
    case SplitKind::SilverBio: return "silver-bio";
  }
  return "human";
}

SplitKind parse_split_kind(std::string_view name) {
  if (name == "human") return SplitKind::Human;
  if (name == "silver-std") return SplitKind::SilverStd;
  if (name == "silver-bio") return SplitKind::SilverBio;
  throw std::invalid_argument("unknown split kind '" + std::string(name) + "'");
}

std::string manifest_to_json(const CorpusManifest& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["split"] = split_kind_name(m.split);
  j["sentences"] = m.sentences;
  j["tokens"] = m.tokens;
  j["files"] = m.files;
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CorpusManifest m;
    m.name = j.at("name").get<std::string>();
    m.split = parse_split_kind(j.at("split").get<std::string>());
    m.sentences = j.at("sentences").get<std::size_t>();
    m.tokens = j.at("tokens").get<std::size_t>();
    m.files = j.value("files", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad manifest: ") + e.what());
  }
}

void write_manifest(const std::string& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << manifest_to_json(manifest);
}

CorpusManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json(buf.str());
}

std::size_t whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

CorpusManifest describe(const std::vector<CorpusItem>& items, std::string name, SplitKind split,
                        std::vector<std::string> files) {
  CorpusManifest m;
  m.name = std::move(name);
  m.split = split;
  m.sentences = items.size();
  for (const auto& item : items) m.tokens += whitespace_tokens(item.sentence);
  m.files = std::move(files);
  return m;
}

namespace {

std::string stem_of(const std::string& path) {
  auto slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find('.');
  return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

}  // namespace

Corpus load_corpus(const std::string& path, SplitKind split) {
  const std::vector<AmrGraph> graphs = read_amr_file(path);
  const std::string name = stem_of(path);
  Corpus corpus;
  corpus.items.reserve(graphs.size());
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const AmrGraph& g = graphs[k];
    auto snt = g.meta("snt");
    if (!snt) throw AmrFileError("graph has no ::snt metadata", k + 1, GraphError::npos);
    auto id = g.meta("id");
    corpus.items.push_back({id ? *id : name + "." + std::to_string(k + 1), *snt, g});
  }
  corpus.manifest = describe(corpus.items, name, split, {path});
  return corpus;
}

std::vector<AmrGraph> with_sentence_metadata(const std::vector<CorpusItem>& items) {
  std::vector<AmrGraph> graphs;
  graphs.reserve(items.size());
  for (const auto& item : items) {
    AmrGraph g = item.graph;
    Metadata meta{{"id", item.id}, {"snt", item.sentence}};
    for (const auto& [k, v] : g.metadata()) {
      if (k != "id" && k != "snt") meta.emplace_back(k, v);
    }
    g.set_metadata(std::move(meta));
    graphs.push_back(std::move(g));
  }
  return graphs;
}

void save_corpus(const std::string& path, const std::vector<CorpusItem>& items) {
  write_amr_file(path, with_sentence_metadata(items));
}

// ---------------------------------------------------------------------------
// Synthetic grammar

namespace {

struct Verb {
  const char* frame;
  const char* base;
  const char* past;
};

struct Noun {
  const char* word;
  const char* reflexive;
};

struct Named {
  const char* kind;  // person, city, country
  std::vector<const char*> parts;
  const char* wiki;
  const char* reflexive;
};

const std::vector<Verb> kTransitive{
    {"see-01", "see", "saw"},       {"like-01", "like", "liked"},   {"help-01", "help", "helped"},
    {"chase-01", "chase", "chased"}, {"find-01", "find", "found"},  {"visit-01", "visit", "visited"},
    {"meet-03", "meet", "met"},     {"call-02", "call", "called"}, {"teach-01", "teach", "taught"},
};
const std::vector<Verb> kIntransitive{
    {"sleep-01", "sleep", "slept"}, {"run-02", "run", "ran"},        {"arrive-01", "arrive", "arrived"},
    {"leave-11", "leave", "left"},  {"laugh-01", "laugh", "laughed"}, {"sing-01", "sing", "sang"},
};
const std::vector<Verb> kControl{
    {"want-01", "want", "wanted"}, {"try-01", "try", "tried"}, {"plan-01", "plan", "planned"}};
const std::vector<Noun> kNouns{
    {"boy", "himself"},    {"girl", "herself"}, {"cat", "itself"},     {"dog", "itself"},
    {"teacher", "herself"}, {"doctor", "himself"}, {"bird", "itself"}, {"farmer", "himself"},
    {"student", "herself"}, {"child", "itself"},
};
const std::vector<const char*> kAdjectives{"big", "small", "old", "young", "happy", "tall"};
const std::vector<Named> kPeople{
    {"person", {"Mary"}, "Mary_Shelley", "herself"},
    {"person", {"John", "Smith"}, "John_Smith_(explorer)", "himself"},
    {"person", {"Anna"}, "-", "herself"},
    {"person", {"Peter", "Pan"}, "Peter_Pan", "himself"},
    {"person", {"Marie", "Curie"}, "Marie_Curie", "herself"},
    {"person", {"Tom"}, "-", "himself"},
};
const std::vector<Named> kPlaces{
    {"city", {"Paris"}, "Paris", "itself"},
    {"city", {"New", "York"}, "New_York_City", "itself"},
    {"city", {"Tokyo"}, "Tokyo", "itself"},
    {"country", {"France"}, "France", "itself"},
    {"country", {"Kenya"}, "Kenya", "itself"},
    {"country", {"Brazil"}, "Brazil", "itself"},
};

struct Phrase {
  std::string var;
  std::string text;
  std::string reflexive;
};

class Generator {
 public:
  explicit Generator(Rng& rng) : rng_(rng) {}

  struct Features {
    bool control = false;
    bool negate = false;
    bool named_subject = false;
  };

  std::pair<std::string, AmrGraph> sentence(const Features& force) {
    g_ = AmrGraph{};
    counts_.clear();
    std::vector<std::string> words;

    const bool negate = force.negate || rng_.bernoulli(0.2);
    const Phrase subj = force.named_subject ? named(pick(kPeople)) : noun_phrase(true);

    const double kind = rng_.uniform();
    std::string root;
    if (force.control || kind < 0.2) {
      const Verb& c = pick(kControl);
      root = node(c.frame);
      g_.set_top(root);
      g_.add_relation(root, ":ARG0", subj.var);
      words.push_back(subj.text);
      if (negate) {
        words.push_back("did not");
        words.push_back(c.base);
      } else {
        words.push_back(c.past);
      }
      words.push_back("to");
      // the embedded clause shares the subject
      if (rng_.bernoulli(0.5)) {
        const Verb& v = pick(kTransitive);
        const std::string inner = node(v.frame);
        g_.add_relation(root, ":ARG1", inner);
        g_.add_relation(inner, ":ARG0", subj.var);
        words.push_back(v.base);
        const Phrase obj = object_phrase();
        g_.add_relation(inner, ":ARG1", obj.var);
        words.push_back(obj.text);
      } else {
        const Verb& v = pick(kIntransitive);
        const std::string inner = node(v.frame);
        g_.add_relation(root, ":ARG1", inner);
        g_.add_relation(inner, ":ARG0", subj.var);
        words.push_back(v.base);
      }
    } else {
      const bool reflexive = kind < 0.32;
      const bool transitive = reflexive || kind < 0.75;
      const Verb& v = transitive ? pick(kTransitive) : pick(kIntransitive);
      root = node(v.frame);
      g_.set_top(root);
      g_.add_relation(root, ":ARG0", subj.var);
      words.push_back(subj.text);
      if (negate) {
        words.push_back("did not");
        words.push_back(v.base);
      } else {
        words.push_back(v.past);
      }
      if (reflexive) {
        g_.add_relation(root, ":ARG1", subj.var);
        words.push_back(subj.reflexive);
      } else if (transitive) {
        const Phrase obj = object_phrase();
        g_.add_relation(root, ":ARG1", obj.var);
        words.push_back(obj.text);
      }
    }
    if (negate) g_.add_attribute(root, ":polarity", "-");
    if (rng_.bernoulli(0.15)) {
      const Phrase place = named(pick(kPlaces));
      g_.add_relation(root, ":location", place.var);
      words.push_back("in " + place.text);
    }

    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    if (!text.empty() && text[0] >= 'a' && text[0] <= 'z') text[0] = static_cast<char>(text[0] - 'a' + 'A');
    text += " .";
    g_.validate();
    return {std::move(text), std::move(g_)};
  }

 private:
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[rng_.below(v.size())];
  }

  std::string node(const std::string& label) {
    const char letter = label[0] >= 'a' && label[0] <= 'z' ? label[0] : 'x';
    const int k = ++counts_[letter];
    std::string var(1, letter);
    if (k > 1) var += std::to_string(k);
    g_.add_node(var, label);
    return var;
  }

  Phrase named(const Named& entity) {
    const std::string v = node(entity.kind);
    const std::string n = node("name");
    g_.add_attribute(v, ":wiki", std::string(entity.wiki) == "-" ? "-" : "\"" + std::string(entity.wiki) + "\"");
    g_.add_relation(v, ":name", n);
    std::string text;
    for (std::size_t k = 0; k < entity.parts.size(); ++k) {
      g_.add_attribute(n, ":op" + std::to_string(k + 1), "\"" + std::string(entity.parts[k]) + "\"");
      if (k) text += ' ';
      text += entity.parts[k];
    }
    return {v, text, entity.reflexive};
  }

  Phrase common(bool allow_clause) {
    const Noun& noun = pick(kNouns);
    const std::string v = node(noun.word);
    std::string text = "the ";
    if (rng_.bernoulli(0.3)) {
      const char* adj = pick(kAdjectives);
      g_.add_relation(v, ":mod", node(adj));
      text += adj;
      text += ' ';
    }
    text += noun.word;
    if (allow_clause && rng_.bernoulli(0.2)) {
      const Verb& rel = pick(kIntransitive);
      g_.add_relation(v, ":ARG0-of", node(rel.frame));
      text += " who ";
      text += rel.past;
    }
    return {v, text, noun.reflexive};
  }

  Phrase noun_phrase(bool allow_clause) {
    const double r = rng_.uniform();
    if (r < 0.2) return named(pick(kPeople));
    if (r < 0.28) {
      const std::string v = node("and");
      const Phrase a = rng_.bernoulli(0.5) ? named(pick(kPeople)) : common(false);
      const Phrase b = common(false);
      g_.add_relation(v, ":op1", a.var);
      g_.add_relation(v, ":op2", b.var);
      return {v, a.text + " and " + b.text, "themselves"};
    }
    return common(allow_clause);
  }

  Phrase object_phrase() {
    if (rng_.bernoulli(0.12)) return named(pick(kPlaces));
    return noun_phrase(true);
  }

  Rng& rng_;
  AmrGraph g_;
  std::map<char, int> counts_;
};

}  // namespace

std::vector<CorpusItem> generate_synthetic(std::uint64_t seed, std::size_t n) {
  std::vector<CorpusItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    Generator gen(rng);
    // every block of ten carries each headline feature at least once
    Generator::Features force;
    force.control = i % 10 == 0;
    force.negate = i % 10 == 1;
    force.named_subject = i % 10 == 2;
    auto [text, graph] = gen.sentence(force);
    items.push_back({"synth." + std::to_string(seed) + "." + std::to_string(i + 1), std::move(text), std::move(graph)});
  }
  return items;
}

}  // namespace amrforge
