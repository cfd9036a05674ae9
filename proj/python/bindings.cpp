#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "amrforge/checkpoint.hpp"
#include "amrforge/corpus.hpp"
#include "amrforge/linearize.hpp"
#include "amrforge/penman.hpp"
#include "amrforge/smatch.hpp"
#include "amrforge/train.hpp"
#include "amrforge/triples.hpp"
#include "cli.hpp"

namespace py = pybind11;
using namespace amrforge;

namespace {

py::dict prf_dict(const Prf& s) {
  py::dict d;
  d["p"] = s.precision;
  d["r"] = s.recall;
  d["f1"] = s.f1;
  return d;
}

std::vector<TripleSet> triples_of(const std::vector<std::string>& graphs) {
  std::vector<TripleSet> out;
  for (const auto& g : graphs) out.push_back(to_triples(parse_penman(g)));
  return out;
}

std::vector<MatchCounts> counts_of(const std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>>& rows) {
  std::vector<MatchCounts> out;
  for (const auto& [m, p, g] : rows) out.push_back({m, p, g});
  return out;
}

class Parser {
 public:
  explicit Parser(const std::string& path) : ck_(load_checkpoint(path)) {}

  std::vector<std::string> parse(const std::vector<std::string>& sentences, const std::string& wiki_tsv,
                                 bool no_wiki, unsigned workers) const {
    std::vector<std::string> inputs;
    for (const auto& s : sentences) inputs.push_back(std::string(kTaskPrefix) + s);
    const AdapterState* a = ck_.adapters && !ck_.adapters->merged ? &*ck_.adapters : nullptr;
    const int max_source = ck_.metadata.value("max_source_len", ck_.spec.max_len);
    const int max_target = ck_.metadata.value("max_target_len", ck_.spec.max_len);
    std::vector<AmrGraph> graphs;
    {
      py::gil_scoped_release release;
      graphs = parse_inputs(ck_.params, ck_.spec, ck_.tokenizer, a, inputs, max_source, max_target, workers);
    }
    const WikiTable table = wiki_tsv.empty() ? WikiTable{} : WikiTable::read_tsv_file(wiki_tsv);
    std::vector<std::string> out;
    for (const auto& g : graphs) out.push_back(emit_penman(no_wiki ? strip_wiki(g).graph : restore_wiki(g, table)));
    return out;
  }

  std::size_t vocab_size() const { return ck_.tokenizer.size(); }
  std::size_t parameter_count() const { return amrforge::parameter_count(ck_.params); }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "AMR graph linearization, Smatch evaluation and a small seq2seq parser";

  py::register_exception<GraphError>(m, "GraphError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);

  m.attr("TASK_PREFIX") = std::string(kTaskPrefix);

  m.def("normalize", [](const std::string& penman) { return emit_penman(parse_penman(penman)); },
        "Parse and re-emit a Penman graph.");
  m.def("serialize", [](const std::string& penman) { return join_tokens(serialize(strip_wiki(parse_penman(penman)).graph)); },
        "Variable-free token string of a graph with :wiki removed.");
  m.def("deserialize", [](const std::string& text) { return emit_penman(deserialize(repair(tokenize_serialized(text)))); },
        "Repair a serialized token string and rebuild a Penman graph.");
  m.def(
      "make_training_pair",
      [](const std::string& sentence, const std::string& penman) {
        const auto p = make_training_pair(sentence, parse_penman(penman));
        return py::make_tuple(p.input, p.target);
      },
      py::arg("sentence"), py::arg("graph"));

  m.def(
      "smatch",
      [](const std::vector<std::string>& pred, const std::vector<std::string>& gold, int restarts, std::uint64_t seed) {
        return prf_dict(amrforge::smatch(triples_of(pred), triples_of(gold), {restarts, seed, 1}));
      },
      py::arg("pred"), py::arg("gold"), py::arg("restarts") = 4, py::arg("seed") = 0);
  m.def(
      "fine_grained",
      [](const std::vector<std::string>& pred, const std::vector<std::string>& gold, std::uint64_t seed) {
        const auto r = amrforge::fine_grained(triples_of(pred), triples_of(gold), {4, seed, 1});
        py::dict d;
        for (const auto& s : r.scores) d[py::str(std::string(category_name(s.category)))] = prf_dict(s.prf);
        return d;
      },
      py::arg("pred"), py::arg("gold"), py::arg("seed") = 0);
  m.def(
      "bootstrap_significance",
      [](const std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>>& a,
         const std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>>& b, std::size_t resamples,
         std::uint64_t seed) { return amrforge::bootstrap_significance(counts_of(a), counts_of(b), {resamples, seed, 1}); },
      py::arg("a"), py::arg("b"), py::arg("resamples") = 10000, py::arg("seed") = 0,
      "Fraction of resamples where B's F1 is at least A's; rows are (matched, pred_total, gold_total).");

  m.def(
      "generate_synthetic",
      [](std::uint64_t seed, std::size_t n) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& it : amrforge::generate_synthetic(seed, n)) out.emplace_back(it.id, it.sentence, emit_penman(it.graph));
        return out;
      },
      py::arg("seed"), py::arg("n"), "(id, sentence, penman) triples.");

  py::class_<Parser>(m, "Parser")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("parse", &Parser::parse, py::arg("sentences"), py::arg("wiki_tsv") = "", py::arg("no_wiki") = false,
           py::arg("workers") = 1)
      .def_property_readonly("vocab_size", &Parser::vocab_size)
      .def_property_readonly("parameter_count", &Parser::parameter_count);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "amrforge");
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command line; returns (exit code, stdout, stderr).");
}
