#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "amrforge/checkpoint.hpp"
#include "amrforge/corpus.hpp"
#include "amrforge/linearize.hpp"
#include "amrforge/penman.hpp"
#include "amrforge/smatch.hpp"
#include "amrforge/train.hpp"
#include "amrforge/triples.hpp"

namespace amrforge::cli {

namespace {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return in;
}

// Writes to `path`, or to `fallback` when the path is empty or "-".
template <typename Fn>
void write_to(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  fn(out);
  if (!out) throw DataError("write failed: " + path);
}

std::vector<TrainingPair> read_pairs(const std::string& path) {
  auto in = open_in(path);
  try {
    return read_pairs_jsonl(in);
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<AmrGraph> read_graphs(const std::string& path) {
  auto in = open_in(path);
  return read_amr_blocks(in);
}

nlohmann::json prf_json(const Prf& s) { return {{"p", s.precision}, {"r", s.recall}, {"f1", s.f1}}; }

// Pairs graphs by ::id when every graph in both files has one, else by
// position.
void align_by_id(std::vector<AmrGraph>& pred, std::vector<AmrGraph>& gold, const std::string& pred_path) {
  auto all_ids = [](const std::vector<AmrGraph>& gs) {
    return !gs.empty() && std::all_of(gs.begin(), gs.end(), [](const AmrGraph& g) { return g.meta("id").has_value(); });
  };
  if (pred.size() != gold.size()) {
    throw DataError(pred_path + ": " + std::to_string(pred.size()) + " graphs against " +
                    std::to_string(gold.size()) + " gold graphs");
  }
  if (!all_ids(pred) || !all_ids(gold)) return;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!index.emplace(*pred[i].meta("id"), i).second) {
      throw DataError(pred_path + ": duplicate id " + *pred[i].meta("id"));
    }
  }
  std::vector<AmrGraph> ordered;
  for (const auto& g : gold) {
    const auto id = *g.meta("id");
    auto it = index.find(id);
    if (it == index.end()) throw DataError(pred_path + ": no graph with id " + id);
    ordered.push_back(pred[it->second]);
  }
  pred = std::move(ordered);
}

std::vector<TripleSet> triples_of(const std::vector<AmrGraph>& graphs) {
  std::vector<TripleSet> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(to_triples(g));
  return out;
}

std::vector<LoraSpec> parse_lora_specs(const std::vector<std::string>& items, const std::vector<std::string>& targets) {
  std::vector<LoraSpec> specs;
  for (const auto& item : items) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--lora", "expected RANK:ALPHA, got " + item);
    LoraSpec s;
    try {
      s.rank = std::stoi(item.substr(0, colon));
      s.alpha = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--lora", "expected RANK:ALPHA, got " + item);
    }
    s.targets = targets;
    specs.push_back(s);
  }
  return specs;
}

struct Options {
  // shared
  std::string input, output, wiki, gold, manifest, checkpoint, run_dir;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool no_wiki = false;
  // preprocess / synth
  std::string split = "human";
  std::string name;
  std::size_t count = 100;
  // postprocess
  std::string format = "text";
  // eval / significance
  std::string compare, system_a, system_b;
  std::size_t resamples = 10000;
  int restarts = 4;
  // train
  std::string train, validation, test, mode = "fft";
  TrainConfig config;
  std::vector<std::string> lora{"8:32", "16:64"};
  std::vector<std::string> lora_targets{"q", "v"};
};

WikiTable read_wiki(const Options& o) {
  if (o.wiki.empty() || o.no_wiki) return {};
  open_in(o.wiki);
  try {
    return WikiTable::read_tsv_file(o.wiki);
  } catch (const std::runtime_error& e) {
    throw DataError(o.wiki + ": " + e.what());
  }
}

void echo_config(const CLI::App& sub, std::ostream& err) {
  err << "# resolved " << sub.get_name() << " configuration\n" << sub.config_to_str(true, false);
}

int do_preprocess(const Options& o, std::ostream& out, std::ostream& err) {
  const auto kind = parse_split_kind(o.split);
  open_in(o.input);
  Corpus corpus = load_corpus(o.input, kind);
  if (corpus.items.empty()) throw DataError(o.input + ": corpus has no graphs");
  std::vector<TrainingPair> pairs;
  WikiTable table;
  for (const auto& item : corpus.items) {
    pairs.push_back(make_training_pair(item.sentence, item.graph, item.id));
    table.add_entries(strip_wiki(item.graph).entries);
  }
  write_to(o.output, out, [&](std::ostream& s) { write_pairs_jsonl(s, pairs); });
  if (!o.wiki.empty()) table.write_tsv_file(o.wiki);
  if (!o.manifest.empty()) {
    const auto name = o.name.empty() ? fs::path(o.input).stem().string() : o.name;
    write_manifest(o.manifest, describe(corpus.items, name, kind, {fs::path(o.input).filename().string()}));
  }
  err << "preprocessed " << pairs.size() << " graphs, " << table.size() << " wiki names\n";
  return kExitOk;
}

AmrGraph finish_graph(AmrGraph g, const WikiTable& table, bool no_wiki) {
  return no_wiki ? strip_wiki(g).graph : restore_wiki(g, table);
}

int do_postprocess(const Options& o, std::ostream& out, std::ostream& err) {
  const WikiTable table = read_wiki(o);
  std::vector<AmrGraph> graphs;
  const auto lines = read_lines(o.input);
  std::size_t k = 0;
  for (const auto& line : lines) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++k;
    std::string serialized = line, id = std::to_string(k), sentence;
    if (o.format == "jsonl") {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        serialized = j.at("target").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(o.input + ": line " + std::to_string(k) + ": " + e.what());
      }
      if (j.contains("id")) id = j["id"].get<std::string>();
      if (j.contains("input")) {
        sentence = j["input"].get<std::string>();
        if (sentence.starts_with(kTaskPrefix)) sentence.erase(0, kTaskPrefix.size());
      }
    }
    AmrGraph g = finish_graph(deserialize(repair(tokenize_serialized(serialized))), table, o.no_wiki);
    g.add_metadata("id", id);
    if (!sentence.empty()) g.add_metadata("snt", sentence);
    graphs.push_back(std::move(g));
  }
  write_to(o.output, out, [&](std::ostream& s) { write_amr_blocks(s, graphs); });
  err << "postprocessed " << graphs.size() << " graphs\n";
  return kExitOk;
}

int do_synth(const Options& o, std::ostream& out, std::ostream& err) {
  const auto items = generate_synthetic(o.seed, o.count);
  write_to(o.output, out, [&](std::ostream& s) { write_amr_blocks(s, with_sentence_metadata(items)); });
  if (!o.manifest.empty()) {
    const auto name = o.name.empty() ? "synthetic" : o.name;
    std::vector<std::string> files;
    if (!o.output.empty() && o.output != "-") files.push_back(fs::path(o.output).filename().string());
    write_manifest(o.manifest, describe(items, name, parse_split_kind(o.split), files));
  }
  err << "generated " << items.size() << " graphs\n";
  return kExitOk;
}

int do_train(Options o, std::ostream& out, std::ostream& err) {
  TrainConfig& c = o.config;
  c.mode = parse_train_mode(o.mode);
  c.seed = o.seed;
  c.workers = o.workers;
  c.lora_specs = parse_lora_specs(o.lora, o.lora_targets);
  c.validate();
  TrainData data;
  data.train = read_pairs(o.train);
  data.validation = read_pairs(o.validation);
  if (!o.test.empty()) data.test = read_pairs(o.test);
  if (data.train.empty()) throw DataError(o.train + ": no training pairs");
  if (data.validation.empty()) throw DataError(o.validation + ": no validation pairs");
  RunOptions ro;
  ro.run_dir = o.run_dir;
  ro.corpus_name = o.name.empty() ? fs::path(o.train).stem().string() : o.name;
  ro.log = [&err](const std::string& line) { err << line << "\n" << std::flush; };
  const auto outcome = run_training(c, data, ro);
  out << report_json(outcome, ro).dump(2) << "\n";
  return kExitOk;
}

int do_parse(const Options& o, std::ostream& out, std::ostream& err) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(o.checkpoint);
  } catch (const CheckpointError& e) {
    throw DataError(e.what());
  }
  const int max_source = ck.metadata.value("max_source_len", ck.spec.max_len);
  const int max_target = ck.metadata.value("max_target_len", ck.spec.max_len);
  const WikiTable table = read_wiki(o);
  std::vector<std::string> ids, sentences, inputs;
  if (o.format == "amr") {
    open_in(o.input);
    for (const auto& item : load_corpus(o.input).items) {
      ids.push_back(item.id);
      sentences.push_back(item.sentence);
    }
  } else if (o.format == "jsonl") {
    for (const auto& pair : read_pairs(o.input)) {
      ids.push_back(pair.id);
      sentences.push_back(pair.input.starts_with(kTaskPrefix) ? pair.input.substr(kTaskPrefix.size()) : pair.input);
    }
  } else {
    for (const auto& line : read_lines(o.input)) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      ids.push_back(std::to_string(ids.size() + 1));
      sentences.push_back(line);
    }
  }
  for (const auto& s : sentences) inputs.push_back(std::string(kTaskPrefix) + s);
  // Merged checkpoints already hold the adapted weights.
  const AdapterState* adapters = ck.adapters && !ck.adapters->merged ? &*ck.adapters : nullptr;
  const auto parsed = parse_inputs(ck.params, ck.spec, ck.tokenizer, adapters, inputs, max_source, max_target, o.workers);
  std::vector<AmrGraph> graphs;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    AmrGraph g = finish_graph(parsed[i], table, o.no_wiki);
    g.add_metadata("id", ids[i].empty() ? std::to_string(i + 1) : ids[i]);
    g.add_metadata("snt", sentences[i]);
    graphs.push_back(std::move(g));
  }
  write_to(o.output, out, [&](std::ostream& s) { write_amr_blocks(s, graphs); });
  err << "parsed " << graphs.size() << " sentences\n";
  return kExitOk;
}

nlohmann::json significance_json(double p, const Options& o) {
  return {{"p_value", p},
          {"resamples", o.resamples},
          {"seed", o.seed},
          {"significant", p <= kSignificanceLevel},
          {"verdict", p <= kSignificanceLevel ? "significant" : "not significant"}};
}

int do_eval(const Options& o, std::ostream& out, std::ostream& err) {
  auto gold = read_graphs(o.gold);
  auto pred = read_graphs(o.input);
  align_by_id(pred, gold, o.input);
  SmatchOptions so{o.restarts, o.seed, o.workers};
  const auto gt = triples_of(gold);
  const auto report = fine_grained(triples_of(pred), gt, so);
  nlohmann::json fg = nlohmann::json::object();
  for (const auto& s : report.scores) fg[std::string(category_name(s.category))] = prf_json(s.prf);
  nlohmann::json j = {{"smatch", prf_json(report[Category::Smatch].prf)}, {"fine_grained", fg}};
  j["significance"] = nullptr;
  if (!o.compare.empty()) {
    auto other = read_graphs(o.compare);
    auto gold_copy = gold;
    align_by_id(other, gold_copy, o.compare);
    const auto other_counts = smatch_counts(triples_of(other), gt, so);
    const double p = bootstrap_significance(report.per_sentence, other_counts, {o.resamples, o.seed, o.workers});
    j["significance"] = significance_json(p, o);
  }
  write_to(o.output, out, [&](std::ostream& s) { s << j.dump(2) << "\n"; });
  err << "evaluated " << gold.size() << " graphs, Smatch " << report[Category::Smatch].prf.f1 << "\n";
  return kExitOk;
}

int do_significance(const Options& o, std::ostream& out, std::ostream&) {
  auto gold = read_graphs(o.gold);
  auto a = read_graphs(o.system_a);
  auto b = read_graphs(o.system_b);
  auto gold_b = gold;
  align_by_id(a, gold, o.system_a);
  align_by_id(b, gold_b, o.system_b);
  SmatchOptions so{o.restarts, o.seed, o.workers};
  const auto gt = triples_of(gold);
  const auto ca = smatch_counts(triples_of(a), gt, so);
  const auto cb = smatch_counts(triples_of(b), gt, so);
  const double p = bootstrap_significance(ca, cb, {o.resamples, o.seed, o.workers});
  nlohmann::json j = significance_json(p, o);
  j["a"] = prf_json(to_prf(sum_counts(ca)));
  j["b"] = prf_json(to_prf(sum_counts(cb)));
  write_to(o.output, out, [&](std::ostream& s) { s << j.dump(2) << "\n"; });
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AMR parsing with a sequence-to-sequence model: data preparation, training, parsing and evaluation",
               args.empty() ? "amrforge" : args[0]};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file; keys go in a section named after the subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.option_defaults()->always_capture_default();

  Options o;
  auto seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed (falls back to AMRFORGE_SEED)")->envname("AMRFORGE_SEED");
  };
  auto workers = [&](CLI::App* sub) { sub->add_option("--workers", o.workers, "Worker threads; 0 uses every core"); };

  auto* pre = app.add_subcommand("preprocess", "AMR file to JSON-lines training pairs and a wiki table");
  pre->add_option("--input", o.input, "AMR block file")->required();
  pre->add_option("--output", o.output, "Pair file (stdout when omitted)");
  pre->add_option("--wiki", o.wiki, "Wiki table TSV to write");
  pre->add_option("--manifest", o.manifest, "Corpus manifest JSON to write");
  pre->add_option("--split", o.split, "human, silver-std or silver-bio");
  pre->add_option("--name", o.name, "Corpus name for the manifest");

  auto* post = app.add_subcommand("postprocess", "Serialized graphs to AMR blocks");
  post->add_option("--input", o.input, "One serialized graph per line, or pair JSON-lines")->required();
  post->add_option("--output", o.output, "AMR file (stdout when omitted)");
  post->add_option("--format", o.format, "text or jsonl")->check(CLI::IsMember({"text", "jsonl"}));
  post->add_option("--wiki", o.wiki, "Wiki table TSV for restoring :wiki");
  post->add_flag("--no-wiki", o.no_wiki, "Emit no :wiki relations");

  auto* tr = app.add_subcommand("train", "Train a parser; writes a run directory");
  tr->add_option("--train", o.train, "Training pair file")->required();
  tr->add_option("--validation", o.validation, "Validation pair file")->required();
  tr->add_option("--test", o.test, "Test pair file");
  tr->add_option("--run-dir", o.run_dir, "Run directory");
  tr->add_option("--name", o.name, "Corpus name for the report");
  tr->add_option("--mode", o.mode, "fft, lora or fft-lora")->check(CLI::IsMember({"fft", "lora", "fft-lora"}));
  tr->add_option("--lr", o.config.learning_rate, "Full fine-tuning learning rate");
  tr->add_option("--lora-lr", o.config.lora_learning_rate, "LoRA learning rate");
  tr->add_option("--batch-size", o.config.batch_size, "Sentences per batch");
  tr->add_option("--epochs", o.config.epochs, "Full fine-tuning epochs");
  tr->add_option("--lora-epochs", o.config.lora_epochs, "Epochs per LoRA configuration");
  tr->add_option("--max-source-len", o.config.max_source_len, "Source tokens kept");
  tr->add_option("--max-target-len", o.config.max_target_len, "Target tokens kept, end marker included");
  tr->add_option("--grad-clip", o.config.grad_clip, "Global gradient norm limit; 0 disables");
  tr->add_option("--lora", o.lora, "LoRA configurations as RANK:ALPHA");
  tr->add_option("--lora-targets", o.lora_targets, "Attention projections to adapt")->delimiter(',');
  tr->add_option("--layers", o.config.model.n_layers, "Encoder and decoder layers");
  tr->add_option("--d-model", o.config.model.d_model, "Model width");
  tr->add_option("--d-ff", o.config.model.d_ff, "Feed-forward width");
  tr->add_option("--d-kv", o.config.model.d_kv, "Per-head width");
  tr->add_option("--heads", o.config.model.n_heads, "Attention heads");
  tr->add_option("--vocab-size", o.config.model.vocab_size, "Tokenizer vocabulary budget");
  tr->add_option("--max-len", o.config.model.max_len, "Positional table size");
  seed(tr);
  workers(tr);

  auto* parse = app.add_subcommand("parse", "Parse sentences with a checkpoint");
  parse->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  parse->add_option("--input", o.input, "Sentences: one per line, a pair file, or an AMR file")->required();
  parse->add_option("--format", o.format, "text, jsonl or amr")->check(CLI::IsMember({"text", "jsonl", "amr"}));
  parse->add_option("--output", o.output, "AMR file (stdout when omitted)");
  parse->add_option("--wiki", o.wiki, "Wiki table TSV for restoring :wiki");
  parse->add_flag("--no-wiki", o.no_wiki, "Emit no :wiki relations");
  workers(parse);

  auto* ev = app.add_subcommand("eval", "Smatch and fine-grained scores as JSON");
  ev->add_option("--pred", o.input, "Predicted AMR file")->required();
  ev->add_option("--gold", o.gold, "Gold AMR file")->required();
  ev->add_option("--significance", o.compare, "Second prediction file; tests whether --pred is better");
  ev->add_option("--output", o.output, "Report file (stdout when omitted)");
  ev->add_option("--resamples", o.resamples, "Bootstrap resamples");
  ev->add_option("--restarts", o.restarts, "Random hill-climbing restarts");
  seed(ev);
  workers(ev);

  auto* sig = app.add_subcommand("significance", "Paired bootstrap test that system A beats system B");
  sig->add_option("--gold", o.gold, "Gold AMR file")->required();
  sig->add_option("--a", o.system_a, "System A predictions")->required();
  sig->add_option("--b", o.system_b, "System B predictions")->required();
  sig->add_option("--output", o.output, "Report file (stdout when omitted)");
  sig->add_option("--resamples", o.resamples, "Bootstrap resamples");
  sig->add_option("--restarts", o.restarts, "Random hill-climbing restarts");
  seed(sig);
  workers(sig);

  auto* syn = app.add_subcommand("synth", "Generate a synthetic AMR corpus");
  syn->add_option("--count", o.count, "Number of sentences");
  syn->add_option("--output", o.output, "AMR file (stdout when omitted)");
  syn->add_option("--manifest", o.manifest, "Corpus manifest JSON to write");
  syn->add_option("--name", o.name, "Corpus name for the manifest");
  syn->add_option("--split", o.split, "Split label for the manifest");
  seed(syn);

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty()) rest.pop_back();
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      echo_config(*sub, err);
      const auto name = sub->get_name();
      if (name == "preprocess") return do_preprocess(o, out, err);
      if (name == "postprocess") return do_postprocess(o, out, err);
      if (name == "train") return do_train(o, out, err);
      if (name == "parse") return do_parse(o, out, err);
      if (name == "eval") return do_eval(o, out, err);
      if (name == "significance") return do_significance(o, out, err);
      if (name == "synth") return do_synth(o, out, err);
    }
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const GraphError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace amrforge::cli
