// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amrforge/corpus.hpp"
#include "amrforge/linearize.hpp"
#include "amrforge/penman.hpp"
#include "amrforge/smatch.hpp"
#include "amrforge/train.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "random_graphs.hpp"
#include "smatch_oracle.hpp"

using namespace amrforge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string title;
  double limit_seconds;
  std::function<Outcome()> body;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); }

// 1
Outcome figure_pair() {
  const AmrGraph g = parse_penman(fixtures::kFigureGraph);
  const TrainingPair pair = make_training_pair(fixtures::kFigureSentence, g);
  const bool target = tokenize_serialized(pair.target) == tokenize_serialized(fixtures::kFigureSerialized) &&
                      pair.target == fixtures::kFigureSerialized;
  const bool input = pair.input == fixtures::kFigureInput;
  return {target && input, fmt("target %s, input %s", target ? "exact" : "differs", input ? "exact" : "differs")};
}

// 2
Outcome round_trip() {
  const auto items = generate_synthetic(2, 1000);
  WikiTable table;
  for (const auto& it : items) table.add_entries(strip_wiki(it.graph).entries);
  std::size_t perfect = 0;
  for (const auto& it : items) {
    const AmrGraph back = restore_wiki(deserialize(serialize(strip_wiki(it.graph).graph)), table);
    perfect += to_prf(smatch_pair(to_triples(back), to_triples(it.graph), 4, 0)).f1 == 1.0;
  }
  return {perfect == items.size(), fmt("%zu/%zu graphs at Smatch 1.0", perfect, items.size())};
}

// 3
Outcome oracle_equivalence() {
  Rng rng(303);
  testing::RandomGraphOptions opt;
  opt.max_nodes = 6;
  opt.names = false;
  int equal = 0;
  const int pairs = 200;
  for (int t = 0; t < pairs; ++t) {
    const AmrGraph gold_graph = testing::random_graph(rng, opt);
    const AmrGraph pred_graph = rng.bernoulli(0.5) ? testing::perturb(gold_graph, rng) : testing::random_graph(rng, opt);
    const auto gold = to_triples(gold_graph);
    const auto pred = to_triples(pred_graph);
    const auto best = oracle::best_matches(pred, gold);
    const auto found = smatch_pair(pred, gold, 4, static_cast<std::uint64_t>(t));
    // Both F1 values share the triple totals, so equal matches mean equal F1.
    equal += found.matched == best && found.pred_total == pred.size() && found.gold_total == gold.size();
  }
  return {equal == pairs, fmt("%d/%d pairs equal to brute force", equal, pairs)};
}

// 4
Outcome gradient_check() {
  const ModelSpec spec;
  Rng rng(404);
  const Parameters p = testing::spread_parameters(init_parameters(spec, 4), rng);
  std::vector<Example> batch;
  for (int k = 0; k < 2; ++k) {
    Example ex;
    for (int i = 0; i < 6 + k; ++i) ex.source.push_back(3 + static_cast<int>(rng.below(spec.vocab_size - 3)));
    for (int i = 0; i < 5 - k; ++i) ex.target.push_back(3 + static_cast<int>(rng.below(spec.vocab_size - 3)));
    batch.push_back(ex);
  }
  const auto r = testing::check_gradients(p, spec, batch, 20, 1e-3, rng);
  std::set<std::string> families;
  for (const auto& [name, _] : p) families.insert(parameter_family(name));
  const bool ok = r.families == families.size() && r.coordinates >= 20 * families.size() && r.max_rel_error < 1e-4;
  return {ok, fmt("%zu families, %zu coordinates, max rel err %.2e (%s)", r.families, r.coordinates, r.max_rel_error,
                  r.worst_name.c_str())};
}

// 5
Outcome lora_algebra() {
  const ModelSpec spec;
  Parameters p = init_parameters(spec, 5);
  const std::vector<int> src{5, 40, 77, 300, 12, 9}, dec{0, 18, 261, 44};
  const Mat base = forward(p, spec, src, dec);
  AdapterState a = attach_lora(p, {8, 32.0, {"q", "v"}}, 6);
  const bool attach_exact = forward(p, spec, src, dec, &a) == base;

  Rng rng(7);
  for (auto& [_, lr] : a.targets) {
    for (Eigen::Index k = 0; k < lr.B.size(); ++k) lr.B.data()[k] = 0.05 * rng.normal();
  }
  const Parameters original = p;
  const Mat two_path = forward(p, spec, src, dec, &a);
  merge(a, p);
  const double logit_diff = (forward(p, spec, src, dec, &a) - two_path).cwiseAbs().maxCoeff();
  split(a, p);
  double round_trip = 0.0;
  for (const auto& [name, w] : original) {
    const double scale = std::max(w.cwiseAbs().maxCoeff(), 1e-300);
    round_trip = std::max(round_trip, (p.at(name) - w).cwiseAbs().maxCoeff() / scale);
  }
  const bool ok = attach_exact && round_trip <= 1e-12 && logit_diff <= 1e-10;
  return {ok, fmt("attach %s, merge/split rel %.1e, merged vs two-path %.1e", attach_exact ? "bit-exact" : "differs",
                  round_trip, logit_diff)};
}

// Systems from the training experiment, kept for the fine-grained check.
struct ParsedRun {
  std::string label;
  std::vector<TripleSet> pred, gold;
};
std::vector<ParsedRun> g_runs;

std::vector<TripleSet> parse_pairs(const Checkpoint& c, const std::vector<TrainingPair>& pairs, const TrainConfig& cfg) {
  std::vector<std::string> inputs;
  for (const auto& p : pairs) inputs.push_back(p.input);
  const AdapterState* a = c.adapters && !c.adapters->merged ? &*c.adapters : nullptr;
  const auto graphs =
      parse_inputs(c.params, c.spec, c.tokenizer, a, inputs, cfg.max_source_len, cfg.max_target_len, cfg.workers);
  std::vector<TripleSet> out;
  for (const auto& g : graphs) out.push_back(to_triples(g));
  return out;
}

// 6
Outcome training_order() {
  const auto items = generate_synthetic(2024, 2000);
  TrainData data;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto pair = make_training_pair(items[i].sentence, items[i].graph, items[i].id);
    (i < 1600 ? data.train : i < 1800 ? data.validation : data.test).push_back(std::move(pair));
  }
  std::vector<TripleSet> gold;
  for (const auto& p : data.test) gold.push_back(to_triples(deserialize(tokenize_serialized(p.target))));

  TrainConfig base;
  base.learning_rate = 3e-3;
  base.lora_learning_rate = 3e-3;
  base.epochs = 8;
  base.lora_epochs = 4;

  std::vector<MatchCounts> fft_pooled, fft_lora_pooled, lora_only_pooled;
  double fft_mean = 0.0, fft_lora_mean = 0.0, lora_only_mean = 0.0;
  const int seeds = 5;
  for (int s = 1; s <= seeds; ++s) {
    TrainConfig c = base;
    c.seed = static_cast<std::uint64_t>(s);
    c.mode = TrainMode::FFT_THEN_LORA;
    const auto two_stage = run_training(c, data);
    c.mode = TrainMode::LORA;
    c.lora_epochs = base.epochs;
    const auto lora_only = run_training(c, data);

    fft_mean += two_stage.fft->test_smatch / seeds;
    fft_lora_mean += two_stage.mean_test_smatch() / seeds;
    lora_only_mean += lora_only.mean_test_smatch() / seeds;
    // Each LoRA configuration is paired with the FFT model it started from.
    for (std::size_t k = 0; k < two_stage.lora.size(); ++k) {
      fft_pooled.insert(fft_pooled.end(), two_stage.fft->test_counts.begin(), two_stage.fft->test_counts.end());
      fft_lora_pooled.insert(fft_lora_pooled.end(), two_stage.lora[k].test_counts.begin(),
                             two_stage.lora[k].test_counts.end());
      lora_only_pooled.insert(lora_only_pooled.end(), lora_only.lora[k].test_counts.begin(),
                              lora_only.lora[k].test_counts.end());
    }
    g_runs.push_back({"fft-lora seed " + std::to_string(s), parse_pairs(two_stage.final_checkpoint, data.test, c), gold});
    g_runs.push_back({"lora seed " + std::to_string(s), parse_pairs(lora_only.final_checkpoint, data.test, c), gold});
    progress(fmt("seed %d: fft %.4f, fft-lora %.4f +- %.4f, lora-only %.4f", s, two_stage.fft->test_smatch,
                 two_stage.mean_test_smatch(), two_stage.std_test_smatch(), lora_only.mean_test_smatch()));
  }
  BootstrapOptions bo;
  bo.resamples = 10000;
  bo.seed = 6;
  const double p_two_stage = bootstrap_significance(fft_lora_pooled, fft_pooled, bo);
  const double p_lora_only = bootstrap_significance(fft_pooled, lora_only_pooled, bo);
  const bool ok = fft_lora_mean >= fft_mean && p_two_stage <= 0.1 && lora_only_mean < fft_mean && p_lora_only <= 0.1;
  return {ok, fmt("mean test Smatch fft-lora %.4f vs fft %.4f (p=%.4f); lora-only %.4f (p=%.4f)", fft_lora_mean,
                  fft_mean, p_two_stage, lora_only_mean, p_lora_only)};
}

// 7
Outcome bootstrap() {
  const std::vector<MatchCounts> a{{5, 10, 10}, {8, 10, 10}, {2, 6, 8}};
  const std::vector<MatchCounts> b{{6, 10, 10}, {6, 10, 10}, {4, 7, 8}};
  BootstrapOptions opt;
  opt.resamples = 100000;
  opt.seed = 7;
  const double exact = oracle::exact_bootstrap_p(a, b);
  const double estimate = bootstrap_significance(a, b, opt);
  const bool close = std::abs(exact - estimate) <= 0.01;

  Rng rng(8);
  bool identical_never = true;
  bool dominance_zero = true;
  opt.resamples = 2000;
  for (int t = 0; t < 50; ++t) {
    std::vector<MatchCounts> x, strong, weak;
    for (int i = 0; i < 20; ++i) {
      const auto gold = 5 + rng.below(10);
      const auto pred = 5 + rng.below(10);
      const auto m = rng.below(std::min(gold, pred));
      x.push_back({m, pred, gold});
      strong.push_back({gold, gold, gold});
      weak.push_back({0, pred, gold});
    }
    opt.seed = static_cast<std::uint64_t>(t);
    identical_never = identical_never && bootstrap_significance(x, x, opt) > kSignificanceLevel;
    dominance_zero = dominance_zero && bootstrap_significance(strong, weak, opt) == 0.0;
  }
  return {close && identical_never && dominance_zero,
          fmt("exact %.4f vs 100k estimate %.4f; identical never significant: %s; dominance p=0: %s", exact, estimate,
              identical_never ? "yes" : "no", dominance_zero ? "yes" : "no")};
}

// 8
Outcome fine_grained_report() {
  std::vector<TripleSet> pred, gold;
  for (const auto& [p, g] : fixtures::kScoredCorpus) {
    pred.push_back(to_triples(parse_penman(p)));
    gold.push_back(to_triples(parse_penman(g)));
  }
  const auto report = fine_grained(pred, gold);
  int exact = 0;
  for (const auto& [cat, counts] : fixtures::kScoredCorpusCounts) {
    const auto& got = report[cat];
    const double p = counts.pred_total ? double(counts.matched) / double(counts.pred_total) : 0.0;
    const double r = counts.gold_total ? double(counts.matched) / double(counts.gold_total) : 0.0;
    exact += got.counts == counts && got.prf.precision == p && got.prf.recall == r &&
             std::abs(got.prf.f1 - fixtures::f1_of(counts)) <= 1e-15;
  }

  // Perturbed synthetic corpora plus the trained systems' test output.
  std::vector<ParsedRun> runs = g_runs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(800 + seed);
    ParsedRun run{"perturbed synthetic " + std::to_string(seed), {}, {}};
    for (const auto& item : generate_synthetic(seed, 200)) {
      run.gold.push_back(to_triples(item.graph));
      run.pred.push_back(to_triples(testing::perturb(item.graph, rng)));
    }
    runs.push_back(std::move(run));
  }
  std::size_t ordered = 0;
  for (const auto& run : runs) {
    const auto r = fine_grained(run.pred, run.gold);
    const double s = r[Category::Smatch].prf.f1;
    const bool ok = r[Category::Unlabel].prf.f1 >= s && r[Category::NoWSD].prf.f1 >= s;
    if (!ok) progress("ordering violated on " + run.label);
    ordered += ok;
  }
  const bool ok = exact == static_cast<int>(kCategoryCount) && ordered == runs.size() && runs.size() >= 5;
  return {ok, fmt("%d/9 categories exact; Unlabel, NoWSD >= Smatch on %zu/%zu runs", exact, ordered, runs.size())};
}

// 9
Outcome repair_totality() {
  static const std::vector<std::string> alphabet{
      "(",    ")",        "(",   ")",    ":ARG0",  ":ARG1-of", ":mod",    ":op1",  ":name", ":wiki",
      ":",    "thing",    "thing_2", "thing__3", "boy", "see-01", "name",  "-",     "+",     "5",
      "\"Taiwan\"", "\"un", "x_", "a/b", "/", "imperative", "amr-empty", "_", "__", "\"\""};
  Rng rng(909);
  std::size_t failures = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    SerializedGraph tokens;
    const auto len = rng.below(60);
    for (std::uint64_t k = 0; k < len; ++k) {
      if (rng.bernoulli(0.1)) {
        std::string junk;
        const auto n = 1 + rng.below(6);
        for (std::uint64_t c = 0; c < n; ++c) junk.push_back(static_cast<char>(33 + rng.below(94)));
        tokens.push_back(junk);
      } else {
        tokens.push_back(alphabet[rng.below(alphabet.size())]);
      }
    }
    try {
      const AmrGraph g = deserialize(repair(tokens));
      g.validate();
      if (g.nodes().empty()) throw std::runtime_error("no nodes");
      parse_penman(emit_penman(g));
    } catch (const std::exception& e) {
      if (failures == 0) progress(std::string("first failure: ") + e.what() + " on: " + join_tokens(tokens));
      ++failures;
    }
  }
  return {failures == 0, fmt("%zu failures in %d fuzzed sequences", failures, trials)};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "figure pair byte-exact", 1.0, figure_pair},
      {2, "serialize/deserialize/restore_wiki round trip", 30.0, round_trip},
      {3, "hill-climbing Smatch equals brute force", 120.0, oracle_equivalence},
      {4, "finite-difference gradients, desk model", 60.0, gradient_check},
      {5, "LoRA attach, merge and split algebra", 10.0, lora_algebra},
      {6, "FFT-LoRA > FFT > LoRA-only on synthetic task", 1800.0, training_order},
      {7, "bootstrap significance", 60.0, bootstrap},
      {8, "fine-grained report", 60.0, fine_grained_report},
      {9, "repair totality", 60.0, repair_totality},
  };
  std::vector<std::string> lines;
  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    std::fprintf(stderr, "running %d: %s\n", c.number, c.title.c_str());
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    all = all && pass;
    lines.push_back(fmt("criterion %d %s: %s; %s; %.2f s (limit %.0f s)", c.number, pass ? "PASS" : "FAIL",
                        c.title.c_str(), o.detail.c_str(), secs, c.limit_seconds));
    std::fprintf(stderr, "  %s\n", lines.back().c_str());
  }
  for (const auto& line : lines) std::printf("%s\n", line.c_str());
  return all ? 0 : 1;
}
