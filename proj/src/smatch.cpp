#include "amrforge/smatch.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <regex>
#include <stdexcept>
#include <unordered_map>

#include "amrforge/parallel.hpp"
#include "amrforge/rng.hpp"

namespace amrforge {

Prf to_prf(const MatchCounts& c) {
  Prf r;
  if (c.pred_total > 0) r.precision = static_cast<double>(c.matched) / static_cast<double>(c.pred_total);
  if (c.gold_total > 0) r.recall = static_cast<double>(c.matched) / static_cast<double>(c.gold_total);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

MatchCounts sum_counts(const std::vector<MatchCounts>& counts) {
  MatchCounts total;
  for (const auto& c : counts) total += c;
  return total;
}

namespace {

// Relation match that holds when both ends map as listed.
struct PairTerm {
  int pred_a, gold_a, pred_b, gold_b;
};

class AlignmentProblem {
 public:
  AlignmentProblem(const TripleSet& pred, const TripleSet& gold)
      : pred_vars_(pred.variables()), gold_vars_(gold.variables()) {
    const int np = static_cast<int>(pred_vars_.size());
    const int ng = static_cast<int>(gold_vars_.size());
    single_.assign(static_cast<std::size_t>(np) * static_cast<std::size_t>(ng), 0);
    pairs_of_.resize(static_cast<std::size_t>(np));

    std::unordered_map<std::string, int> pidx, gidx;
    for (int i = 0; i < np; ++i) pidx[pred_vars_[static_cast<std::size_t>(i)]] = i;
    for (int j = 0; j < ng; ++j) gidx[gold_vars_[static_cast<std::size_t>(j)]] = j;
    auto find = [](const auto& m, const std::string& v) {
      auto it = m.find(v);
      return it == m.end() ? -1 : it->second;
    };

    std::unordered_map<std::string, std::vector<int>> gold_by_concept;
    for (const auto& inst : gold.instances) gold_by_concept[inst.label].push_back(find(gidx, inst.variable));
    for (const auto& inst : pred.instances) {
      const int i = find(pidx, inst.variable);
      auto it = gold_by_concept.find(inst.label);
      if (i < 0 || it == gold_by_concept.end()) continue;
      for (int j : it->second) bump(i, j);
    }

    std::map<std::pair<std::string, std::string>, std::vector<int>> gold_attrs;
    for (const auto& a : gold.attributes) gold_attrs[{a.role, a.target}].push_back(find(gidx, a.source));
    for (const auto& a : pred.attributes) {
      const int i = find(pidx, a.source);
      auto it = gold_attrs.find({a.role, a.target});
      if (i < 0 || it == gold_attrs.end()) continue;
      for (int j : it->second) bump(i, j);
    }

    std::unordered_map<std::string, std::vector<std::pair<int, int>>> gold_rels;
    for (const auto& r : gold.relations) {
      gold_rels[r.role].emplace_back(find(gidx, r.source), find(gidx, r.target));
    }
    for (const auto& r : pred.relations) {
      const int a = find(pidx, r.source);
      const int b = find(pidx, r.target);
      auto it = gold_rels.find(r.role);
      if (a < 0 || b < 0 || it == gold_rels.end()) continue;
      for (auto [ja, jb] : it->second) {
        if (ja < 0 || jb < 0) continue;
        if (a == b) {
          if (ja == jb) bump(a, ja);
        } else if (ja != jb) {
          const int id = static_cast<int>(pairs_.size());
          pairs_.push_back({a, ja, b, jb});
          pairs_of_[static_cast<std::size_t>(a)].push_back(id);
          pairs_of_[static_cast<std::size_t>(b)].push_back(id);
        }
      }
    }
    upper_bound_ = std::min(pred.size(), gold.size());
  }

  int pred_count() const { return static_cast<int>(pred_vars_.size()); }
  int gold_count() const { return static_cast<int>(gold_vars_.size()); }
  std::uint64_t upper_bound() const { return upper_bound_; }
  const std::vector<std::string>& pred_vars() const { return pred_vars_; }
  const std::vector<std::string>& gold_vars() const { return gold_vars_; }

  std::uint64_t score(const std::vector<int>& m) const {
    std::int64_t s = 0;
    for (int i = 0; i < pred_count(); ++i) s += single(i, m[static_cast<std::size_t>(i)]);
    for (const auto& p : pairs_) s += holds(p, m);
    return static_cast<std::uint64_t>(s);
  }

  // Score contribution of terms touching i or k (k may be -1).
  std::int64_t local(int i, int k, const std::vector<int>& m) const {
    std::int64_t s = single(i, m[static_cast<std::size_t>(i)]);
    for (int id : pairs_of_[static_cast<std::size_t>(i)]) s += holds(pairs_[static_cast<std::size_t>(id)], m);
    if (k >= 0) {
      s += single(k, m[static_cast<std::size_t>(k)]);
      for (int id : pairs_of_[static_cast<std::size_t>(k)]) {
        const auto& p = pairs_[static_cast<std::size_t>(id)];
        if (p.pred_a == i || p.pred_b == i) continue;
        s += holds(p, m);
      }
    }
    return s;
  }

  std::vector<int> smart_start(Rng& rng) const {
    std::vector<int> m(static_cast<std::size_t>(pred_count()), -1);
    std::vector<bool> used(static_cast<std::size_t>(gold_count()), false);
    for (int i = 0; i < pred_count(); ++i) {
      int best = -1;
      int best_weight = 0;
      for (int j = 0; j < gold_count(); ++j) {
        if (!used[static_cast<std::size_t>(j)] && single(i, j) > best_weight) {
          best = j;
          best_weight = single(i, j);
        }
      }
      if (best >= 0) {
        m[static_cast<std::size_t>(i)] = best;
        used[static_cast<std::size_t>(best)] = true;
      }
    }
    std::vector<int> free;
    for (int j = 0; j < gold_count(); ++j) {
      if (!used[static_cast<std::size_t>(j)]) free.push_back(j);
    }
    shuffle(free, rng);
    std::size_t next = 0;
    for (auto& slot : m) {
      if (slot < 0 && next < free.size()) slot = free[next++];
    }
    return m;
  }

  std::vector<int> random_start(Rng& rng) const {
    std::vector<int> perm(static_cast<std::size_t>(gold_count()));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    std::vector<int> m(static_cast<std::size_t>(pred_count()), -1);
    for (std::size_t i = 0; i < m.size() && i < perm.size(); ++i) m[i] = perm[i];
    return m;
  }

  // Steepest ascent over reassign-to-free and swap moves, falling back to
  // moving both ends of one relation when no single move helps.
  std::uint64_t climb(std::vector<int>& m) const {
    std::vector<int> owner(static_cast<std::size_t>(gold_count()), -1);
    for (int i = 0; i < pred_count(); ++i) {
      if (m[static_cast<std::size_t>(i)] >= 0) owner[static_cast<std::size_t>(m[static_cast<std::size_t>(i)])] = i;
    }
    std::uint64_t current = score(m);
    while (current < upper_bound_) {
      std::int64_t best_gain = 0;
      int best_i = -1;
      int best_j = -1;
      for (int i = 0; i < pred_count(); ++i) {
        const int old_j = m[static_cast<std::size_t>(i)];
        for (int j = 0; j < gold_count(); ++j) {
          if (j == old_j) continue;
          const int k = owner[static_cast<std::size_t>(j)];
          const std::int64_t before = local(i, k, m);
          m[static_cast<std::size_t>(i)] = j;
          if (k >= 0) m[static_cast<std::size_t>(k)] = old_j;
          const std::int64_t gain = local(i, k, m) - before;
          m[static_cast<std::size_t>(i)] = old_j;
          if (k >= 0) m[static_cast<std::size_t>(k)] = j;
          if (gain > best_gain) {
            best_gain = gain;
            best_i = i;
            best_j = j;
          }
        }
      }
      if (best_i >= 0) {
        move(m, owner, best_i, best_j);
        current += static_cast<std::uint64_t>(best_gain);
        continue;
      }
      // Plateau: a relation whose ends both need to move can still pay off.
      std::uint64_t best_pair_score = current;
      std::vector<int> best_m, best_owner;
      for (const auto& p : pairs_) {
        if (holds(p, m)) continue;
        std::vector<int> tm = m;
        std::vector<int> to = owner;
        move(tm, to, p.pred_a, p.gold_a);
        move(tm, to, p.pred_b, p.gold_b);
        const std::uint64_t s = score(tm);
        if (s > best_pair_score) {
          best_pair_score = s;
          best_m = std::move(tm);
          best_owner = std::move(to);
        }
      }
      if (best_m.empty()) break;
      m = std::move(best_m);
      owner = std::move(best_owner);
      current = best_pair_score;
    }
    return current;
  }

 private:
  // Maps i to j; a previous owner of j takes i's old slot.
  static void move(std::vector<int>& m, std::vector<int>& owner, int i, int j) {
    const int old_j = m[static_cast<std::size_t>(i)];
    if (old_j == j) return;
    const int k = owner[static_cast<std::size_t>(j)];
    m[static_cast<std::size_t>(i)] = j;
    owner[static_cast<std::size_t>(j)] = i;
    if (k >= 0) m[static_cast<std::size_t>(k)] = old_j;
    if (old_j >= 0) owner[static_cast<std::size_t>(old_j)] = k;
  }

  static void shuffle(std::vector<int>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  }

  void bump(int i, int j) {
    if (i >= 0 && j >= 0) ++single_[static_cast<std::size_t>(i) * gold_vars_.size() + static_cast<std::size_t>(j)];
  }

  int single(int i, int j) const {
    return j < 0 ? 0 : single_[static_cast<std::size_t>(i) * gold_vars_.size() + static_cast<std::size_t>(j)];
  }

  static int holds(const PairTerm& p, const std::vector<int>& m) {
    return m[static_cast<std::size_t>(p.pred_a)] == p.gold_a && m[static_cast<std::size_t>(p.pred_b)] == p.gold_b;
  }

  std::vector<std::string> pred_vars_;
  std::vector<std::string> gold_vars_;
  std::vector<int> single_;
  std::vector<PairTerm> pairs_;
  std::vector<std::vector<int>> pairs_of_;
  std::uint64_t upper_bound_ = 0;
};

}  // namespace

std::uint64_t matched_triples(const TripleSet& pred, const TripleSet& gold,
                              const std::vector<std::string>& pred_variables,
                              const std::vector<std::string>& gold_variables,
                              const std::vector<int>& mapping) {
  std::unordered_map<std::string, std::string> to_gold;
  for (std::size_t i = 0; i < pred_variables.size() && i < mapping.size(); ++i) {
    if (mapping[i] >= 0) to_gold[pred_variables[i]] = gold_variables[static_cast<std::size_t>(mapping[i])];
  }
  auto mapped = [&](const std::string& v, std::string& out) {
    auto it = to_gold.find(v);
    if (it == to_gold.end()) return false;
    out = it->second;
    return true;
  };
  std::uint64_t matched = 0;
  std::string a, b;
  for (const auto& inst : pred.instances) {
    if (mapped(inst.variable, a) && std::binary_search(gold.instances.begin(), gold.instances.end(), Instance{a, inst.label})) {
      ++matched;
    }
  }
  for (const auto& t : pred.attributes) {
    if (mapped(t.source, a) && std::binary_search(gold.attributes.begin(), gold.attributes.end(), Triple{t.role, a, t.target})) {
      ++matched;
    }
  }
  for (const auto& t : pred.relations) {
    if (mapped(t.source, a) && mapped(t.target, b) &&
        std::binary_search(gold.relations.begin(), gold.relations.end(), Triple{t.role, a, b})) {
      ++matched;
    }
  }
  return matched;
}

Alignment align(const TripleSet& pred, const TripleSet& gold, int restarts, std::uint64_t seed) {
  AlignmentProblem problem(pred, gold);
  Alignment best;
  best.pred_variables = problem.pred_vars();
  best.gold_variables = problem.gold_vars();
  best.mapping.assign(best.pred_variables.size(), -1);
  best.matched = problem.score(best.mapping);
  if (problem.pred_count() == 0 || problem.gold_count() == 0) return best;

  Rng rng(seed);
  for (int run = 0; run <= std::max(restarts, 0); ++run) {
    std::vector<int> m = run == 0 ? problem.smart_start(rng) : problem.random_start(rng);
    const std::uint64_t score = problem.climb(m);
    if (run == 0 || score > best.matched) {
      best.matched = score;
      best.mapping = std::move(m);
    }
    if (best.matched >= problem.upper_bound()) break;
  }
  return best;
}

MatchCounts smatch_pair(const TripleSet& pred, const TripleSet& gold, int restarts, std::uint64_t seed) {
  return {align(pred, gold, restarts, seed).matched, pred.size(), gold.size()};
}

std::vector<MatchCounts> smatch_counts(const std::vector<TripleSet>& pred, const std::vector<TripleSet>& gold,
                                       const SmatchOptions& options) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument("smatch: " + std::to_string(pred.size()) + " predicted graphs vs " +
                                std::to_string(gold.size()) + " gold graphs");
  }
  std::vector<MatchCounts> counts(pred.size());
  parallel_for(pred.size(), options.workers, [&](std::size_t i) {
    counts[i] = smatch_pair(pred[i], gold[i], options.restarts, derive_seed(options.seed, i));
  });
  return counts;
}

Prf smatch(const std::vector<TripleSet>& pred, const std::vector<TripleSet>& gold, const SmatchOptions& options) {
  return to_prf(sum_counts(smatch_counts(pred, gold, options)));
}

std::string_view category_name(Category c) {
  switch (c) {
    case Category::Smatch: return "Smatch";
    case Category::Unlabel: return "Unlabel";
    case Category::NoWSD: return "NoWSD";
    case Category::Concepts: return "Concepts";
    case Category::NER: return "NER";
    case Category::Neg: return "Neg";
    case Category::Wiki: return "Wiki";
    case Category::Reentrancy: return "Reentrancy";
    case Category::SRL: return "SRL";
  }
  return "?";
}

namespace category {
namespace {

std::unordered_map<std::string, std::string> concept_map(const TripleSet& t) {
  std::unordered_map<std::string, std::string> m;
  for (const auto& i : t.instances) m.emplace(i.variable, i.label);
  return m;
}

// Relations kept by `keep`, plus the instances of every variable they touch.
template <typename Pred>
TripleSet relation_subgraph(const TripleSet& t, Pred keep) {
  TripleSet out;
  std::vector<std::string> touched;
  for (const auto& r : t.relations) {
    if (!keep(r)) continue;
    out.relations.push_back(r);
    touched.push_back(r.source);
    touched.push_back(r.target);
  }
  std::sort(touched.begin(), touched.end());
  for (const auto& i : t.instances) {
    if (std::binary_search(touched.begin(), touched.end(), i.variable)) out.instances.push_back(i);
  }
  canonicalize(out);
  return out;
}

std::string strip_sense(const std::string& label) {
  std::size_t end = label.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(label[end - 1]))) --end;
  if (label.size() - end >= 2 && end > 1 && label[end - 1] == '-') return label.substr(0, end - 1);
  return label;
}

}  // namespace

TripleSet unlabeled(const TripleSet& t) {
  TripleSet out = t;
  for (auto& r : out.relations) r.role = ":label";
  canonicalize(out);
  return out;
}

TripleSet without_senses(const TripleSet& t) {
  TripleSet out = t;
  for (auto& i : out.instances) i.label = strip_sense(i.label);
  for (auto& a : out.attributes) {
    if (a.role == kTopRole) a.target = strip_sense(a.target);
  }
  canonicalize(out);
  return out;
}

TripleSet reentrant_subgraph(const TripleSet& t) {
  std::unordered_map<std::string, int> in_degree;
  for (const auto& r : t.relations) ++in_degree[r.target];
  return relation_subgraph(t, [&](const Triple& r) { return in_degree[r.target] >= 2; });
}

TripleSet srl_subgraph(const TripleSet& t) {
  static const std::regex arg(":ARG[0-9]+");
  return relation_subgraph(t, [](const Triple& r) { return std::regex_match(r.role, arg); });
}

std::vector<std::string> concepts(const TripleSet& t) {
  std::vector<std::string> out;
  for (const auto& i : t.instances) out.push_back(i.label);
  return out;
}

std::vector<std::string> named_entities(const TripleSet& t) {
  const auto concept_of = concept_map(t);
  std::vector<std::string> out;
  for (const auto& r : t.relations) {
    if (r.role != ":name") continue;
    std::vector<std::pair<long, std::string>> ops;
    for (const auto& a : t.attributes) {
      if (a.source != r.target || !a.role.starts_with(":op")) continue;
      try {
        ops.emplace_back(std::stol(a.role.substr(3)), a.target);
      } catch (const std::exception&) {
      }
    }
    std::sort(ops.begin(), ops.end());
    std::string name;
    for (const auto& [n, v] : ops) name += (name.empty() ? "" : " ") + v;
    auto it = concept_of.find(r.source);
    out.push_back((it == concept_of.end() ? std::string() : it->second) + "|" + name);
  }
  return out;
}

std::vector<std::string> negations(const TripleSet& t) {
  const auto concept_of = concept_map(t);
  std::vector<std::string> out;
  for (const auto& a : t.attributes) {
    if (a.role != ":polarity" || a.target != "-") continue;
    auto it = concept_of.find(a.source);
    out.push_back(it == concept_of.end() ? std::string() : it->second);
  }
  return out;
}

std::vector<std::string> wiki_links(const TripleSet& t) {
  std::vector<std::string> out;
  for (const auto& a : t.attributes) {
    if (a.role == ":wiki" && a.target != "-") out.push_back(a.target);
  }
  return out;
}

}  // namespace category

MatchCounts bag_counts(std::vector<std::string> pred, std::vector<std::string> gold) {
  MatchCounts c{0, pred.size(), gold.size()};
  std::sort(pred.begin(), pred.end());
  std::sort(gold.begin(), gold.end());
  std::vector<std::string> common;
  std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(), std::back_inserter(common));
  c.matched = common.size();
  return c;
}

EvalReport fine_grained(const std::vector<TripleSet>& pred, const std::vector<TripleSet>& gold,
                        const SmatchOptions& options) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument("fine_grained: " + std::to_string(pred.size()) + " predicted graphs vs " +
                                std::to_string(gold.size()) + " gold graphs");
  }
  const std::size_t n = pred.size();
  std::vector<std::array<MatchCounts, kCategoryCount>> rows(n);
  parallel_for(n, options.workers, [&](std::size_t i) {
    const auto& p = pred[i];
    const auto& g = gold[i];
    auto realign = [&](const TripleSet& a, const TripleSet& b, std::uint64_t stream) {
      return smatch_pair(a, b, options.restarts, derive_seed(derive_seed(options.seed, stream), i));
    };
    auto& row = rows[i];
    // Smatch uses the same per-pair stream as smatch_counts
    row[0] = smatch_pair(p, g, options.restarts, derive_seed(options.seed, i));
    row[1] = realign(category::unlabeled(p), category::unlabeled(g), 1);
    row[2] = realign(category::without_senses(p), category::without_senses(g), 2);
    row[3] = bag_counts(category::concepts(p), category::concepts(g));
    row[4] = bag_counts(category::named_entities(p), category::named_entities(g));
    row[5] = bag_counts(category::negations(p), category::negations(g));
    row[6] = bag_counts(category::wiki_links(p), category::wiki_links(g));
    row[7] = realign(category::reentrant_subgraph(p), category::reentrant_subgraph(g), 7);
    row[8] = realign(category::srl_subgraph(p), category::srl_subgraph(g), 8);
  });

  EvalReport report;
  report.per_sentence.reserve(n);
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    MatchCounts total;
    for (const auto& row : rows) total += row[c];
    report.scores[c] = {kAllCategories[c], total, to_prf(total)};
  }
  for (const auto& row : rows) report.per_sentence.push_back(row[0]);
  return report;
}

double bootstrap_significance(const std::vector<MatchCounts>& a, const std::vector<MatchCounts>& b,
                              const BootstrapOptions& options) {
  if (a.empty() || b.empty()) throw std::invalid_argument("bootstrap: empty score lists");
  if (a.size() != b.size()) throw std::invalid_argument("bootstrap: score lists differ in length");
  if (options.resamples == 0) throw std::invalid_argument("bootstrap: zero resamples");
  const std::size_t n = a.size();
  std::vector<unsigned char> b_wins(options.resamples, 0);
  parallel_for(options.resamples, options.workers, [&](std::size_t r) {
    Rng rng(derive_seed(options.seed, r));
    MatchCounts sa, sb;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = rng.below(n);
      sa += a[idx];
      sb += b[idx];
    }
    b_wins[r] = to_prf(sb).f1 >= to_prf(sa).f1;
  });
  const std::size_t wins = std::accumulate(b_wins.begin(), b_wins.end(), std::size_t{0});
  return static_cast<double>(wins) / static_cast<double>(options.resamples);
}

}  // namespace amrforge
