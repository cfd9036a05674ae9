#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "amrforge/triples.hpp"

namespace amrforge {

/// Matched-triple count and the two totals it is measured against.
struct MatchCounts {
  std::uint64_t matched = 0;
  std::uint64_t pred_total = 0;
  std::uint64_t gold_total = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    matched += o.matched;
    pred_total += o.pred_total;
    gold_total += o.gold_total;
    return *this;
  }
  bool operator==(const MatchCounts&) const = default;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero totals give zero precision/recall; F1 is 0 when P + R is 0.
Prf to_prf(const MatchCounts& counts);

MatchCounts sum_counts(const std::vector<MatchCounts>& counts);

struct SmatchOptions {
  int restarts = 4;         // random starts, in addition to the smart start
  std::uint64_t seed = 0;
  unsigned workers = 1;     // 0 = hardware concurrency
};

/// Partial injection from predicted variables to gold variables.
struct Alignment {
  std::vector<std::string> pred_variables;
  std::vector<std::string> gold_variables;
  std::vector<int> mapping;  // per pred variable: gold index or -1
  std::uint64_t matched = 0;
};

/// Number of triples matched under `mapping` (indices as in Alignment).
std::uint64_t matched_triples(const TripleSet& pred, const TripleSet& gold,
                              const std::vector<std::string>& pred_variables,
                              const std::vector<std::string>& gold_variables,
                              const std::vector<int>& mapping);

/// Best alignment found by hill climbing from one concept-seeded start and
/// `restarts` random starts. Deterministic in `seed`.
Alignment align(const TripleSet& pred, const TripleSet& gold, int restarts, std::uint64_t seed);

MatchCounts smatch_pair(const TripleSet& pred, const TripleSet& gold, int restarts, std::uint64_t seed);

/// Per-pair counts; pair i uses a stream derived from (seed, i), so results do
/// not depend on the worker count. Throws std::invalid_argument on length
/// mismatch.
std::vector<MatchCounts> smatch_counts(const std::vector<TripleSet>& pred,
                                       const std::vector<TripleSet>& gold,
                                       const SmatchOptions& options = {});

/// Corpus Smatch, micro-averaged over triple counts.
Prf smatch(const std::vector<TripleSet>& pred, const std::vector<TripleSet>& gold,
           const SmatchOptions& options = {});

enum class Category { Smatch, Unlabel, NoWSD, Concepts, NER, Neg, Wiki, Reentrancy, SRL };
inline constexpr std::size_t kCategoryCount = 9;
inline constexpr std::array<Category, kCategoryCount> kAllCategories{
    Category::Smatch, Category::Unlabel, Category::NoWSD,      Category::Concepts, Category::NER,
    Category::Neg,    Category::Wiki,    Category::Reentrancy, Category::SRL};

std::string_view category_name(Category category);

struct CategoryScore {
  Category category;
  MatchCounts counts;
  Prf prf;
};

struct EvalReport {
  std::array<CategoryScore, kCategoryCount> scores;
  /// Per-sentence Smatch counts, kept for significance testing.
  std::vector<MatchCounts> per_sentence;

  const CategoryScore& operator[](Category c) const { return scores[static_cast<std::size_t>(c)]; }
};

/// Category views of a triple set. Smatch-style categories are re-aligned on
/// the transformed sets; bag categories compare multisets of labels.
namespace category {
TripleSet unlabeled(const TripleSet& t);
TripleSet without_senses(const TripleSet& t);
TripleSet reentrant_subgraph(const TripleSet& t);
TripleSet srl_subgraph(const TripleSet& t);
std::vector<std::string> concepts(const TripleSet& t);
std::vector<std::string> named_entities(const TripleSet& t);
std::vector<std::string> negations(const TripleSet& t);
std::vector<std::string> wiki_links(const TripleSet& t);
}  // namespace category

/// Multiset intersection size against both bag sizes.
MatchCounts bag_counts(std::vector<std::string> pred, std::vector<std::string> gold);

EvalReport fine_grained(const std::vector<TripleSet>& pred, const std::vector<TripleSet>& gold,
                        const SmatchOptions& options = {});

struct BootstrapOptions {
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// One-sided paired bootstrap: fraction of resamples in which system B's
/// corpus F1 is at least system A's. Throws std::invalid_argument on empty
/// or mismatched inputs.
double bootstrap_significance(const std::vector<MatchCounts>& system_a,
                              const std::vector<MatchCounts>& system_b,
                              const BootstrapOptions& options = {});

inline constexpr double kSignificanceLevel = 0.05;

}  // namespace amrforge
