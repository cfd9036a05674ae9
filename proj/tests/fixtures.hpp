#pragma once

#include <array>
#include <string_view>
#include <utility>

#include "amrforge/smatch.hpp"

namespace amrforge::fixtures {

inline constexpr std::string_view kFigureSentence =
    "Statistics also revealed that Taiwanese business investments in the mainland is tending to increase";

inline constexpr std::string_view kFigureGraph = R"((r / reveal-01
    :ARG0 (s / statistic)
    :ARG1 (t / tend-02
        :ARG1 (t2 / thing
            :ARG1-of (i / invest-01
            :ARG0 (c / country
                :wiki "Taiwan"
                :name (n / name
                      :op1 "Taiwan"))
            :ARG2 (m / mainland)
            :mod (b / business)))
    :ARG2 (i2 / increase-01
            :ARG1 t2))
    :mod (a / also)))";

inline constexpr std::string_view kFigureSerialized =
    "( reveal-01 :ARG0 ( statistic ) :ARG1 ( tend-02 :ARG1 ( thing :ARG1-of ( invest-01 "
    ":ARG0 ( country :name ( name :op1 \"Taiwan\" ) ) :ARG2 ( mainland ) :mod ( business ) ) ) "
    ":ARG2 ( increase-01 :ARG1 thing ) ) :mod ( also ) )";

inline constexpr std::string_view kFigureInput =
    "amr generation ; Statistics also revealed that Taiwanese business investments in the mainland is "
    "tending to increase";

// Five (pred, gold) pairs with category counts worked out by hand.
inline constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kScoredCorpus{{
    {"(s / see-01 :ARG0 (b / boy) :ARG1 (g / girl))", "(s / see-01 :ARG0 (b / boy) :ARG1 (g / girl) :polarity -)"},
    {"(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-01 :ARG0 b))",
     "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))"},
    {"(c / country :wiki \"Germany\" :name (n / name :op1 \"France\"))",
     "(c / country :wiki \"France\" :name (n / name :op1 \"France\"))"},
    {"(p / person :name (n / name :op1 \"Anna\") :ARG0-of (s / sleep-01))",
     "(p / person :name (n / name :op1 \"Mary\"))"},
    {"(l / like-01 :ARG0 (d / dog) :ARG1 (c / cat :polarity -))",
     "(l / like-01 :ARG0 (c / cat) :ARG1 (d / dog) :polarity -)"},
}};

inline constexpr std::array<std::pair<Category, MatchCounts>, kCategoryCount> kScoredCorpusCounts{{
    {Category::Smatch, {6 + 6 + 5 + 4 + 4, 33, 32}},
    {Category::Unlabel, {6 + 6 + 5 + 4 + 6, 33, 32}},
    {Category::NoWSD, {6 + 7 + 5 + 4 + 4, 33, 32}},
    {Category::Concepts, {3 + 2 + 2 + 2 + 3, 14, 13}},
    {Category::NER, {1, 2, 2}},
    {Category::Neg, {0, 1, 2}},
    {Category::Wiki, {0, 1, 1}},
    {Category::Reentrancy, {4, 5, 5}},
    {Category::SRL, {5 + 5 + 0 + 0 + 3, 19, 16}},
}};

/// F1 from counts as 2m / (p + g).
inline double f1_of(const MatchCounts& c) {
  return c.matched == 0 ? 0.0 : 2.0 * static_cast<double>(c.matched) / static_cast<double>(c.pred_total + c.gold_total);
}

}  // namespace amrforge::fixtures
