#ifndef QCQA_STATS_HPP
#define QCQA_STATS_HPP

#include <span>
#include <vector>

namespace qcqa {

// Ascending ranks starting at 1; ties receive their average rank.
std::vector<double> rank_with_ties(std::span<const double> values);

// Spearman rank correlation; NaN when either side has zero rank variance.
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace qcqa

#endif
