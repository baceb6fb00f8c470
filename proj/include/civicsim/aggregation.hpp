#pragma once

// Temporal aggregation of trustee utility schedules. Two models are
// supported: exponential discounting over six 5-year periods and a dual-self
// weighting of one short-term and one long-term estimate.
//
// Both are driven by a single emphasis parameter lambda in [0, 1] where
// lambda = 1 means maximal long-term emphasis:
//   - exponential: lambda is the discount factor applied as lambda^t,
//   - dual: the long-term score gets weight lambda, the short-term score
//     gets weight (1 - lambda).

#include <cmath>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "civicsim/domain.hpp"

namespace civicsim {

enum class TemporalMethod { Exponential, Dual };

inline std::string method_token(TemporalMethod m) {
    return m == TemporalMethod::Exponential ? "exponential" : "dual";
}

// Unified long-term emphasis with the mappings onto each method's weighting
// convention: the exponential discount factor equals lambda directly, while
// the dual-self weight on the short-term score equals 1 - lambda.
struct EmphasisParameter {
    double lambda;

    explicit EmphasisParameter(double value) : lambda(value) {
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw DomainError("lambda must lie in [0, 1]");
    }

    double exponential_discount_factor() const { return lambda; }
    double dual_short_term_weight() const { return 1.0 - lambda; }
};

struct AggregatedUtility {
    double u_yes = 0;
    double u_no = 0;
    TemporalMethod method = TemporalMethod::Exponential;
    double lambda = 0;
};

// Sum_{t=0..5} lambda^t * score[t]; the t = 0 term is undiscounted for every
// lambda, including lambda = 0.
inline double discount_exponential(std::span<const double> period_scores, double lambda) {
    if (period_scores.size() != kPeriodCount)
        throw DomainError("expected exactly 6 period scores");
    EmphasisParameter emphasis(lambda);
    double total = 0.0;
    double weight = 1.0;
    for (double score : period_scores) {
        if (!score_in_range(score)) throw DomainError("period score outside [0, 100]");
        total += weight * score;
        weight *= emphasis.exponential_discount_factor();
    }
    return total;
}

inline double aggregate_dual(double short_score, double long_score, double lambda) {
    if (!score_in_range(short_score) || !score_in_range(long_score))
        throw DomainError("dual score outside [0, 100]");
    EmphasisParameter emphasis(lambda);
    return emphasis.dual_short_term_weight() * short_score + emphasis.lambda * long_score;
}

// Yes only on a strict win; ties fall to No.
inline Vote decide(double u_yes, double u_no) {
    if (!std::isfinite(u_yes) || !std::isfinite(u_no))
        throw DomainError("aggregated utilities must be finite");
    return u_yes > u_no ? Vote::Yes : Vote::No;
}

inline std::pair<Vote, AggregatedUtility> trustee_vote(const UtilitySchedule& schedule,
                                                       double lambda) {
    AggregatedUtility agg;
    agg.lambda = lambda;
    if (const auto* dual = std::get_if<DualSchedule>(&schedule)) {
        agg.method = TemporalMethod::Dual;
        agg.u_yes = aggregate_dual(dual->yes_short, dual->yes_long, lambda);
        agg.u_no = aggregate_dual(dual->no_short, dual->no_long, lambda);
    } else {
        const auto& periods = std::get<PeriodSchedule>(schedule);
        agg.method = TemporalMethod::Exponential;
        agg.u_yes = discount_exponential(periods.yes_scores, lambda);
        agg.u_no = discount_exponential(periods.no_scores, lambda);
    }
    return {decide(agg.u_yes, agg.u_no), agg};
}

inline std::vector<std::pair<double, Vote>> sweep(const UtilitySchedule& schedule,
                                                  std::span<const double> grid) {
    if (grid.empty()) throw DomainError("lambda grid must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
            throw DomainError("lambda grid values must lie in [0, 1]");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw DomainError("lambda grid must be strictly increasing");
    }
    std::vector<std::pair<double, Vote>> votes;
    votes.reserve(grid.size());
    for (double lambda : grid) votes.emplace_back(lambda, trustee_vote(schedule, lambda).first);
    return votes;
}

// Default sweep grid: 0.0 to 1.0 in steps of 0.1 (11 points).
inline std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    grid.reserve(11);
    for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
    return grid;
}

// Parses "start:end:step" grid syntax, e.g. "0:1:0.1".
inline std::vector<double> parse_lambda_grid(const std::string& text) {
    auto first = text.find(':');
    auto second = text.find(':', first == std::string::npos ? first : first + 1);
    if (first == std::string::npos || second == std::string::npos)
        throw ConfigError("lambda grid must be start:end:step, got '" + text + "'");
    double start = 0, end = 0, step = 0;
    try {
        start = std::stod(text.substr(0, first));
        end = std::stod(text.substr(first + 1, second - first - 1));
        step = std::stod(text.substr(second + 1));
    } catch (const std::exception&) {
        throw ConfigError("lambda grid must be numeric start:end:step, got '" + text + "'");
    }
    if (step <= 0 || end < start) throw ConfigError("lambda grid requires step > 0 and end >= start");
    std::vector<double> grid;
    // Round to the step lattice so 0.1 increments land exactly on 0.1, 0.2, ...
    const long long n = static_cast<long long>(std::floor((end - start) / step + 1e-9));
    for (long long i = 0; i <= n; ++i) {
        double v = start + static_cast<double>(i) * step;
        grid.push_back(std::round(v * 1e12) / 1e12);
    }
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    return grid;
}

}  // namespace civicsim
