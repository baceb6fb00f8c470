#pragma once

// Metrics over vote records: agreement with model defaults, expert alignment,
// lambda sweeps, demographic subgroup rates, trustee-delegate gaps and
// paraphrase consistency. Everything here is a pure function of the record
// set plus the corpus; record order never matters.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "civicsim/aggregation.hpp"
#include "civicsim/domain.hpp"

namespace civicsim {

// A concrete vote attributable to a (profile, policy, model, condition,
// variant) cell. Trustee records gain votes only after aggregation at a
// given lambda; binary records carry their parsed vote directly.
struct CastVote {
    std::optional<std::string> profile_id;
    std::string policy_id;
    std::string model;
    Condition condition = Condition::Delegate;
    std::string variant_id;
    std::optional<double> lambda;  // present for trustee-derived votes
    Vote vote = Vote::No;
};

enum class Reference { ModelDefault, ExpertConsensus };

inline std::string reference_token(Reference r) {
    return r == Reference::ModelDefault ? "model_default" : "expert_consensus";
}

inline Reference reference_from_token(const std::string& s) {
    if (s == "model_default") return Reference::ModelDefault;
    if (s == "expert_consensus") return Reference::ExpertConsensus;
    throw FormatError("unknown reference '" + s + "'");
}

enum class ReportScope { Aggregate, PerPolicy, PerPolicyPair, PerGroup };

inline std::string scope_token(ReportScope s) {
    switch (s) {
        case ReportScope::Aggregate: return "aggregate";
        case ReportScope::PerPolicy: return "per_policy";
        case ReportScope::PerPolicyPair: return "per_policy_pair";
        case ReportScope::PerGroup: return "per_group";
    }
    throw DomainError("unknown report scope");
}

inline ReportScope scope_from_token(const std::string& s) {
    if (s == "aggregate") return ReportScope::Aggregate;
    if (s == "per_policy") return ReportScope::PerPolicy;
    if (s == "per_policy_pair") return ReportScope::PerPolicyPair;
    if (s == "per_group") return ReportScope::PerGroup;
    throw FormatError("unknown report scope '" + s + "'");
}

// Condition of a report: one of the run conditions, the across-methods
// trustee mean, or mixed when a report spans several conditions.
struct ConditionRef {
    enum class Kind { Default, Delegate, TrusteeDual, TrusteePeriods, TrusteeMean, Mixed };
    Kind kind = Kind::Delegate;
    std::optional<double> lambda;

    bool operator==(const ConditionRef&) const = default;

    static ConditionRef of(Condition c, std::optional<double> lambda = std::nullopt) {
        switch (c) {
            case Condition::Default: return {Kind::Default, lambda};
            case Condition::Delegate: return {Kind::Delegate, lambda};
            case Condition::TrusteeDual: return {Kind::TrusteeDual, lambda};
            case Condition::TrusteePeriods: return {Kind::TrusteePeriods, lambda};
        }
        throw DomainError("unknown condition");
    }
};

inline std::string condition_ref_token(ConditionRef::Kind k) {
    switch (k) {
        case ConditionRef::Kind::Default: return "default";
        case ConditionRef::Kind::Delegate: return "delegate";
        case ConditionRef::Kind::TrusteeDual: return "trustee_dual";
        case ConditionRef::Kind::TrusteePeriods: return "trustee_periods";
        case ConditionRef::Kind::TrusteeMean: return "trustee_mean";
        case ConditionRef::Kind::Mixed: return "mixed";
    }
    throw DomainError("unknown condition ref");
}

inline ConditionRef::Kind condition_ref_from_token(const std::string& s) {
    if (s == "default") return ConditionRef::Kind::Default;
    if (s == "delegate") return ConditionRef::Kind::Delegate;
    if (s == "trustee_dual") return ConditionRef::Kind::TrusteeDual;
    if (s == "trustee_periods") return ConditionRef::Kind::TrusteePeriods;
    if (s == "trustee_mean") return ConditionRef::Kind::TrusteeMean;
    if (s == "mixed") return ConditionRef::Kind::Mixed;
    throw FormatError("unknown condition ref '" + s + "'");
}

struct AgreementReport {
    ReportScope scope = ReportScope::Aggregate;
    Reference reference = Reference::ModelDefault;
    std::string model;      // "all" when votes span several models
    ConditionRef condition;
    std::string key;        // policy id / pair id / group category; empty for aggregate
    double rate = 0;
    std::size_t n = 0;
};

enum class CurveMethod { Exponential, Dual, MeanOfMethods };

inline std::string curve_method_token(CurveMethod m) {
    switch (m) {
        case CurveMethod::Exponential: return "exponential";
        case CurveMethod::Dual: return "dual";
        case CurveMethod::MeanOfMethods: return "mean_of_methods";
    }
    throw DomainError("unknown curve method");
}

inline CurveMethod curve_method_from_token(const std::string& s) {
    if (s == "exponential") return CurveMethod::Exponential;
    if (s == "dual") return CurveMethod::Dual;
    if (s == "mean_of_methods") return CurveMethod::MeanOfMethods;
    throw FormatError("unknown curve method '" + s + "'");
}

struct AlphaCurve {
    std::string model;
    std::string policy_set;  // "contested", "consensus" or "all"
    CurveMethod method = CurveMethod::Exponential;
    std::string variant;     // variant id, or "mean" for the pooled curve
    std::vector<std::pair<double, double>> points;  // (lambda, rate), lambda increasing
};

struct AlphaCurveSet {
    AlphaCurve mean;
    std::vector<AlphaCurve> variants;
};

// ---------------------------------------------------------------------------
// Record-to-vote materialization

inline std::vector<CastVote> cast_binary_votes(const std::vector<VoteRecord>& records) {
    std::vector<CastVote> votes;
    for (const auto& r : records) {
        if (r.status != RecordStatus::Ok || !r.vote) continue;
        if (expected_for(r.condition) != Expected::BinaryVote) continue;
        votes.push_back({r.profile_id, r.policy_id, r.model, r.condition, r.variant_id,
                         std::nullopt, *r.vote});
    }
    return votes;
}

inline std::vector<CastVote> derive_trustee_votes(const std::vector<VoteRecord>& records,
                                                  double lambda) {
    std::vector<CastVote> votes;
    for (const auto& r : records) {
        if (r.status != RecordStatus::Ok || !r.utilities) continue;
        if (expected_for(r.condition) == Expected::BinaryVote) continue;
        votes.push_back({r.profile_id, r.policy_id, r.model, r.condition, r.variant_id, lambda,
                         trustee_vote(*r.utilities, lambda).first});
    }
    return votes;
}

// ---------------------------------------------------------------------------
// Reference stances

inline std::map<std::string, const Policy*> policies_by_id(const std::vector<Policy>& policies) {
    std::map<std::string, const Policy*> index;
    for (const auto& p : policies) index[p.id] = &p;
    return index;
}

inline Vote reference_stance(const Policy& policy, const std::string& model, Reference reference) {
    if (reference == Reference::ModelDefault) {
        auto it = policy.model_defaults.find(model);
        if (it == policy.model_defaults.end())
            throw AnalyticsError("policy '" + policy.id + "' has no default vote for model '" +
                                 model + "'");
        return it->second;
    }
    if (!policy.expert_stance)
        throw AnalyticsError("policy '" + policy.id +
                             "' is contested and has no expert consensus stance");
    return *policy.expert_stance;
}

namespace detail {

inline const Policy& policy_for(const std::map<std::string, const Policy*>& index,
                                const std::string& policy_id) {
    auto it = index.find(policy_id);
    if (it == index.end()) throw AnalyticsError("unknown policy id '" + policy_id + "'");
    return *it->second;
}

inline std::string common_model(const std::vector<CastVote>& votes) {
    std::string model;
    for (const auto& v : votes) {
        if (model.empty())
            model = v.model;
        else if (model != v.model)
            return "all";
    }
    return model;
}

inline ConditionRef common_condition(const std::vector<CastVote>& votes) {
    std::optional<ConditionRef> common;
    for (const auto& v : votes) {
        const ConditionRef ref = ConditionRef::of(v.condition, v.lambda);
        if (!common)
            common = ref;
        else if (!(*common == ref))
            return {ConditionRef::Kind::Mixed, std::nullopt};
    }
    return common.value_or(ConditionRef{});
}

struct MatchCount {
    std::size_t matches = 0;
    std::size_t n = 0;
};

inline MatchCount count_matches(const std::vector<CastVote>& votes,
                                const std::map<std::string, const Policy*>& index,
                                Reference reference) {
    MatchCount count;
    for (const auto& v : votes) {
        const Policy& policy = policy_for(index, v.policy_id);
        if (v.vote == reference_stance(policy, v.model, reference)) ++count.matches;
        ++count.n;
    }
    return count;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Agreement metrics

// Flat agreement: fraction of votes matching the reference stance. Failed
// records never reach this point; they are excluded upstream when votes are
// materialized.
inline AgreementReport agreement_rate(const std::vector<CastVote>& votes,
                                      const std::vector<Policy>& policies, Reference reference) {
    if (votes.empty()) throw AnalyticsError("agreement_rate: no eligible votes");
    const auto index = policies_by_id(policies);
    const auto count = detail::count_matches(votes, index, reference);
    AgreementReport report;
    report.scope = ReportScope::Aggregate;
    report.reference = reference;
    report.model = detail::common_model(votes);
    report.condition = detail::common_condition(votes);
    report.rate = static_cast<double>(count.matches) / static_cast<double>(count.n);
    report.n = count.n;
    return report;
}

inline AgreementReport expert_alignment(const std::vector<CastVote>& votes,
                                        const std::vector<Policy>& policies) {
    const auto index = policies_by_id(policies);
    for (const auto& v : votes)
        if (detail::policy_for(index, v.policy_id).category != PolicyCategory::Consensus)
            throw AnalyticsError("expert_alignment: contested policy '" + v.policy_id +
                                 "' in vote set");
    return agreement_rate(votes, policies, Reference::ExpertConsensus);
}

// One report per policy that received at least one vote, in corpus order.
inline std::vector<AgreementReport> per_policy_agreement(const std::vector<CastVote>& votes,
                                                         const std::vector<Policy>& policies,
                                                         Reference reference) {
    std::map<std::string, std::vector<CastVote>> by_policy;
    for (const auto& v : votes) by_policy[v.policy_id].push_back(v);
    std::vector<AgreementReport> reports;
    for (const auto& policy : policies) {
        auto it = by_policy.find(policy.id);
        if (it == by_policy.end()) continue;
        auto report = agreement_rate(it->second, policies, reference);
        report.scope = ReportScope::PerPolicy;
        report.key = policy.id;
        reports.push_back(report);
    }
    return reports;
}

inline std::vector<AgreementReport> per_pair_agreement(const std::vector<CastVote>& votes,
                                                       const std::vector<Policy>& policies,
                                                       Reference reference) {
    const auto index = policies_by_id(policies);
    std::map<std::string, std::vector<CastVote>> by_pair;
    for (const auto& v : votes)
        by_pair[detail::policy_for(index, v.policy_id).pair_id].push_back(v);
    std::vector<AgreementReport> reports;
    std::set<std::string> emitted;
    for (const auto& policy : policies) {
        if (!emitted.insert(policy.pair_id).second) continue;
        auto it = by_pair.find(policy.pair_id);
        if (it == by_pair.end()) continue;
        auto report = agreement_rate(it->second, policies, reference);
        report.scope = ReportScope::PerPolicyPair;
        report.key = policy.pair_id;
        reports.push_back(report);
    }
    return reports;
}

// Aggregate with every policy statement weighted equally: a flat rate per
// (policy, variant) cell, averaged over variants within each policy, then
// averaged over policies. n reports the total contributing votes.
inline AgreementReport aggregate_agreement(const std::vector<CastVote>& votes,
                                           const std::vector<Policy>& policies,
                                           Reference reference) {
    if (votes.empty()) throw AnalyticsError("aggregate_agreement: no eligible votes");
    const auto index = policies_by_id(policies);
    std::map<std::string, std::map<std::string, detail::MatchCount>> cells;  // policy -> variant
    std::size_t total = 0;
    for (const auto& v : votes) {
        auto& cell = cells[v.policy_id][v.variant_id];
        const Policy& policy = detail::policy_for(index, v.policy_id);
        if (v.vote == reference_stance(policy, v.model, reference)) ++cell.matches;
        ++cell.n;
        ++total;
    }
    double policy_rate_sum = 0;
    for (const auto& [policy_id, variants] : cells) {
        double variant_rate_sum = 0;
        for (const auto& [variant_id, cell] : variants)
            variant_rate_sum += static_cast<double>(cell.matches) / static_cast<double>(cell.n);
        policy_rate_sum += variant_rate_sum / static_cast<double>(variants.size());
    }
    AgreementReport report;
    report.scope = ReportScope::Aggregate;
    report.reference = reference;
    report.model = detail::common_model(votes);
    report.condition = detail::common_condition(votes);
    report.rate = policy_rate_sum / static_cast<double>(cells.size());
    report.n = total;
    return report;
}

// ---------------------------------------------------------------------------
// Lambda sweeps

namespace detail {

inline std::vector<VoteRecord> records_for_method(const std::vector<VoteRecord>& records,
                                                  CurveMethod method) {
    const Condition wanted =
        method == CurveMethod::Exponential ? Condition::TrusteePeriods : Condition::TrusteeDual;
    std::vector<VoteRecord> out;
    for (const auto& r : records)
        if (r.condition == wanted && r.status == RecordStatus::Ok && r.utilities)
            out.push_back(r);
    return out;
}

inline double rate_at_lambda(const std::vector<VoteRecord>& records,
                             const std::vector<Policy>& policies, Reference reference,
                             double lambda) {
    auto votes = derive_trustee_votes(records, lambda);
    return agreement_rate(votes, policies, reference).rate;
}

}  // namespace detail

// Sweeps agreement across the lambda grid for one model's trustee records.
// The mean curve pools every variant's votes, so its endpoint is exactly
// agreement_rate over trustee_vote(., lambda) votes; thin per-variant curves
// accompany it. MeanOfMethods averages the two methods' mean curves
// pointwise and carries both methods' variant curves.
inline AlphaCurveSet alpha_curve(const std::vector<VoteRecord>& records,
                                 const std::vector<Policy>& policies, Reference reference,
                                 CurveMethod method, const std::vector<double>& grid,
                                 const std::string& policy_set_label = "all") {
    if (grid.empty()) throw AnalyticsError("alpha_curve: empty lambda grid");
    std::string model;
    for (const auto& r : records) {
        if (model.empty())
            model = r.model;
        else if (model != r.model)
            throw AnalyticsError("alpha_curve expects records from a single model");
    }

    auto build = [&](const std::vector<VoteRecord>& subset, CurveMethod m,
                     const std::string& variant) {
        AlphaCurve curve;
        curve.model = model;
        curve.policy_set = policy_set_label;
        curve.method = m;
        curve.variant = variant;
        for (double lambda : grid)
            curve.points.emplace_back(lambda,
                                      detail::rate_at_lambda(subset, policies, reference, lambda));
        return curve;
    };

    auto method_set = [&](CurveMethod m) {
        AlphaCurveSet set;
        auto subset = detail::records_for_method(records, m);
        if (subset.empty())
            throw AnalyticsError("alpha_curve: no usable records for method " +
                                 curve_method_token(m));
        set.mean = build(subset, m, "mean");
        std::map<std::string, std::vector<VoteRecord>> by_variant;
        for (const auto& r : subset) by_variant[r.variant_id].push_back(r);
        for (const auto& [variant_id, variant_records] : by_variant)
            set.variants.push_back(build(variant_records, m, variant_id));
        return set;
    };

    if (method != CurveMethod::MeanOfMethods) return method_set(method);

    AlphaCurveSet exponential = method_set(CurveMethod::Exponential);
    AlphaCurveSet dual = method_set(CurveMethod::Dual);
    AlphaCurveSet combined;
    combined.mean.model = model;
    combined.mean.policy_set = policy_set_label;
    combined.mean.method = CurveMethod::MeanOfMethods;
    combined.mean.variant = "mean";
    for (std::size_t i = 0; i < grid.size(); ++i)
        combined.mean.points.emplace_back(
            grid[i], (exponential.mean.points[i].second + dual.mean.points[i].second) / 2.0);
    combined.variants = std::move(exponential.variants);
    for (auto& curve : dual.variants) combined.variants.push_back(std::move(curve));
    return combined;
}

// ---------------------------------------------------------------------------
// Subgroups

enum class Bucketing { Storage, IncomeReport };

inline std::vector<AgreementReport> subgroup_agreement(
    const std::vector<CastVote>& votes, const std::vector<VoterProfile>& profiles,
    const std::vector<Policy>& policies, Reference reference, const std::string& group_field,
    Bucketing bucketing = Bucketing::Storage) {
    if (demographic_categories().find(group_field) == demographic_categories().end())
        throw DomainError("unknown demographics field '" + group_field + "'");
    if (bucketing == Bucketing::IncomeReport && group_field != "income_bracket")
        throw DomainError("income report bucketing applies only to income_bracket");

    std::map<std::string, const VoterProfile*> profile_index;
    for (const auto& p : profiles) profile_index[p.id] = &p;

    auto bucket_of = [&](const CastVote& v) -> std::optional<std::string> {
        if (!v.profile_id) return std::nullopt;  // default-condition votes have no group
        auto it = profile_index.find(*v.profile_id);
        if (it == profile_index.end())
            throw AnalyticsError("vote references unknown profile '" + *v.profile_id + "'");
        const std::string value = demographic_value(it->second->demographics, group_field);
        if (bucketing == Bucketing::IncomeReport) return income_report_bucket(value);
        return value;
    };

    std::map<std::string, std::vector<CastVote>> groups;
    for (const auto& v : votes)
        if (auto bucket = bucket_of(v)) groups[*bucket].push_back(v);

    // Canonical category order, then anything else (numeric household sizes).
    std::vector<std::string> order;
    if (bucketing == Bucketing::IncomeReport)
        order = income_report_buckets();
    else
        order = demographic_categories().at(group_field);
    for (const auto& [bucket, _] : groups)
        if (std::find(order.begin(), order.end(), bucket) == order.end()) order.push_back(bucket);

    std::vector<AgreementReport> reports;
    for (const auto& bucket : order) {
        auto it = groups.find(bucket);
        if (it == groups.end()) continue;
        auto report = agreement_rate(it->second, policies, reference);
        report.scope = ReportScope::PerGroup;
        report.key = bucket;
        reports.push_back(report);
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Derived comparisons

inline double trustee_delegate_gap(const AgreementReport& delegate_report,
                                   const AgreementReport& trustee_report) {
    if (delegate_report.model != trustee_report.model)
        throw AnalyticsError("trustee_delegate_gap: reports cover different models");
    if (delegate_report.reference != trustee_report.reference)
        throw AnalyticsError("trustee_delegate_gap: reports use different references");
    if (delegate_report.scope != trustee_report.scope ||
        delegate_report.key != trustee_report.key)
        throw AnalyticsError("trustee_delegate_gap: reports cover different scopes");
    return trustee_report.rate - delegate_report.rate;
}

// A tuple is one (profile, model, condition, variant, lambda) view of a
// paraphrase pair; it is consistent when its two votes differ. Tuples missing
// either member are not evaluable.
inline double paraphrase_consistency(const std::vector<CastVote>& votes,
                                     const std::vector<Policy>& policies) {
    const auto index = policies_by_id(policies);
    using TupleKey = std::tuple<std::string, std::string, Condition, std::string,
                                std::optional<double>, std::string>;
    std::map<TupleKey, std::map<std::string, Vote>> tuples;
    for (const auto& v : votes) {
        const Policy& policy = detail::policy_for(index, v.policy_id);
        TupleKey key{v.profile_id.value_or(""), v.model, v.condition, v.variant_id, v.lambda,
                     policy.pair_id};
        tuples[key][v.policy_id] = v.vote;
    }
    std::size_t evaluable = 0, consistent = 0;
    for (const auto& [key, member_votes] : tuples) {
        if (member_votes.size() != 2) continue;
        ++evaluable;
        auto it = member_votes.begin();
        const Vote first = it->second;
        const Vote second = std::next(it)->second;
        if (first != second) ++consistent;
    }
    if (evaluable == 0) throw AnalyticsError("paraphrase_consistency: no evaluable tuples");
    return static_cast<double>(consistent) / static_cast<double>(evaluable);
}

}  // namespace civicsim
