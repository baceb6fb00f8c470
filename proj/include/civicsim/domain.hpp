#pragma once

// Core vocabulary shared by every module: voter profiles, policies, decision
// conditions, utility schedules and vote records. All values are immutable
// after construction and safe to share across threads.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace civicsim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
    using Error::Error;
};
class ValidationError : public Error {
    using Error::Error;
};
class DomainError : public Error {
    using Error::Error;
};
class ConfigError : public Error {
    using Error::Error;
};
class RenderError : public Error {
    using Error::Error;
};
class ProviderError : public Error {
    using Error::Error;
};
class AnalyticsError : public Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Votes

enum class Vote { Yes, No };

inline std::string to_string(Vote v) { return v == Vote::Yes ? "Yes" : "No"; }

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

// Case-insensitive "yes"/"no"; anything else is not a vote.
inline std::optional<Vote> vote_from_token(std::string_view token) {
    auto t = ascii_lower(trim(token));
    if (t == "yes") return Vote::Yes;
    if (t == "no") return Vote::No;
    return std::nullopt;
}

inline Vote vote_from_json_string(const std::string& s, const char* context) {
    auto v = vote_from_token(s);
    if (!v) throw FormatError(std::string("invalid vote value '") + s + "' in " + context);
    return *v;
}

// ---------------------------------------------------------------------------
// Conditions

enum class Condition { Default, Delegate, TrusteeDual, TrusteePeriods };

inline const std::array<Condition, 4>& all_conditions() {
    static const std::array<Condition, 4> c = {Condition::Default, Condition::Delegate,
                                               Condition::TrusteeDual, Condition::TrusteePeriods};
    return c;
}

inline std::string condition_token(Condition c) {
    switch (c) {
        case Condition::Default: return "default";
        case Condition::Delegate: return "delegate";
        case Condition::TrusteeDual: return "trustee_dual";
        case Condition::TrusteePeriods: return "trustee_periods";
    }
    throw DomainError("unknown condition");
}

inline Condition condition_from_token(const std::string& s) {
    if (s == "default") return Condition::Default;
    if (s == "delegate") return Condition::Delegate;
    if (s == "trustee_dual") return Condition::TrusteeDual;
    if (s == "trustee_periods") return Condition::TrusteePeriods;
    throw FormatError("unknown condition '" + s + "'");
}

// What a condition's prompt asks the model to return.
enum class Expected { BinaryVote, DualSchedule, PeriodSchedule };

inline Expected expected_for(Condition c) {
    switch (c) {
        case Condition::Default:
        case Condition::Delegate: return Expected::BinaryVote;
        case Condition::TrusteeDual: return Expected::DualSchedule;
        case Condition::TrusteePeriods: return Expected::PeriodSchedule;
    }
    throw DomainError("unknown condition");
}

// ---------------------------------------------------------------------------
// Demographics

struct Demographics {
    std::string gender;
    std::string race;
    std::string age_group;
    std::string political_affiliation;
    std::string religion;
    int household_size = 1;
    std::string occupation;
    std::string income_bracket;
    std::string housing_status;
    std::string region;
    std::string education;
    std::string language;
    std::string marital_status;
    std::string health_status;

    bool operator==(const Demographics&) const = default;
};

inline const std::vector<std::string>& demographic_fields() {
    static const std::vector<std::string> fields = {
        "gender",         "race",     "age_group", "political_affiliation", "religion",
        "household_size", "occupation", "income_bracket", "housing_status", "region",
        "education",      "language", "marital_status", "health_status"};
    return fields;
}

// Closed category lists. household_size is the one numeric field; its list is
// empty here and validated against the [1, 20] range instead.
inline const std::map<std::string, std::vector<std::string>>& demographic_categories() {
    static const std::map<std::string, std::vector<std::string>> categories = {
        {"gender", {"Female", "Male"}},
        {"race", {"White", "Hispanic/Latino", "Black/African American", "Asian", "Other"}},
        {"age_group", {"18-24", "25-34", "35-44", "45-54", "55-64", "65+"}},
        {"political_affiliation", {"Democrat", "Republican", "Independent"}},
        {"religion",
         {"Protestant/Other Christian", "Catholic", "Jewish", "Unaffiliated (None)",
          "Other religions"}},
        {"household_size", {}},
        {"occupation",
         {"Mgmt/business/science/arts", "Sales/office", "Service",
          "Production/transport/materials", "Natural resources/construction"}},
        {"income_bracket", {"under-30k", "30-49k", "50-99k", "100-199k", "over-200k"}},
        {"housing_status", {"Own", "Rent", "Live with family", "Other"}},
        {"region", {"Northeast", "Midwest", "South", "West"}},
        {"education",
         {"High school or less", "Some college, no degree", "Associate degree",
          "Bachelor's degree", "Graduate/professional degree"}},
        {"language", {"English only", "Spanish", "Other Indo-European", "Other languages"}},
        {"marital_status", {"Married", "Never married", "Divorced"}},
        {"health_status", {"Good", "Fair", "Poor"}},
    };
    return categories;
}

inline std::string demographic_value(const Demographics& d, const std::string& field) {
    if (field == "gender") return d.gender;
    if (field == "race") return d.race;
    if (field == "age_group") return d.age_group;
    if (field == "political_affiliation") return d.political_affiliation;
    if (field == "religion") return d.religion;
    if (field == "household_size") return std::to_string(d.household_size);
    if (field == "occupation") return d.occupation;
    if (field == "income_bracket") return d.income_bracket;
    if (field == "housing_status") return d.housing_status;
    if (field == "region") return d.region;
    if (field == "education") return d.education;
    if (field == "language") return d.language;
    if (field == "marital_status") return d.marital_status;
    if (field == "health_status") return d.health_status;
    throw DomainError("unknown demographics field '" + field + "'");
}

// Returns a list of violated constraints; empty means the record is valid.
inline std::vector<std::string> demographics_problems(const Demographics& d) {
    std::vector<std::string> problems;
    for (const auto& field : demographic_fields()) {
        if (field == "household_size") {
            if (d.household_size < 1 || d.household_size > 20)
                problems.push_back("household_size out of range [1, 20]");
            continue;
        }
        const auto& allowed = demographic_categories().at(field);
        const auto value = demographic_value(d, field);
        if (std::find(allowed.begin(), allowed.end(), value) == allowed.end())
            problems.push_back(field + " has unknown category '" + value + "'");
    }
    return problems;
}

// Reporting cut over the five storage brackets: <50K, 50-99K, >100K.
inline const std::vector<std::string>& income_report_buckets() {
    static const std::vector<std::string> buckets = {"<50K", "50-99K", ">100K"};
    return buckets;
}

inline std::string income_report_bucket(const std::string& income_bracket) {
    if (income_bracket == "under-30k" || income_bracket == "30-49k") return "<50K";
    if (income_bracket == "50-99k") return "50-99K";
    if (income_bracket == "100-199k" || income_bracket == "over-200k") return ">100K";
    throw DomainError("unknown income bracket '" + income_bracket + "'");
}

inline void to_json(json& j, const Demographics& d) {
    j = json{{"gender", d.gender},
             {"race", d.race},
             {"age_group", d.age_group},
             {"political_affiliation", d.political_affiliation},
             {"religion", d.religion},
             {"household_size", d.household_size},
             {"occupation", d.occupation},
             {"income_bracket", d.income_bracket},
             {"housing_status", d.housing_status},
             {"region", d.region},
             {"education", d.education},
             {"language", d.language},
             {"marital_status", d.marital_status},
             {"health_status", d.health_status}};
}

inline void from_json(const json& j, Demographics& d) {
    j.at("gender").get_to(d.gender);
    j.at("race").get_to(d.race);
    j.at("age_group").get_to(d.age_group);
    j.at("political_affiliation").get_to(d.political_affiliation);
    j.at("religion").get_to(d.religion);
    j.at("household_size").get_to(d.household_size);
    j.at("occupation").get_to(d.occupation);
    j.at("income_bracket").get_to(d.income_bracket);
    j.at("housing_status").get_to(d.housing_status);
    j.at("region").get_to(d.region);
    j.at("education").get_to(d.education);
    j.at("language").get_to(d.language);
    j.at("marital_status").get_to(d.marital_status);
    j.at("health_status").get_to(d.health_status);
}

// ---------------------------------------------------------------------------
// Voter profiles

struct VoterProfile {
    std::string id;
    Demographics demographics;
    std::string biography;

    bool operator==(const VoterProfile&) const = default;
};

inline void to_json(json& j, const VoterProfile& p) {
    j = json{{"id", p.id}, {"demographics", p.demographics}, {"biography", p.biography}};
}

inline void from_json(const json& j, VoterProfile& p) {
    j.at("id").get_to(p.id);
    j.at("demographics").get_to(p.demographics);
    j.at("biography").get_to(p.biography);
}

// ---------------------------------------------------------------------------
// Policies

enum class Polarity { Affirmative, Negated };
enum class PolicyCategory { Contested, Consensus };

inline std::string polarity_token(Polarity p) {
    return p == Polarity::Affirmative ? "affirmative" : "negated";
}

inline Polarity polarity_from_token(const std::string& s) {
    if (s == "affirmative") return Polarity::Affirmative;
    if (s == "negated") return Polarity::Negated;
    throw FormatError("unknown polarity '" + s + "'");
}

inline std::string category_token(PolicyCategory c) {
    return c == PolicyCategory::Contested ? "contested" : "consensus";
}

inline PolicyCategory category_from_token(const std::string& s) {
    if (s == "contested") return PolicyCategory::Contested;
    if (s == "consensus") return PolicyCategory::Consensus;
    throw FormatError("unknown policy category '" + s + "'");
}

struct Policy {
    std::string id;
    std::string statement;
    std::string topic;
    std::string pair_id;
    Polarity polarity = Polarity::Affirmative;
    PolicyCategory category = PolicyCategory::Contested;
    std::optional<Vote> expert_stance;
    std::map<std::string, Vote> model_defaults;

    bool operator==(const Policy&) const = default;
};

inline void to_json(json& j, const Policy& p) {
    j = json{{"id", p.id},
             {"statement", p.statement},
             {"topic", p.topic},
             {"pair_id", p.pair_id},
             {"polarity", polarity_token(p.polarity)},
             {"category", category_token(p.category)}};
    if (p.expert_stance) j["expert_stance"] = to_string(*p.expert_stance);
    json defaults = json::object();
    for (const auto& [model, vote] : p.model_defaults) defaults[model] = to_string(vote);
    j["model_defaults"] = defaults;
}

inline void from_json(const json& j, Policy& p) {
    j.at("id").get_to(p.id);
    j.at("statement").get_to(p.statement);
    j.at("topic").get_to(p.topic);
    j.at("pair_id").get_to(p.pair_id);
    p.polarity = polarity_from_token(j.at("polarity").get<std::string>());
    p.category = category_from_token(j.at("category").get<std::string>());
    if (j.contains("expert_stance") && !j.at("expert_stance").is_null())
        p.expert_stance = vote_from_json_string(j.at("expert_stance").get<std::string>(),
                                                "policy expert_stance");
    else
        p.expert_stance.reset();
    p.model_defaults.clear();
    for (const auto& [model, vote] : j.at("model_defaults").items())
        p.model_defaults[model] = vote_from_json_string(vote.get<std::string>(),
                                                        "policy model_defaults");
}

// ---------------------------------------------------------------------------
// Utility schedules

inline constexpr std::size_t kPeriodCount = 6;

// Labels for the six 5-year windows, ordered by start year.
inline const std::array<std::string, kPeriodCount>& period_labels() {
    static const std::array<std::string, kPeriodCount> labels = {
        "0-5 years", "5-10 years", "10-15 years", "15-20 years", "20-25 years", "25-30 years"};
    return labels;
}

inline bool score_in_range(double s) { return s >= 0.0 && s <= 100.0; }

// One short-term and one long-term score per vote option, each 0-100.
struct DualSchedule {
    double yes_short = 0;
    double yes_long = 0;
    double no_short = 0;
    double no_long = 0;

    bool operator==(const DualSchedule&) const = default;
};

// Six consecutive 5-year period scores per vote option, index t = 0..5.
struct PeriodSchedule {
    std::array<double, kPeriodCount> yes_scores{};
    std::array<double, kPeriodCount> no_scores{};

    bool operator==(const PeriodSchedule&) const = default;
};

using UtilitySchedule = std::variant<DualSchedule, PeriodSchedule>;

inline std::vector<std::string> schedule_problems(const UtilitySchedule& s) {
    std::vector<std::string> problems;
    auto check = [&](double v, const char* name) {
        if (!score_in_range(v)) problems.push_back(std::string(name) + " outside [0, 100]");
    };
    if (const auto* d = std::get_if<DualSchedule>(&s)) {
        check(d->yes_short, "yes_short");
        check(d->yes_long, "yes_long");
        check(d->no_short, "no_short");
        check(d->no_long, "no_long");
    } else {
        const auto& p = std::get<PeriodSchedule>(s);
        for (std::size_t t = 0; t < kPeriodCount; ++t) {
            check(p.yes_scores[t], "yes period score");
            check(p.no_scores[t], "no period score");
        }
    }
    return problems;
}

inline void to_json(json& j, const UtilitySchedule& s) {
    if (const auto* d = std::get_if<DualSchedule>(&s)) {
        j = json{{"form", "dual"},
                 {"yes_short", d->yes_short},
                 {"yes_long", d->yes_long},
                 {"no_short", d->no_short},
                 {"no_long", d->no_long}};
    } else {
        const auto& p = std::get<PeriodSchedule>(s);
        j = json{{"form", "periods"}, {"yes_periods", p.yes_scores}, {"no_periods", p.no_scores}};
    }
}

inline void from_json(const json& j, UtilitySchedule& s) {
    const auto form = j.at("form").get<std::string>();
    if (form == "dual") {
        DualSchedule d;
        j.at("yes_short").get_to(d.yes_short);
        j.at("yes_long").get_to(d.yes_long);
        j.at("no_short").get_to(d.no_short);
        j.at("no_long").get_to(d.no_long);
        s = d;
    } else if (form == "periods") {
        PeriodSchedule p;
        j.at("yes_periods").get_to(p.yes_scores);
        j.at("no_periods").get_to(p.no_scores);
        s = p;
    } else {
        throw FormatError("unknown utility schedule form '" + form + "'");
    }
}

// ---------------------------------------------------------------------------
// Vote records

enum class RecordStatus { Ok, ParseFailed, ProviderFailed };

inline std::string status_token(RecordStatus s) {
    switch (s) {
        case RecordStatus::Ok: return "ok";
        case RecordStatus::ParseFailed: return "parse_failed";
        case RecordStatus::ProviderFailed: return "provider_failed";
    }
    throw DomainError("unknown record status");
}

inline RecordStatus status_from_token(const std::string& s) {
    if (s == "ok") return RecordStatus::Ok;
    if (s == "parse_failed") return RecordStatus::ParseFailed;
    if (s == "provider_failed") return RecordStatus::ProviderFailed;
    throw FormatError("unknown record status '" + s + "'");
}

struct VoteRecord {
    std::optional<std::string> profile_id;  // absent for the Default condition
    std::string policy_id;
    std::string model;
    Condition condition = Condition::Default;
    std::string variant_id;
    std::optional<Vote> vote;
    std::optional<UtilitySchedule> utilities;
    std::string rationale;
    std::string raw_response;
    RecordStatus status = RecordStatus::Ok;
    std::string timestamp;

    bool operator==(const VoteRecord&) const = default;
};

// Cross-field invariants; empty result means the record is well-formed.
inline std::vector<std::string> vote_record_problems(const VoteRecord& r) {
    std::vector<std::string> problems;
    const bool binary = expected_for(r.condition) == Expected::BinaryVote;
    const bool ok = r.status == RecordStatus::Ok;
    if (r.vote.has_value() != (ok && binary))
        problems.push_back("vote must be present iff status is ok and condition is binary");
    if (r.utilities.has_value() != (ok && !binary))
        problems.push_back("utilities must be present iff status is ok and condition is trustee");
    if (r.condition == Condition::Default && r.profile_id.has_value())
        problems.push_back("default-condition record must not carry a profile_id");
    if (r.condition != Condition::Default && !r.profile_id.has_value())
        problems.push_back("non-default record must carry a profile_id");
    if (r.status != RecordStatus::ProviderFailed && r.raw_response.empty())
        problems.push_back("raw_response must be retained unless the provider failed");
    if (r.utilities) {
        const bool dual_form = std::holds_alternative<DualSchedule>(*r.utilities);
        if (dual_form != (r.condition == Condition::TrusteeDual))
            problems.push_back("utility schedule form does not match the condition");
        for (auto& p : schedule_problems(*r.utilities)) problems.push_back(p);
    }
    return problems;
}

inline void to_json(json& j, const VoteRecord& r) {
    j = json{{"policy_id", r.policy_id},
             {"model", r.model},
             {"condition", condition_token(r.condition)},
             {"variant_id", r.variant_id},
             {"rationale", r.rationale},
             {"raw_response", r.raw_response},
             {"status", status_token(r.status)},
             {"timestamp", r.timestamp}};
    if (r.profile_id) j["profile_id"] = *r.profile_id;
    if (r.vote) j["vote"] = to_string(*r.vote);
    if (r.utilities) j["utilities"] = *r.utilities;
}

inline void from_json(const json& j, VoteRecord& r) {
    j.at("policy_id").get_to(r.policy_id);
    j.at("model").get_to(r.model);
    r.condition = condition_from_token(j.at("condition").get<std::string>());
    j.at("variant_id").get_to(r.variant_id);
    j.at("rationale").get_to(r.rationale);
    j.at("raw_response").get_to(r.raw_response);
    r.status = status_from_token(j.at("status").get<std::string>());
    j.at("timestamp").get_to(r.timestamp);
    if (j.contains("profile_id") && !j.at("profile_id").is_null())
        r.profile_id = j.at("profile_id").get<std::string>();
    else
        r.profile_id.reset();
    if (j.contains("vote") && !j.at("vote").is_null())
        r.vote = vote_from_json_string(j.at("vote").get<std::string>(), "vote record");
    else
        r.vote.reset();
    if (j.contains("utilities") && !j.at("utilities").is_null())
        r.utilities = j.at("utilities").get<UtilitySchedule>();
    else
        r.utilities.reset();
}

}  // namespace civicsim
