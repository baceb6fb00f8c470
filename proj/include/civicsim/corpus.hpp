#pragma once

// Loading, validation and synthesis of the policy corpus and voter-profile
// set. File formats: policies.json is a JSON array of policy objects;
// profiles.jsonl carries one profile object per line.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "civicsim/domain.hpp"
#include "civicsim/providers.hpp"

namespace civicsim {

struct ValidationIssue {
    std::string entity_id;
    std::string rule;
    std::string message;

    bool operator==(const ValidationIssue&) const = default;
    auto operator<=>(const ValidationIssue&) const = default;
};

struct CorpusValidationReport {
    std::vector<ValidationIssue> errors;
    std::vector<ValidationIssue> warnings;

    bool accepted() const { return errors.empty(); }
};

// Pure and order-insensitive: permuting the input never changes the issue set.
inline CorpusValidationReport validate_corpus(const std::vector<Policy>& policies) {
    CorpusValidationReport report;
    auto error = [&](const std::string& id, const std::string& rule, const std::string& message) {
        report.errors.push_back({id, rule, message});
    };

    std::map<std::string, int> id_count;
    std::map<std::string, std::vector<const Policy*>> pairs;
    for (const auto& policy : policies) {
        ++id_count[policy.id];
        pairs[policy.pair_id].push_back(&policy);
        if (trim(policy.statement).empty())
            error(policy.id, "statement_nonempty", "policy statement is empty");
        const bool consensus = policy.category == PolicyCategory::Consensus;
        if (consensus && !policy.expert_stance)
            error(policy.id, "expert_stance_presence",
                  "consensus policy is missing an expert stance");
        if (!consensus && policy.expert_stance)
            error(policy.id, "expert_stance_presence",
                  "contested policy must not carry an expert stance");
    }
    for (const auto& [id, count] : id_count)
        if (count > 1) error(id, "unique_id", "policy id appears " + std::to_string(count) + " times");
    for (auto& [pair_id, members] : pairs) {
        if (members.size() != 2) {
            error(pair_id, "pair_completeness",
                  "pair has " + std::to_string(members.size()) + " member(s), expected 2");
            continue;
        }
        if (members[0]->polarity == members[1]->polarity)
            error(pair_id, "polarity_opposition", "pair members share the same polarity");
        if (members[0]->category != members[1]->category)
            report.warnings.push_back(
                {pair_id, "pair_category", "pair members have different categories"});
    }
    std::sort(report.errors.begin(), report.errors.end());
    std::sort(report.warnings.begin(), report.warnings.end());
    return report;
}

inline std::vector<Policy> load_policies(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open policies file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw FormatError(path.string() + ": top-level value must be an array");

    std::vector<Policy> policies;
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        Policy policy;
        try {
            policy = doc[i].get<Policy>();
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ": entry " + std::to_string(i) + ": " + e.what());
        }
        if (!seen_ids.insert(policy.id).second)
            throw ValidationError(path.string() + ": duplicate policy id '" + policy.id + "'");
        policies.push_back(std::move(policy));
    }

    auto report = validate_corpus(policies);
    if (!report.accepted()) {
        std::ostringstream ss;
        ss << path.string() << ": corpus validation failed:";
        for (const auto& issue : report.errors)
            ss << "\n  [" << issue.rule << "] " << issue.entity_id << ": " << issue.message;
        throw ValidationError(ss.str());
    }
    return policies;
}

inline void save_policies(const std::filesystem::path& path, const std::vector<Policy>& policies) {
    json doc = json::array();
    for (const auto& policy : policies) doc.push_back(policy);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

inline std::vector<VoterProfile> load_profiles(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open profiles file " + path.string());
    std::vector<VoterProfile> profiles;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string context = path.string() + ":" + std::to_string(line_no);
        VoterProfile profile;
        try {
            profile = json::parse(line).get<VoterProfile>();
        } catch (const json::exception& e) {
            throw FormatError(context + ": " + e.what());
        }
        if (trim(profile.biography).empty())
            throw FormatError(context + ": profile biography is empty");
        auto problems = demographics_problems(profile.demographics);
        if (!problems.empty())
            throw FormatError(context + ": invalid demographics: " + problems.front());
        if (!seen_ids.insert(profile.id).second)
            throw ValidationError(context + ": duplicate profile id '" + profile.id + "'");
        profiles.push_back(std::move(profile));
    }
    return profiles;
}

inline void save_profiles(const std::filesystem::path& path,
                          const std::vector<VoterProfile>& profiles) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& profile : profiles) out << json(profile).dump() << '\n';
}

// Counts per category; categorical fields start from their full category list
// so absent categories report zero.
inline std::map<std::string, int> demographic_histogram(const std::vector<VoterProfile>& profiles,
                                                        const std::string& field) {
    auto it = demographic_categories().find(field);
    if (it == demographic_categories().end())
        throw DomainError("unknown demographics field '" + field + "'");
    std::map<std::string, int> histogram;
    for (const auto& category : it->second) histogram[category] = 0;
    for (const auto& profile : profiles)
        ++histogram[demographic_value(profile.demographics, field)];
    return histogram;
}

// ---------------------------------------------------------------------------
// Profile generation (two stages: structured demographics, then a biography
// per accepted record)

struct GenerationOutcome {
    std::vector<VoterProfile> profiles;
    std::vector<std::string> warnings;
};

class GenerationError : public Error {
public:
    GenerationError(const std::string& message, GenerationOutcome partial)
        : Error(message), partial_(std::move(partial)) {}

    const GenerationOutcome& partial() const { return partial_; }

private:
    GenerationOutcome partial_;
};

namespace detail {

inline std::string category_list_text() {
    std::ostringstream ss;
    for (const auto& field : demographic_fields()) {
        ss << "- " << field << ": ";
        if (field == "household_size") {
            ss << "an integer between 1 and 20";
        } else {
            const auto& allowed = demographic_categories().at(field);
            ss << "one of [";
            for (std::size_t i = 0; i < allowed.size(); ++i) {
                if (i) ss << ", ";
                ss << '"' << allowed[i] << '"';
            }
            ss << "]";
        }
        ss << '\n';
    }
    return ss.str();
}

inline std::string demographics_request_prompt(int count, const std::string& seed_demo_spec) {
    std::ostringstream ss;
    ss << "You are assembling a synthetic survey panel of " << seed_demo_spec << ".\n"
       << "Generate " << count << " distinct demographic records covering a broad mix of"
       << " backgrounds.\n\n"
       << "Each record must use exactly these fields and values:\n"
       << category_list_text() << '\n'
       << "Return only a JSON array of " << count << " objects, one per record.";
    return ss.str();
}

inline std::string biography_request_prompt(const Demographics& demographics) {
    std::ostringstream ss;
    ss << "Write a detailed, plausible multi-paragraph biography for an American with these"
       << " demographic characteristics:\n"
       << json(demographics).dump(2) << "\n\n"
       << "Give the person a name and describe their background, work, family and daily life"
       << " in a way consistent with every field. Return only the biography text.";
    return ss.str();
}

// First balanced JSON array embedded in free text, parsed; nullopt otherwise.
inline std::optional<json> extract_json_array(const std::string& raw);

}  // namespace detail

inline GenerationOutcome generate_profiles(ProviderClient& provider, int count,
                                           const std::string& seed_demo_spec =
                                               "adults living in the United States") {
    if (count < 1) throw DomainError("profile count must be >= 1");

    GenerationOutcome outcome;
    std::vector<Demographics> accepted;
    std::set<std::string> seen;  // replacement draws must yield new records
    // Hard cap on stage-1 record draws keeps generation terminating even when
    // the provider keeps producing invalid records.
    const int max_draws = 3 * count;
    int draws = 0;

    auto run_stage1 = [&](int want) {
        std::string raw;
        try {
            raw = provider.complete(detail::demographics_request_prompt(want, seed_demo_spec));
        } catch (const ProviderError& e) {
            throw GenerationError(std::string("demographics generation failed: ") + e.what(),
                                  outcome);
        }
        auto parsed = detail::extract_json_array(raw);
        if (!parsed) {
            outcome.warnings.push_back("demographics response carried no JSON array; dropped");
            draws += want;
            return;
        }
        for (const auto& element : *parsed) {
            if (draws >= max_draws || static_cast<int>(accepted.size()) >= count) break;
            ++draws;
            if (!seen.insert(element.dump()).second) continue;
            Demographics d;
            try {
                d = element.get<Demographics>();
            } catch (const json::exception& e) {
                outcome.warnings.push_back(std::string("malformed demographics record dropped: ") +
                                           e.what());
                continue;
            }
            auto problems = demographics_problems(d);
            if (!problems.empty()) {
                outcome.warnings.push_back("invalid demographics record dropped: " +
                                           problems.front());
                continue;
            }
            accepted.push_back(std::move(d));
        }
    };

    while (static_cast<int>(accepted.size()) < count && draws < max_draws)
        run_stage1(count - static_cast<int>(accepted.size()));

    if (static_cast<int>(accepted.size()) < count)
        outcome.warnings.push_back("only " + std::to_string(accepted.size()) + " of " +
                                   std::to_string(count) + " demographic records were valid");

    // Stage 2: one biography per accepted record, order-stable by record index.
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        std::string bio;
        try {
            bio = trim(provider.complete(detail::biography_request_prompt(accepted[i])));
        } catch (const ProviderError& e) {
            throw GenerationError(std::string("biography generation failed: ") + e.what(), outcome);
        }
        if (bio.empty()) {
            outcome.warnings.push_back("empty biography for record " + std::to_string(i) +
                                       "; profile dropped");
            continue;
        }
        VoterProfile profile;
        char id[16];
        std::snprintf(id, sizeof id, "gen-%03zu", outcome.profiles.size() + 1);
        profile.id = id;
        profile.demographics = accepted[i];
        profile.biography = bio;
        outcome.profiles.push_back(std::move(profile));
    }
    return outcome;
}

namespace detail {

inline std::optional<json> extract_json_array(const std::string& raw) {
    for (std::size_t pos = raw.find('['); pos != std::string::npos; pos = raw.find('[', pos + 1)) {
        // Reuse the balanced scanner from prompts parsing via a local copy to
        // avoid an include cycle.
        int depth = 0;
        bool in_string = false, escaped = false;
        std::size_t end = std::string::npos;
        for (std::size_t i = pos; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '[' || c == '{')
                ++depth;
            else if (c == ']' || c == '}') {
                --depth;
                if (depth == 0) {
                    end = i + 1;
                    break;
                }
                if (depth < 0) break;
            }
        }
        if (end == std::string::npos) continue;
        json parsed = json::parse(raw.substr(pos, end - pos), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_array()) return parsed;
    }
    return std::nullopt;
}

}  // namespace detail

}  // namespace civicsim
