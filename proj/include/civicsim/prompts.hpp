#pragma once

// Prompt batteries and structured-response parsing.
//
// Batteries live on disk as prompts/<condition>/<variant_id>.txt template
// files plus one return.txt per condition holding the return-schema
// instruction appended to every rendered prompt of that condition. Templates
// use the literal placeholders {bio} and {policy}.
//
// Parsers are lenient about surrounding prose and code fences but strict
// about schema fields and score ranges; a response either yields a complete
// typed value or fails as a whole.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "civicsim/detail/sha256.hpp"
#include "civicsim/domain.hpp"

namespace civicsim {

struct PromptVariant {
    std::string variant_id;
    Condition condition = Condition::Default;
    std::string template_text;
};

struct RenderedPrompt {
    std::string text;
    Condition condition = Condition::Default;
    std::string variant_id;
    Expected expects = Expected::BinaryVote;
};

// Canonical battery shape: 1 default, 5 delegate, 3 dual, 3 periods.
inline const std::map<Condition, std::size_t>& canonical_battery_sizes() {
    static const std::map<Condition, std::size_t> sizes = {
        {Condition::Default, 1},
        {Condition::Delegate, 5},
        {Condition::TrusteeDual, 3},
        {Condition::TrusteePeriods, 3}};
    return sizes;
}

class PromptBattery {
public:
    const std::vector<PromptVariant>& variants(Condition c) const {
        auto it = variants_.find(c);
        if (it == variants_.end())
            throw ConfigError("battery has no variants for condition " + condition_token(c));
        return it->second;
    }

    const PromptVariant& variant(Condition c, const std::string& variant_id) const {
        for (const auto& v : variants(c))
            if (v.variant_id == variant_id) return v;
        throw ConfigError("unknown variant '" + variant_id + "' for condition " +
                          condition_token(c));
    }

    const std::string& return_schema(Condition c) const {
        auto it = return_schema_.find(c);
        if (it == return_schema_.end())
            throw ConfigError("battery has no return schema for condition " + condition_token(c));
        return it->second;
    }

    bool matches_canonical_sizes() const {
        for (const auto& [condition, size] : canonical_battery_sizes()) {
            auto it = variants_.find(condition);
            if (it == variants_.end() || it->second.size() != size) return false;
        }
        return true;
    }

    // Stable digest over every template and return schema, for run manifests.
    std::string digest() const {
        std::string blob;
        for (const auto& [condition, variants] : variants_) {
            for (const auto& v : variants) {
                blob += condition_token(condition);
                blob += '/';
                blob += v.variant_id;
                blob += '\n';
                blob += v.template_text;
                blob += '\n';
            }
        }
        for (const auto& [condition, schema] : return_schema_) {
            blob += condition_token(condition);
            blob += "/return\n";
            blob += schema;
            blob += '\n';
        }
        return detail::sha256_hex(blob);
    }

    void add_variant(PromptVariant v, std::string return_schema_text) {
        return_schema_[v.condition] = std::move(return_schema_text);
        variants_[v.condition].push_back(std::move(v));
    }

    static PromptBattery load(const std::filesystem::path& dir);

private:
    std::map<Condition, std::vector<PromptVariant>> variants_;
    std::map<Condition, std::string> return_schema_;
};

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace detail

inline PromptBattery PromptBattery::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("prompt battery directory missing: " + dir.string());
    PromptBattery battery;
    for (Condition condition : all_conditions()) {
        const fs::path cond_dir = dir / condition_token(condition);
        if (!fs::is_directory(cond_dir))
            throw ConfigError("battery is missing condition directory " + cond_dir.string());
        const fs::path return_path = cond_dir / "return.txt";
        if (!fs::exists(return_path))
            throw ConfigError("battery is missing " + return_path.string());
        const std::string schema = detail::strip_trailing_newlines(detail::read_text_file(return_path));

        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cond_dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            if (entry.path().filename() == "return.txt") continue;
            files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw ConfigError("battery has no variants under " + cond_dir.string());
        for (const auto& file : files) {
            PromptVariant v;
            v.variant_id = file.stem().string();
            v.condition = condition;
            v.template_text = detail::strip_trailing_newlines(detail::read_text_file(file));
            battery.add_variant(std::move(v), schema);
        }
    }
    return battery;
}

// ---------------------------------------------------------------------------
// Rendering

inline RenderedPrompt render(const PromptVariant& variant, const std::optional<std::string>& bio,
                             const Policy& policy, const std::string& return_schema) {
    if (variant.condition == Condition::Default && bio.has_value())
        throw RenderError("the default-vote prompt takes no voter profile");
    if (variant.condition != Condition::Default && !bio.has_value())
        throw RenderError("condition " + condition_token(variant.condition) +
                          " requires a voter biography");

    std::string text = variant.template_text;
    auto substitute = [&text](const std::string& placeholder, const std::string& value) {
        for (auto pos = text.find(placeholder); pos != std::string::npos;
             pos = text.find(placeholder, pos + value.size()))
            text.replace(pos, placeholder.size(), value);
    };
    if (bio) substitute("{bio}", *bio);
    substitute("{policy}", policy.statement);
    if (text.find("{bio}") != std::string::npos || text.find("{policy}") != std::string::npos)
        throw RenderError("placeholder left unsubstituted in variant '" + variant.variant_id + "'");

    RenderedPrompt rendered;
    rendered.text = text + "\n\n" + return_schema;
    rendered.condition = variant.condition;
    rendered.variant_id = variant.variant_id;
    rendered.expects = expected_for(variant.condition);
    return rendered;
}

inline RenderedPrompt render(const PromptBattery& battery, const PromptVariant& variant,
                             const std::optional<std::string>& bio, const Policy& policy) {
    return render(variant, bio, policy, battery.return_schema(variant.condition));
}

// ---------------------------------------------------------------------------
// Response parsing

namespace detail {

// Balanced top-level JSON value starting at `start` ('{' or '['); returns the
// position one past the closing bracket, or npos if unbalanced.
inline std::size_t balanced_end(const std::string& text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
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
        else if (c == '{' || c == '[')
            ++depth;
        else if (c == '}' || c == ']') {
            --depth;
            if (depth == 0) return i + 1;
            if (depth < 0) return std::string::npos;
        }
    }
    return std::string::npos;
}

// Yields every parseable JSON object embedded in free text, outermost first.
// Candidates that fail the caller's schema check are skipped, which lets a
// nested object be found on a later iteration.
template <typename Fn>
void for_each_json_object(const std::string& raw, Fn&& fn) {
    for (std::size_t pos = raw.find('{'); pos != std::string::npos; pos = raw.find('{', pos + 1)) {
        const std::size_t end = balanced_end(raw, pos);
        if (end == std::string::npos) continue;
        json parsed = json::parse(raw.substr(pos, end - pos), nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) continue;
        if (fn(parsed, raw.substr(pos, end - pos))) return;
    }
}

// Detects repeated keys inside any single object of a JSON text; the DOM
// parser silently keeps the last value, so this runs on the raw candidate.
inline bool has_duplicate_keys(const std::string& text) {
    std::vector<std::set<std::string>> stack;
    bool duplicate = false;
    json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::object_start) {
            stack.emplace_back();
        } else if (event == json::parse_event_t::object_end) {
            if (!stack.empty()) stack.pop_back();
        } else if (event == json::parse_event_t::key) {
            if (!stack.empty() && !stack.back().insert(parsed.get<std::string>()).second)
                duplicate = true;
        }
        return true;
    };
    auto parsed = json::parse(text, cb, false);
    (void)parsed;
    return duplicate;
}

inline std::optional<double> score_field(const json& obj, const char* key) {
    if (!obj.contains(key) || !obj.at(key).is_number()) return std::nullopt;
    const double v = obj.at(key).get<double>();
    if (!score_in_range(v)) return std::nullopt;
    return v;
}

}  // namespace detail

struct ParsedBinary {
    Vote vote = Vote::No;
    std::string reason;
};

// First embedded object carrying both 'reason' and 'vote' wins; a vote value
// outside Yes/No fails the whole response rather than falling through.
inline std::optional<ParsedBinary> parse_binary(const std::string& raw) {
    std::optional<ParsedBinary> result;
    bool rejected = false;
    detail::for_each_json_object(raw, [&](const json& obj, const std::string&) {
        if (!obj.contains("reason") || !obj.contains("vote")) return false;
        if (!obj.at("vote").is_string()) {
            rejected = true;
            return true;
        }
        auto vote = vote_from_token(obj.at("vote").get<std::string>());
        if (!vote) {
            rejected = true;
            return true;
        }
        ParsedBinary parsed;
        parsed.vote = *vote;
        parsed.reason = obj.at("reason").is_string() ? obj.at("reason").get<std::string>()
                                                     : obj.at("reason").dump();
        result = parsed;
        return true;
    });
    if (rejected) return std::nullopt;
    return result;
}

inline std::optional<DualSchedule> parse_dual(const std::string& raw) {
    std::optional<DualSchedule> result;
    bool rejected = false;
    detail::for_each_json_object(raw, [&](const json& obj, const std::string&) {
        if (!obj.contains("yes_vote") || !obj.contains("no_vote")) return false;
        const auto& yes = obj.at("yes_vote");
        const auto& no = obj.at("no_vote");
        if (!yes.is_object() || !no.is_object()) {
            rejected = true;
            return true;
        }
        auto ys = detail::score_field(yes, "short_util");
        auto yl = detail::score_field(yes, "long_util");
        auto ns = detail::score_field(no, "short_util");
        auto nl = detail::score_field(no, "long_util");
        if (!ys || !yl || !ns || !nl) {
            rejected = true;
            return true;
        }
        result = DualSchedule{*ys, *yl, *ns, *nl};
        return true;
    });
    if (rejected) return std::nullopt;
    return result;
}

inline std::optional<PeriodSchedule> parse_periods(const std::string& raw) {
    std::optional<PeriodSchedule> result;
    bool rejected = false;
    detail::for_each_json_object(raw, [&](const json& obj, const std::string& candidate) {
        if (!obj.contains("yes") || !obj.contains("no")) return false;
        if (detail::has_duplicate_keys(candidate)) {
            rejected = true;
            return true;
        }
        auto extract = [&](const json& side, std::array<double, kPeriodCount>& out) {
            if (!side.is_object() || side.size() != kPeriodCount) return false;
            for (std::size_t t = 0; t < kPeriodCount; ++t) {
                const auto& label = period_labels()[t];
                if (!side.contains(label) || !side.at(label).is_object()) return false;
                auto score = detail::score_field(side.at(label), "score");
                if (!score) return false;
                out[t] = *score;
            }
            return true;
        };
        PeriodSchedule schedule;
        if (!extract(obj.at("yes"), schedule.yes_scores) ||
            !extract(obj.at("no"), schedule.no_scores)) {
            rejected = true;
            return true;
        }
        result = schedule;
        return true;
    });
    if (rejected) return std::nullopt;
    return result;
}

}  // namespace civicsim
