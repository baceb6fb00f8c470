#pragma once

// Experiment orchestration: enumerate every (model x condition x variant x
// profile x policy) cell of a run plan, dispatch prompts, parse responses and
// persist one VoteRecord per cell to an append-only JSONL log.
//
// Records are flushed in plan order regardless of worker completion order,
// so a run against deterministic providers produces a byte-identical log
// every time and an interrupted run leaves a clean prefix. Resuming skips
// cells whose records already exist; per-cell provider or parse failures are
// recorded and never abort the run.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "civicsim/corpus.hpp"
#include "civicsim/domain.hpp"
#include "civicsim/prompts.hpp"
#include "civicsim/providers.hpp"

namespace civicsim {

struct RunPlan {
    std::string run_id;
    std::vector<std::string> models;  // provider names acting as model ids
    std::vector<Condition> conditions;
    std::optional<std::vector<std::string>> variant_filter;
    std::string profiles_path;
    std::string policies_path;
    std::string prompts_dir;
    std::vector<ProviderHandle> providers;
    int parallelism = 4;
    bool resume = false;
    std::string runs_dir = "runs";
    std::string cache_dir = "cache";
    std::optional<std::size_t> max_cells;  // optional truncation, used for smoke runs
};

inline void to_json(json& j, const RunPlan& p) {
    json conditions = json::array();
    for (auto c : p.conditions) conditions.push_back(condition_token(c));
    j = json{{"run_id", p.run_id},
             {"models", p.models},
             {"conditions", conditions},
             {"profiles", p.profiles_path},
             {"policies", p.policies_path},
             {"prompts_dir", p.prompts_dir},
             {"providers", p.providers},
             {"parallelism", p.parallelism},
             {"resume", p.resume},
             {"runs_dir", p.runs_dir},
             {"cache_dir", p.cache_dir}};
    if (p.variant_filter) j["variant_filter"] = *p.variant_filter;
    if (p.max_cells) j["max_cells"] = *p.max_cells;
}

inline void from_json(const json& j, RunPlan& p) {
    j.at("run_id").get_to(p.run_id);
    j.at("models").get_to(p.models);
    p.conditions.clear();
    for (const auto& token : j.at("conditions"))
        p.conditions.push_back(condition_from_token(token.get<std::string>()));
    j.at("profiles").get_to(p.profiles_path);
    j.at("policies").get_to(p.policies_path);
    j.at("prompts_dir").get_to(p.prompts_dir);
    j.at("providers").get_to(p.providers);
    p.parallelism = j.value("parallelism", 4);
    p.resume = j.value("resume", false);
    p.runs_dir = j.value("runs_dir", "runs");
    p.cache_dir = j.value("cache_dir", "cache");
    if (j.contains("variant_filter") && !j.at("variant_filter").is_null())
        p.variant_filter = j.at("variant_filter").get<std::vector<std::string>>();
    else
        p.variant_filter.reset();
    if (j.contains("max_cells") && !j.at("max_cells").is_null())
        p.max_cells = j.at("max_cells").get<std::size_t>();
    else
        p.max_cells.reset();
}

inline RunPlan load_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open plan file " + path.string());
    try {
        return json::parse(in).get<RunPlan>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

struct RunCounts {
    std::size_t planned = 0;
    std::size_t completed = 0;
    std::size_t parse_failed = 0;
    std::size_t provider_failed = 0;

    std::size_t total_recorded() const { return completed + parse_failed + provider_failed; }
};

struct RunManifest {
    std::string run_id;
    json plan_echo;
    std::string policies_sha256;
    std::string profiles_sha256;
    std::string prompts_digest;
    RunCounts counts;
    std::string started;
    std::string finished;
    bool complete = false;
};

inline void to_json(json& j, const RunManifest& m) {
    j = json{{"run_id", m.run_id},
             {"plan", m.plan_echo},
             {"policies_sha256", m.policies_sha256},
             {"profiles_sha256", m.profiles_sha256},
             {"prompts_digest", m.prompts_digest},
             {"counts",
              {{"planned", m.counts.planned},
               {"completed", m.counts.completed},
               {"parse_failed", m.counts.parse_failed},
               {"provider_failed", m.counts.provider_failed}}},
             {"started", m.started},
             {"finished", m.finished},
             {"complete", m.complete}};
}

inline void from_json(const json& j, RunManifest& m) {
    j.at("run_id").get_to(m.run_id);
    m.plan_echo = j.at("plan");
    j.at("policies_sha256").get_to(m.policies_sha256);
    j.at("profiles_sha256").get_to(m.profiles_sha256);
    j.at("prompts_digest").get_to(m.prompts_digest);
    const auto& counts = j.at("counts");
    counts.at("planned").get_to(m.counts.planned);
    counts.at("completed").get_to(m.counts.completed);
    counts.at("parse_failed").get_to(m.counts.parse_failed);
    counts.at("provider_failed").get_to(m.counts.provider_failed);
    j.at("started").get_to(m.started);
    j.at("finished").get_to(m.finished);
    j.at("complete").get_to(m.complete);
}

// The resume/dedup identity of a cell.
struct Cell {
    std::string model;
    Condition condition = Condition::Default;
    std::string variant_id;
    std::optional<std::string> profile_id;  // absent for Default
    std::string policy_id;

    std::string key() const {
        return model + '\x1f' + condition_token(condition) + '\x1f' + variant_id + '\x1f' +
               profile_id.value_or("") + '\x1f' + policy_id;
    }
};

inline std::string record_cell_key(const VoteRecord& r) {
    return Cell{r.model, r.condition, r.variant_id, r.profile_id, r.policy_id}.key();
}

namespace detail {

inline std::vector<const PromptVariant*> filtered_variants(const PromptBattery& battery,
                                                           Condition condition,
                                                           const RunPlan& plan) {
    std::vector<const PromptVariant*> out;
    for (const auto& v : battery.variants(condition)) {
        if (plan.variant_filter &&
            std::find(plan.variant_filter->begin(), plan.variant_filter->end(), v.variant_id) ==
                plan.variant_filter->end())
            continue;
        out.push_back(&v);
    }
    return out;
}

}  // namespace detail

// Deterministic, duplicate-free enumeration: models in plan order, then
// conditions, then battery variants, then profiles, then policies. Default
// cells run once per model x policy with no profile.
inline std::vector<Cell> plan_cells(const RunPlan& plan, const PromptBattery& battery,
                                    const std::vector<VoterProfile>& profiles,
                                    const std::vector<Policy>& policies) {
    if (plan.variant_filter) {
        for (const auto& wanted : *plan.variant_filter) {
            bool found = false;
            for (Condition c : plan.conditions)
                for (const auto& v : battery.variants(c))
                    if (v.variant_id == wanted) found = true;
            if (!found)
                throw ConfigError("variant filter names unknown variant '" + wanted + "'");
        }
    }
    std::vector<Cell> cells;
    for (const auto& model : plan.models) {
        for (Condition condition : plan.conditions) {
            const auto variants = detail::filtered_variants(battery, condition, plan);
            if (condition == Condition::Default) {
                for (const auto* variant : variants)
                    for (const auto& policy : policies)
                        cells.push_back({model, condition, variant->variant_id, std::nullopt,
                                         policy.id});
                continue;
            }
            for (const auto* variant : variants)
                for (const auto& profile : profiles)
                    for (const auto& policy : policies)
                        cells.push_back({model, condition, variant->variant_id, profile.id,
                                         policy.id});
        }
    }
    return cells;
}

inline std::vector<Cell> plan_cells(const RunPlan& plan) {
    const auto battery = PromptBattery::load(plan.prompts_dir);
    const auto profiles = load_profiles(plan.profiles_path);
    const auto policies = load_policies(plan.policies_path);
    return plan_cells(plan, battery, profiles, policies);
}

// ---------------------------------------------------------------------------
// Record log

inline std::filesystem::path run_dir(const RunPlan& plan) {
    return std::filesystem::path(plan.runs_dir) / plan.run_id;
}

inline std::filesystem::path records_path(const RunPlan& plan) {
    return run_dir(plan) / "records.jsonl";
}

inline std::filesystem::path manifest_path(const RunPlan& plan) {
    return run_dir(plan) / "manifest.json";
}

inline std::vector<VoteRecord> read_vote_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open record log " + path.string());
    std::vector<VoteRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            records.push_back(json::parse(line).get<VoteRecord>());
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path.string());
    try {
        return json::parse(in).get<RunManifest>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Execution

using ClientFactory = std::function<std::unique_ptr<ProviderClient>(const ProviderHandle&,
                                                                    const ResponseCache*)>;

struct ExecuteOptions {
    // Builds a client per provider; the default handles mocks only. Binaries
    // that talk to real backends pass make_client from civicsim/http.hpp.
    ClientFactory client_factory;
    std::function<std::string()> clock;  // record timestamps; defaulted below
    std::function<void(const std::string&)> info;  // progress lines
    std::size_t progress_every = 1000;
};

namespace detail {

inline std::string file_sha256(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(content);
}

inline bool filesystem_safe(const std::string& id) {
    if (id.empty()) return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            return false;
    return id != "." && id != "..";
}

// Reads existing records for resume; a torn trailing line (interrupted
// writer) is dropped by truncating the file back to the last good newline.
inline std::vector<VoteRecord> read_records_for_resume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::vector<VoteRecord> records;
    std::string line;
    std::uint64_t good_end = 0;
    std::size_t line_no = 0;
    bool truncated = false;
    while (std::getline(in, line)) {
        ++line_no;
        const bool has_newline = !in.eof();
        if (trim(line).empty()) {
            if (has_newline) good_end += line.size() + 1;
            continue;
        }
        try {
            records.push_back(json::parse(line).get<VoteRecord>());
        } catch (const json::exception& e) {
            if (!has_newline) {
                truncated = true;
                break;
            }
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        good_end += line.size() + (has_newline ? 1 : 0);
    }
    in.close();
    if (truncated) std::filesystem::resize_file(path, good_end);
    return records;
}

}  // namespace detail

class Runner {
public:
    explicit Runner(RunPlan plan, ExecuteOptions options = {})
        : plan_(std::move(plan)), options_(std::move(options)) {
        if (!detail::filesystem_safe(plan_.run_id))
            throw ConfigError("run_id '" + plan_.run_id + "' is not filesystem-safe");
        if (plan_.parallelism < 1) throw ConfigError("parallelism must be >= 1");
        for (const auto& model : plan_.models) provider_for(model);  // validates references
        if (!options_.client_factory) {
            options_.client_factory = [](const ProviderHandle& handle, const ResponseCache* cache) {
                if (handle.request_shape != RequestShape::Mock)
                    throw ConfigError("provider '" + handle.name +
                                      "' needs an HTTP transport; use the civicsim CLI");
                return make_mock_client(handle, cache);
            };
        }
        if (!options_.clock) {
            // Mock-only plans get a pinned timestamp so repeated runs are
            // byte-identical; live plans use wall-clock time.
            bool all_mock = true;
            for (const auto& model : plan_.models)
                if (provider_for(model).request_shape != RequestShape::Mock) all_mock = false;
            if (all_mock)
                options_.clock = [] { return std::string("1970-01-01T00:00:00Z"); };
            else
                options_.clock = [] { return detail::now_utc_iso8601(); };
        }
    }

    RunManifest execute() {
        const auto battery = PromptBattery::load(plan_.prompts_dir);
        const auto profiles = load_profiles(plan_.profiles_path);
        const auto policies = load_policies(plan_.policies_path);
        const auto cells = plan_cells(plan_, battery, profiles, policies);

        std::map<std::string, const VoterProfile*> profile_index;
        for (const auto& p : profiles) profile_index[p.id] = &p;
        std::map<std::string, const Policy*> policy_index;
        for (const auto& p : policies) policy_index[p.id] = &p;

        namespace fs = std::filesystem;
        fs::create_directories(run_dir(plan_));

        std::set<std::string> existing;
        if (fs::exists(records_path(plan_))) {
            if (!plan_.resume)
                throw ConfigError("run '" + plan_.run_id +
                                  "' already has records; pass resume to continue it");
            for (const auto& record : detail::read_records_for_resume(records_path(plan_)))
                existing.insert(record_cell_key(record));
        }

        RunManifest manifest;
        manifest.run_id = plan_.run_id;
        manifest.plan_echo = json(plan_);
        manifest.policies_sha256 = detail::file_sha256(plan_.policies_path);
        manifest.profiles_sha256 = detail::file_sha256(plan_.profiles_path);
        manifest.prompts_digest = battery.digest();
        manifest.counts.planned = cells.size();
        manifest.started = detail::now_utc_iso8601();
        manifest.complete = false;
        write_manifest(manifest);

        std::optional<ResponseCache> cache;
        if (!plan_.cache_dir.empty()) cache.emplace(plan_.cache_dir);
        std::map<std::string, std::unique_ptr<ProviderClient>> clients;
        for (const auto& model : plan_.models)
            clients[model] =
                options_.client_factory(provider_for(model), cache ? &*cache : nullptr);

        const std::size_t limit = std::min<std::size_t>(
            cells.size(), plan_.max_cells.value_or(cells.size()));

        // Slot states: 0 pending, 1 done (write record), 2 skip (no write).
        std::vector<VoteRecord> slots(limit);
        std::vector<int> state(limit, 0);
        std::ofstream log(records_path(plan_), std::ios::app | std::ios::binary);
        if (!log) throw Error("cannot open record log for append");

        std::mutex flush_mutex;
        std::size_t next_flush = 0;
        std::atomic<std::size_t> cursor{0};
        std::atomic<std::size_t> done_count{0};
        std::atomic<bool> fatal{false};
        std::string fatal_message;
        std::mutex fatal_mutex;

        auto flush_ready = [&](std::size_t index, VoteRecord record, bool skip) {
            std::lock_guard lock(flush_mutex);
            slots[index] = std::move(record);
            state[index] = skip ? 2 : 1;
            while (next_flush < limit && state[next_flush] != 0) {
                if (state[next_flush] == 1) {
                    log << json(slots[next_flush]).dump() << '\n';
                    log.flush();
                    if (!log) throw Error("write to record log failed");
                    slots[next_flush] = VoteRecord{};  // release memory early
                }
                ++next_flush;
            }
        };

        auto worker = [&] {
            while (!fatal.load()) {
                const std::size_t index = cursor.fetch_add(1);
                if (index >= limit) return;
                const Cell& cell = cells[index];
                try {
                    if (existing.count(cell.key())) {
                        flush_ready(index, VoteRecord{}, true);
                    } else {
                        flush_ready(index,
                                    run_cell(cell, battery, profile_index, policy_index,
                                             *clients.at(cell.model)),
                                    false);
                    }
                } catch (const std::exception& e) {
                    std::lock_guard lock(fatal_mutex);
                    fatal = true;
                    fatal_message = e.what();
                    return;
                }
                const auto done = done_count.fetch_add(1) + 1;
                if (options_.info && options_.progress_every > 0 &&
                    done % options_.progress_every == 0)
                    options_.info("processed " + std::to_string(done) + " / " +
                                  std::to_string(limit) + " cells");
            }
        };

        std::vector<std::thread> threads;
        const int thread_count = std::min<int>(plan_.parallelism, static_cast<int>(limit) + 1);
        for (int i = 0; i < thread_count; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        log.close();

        if (fatal.load()) {
            manifest.counts = recount();
            manifest.finished = detail::now_utc_iso8601();
            manifest.complete = false;
            write_manifest(manifest);
            throw Error("run aborted: " + fatal_message);
        }

        manifest.counts = recount();
        manifest.counts.planned = cells.size();
        manifest.finished = detail::now_utc_iso8601();
        manifest.complete = manifest.counts.total_recorded() == cells.size();
        write_manifest(manifest);
        return manifest;
    }

private:
    const ProviderHandle& provider_for(const std::string& model) const {
        for (const auto& handle : plan_.providers)
            if (handle.name == model) return handle;
        throw ConfigError("plan references model '" + model + "' with no provider entry");
    }

    VoteRecord run_cell(const Cell& cell, const PromptBattery& battery,
                        const std::map<std::string, const VoterProfile*>& profile_index,
                        const std::map<std::string, const Policy*>& policy_index,
                        ProviderClient& client) const {
        const auto& variant = battery.variant(cell.condition, cell.variant_id);
        auto policy_it = policy_index.find(cell.policy_id);
        if (policy_it == policy_index.end())
            throw Error("cell references unknown policy '" + cell.policy_id + "'");
        std::optional<std::string> bio;
        if (cell.profile_id) {
            auto profile_it = profile_index.find(*cell.profile_id);
            if (profile_it == profile_index.end())
                throw Error("cell references unknown profile '" + *cell.profile_id + "'");
            bio = profile_it->second->biography;
        }
        const RenderedPrompt prompt = render(battery, variant, bio, *policy_it->second);

        VoteRecord record;
        record.profile_id = cell.profile_id;
        record.policy_id = cell.policy_id;
        record.model = cell.model;
        record.condition = cell.condition;
        record.variant_id = cell.variant_id;
        record.timestamp = options_.clock();

        std::string raw;
        try {
            raw = client.complete(prompt.text);
        } catch (const ProviderError& e) {
            record.status = RecordStatus::ProviderFailed;
            record.rationale = e.what();
            return record;
        }

        if (apply_parse(prompt.expects, raw, record)) {
            record.raw_response = raw;
            record.status = RecordStatus::Ok;
            return record;
        }

        // One retry with a stricter instruction, then the record is final.
        try {
            const std::string retry_raw =
                client.complete(prompt.text + "\n\nReturn only the JSON object.");
            raw = retry_raw;
        } catch (const ProviderError&) {
            // keep the first response
        }
        record.raw_response = raw;
        record.status =
            apply_parse(prompt.expects, raw, record) ? RecordStatus::Ok : RecordStatus::ParseFailed;
        return record;
    }

    static bool apply_parse(Expected expects, const std::string& raw, VoteRecord& record) {
        switch (expects) {
            case Expected::BinaryVote: {
                auto parsed = parse_binary(raw);
                if (!parsed) return false;
                record.vote = parsed->vote;
                record.rationale = parsed->reason;
                return true;
            }
            case Expected::DualSchedule: {
                auto parsed = parse_dual(raw);
                if (!parsed) return false;
                record.utilities = UtilitySchedule(*parsed);
                return true;
            }
            case Expected::PeriodSchedule: {
                auto parsed = parse_periods(raw);
                if (!parsed) return false;
                record.utilities = UtilitySchedule(*parsed);
                return true;
            }
        }
        return false;
    }

    RunCounts recount() const {
        RunCounts counts;
        if (!std::filesystem::exists(records_path(plan_))) return counts;
        for (const auto& record : read_vote_records(records_path(plan_))) {
            switch (record.status) {
                case RecordStatus::Ok: ++counts.completed; break;
                case RecordStatus::ParseFailed: ++counts.parse_failed; break;
                case RecordStatus::ProviderFailed: ++counts.provider_failed; break;
            }
        }
        return counts;
    }

    void write_manifest(const RunManifest& manifest) const {
        detail::write_file_atomic(manifest_path(plan_), json(manifest).dump(2) + "\n");
    }

    RunPlan plan_;
    ExecuteOptions options_;
};

inline RunManifest execute(RunPlan plan, ExecuteOptions options = {}) {
    return Runner(std::move(plan), std::move(options)).execute();
}

}  // namespace civicsim
