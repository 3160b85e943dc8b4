#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dream/attack.hpp"
#include "dream/environment.hpp"
#include "dream/metrics.hpp"
#include "dream/planner.hpp"

namespace dream::cli {

enum class TargetKind { Scripted, Http };

struct CampaignConfig {
    std::string library_path;
    std::string suite_path;           // empty -> bundled suite
    plan::PlannerConfig planner;
    TargetKind target = TargetKind::Scripted;
    sandbox::HttpTargetConfig http;
    std::string defense_prompt;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "out";

    static CampaignConfig from_file(const std::string& path);
    void apply_json(const std::string& json_text);
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SeedRun {
    std::uint64_t seed = 0;
    plan::CampaignResult result;
    metrics::CampaignReport report;
};

// One fully rendered campaign trace as line-delimited JSON. Deterministic:
// no wall-clock content anywhere in the body.
std::string render_trace(const CampaignConfig& cfg, const std::vector<sandbox::EnvironmentSpec>& suite,
                         const SeedRun& run);

struct ReplayVerdict {
    bool pass = false;
    std::string detail;  // names the first mismatching step on failure
};

// Re-executes the recorded prompt sequence against the suite embedded in
// the trace and diffs observations and rewards bit-exactly.
ReplayVerdict replay_trace(const std::string& trace_text);

struct LengthRow {
    int chain_length = 0;
    double mean_score = 0.0;
    double median_score = 0.0;
    metrics::WilcoxonResult wilcoxon;  // log-diffs vs the 1.19^n baseline
    int excluded_nonpositive = 0;
};

struct EnvCountRow {
    int environments = 0;
    double mean_score = 0.0;
    int chains = 0;
};

struct AggregateReport {
    std::map<std::string, double> mean_metrics;
    std::map<std::string, double> median_metrics;
    std::vector<LengthRow> by_length;     // one row per chain length 1..T
    std::vector<EnvCountRow> by_env_count;
    std::vector<metrics::CampaignReport> per_seed;
};

// Runs every seed (independent sandbox instances, parallel across seeds),
// writes one trace per seed plus report.json / report.txt, and returns the
// aggregate. Throws ConfigError / lib::ParseError / sandbox::TransportError.
AggregateReport cmd_run(const CampaignConfig& cfg);

// Procedural library generation over a suite file; deterministic output.
void cmd_gen(const std::string& suite_path, const std::string& out_path);

// PASS iff the trace replays bit-identically.
ReplayVerdict cmd_replay(const std::string& trace_path);

std::string render_report_json(const AggregateReport& report);
std::string render_report_table(const AggregateReport& report);

}  // namespace dream::cli
