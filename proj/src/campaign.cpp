#include "dream/campaign.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dream::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double median(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

json entity_to_json(const world::Entity& e) {
    return json{{"key", e.key},
                {"value", e.value},
                {"entity_type", world::to_string(e.entity_type)},
                {"source_env", e.source_env},
                {"discovered_at", e.discovered_at}};
}

json report_to_json(const metrics::CampaignReport& r) {
    return json{{"chain_score", r.chain_score},
                {"attack_success_rate", r.attack_success_rate},
                {"overall_defense", r.overall_defense},
                {"damage_mitigation", r.damage_mitigation},
                {"attack_observability", r.attack_observability},
                {"contextual_isolation", r.contextual_isolation},
                {"risk_histogram", r.risk_histogram},
                {"mode_histogram", r.mode_histogram},
                {"chain_length", r.chain_length},
                {"distinct_environments", r.distinct_environments}};
}

}  // namespace

CampaignConfig CampaignConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    CampaignConfig cfg;
    cfg.apply_json(buf.str());
    return cfg;
}

void CampaignConfig::apply_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    static const std::set<std::string> kAllowed = {
        "library_path", "suite_path", "planner", "target", "http", "defense_prompt",
        "runs", "seeds", "out_dir"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kAllowed.contains(it.key()))
            throw ConfigError("unknown config key: " + it.key());

    library_path = j.value("library_path", library_path);
    suite_path = j.value("suite_path", suite_path);
    defense_prompt = j.value("defense_prompt", defense_prompt);
    out_dir = j.value("out_dir", out_dir);
    if (j.contains("seeds")) seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("runs")) {
        auto runs = j["runs"].get<std::size_t>();
        if (j.contains("seeds") && runs != seeds.size())
            throw ConfigError("runs must equal the number of seeds");
        if (!j.contains("seeds")) {
            seeds.clear();
            for (std::size_t i = 0; i < runs; ++i) seeds.push_back(i + 1);
        }
    }
    if (j.contains("target")) {
        std::string kind = j["target"];
        if (kind == "scripted")
            target = TargetKind::Scripted;
        else if (kind == "http")
            target = TargetKind::Http;
        else
            throw ConfigError("target must be 'scripted' or 'http'");
    }
    if (j.contains("http")) {
        const auto& h = j["http"];
        http.endpoint_url = h.value("endpoint_url", http.endpoint_url);
        http.auth_token_env_var = h.value("auth_token_env_var", http.auth_token_env_var);
        http.timeout_seconds = h.value("timeout_seconds", http.timeout_seconds);
        http.retry_count = h.value("retry_count", http.retry_count);
    }
    if (j.contains("planner")) {
        const auto& p = j["planner"];
        planner.w_score = p.value("w_score", planner.w_score);
        planner.w_usage = p.value("w_usage", planner.w_usage);
        planner.w_bonus = p.value("w_bonus", planner.w_bonus);
        planner.bonus_new_env = p.value("bonus_new_env", planner.bonus_new_env);
        planner.bonus_priv_esc = p.value("bonus_priv_esc", planner.bonus_priv_esc);
        planner.max_chain_len = p.value("max_chain_len", planner.max_chain_len);
        planner.candidate_k = p.value("candidate_k", planner.candidate_k);
        planner.cluster_threshold = p.value("cluster_threshold", planner.cluster_threshold);
        planner.backtrack_after = p.value("backtrack_after", planner.backtrack_after);
        planner.gamma = p.value("gamma", planner.gamma);
        planner.c_penalty = p.value("c_penalty", planner.c_penalty);
    }
    try {
        planner.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid planner config: ") + e.what());
    }
}

std::string render_trace(const CampaignConfig& cfg,
                         const std::vector<sandbox::EnvironmentSpec>& suite,
                         const SeedRun& run) {
    std::string out;
    json meta{{"record", "meta"},
              {"campaign_id", "seed-" + std::to_string(run.seed)},
              {"seed", run.seed},
              {"gamma", cfg.planner.gamma},
              {"c_penalty", cfg.planner.c_penalty},
              {"max_chain_len", cfg.planner.max_chain_len},
              {"defense_prompt", cfg.defense_prompt},
              {"target", cfg.target == TargetKind::Http ? "http" : "scripted"},
              {"suite_jsonl", sandbox::serialize_suite(suite)}};
    out += meta.dump();
    out += '\n';

    std::size_t next_backtrack = 0;
    const auto& backtracks = run.result.backtracks;
    for (std::size_t i = 0; i < run.result.executed_steps.size(); ++i) {
        while (next_backtrack < backtracks.size() &&
               backtracks[next_backtrack].at_step == static_cast<int>(i)) {
            const auto& b = backtracks[next_backtrack++];
            out += json{{"record", "backtrack"},
                        {"at_step", b.at_step},
                        {"from_depth", b.from_depth},
                        {"failed_action", b.failed_action}}
                       .dump();
            out += '\n';
        }
        const auto& s = run.result.executed_steps[i];
        json js{{"record", "step"},
                {"timestep", i + 1},
                {"action_id", s.action_id},
                {"role", lib::to_string(s.role)},
                {"target_env", s.target_env},
                {"prompt", s.prompt},
                {"observation", s.observation_digest},
                {"reward", s.reward},
                {"success", s.success},
                {"atomic_score", s.atomic_score},
                {"severity_achieved", s.severity_achieved},
                {"severity_attempted", s.severity_attempted},
                {"refused_with_threat_mention", s.refused_with_threat_mention},
                {"cross_env_provisioned", s.cross_env_provisioned},
                {"candidates", s.candidate_ids},
                {"excluded", s.excluded_ids}};
        js["entities_added"] = json::array();
        for (const auto& e : s.entities_added) js["entities_added"].push_back(entity_to_json(e));
        out += js.dump();
        out += '\n';
    }
    while (next_backtrack < backtracks.size()) {
        const auto& b = backtracks[next_backtrack++];
        out += json{{"record", "backtrack"},
                    {"at_step", b.at_step},
                    {"from_depth", b.from_depth},
                    {"failed_action", b.failed_action}}
                   .dump();
        out += '\n';
    }

    json chain{{"record", "chain"}, {"final_score", run.result.best_chain.final_score}};
    chain["steps"] = json::array();
    for (const auto& s : run.result.best_chain.steps) chain["steps"].push_back(s.action_id);
    out += chain.dump();
    out += '\n';

    if (run.result.aborted) {
        out += json{{"record", "abort"}, {"reason", run.result.abort_reason}}.dump();
        out += '\n';
    }

    json rep = report_to_json(run.report);
    rep["record"] = "report";
    out += rep.dump();
    out += '\n';
    return out;
}

ReplayVerdict replay_trace(const std::string& trace_text) {
    std::istringstream in(trace_text);
    std::string line;
    std::unique_ptr<sandbox::ScriptedTarget> target;
    double c_penalty = 5.0;
    int step_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        const std::string record = j.at("record");
        if (record == "meta") {
            if (j.value("target", "scripted") != "scripted")
                return {false, "only scripted-target traces are replayable"};
            auto suite = sandbox::parse_suite(j.at("suite_jsonl").get<std::string>());
            c_penalty = j.at("c_penalty").get<double>();
            target = std::make_unique<sandbox::ScriptedTarget>(std::move(suite));
        } else if (record == "step") {
            if (!target) return {false, "step record before meta"};
            ++step_no;
            auto obs = target->query(j.at("target_env"), j.at("prompt"), "");
            lib::AtomAttack probe;
            probe.atomic_score = j.at("atomic_score").get<double>();
            auto verdict = target->judge(obs, probe);
            double reward =
                sandbox::reward(verdict.success, probe.atomic_score, c_penalty);
            if (obs.text != j.at("observation").get<std::string>())
                return {false, "observation mismatch at step " + std::to_string(step_no)};
            if (verdict.success != j.at("success").get<bool>())
                return {false, "success flag mismatch at step " + std::to_string(step_no)};
            if (reward != j.at("reward").get<double>())
                return {false, "reward mismatch at step " + std::to_string(step_no)};
        }
    }
    if (step_no == 0 && !target) return {false, "empty or malformed trace"};
    return {true, "replayed " + std::to_string(step_no) + " steps bit-identically"};
}

namespace {

SeedRun run_one_seed(const CampaignConfig& cfg, const lib::AttackLibrary& library,
                     const std::vector<sandbox::EnvironmentSpec>& suite, std::uint64_t seed,
                     int chain_len) {
    SeedRun run;
    run.seed = seed;
    plan::PlannerConfig pc = cfg.planner;
    pc.rng_seed = seed;
    pc.max_chain_len = chain_len;
    pc.defense_prompt = cfg.defense_prompt;
    pc.hash_observations = cfg.target == TargetKind::Http;
    if (cfg.target == TargetKind::Http) {
        sandbox::HttpTarget target(cfg.http);
        // Live judging is interface-only; without a judge every exchange is
        // recorded as undecided failure.
        class UndecidedJudge final : public sandbox::OutcomeJudge {
        public:
            sandbox::JudgeVerdict judge(const world::Observation&,
                                        const lib::AtomAttack&) override {
                sandbox::JudgeVerdict v;
                v.undecidable = true;
                return v;
            }
        } judge;
        run.result = plan::run_campaign(library, target, judge, suite, pc);
    } else {
        sandbox::ScriptedTarget target(suite);
        run.result = plan::run_campaign(library, target, pc);
    }
    run.report = metrics::score_chain(run.result.best_chain, pc.gamma, &library);
    return run;
}

}  // namespace

AggregateReport cmd_run(const CampaignConfig& cfg) {
    if (cfg.library_path.empty()) throw ConfigError("library_path is required");
    if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
    lib::AttackLibrary library = lib::load_library(cfg.library_path);
    std::vector<sandbox::EnvironmentSpec> suite =
        cfg.suite_path.empty() ? sandbox::build_bundled_suite()
                               : sandbox::load_suite(cfg.suite_path);
    if (cfg.target == TargetKind::Scripted && suite.empty())
        throw ConfigError("scripted target requires a non-empty environment suite");

    fs::create_directories(cfg.out_dir);

    const int T = cfg.planner.max_chain_len;
    const auto n_seeds = cfg.seeds.size();
    std::vector<SeedRun> runs(n_seeds);
    // Chain-length sweep for the report: one campaign per (seed, length).
    std::vector<std::vector<double>> sweep(static_cast<std::size_t>(T));

    {
        std::vector<std::vector<double>> sweep_local(n_seeds);
        const auto n = static_cast<std::int64_t>(n_seeds);
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n; ++i) {
            auto idx = static_cast<std::size_t>(i);
            runs[idx] = run_one_seed(cfg, library, suite, cfg.seeds[idx], T);
            auto& scores = sweep_local[idx];
            scores.resize(static_cast<std::size_t>(T));
            for (int len = 1; len <= T; ++len) {
                if (len == T) {
                    scores[static_cast<std::size_t>(len - 1)] =
                        runs[idx].result.best_chain.final_score;
                } else {
                    SeedRun shorter = run_one_seed(cfg, library, suite, cfg.seeds[idx], len);
                    scores[static_cast<std::size_t>(len - 1)] =
                        shorter.result.best_chain.final_score;
                }
            }
        }
        for (int len = 1; len <= T; ++len)
            for (std::size_t s = 0; s < n_seeds; ++s)
                sweep[static_cast<std::size_t>(len - 1)].push_back(
                    sweep_local[s][static_cast<std::size_t>(len - 1)]);
    }

    AggregateReport agg;
    for (const auto& run : runs) {
        agg.per_seed.push_back(run.report);
        std::ofstream out(fs::path(cfg.out_dir) /
                          ("trace_seed" + std::to_string(run.seed) + ".jsonl"));
        if (!out) throw ConfigError("cannot write trace file in " + cfg.out_dir);
        out << render_trace(cfg, suite, run);
    }

    auto collect = [&](auto getter) {
        std::vector<double> xs;
        for (const auto& r : agg.per_seed) xs.push_back(getter(r));
        return xs;
    };
    const std::vector<std::pair<std::string, std::vector<double>>> dims = {
        {"chain_score", collect([](const auto& r) { return r.chain_score; })},
        {"attack_success_rate", collect([](const auto& r) { return r.attack_success_rate; })},
        {"overall_defense", collect([](const auto& r) { return r.overall_defense; })},
        {"damage_mitigation", collect([](const auto& r) { return r.damage_mitigation; })},
        {"attack_observability", collect([](const auto& r) { return r.attack_observability; })},
        {"contextual_isolation", collect([](const auto& r) { return r.contextual_isolation; })},
    };
    for (const auto& [name, xs] : dims) {
        agg.mean_metrics[name] = mean(xs);
        agg.median_metrics[name] = median(xs);
    }

    for (int len = 1; len <= T; ++len) {
        LengthRow row;
        row.chain_length = len;
        const auto& scores = sweep[static_cast<std::size_t>(len - 1)];
        row.mean_score = mean(scores);
        row.median_score = median(scores);
        std::vector<double> diffs;
        for (double s : scores) {
            if (s > 0.0)
                diffs.push_back(metrics::log_diff(s, len));
            else
                row.excluded_nonpositive++;
        }
        if (!diffs.empty()) row.wilcoxon = metrics::wilcoxon_one_tailed(diffs);
        agg.by_length.push_back(std::move(row));
    }

    std::map<int, std::vector<double>> by_envs;
    for (const auto& run : runs)
        by_envs[run.report.distinct_environments].push_back(run.result.best_chain.final_score);
    for (const auto& [envs, scores] : by_envs)
        agg.by_env_count.push_back({envs, mean(scores), static_cast<int>(scores.size())});

    {
        std::ofstream out(fs::path(cfg.out_dir) / "report.json");
        out << render_report_json(agg);
        std::ofstream txt(fs::path(cfg.out_dir) / "report.txt");
        txt << render_report_table(agg);
    }
    return agg;
}

void cmd_gen(const std::string& suite_path, const std::string& out_path) {
    auto suite = sandbox::load_suite(suite_path);
    std::vector<lib::AtomAttack> attacks;
    for (const auto& env : suite) {
        auto generated = lib::generate_atoms(env);
        attacks.insert(attacks.end(), generated.begin(), generated.end());
    }
    lib::AttackLibrary library(std::move(attacks));
    lib::save_library(library, out_path);
}

ReplayVerdict cmd_replay(const std::string& trace_path) {
    std::ifstream in(trace_path);
    if (!in) throw ConfigError("cannot open trace file: " + trace_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return replay_trace(buf.str());
}

std::string render_report_json(const AggregateReport& report) {
    json j;
    j["mean"] = report.mean_metrics;
    j["median"] = report.median_metrics;
    j["by_chain_length"] = json::array();
    for (const auto& row : report.by_length) {
        json jr{{"chain_length", row.chain_length},
                {"mean_score", row.mean_score},
                {"median_score", row.median_score},
                {"excluded_nonpositive", row.excluded_nonpositive}};
        jr["wilcoxon"] = {{"n", row.wilcoxon.n_used},
                          {"w_statistic", row.wilcoxon.w_statistic},
                          {"p_value", row.wilcoxon.p_value},
                          {"median_log_diff", row.wilcoxon.median_diff},
                          {"defined", row.wilcoxon.defined}};
        j["by_chain_length"].push_back(std::move(jr));
    }
    j["by_environment_count"] = json::array();
    for (const auto& row : report.by_env_count)
        j["by_environment_count"].push_back(
            {{"environments", row.environments}, {"mean_score", row.mean_score},
             {"chains", row.chains}});
    j["per_seed"] = json::array();
    for (const auto& r : report.per_seed) j["per_seed"].push_back(report_to_json(r));
    return j.dump(2) + "\n";
}

std::string render_report_table(const AggregateReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "Campaign summary (mean / median across seeds)\n";
    out << std::left << std::setw(24) << "Metric" << std::right << std::setw(12) << "Mean"
        << std::setw(12) << "Median" << "\n";
    const char* order[] = {"overall_defense",      "attack_success_rate",
                           "damage_mitigation",    "attack_observability",
                           "contextual_isolation", "chain_score"};
    const char* labels[] = {"Overall Defense",     "Attack Success Rate",
                            "Damage Mitigation",   "Attack Observability",
                            "Contextual Isolation", "Chain Score"};
    for (int i = 0; i < 6; ++i) {
        out << std::left << std::setw(24) << labels[i] << std::right << std::setw(12)
            << report.mean_metrics.at(order[i]) << std::setw(12)
            << report.median_metrics.at(order[i]) << "\n";
    }
    out << "\nScore by chain length (Wilcoxon vs 1.19^n baseline)\n";
    out << std::left << std::setw(8) << "Len" << std::right << std::setw(12) << "Mean"
        << std::setw(12) << "Median" << std::setw(8) << "n" << std::setw(10) << "W"
        << std::setw(12) << "p-value" << std::setw(10) << "Excl" << "\n";
    for (const auto& row : report.by_length) {
        out << std::left << std::setw(8) << row.chain_length << std::right << std::setw(12)
            << row.mean_score << std::setw(12) << row.median_score << std::setw(8)
            << row.wilcoxon.n_used << std::setw(10) << row.wilcoxon.w_statistic << std::setw(12)
            << std::setprecision(5) << row.wilcoxon.p_value << std::setprecision(2)
            << std::setw(10) << row.excluded_nonpositive << "\n";
    }
    out << "\nScore by environments traversed\n";
    out << std::left << std::setw(8) << "Envs" << std::right << std::setw(12) << "Mean"
        << std::setw(10) << "Chains" << "\n";
    for (const auto& row : report.by_env_count)
        out << std::left << std::setw(8) << row.environments << std::right << std::setw(12)
            << row.mean_score << std::setw(10) << row.chains << "\n";
    return out.str();
}

}  // namespace dream::cli
