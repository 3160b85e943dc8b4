#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dream/campaign.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitTransport = 4;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dream::cli::ConfigError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int do_run(dream::cli::CampaignConfig& cfg) {
    auto report = dream::cli::cmd_run(cfg);
    std::cout << dream::cli::render_report_table(report);
    std::cout << "\nTraces and report written to " << cfg.out_dir << "\n";
    return 0;
}

int do_report(const std::string& dir) {
    std::vector<json> reports;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".jsonl") continue;
        std::ifstream in(entry.path());
        std::string line, last_report;
        while (std::getline(in, line)) {
            if (line.find("\"record\":\"report\"") != std::string::npos ||
                line.find("\"record\": \"report\"") != std::string::npos)
                last_report = line;
        }
        if (!last_report.empty()) reports.push_back(json::parse(last_report));
    }
    if (reports.empty()) {
        std::cerr << "no trace reports found in " << dir << "\n";
        return kExitIo;
    }
    std::cout << std::fixed << std::setprecision(2);
    std::cout << std::left << std::setw(10) << "Trace" << std::right << std::setw(16)
              << "OverallDef" << std::setw(10) << "ASR" << std::setw(12) << "Mitig"
              << std::setw(12) << "Observ" << std::setw(12) << "Isolate" << std::setw(12)
              << "Score" << "\n";
    int i = 1;
    for (const auto& r : reports) {
        std::cout << std::left << std::setw(10) << i++ << std::right << std::setw(16)
                  << r.value("overall_defense", 0.0) << std::setw(10)
                  << r.value("attack_success_rate", 0.0) << std::setw(12)
                  << r.value("damage_mitigation", 0.0) << std::setw(12)
                  << r.value("attack_observability", 0.0) << std::setw(12)
                  << r.value("contextual_isolation", 0.0) << std::setw(12)
                  << r.value("chain_score", 0.0) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DREAM engine: stateful cross-environment attack-chain campaigns"};
    app.require_subcommand(1);

    std::string config_path, target_kind, defense_prompt_path, out_dir;
    std::vector<std::uint64_t> seeds;
    int max_chain_len = -1;
    double gamma = -1.0;

    auto* run = app.add_subcommand("run", "Run attack campaigns and write traces + report");
    run->add_option("--config", config_path, "campaign config file (JSON)");
    run->add_option("--seed", seeds, "campaign seed (repeatable)");
    run->add_option("--target", target_kind, "target kind: scripted | http");
    run->add_option("--defense-prompt", defense_prompt_path,
                    "file with a static defense prefix for every prompt");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--max-chain-len", max_chain_len, "maximum chain length T");
    run->add_option("--gamma", gamma, "discount factor");

    std::string gen_suite, gen_out = "library.jsonl";
    auto* gen = app.add_subcommand("gen", "Generate an attack library from an environment suite");
    gen->add_option("suite", gen_suite, "environment suite file")->required();
    gen->add_option("--out", gen_out, "output attack-library file");

    std::string replay_path;
    auto* replay = app.add_subcommand("replay", "Verify a recorded trace replays bit-identically");
    replay->add_option("trace", replay_path, "trace file")->required();

    std::string report_dir = "out";
    auto* report = app.add_subcommand("report", "Summarize trace reports from a run directory");
    report->add_option("--out", report_dir, "directory holding trace files");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            dream::cli::CampaignConfig cfg;
            if (!config_path.empty()) cfg = dream::cli::CampaignConfig::from_file(config_path);
            if (!seeds.empty()) cfg.seeds = seeds;
            if (!target_kind.empty()) {
                if (target_kind == "scripted")
                    cfg.target = dream::cli::TargetKind::Scripted;
                else if (target_kind == "http")
                    cfg.target = dream::cli::TargetKind::Http;
                else
                    throw dream::cli::ConfigError("unknown target kind: " + target_kind);
            }
            if (!defense_prompt_path.empty()) cfg.defense_prompt = read_file(defense_prompt_path);
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            if (max_chain_len > 0) cfg.planner.max_chain_len = max_chain_len;
            if (gamma >= 0.0) cfg.planner.gamma = gamma;
            return do_run(cfg);
        }
        if (gen->parsed()) {
            dream::cli::cmd_gen(gen_suite, gen_out);
            std::cout << "library written to " << gen_out << "\n";
            return 0;
        }
        if (replay->parsed()) {
            auto verdict = dream::cli::cmd_replay(replay_path);
            std::cout << (verdict.pass ? "PASS" : "FAIL") << ": " << verdict.detail << "\n";
            return verdict.pass ? 0 : 1;
        }
        if (report->parsed()) return do_report(report_dir);
    } catch (const dream::cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dream::sandbox::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const dream::lib::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
