#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dream/attack.hpp"
#include "dream/belief.hpp"
#include "dream/environment.hpp"

namespace dream::sandbox {

// Behavioral contract for a target under attack.
class TargetAgent {
public:
    virtual ~TargetAgent() = default;
    virtual world::Observation query(const std::string& env_id, const std::string& prompt,
                                     const std::string& system_context) = 0;
};

struct JudgeVerdict {
    bool success = false;
    double severity_achieved = 0.0;
    bool refused_with_threat_mention = false;
    bool undecidable = false;  // live judges only; treated as failure
};

// Pluggable outcome judge. The scripted target carries its own rule-engine
// verdict; an LLM judge would implement this interface.
class OutcomeJudge {
public:
    virtual ~OutcomeJudge() = default;
    virtual JudgeVerdict judge(const world::Observation& obs, const lib::AtomAttack& action) = 0;
};

// Deterministic rule-engine target over an environment suite. Pure function
// of (suite, accumulated flags, prompt). Owns per-environment flag state and
// the suite-wide set of keys leaked so far (Guarded-profile provenance).
class ScriptedTarget final : public TargetAgent, public OutcomeJudge {
public:
    explicit ScriptedTarget(std::vector<EnvironmentSpec> suite);

    world::Observation query(const std::string& env_id, const std::string& prompt,
                             const std::string& system_context) override;

    // Verdict for the most recent query.
    JudgeVerdict judge(const world::Observation& obs, const lib::AtomAttack& action) override;

    const std::vector<EnvironmentSpec>& suite() const { return suite_; }
    const EnvironmentSpec* find_env(const std::string& env_id) const;

    // Canonical key -> value table across the whole suite (static data, not
    // mutable cross-environment state).
    const std::map<std::string, std::string>& value_table() const { return values_; }

private:
    std::vector<EnvironmentSpec> suite_;
    std::map<std::string, std::string> values_;
    std::map<std::string, std::set<std::string>> flags_;  // env_id -> set flags
    std::set<std::string> leaked_keys_;                   // suite-run provenance
    JudgeVerdict last_verdict_;
};

struct HttpTargetConfig {
    std::string endpoint_url;
    std::string auth_token_env_var = "DREAM_TARGET_TOKEN";
    int timeout_seconds = 30;
    int retry_count = 2;
};

// Live single-turn HTTP target: POST {system, prompt} -> text. Explicitly
// nondeterministic; outcomes are judged externally.
class HttpTarget final : public TargetAgent {
public:
    explicit HttpTarget(HttpTargetConfig cfg);
    world::Observation query(const std::string& env_id, const std::string& prompt,
                             const std::string& system_context) override;

private:
    HttpTargetConfig cfg_;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExecConfig {
    double c_penalty = 5.0;
    std::string defense_prompt;  // optional static safety prefix
};

struct StepOutcome {
    world::Observation observation;
    double reward = 0.0;
    bool success = false;
    double severity_achieved = 0.0;
    double severity_attempted = 0.0;
    bool refused_with_threat_mention = false;
    bool cross_env_provisioned = false;
    std::string prompt;  // the instantiated prompt actually sent
};

// Immediate reward: s * Score(a) - (1 - s) * C_penalty.
double reward(bool success, double atomic_score, double c_penalty);

// Provision, query, judge, reward — one full exchange.
StepOutcome execute(const lib::AtomAttack& action, const world::BeliefState& belief,
                    TargetAgent& target, OutcomeJudge& judge, const ExecConfig& cfg);

// Scripted targets judge their own rule firings.
StepOutcome execute(const lib::AtomAttack& action, const world::BeliefState& belief,
                    ScriptedTarget& target, const ExecConfig& cfg);

}  // namespace dream::sandbox
