#pragma once

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dream/attack.hpp"
#include "dream/belief.hpp"
#include "dream/sandbox.hpp"

namespace dream::plan {

struct PlannerConfig {
    double w_score = 0.5;
    double w_usage = 0.3;
    double w_bonus = 0.2;
    double bonus_new_env = 1.0;
    double bonus_priv_esc = 0.5;
    int max_chain_len = 5;  // T
    int candidate_k = 8;
    double cluster_threshold = 0.35;
    int backtrack_after = 2;  // consecutive failures before backtracking
    double gamma = 0.9;
    double c_penalty = 5.0;
    std::uint64_t rng_seed = 0;
    std::string defense_prompt;
    bool hash_observations = false;  // live targets: store digest, not text

    void validate() const;  // weights sum to 1, T >= 1, gamma in [0,1]
};

class EmptyCandidatesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SearchNode {
    world::BeliefState belief;
    std::string incoming_action;  // empty at root
    double reward = 0.0;
    bool success = false;
    std::set<std::string> tried;
    SearchNode* parent = nullptr;
    int depth = 0;
    int consecutive_failures = 0;
    int step_index = -1;  // index into CampaignResult::executed_steps
    std::vector<std::unique_ptr<SearchNode>> children;
};

struct ChainStep {
    std::string action_id;
    lib::Role role = lib::Role::Scout;
    std::string target_env;
    std::string prompt;
    std::string observation_digest;
    double reward = 0.0;
    bool success = false;
    double atomic_score = 0.0;
    double severity_achieved = 0.0;
    double severity_attempted = 0.0;
    bool refused_with_threat_mention = false;
    bool cross_env_provisioned = false;
    std::vector<std::string> candidate_ids;  // the surviving candidate set
    std::vector<std::string> excluded_ids;   // tried / unprovisionable drops
    std::vector<world::Entity> entities_added;
};

struct AttackChain {
    std::vector<ChainStep> steps;
    double final_score = 0.0;  // discounted cumulative reward of the steps
};

struct BacktrackEvent {
    int at_step = 0;       // index into the executed-step sequence
    int from_depth = 0;
    std::string failed_action;
};

struct CampaignResult {
    AttackChain best_chain;
    std::unique_ptr<SearchNode> tree;
    std::vector<ChainStep> executed_steps;  // every attempt in order
    std::vector<BacktrackEvent> backtracks;
    int excluded_unprovisionable = 0;
    bool aborted = false;          // transport failure against a live target
    std::string abort_reason;
};

// Stage 1: retrieve, cluster, pick the most promising cluster, then drop
// actions already tried at this node and actions that cannot be provisioned
// (requirement-free actions always stay eligible). A fully excluded cluster
// falls back to the next-best one; EmptyCandidatesError fires only when
// every retrieved candidate is excluded — the backtracking trigger.
std::vector<const lib::AtomAttack*> generate_candidates(const lib::AttackLibrary& library,
                                                        const world::BeliefState& belief,
                                                        const std::set<std::string>& tried,
                                                        const PlannerConfig& cfg,
                                                        std::vector<std::string>* excluded = nullptr);

// Heuristic value V(b, a): weighted sum of normalized atomic score, entity
// usage and the strategic bonus (new environment, privilege escalation),
// clamped to [0,1].
double value(const world::BeliefState& belief, const lib::AtomAttack& action,
             const PlannerConfig& cfg, const std::set<std::string>& visited_envs);

// argmax of value() over the candidates; ties by ascending id.
const lib::AtomAttack* select_action(const std::vector<const lib::AtomAttack*>& candidates,
                                     const world::BeliefState& belief, const PlannerConfig& cfg);

// Seed-derived initial belief: the seed picks a focus environment from the
// suite, biasing retrieval for the first step.
world::BeliefState initial_belief(const std::vector<sandbox::EnvironmentSpec>& suite,
                                  std::uint64_t seed);

// Full guided-policy-search campaign with failure-aware backtracking.
// Deterministic given (library, suite, config).
CampaignResult run_campaign(const lib::AttackLibrary& library, sandbox::ScriptedTarget& target,
                            const PlannerConfig& cfg);

// Generic entry point for live targets with an external judge. Transport
// failures abort the campaign, preserving the partial trace.
CampaignResult run_campaign(const lib::AttackLibrary& library, sandbox::TargetAgent& target,
                            sandbox::OutcomeJudge& judge,
                            const std::vector<sandbox::EnvironmentSpec>& suite,
                            const PlannerConfig& cfg);

// Discounted cumulative score of a reward sequence (shared with metrics).
double chain_score(const std::vector<double>& rewards, double gamma);

}  // namespace dream::plan
