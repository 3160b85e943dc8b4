#include "dream/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dream/sha256.hpp"

namespace dream::plan {

void PlannerConfig::validate() const {
    if (w_score < 0.0 || w_usage < 0.0 || w_bonus < 0.0)
        throw std::invalid_argument("planner weights must be non-negative");
    if (std::abs(w_score + w_usage + w_bonus - 1.0) > 1e-9)
        throw std::invalid_argument("planner weights must sum to 1");
    if (max_chain_len < 1) throw std::invalid_argument("max_chain_len must be >= 1");
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must lie in [0,1]");
    if (candidate_k < 1) throw std::invalid_argument("candidate_k must be >= 1");
    if (backtrack_after < 1) throw std::invalid_argument("backtrack_after must be >= 1");
}

std::vector<const lib::AtomAttack*> generate_candidates(const lib::AttackLibrary& library,
                                                        const world::BeliefState& belief,
                                                        const std::set<std::string>& tried,
                                                        const PlannerConfig& cfg,
                                                        std::vector<std::string>* excluded) {
    if (library.empty()) throw std::invalid_argument("generate_candidates: empty library");
    auto retrieved = library.retrieve(belief, cfg.candidate_k);
    auto clusters = lib::cluster(retrieved, cfg.cluster_threshold);

    // Visit clusters best-first (mean atomic_score, ties by smallest member
    // id — the pick_cluster rule). When the preferred cluster is entirely
    // tried or unprovisionable, fall back to the next one instead of
    // abandoning the node: a fresh belief often makes every Exploiter
    // cluster ineligible while reconnaissance clusters are still open.
    std::vector<std::size_t> order(clusters.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto mean_score = [&](std::size_t i) {
        double m = 0.0;
        for (const auto* a : clusters[i]) m += a->atomic_score;
        return m / static_cast<double>(clusters[i].size());
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double ma = mean_score(a), mb = mean_score(b);
        if (ma != mb) return ma > mb;
        return clusters[a].front()->id < clusters[b].front()->id;
    });

    for (std::size_t ci : order) {
        std::vector<const lib::AtomAttack*> eligible;
        for (const auto* a : clusters[ci]) {
            if (tried.contains(a->id)) {
                if (excluded) excluded->push_back(a->id);
                continue;
            }
            // Requirement-free actions (typically Scouts) are always
            // provisionable; everything else must instantiate cleanly.
            if (!a->entity_requirements.empty()) {
                try {
                    lib::provision_context(belief, *a);
                } catch (const world::MissingEntityError&) {
                    if (excluded) excluded->push_back(a->id);
                    continue;
                }
            }
            eligible.push_back(a);
        }
        if (!eligible.empty()) return eligible;
    }
    throw EmptyCandidatesError("every retrieved candidate is excluded");
}

double value(const world::BeliefState& belief, const lib::AtomAttack& action,
             const PlannerConfig& cfg, const std::set<std::string>& visited_envs) {
    double bonus = 0.0;
    if (!visited_envs.contains(action.target_env)) bonus += cfg.bonus_new_env;
    for (const auto& key : action.entity_requirements) {
        auto it = belief.entities.find(key);
        if (it != belief.entities.end() &&
            (it->second.entity_type == world::EntityType::Credential ||
             it->second.entity_type == world::EntityType::Privilege)) {
            bonus += cfg.bonus_priv_esc;
            break;
        }
    }
    double v = cfg.w_score * (action.atomic_score / 100.0) +
               cfg.w_usage * lib::entity_usage(belief, action) + cfg.w_bonus * bonus;
    return std::clamp(v, 0.0, 1.0);
}

const lib::AtomAttack* select_action(const std::vector<const lib::AtomAttack*>& candidates,
                                     const world::BeliefState& belief, const PlannerConfig& cfg) {
    if (candidates.empty()) throw std::invalid_argument("select_action: empty candidate set");
    const lib::AtomAttack* best = nullptr;
    double best_v = -1.0;
    for (const auto* a : candidates) {
        double v = value(belief, *a, cfg, belief.visited_envs);
        if (v > best_v || (v == best_v && a->id < best->id)) {
            best = a;
            best_v = v;
        }
    }
    return best;
}

world::BeliefState initial_belief(const std::vector<sandbox::EnvironmentSpec>& suite,
                                  std::uint64_t seed) {
    world::BeliefState b;
    b.timestep = 1;
    if (suite.empty()) return b;
    const auto& focus = suite[seed % suite.size()];
    world::Entity e;
    e.key = "focus_env";
    e.value = focus.env_id;
    e.entity_type = world::EntityType::Fact;
    e.source_env = focus.env_id;
    e.discovered_at = 1;
    b.entities.emplace(e.key, std::move(e));
    return b;
}

double chain_score(const std::vector<double>& rewards, double gamma) {
    double score = 0.0;
    double discount = 1.0;
    for (double r : rewards) {
        score += discount * r;
        discount *= gamma;
    }
    return score;
}

namespace {

std::string digest(const world::Observation& obs, bool hash) {
    // Scripted targets keep the full text so replay can diff bit-exactly;
    // live targets store a hash plus length.
    if (!hash) return obs.text;
    return "sha256:" + util::sha256_hex(obs.text) + ":len=" + std::to_string(obs.text.size());
}

AttackChain extract_best_chain(const SearchNode& root,
                               const std::vector<ChainStep>& executed, double gamma) {
    AttackChain best;
    bool found = false;
    double best_score = 0.0;

    // Every root-to-node prefix is a candidate chain, not just full leaf
    // paths: failed attempts are always leaves, and a chain should not be
    // forced to carry a trailing failed probe.
    std::vector<const SearchNode*> path;
    auto walk = [&](auto&& self, const SearchNode& node) -> void {
        if (node.step_index >= 0) {
            path.push_back(&node);
            std::vector<double> rewards;
            rewards.reserve(path.size());
            for (const auto* n : path) rewards.push_back(n->reward);
            double score = chain_score(rewards, gamma);
            if (!found || score > best_score) {
                found = true;
                best_score = score;
                best.steps.clear();
                for (const auto* n : path)
                    best.steps.push_back(executed[static_cast<std::size_t>(n->step_index)]);
                best.final_score = score;
            }
        }
        for (const auto& child : node.children) self(self, *child);
        if (node.step_index >= 0) path.pop_back();
    };
    walk(walk, root);
    return best;
}

}  // namespace

CampaignResult run_campaign(const lib::AttackLibrary& library, sandbox::TargetAgent& target,
                            sandbox::OutcomeJudge& judge,
                            const std::vector<sandbox::EnvironmentSpec>& suite,
                            const PlannerConfig& cfg) {
    cfg.validate();
    if (library.empty()) throw std::invalid_argument("run_campaign: empty library");

    CampaignResult result;
    result.tree = std::make_unique<SearchNode>();
    result.tree->belief = initial_belief(suite, cfg.rng_seed);

    sandbox::ExecConfig exec_cfg{cfg.c_penalty, cfg.defense_prompt};
    world::StructuredExtractor extractor;
    SearchNode* node = result.tree.get();

    // Hard bound: every iteration either marks a new tried action at some
    // node or walks one level up, so the search always terminates; the cap
    // only guards against malformed fixtures.
    const std::size_t max_iterations = 500000;

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        std::vector<std::string> excluded;
        std::vector<const lib::AtomAttack*> candidates;
        try {
            candidates = generate_candidates(library, node->belief, node->tried, cfg, &excluded);
        } catch (const EmptyCandidatesError&) {
            result.excluded_unprovisionable += static_cast<int>(excluded.size());
            if (node->parent == nullptr) break;  // root exhausted
            result.backtracks.push_back({static_cast<int>(result.executed_steps.size()),
                                         node->depth, node->incoming_action});
            node = node->parent;
            continue;
        }
        result.excluded_unprovisionable += static_cast<int>(excluded.size());

        const lib::AtomAttack* action = select_action(candidates, node->belief, cfg);
        sandbox::StepOutcome outcome;
        try {
            outcome = sandbox::execute(*action, node->belief, target, judge, exec_cfg);
        } catch (const sandbox::TransportError& e) {
            result.aborted = true;
            result.abort_reason = e.what();
            break;
        }
        node->tried.insert(action->id);

        ChainStep step;
        step.action_id = action->id;
        step.role = action->role;
        step.target_env = action->target_env;
        step.prompt = outcome.prompt;
        step.observation_digest = digest(outcome.observation, cfg.hash_observations);
        step.reward = outcome.reward;
        step.success = outcome.success;
        step.atomic_score = action->atomic_score;
        step.severity_achieved = outcome.severity_achieved;
        step.severity_attempted = outcome.severity_attempted;
        step.refused_with_threat_mention = outcome.refused_with_threat_mention;
        step.cross_env_provisioned = outcome.cross_env_provisioned;
        for (const auto* c : candidates) step.candidate_ids.push_back(c->id);
        step.excluded_ids = excluded;

        auto child = std::make_unique<SearchNode>();
        child->incoming_action = action->id;
        child->reward = outcome.reward;
        child->success = outcome.success;
        child->parent = node;
        child->depth = node->depth + 1;
        child->step_index = static_cast<int>(result.executed_steps.size());

        if (outcome.success) {
            child->belief = lib::fuse(node->belief, *action, outcome.observation, extractor);
            for (const auto& [key, entity] : child->belief.entities)
                if (entity.discovered_at == child->belief.timestep)
                    step.entities_added.push_back(entity);
        } else {
            child->belief = node->belief;  // Algorithm keeps b_t on failure
        }
        result.executed_steps.push_back(std::move(step));

        SearchNode* child_ptr = child.get();
        node->children.push_back(std::move(child));

        if (outcome.success) {
            node->consecutive_failures = 0;
            node = child_ptr;
            if (node->depth >= cfg.max_chain_len) break;  // chain complete
        } else {
            node->consecutive_failures++;
            if (node->consecutive_failures >= cfg.backtrack_after && node->parent != nullptr) {
                result.backtracks.push_back({static_cast<int>(result.executed_steps.size()),
                                             node->depth, action->id});
                node->consecutive_failures = 0;
                node = node->parent;
            }
        }
    }

    result.best_chain = extract_best_chain(*result.tree, result.executed_steps, cfg.gamma);
    return result;
}

CampaignResult run_campaign(const lib::AttackLibrary& library, sandbox::ScriptedTarget& target,
                            const PlannerConfig& cfg) {
    return run_campaign(library, target, target, target.suite(), cfg);
}

}  // namespace dream::plan
