#pragma once

#include <string>
#include <vector>

#include "dream/belief.hpp"

namespace dream::sandbox {

// A fact the environment reveals to any reconnaissance probe that names it.
struct VisibleFact {
    std::string key;
    std::string value;
    world::EntityType entity_type = world::EntityType::Fact;
};

// A secret released only when every guard key's value appears in the prompt.
struct GuardedSecret {
    std::string key;
    std::string value;
    world::EntityType entity_type = world::EntityType::Fact;
    std::vector<std::string> guard;
};

// Prompt-triggered latent-state change: when all trigger values appear in
// the prompt, the named flag is set for this environment.
struct MutationRule {
    std::vector<std::string> trigger_keys;
    std::string flag;
};

struct ExploitRule {
    std::vector<std::string> guard_keys;
    std::vector<std::string> required_flags;
    double severity = 0.0;  // in [0,100]
    std::vector<std::string> risk_categories;
    std::vector<std::string> failure_modes;
};

enum class DefenseProfile { Naive, Guarded };

const char* to_string(DefenseProfile p);
DefenseProfile defense_profile_from_string(const std::string& s);

// Deterministic target-agent world. Guarded environments refuse exploits
// unless every guard value was leaked earlier in the same suite run.
struct EnvironmentSpec {
    std::string env_id;
    std::vector<VisibleFact> visible_facts;
    std::vector<GuardedSecret> guarded_secrets;
    std::vector<MutationRule> mutation_rules;
    std::vector<ExploitRule> exploit_rules;
    std::string refusal_text;
    DefenseProfile defense_profile = DefenseProfile::Naive;
};

// Suite I/O: line-delimited JSON records with EnvironmentSpec field names.
std::vector<EnvironmentSpec> load_suite(const std::string& path);
void save_suite(const std::vector<EnvironmentSpec>& suite, const std::string& path);
std::vector<EnvironmentSpec> parse_suite(const std::string& text);
std::string serialize_suite(const std::vector<EnvironmentSpec>& suite);

// Bundled deterministic fixture suite: contains an information-bridge pair
// (a high-severity exploit gated on an entity only discoverable elsewhere)
// and enough depth that five-step chains beat any single step.
std::vector<EnvironmentSpec> build_bundled_suite();

// Variant of the bundled suite with every environment set to Guarded.
std::vector<EnvironmentSpec> build_bundled_suite_guarded();

// Two-environment bridge fixture used for the cross-environment analysis.
std::vector<EnvironmentSpec> build_bridge_suite();

}  // namespace dream::sandbox
