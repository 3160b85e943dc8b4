#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dream::world {

enum class EntityType { Identifier, Credential, Privilege, Resource, Fact };

const char* to_string(EntityType t);
EntityType entity_type_from_string(const std::string& s);

// One typed fact in the cross-environment knowledge store.
struct Entity {
    std::string key;
    std::string value;
    EntityType entity_type = EntityType::Fact;
    std::string source_env;
    int discovered_at = 1;

    bool operator==(const Entity&) const = default;
};

// Raw response from a target agent. Scripted targets additionally emit
// structured leaks so belief updates stay deterministic.
struct Observation {
    std::string text;
    std::vector<Entity> structured_leaks;  // key/value/type; source_env filled by fuse

    bool operator==(const Observation&) const = default;
};

// Immutable belief snapshot: the concrete realization of b_t. Copy to
// snapshot, copy back to restore.
struct BeliefState {
    std::map<std::string, Entity> entities;
    std::vector<Entity> archived;  // overwritten entries, kept for provenance
    std::set<std::string> visited_envs;
    int timestep = 0;

    bool operator==(const BeliefState&) const = default;

    std::set<std::string> keys() const;
};

// Pulls newly discovered entities out of an observation.
class EntityExtractor {
public:
    virtual ~EntityExtractor() = default;
    virtual std::vector<Entity> extract(const Observation& obs) const = 0;
};

// Reference extractor: trusts the structured leaks emitted by scripted
// environments.
class StructuredExtractor final : public EntityExtractor {
public:
    std::vector<Entity> extract(const Observation& obs) const override;
};

// Scans free text for `key=value` pairs. Intended for live targets.
class PatternExtractor final : public EntityExtractor {
public:
    std::vector<Entity> extract(const Observation& obs) const override;
};

// LLM-backed extraction is interface-only: implementations plug in behind
// EntityExtractor; none ships here.

// Thrown by provision_context when a required key is absent from the
// belief; the planner treats it as "action not yet enabled".
class MissingEntityError : public std::runtime_error {
public:
    explicit MissingEntityError(std::string key);
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

// Belief update tau: b ∪ K with last-write-wins on key collision (the
// displaced entity is archived). Never mutates the input.
BeliefState fuse(const BeliefState& b, const std::string& target_env,
                 const Observation& obs, const EntityExtractor& extractor);

// Instantiates a prompt template, replacing each `{key}` with the belief
// value. Requires every key in `requirements` to be present.
std::string provision_context(const BeliefState& b, const std::string& prompt_template,
                              const std::vector<std::string>& requirements);

// |keys(b) ∩ req| / |req|, with the empty-requirements convention of 0 so
// reconnaissance earns no chaining credit.
double entity_usage(const BeliefState& b, const std::vector<std::string>& requirements);

}  // namespace dream::world
