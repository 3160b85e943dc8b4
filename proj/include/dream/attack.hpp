#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dream/belief.hpp"
#include "dream/environment.hpp"

namespace dream::lib {

enum class Role { Scout, Seeder, Exploiter };

const char* to_string(Role r);
Role role_from_string(const std::string& s);

// R1..R8 / M1..M9 taxonomy entries.
struct TaxonomyEntry {
    std::string code;
    std::string label;
};

const std::vector<TaxonomyEntry>& risk_categories();
const std::vector<TaxonomyEntry>& failure_modes();
bool is_risk_code(const std::string& code);
bool is_failure_code(const std::string& code);

// One action in the action space: everything needed to retrieve, provision
// and execute a single adversarial exchange.
struct AtomAttack {
    std::string id;
    std::string description;
    Role role = Role::Scout;
    std::string target_env;
    std::string prompt_template;                     // `{placeholder}` slots
    std::vector<std::string> entity_requirements;    // req(a), ordered
    double atomic_score = 0.0;                       // Score(a), in [0,100]
    std::vector<std::string> risk_categories;        // subset of R1..R8
    std::vector<std::string> failure_modes;          // subset of M1..M9
};

// Lowercase alphanumeric tokens of a text.
std::vector<std::string> tokenize(const std::string& text);

// Sparse term-frequency vector.
using TermVector = std::map<std::string, double>;

TermVector term_vector(const std::string& text);

// Cosine similarity in [0,1]; 0 when either vector is empty.
double cosine_similarity(const TermVector& a, const TermVector& b);

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LibraryStats {
    std::map<std::string, int> role_counts;          // per role name
    int total = 0;
    int environments_overall = 0;                    // distinct target_env
    std::map<std::string, int> environments_per_role;
    std::map<std::string, int> risk_histogram;       // R1..R8
    std::map<std::string, int> mode_histogram;       // M1..M9
};

// Immutable after construction; safe to share across campaigns.
class AttackLibrary {
public:
    AttackLibrary() = default;
    explicit AttackLibrary(std::vector<AtomAttack> attacks);

    const std::vector<AtomAttack>& attacks() const { return attacks_; }
    const AtomAttack* find(const std::string& id) const;
    std::size_t size() const { return attacks_.size(); }
    bool empty() const { return attacks_.empty(); }

    // Top-k by descending cosine similarity between the belief query (all
    // entity keys and values concatenated) and attack descriptions; ties by
    // ascending id. Parallel scoring; identical output to retrieve_serial.
    std::vector<const AtomAttack*> retrieve(const world::BeliefState& belief, int k) const;
    std::vector<const AtomAttack*> retrieve_serial(const world::BeliefState& belief, int k) const;

    LibraryStats stats() const;

private:
    std::vector<const AtomAttack*> rank(std::vector<double> scores, int k) const;

    std::vector<AtomAttack> attacks_;
    std::vector<TermVector> index_;  // one term-frequency vector per attack
};

// Validates every AtomAttack invariant; throws ValidationError naming the
// offending id and rule.
void validate(const std::vector<AtomAttack>& attacks);

// Attack-file format: one JSON record per line, exactly the AtomAttack
// field names, unknown keys rejected.
AttackLibrary load_library(const std::string& path);
AttackLibrary parse_library(const std::string& text);
std::string serialize_library(const AttackLibrary& lib);
void save_library(const AttackLibrary& lib, const std::string& path);

// Single-link agglomerative clustering on description similarity: attacks
// land in one cluster when connected by pairwise similarity >= threshold.
std::vector<std::vector<const AtomAttack*>> cluster(
    const std::vector<const AtomAttack*>& candidates, double threshold);

// The cluster with the highest mean atomic_score; ties by smallest member id.
const std::vector<const AtomAttack*>& pick_cluster(
    const std::vector<std::vector<const AtomAttack*>>& clusters);

// Procedural generator: one Scout per visible fact, one Seeder per mutation
// rule, one Exploiter per exploit rule. Pure function of the spec.
std::vector<AtomAttack> generate_atoms(const sandbox::EnvironmentSpec& env);

// Default atomic scores assigned by the generator.
inline constexpr double kScoutDefaultScore = 20.0;
inline constexpr double kSeederDefaultScore = 40.0;

// Convenience overloads against AtomAttack fields.
world::BeliefState fuse(const world::BeliefState& b, const AtomAttack& action,
                        const world::Observation& obs, const world::EntityExtractor& extractor);
std::string provision_context(const world::BeliefState& b, const AtomAttack& action);
double entity_usage(const world::BeliefState& b, const AtomAttack& action);

}  // namespace dream::lib
