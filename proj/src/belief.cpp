#include "dream/belief.hpp"

#include <cctype>
#include <regex>

namespace dream::world {

const char* to_string(EntityType t) {
    switch (t) {
        case EntityType::Identifier: return "Identifier";
        case EntityType::Credential: return "Credential";
        case EntityType::Privilege: return "Privilege";
        case EntityType::Resource: return "Resource";
        case EntityType::Fact: return "Fact";
    }
    return "Fact";
}

EntityType entity_type_from_string(const std::string& s) {
    if (s == "Identifier") return EntityType::Identifier;
    if (s == "Credential") return EntityType::Credential;
    if (s == "Privilege") return EntityType::Privilege;
    if (s == "Resource") return EntityType::Resource;
    if (s == "Fact") return EntityType::Fact;
    throw std::invalid_argument("unknown entity type: " + s);
}

std::set<std::string> BeliefState::keys() const {
    std::set<std::string> out;
    for (const auto& [k, _] : entities) out.insert(k);
    return out;
}

std::vector<Entity> StructuredExtractor::extract(const Observation& obs) const {
    return obs.structured_leaks;
}

std::vector<Entity> PatternExtractor::extract(const Observation& obs) const {
    static const std::regex kPair(R"(([A-Za-z_][A-Za-z0-9_]*)=([^\s,;]+))");
    std::vector<Entity> out;
    auto begin = std::sregex_iterator(obs.text.begin(), obs.text.end(), kPair);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        Entity e;
        e.key = (*it)[1];
        e.value = (*it)[2];
        e.entity_type = EntityType::Fact;
        out.push_back(std::move(e));
    }
    return out;
}

MissingEntityError::MissingEntityError(std::string key)
    : std::runtime_error("missing required entity: " + key), key_(std::move(key)) {}

BeliefState fuse(const BeliefState& b, const std::string& target_env,
                 const Observation& obs, const EntityExtractor& extractor) {
    BeliefState next = b;
    next.timestep = b.timestep + 1;
    next.visited_envs.insert(target_env);
    for (Entity e : extractor.extract(obs)) {
        if (e.source_env.empty()) e.source_env = target_env;
        e.discovered_at = next.timestep;
        auto it = next.entities.find(e.key);
        if (it != next.entities.end()) {
            next.archived.push_back(it->second);  // last write wins, keep provenance
            it->second = std::move(e);
        } else {
            next.entities.emplace(e.key, std::move(e));
        }
    }
    return next;
}

std::string provision_context(const BeliefState& b, const std::string& prompt_template,
                              const std::vector<std::string>& requirements) {
    for (const auto& key : requirements) {
        if (!b.entities.contains(key)) throw MissingEntityError(key);
    }
    std::string out;
    out.reserve(prompt_template.size());
    for (std::size_t i = 0; i < prompt_template.size();) {
        if (prompt_template[i] == '{') {
            auto close = prompt_template.find('}', i);
            if (close != std::string::npos) {
                std::string key = prompt_template.substr(i + 1, close - i - 1);
                auto it = b.entities.find(key);
                if (it == b.entities.end()) throw MissingEntityError(key);
                out += it->second.value;
                i = close + 1;
                continue;
            }
        }
        out += prompt_template[i++];
    }
    return out;
}

double entity_usage(const BeliefState& b, const std::vector<std::string>& requirements) {
    if (requirements.empty()) return 0.0;  // recon earns no chaining credit
    std::size_t held = 0;
    for (const auto& key : requirements) {
        if (b.entities.contains(key)) ++held;
    }
    return static_cast<double>(held) / static_cast<double>(requirements.size());
}

}  // namespace dream::world
