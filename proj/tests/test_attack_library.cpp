#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "dream/attack.hpp"

using namespace dream;

namespace {

lib::AtomAttack atk(const std::string& id, const std::string& desc, lib::Role role,
                    const std::string& env, double score,
                    std::vector<std::string> req = {}, std::string tmpl = "probe") {
    lib::AtomAttack a;
    a.id = id;
    a.description = desc;
    a.role = role;
    a.target_env = env;
    a.prompt_template = std::move(tmpl);
    a.entity_requirements = std::move(req);
    a.atomic_score = score;
    return a;
}

world::BeliefState belief_with(const std::map<std::string, std::string>& kv) {
    world::BeliefState b;
    for (const auto& [k, v] : kv)
        b.entities[k] = {k, v, world::EntityType::Fact, "env", 1};
    return b;
}

// Independent cosine oracle over whitespace-split lowercase-alnum tokens.
double oracle_cosine(const std::string& x, const std::string& y) {
    auto counts = [](const std::string& s) {
        std::map<std::string, int> c;
        std::string cur;
        for (char ch : s) {
            if (std::isalnum(static_cast<unsigned char>(ch))) {
                cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            } else if (!cur.empty()) {
                c[cur]++;
                cur.clear();
            }
        }
        if (!cur.empty()) c[cur]++;
        return c;
    };
    auto cx = counts(x), cy = counts(y);
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (const auto& [t, f] : cx) {
        nx += static_cast<double>(f) * f;
        auto it = cy.find(t);
        if (it != cy.end()) dot += static_cast<double>(f) * it->second;
    }
    for (const auto& [t, f] : cy) ny += static_cast<double>(f) * f;
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return dot / (std::sqrt(nx) * std::sqrt(ny));
}

std::string random_text(std::mt19937_64& rng) {
    static const char* kWords[] = {"customer", "record", "token",  "delete", "scan",
                                   "sensor",   "archive", "billing", "node", "probe"};
    std::string s;
    int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) s += std::string(kWords[rng() % 10]) + " ";
    return s;
}

}  // namespace

TEST_CASE("parse_library accepts valid records and counts roles") {
    const std::string text = R"({"id":"a1","description":"scout probe","role":"Scout","target_env":"e1","prompt_template":"look","entity_requirements":[],"atomic_score":20.0,"risk_categories":[],"failure_modes":[]}
{"id":"a2","description":"seed state","role":"Seeder","target_env":"e1","prompt_template":"push","entity_requirements":[],"atomic_score":40.0,"risk_categories":[],"failure_modes":[]}
{"id":"a3","description":"exploit hole","role":"Exploiter","target_env":"e2","prompt_template":"boom","entity_requirements":[],"atomic_score":90.0,"risk_categories":["R1"],"failure_modes":["M5"]}
)";
    auto library = lib::parse_library(text);
    CHECK(library.size() == 3);
    auto s = library.stats();
    CHECK(s.total == 3);
    CHECK(s.role_counts.at("Scout") == 1);
    CHECK(s.role_counts.at("Seeder") == 1);
    CHECK(s.role_counts.at("Exploiter") == 1);
    CHECK(s.environments_overall == 2);
    CHECK(s.risk_histogram.at("R1") == 1);
    CHECK(s.mode_histogram.at("M5") == 1);
}

TEST_CASE("invariant violations name the offending attack") {
    SUBCASE("placeholder not in requirements") {
        std::vector<lib::AtomAttack> attacks = {
            atk("bad-tmpl", "d", lib::Role::Exploiter, "e", 10.0, {}, "hit {customer_id}")};
        try {
            lib::validate(attacks);
            FAIL("expected ValidationError");
        } catch (const lib::ValidationError& e) {
            CHECK(std::string(e.what()).find("bad-tmpl") != std::string::npos);
            CHECK(std::string(e.what()).find("customer_id") != std::string::npos);
        }
    }
    SUBCASE("score out of range") {
        CHECK_THROWS_AS(lib::validate({atk("hot", "d", lib::Role::Scout, "e", 101.0)}),
                        lib::ValidationError);
        CHECK_THROWS_AS(lib::validate({atk("cold", "d", lib::Role::Scout, "e", -1.0)}),
                        lib::ValidationError);
    }
    SUBCASE("duplicate ids") {
        CHECK_THROWS_AS(lib::validate({atk("dup", "d", lib::Role::Scout, "e", 1.0),
                                       atk("dup", "d", lib::Role::Scout, "e", 1.0)}),
                        lib::ValidationError);
    }
    SUBCASE("unknown tags") {
        auto a = atk("tagged", "d", lib::Role::Scout, "e", 1.0);
        a.risk_categories = {"R99"};
        CHECK_THROWS_AS(lib::validate({a}), lib::ValidationError);
        a.risk_categories = {};
        a.failure_modes = {"M0"};
        CHECK_THROWS_AS(lib::validate({a}), lib::ValidationError);
    }
}

TEST_CASE("parse failures report the line") {
    try {
        lib::parse_library(R"({"id":"x","description":"d","role":"Scout","target_env":"e","prompt_template":"p","atomic_score":1.0,"surprise":true})");
        FAIL("expected ParseError");
    } catch (const lib::ParseError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        CHECK(std::string(e.what()).find("surprise") != std::string::npos);
    }
    CHECK_THROWS_AS(lib::parse_library("not json"), lib::ParseError);
}

TEST_CASE("empty input gives an empty library with zero stats") {
    auto library = lib::parse_library("");
    CHECK(library.empty());
    auto s = library.stats();
    CHECK(s.total == 0);
    CHECK(s.environments_overall == 0);
    CHECK(s.role_counts.at("Scout") == 0);
}

TEST_CASE("per-role environment counts can exceed the overall distinct count") {
    // Two attacks share e1, one sits on e2: overall distinct = 2 while the
    // per-role distinct counts sum to 3.
    lib::AttackLibrary library({atk("s1", "d", lib::Role::Scout, "e1", 10.0),
                                atk("x1", "d", lib::Role::Exploiter, "e1", 10.0),
                                atk("x2", "d", lib::Role::Exploiter, "e2", 10.0)});
    auto s = library.stats();
    CHECK(s.environments_overall == 2);
    int per_role_sum = 0;
    for (const auto& [_, n] : s.environments_per_role) per_role_sum += n;
    CHECK(per_role_sum == 3);
}

TEST_CASE("retrieve ranks by cosine similarity to the belief query") {
    lib::AttackLibrary library(
        {atk("A", "delete customer record by customer id", lib::Role::Exploiter, "e", 50.0),
         atk("B", "scan weather sensors", lib::Role::Scout, "e", 50.0)});
    auto b = belief_with({{"customer_id", "C1"}});

    auto top = library.retrieve(b, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0]->id == "A");

    // Hand check against the independent oracle: query text is keys+values.
    double sim_a = oracle_cosine("customer_id C1", "delete customer record by customer id");
    double sim_b = oracle_cosine("customer_id C1", "scan weather sensors");
    CHECK(sim_a > sim_b);
    CHECK(sim_a == doctest::Approx(3.0 / std::sqrt(24.0)));
    CHECK(sim_b == doctest::Approx(0.0));
}

TEST_CASE("retrieve tie-breaks by id and truncates correctly") {
    lib::AttackLibrary library({atk("c", "alpha", lib::Role::Scout, "e", 1.0),
                                atk("a", "beta", lib::Role::Scout, "e", 1.0),
                                atk("b", "gamma", lib::Role::Scout, "e", 1.0)});
    world::BeliefState empty;  // empty query: all similarities zero
    auto ranked = library.retrieve(empty, 2);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0]->id == "a");
    CHECK(ranked[1]->id == "b");

    auto all = library.retrieve(empty, 99);
    CHECK(all.size() == 3);
    CHECK(all[2]->id == "c");

    CHECK(lib::AttackLibrary{}.retrieve(empty, 3).empty());
}

TEST_CASE("retrieval is deterministic and the parallel path matches serial") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<lib::AtomAttack> attacks;
        int n = 5 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i)
            attacks.push_back(atk("atk-" + std::to_string(1000 + i), random_text(rng),
                                  lib::Role::Scout, "e", 10.0));
        lib::AttackLibrary library(std::move(attacks));
        auto b = belief_with({{"q", random_text(rng)}});

        auto first = library.retrieve(b, 10);
        auto second = library.retrieve(b, 10);
        auto serial = library.retrieve_serial(b, 10);
        REQUIRE(first.size() == second.size());
        REQUIRE(first.size() == serial.size());
        for (std::size_t i = 0; i < first.size(); ++i) {
            CHECK(first[i]->id == second[i]->id);
            CHECK(first[i]->id == serial[i]->id);
        }
    }
}

TEST_CASE("cosine similarity is symmetric, bounded, and reflexive") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        auto x = lib::term_vector(random_text(rng));
        auto y = lib::term_vector(random_text(rng));
        double sxy = lib::cosine_similarity(x, y);
        CHECK(sxy == lib::cosine_similarity(y, x));
        CHECK(sxy >= 0.0);
        CHECK(sxy <= 1.0 + 1e-12);
        if (!x.empty()) CHECK(lib::cosine_similarity(x, x) == doctest::Approx(1.0));
    }
}

TEST_CASE("single-link clustering groups by pairwise similarity") {
    auto a = atk("A", "delete customer record", lib::Role::Exploiter, "e", 55.0);
    auto b = atk("B", "purge customer record", lib::Role::Exploiter, "e", 55.0);
    auto c = atk("C", "scan weather sensors", lib::Role::Scout, "e", 70.0);

    // Hand-computed: sim(A,B)=2/3, sim to C = 0.
    CHECK(oracle_cosine(a.description, b.description) == doctest::Approx(2.0 / 3.0));
    CHECK(oracle_cosine(a.description, c.description) == doctest::Approx(0.0));

    auto clusters = lib::cluster({&a, &b, &c}, 0.5);
    REQUIRE(clusters.size() == 2);
    REQUIRE(clusters[0].size() == 2);
    CHECK(clusters[0][0]->id == "A");
    CHECK(clusters[0][1]->id == "B");
    CHECK(clusters[1][0]->id == "C");

    SUBCASE("threshold 0 merges everything") {
        CHECK(lib::cluster({&a, &b, &c}, 0.0).size() == 1);
    }
    SUBCASE("threshold above 1 degenerates to singletons") {
        CHECK(lib::cluster({&a, &b, &c}, 1.01).size() == 3);
    }
    SUBCASE("pick_cluster prefers the higher mean score") {
        auto& best = lib::pick_cluster(clusters);
        REQUIRE(best.size() == 1);
        CHECK(best[0]->id == "C");  // mean 70 beats mean 55
    }
}

TEST_CASE("pick_cluster ties break on the smallest member id") {
    auto a = atk("aa", "first thing", lib::Role::Scout, "e", 50.0);
    auto b = atk("zz", "second thing entirely different", lib::Role::Scout, "e", 50.0);
    auto clusters = lib::cluster({&b, &a}, 1.01);
    auto& best = lib::pick_cluster(clusters);
    CHECK(best[0]->id == "aa");
}

TEST_CASE("clusters partition the candidate set") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<lib::AtomAttack> attacks;
        int n = 2 + static_cast<int>(rng() % 10);
        for (int i = 0; i < n; ++i)
            attacks.push_back(atk("p" + std::to_string(i), random_text(rng), lib::Role::Scout,
                                  "e", 10.0));
        std::vector<const lib::AtomAttack*> cands;
        for (const auto& a : attacks) cands.push_back(&a);

        auto clusters = lib::cluster(cands, 0.4);
        std::set<std::string> seen;
        std::size_t covered = 0;
        for (const auto& cl : clusters) {
            for (const auto* m : cl) {
                CHECK(seen.insert(m->id).second);  // disjoint
                ++covered;
            }
        }
        CHECK(covered == cands.size());  // covering
    }
}

TEST_CASE("generate_atoms builds one attack per rule") {
    sandbox::EnvironmentSpec env;
    env.env_id = "factory";
    env.visible_facts = {{"badge_id", "B-1", world::EntityType::Identifier},
                         {"line_status", "OK", world::EntityType::Fact}};
    env.mutation_rules = {{{"badge_id"}, "door_open"}};
    env.exploit_rules = {{{"token", "node_id"}, {}, 90.0, {"R4"}, {"M2"}}};

    auto atoms = lib::generate_atoms(env);
    REQUIRE(atoms.size() == 4);
    CHECK(atoms[0].role == lib::Role::Scout);
    CHECK(atoms[1].role == lib::Role::Scout);
    CHECK(atoms[2].role == lib::Role::Seeder);
    CHECK(atoms[3].role == lib::Role::Exploiter);
    CHECK(atoms[0].atomic_score == lib::kScoutDefaultScore);
    CHECK(atoms[2].atomic_score == lib::kSeederDefaultScore);
    CHECK(atoms[3].entity_requirements == std::vector<std::string>{"token", "node_id"});
    CHECK(atoms[3].atomic_score == doctest::Approx(90.0));
    CHECK(atoms[3].risk_categories == std::vector<std::string>{"R4"});

    SUBCASE("no exploit rules, no Exploiters") {
        env.exploit_rules.clear();
        for (const auto& a : lib::generate_atoms(env)) CHECK(a.role != lib::Role::Exploiter);
    }
    SUBCASE("generated atoms satisfy every invariant and are deterministic") {
        CHECK_NOTHROW(lib::validate(atoms));
        auto again = lib::generate_atoms(env);
        REQUIRE(again.size() == atoms.size());
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            CHECK(again[i].id == atoms[i].id);
            CHECK(again[i].prompt_template == atoms[i].prompt_template);
        }
    }
}

TEST_CASE("generated atoms for every bundled environment validate") {
    for (const auto& env : sandbox::build_bundled_suite())
        CHECK_NOTHROW(lib::validate(lib::generate_atoms(env)));
}

TEST_CASE("serialize/parse round trip preserves the library") {
    auto library = lib::parse_library(lib::serialize_library(
        lib::AttackLibrary({atk("r1", "desc one", lib::Role::Seeder, "e9", 33.5, {"key"},
                                "use {key}")})));
    REQUIRE(library.size() == 1);
    const auto& a = library.attacks()[0];
    CHECK(a.id == "r1");
    CHECK(a.role == lib::Role::Seeder);
    CHECK(a.atomic_score == doctest::Approx(33.5));
    CHECK(a.entity_requirements == std::vector<std::string>{"key"});
}

TEST_CASE("taxonomy tables carry the documented labels") {
    CHECK(lib::risk_categories().size() == 8);
    CHECK(lib::failure_modes().size() == 9);
    CHECK(lib::risk_categories()[0].code == "R1");
    CHECK(lib::risk_categories()[0].label == "Leak sensitive data/information");
    CHECK(lib::failure_modes()[4].code == "M5");
    CHECK(lib::failure_modes()[4].label ==
          "Ignore implicit or potential risks, and incorrectly call tools");
    CHECK(lib::is_risk_code("R8"));
    CHECK_FALSE(lib::is_risk_code("R9"));
    CHECK(lib::is_failure_code("M9"));
    CHECK_FALSE(lib::is_failure_code("M10"));
}
