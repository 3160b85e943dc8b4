// Compares the OpenMP-parallel retrieval scoring path against the serial
// reference on a synthetic library, and checks both agree.
#include <chrono>
#include <iostream>
#include <random>

#include "dream/attack.hpp"

using namespace dream;

namespace {

lib::AttackLibrary synthetic_library(std::size_t n, std::mt19937_64& rng) {
    static const char* kWords[] = {"customer", "record",  "token",   "delete", "scan",
                                   "sensor",   "archive", "billing", "node",   "probe",
                                   "exploit",  "ledger",  "grid",    "vault",  "export"};
    std::uniform_int_distribution<std::size_t> pick(0, std::size(kWords) - 1);
    std::uniform_int_distribution<int> len(4, 12);
    std::vector<lib::AtomAttack> attacks;
    attacks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        lib::AtomAttack a;
        a.id = "atk-" + std::to_string(100000 + i);
        std::string desc;
        for (int w = 0; w < len(rng); ++w) desc += std::string(kWords[pick(rng)]) + " ";
        a.description = desc;
        a.role = lib::Role::Scout;
        a.target_env = "env-" + std::to_string(i % 37);
        a.prompt_template = "probe";
        a.atomic_score = static_cast<double>(i % 101);
        attacks.push_back(std::move(a));
    }
    return lib::AttackLibrary(std::move(attacks));
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t n = argc > 1 ? std::stoul(argv[1]) : 20000;
    int queries = argc > 2 ? std::stoi(argv[2]) : 50;

    std::mt19937_64 rng(7);
    auto library = synthetic_library(n, rng);

    world::BeliefState belief;
    belief.entities["customer_id"] = {"customer_id", "C-1", world::EntityType::Identifier, "e", 1};
    belief.entities["token"] = {"token", "tok billing vault archive", world::EntityType::Credential,
                                "e", 1};

    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    std::vector<const lib::AtomAttack*> serial;
    for (int q = 0; q < queries; ++q) serial = library.retrieve_serial(belief, 32);
    auto t1 = clock::now();
    std::vector<const lib::AtomAttack*> parallel;
    for (int q = 0; q < queries; ++q) parallel = library.retrieve(belief, 32);
    auto t2 = clock::now();

    if (serial.size() != parallel.size()) {
        std::cerr << "MISMATCH: result sizes differ\n";
        return 1;
    }
    for (std::size_t i = 0; i < serial.size(); ++i) {
        if (serial[i]->id != parallel[i]->id) {
            std::cerr << "MISMATCH at rank " << i << "\n";
            return 1;
        }
    }

    auto ms = [](auto d) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
    };
    std::cout << "library size: " << n << ", queries: " << queries << "\n";
    std::cout << "serial:   " << ms(t1 - t0) << " ms\n";
    std::cout << "parallel: " << ms(t2 - t1) << " ms\n";
    std::cout << "results identical\n";
    return 0;
}
