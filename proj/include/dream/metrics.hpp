#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dream/planner.hpp"

namespace dream::metrics {

struct CampaignReport {
    double chain_score = 0.0;
    double attack_success_rate = 0.0;   // percent of steps that breached
    double overall_defense = 0.0;       // all defense dimensions in [0,100]
    double damage_mitigation = 0.0;
    double attack_observability = 0.0;
    double contextual_isolation = 0.0;
    std::map<std::string, int> risk_histogram;  // R1..R8 over successful steps
    std::map<std::string, int> mode_histogram;  // M1..M9 over successful steps
    int chain_length = 0;
    int distinct_environments = 0;
};

// Discounted cumulative reward of a chain.
double chain_score(const std::vector<double>& rewards, double gamma);

// Percent of successful steps; 0 for an empty chain.
double asr(const std::vector<plan::ChainStep>& steps);

// The five-dimension defense vector plus histograms for one finished chain.
// Formulas documented in the README; all dimensions land in [0,100]. The
// library, when given, supplies risk/failure tags for the histograms.
CampaignReport score_chain(const plan::AttackChain& chain, double gamma,
                           const lib::AttackLibrary* library = nullptr);

// Exponential reference curve 1.19^n.
double baseline(int n);

// ln(score) - ln(baseline(n)). Requires score > 0.
double log_diff(double score, int n);

struct WilcoxonResult {
    int n_used = 0;              // after dropping zero differences
    double w_statistic = 0.0;    // sum of positive ranks
    double p_value = 1.0;        // one-tailed, H_a: median > 0
    double median_diff = 0.0;
    bool defined = false;        // false when every difference is zero
};

// One-tailed Wilcoxon signed-rank test. Zero differences are dropped,
// absolute values ranked with average ranks for ties. Exact p by full sign
// enumeration for n <= 12, normal approximation with tie and continuity
// corrections beyond.
WilcoxonResult wilcoxon_one_tailed(const std::vector<double>& diffs);

}  // namespace dream::metrics
