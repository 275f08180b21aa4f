#pragma once

#include <string>
#include <vector>

#include "meanmatch/solver.hpp"

namespace meanmatch::theory {

/// Bi-Lipschitz and envelope constants of the well-posedness analysis,
/// evaluated from the market primitives.
struct TheoryConstants {
    // per-side utility envelopes
    double gamma_a = 0.0, Gamma_a = 0.0, gamma_b = 0.0, Gamma_b = 0.0;  // running
    double l_a = 0.0, L_a = 0.0, l_b = 0.0, L_b = 0.0;                  // terminal
    // initial-density envelopes f0 <= C / (1 + z^(2+nu))
    double C_a = 0.0, C_b = 0.0, nu = 0.5;
    // value-function slope and growth bounds
    double k_a = 0.0, k_b = 0.0, K_a = 0.0, K_b = 0.0, Pi_a = 0.0, Pi_b = 0.0;
    // uniqueness-condition constants
    double M_a = 0.0, M_b = 0.0, M2 = 0.0, M3 = 0.0;
    // density time-regularity rates and the proof sub-interval widths
    double c_a = 0.0, c_b = 0.0, delta_1 = 0.0, delta_2 = 0.0;
};

/// Smallest grid-certified envelope constant: max(1 + 1e-9,
/// max_nodes (1 + z^(2+nu)) f0(z)).
double envelope_constant(std::span<const double> f0, std::span<const double> nodes, double nu);

TheoryConstants compute_constants(const MarketParams& params, const Discretization& disc,
                                  double nu = 0.5);

/// The no-matching sufficient condition: the product of the two
/// time-weighted reservation brackets exceeds 1 at every time node.
struct NoMatchCheck {
    std::vector<double> product;  // per time node
    bool holds_everywhere = false;
};
NoMatchCheck check_no_match(const MarketParams& params, const Discretization& disc);

/// Nonempty-matching-region sufficient condition K_A * K_B <= 1.
bool check_nonempty(const TheoryConstants& c);

/// The two uniqueness conditions with their operand values.
struct UniquenessCheck {
    bool cond_time_horizon = false;  // (C.I)
    bool cond_structural = false;    // (C.II)
    double lhs_i = 0.0, lhs_ii = 0.0, rhs_ii = 0.0;
};
UniquenessCheck check_uniqueness(const TheoryConstants& c, const MarketParams& params);

struct AuditCheck {
    std::string name;
    bool pass = false;
    double worst_value = 0.0;
    std::string worst_location;
};

struct AuditOptions {
    double slope_slack = 0.05;       // relative slack on the K and Pi bounds
    double zero_anchor_factor = 10.0;  // |V(0,t)| <= factor * tol
    double tol = 1e-4;
    double f_monotone_rel_slack = 1e-5;
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    bool all_pass = false;
};

/// Audits a converged state against the provable properties: monotone V,
/// slope and growth bounds, zero-quality anchor, density monotonicity and
/// bounds, the weighted-mass bound, and positive terminal unmatched mass.
AuditReport audit_solution(const EquilibriumState& state, const TheoryConstants& constants,
                           const Discretization& disc, const AuditOptions& options = {});

std::string audit_report_to_json(const AuditReport& report);
std::string constants_to_json(const TheoryConstants& c);

}  // namespace meanmatch::theory
