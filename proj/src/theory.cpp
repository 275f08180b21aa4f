#include "meanmatch/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace meanmatch::theory {

namespace {

std::string cell_location(std::size_t i, std::size_t k) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "(i=%zu,k=%zu)", i, k);
    return buf;
}

}  // namespace

double envelope_constant(std::span<const double> f0, std::span<const double> nodes, double nu) {
    double c = 1.0 + 1e-9;
    for (std::size_t i = 0; i < f0.size(); ++i) {
        const double z = nodes[i];
        c = std::max(c, (1.0 + std::pow(z, 2.0 + nu)) * f0[i]);
    }
    return c;
}

TheoryConstants compute_constants(const MarketParams& params, const Discretization& disc,
                                  double nu) {
    TheoryConstants c;
    c.nu = nu;
    c.gamma_a = params.side_a.running.lower_slope(disc.grid_a);
    c.Gamma_a = params.side_a.running.upper_slope(disc.grid_a);
    c.gamma_b = params.side_b.running.lower_slope(disc.grid_b);
    c.Gamma_b = params.side_b.running.upper_slope(disc.grid_b);
    c.l_a = params.side_a.terminal.lower_slope(disc.grid_a);
    c.L_a = params.side_a.terminal.upper_slope(disc.grid_a);
    c.l_b = params.side_b.terminal.lower_slope(disc.grid_b);
    c.L_b = params.side_b.terminal.upper_slope(disc.grid_b);
    c.C_a = envelope_constant(disc.f_a0, disc.grid_a.nodes(), nu);
    c.C_b = envelope_constant(disc.f_b0, disc.grid_b.nodes(), nu);

    const double rho = params.rho;
    const double la = params.side_a.lambda, lb = params.side_b.lambda;
    const double pow_nu = std::pow(2.0, 1.0 + nu);

    c.k_a = std::min(c.gamma_a / (rho + lb), c.l_a);
    c.k_b = std::min(c.gamma_b / (rho + la), c.l_b);
    c.K_a = std::max(lb * c.C_b / (rho * c.k_b) + c.Gamma_a / rho, c.L_a);
    c.K_b = std::max(la * c.C_a / (rho * c.k_a) + c.Gamma_b / rho, c.L_b);
    c.Pi_a = std::max(lb / rho * (pow_nu * c.C_b / nu + c.Gamma_a), c.L_a);
    c.Pi_b = std::max(la / rho * (pow_nu * c.C_a / nu + c.Gamma_b), c.L_b);

    c.M_a = std::max(2.0, (1.0 + c.C_a) * (1.0 + c.k_a) / (c.k_a * c.k_a));
    c.M_b = std::max(2.0, (1.0 + c.C_b) * (1.0 + c.k_b) / (c.k_b * c.k_b));
    c.M2 = std::max(la + lb * pow_nu * c.C_a / nu, lb + la * pow_nu * c.C_b / nu);
    c.M3 = std::pow(2.0, 3.0 + nu) * c.C_a * c.C_b / nu *
           std::max((la + lb * (1.0 + c.k_a)) / c.k_a, (lb + la * (1.0 + c.k_b)) / c.k_b);

    c.c_a = lb * pow_nu * c.C_a / nu;
    c.c_b = la * pow_nu * c.C_b / nu;
    c.delta_1 = std::min({1.0 / (4.0 * lb), 1.0 / (4.0 * la),
                          c.k_a * c.k_b /
                              (2.0 * std::sqrt(2.0 * la * (1.0 + c.C_a) * (1.0 + c.k_a) * lb *
                                               (1.0 + c.C_b) * (1.0 + c.k_b)))});
    c.delta_2 = std::min(
        1.0, std::sqrt(nu * nu * std::exp(-(la + lb)) /
                       (std::pow(2.0, 3.0 + 2.0 * nu) * la * lb * c.C_a * c.C_b)));
    return c;
}

NoMatchCheck check_no_match(const MarketParams& params, const Discretization& disc) {
    NoMatchCheck out;
    const double rho = params.rho, T = params.horizon;
    const double la_term = params.side_a.terminal.lower_slope(disc.grid_a);
    const double lb_term = params.side_b.terminal.lower_slope(disc.grid_b);
    const double ga = params.side_a.running.lower_slope(disc.grid_a);
    const double gb = params.side_b.running.lower_slope(disc.grid_b);
    out.holds_everywhere = true;
    out.product.reserve(disc.time.n_nodes());
    for (std::size_t k = 0; k < disc.time.n_nodes(); ++k) {
        const double decay = std::exp(-rho * (T - disc.time.node(k)));
        const double bracket_a = decay * la_term + (1.0 - decay) * ga / rho;
        const double bracket_b = decay * lb_term + (1.0 - decay) * gb / rho;
        const double prod = bracket_a * bracket_b;
        out.product.push_back(prod);
        if (!(prod > 1.0)) out.holds_everywhere = false;
    }
    return out;
}

bool check_nonempty(const TheoryConstants& c) { return c.K_a * c.K_b <= 1.0; }

UniquenessCheck check_uniqueness(const TheoryConstants& c, const MarketParams& params) {
    UniquenessCheck out;
    const double rho = params.rho, T = params.horizon;
    const double la = params.side_a.lambda, lb = params.side_b.lambda;
    const double lmax = std::max(la, lb);
    const double lam_m = la * c.M_a + lb * c.M_b;
    out.lhs_i = c.M3 * lmax * std::exp(c.M2 * T) * ((1.0 - std::exp(-rho * T)) / rho) *
                ((std::exp(lam_m * T) - 1.0) / lam_m);
    out.cond_time_horizon = out.lhs_i < 1.0;
    out.lhs_ii = 2.0 * std::sqrt(lmax * c.M3);
    out.rhs_ii = rho - c.M2 - lam_m;
    out.cond_structural = out.lhs_ii < out.rhs_ii;
    return out;
}

AuditReport audit_solution(const EquilibriumState& state, const TheoryConstants& constants,
                           const Discretization& disc, const AuditOptions& opt) {
    AuditReport report;
    const std::size_t nt = disc.time.n_steps();

    struct SideRefs {
        const char* tag;
        const SpaceTimeField* v;
        const SpaceTimeField* f;
        const SpatialGrid* grid;
        const std::vector<double>* f0;
        double K, Pi, C;
    };
    const SideRefs sides[2] = {
        {"A", &state.v_a, &state.f_a, &disc.grid_a, &disc.f_a0, constants.K_a, constants.Pi_a,
         constants.C_a},
        {"B", &state.v_b, &state.f_b, &disc.grid_b, &disc.f_b0, constants.K_b, constants.Pi_b,
         constants.C_b}};

    for (const auto& s : sides) {
        const std::size_t nx = s.grid->n_nodes();
        const double dx = s.grid->dx();

        AuditCheck mono{std::string("V_") + s.tag + " monotone in quality", true, 0.0, ""};
        AuditCheck slope{std::string("V_") + s.tag + " slope <= K*(1+slack)", true, 0.0, ""};
        AuditCheck anchor{std::string("V_") + s.tag + "(0,t) ~ 0", true, 0.0, ""};
        AuditCheck growth{std::string("V_") + s.tag + "/(1+z) <= Pi*(1+slack)", true, 0.0, ""};
        AuditCheck fbounds{std::string("f_") + s.tag + " in [0, f0], nonincreasing in t", true,
                           0.0, ""};
        AuditCheck wmass{std::string("(1+z) f_") + s.tag + " mass <= 2^(1+nu) C/nu", true, 0.0,
                         ""};
        AuditCheck fpos{std::string("F_") + s.tag + "(T) > 0", true, 0.0, ""};

        const double slope_cap = s.K * (1.0 + opt.slope_slack);
        const double growth_cap = s.Pi * (1.0 + opt.slope_slack);
        const double anchor_cap = opt.zero_anchor_factor * opt.tol;

        for (std::size_t k = 0; k <= nt; ++k) {
            const double v0 = std::abs(s.v->at(0, k));
            if (v0 > anchor.worst_value) {
                anchor.worst_value = v0;
                anchor.worst_location = cell_location(0, k);
            }
            for (std::size_t i = 0; i < nx; ++i) {
                const double v = s.v->at(i, k);
                const double g = v / (1.0 + s.grid->node(i));
                if (g > growth.worst_value) {
                    growth.worst_value = g;
                    growth.worst_location = cell_location(i, k);
                }
                if (i > 0) {
                    const double dv = (v - s.v->at(i - 1, k)) / dx;
                    if (-dv > mono.worst_value) {
                        mono.worst_value = -dv;  // worst decrease
                        mono.worst_location = cell_location(i, k);
                    }
                    if (dv > slope.worst_value) {
                        slope.worst_value = dv;
                        slope.worst_location = cell_location(i, k);
                    }
                }
                const double f = s.f->at(i, k);
                const double f0 = (*s.f0)[i];
                double viol = std::max(-f, f - f0 * (1.0 + opt.f_monotone_rel_slack));
                if (k > 0) {
                    viol = std::max(
                        viol, f - s.f->at(i, k - 1) * (1.0 + opt.f_monotone_rel_slack));
                }
                if (viol > fbounds.worst_value) {
                    fbounds.worst_value = viol;
                    fbounds.worst_location = cell_location(i, k);
                }
            }
            // weighted mass bound of the admissible density class
            double weighted = 0.0;
            for (std::size_t i = 1; i < nx; ++i) {
                weighted += (1.0 + s.grid->node(i)) * s.f->at(i, k);
            }
            weighted *= dx;
            if (weighted > wmass.worst_value) {
                wmass.worst_value = weighted;
                wmass.worst_location = "t_" + std::to_string(k);
            }
        }
        double terminal_mass = 0.0;
        for (std::size_t i = 1; i < nx; ++i) terminal_mass += s.f->at(i, nt);
        terminal_mass *= dx;

        const double v_scale = [&] {
            double m = 1.0;
            for (double v : s.v->raw()) m = std::max(m, std::abs(v));
            return m;
        }();

        mono.pass = mono.worst_value <= 1e-9 * v_scale / dx;
        slope.pass = slope.worst_value <= slope_cap;
        anchor.pass = anchor.worst_value <= anchor_cap;
        growth.pass = growth.worst_value <= growth_cap;
        fbounds.pass = fbounds.worst_value <= 0.0;
        const double wcap = std::pow(2.0, 1.0 + constants.nu) * s.C / constants.nu;
        wmass.pass = wmass.worst_value <= wcap;
        fpos.worst_value = terminal_mass;
        fpos.worst_location = "t_" + std::to_string(nt);
        fpos.pass = terminal_mass > 0.0;

        report.checks.push_back(mono);
        report.checks.push_back(slope);
        report.checks.push_back(anchor);
        report.checks.push_back(growth);
        report.checks.push_back(fbounds);
        report.checks.push_back(wmass);
        report.checks.push_back(fpos);
    }
    report.all_pass = std::all_of(report.checks.begin(), report.checks.end(),
                                  [](const AuditCheck& c) { return c.pass; });
    return report;
}

std::string audit_report_to_json(const AuditReport& report) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : report.checks) {
        arr.push_back({{"check_name", c.name},
                       {"pass", c.pass},
                       {"worst_value", c.worst_value},
                       {"worst_location", c.worst_location}});
    }
    nlohmann::json j{{"checks", arr}, {"all_pass", report.all_pass}};
    return j.dump(2) + "\n";
}

std::string constants_to_json(const TheoryConstants& c) {
    nlohmann::json j{
        {"gamma_A", c.gamma_a}, {"Gamma_A", c.Gamma_a}, {"gamma_B", c.gamma_b},
        {"Gamma_B", c.Gamma_b}, {"l_A", c.l_a},         {"L_A", c.L_a},
        {"l_B", c.l_b},         {"L_B", c.L_b},         {"C_A", c.C_a},
        {"C_B", c.C_b},         {"nu", c.nu},           {"k_A", c.k_a},
        {"k_B", c.k_b},         {"K_A", c.K_a},         {"K_B", c.K_b},
        {"Pi_A", c.Pi_a},       {"Pi_B", c.Pi_b},       {"M_A", c.M_a},
        {"M_B", c.M_b},         {"M2", c.M2},           {"M3", c.M3},
        {"c_A", c.c_a},         {"c_B", c.c_b},         {"delta_1", c.delta_1},
        {"delta_2", c.delta_2}};
    return j.dump(2) + "\n";
}

}  // namespace meanmatch::theory
