#include "meanmatch/mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>

#include "json.hpp"

namespace meanmatch::mc {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng Rng::stream(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    Rng r;
    std::uint64_t sm = seed ^ fnv1a(label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    for (auto& word : r.s_) word = splitmix64(sm);
    return r;
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::exponential(double rate) {
    double u = uniform01();
    return -std::log1p(-u) / rate;
}

std::size_t Rng::index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<std::size_t>(v % bound);
}

AgentPopulation sample_population(const std::function<double(double)>& quantile, std::size_t n,
                                  std::uint64_t seed) {
    AgentPopulation pop;
    pop.seed = seed;
    pop.quality.resize(n);
    pop.matched.assign(n, 0);
    pop.match_time.assign(n, std::numeric_limits<double>::infinity());
    Rng rng = Rng::stream(seed, "population");
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform01();
        if (u <= 0.0) u = std::numeric_limits<double>::min();
        pop.quality[i] = quantile(u);
    }
    return pop;
}

double ThresholdField::eval(double x, double t) const {
    const std::size_t k = time->left_index(t);
    const double left = interpolate_time_slice(*v, *grid, x, k);
    if (!linear_in_time || k >= time->n_steps()) return left;
    const double right = interpolate_time_slice(*v, *grid, x, k + 1);
    const double w = (t - time->node(k)) / time->dt();
    return left + w * (right - left);
}

SimResult simulate_market(const SimConfig& config, AgentPopulation pop_a, AgentPopulation pop_b,
                          std::uint64_t seed) {
    struct Event {
        double t;
        std::uint32_t id;
        std::uint8_t side;  // 0 = A initiates, 1 = B initiates
        bool operator>(const Event& o) const { return t > o.t; }
    };
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> heap;

    SimResult out;
    Rng rng = Rng::stream(seed, "market");

    const double T = config.horizon;
    // side-A agents meet through the B-intensity process and vice versa
    const double rate_a = config.lambda_b;
    const double rate_b = config.lambda_a;
    for (std::uint32_t i = 0; i < pop_a.size(); ++i) {
        if (rate_a <= 0.0) break;
        const double t = rng.exponential(rate_a);
        if (t <= T) heap.push({t, i, 0});
    }
    for (std::uint32_t j = 0; j < pop_b.size(); ++j) {
        if (rate_b <= 0.0) break;
        const double t = rng.exponential(rate_b);
        if (t <= T) heap.push({t, j, 1});
    }

    while (!heap.empty()) {
        const Event ev = heap.top();
        heap.pop();
        const bool a_side = ev.side == 0;
        AgentPopulation& self = a_side ? pop_a : pop_b;
        AgentPopulation& other = a_side ? pop_b : pop_a;
        SimCounters& counters = a_side ? out.counters_a : out.counters_b;
        if (self.matched[ev.id]) continue;  // stale event from PhysicalPairing
        counters.rings += 1;

        const double x = self.quality[ev.id];
        const double avail = a_side ? config.available_b : config.available_a;
        bool matched_now = false;
        double partner_quality = 0.0;
        EventRecord::Outcome outcome = EventRecord::Outcome::FailedStatus;

        const double u_avail = rng.uniform01();
        if (u_avail >= avail) {
            counters.ambient_failures += 1;
        } else {
            const std::size_t pick = rng.index(other.size());
            partner_quality = other.quality[pick];
            if (other.matched[pick]) {
                counters.status_failures += 1;
            } else {
                const ThresholdField& own =
                    a_side ? config.threshold_a : config.threshold_b;
                const ThresholdField& theirs =
                    a_side ? config.threshold_b : config.threshold_a;
                const bool self_accepts = partner_quality >= own.eval(x, ev.t);
                const bool other_accepts = x >= theirs.eval(partner_quality, ev.t);
                if (self_accepts && other_accepts) {
                    matched_now = true;
                    outcome = EventRecord::Outcome::Matched;
                    counters.matches += 1;
                    self.matched[ev.id] = 1;
                    self.match_time[ev.id] = ev.t;
                    if (config.mode == PairingMode::PhysicalPairing) {
                        other.matched[pick] = 1;
                        other.match_time[pick] = ev.t;
                    }
                } else {
                    outcome = EventRecord::Outcome::FailedThreshold;
                    counters.threshold_failures += 1;
                }
            }
        }
        if (config.log_events) {
            out.events.push_back({ev.t, a_side ? 'A' : 'B', ev.id, partner_quality, outcome});
        }
        if (!matched_now) {
            const double rate = a_side ? rate_a : rate_b;
            const double next = ev.t + rng.exponential(rate);
            if (next <= T) heap.push({next, ev.id, ev.side});
        }
    }
    out.pop_a = std::move(pop_a);
    out.pop_b = std::move(pop_b);
    return out;
}

SurvivalCurves empirical_survival(const AgentPopulation& pop,
                                  const std::vector<double>& bin_edges,
                                  std::span<const double> times) {
    if (bin_edges.size() < 2) throw std::invalid_argument("empirical_survival: need >= 1 bin");
    const std::size_t nb = bin_edges.size() - 1;
    SurvivalCurves out;
    out.bin_edges = bin_edges;
    out.bin_counts.assign(nb, 0);
    out.survival.assign(nb, std::vector<double>(times.size(), 0.0));
    out.std_error.assign(nb, std::vector<double>(times.size(), 0.0));

    std::vector<std::vector<double>> times_by_bin(nb);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const double q = pop.quality[i];
        if (q < bin_edges.front() || q > bin_edges.back()) continue;
        std::size_t b = static_cast<std::size_t>(
            std::upper_bound(bin_edges.begin(), bin_edges.end(), q) - bin_edges.begin());
        b = b > 0 ? b - 1 : 0;
        if (b >= nb) b = nb - 1;
        out.bin_counts[b] += 1;
        times_by_bin[b].push_back(pop.match_time[i]);
    }
    for (std::size_t b = 0; b < nb; ++b) {
        auto& mt = times_by_bin[b];
        std::sort(mt.begin(), mt.end());
        const double n = static_cast<double>(mt.size());
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (mt.empty()) continue;
            const std::size_t matched_by_t = static_cast<std::size_t>(
                std::upper_bound(mt.begin(), mt.end(), times[k]) - mt.begin());
            const double s = 1.0 - static_cast<double>(matched_by_t) / n;
            out.survival[b][k] = s;
            out.std_error[b][k] = std::sqrt(std::max(s * (1.0 - s), 0.0) / n);
        }
    }
    return out;
}

namespace {

struct PooledSide {
    std::vector<double> quality;
    std::vector<double> match_time;
};

CompareReport compare_side(const PooledSide& pool, const SpaceTimeField& f,
                           const SpatialGrid& grid, const TimeGrid& time,
                           const std::vector<double>& f0, const std::vector<double>& edges) {
    CompareReport rep;
    const std::size_t ntn = time.n_nodes();
    const std::size_t nb = edges.size() - 1;

    // pooled empirical unmatched share on the PDE time nodes
    std::vector<double> sorted_times = pool.match_time;
    std::sort(sorted_times.begin(), sorted_times.end());
    const double n_total = static_cast<double>(sorted_times.size());
    std::vector<double> f_mc(ntn);
    for (std::size_t k = 0; k < ntn; ++k) {
        const std::size_t matched_by_t = static_cast<std::size_t>(
            std::upper_bound(sorted_times.begin(), sorted_times.end(), time.node(k)) -
            sorted_times.begin());
        f_mc[k] = 1.0 - static_cast<double>(matched_by_t) / n_total;
    }
    // PDE unmatched mass normalized to its initial value
    std::vector<double> col(grid.n_nodes());
    std::vector<double> f_pde(ntn);
    for (std::size_t k = 0; k < ntn; ++k) {
        f.time_slice(k, col);
        f_pde[k] = riemann_sum_right(col, grid.dx());
    }
    const double mass0 = f_pde[0];
    for (double& v : f_pde) v /= mass0;
    double dev = 0.0;
    for (std::size_t k = 0; k < ntn; ++k) dev = std::max(dev, std::abs(f_mc[k] - f_pde[k]));
    rep.max_abs_dev_f_a = dev;  // caller renames per side

    // binned survival: MC pooled vs PDE bin-aggregated
    AgentPopulation pooled;
    pooled.quality = pool.quality;
    pooled.match_time = pool.match_time;
    pooled.matched.assign(pool.quality.size(), 0);
    const auto curves = empirical_survival(pooled, edges, time.nodes());

    std::vector<double> bin_mass0(nb, 0.0);
    std::vector<std::vector<double>> s_pde(nb, std::vector<double>(ntn, 1.0));
    for (std::size_t b = 0; b < nb; ++b) {
        std::vector<std::size_t> members;
        for (std::size_t i = 1; i < grid.n_nodes(); ++i) {
            const double x = grid.node(i);
            const bool inside = b + 1 == nb ? (x >= edges[b] && x <= edges[b + 1])
                                            : (x >= edges[b] && x < edges[b + 1]);
            if (inside && f0[i] > 0.0) {
                members.push_back(i);
                bin_mass0[b] += f0[i];
            }
        }
        if (members.empty()) continue;
        for (std::size_t k = 0; k < ntn; ++k) {
            double m = 0.0;
            for (std::size_t i : members) m += f.at(i, k);
            s_pde[b][k] = m / bin_mass0[b];
        }
    }

    const double dt = time.dt();
    double l1 = 0.0, wsum = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        if (curves.bin_counts[b] == 0 || bin_mass0[b] <= 0.0) continue;
        const double n_b = static_cast<double>(curves.bin_counts[b]);
        for (std::size_t k = 0; k < ntn; ++k) {
            const double p = s_pde[b][k];
            const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / n_b);
            const double diff = std::abs(curves.survival[b][k] - p);
            rep.cells_total += 1;
            if (diff <= 3.0 * se) rep.cells_within += 1;
            if (k >= 1) {
                l1 += bin_mass0[b] * diff * dt;
                wsum += bin_mass0[b] * dt;
            }
        }
    }
    rep.l1_survival_distance = wsum > 0.0 ? l1 / wsum : 0.0;
    return rep;
}

}  // namespace

CompareReport compare_to_pde(const std::vector<SimResult>& replicates,
                             const EquilibriumState& state, const Discretization& disc,
                             std::size_t n_bins,
                             const std::vector<double>& bin_edges_a,
                             const std::vector<double>& bin_edges_b) {
    if (replicates.empty()) throw std::invalid_argument("compare_to_pde: no replicates");
    if (bin_edges_a.size() != n_bins + 1 || bin_edges_b.size() != n_bins + 1) {
        throw std::invalid_argument("compare_to_pde: bin edge count mismatch");
    }
    PooledSide pa, pb;
    for (const auto& r : replicates) {
        pa.quality.insert(pa.quality.end(), r.pop_a.quality.begin(), r.pop_a.quality.end());
        pa.match_time.insert(pa.match_time.end(), r.pop_a.match_time.begin(),
                             r.pop_a.match_time.end());
        pb.quality.insert(pb.quality.end(), r.pop_b.quality.begin(), r.pop_b.quality.end());
        pb.match_time.insert(pb.match_time.end(), r.pop_b.match_time.begin(),
                             r.pop_b.match_time.end());
    }
    const CompareReport ra =
        compare_side(pa, state.f_a, disc.grid_a, disc.time, disc.f_a0, bin_edges_a);
    const CompareReport rb =
        compare_side(pb, state.f_b, disc.grid_b, disc.time, disc.f_b0, bin_edges_b);

    CompareReport rep;
    rep.max_abs_dev_f_a = ra.max_abs_dev_f_a;
    rep.max_abs_dev_f_b = rb.max_abs_dev_f_a;
    rep.cells_total = ra.cells_total + rb.cells_total;
    rep.cells_within = ra.cells_within + rb.cells_within;
    rep.fraction_within_3se =
        rep.cells_total > 0
            ? static_cast<double>(rep.cells_within) / static_cast<double>(rep.cells_total)
            : 1.0;
    const double wa = static_cast<double>(ra.cells_total);
    const double wb = static_cast<double>(rb.cells_total);
    rep.l1_survival_distance =
        (wa + wb) > 0.0
            ? (ra.l1_survival_distance * wa + rb.l1_survival_distance * wb) / (wa + wb)
            : 0.0;
    return rep;
}

std::string events_to_csv(const std::vector<EventRecord>& events) {
    std::string out = "time,side,agent_id,partner_quality,outcome\n";
    char buf[128];
    for (const auto& e : events) {
        const char* outcome = e.outcome == EventRecord::Outcome::Matched ? "matched"
                              : e.outcome == EventRecord::Outcome::FailedStatus
                                  ? "failed_status"
                                  : "failed_threshold";
        std::snprintf(buf, sizeof(buf), "%.17g,%c,%u,%.17g,%s\n", e.t, e.side, e.agent,
                      e.partner_quality, outcome);
        out += buf;
    }
    return out;
}

std::string compare_report_to_json(const CompareReport& r) {
    nlohmann::json j{{"max_abs_dev_F_A", r.max_abs_dev_f_a},
                     {"max_abs_dev_F_B", r.max_abs_dev_f_b},
                     {"fraction_within_3SE", r.fraction_within_3se},
                     {"L1_survival_distance", r.l1_survival_distance},
                     {"cells_total", r.cells_total},
                     {"cells_within", r.cells_within}};
    return j.dump(2) + "\n";
}

}  // namespace meanmatch::mc
