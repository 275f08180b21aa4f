#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "meanmatch/diagnostics.hpp"
#include "meanmatch/solver.hpp"

namespace meanmatch::mc {

/// Deterministic RNG (xoshiro256** seeded via splitmix64) with named
/// sub-streams so every component replays in isolation. The uniform,
/// exponential and index mappings are implemented here rather than through
/// std distributions to keep byte-level reproducibility in our hands.
class Rng {
public:
    static Rng stream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

    std::uint64_t next_u64();
    double uniform01();                 // 53-bit uniform in [0,1)
    double exponential(double rate);    // -log(1-u)/rate
    std::size_t index(std::size_t n);   // uniform in [0,n), unbiased

private:
    std::uint64_t s_[4] = {1, 2, 3, 4};
};

struct AgentPopulation {
    std::vector<double> quality;
    std::vector<std::uint8_t> matched;
    std::vector<double> match_time;  // +inf while unmatched
    std::uint64_t seed = 0;

    std::size_t size() const { return quality.size(); }
};

/// I.i.d. sample of n qualities through the quantile transform.
AgentPopulation sample_population(const std::function<double(double)>& quantile, std::size_t n,
                                  std::uint64_t seed);

/// One side's threshold surface, evaluated by linear interpolation in
/// quality at the nearest-left time node (linear in t optionally).
struct ThresholdField {
    const SpaceTimeField* v = nullptr;
    const SpatialGrid* grid = nullptr;
    const TimeGrid* time = nullptr;
    bool linear_in_time = false;

    double eval(double x, double t) const;
};

/// MeanFieldSampling flips only the initiating agent (the drawn partner is
/// a sample of the opposite distribution, matching the depletion structure
/// of the forward equations); PhysicalPairing flips both and is kept as an
/// explicitly non-equivalent contrast mode.
enum class PairingMode { MeanFieldSampling, PhysicalPairing };

struct SimConfig {
    double horizon = 1.0;
    double lambda_a = 1.0;  // intensity of the process side-B agents meet through
    double lambda_b = 1.0;  // intensity of the process side-A agents meet through
    ThresholdField threshold_a, threshold_b;
    // probability that a sampled partner record is available at all;
    // set below 1 to account for initial mass outside the truncated domain
    double available_a = 1.0;
    double available_b = 1.0;
    PairingMode mode = PairingMode::MeanFieldSampling;
    bool log_events = false;
};

struct EventRecord {
    double t = 0.0;
    char side = 'A';
    std::uint32_t agent = 0;
    double partner_quality = 0.0;
    enum class Outcome { Matched, FailedStatus, FailedThreshold } outcome = Outcome::Matched;
};

struct SimCounters {
    std::uint64_t rings = 0;
    std::uint64_t ambient_failures = 0;
    std::uint64_t status_failures = 0;
    std::uint64_t threshold_failures = 0;
    std::uint64_t matches = 0;
};

struct SimResult {
    AgentPopulation pop_a, pop_b;
    SimCounters counters_a, counters_b;
    std::vector<EventRecord> events;  // only when log_events
};

/// Event-driven simulation of the meeting/matching mechanism under fixed
/// thresholds; each unmatched agent regenerates an exponential clock after
/// every meeting. Deterministic per seed.
SimResult simulate_market(const SimConfig& config, AgentPopulation pop_a, AgentPopulation pop_b,
                          std::uint64_t seed);

struct SurvivalCurves {
    std::vector<double> bin_edges;          // size n_bins+1
    std::vector<std::size_t> bin_counts;    // agents per bin
    std::vector<std::vector<double>> survival;  // [bin][time]
    std::vector<std::vector<double>> std_error; // binomial SE of the estimate
};

SurvivalCurves empirical_survival(const AgentPopulation& pop,
                                  const std::vector<double>& bin_edges,
                                  std::span<const double> times);

struct CompareReport {
    double max_abs_dev_f_a = 0.0;
    double max_abs_dev_f_b = 0.0;
    double fraction_within_3se = 0.0;
    double l1_survival_distance = 0.0;
    std::size_t cells_total = 0;
    std::size_t cells_within = 0;
};

/// Pools replicates and compares, per side: the aggregate unmatched share
/// against the PDE unmatched mass (normalized to its own t=0 value), and
/// per-(quantile-bin, time-node) survival against the PDE bin survival with
/// a 3-binomial-SE criterion under the PDE null probability.
CompareReport compare_to_pde(const std::vector<SimResult>& replicates,
                             const EquilibriumState& state, const Discretization& disc,
                             std::size_t n_bins,
                             const std::vector<double>& bin_edges_a,
                             const std::vector<double>& bin_edges_b);

std::string events_to_csv(const std::vector<EventRecord>& events);
std::string compare_report_to_json(const CompareReport& report);

}  // namespace meanmatch::mc
