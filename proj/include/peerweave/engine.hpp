#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "peerweave/model.hpp"
#include "peerweave/topology.hpp"

namespace peerweave {

enum class SelectionPolicy { ConfigOrder, UniformRandom };

struct ReliabilityParams {
    double alpha = 0.1;   // smoothing weight
    double theta = 0.6;   // established threshold: below it a peer is on probation
    double initial = 0.5; // starting estimate for an unobserved target
};

struct SimConfig {
    std::uint64_t seed = 0;
    int runs = 1;
    std::uint64_t draw_range_n = 9223372036854775807ull; // 2^63 - 1
    double t_require_max = std::numeric_limits<double>::infinity();
    SelectionPolicy selection_policy = SelectionPolicy::ConfigOrder;
    bool double_sending = false;
    int double_send_fanout = 2;
    double network_delay = 0.0; // seconds per hop
    int max_attempts = 3;       // re-issues before the terminal gives up
    ReliabilityParams reliability;
};

enum class DrawResult { Up, Hang };
enum class ProbeOutcome { Success, Timeout };

// Hang rule: draw a uniform integer u in [0, N); the peer hangs iff
// u < (1 - p) * N.
DrawResult failure_draw(std::mt19937_64& rng, double p, std::uint64_t draw_range_n);

// Exponential moving average; stays in [0,1].
double update_reliability(double estimate, ProbeOutcome outcome, double alpha);

// Source-held per-target success estimates governing double sending.
class ReliabilityEstimates {
  public:
    explicit ReliabilityEstimates(ReliabilityParams params = {}) : params_(params) {}

    double get(const PeerId& source, const PeerId& target) const;
    void record(const PeerId& source, const PeerId& target, ProbeOutcome outcome);
    const ReliabilityParams& params() const { return params_; }
    void reset() { table_.clear(); }

  private:
    ReliabilityParams params_;
    std::map<std::pair<PeerId, PeerId>, double> table_;
};

// Dispatch target selection. With double sending enabled and any candidate
// on probation (estimate < theta), returns the best-established candidate
// plus probationary ones up to the fanout; once every candidate is
// established, returns exactly the best one.
std::vector<PeerId> dispatch_with_double_send(const PeerId& source,
                                              const std::vector<PeerId>& candidates,
                                              const ReliabilityEstimates& estimates,
                                              const SimConfig& config);

struct Metrics {
    std::uint64_t counter_success = 0;
    std::uint64_t counter_failure = 0;
    std::vector<double> task_times;
    std::vector<double> success_task_times;
    std::uint64_t digest = 0;

    std::uint64_t runs() const { return counter_success + counter_failure; }
    double success_rate() const;
    double mean_task_time() const;
    double mean_success_time() const; // mean over successful runs only
    double p95_task_time() const;
};

struct CacheAck {
    double ack_wait = 0.0; // seconds the terminal waits for the acknowledgment
    int fanout = 0;        // cache peers the terminal addresses
};

// Acknowledgment contract for a topology with a cache layer configured.
CacheAck cache_layer_ack(const Topology& topology);

// Deterministic virtual-clock simulator for one scenario. Each run gets an
// independent RNG substream derived from (seed, run index); identical
// (topology, config, probs) inputs give identical Metrics.
class Simulator {
  public:
    Simulator(const Topology& topology, const SimConfig& config,
              const ProbAssignment& probs);
    ~Simulator();

    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    TaskResult run_task(Task& task, std::uint64_t run_index);
    Metrics run_all();

    // Diagnostics for the last run_task call.
    bool last_run_acked() const;
    std::uint64_t last_run_digest() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// One-shot helpers matching the Simulator methods.
TaskResult run_task(const Topology& topology, const SimConfig& config,
                    const ProbAssignment& probs, Task& task);
Metrics run_scenario(const Topology& topology, const SimConfig& config,
                     const ProbAssignment& probs);

// Per-peer probabilities read off the topology's own success_prob fields.
ProbAssignment probs_from_topology(const Topology& topology);

}  // namespace peerweave
