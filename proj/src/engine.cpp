#include "peerweave/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include "peerweave/analytics.hpp"
#include "peerweave/errors.hpp"

namespace peerweave {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::uint64_t hash, std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
        hash ^= (value >> (i * 8)) & 0xff;
        hash *= 0x100000001B3ull;
    }
    return hash;
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;

}  // namespace

DrawResult failure_draw(std::mt19937_64& rng, double p, std::uint64_t draw_range_n) {
    if (p < 0.0 || p > 1.0) {
        throw DomainError("failure_draw: probability outside [0,1]");
    }
    if (draw_range_n < 2) {
        throw ConfigError("failure_draw: draw range must be >= 2");
    }
    std::uint64_t u = rng() % draw_range_n;
    long double threshold =
        (1.0L - static_cast<long double>(p)) * static_cast<long double>(draw_range_n);
    return static_cast<long double>(u) < threshold ? DrawResult::Hang : DrawResult::Up;
}

double update_reliability(double estimate, ProbeOutcome outcome, double alpha) {
    if (outcome == ProbeOutcome::Success) {
        estimate += alpha * (1.0 - estimate);
    } else {
        estimate -= alpha * estimate;
    }
    return std::clamp(estimate, 0.0, 1.0);
}

double ReliabilityEstimates::get(const PeerId& source, const PeerId& target) const {
    auto it = table_.find({source, target});
    return it == table_.end() ? params_.initial : it->second;
}

void ReliabilityEstimates::record(const PeerId& source, const PeerId& target,
                                  ProbeOutcome outcome) {
    auto key = std::make_pair(source, target);
    auto it = table_.find(key);
    double estimate = it == table_.end() ? params_.initial : it->second;
    table_[key] = update_reliability(estimate, outcome, params_.alpha);
}

std::vector<PeerId> dispatch_with_double_send(const PeerId& source,
                                              const std::vector<PeerId>& candidates,
                                              const ReliabilityEstimates& estimates,
                                              const SimConfig& config) {
    if (candidates.empty()) {
        throw ConfigError("dispatch_with_double_send: no candidates");
    }
    const double theta = estimates.params().theta;
    std::vector<std::pair<double, PeerId>> ranked;
    ranked.reserve(candidates.size());
    for (const auto& c : candidates) {
        ranked.emplace_back(estimates.get(source, c), c);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second < b.second;
    });

    std::vector<PeerId> out{ranked.front().second};
    if (!config.double_sending) {
        return out;
    }
    int fanout = std::max(1, config.double_send_fanout);
    for (auto it = ranked.rbegin(); it != ranked.rend(); ++it) {
        if (static_cast<int>(out.size()) >= fanout) {
            break;
        }
        if (it->first >= theta || it->second == out.front()) {
            continue;
        }
        out.push_back(it->second);
    }
    return out;
}

double Metrics::success_rate() const {
    auto n = runs();
    return n == 0 ? 0.0 : static_cast<double>(counter_success) / static_cast<double>(n);
}

double Metrics::mean_task_time() const {
    if (task_times.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (double t : task_times) {
        sum += t;
    }
    return sum / static_cast<double>(task_times.size());
}

double Metrics::mean_success_time() const {
    if (success_task_times.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (double t : success_task_times) {
        sum += t;
    }
    return sum / static_cast<double>(success_task_times.size());
}

double Metrics::p95_task_time() const {
    if (task_times.empty()) {
        return 0.0;
    }
    std::vector<double> sorted = task_times;
    std::sort(sorted.begin(), sorted.end());
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(sorted.size())));
    idx = idx == 0 ? 0 : idx - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
}

CacheAck cache_layer_ack(const Topology& topology) {
    if (!topology.cache_layer) {
        throw NoCacheConfiguredError("cache_layer_ack: topology has no cache layer");
    }
    int k = *topology.cache_layer;
    CacheAck ack;
    for (int layer = 1; layer <= k; ++layer) {
        ack.ack_wait += topology.layer_timeout(layer);
    }
    int cache_peers = 0;
    for (const auto& p : topology.peers) {
        if (p.role == PeerRole::Cache) {
            ++cache_peers;
        }
    }
    if (cache_peers == 0) {
        throw NoCacheConfiguredError("cache_layer_ack: no cache peers configured");
    }
    ack.fanout = std::min(2, cache_peers);
    return ack;
}

struct Simulator::Impl {
    // Compiled, index-based view of the topology.
    std::vector<PeerId> ids;             // sorted
    std::vector<int> layer;
    std::vector<double> proc;
    std::vector<double> prob;
    std::vector<bool> is_cache;
    std::vector<std::vector<int>> targets; // config order = lexicographic
    std::vector<int> entries;
    std::vector<double> timeout_by_layer;  // index 0 unused
    int final_layer = 0;
    SimConfig config;
    bool reissue_enabled = false;

    // Per-run scratch, reused across runs.
    std::mt19937_64 rng;
    std::vector<std::uint8_t> blocked;  // hung or exhausted this attempt
    std::vector<std::uint8_t> hung;
    std::vector<int> path;
    bool acked = false;
    bool any_entry_up = false;
    std::uint64_t run_digest = 0;
    ReliabilityEstimates estimates;

    Impl(const Topology& topology, const SimConfig& cfg, const ProbAssignment& probs)
        : config(cfg), estimates(cfg.reliability) {
        if (cfg.runs < 1) {
            throw ConfigError("simulator: runs must be >= 1");
        }
        if (cfg.draw_range_n < 2) {
            throw ConfigError("simulator: draw range must be >= 2");
        }
        for (const auto& p : topology.peers) {
            ids.push_back(p.id);
        }
        std::sort(ids.begin(), ids.end());
        if (ids.empty()) {
            throw ConfigError("simulator: topology has no peers");
        }
        std::unordered_map<PeerId, int> index;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            index[ids[i]] = static_cast<int>(i);
        }
        layer.resize(ids.size());
        proc.resize(ids.size());
        prob.resize(ids.size());
        is_cache.resize(ids.size());
        targets.resize(ids.size());
        for (const auto& p : topology.peers) {
            int i = index[p.id];
            layer[i] = p.layer;
            proc[i] = p.processing_time;
            is_cache[i] = p.role == PeerRole::Cache;
            auto it = probs.find(p.id);
            if (it == probs.end()) {
                throw MissingPeerError("simulator: no probability for \"" + p.id + "\"");
            }
            prob[i] = it->second;
            final_layer = std::max(final_layer, p.layer);
        }
        for (const auto& [from, to] : topology.edges) {
            targets[index.at(from)].push_back(index.at(to));
        }
        for (auto& v : targets) {
            std::sort(v.begin(), v.end()); // ids are sorted, so index order = id order
        }
        for (const auto& id : topology.terminal_targets) {
            entries.push_back(index.at(id));
        }
        std::sort(entries.begin(), entries.end());
        if (entries.empty()) {
            throw ConfigError("simulator: topology has no terminal targets");
        }
        timeout_by_layer.assign(static_cast<std::size_t>(final_layer) + 1, 0.0);
        for (int l = 1; l <= final_layer; ++l) {
            timeout_by_layer[static_cast<std::size_t>(l)] = topology.layer_timeout(l);
        }
        cache_layer = topology.cache_layer;
        reissue_enabled = std::isfinite(cfg.t_require_max);
        blocked.resize(ids.size());
        hung.resize(ids.size());
    }

    std::optional<int> cache_layer;

    void event(std::uint8_t code, int peer, double t) {
        run_digest = fnv1a(run_digest, (static_cast<std::uint64_t>(code) << 32) |
                                           static_cast<std::uint32_t>(peer + 1));
        run_digest = fnv1a(run_digest, std::bit_cast<std::uint64_t>(t));
    }

    struct Outcome {
        bool success = false;
        double time = 0.0;
    };

    // `u` has finished processing at virtual time t (-1 denotes the
    // terminal). Explores the next layer, switching on failures; parallel
    // dispatches advance the clock by the slowest branch only.
    Outcome explore(int u, double t) {
        if (u >= 0 && layer[static_cast<std::size_t>(u)] == final_layer) {
            return {true, t};
        }
        const std::vector<int>& raw =
            u < 0 ? entries : targets[static_cast<std::size_t>(u)];
        std::vector<int> order = raw;
        if (config.selection_policy == SelectionPolicy::UniformRandom) {
            for (std::size_t i = order.size(); i > 1; --i) {
                std::size_t j = static_cast<std::size_t>(rng() % i);
                std::swap(order[i - 1], order[j]);
            }
        }

        while (true) {
            std::vector<int> remaining;
            for (int c : order) {
                if (!blocked[static_cast<std::size_t>(c)]) {
                    remaining.push_back(c);
                }
            }
            if (remaining.empty()) {
                if (u >= 0) {
                    blocked[static_cast<std::size_t>(u)] = 1;
                }
                event(3, u, t);
                return {false, t};
            }
            std::vector<int> group = pick_group(u, remaining);
            double next_t = t;
            for (int c : group) {
                const auto ci = static_cast<std::size_t>(c);
                event(1, c, t);
                DrawResult draw = failure_draw(rng, prob[ci], config.draw_range_n);
                if (draw == DrawResult::Hang) {
                    blocked[ci] = 1;
                    hung[ci] = 1;
                    note_probe(u, c, ProbeOutcome::Timeout);
                    next_t = std::max(next_t,
                                      t + timeout_by_layer[static_cast<std::size_t>(
                                              layer[ci])]);
                    event(2, c, t);
                    continue;
                }
                note_probe(u, c, ProbeOutcome::Success);
                if (u < 0) {
                    any_entry_up = true;
                }
                if (is_cache[ci] && cache_layer &&
                    layer[ci] == *cache_layer) {
                    acked = true;
                }
                path.push_back(c);
                Outcome r = explore(c, t + config.network_delay + proc[ci]);
                if (r.success) {
                    event(4, c, r.time);
                    return r;
                }
                path.pop_back();
                blocked[ci] = 1;
                next_t = std::max(next_t, r.time);
            }
            t = next_t;
        }
    }

    // Candidate group for one dispatch round: normally a single peer, a
    // hedged pair under double sending, and at least two cache peers when
    // the terminal addresses a layer-1 cache.
    std::vector<int> pick_group(int u, const std::vector<int>& remaining) {
        if (u < 0 && cache_layer && *cache_layer == 1 && !config.double_sending) {
            std::vector<int> group(remaining.begin(),
                                   remaining.begin() +
                                       std::min<std::size_t>(2, remaining.size()));
            return group;
        }
        if (!config.double_sending || remaining.size() == 1) {
            return {remaining.front()};
        }
        PeerId source = u < 0 ? PeerId("terminal") : ids[static_cast<std::size_t>(u)];
        std::vector<PeerId> candidate_ids;
        candidate_ids.reserve(remaining.size());
        for (int c : remaining) {
            candidate_ids.push_back(ids[static_cast<std::size_t>(c)]);
        }
        std::vector<PeerId> chosen =
            dispatch_with_double_send(source, candidate_ids, estimates, config);
        std::vector<int> group;
        for (int c : remaining) {
            if (std::find(chosen.begin(), chosen.end(),
                          ids[static_cast<std::size_t>(c)]) != chosen.end()) {
                group.push_back(c);
            }
        }
        return group;
    }

    void note_probe(int u, int c, ProbeOutcome outcome) {
        if (!config.double_sending) {
            return;
        }
        PeerId source = u < 0 ? PeerId("terminal") : ids[static_cast<std::size_t>(u)];
        estimates.record(source, ids[static_cast<std::size_t>(c)], outcome);
    }

    void reset_attempt() {
        std::fill(blocked.begin(), blocked.end(), 0);
        std::fill(hung.begin(), hung.end(), 0);
        path.clear();
        acked = false;
        any_entry_up = false;
    }

    TaskResult run_one(Task& task, std::uint64_t run_index) {
        rng.seed(splitmix64(config.seed ^ (kGolden * (run_index + 1))));
        run_digest = kFnvOffset;
        estimates.reset();
        double base = 0.0;
        TaskResult result;
        result.task_id = task.id;
        for (int attempt = 0;; ++attempt) {
            reset_attempt();
            Outcome out = explore(-1, 0.0);
            bool needs_reissue = false;
            if (reissue_enabled && attempt + 1 < config.max_attempts) {
                if (cache_layer && !acked) {
                    needs_reissue = true;
                } else if (out.time > config.t_require_max) {
                    needs_reissue = true;
                }
            }
            if (needs_reissue) {
                base += config.t_require_max;
                task.attempt += 1;
                event(5, -1, base);
                continue;
            }
            result.completed_at = base + out.time;
            if (out.success) {
                result.outcome = TaskOutcome::Success;
                task.trace.clear();
                for (int c : path) {
                    task.trace.push_back(ids[static_cast<std::size_t>(c)]);
                }
                result.return_path = task.trace;
            } else {
                result.outcome = TaskOutcome::Failure;
                result.reason = any_entry_up ? "all-paths-exhausted" : "no-entry-peer";
            }
            task.tried.clear();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (blocked[i]) {
                    task.tried.insert(ids[i]);
                }
            }
            return result;
        }
    }
};

Simulator::Simulator(const Topology& topology, const SimConfig& config,
                     const ProbAssignment& probs)
    : impl_(std::make_unique<Impl>(topology, config, probs)) {}

Simulator::~Simulator() = default;

TaskResult Simulator::run_task(Task& task, std::uint64_t run_index) {
    return impl_->run_one(task, run_index);
}

bool Simulator::last_run_acked() const { return impl_->acked; }

std::uint64_t Simulator::last_run_digest() const { return impl_->run_digest; }

Metrics Simulator::run_all() {
    Metrics metrics;
    const int runs = impl_->config.runs;
    for (int run = 0; run < runs; ++run) {
        IdGenerator ids = IdGenerator::sequential(static_cast<std::uint32_t>(run));
        Task task = new_task("", ids);
        TaskResult result = impl_->run_one(task, static_cast<std::uint64_t>(run));
        if (result.outcome == TaskOutcome::Success) {
            metrics.counter_success += 1;
            metrics.success_task_times.push_back(result.completed_at);
        } else {
            metrics.counter_failure += 1;
        }
        metrics.task_times.push_back(result.completed_at);
        metrics.digest += splitmix64(impl_->run_digest ^
                                     (static_cast<std::uint64_t>(run) * kGolden + 1));
    }
    return metrics;
}

TaskResult run_task(const Topology& topology, const SimConfig& config,
                    const ProbAssignment& probs, Task& task) {
    Simulator sim(topology, config, probs);
    return sim.run_task(task, 0);
}

Metrics run_scenario(const Topology& topology, const SimConfig& config,
                     const ProbAssignment& probs) {
    Simulator sim(topology, config, probs);
    return sim.run_all();
}

ProbAssignment probs_from_topology(const Topology& topology) {
    ProbAssignment probs;
    for (const auto& p : topology.peers) {
        probs[p.id] = p.success_prob;
    }
    return probs;
}

}  // namespace peerweave
