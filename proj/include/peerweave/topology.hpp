#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "peerweave/model.hpp"

namespace peerweave {

// Ordered peer sequence from a terminal entry point to a final-layer peer.
struct WorkingPath {
    std::vector<PeerId> peers;

    std::string key() const; // "a->b->c", used for map keys and tie-breaks
    friend bool operator==(const WorkingPath&, const WorkingPath&) = default;
};

struct PathSet {
    std::vector<WorkingPath> paths;
};

// Back-path plus forward-path traversed when processing moves from a failed
// peer to a replacement. Lengths count peers, including the decision point
// ("terminal" when the retry decision falls back to the task originator).
struct SwitchPath {
    std::vector<PeerId> back;
    std::vector<PeerId> forward;

    int len_back() const { return static_cast<int>(back.size()); }
    int len_forward() const { return static_cast<int>(forward.size()); }
    int len_switch() const { return len_back() + len_forward(); }
};

struct MinConnectionParams {
    double delta = 0.0;
    std::optional<int> max_edges;
};

enum class PathRelation { Separate, Coupled };

struct PathClassification {
    PathRelation kind = PathRelation::Separate;
    std::set<PeerId> common;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// num_paths vertex-disjoint chains of length depth; every chain's layer-1
// peer becomes a terminal target. Peer ids are "p<path>_l<layer>".
Topology build_separate_paths(int num_paths, int depth, double success_prob,
                              double processing_time = 1.0);

// Variant with a per-position probability assignment (path, layer) -> p.
Topology build_separate_paths(int num_paths, int depth,
                              const std::function<double(int, int)>& prob_at,
                              double processing_time = 1.0);

// For each listed layer L >= 2, connects every layer L-1 peer to every
// layer L peer. Idempotent.
Topology make_full_connection(Topology topology, const std::set<int>& layers);

// Every terminal-to-final-layer path exactly once, lexicographic order.
PathSet enumerate_working_paths(const Topology& topology,
                                std::size_t cap = 1'000'000);

PathClassification classify_paths(const WorkingPath& a, const WorkingPath& b);

// Maximum-cardinality subset of pairwise-separate paths, lexicographic
// tie-break.
PathSet extract_basic_paths(const PathSet& paths);

// Switch path for a failure of `failed` detected after traversing `context`.
// `tried` removes replacement candidates already known failed for the task.
SwitchPath compute_switch_path(const Topology& topology, const PeerId& failed,
                               const std::vector<PeerId>& context,
                               const std::set<PeerId>& tried = {});

using UnionProbabilityFn =
    std::function<double(const PathSet&, const ProbAssignment&)>;

// Greedy synthesis: starting from the basic-path skeleton, repeatedly adds
// the full-connection edge with maximal marginal gain in exact union
// probability until it exceeds params.delta.
Topology build_minimum_connection(const Topology& topology,
                                  const ProbAssignment& probs,
                                  const MinConnectionParams& params,
                                  const UnionProbabilityFn& oracle);

ValidationReport validate_topology(const Topology& topology);

// Topology document loader. Accepts either the literal field form or a
// "generate" request:
//   {"generate": {"separate": {"paths": n, "depth": d},
//                 "full_layers": [...], "success_prob": p,
//                 "processing_time": s}}
Topology load_topology_document(const json& j);

}  // namespace peerweave
