#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "peerweave/errors.hpp"

namespace peerweave {

using nlohmann::json;

// Short printable peer name, unique per topology.
using PeerId = std::string;

// Per-peer success probability assignment used by the analytic routines
// and the simulator.
using ProbAssignment = std::map<PeerId, double>;

struct TaskId {
    std::string value;

    friend bool operator==(const TaskId&, const TaskId&) = default;
    friend auto operator<=>(const TaskId&, const TaskId&) = default;
};

// The repeatable unit of work. `trace` collects the signature of every peer
// that processed the task on the eventually delivered path; `tried` carries
// the peers known failed for this task so no upstream peer re-dispatches to
// them. The payload is opaque and never interpreted.
struct Task {
    TaskId id;
    std::string payload;
    std::vector<PeerId> trace;
    std::set<PeerId> tried;
    std::uint32_t attempt = 0;

    friend bool operator==(const Task&, const Task&) = default;
};

enum class TaskOutcome { Success, Failure };

struct TaskResult {
    TaskId task_id;
    TaskOutcome outcome = TaskOutcome::Failure;
    std::vector<PeerId> return_path;   // empty on Failure
    std::optional<std::string> reason; // set on Failure
    double completed_at = 0.0;         // simulation seconds

    friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

enum class PeerRole { Worker, Cache };

struct PeerSpec {
    PeerId id;
    int layer = 1;
    double success_prob = 1.0;
    double processing_time = 1.0; // seconds
    PeerRole role = PeerRole::Worker;

    friend bool operator==(const PeerSpec&, const PeerSpec&) = default;
};

enum class AlignmentKind { Normal, Enhanced, Virtual };

// Describes how the peers of one logical layer line up across working
// paths. Each segment is the ordered run of peers a single path contributes
// to the layer; segments are mutual substitutes during switching.
struct LayerAlignment {
    int logical_layer = 1;
    AlignmentKind kind = AlignmentKind::Normal;
    std::map<std::string, std::vector<PeerId>> segments; // path-id -> peers
    bool interface_compatible = true;

    friend bool operator==(const LayerAlignment&, const LayerAlignment&) = default;
};

struct Topology {
    std::vector<PeerSpec> peers;
    std::set<std::pair<PeerId, PeerId>> edges;
    std::set<PeerId> terminal_targets;
    std::vector<LayerAlignment> alignments;
    std::map<int, double> layer_timeouts; // layer -> t_max seconds
    std::optional<int> cache_layer;

    const PeerSpec* find_peer(const PeerId& id) const;
    int max_layer() const;
    std::vector<PeerId> peers_in_layer(int layer) const;
    bool has_edge(const PeerId& from, const PeerId& to) const;
    // Configured timeout for a layer, defaulting to 3x the slowest
    // processing time in that layer.
    double layer_timeout(int layer) const;

    friend bool operator==(const Topology&, const Topology&) = default;
};

// Produces fresh task ids. Random mode emits 128-bit hex strings; the
// sequential mode emits (run, counter) pairs so simulation traces stay
// byte-stable across reruns with the same seed.
class IdGenerator {
  public:
    static IdGenerator random_ids();
    static IdGenerator random_ids(std::uint64_t seed);
    static IdGenerator sequential(std::uint32_t run_index);

    TaskId next();

  private:
    IdGenerator() = default;
    bool sequential_ = false;
    std::uint32_t run_index_ = 0;
    std::uint64_t counter_ = 0;
    std::mt19937_64 rng_;
};

Task new_task(std::string payload, IdGenerator& ids);

// Appends `peer` to the task trace. Throws DuplicateSignatureError if the
// peer already signed. The layer argument is recorded by callers that track
// ordering; the non-decreasing layer invariant is enforced by construction
// in the engine and checked by the topology validator.
Task append_signature(Task task, const PeerId& peer, int layer);

// Checks a Success result against the topology: consecutive return-path
// pairs must all be edges and the first hop must be a terminal target.
bool result_path_valid(const Topology& topology, const TaskResult& result);

// --- interchange format (strict: unknown fields rejected) ---

json to_json(const TaskId& id);
json to_json(const Task& task);
json to_json(const TaskResult& result);
json to_json(const PeerSpec& spec);
json to_json(const LayerAlignment& alignment);
json to_json(const Topology& topology);

TaskId task_id_from_json(const json& j);
Task task_from_json(const json& j);
TaskResult task_result_from_json(const json& j);
PeerSpec peer_spec_from_json(const json& j);
LayerAlignment layer_alignment_from_json(const json& j);
Topology topology_from_json(const json& j);

std::string role_name(PeerRole role);
PeerRole role_from_name(const std::string& name);
std::string alignment_kind_name(AlignmentKind kind);
AlignmentKind alignment_kind_from_name(const std::string& name);

}  // namespace peerweave
