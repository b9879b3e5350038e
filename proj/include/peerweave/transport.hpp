#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "peerweave/engine.hpp"
#include "peerweave/model.hpp"

namespace peerweave {

// One protocol frame: a single newline-terminated line of canonical
// (sorted-key) JSON, so encodings are byte-stable.
struct WireMessage {
    enum class Kind { TaskForward, ResultReturn, Ack, ErrorReport };

    Kind kind = Kind::Ack;
    TaskId task_id;
    std::string sender; // peer id or "terminal"
    std::optional<Task> task;         // TaskForward
    std::optional<TaskResult> result; // ResultReturn
    std::set<PeerId> tried;           // ResultReturn: failure knowledge piggyback
    std::string reason;               // ErrorReport

    friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

std::string encode(const WireMessage& message);
WireMessage decode(std::string_view frame); // throws CodecError

// What a live peer knows: its own identity, targets, and timeouts only.
struct PeerConfig {
    PeerId id;
    int layer = 1;
    double p = 1.0;
    double processing_time_s = 0.01;
    double t_max_s = 0.5;
    std::vector<std::pair<PeerId, std::string>> targets; // (id, "host:port")
};

json peer_config_to_json(const PeerConfig& config);
PeerConfig peer_config_from_json(const json& j);

// In-process actor cluster speaking the wire protocol over loopback TCP.
// Each peer owns only its own config; there is no shared registry.
class LiveCluster {
  public:
    LiveCluster(const Topology& topology, const ProbAssignment& probs,
                const SimConfig& config, int port_base);
    ~LiveCluster();

    LiveCluster(const LiveCluster&) = delete;
    LiveCluster& operator=(const LiveCluster&) = delete;

    TaskResult submit(const std::string& payload, std::uint64_t run_index);
    Metrics run_all(int runs);

    // Simulates a crashed peer: its listener closes and later connections
    // are refused.
    void stop_peer(const PeerId& id);

    int port_of(const PeerId& id) const;
    std::vector<PeerConfig> configs() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Metrics live_run(const Topology& topology, const ProbAssignment& probs,
                 const SimConfig& config, int port_base, int runs);

}  // namespace peerweave
