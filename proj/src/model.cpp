#include "peerweave/model.hpp"

#include <algorithm>
#include <sstream>

#include "peerweave/json_util.hpp"

namespace peerweave {

using jsonu::check_fields;
using jsonu::get_opt;
using jsonu::get_req;

const PeerSpec* Topology::find_peer(const PeerId& id) const {
    for (const auto& p : peers) {
        if (p.id == id) {
            return &p;
        }
    }
    return nullptr;
}

int Topology::max_layer() const {
    int m = 0;
    for (const auto& p : peers) {
        m = std::max(m, p.layer);
    }
    return m;
}

std::vector<PeerId> Topology::peers_in_layer(int layer) const {
    std::vector<PeerId> out;
    for (const auto& p : peers) {
        if (p.layer == layer) {
            out.push_back(p.id);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool Topology::has_edge(const PeerId& from, const PeerId& to) const {
    return edges.count({from, to}) > 0;
}

double Topology::layer_timeout(int layer) const {
    auto it = layer_timeouts.find(layer);
    if (it != layer_timeouts.end()) {
        return it->second;
    }
    double slowest = 0.0;
    for (const auto& p : peers) {
        if (p.layer == layer) {
            slowest = std::max(slowest, p.processing_time);
        }
    }
    return 3.0 * (slowest > 0.0 ? slowest : 1.0);
}

IdGenerator IdGenerator::random_ids() {
    std::random_device rd;
    return random_ids((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
}

IdGenerator IdGenerator::random_ids(std::uint64_t seed) {
    IdGenerator g;
    g.sequential_ = false;
    g.rng_.seed(seed);
    return g;
}

IdGenerator IdGenerator::sequential(std::uint32_t run_index) {
    IdGenerator g;
    g.sequential_ = true;
    g.run_index_ = run_index;
    return g;
}

TaskId IdGenerator::next() {
    if (sequential_) {
        std::ostringstream os;
        os << "r" << run_index_ << "-" << counter_++;
        return TaskId{os.str()};
    }
    static const char* hex = "0123456789abcdef";
    std::string value;
    value.reserve(32);
    for (int word = 0; word < 2; ++word) {
        std::uint64_t v = rng_();
        for (int i = 15; i >= 0; --i) {
            value.push_back(hex[(v >> (i * 4)) & 0xf]);
        }
    }
    return TaskId{std::move(value)};
}

Task new_task(std::string payload, IdGenerator& ids) {
    Task t;
    t.id = ids.next();
    t.payload = std::move(payload);
    return t;
}

Task append_signature(Task task, const PeerId& peer, int /*layer*/) {
    if (std::find(task.trace.begin(), task.trace.end(), peer) != task.trace.end()) {
        throw DuplicateSignatureError("peer \"" + peer + "\" already signed task " +
                                      task.id.value);
    }
    task.trace.push_back(peer);
    return task;
}

bool result_path_valid(const Topology& topology, const TaskResult& result) {
    if (result.outcome != TaskOutcome::Success) {
        return result.return_path.empty() && result.reason.has_value();
    }
    const auto& path = result.return_path;
    if (path.empty() || topology.terminal_targets.count(path.front()) == 0) {
        return false;
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!topology.has_edge(path[i], path[i + 1])) {
            return false;
        }
    }
    return true;
}

// --- JSON ---

std::string role_name(PeerRole role) {
    return role == PeerRole::Cache ? "cache" : "worker";
}

PeerRole role_from_name(const std::string& name) {
    if (name == "worker") return PeerRole::Worker;
    if (name == "cache") return PeerRole::Cache;
    throw ConfigError("unknown peer role \"" + name + "\"");
}

std::string alignment_kind_name(AlignmentKind kind) {
    switch (kind) {
        case AlignmentKind::Normal: return "normal";
        case AlignmentKind::Enhanced: return "enhanced";
        case AlignmentKind::Virtual: return "virtual";
    }
    return "normal";
}

AlignmentKind alignment_kind_from_name(const std::string& name) {
    if (name == "normal") return AlignmentKind::Normal;
    if (name == "enhanced") return AlignmentKind::Enhanced;
    if (name == "virtual") return AlignmentKind::Virtual;
    throw ConfigError("unknown alignment kind \"" + name + "\"");
}

json to_json(const TaskId& id) {
    return json{{"value", id.value}};
}

TaskId task_id_from_json(const json& j) {
    check_fields(j, {"value"}, "task id");
    return TaskId{get_req<std::string>(j, "value", "task id")};
}

json to_json(const Task& task) {
    return json{{"id", to_json(task.id)},
                {"payload", task.payload},
                {"trace", task.trace},
                {"tried", task.tried},
                {"attempt", task.attempt}};
}

Task task_from_json(const json& j) {
    check_fields(j, {"id", "payload", "trace", "tried", "attempt"}, "task");
    Task t;
    t.id = task_id_from_json(get_req<json>(j, "id", "task"));
    t.payload = get_req<std::string>(j, "payload", "task");
    t.trace = get_req<std::vector<PeerId>>(j, "trace", "task");
    auto tried = get_req<std::vector<PeerId>>(j, "tried", "task");
    t.tried.insert(tried.begin(), tried.end());
    t.attempt = get_req<std::uint32_t>(j, "attempt", "task");
    for (const auto& p : t.trace) {
        if (t.tried.count(p) > 0) {
            throw ConfigError("task: peer \"" + p + "\" is both signed and tried");
        }
    }
    return t;
}

json to_json(const TaskResult& result) {
    json j{{"task_id", to_json(result.task_id)},
           {"outcome", result.outcome == TaskOutcome::Success ? "success" : "failure"},
           {"return_path", result.return_path},
           {"completed_at", result.completed_at}};
    if (result.reason) {
        j["reason"] = *result.reason;
    } else {
        j["reason"] = nullptr;
    }
    return j;
}

TaskResult task_result_from_json(const json& j) {
    check_fields(j, {"task_id", "outcome", "return_path", "reason", "completed_at"},
                 "task result");
    TaskResult r;
    r.task_id = task_id_from_json(get_req<json>(j, "task_id", "task result"));
    auto outcome = get_req<std::string>(j, "outcome", "task result");
    if (outcome == "success") {
        r.outcome = TaskOutcome::Success;
    } else if (outcome == "failure") {
        r.outcome = TaskOutcome::Failure;
    } else {
        throw ConfigError("task result: unknown outcome \"" + outcome + "\"");
    }
    r.return_path = get_req<std::vector<PeerId>>(j, "return_path", "task result");
    if (j.contains("reason") && !j["reason"].is_null()) {
        r.reason = j["reason"].get<std::string>();
    }
    r.completed_at = get_req<double>(j, "completed_at", "task result");
    if (r.outcome == TaskOutcome::Failure) {
        if (!r.return_path.empty()) {
            throw ConfigError("task result: failure must have an empty return path");
        }
        if (!r.reason || r.reason->empty()) {
            throw ConfigError("task result: failure requires a reason");
        }
    }
    return r;
}

json to_json(const PeerSpec& spec) {
    return json{{"id", spec.id},
                {"layer", spec.layer},
                {"success_prob", spec.success_prob},
                {"processing_time", spec.processing_time},
                {"role", role_name(spec.role)}};
}

PeerSpec peer_spec_from_json(const json& j) {
    check_fields(j, {"id", "layer", "success_prob", "processing_time", "role"}, "peer");
    PeerSpec s;
    s.id = get_req<std::string>(j, "id", "peer");
    if (s.id.empty()) {
        throw ConfigError("peer: id must be non-empty");
    }
    s.layer = get_req<int>(j, "layer", "peer");
    if (s.layer < 1) {
        throw ConfigError("peer \"" + s.id + "\": layer must be >= 1");
    }
    s.success_prob = get_opt<double>(j, "success_prob", 1.0, "peer");
    if (s.success_prob < 0.0 || s.success_prob > 1.0) {
        throw ConfigError("peer \"" + s.id + "\": success_prob outside [0,1]");
    }
    s.processing_time = get_opt<double>(j, "processing_time", 1.0, "peer");
    if (s.processing_time <= 0.0) {
        throw ConfigError("peer \"" + s.id + "\": processing_time must be > 0");
    }
    s.role = role_from_name(get_opt<std::string>(j, "role", "worker", "peer"));
    return s;
}

json to_json(const LayerAlignment& alignment) {
    return json{{"logical_layer", alignment.logical_layer},
                {"kind", alignment_kind_name(alignment.kind)},
                {"segments", alignment.segments},
                {"interface_compatible", alignment.interface_compatible}};
}

LayerAlignment layer_alignment_from_json(const json& j) {
    check_fields(j, {"logical_layer", "kind", "segments", "interface_compatible"},
                 "alignment");
    LayerAlignment a;
    a.logical_layer = get_req<int>(j, "logical_layer", "alignment");
    a.kind = alignment_kind_from_name(get_req<std::string>(j, "kind", "alignment"));
    a.segments =
        get_req<std::map<std::string, std::vector<PeerId>>>(j, "segments", "alignment");
    a.interface_compatible =
        get_opt<bool>(j, "interface_compatible", a.kind != AlignmentKind::Virtual,
                      "alignment");
    for (const auto& [path, seg] : a.segments) {
        if (seg.empty()) {
            throw ConfigError("alignment segment \"" + path + "\" is empty");
        }
        if (a.kind == AlignmentKind::Normal && seg.size() != 1) {
            throw ConfigError("normal alignment segment \"" + path +
                              "\" must have exactly one peer");
        }
    }
    if (a.kind == AlignmentKind::Enhanced) {
        bool any_chain = false;
        for (const auto& [path, seg] : a.segments) {
            any_chain = any_chain || seg.size() >= 2;
        }
        if (!any_chain) {
            throw ConfigError("enhanced alignment requires a segment of length >= 2");
        }
        if (!a.interface_compatible) {
            throw ConfigError("enhanced alignment must be interface compatible");
        }
    }
    if (a.kind == AlignmentKind::Virtual && a.interface_compatible) {
        throw ConfigError("virtual alignment must have interface_compatible = false");
    }
    return a;
}

json to_json(const Topology& topology) {
    json peers = json::array();
    for (const auto& p : topology.peers) {
        peers.push_back(to_json(p));
    }
    json edges = json::array();
    for (const auto& [from, to] : topology.edges) {
        edges.push_back(json::array({from, to}));
    }
    json alignments = json::array();
    for (const auto& a : topology.alignments) {
        alignments.push_back(to_json(a));
    }
    json timeouts = json::object();
    for (const auto& [layer, t] : topology.layer_timeouts) {
        timeouts[std::to_string(layer)] = t;
    }
    json j{{"peers", peers},
           {"edges", edges},
           {"terminal_targets", topology.terminal_targets},
           {"alignments", alignments},
           {"layer_timeouts", timeouts}};
    if (topology.cache_layer) {
        j["cache_layer"] = *topology.cache_layer;
    } else {
        j["cache_layer"] = nullptr;
    }
    return j;
}

Topology topology_from_json(const json& j) {
    check_fields(j,
                 {"peers", "edges", "terminal_targets", "alignments", "layer_timeouts",
                  "cache_layer"},
                 "topology");
    Topology t;
    for (const auto& pj : get_req<json>(j, "peers", "topology")) {
        auto spec = peer_spec_from_json(pj);
        if (t.find_peer(spec.id) != nullptr) {
            throw ConfigError("topology: duplicate peer id \"" + spec.id + "\"");
        }
        t.peers.push_back(std::move(spec));
    }
    std::sort(t.peers.begin(), t.peers.end(),
              [](const PeerSpec& a, const PeerSpec& b) { return a.id < b.id; });
    if (j.contains("edges")) {
        for (const auto& ej : j["edges"]) {
            if (!ej.is_array() || ej.size() != 2) {
                throw ConfigError("topology: edge must be a [source, target] pair");
            }
            PeerId from = ej[0].get<PeerId>();
            PeerId to = ej[1].get<PeerId>();
            for (const auto& id : {from, to}) {
                if (t.find_peer(id) == nullptr) {
                    throw ConfigError("topology: edge references unknown peer \"" + id +
                                      "\"");
                }
            }
            t.edges.insert({std::move(from), std::move(to)});
        }
    }
    if (j.contains("terminal_targets")) {
        for (const auto& id : j["terminal_targets"].get<std::vector<PeerId>>()) {
            if (t.find_peer(id) == nullptr) {
                throw ConfigError("topology: terminal target \"" + id + "\" is unknown");
            }
            t.terminal_targets.insert(id);
        }
    }
    if (j.contains("alignments")) {
        for (const auto& aj : j["alignments"]) {
            auto a = layer_alignment_from_json(aj);
            for (const auto& [path, seg] : a.segments) {
                for (const auto& id : seg) {
                    if (t.find_peer(id) == nullptr) {
                        throw ConfigError("topology: alignment references unknown peer \"" +
                                          id + "\"");
                    }
                }
            }
            t.alignments.push_back(std::move(a));
        }
    }
    if (j.contains("layer_timeouts")) {
        for (const auto& item : j["layer_timeouts"].items()) {
            int layer = 0;
            try {
                layer = std::stoi(item.key());
            } catch (const std::exception&) {
                throw ConfigError("topology: layer_timeouts key \"" + item.key() +
                                  "\" is not a layer number");
            }
            double v = item.value().get<double>();
            if (v < 0.0) {
                throw ConfigError("topology: layer timeout must be >= 0");
            }
            t.layer_timeouts[layer] = v;
        }
    }
    if (j.contains("cache_layer") && !j["cache_layer"].is_null()) {
        t.cache_layer = j["cache_layer"].get<int>();
    }
    if (t.cache_layer) {
        for (const auto& p : t.peers) {
            if (p.role == PeerRole::Cache && p.layer != *t.cache_layer) {
                throw ConfigError("topology: cache peer \"" + p.id +
                                  "\" outside the cache layer");
            }
        }
    } else {
        for (const auto& p : t.peers) {
            if (p.role == PeerRole::Cache) {
                throw ConfigError("topology: cache peer \"" + p.id +
                                  "\" but no cache layer configured");
            }
        }
    }
    return t;
}

}  // namespace peerweave
