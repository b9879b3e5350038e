#include "peerweave/topology.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "peerweave/json_util.hpp"

namespace peerweave {

using jsonu::check_fields;
using jsonu::get_opt;
using jsonu::get_req;

std::string WorkingPath::key() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < peers.size(); ++i) {
        if (i > 0) {
            os << "->";
        }
        os << peers[i];
    }
    return os.str();
}

static PeerId chain_peer_name(int path, int layer) {
    return "p" + std::to_string(path) + "_l" + std::to_string(layer);
}

Topology build_separate_paths(int num_paths, int depth,
                              const std::function<double(int, int)>& prob_at,
                              double processing_time) {
    if (num_paths < 1 || depth < 1) {
        throw InvalidDimensionError("build_separate_paths: num_paths and depth must be >= 1");
    }
    Topology t;
    for (int p = 1; p <= num_paths; ++p) {
        for (int l = 1; l <= depth; ++l) {
            PeerSpec spec;
            spec.id = chain_peer_name(p, l);
            spec.layer = l;
            spec.success_prob = prob_at(p, l);
            spec.processing_time = processing_time;
            t.peers.push_back(std::move(spec));
            if (l > 1) {
                t.edges.insert({chain_peer_name(p, l - 1), chain_peer_name(p, l)});
            }
        }
        t.terminal_targets.insert(chain_peer_name(p, 1));
    }
    std::sort(t.peers.begin(), t.peers.end(),
              [](const PeerSpec& a, const PeerSpec& b) { return a.id < b.id; });
    return t;
}

Topology build_separate_paths(int num_paths, int depth, double success_prob,
                              double processing_time) {
    return build_separate_paths(
        num_paths, depth, [success_prob](int, int) { return success_prob; },
        processing_time);
}

Topology make_full_connection(Topology topology, const std::set<int>& layers) {
    int max_layer = topology.max_layer();
    for (int layer : layers) {
        if (layer < 2 || layer > max_layer) {
            throw UnknownLayerError("make_full_connection: layer " + std::to_string(layer) +
                                    " is not a connectable layer");
        }
        for (const auto& from : topology.peers_in_layer(layer - 1)) {
            for (const auto& to : topology.peers_in_layer(layer)) {
                topology.edges.insert({from, to});
            }
        }
    }
    return topology;
}

namespace {

struct Adjacency {
    std::map<PeerId, std::vector<PeerId>> targets; // sorted target lists

    explicit Adjacency(const Topology& t) {
        for (const auto& [from, to] : t.edges) {
            targets[from].push_back(to);
        }
        for (auto& [id, v] : targets) {
            std::sort(v.begin(), v.end());
        }
    }

    const std::vector<PeerId>& of(const PeerId& id) const {
        static const std::vector<PeerId> none;
        auto it = targets.find(id);
        return it == targets.end() ? none : it->second;
    }
};

void enumerate_from(const Topology& t, const Adjacency& adj, int final_layer,
                    std::vector<PeerId>& stack, PathSet& out, std::size_t cap) {
    const PeerSpec* here = t.find_peer(stack.back());
    if (here != nullptr && here->layer == final_layer) {
        if (out.paths.size() >= cap) {
            throw PathExplosionError("enumerate_working_paths: more than " +
                                     std::to_string(cap) + " working paths");
        }
        out.paths.push_back(WorkingPath{stack});
        return;
    }
    for (const auto& next : adj.of(stack.back())) {
        stack.push_back(next);
        enumerate_from(t, adj, final_layer, stack, out, cap);
        stack.pop_back();
    }
}

}  // namespace

PathSet enumerate_working_paths(const Topology& topology, std::size_t cap) {
    Adjacency adj(topology);
    int final_layer = topology.max_layer();
    PathSet out;
    std::vector<PeerId> entries(topology.terminal_targets.begin(),
                                topology.terminal_targets.end());
    std::sort(entries.begin(), entries.end());
    std::vector<PeerId> stack;
    for (const auto& entry : entries) {
        stack.push_back(entry);
        enumerate_from(topology, adj, final_layer, stack, out, cap);
        stack.pop_back();
    }
    return out;
}

PathClassification classify_paths(const WorkingPath& a, const WorkingPath& b) {
    PathClassification c;
    std::set<PeerId> in_a(a.peers.begin(), a.peers.end());
    for (const auto& p : b.peers) {
        if (in_a.count(p) > 0) {
            c.common.insert(p);
        }
    }
    c.kind = c.common.empty() ? PathRelation::Separate : PathRelation::Coupled;
    return c;
}

namespace {

// Exact maximum independent set over the path-conflict graph. Paths are
// explored in lexicographic order with include-first branching, so the
// first maximum found is the lexicographically smallest one.
void basic_path_search(const std::vector<std::vector<bool>>& conflict,
                       std::size_t idx, std::vector<std::size_t>& chosen,
                       std::vector<std::size_t>& best) {
    std::size_t n = conflict.size();
    if (chosen.size() + (n - idx) <= best.size()) {
        return; // cannot beat the incumbent
    }
    if (idx == n) {
        if (chosen.size() > best.size()) {
            best = chosen;
        }
        return;
    }
    bool compatible = true;
    for (auto c : chosen) {
        if (conflict[c][idx]) {
            compatible = false;
            break;
        }
    }
    if (compatible) {
        chosen.push_back(idx);
        basic_path_search(conflict, idx + 1, chosen, best);
        chosen.pop_back();
    }
    basic_path_search(conflict, idx + 1, chosen, best);
}

}  // namespace

PathSet extract_basic_paths(const PathSet& paths) {
    std::vector<WorkingPath> sorted = paths.paths;
    std::sort(sorted.begin(), sorted.end(),
              [](const WorkingPath& a, const WorkingPath& b) { return a.peers < b.peers; });
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::size_t n = sorted.size();
    std::vector<std::vector<bool>> conflict(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            bool coupled =
                classify_paths(sorted[i], sorted[j]).kind == PathRelation::Coupled;
            conflict[i][j] = conflict[j][i] = coupled;
        }
    }
    std::vector<std::size_t> chosen;
    std::vector<std::size_t> best;
    basic_path_search(conflict, 0, chosen, best);

    PathSet out;
    for (auto i : best) {
        out.paths.push_back(sorted[i]);
    }
    return out;
}

namespace {

// Locates the alignment segment containing `peer`, if any.
struct SegmentHit {
    const LayerAlignment* alignment = nullptr;
    const std::string* path_id = nullptr;
    const std::vector<PeerId>* segment = nullptr;
};

SegmentHit find_segment(const Topology& t, const PeerId& peer) {
    for (const auto& a : t.alignments) {
        for (const auto& [path_id, seg] : a.segments) {
            if (std::find(seg.begin(), seg.end(), peer) != seg.end()) {
                return SegmentHit{&a, &path_id, &seg};
            }
        }
    }
    return {};
}

}  // namespace

SwitchPath compute_switch_path(const Topology& topology, const PeerId& failed,
                               const std::vector<PeerId>& context,
                               const std::set<PeerId>& tried) {
    const PeerSpec* failed_spec = topology.find_peer(failed);
    if (failed_spec == nullptr) {
        throw MissingPeerError("compute_switch_path: unknown peer \"" + failed + "\"");
    }

    SwitchPath sp;
    SegmentHit hit = find_segment(topology, failed);
    if (hit.alignment != nullptr) {
        // Peers of the failed segment already traversed: the context suffix
        // lying inside the segment.
        std::vector<PeerId> suffix;
        for (auto it = context.rbegin(); it != context.rend(); ++it) {
            if (std::find(hit.segment->begin(), hit.segment->end(), *it) !=
                hit.segment->end()) {
                suffix.push_back(*it);
            } else {
                break;
            }
        }
        sp.back.push_back(failed);
        sp.back.insert(sp.back.end(), suffix.begin(), suffix.end());
        std::size_t consumed = suffix.size();
        sp.back.push_back(consumed < context.size()
                              ? context[context.size() - 1 - consumed]
                              : PeerId("terminal"));

        std::vector<std::pair<std::string, const std::vector<PeerId>*>> candidates;
        for (const auto& [path_id, seg] : hit.alignment->segments) {
            if (path_id == *hit.path_id) {
                continue;
            }
            bool usable = true;
            for (const auto& p : seg) {
                if (tried.count(p) > 0) {
                    usable = false;
                    break;
                }
            }
            if (usable) {
                candidates.emplace_back(path_id, &seg);
            }
        }
        if (candidates.empty()) {
            throw NoAlternativeError("compute_switch_path: no untried replacement for \"" +
                                     failed + "\"");
        }
        std::sort(candidates.begin(), candidates.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        sp.forward = *candidates.front().second;
        return sp;
    }

    // No explicit alignment: the failed peer's layer behaves as a normal
    // layer where every same-layer peer is a substitute.
    PeerId decision =
        context.empty() ? PeerId("terminal") : context.back();
    sp.back = {failed, decision};
    for (const auto& candidate : topology.peers_in_layer(failed_spec->layer)) {
        if (candidate == failed || tried.count(candidate) > 0) {
            continue;
        }
        bool reachable = decision == "terminal"
                             ? topology.terminal_targets.count(candidate) > 0
                             : topology.has_edge(decision, candidate);
        if (reachable) {
            sp.forward = {candidate};
            return sp;
        }
    }
    throw NoAlternativeError("compute_switch_path: no untried replacement for \"" +
                             failed + "\"");
}

namespace {

using EdgeKey = std::pair<PeerId, PeerId>; // ("terminal", x) = terminal attachment

Topology apply_edge(Topology t, const EdgeKey& e) {
    if (e.first == "terminal") {
        t.terminal_targets.insert(e.second);
    } else {
        t.edges.insert(e);
    }
    return t;
}

double topology_union_probability(const Topology& t, const ProbAssignment& probs,
                                  const UnionProbabilityFn& oracle) {
    return oracle(enumerate_working_paths(t), probs);
}

}  // namespace

Topology build_minimum_connection(const Topology& topology, const ProbAssignment& probs,
                                  const MinConnectionParams& params,
                                  const UnionProbabilityFn& oracle) {
    if (params.delta <= -1.0 || params.delta >= 1.0) {
        throw ConfigError("build_minimum_connection: delta must lie in (0,1)");
    }

    // Feasibility: the full closure (all inter-layer edges, every layer-1
    // peer attached to the terminal) must already beat delta.
    int max_layer = topology.max_layer();
    std::set<int> all_layers;
    for (int l = 2; l <= max_layer; ++l) {
        all_layers.insert(l);
    }
    Topology full = make_full_connection(topology, all_layers);
    for (const auto& id : full.peers_in_layer(1)) {
        full.terminal_targets.insert(id);
    }
    double full_prob = topology_union_probability(full, probs, oracle);
    if (!(full_prob > params.delta)) {
        throw InfeasibleDeltaError(
            "build_minimum_connection: full connection reaches only " +
            std::to_string(full_prob));
    }

    // Skeleton: the basic (pairwise separate) paths of the input topology.
    PathSet basics = extract_basic_paths(enumerate_working_paths(topology));
    Topology current = topology;
    current.edges.clear();
    current.terminal_targets.clear();
    for (const auto& path : basics.paths) {
        current.terminal_targets.insert(path.peers.front());
        for (std::size_t i = 0; i + 1 < path.peers.size(); ++i) {
            current.edges.insert({path.peers[i], path.peers[i + 1]});
        }
    }

    std::vector<EdgeKey> candidates;
    for (const auto& e : full.edges) {
        if (current.edges.count(e) == 0) {
            candidates.push_back(e);
        }
    }
    for (const auto& id : full.terminal_targets) {
        if (current.terminal_targets.count(id) == 0) {
            candidates.emplace_back("terminal", id);
        }
    }
    std::sort(candidates.begin(), candidates.end());

    double prob = topology_union_probability(current, probs, oracle);
    int added = 0;
    while (!(prob > params.delta)) {
        double best_prob = -1.0;
        std::size_t best_idx = candidates.size();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            double p =
                topology_union_probability(apply_edge(current, candidates[i]), probs, oracle);
            if (p > best_prob + 1e-15) {
                best_prob = p;
                best_idx = i;
            }
        }
        if (best_idx == candidates.size()) {
            throw InfeasibleDeltaError("build_minimum_connection: no candidate edge left");
        }
        current = apply_edge(std::move(current), candidates[best_idx]);
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best_idx));
        prob = best_prob;
        ++added;
        if (params.max_edges && added > *params.max_edges) {
            throw InfeasibleDeltaError("build_minimum_connection: edge cap exceeded");
        }
    }
    return current;
}

ValidationReport validate_topology(const Topology& topology) {
    ValidationReport report;
    int final_layer = topology.max_layer();

    if (topology.peers.empty()) {
        report.violations.push_back("topology has no peers");
        return report;
    }

    for (const auto& [from, to] : topology.edges) {
        const PeerSpec* a = topology.find_peer(from);
        const PeerSpec* b = topology.find_peer(to);
        if (a == nullptr || b == nullptr) {
            report.violations.push_back("edge " + from + "->" + to +
                                        " references an unknown peer");
            continue;
        }
        if (b->layer != a->layer + 1) {
            report.violations.push_back("edge " + from + "->" + to +
                                        " does not step from layer " +
                                        std::to_string(a->layer) + " to layer " +
                                        std::to_string(a->layer + 1));
        }
    }

    for (const auto& id : topology.terminal_targets) {
        const PeerSpec* p = topology.find_peer(id);
        if (p == nullptr) {
            report.violations.push_back("terminal target " + id + " is unknown");
        } else if (p->layer != 1) {
            report.violations.push_back("terminal target " + id + " is not in layer 1");
        }
    }

    // Reachability from the terminal and co-reachability to the final layer.
    Adjacency adj(topology);
    std::set<PeerId> reachable;
    std::vector<PeerId> frontier(topology.terminal_targets.begin(),
                                 topology.terminal_targets.end());
    while (!frontier.empty()) {
        PeerId id = frontier.back();
        frontier.pop_back();
        if (!reachable.insert(id).second) {
            continue;
        }
        for (const auto& next : adj.of(id)) {
            frontier.push_back(next);
        }
    }
    std::map<PeerId, std::vector<PeerId>> reverse;
    for (const auto& [from, to] : topology.edges) {
        reverse[to].push_back(from);
    }
    std::set<PeerId> completing;
    for (const auto& p : topology.peers) {
        if (p.layer == final_layer) {
            frontier.push_back(p.id);
        }
    }
    while (!frontier.empty()) {
        PeerId id = frontier.back();
        frontier.pop_back();
        if (!completing.insert(id).second) {
            continue;
        }
        for (const auto& prev : reverse[id]) {
            frontier.push_back(prev);
        }
    }

    bool any_working_path = false;
    for (const auto& p : topology.peers) {
        bool on_path = reachable.count(p.id) > 0 && completing.count(p.id) > 0;
        if (on_path && topology.terminal_targets.count(p.id) > 0) {
            any_working_path = true;
        }
        if (!on_path) {
            if (p.layer < final_layer && adj.of(p.id).empty()) {
                report.violations.push_back("peer " + p.id +
                                            " is a dead end below the final layer");
            } else {
                report.violations.push_back("peer " + p.id +
                                            " lies on no working path");
            }
        }
    }
    if (!any_working_path) {
        report.violations.push_back("topology has no working path");
    }

    if (topology.cache_layer) {
        if (*topology.cache_layer < 1 || *topology.cache_layer >= final_layer) {
            report.violations.push_back("cache layer must lie strictly below the final layer");
        }
        bool any_cache = false;
        for (const auto& p : topology.peers) {
            any_cache = any_cache || (p.role == PeerRole::Cache);
        }
        if (!any_cache) {
            report.violations.push_back("cache layer configured but no cache peers exist");
        }
    }
    return report;
}

Topology load_topology_document(const json& j) {
    jsonu::expect_object(j, "topology document");
    if (!j.contains("generate")) {
        return topology_from_json(j);
    }
    check_fields(j, {"generate", "layer_timeouts", "cache_layer"}, "topology document");
    const json& g = j["generate"];
    check_fields(g, {"separate", "full_layers", "success_prob", "processing_time"},
                 "generate");
    const json& sep = get_req<json>(g, "separate", "generate");
    check_fields(sep, {"paths", "depth"}, "generate.separate");
    int paths = get_req<int>(sep, "paths", "generate.separate");
    int depth = get_req<int>(sep, "depth", "generate.separate");
    double p = get_opt<double>(g, "success_prob", 1.0, "generate");
    double proc = get_opt<double>(g, "processing_time", 1.0, "generate");
    Topology t = build_separate_paths(paths, depth, p, proc);
    auto full_layers = get_opt<std::vector<int>>(g, "full_layers", {}, "generate");
    t = make_full_connection(std::move(t),
                             std::set<int>(full_layers.begin(), full_layers.end()));
    if (j.contains("layer_timeouts")) {
        for (const auto& item : j["layer_timeouts"].items()) {
            t.layer_timeouts[std::stoi(item.key())] = item.value().get<double>();
        }
    }
    if (j.contains("cache_layer") && !j["cache_layer"].is_null()) {
        t.cache_layer = j["cache_layer"].get<int>();
    }
    return t;
}

}  // namespace peerweave
