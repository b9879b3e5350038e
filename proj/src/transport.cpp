#include "peerweave/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "peerweave/errors.hpp"
#include "peerweave/json_util.hpp"

namespace peerweave {

using jsonu::check_fields;
using jsonu::get_opt;
using jsonu::get_req;

namespace {

const char* kind_name(WireMessage::Kind kind) {
    switch (kind) {
        case WireMessage::Kind::TaskForward: return "task_forward";
        case WireMessage::Kind::ResultReturn: return "result_return";
        case WireMessage::Kind::Ack: return "ack";
        case WireMessage::Kind::ErrorReport: return "error_report";
    }
    return "ack";
}

WireMessage::Kind kind_from_name(const std::string& name) {
    if (name == "task_forward") return WireMessage::Kind::TaskForward;
    if (name == "result_return") return WireMessage::Kind::ResultReturn;
    if (name == "ack") return WireMessage::Kind::Ack;
    if (name == "error_report") return WireMessage::Kind::ErrorReport;
    throw CodecError("unknown message kind \"" + name + "\"");
}

}  // namespace

std::string encode(const WireMessage& message) {
    json body = json::object();
    switch (message.kind) {
        case WireMessage::Kind::TaskForward:
            if (!message.task) {
                throw CodecError("task_forward frame requires a task body");
            }
            body["task"] = to_json(*message.task);
            break;
        case WireMessage::Kind::ResultReturn:
            if (!message.result) {
                throw CodecError("result_return frame requires a result body");
            }
            body["result"] = to_json(*message.result);
            body["tried"] = message.tried;
            break;
        case WireMessage::Kind::Ack:
            break;
        case WireMessage::Kind::ErrorReport:
            body["reason"] = message.reason;
            break;
    }
    json j{{"kind", kind_name(message.kind)},
           {"task_id", message.task_id.value},
           {"sender", message.sender},
           {"body", body}};
    return j.dump() + "\n";
}

WireMessage decode(std::string_view frame) {
    while (!frame.empty() && (frame.back() == '\n' || frame.back() == '\r')) {
        frame.remove_suffix(1);
    }
    json j;
    try {
        j = json::parse(frame);
    } catch (const json::parse_error& e) {
        throw CodecError("malformed frame at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
    if (!j.is_object()) {
        throw CodecError("malformed frame: not a JSON object");
    }
    WireMessage m;
    try {
        check_fields(j, {"kind", "task_id", "sender", "body"}, "frame");
        m.kind = kind_from_name(get_req<std::string>(j, "kind", "frame"));
        m.task_id.value = get_req<std::string>(j, "task_id", "frame");
        m.sender = get_req<std::string>(j, "sender", "frame");
        const json& body = get_req<json>(j, "body", "frame");
        switch (m.kind) {
            case WireMessage::Kind::TaskForward:
                check_fields(body, {"task"}, "task_forward body");
                m.task = task_from_json(get_req<json>(body, "task", "task_forward body"));
                break;
            case WireMessage::Kind::ResultReturn: {
                check_fields(body, {"result", "tried"}, "result_return body");
                m.result = task_result_from_json(
                    get_req<json>(body, "result", "result_return body"));
                auto tried =
                    get_opt<std::vector<PeerId>>(body, "tried", {}, "result_return body");
                m.tried.insert(tried.begin(), tried.end());
                break;
            }
            case WireMessage::Kind::Ack:
                check_fields(body, {}, "ack body");
                break;
            case WireMessage::Kind::ErrorReport:
                check_fields(body, {"reason"}, "error_report body");
                m.reason = get_req<std::string>(body, "reason", "error_report body");
                break;
        }
    } catch (const ConfigError& e) {
        throw CodecError(std::string("malformed frame: ") + e.what());
    }
    return m;
}

json peer_config_to_json(const PeerConfig& config) {
    json targets = json::array();
    for (const auto& [id, address] : config.targets) {
        targets.push_back(json{{"id", id}, {"address", address}});
    }
    return json{{"id", config.id},       {"layer", config.layer},
                {"p", config.p},         {"processing_time_s", config.processing_time_s},
                {"targets", targets},    {"t_max_s", config.t_max_s}};
}

PeerConfig peer_config_from_json(const json& j) {
    check_fields(j, {"id", "layer", "p", "processing_time_s", "targets", "t_max_s"},
                 "peer config");
    PeerConfig c;
    c.id = get_req<std::string>(j, "id", "peer config");
    c.layer = get_req<int>(j, "layer", "peer config");
    c.p = get_req<double>(j, "p", "peer config");
    c.processing_time_s = get_req<double>(j, "processing_time_s", "peer config");
    c.t_max_s = get_req<double>(j, "t_max_s", "peer config");
    for (const auto& tj : get_req<json>(j, "targets", "peer config")) {
        check_fields(tj, {"id", "address"}, "peer target");
        c.targets.emplace_back(get_req<std::string>(tj, "id", "peer target"),
                               get_req<std::string>(tj, "address", "peer target"));
    }
    return c;
}

// --- loopback TCP plumbing ---

namespace {

int tcp_listen(int port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) {
        throw TransportError("socket() failed");
    }
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw TransportError("bind() failed on port " + std::to_string(port));
    }
    if (::listen(fd, 64) != 0) {
        ::close(fd);
        throw TransportError("listen() failed on port " + std::to_string(port));
    }
    return fd;
}

int tcp_connect(int port, double timeout_s) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) {
        return -1;
    }
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    timeval tv{};
    tv.tv_sec = static_cast<long>(timeout_s);
    tv.tv_usec = static_cast<long>((timeout_s - static_cast<double>(tv.tv_sec)) * 1e6);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        return -1;
    }
    return fd;
}

bool send_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            return false;
        }
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

// Reads until '\n'; empty optional on timeout, EOF, or error.
std::optional<std::string> recv_line(int fd, double timeout_s) {
    std::string line;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(timeout_s));
    char buf[512];
    while (true) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - std::chrono::steady_clock::now())
                        .count();
        if (left <= 0) {
            return std::nullopt;
        }
        pollfd pfd{fd, POLLIN, 0};
        int pr = ::poll(&pfd, 1, static_cast<int>(left));
        if (pr <= 0) {
            return std::nullopt;
        }
        ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
        if (n <= 0) {
            return std::nullopt;
        }
        line.append(buf, static_cast<std::size_t>(n));
        if (line.find('\n') != std::string::npos) {
            return line.substr(0, line.find('\n') + 1);
        }
        if (line.size() > 1 << 20) {
            return std::nullopt;
        }
    }
}

constexpr std::uint64_t kGoldenLocal = 0x9E3779B97F4A7C15ull;

std::uint64_t fnv_str(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h = (h ^ c) * 0x100000001B3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

struct LiveCluster::Impl {
    struct Peer {
        PeerConfig config;
        int port = 0;
        int listen_fd = -1;
        std::thread accept_thread;
        std::atomic<bool> running{false};
        std::vector<std::thread> handlers;
        std::mutex handlers_mutex;
    };

    SimConfig config;
    std::vector<std::unique_ptr<Peer>> peers;
    std::unordered_map<PeerId, Peer*> by_id;
    std::unordered_map<PeerId, int> port_by_id;
    std::vector<std::pair<PeerId, int>> entries; // (id, port), config order
    double entry_timeout_s = 0.5;

    ~Impl() { stop_all(); }

    void stop_all() {
        for (auto& p : peers) {
            stop(*p);
        }
    }

    void stop(Peer& peer) {
        bool was_running = peer.running.exchange(false);
        if (peer.listen_fd >= 0) {
            ::shutdown(peer.listen_fd, SHUT_RDWR);
            ::close(peer.listen_fd);
            peer.listen_fd = -1;
        }
        if (was_running && peer.accept_thread.joinable()) {
            peer.accept_thread.join();
        }
        std::lock_guard<std::mutex> lock(peer.handlers_mutex);
        for (auto& h : peer.handlers) {
            if (h.joinable()) {
                h.join();
            }
        }
        peer.handlers.clear();
    }

    void start(Peer& peer) {
        peer.listen_fd = tcp_listen(peer.port);
        peer.running = true;
        peer.accept_thread = std::thread([this, &peer] {
            while (peer.running) {
                int conn = ::accept(peer.listen_fd, nullptr, nullptr);
                if (conn < 0) {
                    break;
                }
                std::lock_guard<std::mutex> lock(peer.handlers_mutex);
                peer.handlers.emplace_back([this, &peer, conn] { handle(peer, conn); });
            }
        });
    }

    bool hang_draw(const Peer& peer, const Task& task) const {
        if (peer.config.p >= 1.0) {
            return false;
        }
        if (peer.config.p <= 0.0) {
            return true;
        }
        std::uint64_t seed = splitmix64(config.seed ^ fnv_str(peer.config.id) ^
                                        fnv_str(task.id.value) ^ task.attempt);
        std::mt19937_64 rng(seed);
        return failure_draw(rng, peer.config.p, config.draw_range_n) == DrawResult::Hang;
    }

    void handle(Peer& peer, int conn) {
        auto line = recv_line(conn, 10.0);
        if (!line) {
            ::close(conn);
            return;
        }
        WireMessage request;
        try {
            request = decode(*line);
        } catch (const CodecError& e) {
            WireMessage err;
            err.kind = WireMessage::Kind::ErrorReport;
            err.sender = peer.config.id;
            err.reason = e.what();
            send_all(conn, encode(err));
            ::close(conn);
            return;
        }
        if (request.kind != WireMessage::Kind::TaskForward || !request.task) {
            WireMessage err;
            err.kind = WireMessage::Kind::ErrorReport;
            err.task_id = request.task_id;
            err.sender = peer.config.id;
            err.reason = "expected task_forward";
            send_all(conn, encode(err));
            ::close(conn);
            return;
        }

        Task task = *request.task;
        if (hang_draw(peer, task)) {
            // Failure injection: never respond. The source times out.
            ::close(conn);
            return;
        }
        std::this_thread::sleep_for(
            std::chrono::duration<double>(peer.config.processing_time_s));
        task = append_signature(std::move(task), peer.config.id, peer.config.layer);

        WireMessage reply = forward(peer, task);
        reply.sender = peer.config.id;
        reply.task_id = task.id;
        send_all(conn, encode(reply));
        ::close(conn);
    }

    // Forwards the task to the first responsive untried target; a peer
    // without targets completes the task itself.
    WireMessage forward(Peer& peer, Task task) {
        WireMessage reply;
        reply.kind = WireMessage::Kind::ResultReturn;
        if (peer.config.targets.empty()) {
            TaskResult result;
            result.task_id = task.id;
            result.outcome = TaskOutcome::Success;
            result.return_path = task.trace;
            reply.result = result;
            return reply;
        }
        for (const auto& [target_id, address] : peer.config.targets) {
            if (task.tried.count(target_id) > 0) {
                continue;
            }
            auto colon = address.rfind(':');
            int port = std::stoi(address.substr(colon + 1));
            int fd = tcp_connect(port, peer.config.t_max_s);
            if (fd < 0) {
                task.tried.insert(target_id);
                continue;
            }
            WireMessage fwd;
            fwd.kind = WireMessage::Kind::TaskForward;
            fwd.task_id = task.id;
            fwd.sender = peer.config.id;
            fwd.task = task;
            if (!send_all(fd, encode(fwd))) {
                ::close(fd);
                task.tried.insert(target_id);
                continue;
            }
            auto line = recv_line(fd, peer.config.t_max_s);
            ::close(fd);
            if (!line) {
                task.tried.insert(target_id);
                continue;
            }
            WireMessage response;
            try {
                response = decode(*line);
            } catch (const CodecError&) {
                task.tried.insert(target_id);
                continue;
            }
            if (response.kind == WireMessage::Kind::ResultReturn && response.result) {
                if (response.result->outcome == TaskOutcome::Success) {
                    reply.result = response.result;
                    return reply;
                }
                task.tried.insert(target_id);
                task.tried.insert(response.tried.begin(), response.tried.end());
                for (const auto& t : task.trace) {
                    task.tried.erase(t);
                }
                continue;
            }
            task.tried.insert(target_id);
        }
        TaskResult result;
        result.task_id = task.id;
        result.outcome = TaskOutcome::Failure;
        result.reason = "all-paths-exhausted";
        reply.result = result;
        reply.tried = task.tried;
        return reply;
    }

    TaskResult terminal_submit(const std::string& payload, std::uint64_t run_index) {
        IdGenerator ids = IdGenerator::sequential(static_cast<std::uint32_t>(run_index));
        Task task = new_task(payload, ids);
        auto start = std::chrono::steady_clock::now();
        bool any_entry_up = false;
        for (const auto& [entry_id, port] : entries) {
            if (task.tried.count(entry_id) > 0) {
                continue;
            }
            int fd = tcp_connect(port, entry_timeout_s);
            if (fd < 0) {
                task.tried.insert(entry_id);
                continue;
            }
            WireMessage fwd;
            fwd.kind = WireMessage::Kind::TaskForward;
            fwd.task_id = task.id;
            fwd.sender = "terminal";
            fwd.task = task;
            bool ok = send_all(fd, encode(fwd));
            auto line = ok ? recv_line(fd, entry_timeout_s) : std::nullopt;
            ::close(fd);
            if (!line) {
                task.tried.insert(entry_id);
                continue;
            }
            WireMessage response;
            try {
                response = decode(*line);
            } catch (const CodecError&) {
                task.tried.insert(entry_id);
                continue;
            }
            if (response.kind != WireMessage::Kind::ResultReturn || !response.result) {
                task.tried.insert(entry_id);
                continue;
            }
            any_entry_up = true;
            if (response.result->outcome == TaskOutcome::Success) {
                TaskResult result = *response.result;
                result.completed_at =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                        .count();
                return result;
            }
            task.tried.insert(entry_id);
            task.tried.insert(response.tried.begin(), response.tried.end());
        }
        TaskResult result;
        result.task_id = task.id;
        result.outcome = TaskOutcome::Failure;
        result.reason = any_entry_up ? "all-paths-exhausted" : "no-entry-peer";
        result.completed_at =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return result;
    }
};

LiveCluster::LiveCluster(const Topology& topology, const ProbAssignment& probs,
                         const SimConfig& config, int port_base)
    : impl_(std::make_unique<Impl>()) {
    impl_->config = config;
    std::vector<PeerId> ids;
    for (const auto& p : topology.peers) {
        ids.push_back(p.id);
    }
    std::sort(ids.begin(), ids.end());
    int next_port = port_base;
    for (const auto& id : ids) {
        impl_->port_by_id[id] = next_port++;
    }
    // A reply only arrives once the entire downstream chain has finished, so
    // the wall-clock wait at layer l must budget every layer below it, plus a
    // fixed allowance for thread scheduling. Hung peers close the connection
    // immediately, so a generous budget never slows the failure path down.
    constexpr double kSchedulingSlackS = 0.25;
    int max_layer = 0;
    for (const auto& p : topology.peers) {
        max_layer = std::max(max_layer, p.layer);
    }
    auto wait_budget = [&](int from_layer) {
        double total = kSchedulingSlackS;
        for (int l = from_layer + 1; l <= max_layer; ++l) {
            total += topology.layer_timeout(l);
        }
        return total;
    };
    for (const auto& id : ids) {
        const PeerSpec* spec = topology.find_peer(id);
        auto peer = std::make_unique<Impl::Peer>();
        peer->port = impl_->port_by_id[id];
        peer->config.id = id;
        peer->config.layer = spec->layer;
        auto it = probs.find(id);
        peer->config.p = it == probs.end() ? spec->success_prob : it->second;
        peer->config.processing_time_s = spec->processing_time;
        peer->config.t_max_s = wait_budget(spec->layer);
        for (const auto& [from, to] : topology.edges) {
            if (from == id) {
                peer->config.targets.emplace_back(
                    to, "127.0.0.1:" + std::to_string(impl_->port_by_id[to]));
            }
        }
        std::sort(peer->config.targets.begin(), peer->config.targets.end());
        impl_->by_id[id] = peer.get();
        impl_->peers.push_back(std::move(peer));
    }
    std::vector<PeerId> entry_ids(topology.terminal_targets.begin(),
                                  topology.terminal_targets.end());
    std::sort(entry_ids.begin(), entry_ids.end());
    for (const auto& id : entry_ids) {
        impl_->entries.emplace_back(id, impl_->port_by_id[id]);
    }
    impl_->entry_timeout_s = wait_budget(0);
    for (auto& p : impl_->peers) {
        impl_->start(*p);
    }
}

LiveCluster::~LiveCluster() = default;

TaskResult LiveCluster::submit(const std::string& payload, std::uint64_t run_index) {
    return impl_->terminal_submit(payload, run_index);
}

Metrics LiveCluster::run_all(int runs) {
    Metrics metrics;
    for (int run = 0; run < runs; ++run) {
        TaskResult result = submit("", static_cast<std::uint64_t>(run));
        if (result.outcome == TaskOutcome::Success) {
            metrics.counter_success += 1;
            metrics.success_task_times.push_back(result.completed_at);
        } else {
            metrics.counter_failure += 1;
        }
        metrics.task_times.push_back(result.completed_at);
        std::string signature =
            result.outcome == TaskOutcome::Success ? "S" : "F:" + result.reason.value_or("");
        for (const auto& p : result.return_path) {
            signature += "|" + p;
        }
        metrics.digest +=
            splitmix64(fnv_str(signature) ^ (static_cast<std::uint64_t>(run) * kGoldenLocal + 1));
    }
    return metrics;
}

void LiveCluster::stop_peer(const PeerId& id) {
    auto it = impl_->by_id.find(id);
    if (it == impl_->by_id.end()) {
        throw TransportError("stop_peer: unknown peer \"" + id + "\"");
    }
    impl_->stop(*it->second);
}

int LiveCluster::port_of(const PeerId& id) const {
    auto it = impl_->port_by_id.find(id);
    if (it == impl_->port_by_id.end()) {
        throw TransportError("port_of: unknown peer \"" + id + "\"");
    }
    return it->second;
}

std::vector<PeerConfig> LiveCluster::configs() const {
    std::vector<PeerConfig> out;
    for (const auto& p : impl_->peers) {
        out.push_back(p->config);
    }
    return out;
}

Metrics live_run(const Topology& topology, const ProbAssignment& probs,
                 const SimConfig& config, int port_base, int runs) {
    LiveCluster cluster(topology, probs, config, port_base);
    return cluster.run_all(runs);
}

}  // namespace peerweave
