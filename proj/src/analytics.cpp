#include "peerweave/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "peerweave/errors.hpp"

namespace peerweave {

double path_success_probability(const WorkingPath& path, const ProbAssignment& probs) {
    double product = 1.0;
    for (const auto& peer : path.peers) {
        auto it = probs.find(peer);
        if (it == probs.end()) {
            throw MissingPeerError("path_success_probability: no probability for \"" +
                                   peer + "\"");
        }
        product *= it->second;
    }
    return product;
}

double union_success_probability(const PathSet& paths, const ProbAssignment& probs) {
    if (paths.paths.empty()) {
        return 0.0;
    }
    std::vector<PeerId> peers;
    for (const auto& path : paths.paths) {
        peers.insert(peers.end(), path.peers.begin(), path.peers.end());
    }
    std::sort(peers.begin(), peers.end());
    peers.erase(std::unique(peers.begin(), peers.end()), peers.end());
    int k = static_cast<int>(peers.size());
    if (k > kExactEnumerationLimit) {
        throw SizeLimitError("union_success_probability: " + std::to_string(k) +
                             " distinct peers exceeds the exact enumeration limit of " +
                             std::to_string(kExactEnumerationLimit));
    }

    std::vector<double> up(peers.size());
    for (int i = 0; i < k; ++i) {
        auto it = probs.find(peers[i]);
        if (it == probs.end()) {
            throw MissingPeerError("union_success_probability: no probability for \"" +
                                   peers[i] + "\"");
        }
        up[static_cast<std::size_t>(i)] = it->second;
    }

    std::vector<std::uint64_t> path_masks;
    path_masks.reserve(paths.paths.size());
    for (const auto& path : paths.paths) {
        std::uint64_t mask = 0;
        for (const auto& peer : path.peers) {
            auto it = std::lower_bound(peers.begin(), peers.end(), peer);
            mask |= 1ull << static_cast<unsigned>(it - peers.begin());
        }
        path_masks.push_back(mask);
    }

    double total = 0.0;
    const std::uint64_t states = 1ull << static_cast<unsigned>(k);
    for (std::uint64_t state = 0; state < states; ++state) {
        bool covered = false;
        for (auto mask : path_masks) {
            if ((state & mask) == mask) {
                covered = true;
                break;
            }
        }
        if (!covered) {
            continue;
        }
        double weight = 1.0;
        for (int i = 0; i < k; ++i) {
            const double p = up[static_cast<std::size_t>(i)];
            weight *= (state >> static_cast<unsigned>(i)) & 1 ? p : 1.0 - p;
        }
        total += weight;
    }
    return total;
}

double two_path_layer_probability(AlignmentKind kind, const std::vector<double>& side1,
                                  const std::vector<double>& side2) {
    if (side1.empty() || side2.empty()) {
        throw ShapeError("two_path_layer_probability: both sides must be non-empty");
    }
    auto product = [](const std::vector<double>& side) {
        double p = 1.0;
        for (double v : side) {
            p *= v;
        }
        return p;
    };
    switch (kind) {
        case AlignmentKind::Normal:
            if (side1.size() != 1 || side2.size() != 1) {
                throw ShapeError("normal layer requires one peer on each side");
            }
            break;
        case AlignmentKind::Enhanced:
            if (side2.size() != 1) {
                throw ShapeError("enhanced layer requires a single peer on side two");
            }
            break;
        case AlignmentKind::Virtual:
            break;
    }
    double a = product(side1);
    double b = product(side2);
    return a + b - a * b;
}

double divide_layer_probability(double path_prob, int n) {
    if (path_prob < 0.0 || path_prob > 1.0) {
        throw DomainError("divide_layer_probability: probability outside [0,1]");
    }
    if (n < 1) {
        throw DomainError("divide_layer_probability: n must be >= 1");
    }
    return std::pow(path_prob, 1.0 / static_cast<double>(n));
}

double max_wait_total(const TimingAssignment& timing) {
    if (timing.layer_timeouts.empty()) {
        throw MissingLayerError("max_wait_total: no layer timeouts defined");
    }
    int n = timing.layer_timeouts.rbegin()->first;
    double total = 0.0;
    for (int layer = 1; layer <= n; ++layer) {
        auto it = timing.layer_timeouts.find(layer);
        if (it == timing.layer_timeouts.end()) {
            throw MissingLayerError("max_wait_total: missing timeout for layer " +
                                    std::to_string(layer));
        }
        total += it->second;
    }
    return total;
}

double terminal_wait_with_cache(const TimingAssignment& timing, int cache_layer) {
    if (timing.layer_timeouts.empty()) {
        throw MissingLayerError("terminal_wait_with_cache: no layer timeouts defined");
    }
    int n = timing.layer_timeouts.rbegin()->first;
    if (cache_layer < 1 || cache_layer >= n) {
        throw DomainError("terminal_wait_with_cache: cache layer must satisfy 1 <= k < " +
                          std::to_string(n));
    }
    double total = 0.0;
    for (int layer = 1; layer <= cache_layer; ++layer) {
        auto it = timing.layer_timeouts.find(layer);
        if (it == timing.layer_timeouts.end()) {
            throw MissingLayerError("terminal_wait_with_cache: missing timeout for layer " +
                                    std::to_string(layer));
        }
        total += it->second;
    }
    return total;
}

double retry_time_bound(const PathSet& paths, const TimingAssignment& timing) {
    double total = 0.0;
    for (const auto& path : paths.paths) {
        auto it = timing.per_path_retry.find(path.key());
        if (it == timing.per_path_retry.end()) {
            throw MissingPathError("retry_time_bound: no retry time for path " +
                                   path.key());
        }
        total += it->second;
    }
    return total;
}

}  // namespace peerweave
