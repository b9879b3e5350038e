#pragma once

#include <map>
#include <string>
#include <vector>

#include "peerweave/model.hpp"
#include "peerweave/topology.hpp"

namespace peerweave {

// Maximum number of distinct peers for exact state enumeration (2^k states).
inline constexpr int kExactEnumerationLimit = 30;

struct TimingAssignment {
    std::map<int, double> layer_timeouts;           // layer -> t_max seconds
    std::map<std::string, double> per_path_retry;   // WorkingPath::key() -> seconds
};

// Product of the per-peer probabilities along the path.
double path_success_probability(const WorkingPath& path, const ProbAssignment& probs);

// Exact probability that at least one path has all of its peers up,
// computed by enumerating the 2^k up/down states of the k distinct peers.
double union_success_probability(const PathSet& paths, const ProbAssignment& probs);

// Closed forms for a two-path layer of the given kind. Normal requires both
// sides of length one; Enhanced requires a single peer on side two.
double two_path_layer_probability(AlignmentKind kind, const std::vector<double>& side1,
                                  const std::vector<double>& side2);

// Per-layer probability when a path of probability `path_prob` is divided
// into n layers of equal probability: path_prob^(1/n).
double divide_layer_probability(double path_prob, int n);

// Sum of the per-layer timeouts over layers 1..n.
double max_wait_total(const TimingAssignment& timing);

// Sum of the per-layer timeouts over layers 1..k, k the cache layer.
double terminal_wait_with_cache(const TimingAssignment& timing, int cache_layer);

// Sum of the per-path retry times over the path set.
double retry_time_bound(const PathSet& paths, const TimingAssignment& timing);

}  // namespace peerweave
