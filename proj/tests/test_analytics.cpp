#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include "peerweave/analytics.hpp"
#include "peerweave/engine.hpp"
#include "peerweave/topology.hpp"

using namespace peerweave;

namespace {

// Independent oracle: inclusion-exclusion over path events. Exponential in
// the number of paths, so only used on small instances.
double union_by_inclusion_exclusion(const PathSet& paths, const ProbAssignment& probs) {
    double total = 0.0;
    std::size_t n = paths.paths.size();
    for (std::size_t mask = 1; mask < (1ull << n); ++mask) {
        std::set<PeerId> peers;
        for (std::size_t i = 0; i < n; ++i) {
            if ((mask >> i) & 1) {
                peers.insert(paths.paths[i].peers.begin(), paths.paths[i].peers.end());
            }
        }
        double product = 1.0;
        for (const auto& p : peers) {
            product *= probs.at(p);
        }
        total += (std::popcount(mask) % 2 == 1 ? 1.0 : -1.0) * product;
    }
    return total;
}

}  // namespace

TEST_CASE("single path probability is the peer product") {
    WorkingPath path{{"a", "b", "c", "d"}};
    ProbAssignment probs{{"a", 0.7}, {"b", 0.7}, {"c", 0.7}, {"d", 0.7}};
    CHECK(path_success_probability(path, probs) == doctest::Approx(0.2401));
    probs.erase("d");
    CHECK_THROWS_AS(path_success_probability(path, probs), MissingPeerError);
}

TEST_CASE("union probability on hand-checked fixtures") {
    ProbAssignment probs{{"a", 0.5}, {"b", 0.5}, {"c", 0.5}, {"d", 0.5}};

    // two disjoint single-peer paths: 0.5 + 0.5 - 0.25
    PathSet two{{WorkingPath{{"a"}}, WorkingPath{{"b"}}}};
    CHECK(union_success_probability(two, probs) == doctest::Approx(0.75));

    // coupled paths sharing peer a: P(a) * (1 - (1-P(b))(1-P(c)))
    PathSet coupled{{WorkingPath{{"a", "b"}}, WorkingPath{{"a", "c"}}}};
    CHECK(union_success_probability(coupled, probs) == doctest::Approx(0.375));

    // four disjoint paths with product 0.5 each
    ProbAssignment four{{"a", 0.5}, {"b", 0.5}, {"c", 0.5}, {"d", 0.5}};
    PathSet disjoint{{WorkingPath{{"a"}}, WorkingPath{{"b"}}, WorkingPath{{"c"}},
                      WorkingPath{{"d"}}}};
    CHECK(union_success_probability(disjoint, four) == doctest::Approx(0.9375));

    CHECK(union_success_probability(PathSet{}, probs) == 0.0);
}

TEST_CASE("union probability agrees with inclusion-exclusion on random sets") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> pdist(0.05, 0.95);
    std::uniform_int_distribution<int> peer_count(3, 10);
    std::uniform_int_distribution<int> path_count(1, 6);
    std::uniform_int_distribution<int> path_len(1, 4);
    for (int trial = 0; trial < 300; ++trial) {
        int peers = peer_count(rng);
        ProbAssignment probs;
        std::vector<PeerId> ids;
        for (int i = 0; i < peers; ++i) {
            PeerId id(1, static_cast<char>('a' + i));
            ids.push_back(id);
            probs[id] = pdist(rng);
        }
        PathSet paths;
        int n = path_count(rng);
        for (int i = 0; i < n; ++i) {
            std::set<PeerId> chosen;
            int len = std::min(path_len(rng), peers);
            while (static_cast<int>(chosen.size()) < len) {
                chosen.insert(ids[rng() % ids.size()]);
            }
            paths.paths.push_back(
                WorkingPath{std::vector<PeerId>(chosen.begin(), chosen.end())});
        }
        double exact = union_success_probability(paths, probs);
        double oracle = union_by_inclusion_exclusion(paths, probs);
        CHECK(exact == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("union probability refuses oversized enumerations") {
    PathSet paths;
    WorkingPath big;
    for (int i = 0; i < kExactEnumerationLimit + 1; ++i) {
        big.peers.push_back("peer" + std::to_string(i));
    }
    paths.paths.push_back(big);
    ProbAssignment probs;
    for (const auto& p : big.peers) {
        probs[p] = 0.5;
    }
    CHECK_THROWS_AS(union_success_probability(paths, probs), SizeLimitError);
}

TEST_CASE("two path layer probability per alignment kind") {
    // normal: both sides single peers, 0.7 each
    CHECK(two_path_layer_probability(AlignmentKind::Normal, {0.7}, {0.7}) ==
          doctest::Approx(0.91));
    // enhanced: chain of two against one peer: 0.49 + 0.7 - 0.343
    CHECK(two_path_layer_probability(AlignmentKind::Enhanced, {0.7, 0.7}, {0.7}) ==
          doctest::Approx(0.847));
    // virtual: chains on both sides
    CHECK(two_path_layer_probability(AlignmentKind::Virtual, {0.7, 0.7}, {0.7, 0.7}) ==
          doctest::Approx(0.49 + 0.49 - 0.49 * 0.49));
    CHECK(two_path_layer_probability(AlignmentKind::Virtual, {0.7}, {0.7}) ==
          doctest::Approx(0.91)); // degenerate virtual equals normal arithmetic

    CHECK_THROWS_AS(two_path_layer_probability(AlignmentKind::Normal, {0.7, 0.7}, {0.7}),
                    ShapeError);
    CHECK_THROWS_AS(two_path_layer_probability(AlignmentKind::Enhanced, {0.7}, {0.7, 0.7}),
                    ShapeError);
    CHECK_THROWS_AS(two_path_layer_probability(AlignmentKind::Normal, {}, {0.7}),
                    ShapeError);
}

TEST_CASE("layer division splits a path probability evenly") {
    CHECK(divide_layer_probability(0.5, 1) == doctest::Approx(0.5));
    CHECK(divide_layer_probability(0.5, 2) == doctest::Approx(0.70710678).epsilon(1e-8));
    double p8 = divide_layer_probability(0.5, 8);
    CHECK(std::pow(p8, 8) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(divide_layer_probability(1.2, 2), DomainError);
    CHECK_THROWS_AS(divide_layer_probability(0.5, 0), DomainError);
}

TEST_CASE("waiting time sums") {
    TimingAssignment timing;
    timing.layer_timeouts = {{1, 2.0}, {2, 3.0}, {3, 5.0}};
    CHECK(max_wait_total(timing) == doctest::Approx(10.0));
    CHECK(terminal_wait_with_cache(timing, 1) == doctest::Approx(2.0));
    CHECK(terminal_wait_with_cache(timing, 2) == doctest::Approx(5.0));
    CHECK_THROWS_AS(terminal_wait_with_cache(timing, 3), DomainError);
    CHECK_THROWS_AS(terminal_wait_with_cache(timing, 0), DomainError);

    TimingAssignment gap;
    gap.layer_timeouts = {{1, 2.0}, {3, 5.0}};
    CHECK_THROWS_AS(max_wait_total(gap), MissingLayerError);
}

TEST_CASE("retry bound sums per-path retry times") {
    PathSet paths{{WorkingPath{{"a", "b"}}, WorkingPath{{"c", "d"}}}};
    TimingAssignment timing;
    timing.per_path_retry = {{"a->b", 4.0}, {"c->d", 6.5}};
    CHECK(retry_time_bound(paths, timing) == doctest::Approx(10.5));
    timing.per_path_retry.erase("c->d");
    CHECK_THROWS_AS(retry_time_bound(paths, timing), MissingPathError);
}

TEST_CASE("union probability is monotone in edges and probabilities") {
    Topology t = build_separate_paths(3, 3, 0.6);
    ProbAssignment probs = probs_from_topology(t);
    double separate = union_success_probability(enumerate_working_paths(t), probs);
    Topology fuller = make_full_connection(t, {2});
    double with_full =
        union_success_probability(enumerate_working_paths(fuller), probs);
    CHECK(with_full >= separate);

    for (auto& [id, p] : probs) {
        p = std::min(1.0, p + 0.1);
    }
    CHECK(union_success_probability(enumerate_working_paths(fuller), probs) >=
          with_full);
}
