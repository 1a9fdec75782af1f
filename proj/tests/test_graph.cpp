#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "helpers.hpp"
#include "savage/graph.hpp"

using namespace savage;
using savage::testing::random_matrix;

namespace {

DirectedGraph path_graph_abc() {
    // a -> b -> c
    Matrix adj = Matrix::zeros(3, 3);
    adj.at(0, 1) = 1.0;
    adj.at(1, 2) = 1.0;
    return DirectedGraph::make(adj, Matrix::zeros(3, 2));
}

DirectedGraph random_graph(Rng& rng, int n, double p, int k = 2) {
    Matrix adj = Matrix::zeros(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && rng.uniform() < p) adj.at(i, j) = 1.0;
    Matrix feat(n, k);
    for (double& v : feat.data) v = rng.uniform();
    return DirectedGraph::make(adj, feat);
}

}  // namespace

TEST_CASE("graph construction validates invariants") {
    Matrix selfloop = Matrix::identity(2);
    CHECK_THROWS_AS(DirectedGraph::make(selfloop, Matrix::zeros(2, 1)), ContractError);
    Matrix nonbinary = Matrix::zeros(2, 2);
    nonbinary.at(0, 1) = 0.5;
    CHECK_THROWS_AS(DirectedGraph::make(nonbinary, Matrix::zeros(2, 1)), ContractError);
    CHECK_THROWS_AS(DirectedGraph::make(Matrix::zeros(2, 2), Matrix::zeros(3, 1)),
                    DimensionError);
}

TEST_CASE("augment with zero vicious nodes is the identity") {
    DirectedGraph g = path_graph_abc();
    AugmentedGraph aug = augment(g, 0, FeatureMode::zeros, 0.0, 1);
    CHECK(aug.adjacency_prime == g.adjacency);
    CHECK(aug.features_prime == g.features);
    CHECK(aug.n_prime() == 3);
}

TEST_CASE("augment zeros mode without noise gives exactly zero rows") {
    DirectedGraph g = path_graph_abc();
    AugmentedGraph aug = augment(g, 2, FeatureMode::zeros, 0.0, 7);
    for (int v = 3; v < 5; ++v)
        for (int j = 0; j < 2; ++j) CHECK(aug.features_prime.at(v, j) == 0.0);
}

TEST_CASE("augment mean mode reproduces column means") {
    Matrix feat = Matrix::from_rows({{0.0, 2.0}, {2.0, 0.0}});
    DirectedGraph g = DirectedGraph::make(Matrix::zeros(2, 2), feat);
    AugmentedGraph aug = augment(g, 3, FeatureMode::mean, 0.0, 3);
    for (int v = 2; v < 5; ++v) {
        CHECK(aug.features_prime.at(v, 0) == 1.0);
        CHECK(aug.features_prime.at(v, 1) == 1.0);
    }
}

TEST_CASE("augment never alters original structure or features") {
    Rng rng(11);
    for (uint64_t seed = 0; seed < 8; ++seed) {
        DirectedGraph g = random_graph(rng, 12, 0.2, 3);
        for (auto mode : {FeatureMode::existent, FeatureMode::random, FeatureMode::ones,
                          FeatureMode::median}) {
            AugmentedGraph aug = augment(g, 4, mode, 0.05, seed);
            for (int i = 0; i < g.n; ++i) {
                for (int j = 0; j < g.n; ++j)
                    CHECK(aug.adjacency_prime.at(i, j) == g.adjacency.at(i, j));
                for (int j = 0; j < 3; ++j)
                    CHECK(aug.features_prime.at(i, j) == g.features.at(i, j));
            }
            // vicious rows and columns start isolated
            for (int v = g.n; v < aug.n_prime(); ++v)
                for (int j = 0; j < aug.n_prime(); ++j) {
                    CHECK(aug.adjacency_prime.at(v, j) == 0.0);
                    CHECK(aug.adjacency_prime.at(j, v) == 0.0);
                }
        }
    }
}

TEST_CASE("augment is deterministic given a seed") {
    Rng rng(13);
    DirectedGraph g = random_graph(rng, 10, 0.3, 4);
    AugmentedGraph a = augment(g, 5, FeatureMode::existent, 0.05, 42);
    AugmentedGraph b = augment(g, 5, FeatureMode::existent, 0.05, 42);
    CHECK(a.features_prime == b.features_prime);
}

TEST_CASE("with_pair marks the controlled set") {
    DirectedGraph g = path_graph_abc();
    AugmentedGraph aug = with_pair(augment(g, 2, FeatureMode::zeros, 0.0, 1), 0, 2);
    CHECK(aug.source == 0);
    CHECK(aug.target == 2);
    CHECK(aug.is_controlled(0));
    CHECK(aug.is_controlled(3));
    CHECK(aug.is_controlled(4));
    CHECK_FALSE(aug.is_controlled(2));
    CHECK_THROWS_AS(with_pair(aug, 0, 4), ContractError);  // vicious target
}

TEST_CASE("l-hop neighborhood of an isolated node is empty") {
    DirectedGraph g = DirectedGraph::make(Matrix::zeros(4, 4), Matrix::zeros(4, 1));
    for (int l = 1; l <= 3; ++l) CHECK(l_hop_neighborhood(g, 2, l).empty());
}

TEST_CASE("l-hop neighborhood on a path") {
    DirectedGraph g = path_graph_abc();
    CHECK(l_hop_neighborhood(g, 0, 1) == std::vector<int>{1});
    CHECK(l_hop_neighborhood(g, 0, 2) == std::vector<int>({1, 2}));
    CHECK(l_hop_neighborhood(g, 2, 2).empty());  // c has no out-edges
}

TEST_CASE("l-hop neighborhood on the complete digraph") {
    const int n = 4;
    Matrix adj = Matrix::filled(n, n, 1.0);
    for (int i = 0; i < n; ++i) adj.at(i, i) = 0.0;
    DirectedGraph g = DirectedGraph::make(adj, Matrix::zeros(n, 1));
    CHECK(l_hop_neighborhood(g, 1, 1) == std::vector<int>({0, 2, 3}));
    // cycles bring the start node back at l = 2
    CHECK(l_hop_neighborhood(g, 1, 2) == std::vector<int>({0, 1, 2, 3}));
}

TEST_CASE("l-hop neighborhood rejects invalid node") {
    DirectedGraph g = path_graph_abc();
    CHECK_THROWS_AS(l_hop_neighborhood(g, 5, 1), ContractError);
    CHECK_THROWS_AS(l_hop_neighborhood(g, 0, 0), ContractError);
}

TEST_CASE("l-hop neighborhood is monotone in l") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        DirectedGraph g = random_graph(rng, 15, 0.15);
        const int u = rng.uniform_int(15);
        std::vector<int> prev;
        for (int l = 1; l <= 4; ++l) {
            std::vector<int> cur = l_hop_neighborhood(g, u, l);
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            prev = std::move(cur);
        }
    }
}

TEST_CASE("kl_shift of identical graphs is exactly zero") {
    Rng rng(23);
    DirectedGraph g = random_graph(rng, 10, 0.25);
    CHECK(kl_shift(g, g.adjacency) == 0.0);
}

TEST_CASE("kl_shift is non-negative") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        DirectedGraph g = random_graph(rng, 8, 0.2);
        DirectedGraph h = random_graph(rng, 8, 0.3);
        CHECK(kl_shift(g, h.adjacency) >= 0.0);
    }
}

TEST_CASE("kl_shift matches a direct smoothed-histogram computation") {
    // 3-node path (degrees 1,2,1) vs the same plus edge 2->0 (degrees 2,2,2)
    DirectedGraph g = path_graph_abc();
    Matrix after = g.adjacency;
    after.at(2, 0) = 1.0;

    const double eps = 1e-6;
    // shared support {1, 2}; before counts {2, 1}, after counts {0, 3}
    const double p1 = (2 + eps) / (3 + 2 * eps), p2 = (1 + eps) / (3 + 2 * eps);
    const double q1 = (0 + eps) / (3 + 2 * eps), q2 = (3 + eps) / (3 + 2 * eps);
    const double expected = p1 * std::log(p1 / q1) + p2 * std::log(p2 / q2);
    CHECK(kl_shift(g, after) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("kl_shift ignores vicious nodes that stayed isolated") {
    DirectedGraph g = path_graph_abc();
    AugmentedGraph aug = augment(g, 5, FeatureMode::zeros, 0.0, 1);
    // no attack happened: the deployed graph is unchanged
    CHECK(kl_shift(g, aug.adjacency_prime) == 0.0);
}

TEST_CASE("degree distribution normalizes to one") {
    DegreeDistribution d = degree_distribution({0, 0, 1, 3}, {0, 1, 2, 3});
    double s = 0.0;
    for (double p : d.probs) {
        CHECK(p >= 0.0);
        s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("edge list round trip preserves the adjacency") {
    Rng rng(31);
    DirectedGraph g = random_graph(rng, 9, 0.3);
    const std::string path = "test_graph_edges.tsv";
    save_edge_list(g.adjacency, path);
    Matrix loaded = load_edge_list(path);
    CHECK(loaded == g.adjacency);
    std::remove(path.c_str());
}

TEST_CASE("edge list round trip keeps trailing isolated nodes") {
    Matrix adj = Matrix::zeros(5, 5);
    adj.at(0, 1) = 1.0;  // nodes 2..4 isolated
    const std::string path = "test_graph_isolated.tsv";
    save_edge_list(adj, path);
    Matrix loaded = load_edge_list(path);
    CHECK(loaded == adj);
    std::remove(path.c_str());
}

TEST_CASE("features csv round trip is exact, with or without header") {
    Rng rng(37);
    Matrix feat = random_matrix(rng, 6, 3, -5.0, 5.0);
    const std::string path = "test_graph_features.csv";
    save_features_csv(feat, path);
    CHECK(load_features_csv(path) == feat);

    // prepend a header; the loader must skip it
    {
        std::string with_header = "f0,f1,f2\n";
        FILE* f = std::fopen(path.c_str(), "r");
        char buf[4096];
        size_t got;
        std::string body;
        while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) body.append(buf, got);
        std::fclose(f);
        f = std::fopen(path.c_str(), "w");
        std::fwrite(with_header.data(), 1, with_header.size(), f);
        std::fwrite(body.data(), 1, body.size(), f);
        std::fclose(f);
    }
    CHECK(load_features_csv(path) == feat);
    std::remove(path.c_str());
}
