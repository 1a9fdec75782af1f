#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "savage/heuristics.hpp"

using namespace savage;

namespace {

DirectedGraph random_graph(Rng& rng, int n, double p) {
    Matrix adj = Matrix::zeros(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && rng.uniform() < p) adj.at(i, j) = 1.0;
    return DirectedGraph::make(adj, Matrix::zeros(n, 1));
}

// -- independent brute-force oracles ----------------------------------------

std::set<int> nbr_set(const DirectedGraph& g, int u) {
    std::set<int> s;
    for (int j = 0; j < g.n; ++j) {
        if (j == u) continue;
        if (g.adjacency.at(u, j) != 0.0) s.insert(j);
        if (g.adjacency.at(j, u) != 0.0) s.insert(j);
    }
    return s;
}

double brute_cn(const DirectedGraph& g, int u, int v) {
    const auto a = nbr_set(g, u);
    const auto b = nbr_set(g, v);
    int c = 0;
    for (int z : a) c += b.count(z);
    return c;
}

double brute_jaccard(const DirectedGraph& g, int u, int v) {
    const auto a = nbr_set(g, u);
    auto uni = a;
    const auto b = nbr_set(g, v);
    for (int z : b) uni.insert(z);
    if (uni.empty()) return 0.0;
    return brute_cn(g, u, v) / static_cast<double>(uni.size());
}

double brute_pa(const DirectedGraph& g, int u, int v) {
    auto deg = [&](int w) {
        int d = 0;
        for (int j = 0; j < g.n; ++j) {
            d += g.adjacency.at(w, j) != 0.0;
            d += g.adjacency.at(j, w) != 0.0;
        }
        return d;
    };
    return static_cast<double>(deg(u)) * deg(v);
}

double brute_aa(const DirectedGraph& g, int u, int v) {
    const auto a = nbr_set(g, u);
    const auto b = nbr_set(g, v);
    double s = 0.0;
    for (int z : a)
        if (b.count(z) && nbr_set(g, z).size() >= 2)
            s += 1.0 / std::log(static_cast<double>(nbr_set(g, z).size()));
    return s;
}

double brute_ra(const DirectedGraph& g, int u, int v) {
    const auto a = nbr_set(g, u);
    const auto b = nbr_set(g, v);
    double s = 0.0;
    for (int z : a)
        if (b.count(z) && !nbr_set(g, z).empty())
            s += 1.0 / static_cast<double>(nbr_set(g, z).size());
    return s;
}

// exhaustive directed-walk enumeration
void katz_dfs(const DirectedGraph& g, int node, int target, int depth, int max_len,
              double beta, double weight, double& acc) {
    if (depth >= max_len) return;
    for (int j = 0; j < g.n; ++j) {
        if (g.adjacency.at(node, j) == 0.0) continue;
        const double w = weight * beta;
        if (j == target) acc += w;
        katz_dfs(g, j, target, depth + 1, max_len, beta, w, acc);
    }
}

double brute_katz(const DirectedGraph& g, int u, int v, const HeuristicParams& p) {
    double acc = 0.0;
    katz_dfs(g, u, v, 0, p.katz_max_len, p.katz_beta, 1.0, acc);
    return acc;
}

// textbook restart formulation with the dangling mass sent to the root
std::vector<double> brute_pagerank(const DirectedGraph& g, int u,
                                   const HeuristicParams& p) {
    const int n = g.n;
    Matrix m = Matrix::zeros(n, n);  // column-stochastic transition
    for (int i = 0; i < n; ++i) {
        const int deg = g.out_degree(i);
        if (deg == 0) {
            m.at(u, i) = 1.0;
            continue;
        }
        for (int j = 0; j < n; ++j)
            if (g.adjacency.at(i, j) != 0.0) m.at(j, i) = 1.0 / deg;
    }
    std::vector<double> x(n, 0.0);
    x[u] = 1.0;
    for (int it = 0; it < p.pagerank_max_iters; ++it) {
        std::vector<double> next(n, 0.0);
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += m.at(j, i) * x[i];
            next[j] = p.pagerank_damping * s;
        }
        next[u] += 1.0 - p.pagerank_damping;
        double delta = 0.0;
        for (int j = 0; j < n; ++j) delta += std::abs(next[j] - x[j]);
        x = std::move(next);
        if (delta < p.pagerank_tol) break;
    }
    return x;
}

// fixed-iteration recurrence computed pairwise
double brute_simrank(const DirectedGraph& g, int u, int v, const HeuristicParams& p) {
    const int n = g.n;
    std::vector<std::vector<int>> in(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (g.adjacency.at(i, j) != 0.0) in[j].push_back(i);
    std::vector<std::vector<double>> cur(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) cur[i][i] = 1.0;
    for (int it = 0; it < p.simrank_iters; ++it) {
        std::vector<std::vector<double>> next(n, std::vector<double>(n, 0.0));
        for (int a = 0; a < n; ++a) {
            next[a][a] = 1.0;
            for (int b = 0; b < n; ++b) {
                if (a == b || in[a].empty() || in[b].empty()) continue;
                double s = 0.0;
                for (int i : in[a])
                    for (int j : in[b]) s += cur[i][j];
                next[a][b] = p.simrank_decay * s / (in[a].size() * in[b].size());
            }
        }
        cur = std::move(next);
    }
    return cur[u][v];
}

}  // namespace

TEST_CASE("common neighbors with no shared neighbor is zero") {
    // 0 -> 1, 2 -> 3: no overlap between the pairs
    Matrix adj = Matrix::zeros(4, 4);
    adj.at(0, 1) = 1.0;
    adj.at(2, 3) = 1.0;
    DirectedGraph g = DirectedGraph::make(adj, Matrix::zeros(4, 1));
    CHECK(heuristic_score(Heuristic::common_neighbors, g, 0, 2) == 0.0);
}

TEST_CASE("jaccard self-similarity is one for a connected node") {
    Matrix adj = Matrix::zeros(3, 3);
    adj.at(0, 1) = 1.0;
    DirectedGraph g = DirectedGraph::make(adj, Matrix::zeros(3, 1));
    CHECK(heuristic_score(Heuristic::jaccard, g, 0, 0) == 1.0);
    CHECK(heuristic_score(Heuristic::jaccard, g, 2, 2) == 0.0);  // isolated
}

TEST_CASE("katz on a seeded 5-node digraph matches walk enumeration") {
    Rng rng(7);
    DirectedGraph g = random_graph(rng, 5, 0.4);
    HeuristicParams p;
    p.katz_beta = 0.1;
    p.katz_max_len = 3;
    for (int u = 0; u < 5; ++u)
        for (int v = 0; v < 5; ++v)
            CHECK(heuristic_score(Heuristic::katz, g, u, v, p) ==
                  doctest::Approx(brute_katz(g, u, v, p)).epsilon(1e-12));
}

TEST_CASE("unknown heuristic name is rejected") {
    CHECK_THROWS_AS(heuristic_from_name("garbage"), ContractError);
    CHECK(heuristic_from_name("adamic_adar") == Heuristic::adamic_adar);
}

TEST_CASE("all heuristics match their brute-force oracles on random digraphs") {
    Rng rng(11);
    HeuristicParams p;
    p.pagerank_tol = 1e-13;  // both sides near the fixed point for a tight match
    p.pagerank_max_iters = 2000;
    for (int trial = 0; trial < 4; ++trial) {
        const int n = 8 + trial * 3;
        DirectedGraph g = random_graph(rng, n, 0.15);
        for (int u = 0; u < n; ++u) {
            const auto pr = personalized_pagerank(g, u, p);
            const auto pr_oracle = brute_pagerank(g, u, p);
            for (int v = 0; v < n; ++v) {
                if (u == v) continue;
                CHECK(heuristic_score(Heuristic::common_neighbors, g, u, v) ==
                      brute_cn(g, u, v));
                CHECK(heuristic_score(Heuristic::jaccard, g, u, v) ==
                      doctest::Approx(brute_jaccard(g, u, v)).epsilon(1e-12));
                CHECK(heuristic_score(Heuristic::preferential_attachment, g, u, v) ==
                      brute_pa(g, u, v));
                CHECK(heuristic_score(Heuristic::adamic_adar, g, u, v) ==
                      doctest::Approx(brute_aa(g, u, v)).epsilon(1e-12));
                CHECK(heuristic_score(Heuristic::resource_allocation, g, u, v) ==
                      doctest::Approx(brute_ra(g, u, v)).epsilon(1e-12));
                CHECK(heuristic_score(Heuristic::katz, g, u, v, p) ==
                      doctest::Approx(brute_katz(g, u, v, p)).epsilon(1e-9));
                CHECK(std::abs(pr[v] - pr_oracle[v]) < 1e-9);
                CHECK(std::abs(heuristic_score(Heuristic::simrank, g, u, v, p) -
                               brute_simrank(g, u, v, p)) < 1e-9);
            }
        }
    }
}

TEST_CASE("pagerank scores sum to one") {
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        DirectedGraph g = random_graph(rng, 12, 0.2);
        const auto pr = personalized_pagerank(g, trial % 12);
        double s = 0.0;
        for (double x : pr) s += x;
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("jaccard stays in the unit interval") {
    Rng rng(17);
    DirectedGraph g = random_graph(rng, 10, 0.3);
    for (int u = 0; u < 10; ++u)
        for (int v = 0; v < 10; ++v) {
            const double j = heuristic_score(Heuristic::jaccard, g, u, v);
            CHECK(j >= 0.0);
            CHECK(j <= 1.0);
        }
}

TEST_CASE("simrank is one on the diagonal and within the unit interval") {
    Rng rng(19);
    DirectedGraph g = random_graph(rng, 10, 0.25);
    for (int u = 0; u < 10; ++u) {
        CHECK(heuristic_score(Heuristic::simrank, g, u, u) == 1.0);
        for (int v = 0; v < 10; ++v) {
            const double s = heuristic_score(Heuristic::simrank, g, u, v);
            CHECK(s >= 0.0);
            CHECK(s <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("adding edges never decreases preferential attachment") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        DirectedGraph g = random_graph(rng, 10, 0.2);
        Matrix extended = g.adjacency;
        for (int add = 0; add < 5; ++add) {
            const int i = rng.uniform_int(10);
            const int j = rng.uniform_int(10);
            if (i != j) extended.at(i, j) = 1.0;
        }
        DirectedGraph g2 = DirectedGraph::make(extended, g.features);
        const int u = rng.uniform_int(10), v = rng.uniform_int(10);
        CHECK(heuristic_score(Heuristic::preferential_attachment, g2, u, v) >=
              heuristic_score(Heuristic::preferential_attachment, g, u, v));
    }
}

TEST_CASE("lift of an unchanged graph is one where the score is positive") {
    Rng rng(29);
    DirectedGraph g = random_graph(rng, 8, 0.35);
    for (Heuristic h : kAllHeuristics)
        for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v) {
                if (u == v) continue;
                if (heuristic_score(h, g, u, v) <= 0.0) continue;
                CHECK(heuristic_lift(h, g, g, u, v) == doctest::Approx(1.0));
            }
}

TEST_CASE("lift guards against a zero before-score") {
    // before: no common neighbor; after: shared neighbor 2
    Matrix before = Matrix::zeros(3, 3);
    before.at(0, 2) = 1.0;
    Matrix after = before;
    after.at(1, 2) = 1.0;
    DirectedGraph gb = DirectedGraph::make(before, Matrix::zeros(3, 1));
    DirectedGraph ga = DirectedGraph::make(after, Matrix::zeros(3, 1));
    const double lift = heuristic_lift(Heuristic::common_neighbors, gb, ga, 0, 1);
    CHECK(lift == doctest::Approx(1.0 / kLiftEpsilon));
}

TEST_CASE("lift matches a hand-computed ratio") {
    // before: 0 and 1 share neighbor 2; after: they also share 3
    Matrix before = Matrix::zeros(4, 4);
    before.at(0, 2) = 1.0;
    before.at(1, 2) = 1.0;
    Matrix after = before;
    after.at(0, 3) = 1.0;
    after.at(1, 3) = 1.0;
    DirectedGraph gb = DirectedGraph::make(before, Matrix::zeros(4, 1));
    DirectedGraph ga = DirectedGraph::make(after, Matrix::zeros(4, 1));
    CHECK(heuristic_lift(Heuristic::common_neighbors, gb, ga, 0, 1) ==
          doctest::Approx(2.0));
}
