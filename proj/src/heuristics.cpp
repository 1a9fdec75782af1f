#include "savage/heuristics.hpp"

#include <algorithm>
#include <cmath>

namespace savage {

namespace {

// union of in- and out-neighbors
std::vector<int> undirected_neighbors(const DirectedGraph& g, int u) {
    std::vector<int> out;
    for (int j = 0; j < g.n; ++j)
        if (j != u && (g.adjacency.at(u, j) != 0.0 || g.adjacency.at(j, u) != 0.0))
            out.push_back(j);
    return out;
}

std::vector<int> intersect_sorted(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(out));
    return out;
}

double common_neighbors(const DirectedGraph& g, int u, int v) {
    return static_cast<double>(
        intersect_sorted(undirected_neighbors(g, u), undirected_neighbors(g, v)).size());
}

double jaccard(const DirectedGraph& g, int u, int v) {
    const auto nu = undirected_neighbors(g, u);
    const auto nv = undirected_neighbors(g, v);
    std::vector<int> uni;
    std::set_union(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(uni));
    if (uni.empty()) return 0.0;
    return static_cast<double>(intersect_sorted(nu, nv).size()) /
           static_cast<double>(uni.size());
}

double preferential_attachment(const DirectedGraph& g, int u, int v) {
    return static_cast<double>(g.total_degree(u)) *
           static_cast<double>(g.total_degree(v));
}

double adamic_adar(const DirectedGraph& g, int u, int v) {
    double s = 0.0;
    for (int z : intersect_sorted(undirected_neighbors(g, u), undirected_neighbors(g, v))) {
        const size_t deg = undirected_neighbors(g, z).size();
        if (deg >= 2) s += 1.0 / std::log(static_cast<double>(deg));
    }
    return s;
}

double resource_allocation(const DirectedGraph& g, int u, int v) {
    double s = 0.0;
    for (int z : intersect_sorted(undirected_neighbors(g, u), undirected_neighbors(g, v))) {
        const size_t deg = undirected_neighbors(g, z).size();
        if (deg >= 1) s += 1.0 / static_cast<double>(deg);
    }
    return s;
}

// sum over path lengths of beta^len * (#directed walks u -> v of that length)
double katz(const DirectedGraph& g, int u, int v, const HeuristicParams& p) {
    std::vector<double> walk_counts(g.n, 0.0);
    walk_counts[u] = 1.0;
    double score = 0.0;
    double weight = 1.0;
    for (int len = 1; len <= p.katz_max_len; ++len) {
        std::vector<double> next(g.n, 0.0);
        for (int i = 0; i < g.n; ++i) {
            if (walk_counts[i] == 0.0) continue;
            for (int j = 0; j < g.n; ++j)
                if (g.adjacency.at(i, j) != 0.0) next[j] += walk_counts[i];
        }
        walk_counts = std::move(next);
        weight *= p.katz_beta;
        score += weight * walk_counts[v];
    }
    return score;
}

double simrank(const DirectedGraph& g, int u, int v, const HeuristicParams& p) {
    if (u == v) return 1.0;
    const int n = g.n;
    std::vector<std::vector<int>> in_nbrs(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (g.adjacency.at(i, j) != 0.0) in_nbrs[j].push_back(i);

    Matrix sim = Matrix::identity(n);
    for (int it = 0; it < p.simrank_iters; ++it) {
        Matrix next = Matrix::identity(n);
        for (int a = 0; a < n; ++a) {
            for (int b = a + 1; b < n; ++b) {
                if (in_nbrs[a].empty() || in_nbrs[b].empty()) continue;
                double s = 0.0;
                for (int i : in_nbrs[a])
                    for (int j : in_nbrs[b]) s += sim.at(i, j);
                const double value = p.simrank_decay * s /
                                     (static_cast<double>(in_nbrs[a].size()) *
                                      static_cast<double>(in_nbrs[b].size()));
                next.at(a, b) = value;
                next.at(b, a) = value;
            }
        }
        sim = std::move(next);
    }
    return sim.at(u, v);
}

}  // namespace

std::vector<double> personalized_pagerank(const DirectedGraph& g, int u,
                                          const HeuristicParams& params) {
    if (u < 0 || u >= g.n) throw ContractError("personalized_pagerank: invalid node");
    const int n = g.n;
    const double d = params.pagerank_damping;
    std::vector<int> out_deg(n, 0);
    for (int i = 0; i < n; ++i) out_deg[i] = g.out_degree(i);

    std::vector<double> x(n, 0.0);
    x[u] = 1.0;
    for (int it = 0; it < params.pagerank_max_iters; ++it) {
        std::vector<double> next(n, 0.0);
        double dangling = 0.0;
        for (int i = 0; i < n; ++i) {
            if (out_deg[i] == 0) {
                dangling += x[i];
                continue;
            }
            const double share = x[i] / out_deg[i];
            for (int j = 0; j < n; ++j)
                if (g.adjacency.at(i, j) != 0.0) next[j] += share;
        }
        // restart mass plus dangling mass both return to the root
        for (int j = 0; j < n; ++j) next[j] *= d;
        next[u] += (1.0 - d) + d * dangling;

        double delta = 0.0;
        for (int j = 0; j < n; ++j) delta += std::abs(next[j] - x[j]);
        x = std::move(next);
        if (delta < params.pagerank_tol) break;
    }
    return x;
}

Heuristic heuristic_from_name(const std::string& name) {
    for (Heuristic h : kAllHeuristics)
        if (heuristic_name(h) == name) return h;
    throw ContractError("unknown heuristic: " + name);
}

std::string heuristic_name(Heuristic h) {
    switch (h) {
        case Heuristic::common_neighbors: return "common_neighbors";
        case Heuristic::jaccard: return "jaccard";
        case Heuristic::preferential_attachment: return "preferential_attachment";
        case Heuristic::adamic_adar: return "adamic_adar";
        case Heuristic::resource_allocation: return "resource_allocation";
        case Heuristic::katz: return "katz";
        case Heuristic::pagerank: return "pagerank";
        case Heuristic::simrank: return "simrank";
    }
    throw ContractError("unknown heuristic");
}

double heuristic_score(Heuristic h, const DirectedGraph& g, int u, int v,
                       const HeuristicParams& params) {
    if (u < 0 || u >= g.n || v < 0 || v >= g.n)
        throw ContractError("heuristic_score: invalid node pair");
    switch (h) {
        case Heuristic::common_neighbors: return common_neighbors(g, u, v);
        case Heuristic::jaccard: return jaccard(g, u, v);
        case Heuristic::preferential_attachment: return preferential_attachment(g, u, v);
        case Heuristic::adamic_adar: return adamic_adar(g, u, v);
        case Heuristic::resource_allocation: return resource_allocation(g, u, v);
        case Heuristic::katz: return katz(g, u, v, params);
        case Heuristic::pagerank: return personalized_pagerank(g, u, params)[v];
        case Heuristic::simrank: return simrank(g, u, v, params);
    }
    throw ContractError("unknown heuristic");
}

double heuristic_lift(Heuristic h, const DirectedGraph& before, const DirectedGraph& after,
                      int u, int v, const HeuristicParams& params) {
    const double b = heuristic_score(h, before, u, v, params);
    const double a = heuristic_score(h, after, u, v, params);
    return a / std::max(b, kLiftEpsilon);
}

}  // namespace savage
