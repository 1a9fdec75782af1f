#pragma once

#include <string>
#include <vector>

#include "savage/graph.hpp"

namespace savage {

enum class Heuristic {
    common_neighbors,
    jaccard,
    preferential_attachment,
    adamic_adar,
    resource_allocation,
    katz,
    pagerank,
    simrank,
};

inline constexpr Heuristic kAllHeuristics[] = {
    Heuristic::common_neighbors,  Heuristic::jaccard,
    Heuristic::preferential_attachment, Heuristic::adamic_adar,
    Heuristic::resource_allocation,     Heuristic::katz,
    Heuristic::pagerank,                Heuristic::simrank,
};

Heuristic heuristic_from_name(const std::string& name);
std::string heuristic_name(Heuristic h);

struct HeuristicParams {
    double katz_beta = 0.05;
    int katz_max_len = 5;
    double pagerank_damping = 0.85;
    double pagerank_tol = 1e-8;
    int pagerank_max_iters = 1000;
    double simrank_decay = 0.8;
    int simrank_iters = 10;
};

/// Black-box link score for the ordered pair (u, v). Neighborhood-based
/// heuristics treat neighbors as the union of in- and out-neighbors;
/// Katz, PageRank and SimRank follow edge direction.
double heuristic_score(Heuristic h, const DirectedGraph& g, int u, int v,
                       const HeuristicParams& params = {});

inline constexpr double kLiftEpsilon = 1e-9;

/// score_after / max(score_before, epsilon). Both graphs must contain u
/// and v; after may have more nodes.
double heuristic_lift(Heuristic h, const DirectedGraph& before,
                      const DirectedGraph& after, int u, int v,
                      const HeuristicParams& params = {});

/// Personalized PageRank vector rooted at u (sums to 1). Exposed for the
/// sum-to-one property and reuse in tests.
std::vector<double> personalized_pagerank(const DirectedGraph& g, int u,
                                          const HeuristicParams& params = {});

}  // namespace savage
