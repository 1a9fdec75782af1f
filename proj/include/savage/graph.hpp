#pragma once

#include <string>
#include <vector>

#include "savage/common.hpp"

namespace savage {

/// Directed graph over dense storage: binary adjacency (a[i][j] = 1 iff
/// edge i->j, zero diagonal, no symmetry assumed) plus an n x k feature
/// matrix. Immutable after construction; share freely across threads.
struct DirectedGraph {
    int n = 0;
    Matrix adjacency;
    Matrix features;

    static DirectedGraph make(Matrix adjacency, Matrix features);

    int num_edges() const;
    std::vector<std::pair<int, int>> edges() const;
    int out_degree(int u) const;
    int in_degree(int u) const;
    int total_degree(int u) const { return out_degree(u) + in_degree(u); }
};

/// How vicious-node feature rows are synthesized.
enum class FeatureMode { existent, random, ones, zeros, mean, median };

FeatureMode feature_mode_from_name(const std::string& name);
std::string feature_mode_name(FeatureMode mode);

/// The base graph extended with isolated vicious nodes appended after the
/// original ids. source/controlled/target are unset until with_pair().
struct AugmentedGraph {
    DirectedGraph base;
    int n_vicious = 0;
    Matrix adjacency_prime;   // n' x n', n' = base.n + n_vicious
    Matrix features_prime;    // n' x k
    std::vector<int> controlled;  // sorted; {source} + all vicious ids
    int source = -1;
    int target = -1;

    int n_prime() const { return base.n + n_vicious; }
    bool is_vicious(int id) const { return id >= base.n; }
    bool is_controlled(int id) const;
};

/// Embeds g into a larger adjacency with n_vicious isolated nodes whose
/// feature rows follow feature_mode plus uniform noise in [0, noise_scale).
AugmentedGraph augment(const DirectedGraph& g, int n_vicious, FeatureMode feature_mode,
                       double noise_scale, uint64_t seed);

/// Binds an attack pair to an augmented graph: source becomes controlled
/// (together with every vicious node), target must be an original,
/// uncontrolled node.
AugmentedGraph with_pair(const AugmentedGraph& aug, int source, int target);

/// Nodes reachable from u following out-edges in at most l hops. u itself
/// is included only when a cycle returns to it.
std::vector<int> l_hop_neighborhood(const DirectedGraph& g, int u, int l);
std::vector<int> l_hop_neighborhood(const Matrix& adjacency, int u, int l);

/// Smoothed probability histogram over total degree (in + out).
struct DegreeDistribution {
    std::vector<int> support;   // sorted distinct degree values
    std::vector<double> probs;  // same length; sums to 1
};

DegreeDistribution degree_distribution(const std::vector<int>& degrees,
                                       const std::vector<int>& support,
                                       double smoothing = 1e-6);

/// KL(before || after) between smoothed total-degree histograms on their
/// shared support. after may contain extra (vicious) nodes; vicious nodes
/// that stayed isolated are excluded from the after histogram.
double kl_shift(const DirectedGraph& before, const Matrix& after_adjacency);

// -- file formats ------------------------------------------------------------

/// One edge per line, "src<TAB>dst", zero-based ids, '#' comments. The
/// writer emits a "# nodes <n>" comment so isolated trailing nodes survive
/// a round trip; the reader honors it when present.
void save_edge_list(const Matrix& adjacency, const std::string& path);
Matrix load_edge_list(const std::string& path);

/// Row i of the CSV holds the features of node i. A non-numeric first line
/// is treated as a header and skipped.
void save_features_csv(const Matrix& features, const std::string& path);
Matrix load_features_csv(const std::string& path);

}  // namespace savage
