#include "savage/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

namespace savage {

DirectedGraph DirectedGraph::make(Matrix adjacency, Matrix features) {
    if (adjacency.rows != adjacency.cols)
        throw DimensionError("DirectedGraph: adjacency must be square");
    if (features.rows != adjacency.rows)
        throw DimensionError("DirectedGraph: one feature row per node required");
    for (int i = 0; i < adjacency.rows; ++i) {
        for (int j = 0; j < adjacency.cols; ++j) {
            const double v = adjacency.at(i, j);
            if (v != 0.0 && v != 1.0)
                throw ContractError("DirectedGraph: adjacency entries must be 0 or 1");
        }
        if (adjacency.at(i, i) != 0.0)
            throw ContractError("DirectedGraph: self-loops are not allowed");
    }
    DirectedGraph g;
    g.n = adjacency.rows;
    g.adjacency = std::move(adjacency);
    g.features = std::move(features);
    return g;
}

int DirectedGraph::num_edges() const {
    int m = 0;
    for (double v : adjacency.data) m += v != 0.0;
    return m;
}

std::vector<std::pair<int, int>> DirectedGraph::edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (adjacency.at(i, j) != 0.0) out.emplace_back(i, j);
    return out;
}

int DirectedGraph::out_degree(int u) const {
    int d = 0;
    for (int j = 0; j < n; ++j) d += adjacency.at(u, j) != 0.0;
    return d;
}

int DirectedGraph::in_degree(int u) const {
    int d = 0;
    for (int i = 0; i < n; ++i) d += adjacency.at(i, u) != 0.0;
    return d;
}

FeatureMode feature_mode_from_name(const std::string& name) {
    if (name == "existent") return FeatureMode::existent;
    if (name == "random") return FeatureMode::random;
    if (name == "ones") return FeatureMode::ones;
    if (name == "zeros") return FeatureMode::zeros;
    if (name == "mean") return FeatureMode::mean;
    if (name == "median") return FeatureMode::median;
    throw ContractError("unknown feature mode: " + name);
}

std::string feature_mode_name(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::existent: return "existent";
        case FeatureMode::random: return "random";
        case FeatureMode::ones: return "ones";
        case FeatureMode::zeros: return "zeros";
        case FeatureMode::mean: return "mean";
        case FeatureMode::median: return "median";
    }
    throw ContractError("unknown feature mode");
}

bool AugmentedGraph::is_controlled(int id) const {
    return std::binary_search(controlled.begin(), controlled.end(), id);
}

namespace {

double column_median(const Matrix& x, int col) {
    std::vector<double> v(x.rows);
    for (int i = 0; i < x.rows; ++i) v[i] = x.at(i, col);
    std::sort(v.begin(), v.end());
    const int n = x.rows;
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix vicious_features(const DirectedGraph& g, int n_vicious, FeatureMode mode,
                        double noise_scale, Rng& rng) {
    const int k = g.features.cols;
    Matrix rows(n_vicious, k);
    switch (mode) {
        case FeatureMode::existent:
            for (int v = 0; v < n_vicious; ++v) {
                const int src = rng.uniform_int(g.n);
                for (int j = 0; j < k; ++j) rows.at(v, j) = g.features.at(src, j);
            }
            break;
        case FeatureMode::random:
            for (double& x : rows.data) x = rng.uniform();
            break;
        case FeatureMode::ones:
            std::fill(rows.data.begin(), rows.data.end(), 1.0);
            break;
        case FeatureMode::zeros:
            break;
        case FeatureMode::mean:
            for (int j = 0; j < k; ++j) {
                double s = 0.0;
                for (int i = 0; i < g.n; ++i) s += g.features.at(i, j);
                const double m = g.n > 0 ? s / g.n : 0.0;
                for (int v = 0; v < n_vicious; ++v) rows.at(v, j) = m;
            }
            break;
        case FeatureMode::median:
            for (int j = 0; j < k; ++j) {
                const double m = column_median(g.features, j);
                for (int v = 0; v < n_vicious; ++v) rows.at(v, j) = m;
            }
            break;
    }
    if (noise_scale > 0.0)
        for (double& x : rows.data) x += rng.uniform(0.0, noise_scale);
    return rows;
}

}  // namespace

AugmentedGraph augment(const DirectedGraph& g, int n_vicious, FeatureMode feature_mode,
                       double noise_scale, uint64_t seed) {
    if (n_vicious < 0) throw ContractError("augment: n_vicious must be >= 0");
    if ((feature_mode == FeatureMode::existent || feature_mode == FeatureMode::mean ||
         feature_mode == FeatureMode::median) &&
        g.n == 0 && n_vicious > 0)
        throw ContractError("augment: feature mode needs at least one original node");

    AugmentedGraph aug;
    aug.base = g;
    aug.n_vicious = n_vicious;
    const int np = g.n + n_vicious;
    aug.adjacency_prime = Matrix::zeros(np, np);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) aug.adjacency_prime.at(i, j) = g.adjacency.at(i, j);

    Rng rng(seed);
    Matrix vrows = vicious_features(g, n_vicious, feature_mode, noise_scale, rng);
    aug.features_prime = Matrix(np, g.features.cols);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.features.cols; ++j)
            aug.features_prime.at(i, j) = g.features.at(i, j);
    for (int v = 0; v < n_vicious; ++v)
        for (int j = 0; j < g.features.cols; ++j)
            aug.features_prime.at(g.n + v, j) = vrows.at(v, j);

    aug.controlled.resize(n_vicious);
    for (int v = 0; v < n_vicious; ++v) aug.controlled[v] = g.n + v;
    return aug;
}

AugmentedGraph with_pair(const AugmentedGraph& aug, int source, int target) {
    if (source < 0 || source >= aug.base.n)
        throw ContractError("with_pair: source must be an original node");
    if (target < 0 || target >= aug.base.n)
        throw ContractError("with_pair: target must be an original node");
    if (source == target) throw ContractError("with_pair: source equals target");
    AugmentedGraph out = aug;
    out.source = source;
    out.target = target;
    out.controlled.clear();
    out.controlled.push_back(source);
    for (int v = 0; v < aug.n_vicious; ++v) out.controlled.push_back(aug.base.n + v);
    std::sort(out.controlled.begin(), out.controlled.end());
    return out;
}

std::vector<int> l_hop_neighborhood(const Matrix& adjacency, int u, int l) {
    const int n = adjacency.rows;
    if (u < 0 || u >= n) throw ContractError("l_hop_neighborhood: invalid node id");
    if (l < 1) throw ContractError("l_hop_neighborhood: l must be >= 1");
    std::vector<bool> reached(n, false);
    std::deque<std::pair<int, int>> frontier{{u, 0}};
    std::vector<bool> expanded(n, false);
    while (!frontier.empty()) {
        auto [v, depth] = frontier.front();
        frontier.pop_front();
        if (depth == l || expanded[v]) continue;
        expanded[v] = true;
        for (int j = 0; j < n; ++j) {
            if (adjacency.at(v, j) == 0.0) continue;
            if (!reached[j]) {
                reached[j] = true;
                frontier.emplace_back(j, depth + 1);
            }
        }
    }
    std::vector<int> out;
    for (int j = 0; j < n; ++j)
        if (reached[j]) out.push_back(j);
    return out;
}

std::vector<int> l_hop_neighborhood(const DirectedGraph& g, int u, int l) {
    return l_hop_neighborhood(g.adjacency, u, l);
}

DegreeDistribution degree_distribution(const std::vector<int>& degrees,
                                       const std::vector<int>& support,
                                       double smoothing) {
    DegreeDistribution dist;
    dist.support = support;
    dist.probs.assign(support.size(), 0.0);
    std::map<int, int> counts;
    for (int d : degrees) counts[d] += 1;
    double total = static_cast<double>(degrees.size()) +
                   smoothing * static_cast<double>(support.size());
    for (size_t b = 0; b < support.size(); ++b) {
        const auto it = counts.find(support[b]);
        const double c = it == counts.end() ? 0.0 : static_cast<double>(it->second);
        dist.probs[b] = (c + smoothing) / total;
    }
    return dist;
}

double kl_shift(const DirectedGraph& before, const Matrix& after_adjacency) {
    if (after_adjacency.rows != after_adjacency.cols)
        throw DimensionError("kl_shift: after adjacency must be square");
    if (after_adjacency.rows < before.n)
        throw ContractError("kl_shift: after graph has fewer nodes than before");

    std::vector<int> deg_before(before.n);
    for (int u = 0; u < before.n; ++u) deg_before[u] = before.total_degree(u);

    const int np = after_adjacency.rows;
    std::vector<int> deg_after;
    deg_after.reserve(np);
    for (int u = 0; u < np; ++u) {
        int d = 0;
        for (int j = 0; j < np; ++j) {
            d += after_adjacency.at(u, j) != 0.0;
            d += after_adjacency.at(j, u) != 0.0;
        }
        // vicious nodes that never got connected do not exist in the
        // deployed graph
        if (u >= before.n && d == 0) continue;
        deg_after.push_back(d);
    }

    std::vector<int> support;
    for (int d : deg_before) support.push_back(d);
    for (int d : deg_after) support.push_back(d);
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());

    const DegreeDistribution p = degree_distribution(deg_before, support);
    const DegreeDistribution q = degree_distribution(deg_after, support);
    double kl = 0.0;
    for (size_t b = 0; b < support.size(); ++b)
        kl += p.probs[b] * std::log(p.probs[b] / q.probs[b]);
    return std::max(kl, 0.0);
}

// -- file formats ------------------------------------------------------------

void save_edge_list(const Matrix& adjacency, const std::string& path) {
    if (adjacency.rows != adjacency.cols)
        throw DimensionError("save_edge_list: adjacency must be square");
    std::ofstream out(path);
    if (!out) throw ContractError("save_edge_list: cannot open " + path);
    out << "# nodes " << adjacency.rows << "\n";
    for (int i = 0; i < adjacency.rows; ++i)
        for (int j = 0; j < adjacency.cols; ++j)
            if (adjacency.at(i, j) != 0.0) out << i << '\t' << j << '\n';
}

Matrix load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("load_edge_list: cannot open " + path);
    std::vector<std::pair<int, int>> edges;
    int n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string word;
            long declared = -1;
            if (meta >> word >> declared && word == "nodes" && declared > 0)
                n = std::max(n, static_cast<int>(declared));
            continue;
        }
        std::istringstream row(line);
        long src = -1, dst = -1;
        if (!(row >> src >> dst) || src < 0 || dst < 0)
            throw ContractError("load_edge_list: malformed line: " + line);
        edges.emplace_back(static_cast<int>(src), static_cast<int>(dst));
        n = std::max(n, static_cast<int>(std::max(src, dst)) + 1);
    }
    Matrix adj = Matrix::zeros(n, n);
    for (auto [s, d] : edges) {
        if (s == d) throw ContractError("load_edge_list: self-loop in input");
        adj.at(s, d) = 1.0;
    }
    return adj;
}

void save_features_csv(const Matrix& features, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ContractError("save_features_csv: cannot open " + path);
    char buf[64];
    for (int i = 0; i < features.rows; ++i) {
        for (int j = 0; j < features.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", features.at(i, j));
            out << (j ? "," : "") << buf;
        }
        out << '\n';
    }
}

Matrix load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("load_features_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (first && !numeric) {  // optional header
            first = false;
            continue;
        }
        first = false;
        if (!numeric) throw ContractError("load_features_csv: non-numeric row: " + line);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Matrix();
    Matrix out(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
            throw ContractError("load_features_csv: ragged rows");
        for (size_t j = 0; j < rows[i].size(); ++j)
            out.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    }
    return out;
}

}  // namespace savage
