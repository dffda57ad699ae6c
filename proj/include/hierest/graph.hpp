#pragma once

#include <hierest/common.hpp>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace hierest::graph
{

/// Numerical threshold below which the second Laplacian eigenvalue is treated as zero.
inline constexpr double kConnectivityThreshold = 1e-10;

struct Edge
{
    int i;
    int j; // i < j
};

/// Connected, undirected, unweighted communication graph with its Laplacian spectrum.
/// Immutable after construction.
class Topology
{
public:
    static Topology from_adjacency(const Eigen::MatrixXi& adjacency);
    static Topology from_edges(int n_agents, std::span<const std::pair<int, int>> edges);

    int n_agents() const { return static_cast<int>(m_adjacency.rows()); }
    const Eigen::MatrixXi& adjacency() const { return m_adjacency; }
    const Eigen::MatrixXd& laplacian() const { return m_laplacian; }

    /// Algebraic connectivity (second-smallest Laplacian eigenvalue).
    double lambda2() const { return m_lambda2; }
    double lambda_max() const { return m_lambdaMax; }
    int max_degree() const;

    const std::vector<Edge>& edges() const { return m_edges; }
    const std::vector<int>& neighbors(int agent) const { return m_neighbors.at(agent); }

private:
    Topology() = default;

    Eigen::MatrixXi m_adjacency;
    Eigen::MatrixXd m_laplacian;
    double m_lambda2{0.0};
    double m_lambdaMax{0.0};
    std::vector<Edge> m_edges;
    std::vector<std::vector<int>> m_neighbors;
};

Topology build_topology(const Eigen::MatrixXi& adjacency);

/// 2(1 - cos(pi/N)): algebraic connectivity of the N-node path, the smallest over all
/// connected N-node graphs. Usable as a conservative stand-in when the graph is unknown.
double line_graph_connectivity_floor(int n_agents);

Topology path_graph(int n_agents);
Topology ring_graph(int n_agents);
Topology complete_graph(int n_agents);

/// Random spanning tree plus each remaining pair independently with probability edge_prob.
Topology random_connected_graph(int n_agents, double edge_prob, std::uint64_t seed);

/// Index of the unordered pair {i, j} among all N(N-1)/2 pairs.
int pair_index(int i, int j, int n_agents);

struct Segment
{
    double start;
    int topology;
};

/// Piecewise-constant, right-continuous topology selector sigma(t).
class SwitchingSchedule
{
public:
    SwitchingSchedule(std::vector<Topology> topologies, std::vector<Segment> segments, double dwell_min);

    /// Cycles through the topologies every `period` seconds until `horizon`.
    static SwitchingSchedule cyclic(std::vector<Topology> topologies, double period, double horizon);
    static SwitchingSchedule constant(Topology topology);

    int active_topology(double t) const;
    const Topology& topology(int index) const { return m_topologies.at(index); }
    const std::vector<Topology>& topologies() const { return m_topologies; }
    const std::vector<Segment>& segments() const { return m_segments; }
    double dwell_min() const { return m_dwellMin; }
    int n_agents() const { return m_topologies.front().n_agents(); }

    /// min over the family of the algebraic connectivity.
    double lambda_g_min() const;
    /// max over the family of the largest Laplacian eigenvalue.
    double lambda_max_max() const;

private:
    std::vector<Topology> m_topologies;
    std::vector<Segment> m_segments;
    double m_dwellMin;
};

} // namespace hierest::graph
